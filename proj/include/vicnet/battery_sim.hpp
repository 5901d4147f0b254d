#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vicnet/ica.hpp"
#include "vicnet/preprocess.hpp"
#include "vicnet/rng.hpp"

namespace vicnet {

// One additive logistic component of the SOC(V) shape. Each component puts a
// peak of height ~ amplitude/(4 width) into dSOC/dV at its center voltage,
// i.e. directly into the IC curve.
struct OcvComponent {
    double amplitude = 0.0; // dimensionless SOC weight
    double center_v = 0.0;
    double width_v = 1.0;
};

// Monotone OCV model defined through its inverse:
//   raw(V) = slope * (V - v_soc0) + sum_j A_j * logistic((V - v_j) / w_j)
//   SOC(V) = (raw(V) - raw(v_soc0)) / (raw(v_soc1) - raw(v_soc0))
// OCV(soc) is recovered by monotone Newton iteration; all derivatives are
// analytic, which is what makes the ground-truth IC curves exact.
struct OcvShape {
    double v_soc0 = 3.00; // voltage at SOC 0
    double v_soc1 = 4.15; // voltage at SOC 1
    double slope = 0.22;  // baseline dSOC/dV weight, > 0
    std::vector<OcvComponent> components = {
        {0.30, 3.50, 0.020}, // first IC peak, ~16% SOC
        {0.28, 3.62, 0.030}, // second IC peak, ~36% SOC
        {0.80, 3.95, 0.085}, // high-SOC plateau outside the output range
    };
};

// Degradable equivalent-circuit module: capacity scale (dominant), small peak
// drift, and internal-resistance growth.
struct ModuleModel {
    double c_fresh_ah = 208.0;
    double soh = 1.0;
    OcvShape ocv_shape;
    double peak_shift_v = 0.04;  // center shift per unit (1 - soh)
    double r0_ohm = 4.0e-4;      // fresh internal resistance
    double r_growth = 1.0;       // R = r0 * (1 + r_growth * (1 - soh))
    double v_max = 4.35;

    double capacity_ah() const { return soh * c_fresh_ah; }
    double r_internal() const { return r0_ohm * (1.0 + r_growth * (1.0 - soh)); }

    double soc_of_v(double v) const;    // SOC(V), strictly increasing
    double dsoc_dv(double v) const;     // analytic derivative
    double ocv(double soc) const;       // inverse of soc_of_v
    double terminal_v(double soc, double current_a) const { return ocv(soc) + current_a * r_internal(); }
};

struct ProtocolStage {
    double c_rate = 0.0;    // current = c_rate * c_fresh (protocols reference nominal capacity)
    double until_soc = 1.0; // stage active while SOC < until_soc
};

struct Protocol {
    std::string id;
    std::vector<ProtocolStage> stages;

    double current_at(double soc, double c_fresh_ah) const;
    void validate() const;
};

Protocol ref_cc_protocol();                         // single CC stage at 0.4C
std::vector<Protocol> standard_fast_protocols();    // fast_a (4-stage), fast_b (6-stage), fast_c (2-stage)
std::vector<Protocol> alternate_fast_protocols();   // unseen protocols for transfer experiments

struct SimNoise {
    double sigma_i_a = 0.0;
    double sigma_v_v = 0.0;
};

// Euler integration of dSOC/dt = I / (3600 C) sampled at dt (1 Hz default);
// optional additive Gaussian sensor noise on the recorded channels. The
// returned profile carries true SOC labels in its metadata fields.
ChargingProfile simulate_charge(const ModuleModel& model, const Protocol& protocol, double soc_start,
                                double soc_end, double dt_s, const SimNoise& noise, Rng& rng);

// Ground-truth IC triple from the closed form, on the same grid convention as
// ic_from_cc: IC(k) = C * dSOC/dV at OCV(soc_k), voltage offset by I_ref * R.
CurveTriple analytic_ic(const ModuleModel& model, double ref_current_a, const OutputGridConfig& grid);

// Uniform sampling of (soc_initial, soc_final) on the constrained triangle
// {low <= s_i < s_f <= high, s_f - s_i >= min_span} by rescaling a
// Dirichlet(1,1,1) draw over (left margin, excess span, right margin).
struct TruncationSampler {
    double soc_low = 0.13;
    double soc_high = 0.91;
    double min_span = 0.20;
};

std::pair<double, double> sample_truncation(const TruncationSampler& sampler, Rng& rng);

// Slice a simulated profile to the rows whose true SOC lies in [s_i, s_f];
// time is re-zeroed. Requires the soc grid recorded during simulation.
struct SimulatedRun {
    ChargingProfile profile;
    std::vector<double> soc; // true SOC per sample (label side only)
};

SimulatedRun simulate_run(const ModuleModel& model, const Protocol& protocol, double soc_start, double soc_end,
                          double dt_s, const SimNoise& noise, Rng& rng);

ChargingProfile truncate_run(const SimulatedRun& run, double soc_initial, double soc_final);

// module-level split: every sample of a module lands in exactly one split
std::vector<std::string> split_modules(int n_modules, double train_frac, double val_frac, double test_frac, Rng rng);

} // namespace vicnet

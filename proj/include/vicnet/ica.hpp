#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vicnet/nn/checkpoint.hpp" // NormMap
#include "vicnet/preprocess.hpp"

namespace vicnet {

// Aligned (Q_CC, V_CC, IC) curves over the fixed output SOC range. Charge is
// measured from the range start, so q_ah spans 0 .. (soc span * capacity).
struct CurveTriple {
    std::vector<double> q_ah;
    std::vector<double> v_v;
    std::vector<double> ic_ah_per_v;
    double soc_initial = 0.05;
    double soc_final = 0.56;

    std::size_t size() const { return q_ah.size(); }
    void validate() const; // ground-truth invariants: lengths, even q spacing, v nondecreasing, ic > 0
};

struct IcFeatures {
    double ic_ph = 0.0;        // peak height, Ah/V
    double ic_pa1 = 0.0;       // area within a symmetric voltage window around the peak, Ah
    double ic_pa2 = 0.0;       // area above a horizontal cutoff, Ah
    double peak_voltage = 0.0; // V
};

struct SmoothingConfig {
    int cv_folds = 5;
    std::optional<double> fixed_lambda; // bypass cross-validation when set
};

struct OutputGridConfig {
    int n_points = 128;
    double soc_initial = 0.05; // fixed output SOC range, identical for all samples
    double soc_final = 0.56;
    double profile_soc_start = 0.0; // SOC at the CC profile's first sample (label-side knowledge)
    double capacity_ah = 208.0;     // current (aged) capacity
};

// Fit a smoothing spline to V(dQ) of a constant-current charge, differentiate
// analytically, and resample IC = dQ/dV onto the even output grid.
CurveTriple ic_from_cc(const ChargeDomainProfile& cc, const SmoothingConfig& smoothing, const OutputGridConfig& grid);

// DV(k) = 1 / IC(k), aligned to q_ah.
std::vector<double> dv_from_ic(const CurveTriple& curve);

struct FeatureConfig {
    double pa1_halfwidth_v = 0.05;
    double pa2_cutoff = 0.0;
    double window_v_lo = 0.0; // peak search window; defaults to the whole curve
    double window_v_hi = 1e9;
};

IcFeatures extract_features(const CurveTriple& curve, const FeatureConfig& cfg);

// Construction-error metric: mean over k of the squared Euclidean norm of the
// standardized 3-channel residual (IC, V_CC, Q_CC).
double curve_error(const CurveTriple& pred, const CurveTriple& truth, const nn::NormMap& norm);

// CSV with header q_ah,v_v,ic_ah_per_v.
void write_curve_csv(const CurveTriple& curve, const std::string& path);
CurveTriple read_curve_csv(const std::string& path);

} // namespace vicnet

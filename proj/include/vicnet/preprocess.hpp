#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vicnet/errors.hpp"
#include "vicnet/nn/checkpoint.hpp" // NormEntry / NormMap

namespace vicnet {

// Raw time-indexed record of one charging event. Current is charging-positive.
struct ChargingProfile {
    std::vector<double> t_s;
    std::vector<double> current_a;
    std::vector<double> voltage_v;
    std::string protocol;
    std::optional<double> soc_initial; // labels only, never used by the pipeline
    std::optional<double> soc_final;

    void validate() const; // throws DataError on broken invariants
};

// The same event re-indexed by transferred charge.
struct ChargeDomainProfile {
    std::vector<double> dq_ah; // strictly increasing from 0 to total_charge_ah
    std::vector<double> current_a;
    std::vector<double> voltage_v;
    double total_charge_ah = 0.0;
};

// Fixed-length standardized two-channel network input.
struct PreprocessedInput {
    std::vector<double> current; // length n_nn, standardized
    std::vector<double> voltage;
    int n_point = 0;     // samples before padding
    double delta_q = 0.0;
};

// step 0: coulomb counting by trapezoidal integration of I over t
ChargeDomainProfile coulomb_count(const ChargingProfile& p);

// delta_q = (max_soc_span * c_fresh) / n_nn, computed once at calibration
double compute_increment(double max_soc_span, double c_fresh_ah, int n_nn);

struct Downsampled {
    std::vector<double> current_a;
    std::vector<double> voltage_v;
};

// step 1: sample at 0, dq, 2dq, ... by linear interpolation on the charge grid;
// the sub-increment residual is dropped
Downsampled downsample(const ChargeDomainProfile& q, double delta_q);

// step 2: one-sided symmetric padding, [a,b,c] -> [a,b,c,c,b,a,a,b]
std::vector<double> pad_symmetric(const std::vector<double>& x, int n_nn);

// pooled mean / population std over all points of all training sequences
nn::NormEntry fit_norm_stats(const std::vector<std::vector<double>>& training_sequences);

// step 3 and its inverse
std::vector<double> standardize(const std::vector<double>& x, const nn::NormEntry& stats);
std::vector<double> destandardize(const std::vector<double>& x, const nn::NormEntry& stats);

// SOC-window constraint surrogate: the event qualifies when its transferred
// charge could cover min_span at the worst-case (floor) SOH
bool check_window(double total_charge_ah, double soc_min_span, double c_fresh_ah, double soh_floor = 0.8);

struct PreprocessConfig {
    int n_nn = 128;
    double max_soc_span = 0.78;
    double min_soc_span = 0.20;
    double c_fresh_ah = 208.0;
    double soh_floor = 0.8;

    double delta_q() const { return compute_increment(max_soc_span, c_fresh_ah, n_nn); }
};

// full Algorithm-1/2 input chain: coulomb count, downsample, pad, standardize
PreprocessedInput preprocess_profile(const ChargingProfile& p, const PreprocessConfig& cfg,
                                     const nn::NormEntry& i_stats, const nn::NormEntry& v_stats);

// CSV with header t_s,current_a,voltage_v; metadata sidecar is handled by dataset.cpp
ChargingProfile read_profile_csv(const std::string& path);
void write_profile_csv(const ChargingProfile& p, const std::string& path);

} // namespace vicnet

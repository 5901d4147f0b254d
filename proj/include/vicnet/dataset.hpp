#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vicnet/battery_sim.hpp"
#include "vicnet/ica.hpp"
#include "vicnet/nn/train.hpp"
#include "vicnet/preprocess.hpp"

namespace vicnet {

struct DatagenConfig {
    int n_modules = 48;
    double soh_min = 0.80;
    double soh_max = 1.00;
    double soh_step = 0.01;
    int n_truncate = 10;
    TruncationSampler trunc; // SOC window [0.13, 0.91], min span 0.20
    double c_fresh_ah = 208.0;
    double ref_c_rate = 0.4;
    double ref_soc_start = 0.02;
    double ref_soc_end = 0.98;
    double dt_s = 1.0;
    SimNoise input_noise{0.05, 5e-4}; // sensor noise on fast-charging inputs only
    double ocv_jitter_frac = 0.02;    // cell-to-cell variation of component amplitudes
    std::string protocol_set = "standard"; // "standard" | "alternate"
    OcvShape base_ocv;
    int n_nn = 128;
    double out_soc_initial = 0.05;
    double out_soc_final = 0.56;
    double train_frac = 0.6, val_frac = 0.2, test_frac = 0.2;
    double pa1_halfwidth_v = 0.05;
    double pa2_cutoff_frac = 0.6; // of the fresh nominal peak height
    std::uint64_t seed = 42;

    PreprocessConfig preprocess() const {
        PreprocessConfig p;
        p.n_nn = n_nn;
        p.max_soc_span = trunc.soc_high - trunc.soc_low;
        p.min_soc_span = trunc.min_span;
        p.c_fresh_ah = c_fresh_ah;
        return p;
    }
};

nlohmann::json datagen_config_to_json(const DatagenConfig& cfg);
DatagenConfig datagen_config_from_json(const nlohmann::json& j);

struct SampleMeta {
    std::string id;
    int module_index = 0;
    std::string protocol;
    double soh = 1.0;
    double soc_initial = 0.0; // actual bounds of the truncated slice
    double soc_final = 0.0;
    std::string split;
    std::string profile_file; // dataset-relative
    std::string truth_file;
};

struct DatasetIndex {
    std::string dir;
    nlohmann::json manifest;
    DatagenConfig config;
    std::vector<SampleMeta> samples;
    double pa2_cutoff_abs = 0.0; // fixed at generation from the fresh nominal curve

    FeatureConfig feature_config() const {
        return {config.pa1_halfwidth_v, pa2_cutoff_abs, 0.0, 1e9};
    }
};

// Simulate, truncate and write a full labeled dataset:
//   profiles/<sample>.csv + .json sidecar, profiles_full/<module>_<protocol>.csv,
//   truth/<module>.csv, labels.jsonl, manifest.json
DatasetIndex generate_dataset(const DatagenConfig& cfg, const std::string& out_dir);

DatasetIndex load_dataset(const std::string& dir);

// Preprocessed tensors for curve training: x standardized inputs (2 x n_nn),
// y standardized truth triples (3 x n_nn); norm stats fitted on the training
// split only.
struct CurveDataset {
    nn::NormMap norm;
    nn::TensorDataset train, val, test;
    std::vector<SampleMeta> train_meta, val_meta, test_meta;
};

CurveDataset assemble_curve_dataset(const DatasetIndex& idx);

// swap targets for scalar SOH regression (labels are not standardized)
nn::TensorDataset with_soh_targets(const nn::TensorDataset& base, const std::vector<SampleMeta>& meta);

// ground-truth curve of one sample's module, in physical units
CurveTriple load_truth_curve(const DatasetIndex& idx, const SampleMeta& meta);
ChargingProfile load_sample_profile(const DatasetIndex& idx, const SampleMeta& meta);

std::uint64_t fnv64_file(const std::string& path);
std::uint64_t fnv64_bytes(const void* data, std::size_t size);

} // namespace vicnet

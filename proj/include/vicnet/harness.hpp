#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "vicnet/dataset.hpp"
#include "vicnet/soh.hpp"

namespace vicnet::cli {

// Every command writes a manifest.json (resolved config + input hashes) into
// its output directory; re-running a command from that manifest reproduces the
// artifacts byte-for-byte.

struct TrainOptions {
    std::string data_dir;
    std::string preset = "unet"; // unet | mobile-unet | conv-net | mobile-net | feature-regressor | feature-net
    std::string from_checkpoint; // transfer presets read the trained curve model from here
    std::string out_dir = ".";
    int batch_size = 64;
    int patience = 30;
    int max_epochs = 200;
    double step_size = 1e-3;
    double ridge = 1e-4;
    std::uint64_t seed = 42;
    bool verbose = false;
};
nlohmann::json train_options_to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const nlohmann::json& j);

struct ConstructOptions {
    std::string checkpoint;
    std::string profile;
    std::string truth; // optional: enables the construction-error report
    std::string out_dir = ".";
};

struct EstimateOptions {
    std::string route = "direct"; // features | direct
    std::string checkpoint;
    std::string regressor; // features route only
    std::string profile;
    std::string out_file = "soh.json";
};

struct EvalOptions {
    std::string route = "curves"; // curves | features | direct
    std::string data_dir;
    std::string checkpoint;
    std::string regressor;
    std::string out_dir = ".";
    std::string fixed_range; // "" (random test windows) or "lo:hi" in SOC fractions
};

struct FinetuneOptions {
    std::string checkpoint;
    std::string data_dir; // the new dataset
    std::string out_dir = ".";
    std::string layers = "preset"; // preset | all | comma-separated layer names
    int batch_size = 64;
    int patience = 10;
    int max_epochs = 60;
    double step_size = 1e-3;
    std::uint64_t seed = 43;
    bool verbose = false;
};

int cmd_datagen(const DatagenConfig& cfg, const std::string& out_dir);
int cmd_train(const TrainOptions& opt);
int cmd_construct(const ConstructOptions& opt);
int cmd_estimate(const EstimateOptions& opt);
int cmd_eval(const EvalOptions& opt);
int cmd_flops(const std::string& preset = ""); // "" prints all four rows
int cmd_finetune(const FinetuneOptions& opt);

// shared helpers (also used by the acceptance suite)
PreprocessConfig preprocess_from_checkpoint(const nn::Checkpoint& ckpt);
PreprocessedInput preprocess_with_checkpoint(const ChargingProfile& p, const nn::Checkpoint& ckpt);

// mean construction error of a curve checkpoint over samples, with predictions
// destandardized by the checkpoint's own stats and the metric computed under
// metric_norm (the evaluation dataset's standardization)
struct CurveEvalResult {
    std::vector<double> errors; // per sample, eq-style metric
    double mean = 0.0;
};
CurveEvalResult evaluate_curve_checkpoint(const nn::Checkpoint& ckpt, nn::ParamStore& params,
                                          const DatasetIndex& idx, const std::vector<SampleMeta>& samples,
                                          const nn::NormMap& metric_norm);

void write_run_manifest(const std::string& out_dir, const std::string& command, const nlohmann::json& config,
                        const std::map<std::string, std::string>& input_files);

} // namespace vicnet::cli

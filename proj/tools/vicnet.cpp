// vicnet: build virtual IC/DV curves and SOH estimates from dynamic charging
// profiles, plus the synthetic data generator and evaluation harness.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vicnet/harness.hpp"

namespace {

// accepts either a bare config object or a run manifest (uses its "config")
nlohmann::json load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw vicnet::ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    is >> j;
    if (j.contains("config")) return j.at("config");
    return j;
}

std::uint64_t env_seed(std::uint64_t fallback) {
    const char* s = std::getenv("VICNET_SEED");
    if (!s || !*s) return fallback;
    return std::strtoull(s, nullptr, 10);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"virtual IC/DV curve construction and SOH estimation from dynamic charging"};
    app.require_subcommand(1);

    // datagen
    auto* datagen = app.add_subcommand("datagen", "generate a synthetic labeled battery-module dataset");
    std::string dg_config, dg_out = "dataset";
    int dg_modules = -1;
    std::int64_t dg_seed = -1;
    std::string dg_protocols;
    datagen->add_option("--config", dg_config, "JSON config (or a previous manifest.json)");
    datagen->add_option("--out", dg_out, "output directory")->required();
    datagen->add_option("--modules", dg_modules, "number of modules");
    datagen->add_option("--seed", dg_seed, "rng seed");
    datagen->add_option("--protocols", dg_protocols, "protocol set: standard | alternate");

    // train
    auto* train = app.add_subcommand("train", "train a model preset on a dataset");
    vicnet::cli::TrainOptions topt;
    std::string t_config;
    train->add_option("--config", t_config, "JSON config (or a previous manifest.json)");
    train->add_option("--data", topt.data_dir, "dataset directory");
    train->add_option("--preset", topt.preset,
                      "unet | mobile-unet | conv-net | mobile-net | feature-regressor | feature-net");
    train->add_option("--from", topt.from_checkpoint, "source curve checkpoint for transfer presets");
    train->add_option("--out", topt.out_dir, "output directory");
    train->add_option("--batch", topt.batch_size, "mini-batch size");
    train->add_option("--patience", topt.patience, "early-stopping patience (epochs)");
    train->add_option("--max-epochs", topt.max_epochs, "epoch cap");
    train->add_option("--step", topt.step_size, "optimizer step size");
    train->add_option("--ridge", topt.ridge, "ridge strength (feature-regressor)");
    std::int64_t t_seed = -1;
    train->add_option("--seed", t_seed, "rng seed");
    train->add_flag("--verbose", topt.verbose, "per-epoch log on stderr");

    // construct
    auto* construct = app.add_subcommand("construct", "construct VIC/VDV curves from one charging profile");
    vicnet::cli::ConstructOptions copt;
    construct->add_option("--checkpoint", copt.checkpoint, "curve model checkpoint")->required();
    construct->add_option("--profile", copt.profile, "charging profile CSV")->required();
    construct->add_option("--truth", copt.truth, "reference curve CSV for the error report");
    construct->add_option("--out", copt.out_dir, "output directory");

    // estimate
    auto* estimate = app.add_subcommand("estimate", "estimate SOH from one charging profile");
    vicnet::cli::EstimateOptions eopt;
    estimate->add_option("--route", eopt.route, "features | direct");
    estimate->add_option("--checkpoint", eopt.checkpoint, "model checkpoint")->required();
    estimate->add_option("--regressor", eopt.regressor, "regressor.json (features route)");
    estimate->add_option("--profile", eopt.profile, "charging profile CSV")->required();
    estimate->add_option("--out", eopt.out_file, "output JSON file");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a model over a dataset's test split");
    vicnet::cli::EvalOptions vopt;
    eval->add_option("--route", vopt.route, "curves | features | direct");
    eval->add_option("--data", vopt.data_dir, "dataset directory")->required();
    eval->add_option("--checkpoint", vopt.checkpoint, "model checkpoint")->required();
    eval->add_option("--regressor", vopt.regressor, "regressor.json (features route)");
    eval->add_option("--out", vopt.out_dir, "output directory");
    eval->add_option("--range", vopt.fixed_range, "fixed SOC range lo:hi instead of the stored test windows");

    // flops
    auto* flops = app.add_subcommand("flops", "parameter and flop accounting for the model presets");
    std::string f_preset;
    flops->add_option("--preset", f_preset, "limit to one preset");

    // finetune
    auto* finetune = app.add_subcommand("finetune", "adapt a trained curve model to a new dataset");
    vicnet::cli::FinetuneOptions fopt;
    finetune->add_option("--checkpoint", fopt.checkpoint, "trained curve checkpoint")->required();
    finetune->add_option("--data", fopt.data_dir, "new dataset directory")->required();
    finetune->add_option("--out", fopt.out_dir, "output directory");
    finetune->add_option("--layers", fopt.layers, "preset | all | comma-separated layer names");
    finetune->add_option("--batch", fopt.batch_size, "mini-batch size");
    finetune->add_option("--patience", fopt.patience, "early-stopping patience");
    finetune->add_option("--max-epochs", fopt.max_epochs, "epoch cap");
    finetune->add_option("--step", fopt.step_size, "optimizer step size");
    std::int64_t ft_seed = -1;
    finetune->add_option("--seed", ft_seed, "rng seed");
    finetune->add_flag("--verbose", fopt.verbose, "per-epoch log on stderr");

    CLI11_PARSE(app, argc, argv);

    try {
        if (datagen->parsed()) {
            vicnet::DatagenConfig cfg;
            if (!dg_config.empty()) cfg = vicnet::datagen_config_from_json(load_config_file(dg_config));
            if (dg_modules > 0) cfg.n_modules = dg_modules;
            if (!dg_protocols.empty()) cfg.protocol_set = dg_protocols;
            cfg.seed = dg_seed >= 0 ? static_cast<std::uint64_t>(dg_seed) : env_seed(cfg.seed);
            return vicnet::cli::cmd_datagen(cfg, dg_out);
        }
        if (train->parsed()) {
            vicnet::cli::TrainOptions opt = topt;
            if (!t_config.empty()) {
                opt = vicnet::cli::train_options_from_json(load_config_file(t_config));
                // explicit flags win over the config file
                for (const auto* o : train->get_options())
                    if (o->count() && o->get_name() == "--data") opt.data_dir = topt.data_dir;
            }
            if (opt.data_dir.empty()) throw vicnet::ConfigError("train: --data (or --config) is required");
            if (t_seed >= 0) opt.seed = static_cast<std::uint64_t>(t_seed);
            else if (t_config.empty()) opt.seed = env_seed(opt.seed);
            return vicnet::cli::cmd_train(opt);
        }
        if (construct->parsed()) return vicnet::cli::cmd_construct(copt);
        if (estimate->parsed()) return vicnet::cli::cmd_estimate(eopt);
        if (eval->parsed()) return vicnet::cli::cmd_eval(vopt);
        if (flops->parsed()) return vicnet::cli::cmd_flops(f_preset);
        if (finetune->parsed()) {
            if (ft_seed >= 0) fopt.seed = static_cast<std::uint64_t>(ft_seed);
            return vicnet::cli::cmd_finetune(fopt);
        }
    } catch (const vicnet::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

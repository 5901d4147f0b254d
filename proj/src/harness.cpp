#include "vicnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "vicnet/models.hpp"
#include "vicnet/nn/network.hpp"

namespace fs = std::filesystem;

namespace vicnet::cli {

namespace {

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write '" + path + "'");
    os << j.dump(2) << "\n";
}

void write_history_csv(const std::string& path, const nn::TrainResult& r) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write '" + path + "'");
    std::fputs("epoch,train_mse,val_mse\n", f);
    for (std::size_t e = 0; e < r.train_loss.size(); ++e)
        std::fprintf(f, "%zu,%.17g,%.17g\n", e + 1, r.train_loss[e], r.val_loss[e]);
    std::fclose(f);
}

// inputs standardized with a given norm (checkpoint stats for transfer work)
struct SplitInputs {
    Tensor3 x;
    std::vector<SampleMeta> meta;
};

SplitInputs assemble_inputs(const DatasetIndex& idx, const std::string& split, const nn::NormMap& norm) {
    PreprocessConfig pcfg = idx.config.preprocess();
    std::vector<const SampleMeta*> picked;
    for (const SampleMeta& s : idx.samples)
        if (split.empty() || s.split == split) picked.push_back(&s);
    if (picked.empty()) throw DataError("dataset has no '" + split + "' samples");

    SplitInputs out;
    out.x = Tensor3(picked.size(), 2, pcfg.n_nn);
    for (std::size_t i = 0; i < picked.size(); ++i) {
        ChargingProfile p = load_sample_profile(idx, *picked[i]);
        PreprocessedInput in = preprocess_profile(p, pcfg, norm.at("i"), norm.at("v"));
        for (int k = 0; k < pcfg.n_nn; ++k) {
            out.x.at(i, 0, k) = in.current[k];
            out.x.at(i, 1, k) = in.voltage[k];
        }
        out.meta.push_back(*picked[i]);
    }
    return out;
}

nn::TrainConfig train_config(int batch, int patience, int max_epochs, double step, std::uint64_t seed, bool verbose) {
    nn::TrainConfig cfg;
    cfg.batch_size = batch;
    cfg.patience = patience;
    cfg.max_epochs = max_epochs;
    cfg.adam.step_size = step;
    cfg.seed = seed;
    cfg.verbose = verbose;
    return cfg;
}

nlohmann::json checkpoint_meta(const DatasetIndex& idx, const std::string& preset) {
    PreprocessConfig pcfg = idx.config.preprocess();
    nlohmann::json meta;
    meta["preset"] = preset;
    meta["n_nn"] = pcfg.n_nn;
    meta["max_soc_span"] = pcfg.max_soc_span;
    meta["min_soc_span"] = pcfg.min_soc_span;
    meta["c_fresh_ah"] = pcfg.c_fresh_ah;
    meta["soh_floor"] = pcfg.soh_floor;
    meta["delta_q_ah"] = pcfg.delta_q();
    meta["out_soc_initial"] = idx.config.out_soc_initial;
    meta["out_soc_final"] = idx.config.out_soc_final;
    meta["pa1_halfwidth_v"] = idx.config.pa1_halfwidth_v;
    meta["pa2_cutoff_abs"] = idx.pa2_cutoff_abs;
    return meta;
}

FeatureConfig feature_config_from_meta(const nn::Checkpoint& ckpt) {
    FeatureConfig fc;
    fc.pa1_halfwidth_v = ckpt.meta.value("pa1_halfwidth_v", 0.05);
    fc.pa2_cutoff = ckpt.meta.value("pa2_cutoff_abs", 0.0);
    return fc;
}

// truth features of one sample's module, for the feature-net target
IcFeatures truth_features(const DatasetIndex& idx, const SampleMeta& meta) {
    CurveTriple truth = load_truth_curve(idx, meta);
    return extract_features(truth, idx.feature_config());
}

std::vector<double> histogram_edges(double lo, double hi, int bins) {
    std::vector<double> e(bins + 1);
    for (int i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * i / bins;
    return e;
}

void write_histogram_csv(const std::string& path, const std::vector<double>& values, int bins) {
    if (values.empty()) throw DataError("histogram of an empty set");
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (hi <= lo) hi = lo + 1e-12;
    std::vector<double> edges = histogram_edges(lo, hi, bins);
    std::vector<int> counts(bins, 0);
    for (double v : values) {
        int b = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
        counts[b] += 1;
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write '" + path + "'");
    std::fputs("bin_lo,bin_hi,count\n", f);
    for (int b = 0; b < bins; ++b) std::fprintf(f, "%.10g,%.10g,%d\n", edges[b], edges[b + 1], counts[b]);
    std::fclose(f);
}

} // namespace

nlohmann::json train_options_to_json(const TrainOptions& o) {
    return {{"data_dir", o.data_dir},       {"preset", o.preset},       {"from_checkpoint", o.from_checkpoint},
            {"out_dir", o.out_dir},         {"batch_size", o.batch_size}, {"patience", o.patience},
            {"max_epochs", o.max_epochs},   {"step_size", o.step_size}, {"ridge", o.ridge},
            {"seed", o.seed},               {"verbose", o.verbose}};
}

TrainOptions train_options_from_json(const nlohmann::json& j) {
    TrainOptions o;
    o.data_dir = j.value("data_dir", o.data_dir);
    o.preset = j.value("preset", o.preset);
    o.from_checkpoint = j.value("from_checkpoint", o.from_checkpoint);
    o.out_dir = j.value("out_dir", o.out_dir);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.patience = j.value("patience", o.patience);
    o.max_epochs = j.value("max_epochs", o.max_epochs);
    o.step_size = j.value("step_size", o.step_size);
    o.ridge = j.value("ridge", o.ridge);
    o.seed = j.value("seed", o.seed);
    o.verbose = j.value("verbose", o.verbose);
    return o;
}

void write_run_manifest(const std::string& out_dir, const std::string& command, const nlohmann::json& config,
                        const std::map<std::string, std::string>& input_files) {
    nlohmann::json m;
    m["format_version"] = 1;
    m["command"] = command;
    m["config"] = config;
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& [label, path] : input_files) hashes[label] = {{"path", path}, {"fnv64", fnv64_file(path)}};
    m["input_hashes"] = std::move(hashes);
    write_json((fs::path(out_dir) / "manifest.json").string(), m);
}

PreprocessConfig preprocess_from_checkpoint(const nn::Checkpoint& ckpt) {
    PreprocessConfig p;
    p.n_nn = ckpt.meta.value("n_nn", 128);
    p.max_soc_span = ckpt.meta.value("max_soc_span", 0.78);
    p.min_soc_span = ckpt.meta.value("min_soc_span", 0.20);
    p.c_fresh_ah = ckpt.meta.value("c_fresh_ah", 208.0);
    p.soh_floor = ckpt.meta.value("soh_floor", 0.8);
    return p;
}

PreprocessedInput preprocess_with_checkpoint(const ChargingProfile& p, const nn::Checkpoint& ckpt) {
    PreprocessConfig pcfg = preprocess_from_checkpoint(ckpt);
    ChargeDomainProfile q = coulomb_count(p);
    if (!check_window(q.total_charge_ah, pcfg.min_soc_span, pcfg.c_fresh_ah, pcfg.soh_floor))
        throw WindowError("profile transfers too little charge for the configured SOC window");
    return preprocess_profile(p, pcfg, ckpt.norm.at("i"), ckpt.norm.at("v"));
}

CurveEvalResult evaluate_curve_checkpoint(const nn::Checkpoint& ckpt, nn::ParamStore& params,
                                          const DatasetIndex& idx, const std::vector<SampleMeta>& samples,
                                          const nn::NormMap& metric_norm) {
    if (samples.empty()) throw DataError("no samples to evaluate");
    PreprocessConfig pcfg = preprocess_from_checkpoint(ckpt);
    Tensor3 x(samples.size(), 2, pcfg.n_nn);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ChargingProfile p = load_sample_profile(idx, samples[i]);
        PreprocessedInput in = preprocess_profile(p, pcfg, ckpt.norm.at("i"), ckpt.norm.at("v"));
        for (int k = 0; k < pcfg.n_nn; ++k) {
            x.at(i, 0, k) = in.current[k];
            x.at(i, 1, k) = in.voltage[k];
        }
    }
    Tensor3 pred = nn::predict(ckpt.graph, params, x);

    const nn::NormEntry& sq = ckpt.norm.at("q_cc");
    const nn::NormEntry& sv = ckpt.norm.at("v_cc");
    const nn::NormEntry& si = ckpt.norm.at("ic");

    CurveEvalResult res;
    res.errors.resize(samples.size());
    std::map<std::string, CurveTriple> truths;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto it = truths.find(samples[i].truth_file);
        if (it == truths.end()) it = truths.emplace(samples[i].truth_file, load_truth_curve(idx, samples[i])).first;
        CurveTriple c;
        c.q_ah.resize(pcfg.n_nn);
        c.v_v.resize(pcfg.n_nn);
        c.ic_ah_per_v.resize(pcfg.n_nn);
        for (int k = 0; k < pcfg.n_nn; ++k) {
            c.q_ah[k] = pred.at(i, 0, k) * sq.stddev + sq.mean;
            c.v_v[k] = pred.at(i, 1, k) * sv.stddev + sv.mean;
            c.ic_ah_per_v[k] = pred.at(i, 2, k) * si.stddev + si.mean;
        }
        res.errors[i] = curve_error(c, it->second, metric_norm);
        res.mean += res.errors[i];
    }
    res.mean /= static_cast<double>(samples.size());
    return res;
}

int cmd_datagen(const DatagenConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    generate_dataset(cfg, out_dir);
    return 0;
}

int cmd_train(const TrainOptions& opt) {
    ensure_dir(opt.out_dir);
    DatasetIndex idx = load_dataset(opt.data_dir);
    std::map<std::string, std::string> inputs{{"dataset_manifest", (fs::path(opt.data_dir) / "manifest.json").string()}};

    if (opt.preset == "unet" || opt.preset == "mobile-unet") {
        CurveDataset data = assemble_curve_dataset(idx);
        nn::ModelGraph graph = opt.preset == "unet" ? build_unet(idx.config.n_nn) : build_mobile_unet(idx.config.n_nn);
        nn::ParamStore params = nn::init_params(graph, Rng(opt.seed).fork("init"));
        nn::TrainConfig cfg = train_config(opt.batch_size, opt.patience, opt.max_epochs, opt.step_size,
                                           Rng(opt.seed).fork("train").seed(), opt.verbose);
        nn::TrainResult result = nn::train(graph, std::move(params), data.train, data.val, cfg);

        nn::Checkpoint ckpt;
        ckpt.graph = graph;
        ckpt.params = result.params;
        ckpt.norm = data.norm;
        ckpt.meta = checkpoint_meta(idx, opt.preset);
        ckpt.seed = opt.seed;
        nn::save_checkpoint(ckpt, (fs::path(opt.out_dir) / (opt.preset + ".ckpt")).string());
        write_history_csv((fs::path(opt.out_dir) / "history.csv").string(), result);

        CurveEvalResult test = evaluate_curve_checkpoint(ckpt, ckpt.params, idx, data.test_meta, data.norm);
        write_json((fs::path(opt.out_dir) / "report.json").string(),
                   {{"preset", opt.preset},
                    {"best_epoch", result.best_epoch + 1},
                    {"epochs_run", result.epochs_run},
                    {"val_mse_best", result.val_loss[result.best_epoch]},
                    {"test_mean_curve_error", test.mean}});
    } else if (opt.preset == "conv-net" || opt.preset == "mobile-net" || opt.preset == "feature-net") {
        if (opt.from_checkpoint.empty()) throw ConfigError("preset '" + opt.preset + "' needs --from <curve ckpt>");
        nn::Checkpoint src = nn::load_checkpoint(opt.from_checkpoint);
        inputs["source_checkpoint"] = opt.from_checkpoint;

        Rng rng(opt.seed);
        TransferResult tr;
        if (opt.preset == "conv-net")
            tr = build_convnet(src, {}, rng.fork("head"));
        else if (opt.preset == "mobile-net")
            tr = build_mobilenet(src, {}, rng.fork("head"));
        else
            tr = build_feature_head(src, 1, {}, rng.fork("head"));

        SplitInputs train_in = assemble_inputs(idx, "train", src.norm);
        SplitInputs val_in = assemble_inputs(idx, "val", src.norm);
        SplitInputs test_in = assemble_inputs(idx, "test", src.norm);

        nn::TensorDataset train_set, val_set, test_set;
        train_set.x = train_in.x;
        val_set.x = val_in.x;
        test_set.x = test_in.x;
        nn::NormMap norm = src.norm;
        if (opt.preset == "feature-net") {
            // standardized truth peak height as the single regression target
            auto targets = [&](const SplitInputs& in, nn::TensorDataset& set) {
                set.y = Tensor3(in.meta.size(), 1, 1);
                for (std::size_t i = 0; i < in.meta.size(); ++i)
                    set.y.data[i] = truth_features(idx, in.meta[i]).ic_ph;
            };
            targets(train_in, train_set);
            targets(val_in, val_set);
            targets(test_in, test_set);
            std::vector<std::vector<double>> rows;
            for (double v : train_set.y.data) rows.push_back({v});
            nn::NormEntry fs = fit_norm_stats(rows);
            norm["feat_ic_ph"] = fs;
            for (auto* s : {&train_set, &val_set, &test_set})
                for (double& v : s->y.data) v = (v - fs.mean) / fs.stddev;
        } else {
            auto soh_of = [](const SplitInputs& in, const Tensor3& x) {
                nn::TensorDataset d;
                d.x = x;
                d.y = Tensor3(in.meta.size(), 1, 1);
                for (std::size_t i = 0; i < in.meta.size(); ++i) d.y.data[i] = in.meta[i].soh;
                return d;
            };
            train_set = soh_of(train_in, train_in.x);
            val_set = soh_of(val_in, val_in.x);
            test_set = soh_of(test_in, test_in.x);
        }

        // the contraction path is frozen (and its batch norms run on moving
        // statistics), so its activations are computed once and the head is
        // trained on the cached tensors; results are bit-identical to training
        // through the full graph
        GraphSplit split = split_after(tr.graph, tr.params, "bott.conv2_act");
        nn::TensorDataset head_train, head_val, head_test;
        head_train.x = nn::predict(split.prefix, split.prefix_params, train_set.x);
        head_train.y = train_set.y;
        head_val.x = nn::predict(split.prefix, split.prefix_params, val_set.x);
        head_val.y = val_set.y;
        head_test.x = nn::predict(split.prefix, split.prefix_params, test_set.x);
        head_test.y = test_set.y;

        nn::TrainConfig cfg = train_config(opt.batch_size, opt.patience, opt.max_epochs, opt.step_size,
                                           Rng(opt.seed).fork("train").seed(), opt.verbose);
        nn::TrainResult result = nn::train(split.suffix, split.suffix_params, head_train, head_val, cfg);

        nn::ParamStore final_params = tr.params;
        merge_suffix_params(final_params, result.params, split.prefix_nodes);

        nn::Checkpoint ckpt;
        ckpt.graph = tr.graph;
        ckpt.params = final_params;
        ckpt.norm = norm;
        ckpt.meta = checkpoint_meta(idx, opt.preset);
        ckpt.meta["source_checkpoint_fnv64"] = fnv64_file(opt.from_checkpoint);
        ckpt.seed = opt.seed;
        nn::save_checkpoint(ckpt, (fs::path(opt.out_dir) / (opt.preset + ".ckpt")).string());
        write_history_csv((fs::path(opt.out_dir) / "history.csv").string(), result);

        Tensor3 pred = nn::predict(split.suffix, result.params, head_test.x);
        double mse = nn::mse_loss(pred, head_test.y);
        write_json((fs::path(opt.out_dir) / "report.json").string(),
                   {{"preset", opt.preset},
                    {"best_epoch", result.best_epoch + 1},
                    {"epochs_run", result.epochs_run},
                    {"val_mse_best", result.val_loss[result.best_epoch]},
                    {"test_mse", mse},
                    {"test_rmse", std::sqrt(mse)}});
    } else if (opt.preset == "feature-regressor") {
        if (opt.from_checkpoint.empty()) throw ConfigError("preset 'feature-regressor' needs --from <curve ckpt>");
        nn::Checkpoint src = nn::load_checkpoint(opt.from_checkpoint);
        inputs["source_checkpoint"] = opt.from_checkpoint;
        FeatureConfig fc = feature_config_from_meta(src);
        PreprocessConfig pcfg = preprocess_from_checkpoint(src);

        auto features_of = [&](const std::string& split, std::vector<std::vector<double>>& xs,
                               std::vector<double>& ys) {
            for (const SampleMeta& meta : idx.samples) {
                if (meta.split != split) continue;
                ChargingProfile p = load_sample_profile(idx, meta);
                PreprocessedInput in = preprocess_profile(p, pcfg, src.norm.at("i"), src.norm.at("v"));
                CurveTriple vic = construct_virtual_curve(in, src, src.params);
                IcFeatures f = extract_features(vic, fc);
                xs.push_back(feature_vector(f, {"ic_pa1", "ic_pa2"}));
                ys.push_back(meta.soh);
            }
        };
        std::vector<std::vector<double>> x_train, x_test;
        std::vector<double> y_train, y_test;
        features_of("train", x_train, y_train);
        features_of("test", x_test, y_test);

        FeatureRegressor reg = fit_feature_regressor(x_train, y_train, opt.ridge);
        save_regressor(reg, (fs::path(opt.out_dir) / "regressor.json").string());

        std::vector<double> pred_test;
        for (const auto& row : x_test) pred_test.push_back(reg.predict(row));
        EvalReport rep = evaluate(pred_test, y_test);
        write_json((fs::path(opt.out_dir) / "report.json").string(),
                   {{"preset", opt.preset}, {"test_rmse", rep.rmse}, {"test_p997", rep.p997_abs_err}});
    } else {
        throw ConfigError("unknown preset '" + opt.preset + "'");
    }

    write_run_manifest(opt.out_dir, "train", train_options_to_json(opt), inputs);
    return 0;
}

int cmd_construct(const ConstructOptions& opt) {
    ensure_dir(opt.out_dir);
    nn::Checkpoint ckpt = nn::load_checkpoint(opt.checkpoint);
    if (output_shape(ckpt.graph).channels != 3)
        throw ConfigError("construct requires a curve checkpoint (unet / mobile-unet)");
    ChargingProfile p = read_profile_csv(opt.profile);
    PreprocessedInput in = preprocess_with_checkpoint(p, ckpt);
    CurveTriple vic = construct_virtual_curve(in, ckpt, ckpt.params);
    write_curve_csv(vic, (fs::path(opt.out_dir) / "vic_curve.csv").string());

    bool ic_positive = std::all_of(vic.ic_ah_per_v.begin(), vic.ic_ah_per_v.end(), [](double v) { return v > 0.0; });
    if (ic_positive) {
        std::vector<double> dv = dv_from_ic(vic);
        std::FILE* f = std::fopen((fs::path(opt.out_dir) / "vdv_curve.csv").string().c_str(), "wb");
        if (!f) throw DataError("cannot write vdv_curve.csv");
        std::fputs("q_ah,dv_v_per_ah\n", f);
        for (std::size_t k = 0; k < dv.size(); ++k) std::fprintf(f, "%.10g,%.10g\n", vic.q_ah[k], dv[k]);
        std::fclose(f);
    } else {
        std::fprintf(stderr, "warning: constructed IC has non-positive points, skipping the DV curve\n");
    }

    std::map<std::string, std::string> inputs{{"checkpoint", opt.checkpoint}, {"profile", opt.profile}};
    if (!opt.truth.empty()) {
        CurveTriple truth = read_curve_csv(opt.truth);
        double err = curve_error(vic, truth, ckpt.norm);
        write_json((fs::path(opt.out_dir) / "error.json").string(), {{"curve_error", err}});
        inputs["truth"] = opt.truth;
    }
    write_run_manifest(opt.out_dir, "construct",
                       {{"checkpoint", opt.checkpoint},
                        {"profile", opt.profile},
                        {"truth", opt.truth},
                        {"out_dir", opt.out_dir}},
                       inputs);
    return 0;
}

int cmd_estimate(const EstimateOptions& opt) {
    nn::Checkpoint ckpt = nn::load_checkpoint(opt.checkpoint);
    ChargingProfile p = read_profile_csv(opt.profile);
    PreprocessedInput in = preprocess_with_checkpoint(p, ckpt);

    double soh;
    if (opt.route == "features") {
        if (opt.regressor.empty()) throw ConfigError("features route needs --regressor");
        FeatureRegressor reg = load_regressor(opt.regressor);
        soh = estimate_soh_via_curves(in, ckpt, ckpt.params, reg, feature_config_from_meta(ckpt));
    } else if (opt.route == "direct") {
        soh = estimate_soh_direct(in, ckpt, ckpt.params);
    } else {
        throw ConfigError("estimate route must be 'features' or 'direct'");
    }
    soh = std::clamp(soh, 0.0, 1.0);
    write_json(opt.out_file, {{"route", opt.route}, {"soh", soh}});
    return 0;
}

namespace {

// re-truncate the full fast-charging runs of the test modules to a fixed SOC
// range, slicing by transferred charge (SOC itself is not recorded)
std::vector<std::pair<SampleMeta, ChargingProfile>> fixed_range_inputs(const DatasetIndex& idx, double lo, double hi) {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw ConfigError("bad fixed range");
    std::vector<std::pair<SampleMeta, ChargingProfile>> out;
    std::set<std::pair<int, std::string>> seen;
    for (const SampleMeta& s : idx.samples) {
        if (s.split != "test") continue;
        if (!seen.insert({s.module_index, s.protocol}).second) continue;
        char buf[16];
        std::snprintf(buf, sizeof buf, "m%03d", s.module_index);
        std::string full = (fs::path(idx.dir) / ("profiles_full/" + std::string(buf) + "_" + s.protocol + ".csv")).string();
        ChargingProfile p = read_profile_csv(full);
        // SOC(t) = trunc.soc_low + dq(t) / capacity
        double cap = s.soh * idx.config.c_fresh_ah;
        ChargeDomainProfile q = coulomb_count(p);
        double q_lo = (lo - idx.config.trunc.soc_low) * cap;
        double q_hi = (hi - idx.config.trunc.soc_low) * cap;
        if (q_lo < -1e-6 || q_hi > q.total_charge_ah + 1e-6)
            throw RangeError("fixed range outside the recorded charging window");
        ChargingProfile slice;
        slice.protocol = s.protocol;
        slice.soc_initial = lo;
        slice.soc_final = hi;
        double t0 = -1.0;
        for (std::size_t i = 0; i < p.t_s.size(); ++i) {
            if (q.dq_ah[i] < q_lo || q.dq_ah[i] > q_hi) continue;
            if (t0 < 0.0) t0 = p.t_s[i];
            slice.t_s.push_back(p.t_s[i] - t0);
            slice.current_a.push_back(p.current_a[i]);
            slice.voltage_v.push_back(p.voltage_v[i]);
        }
        SampleMeta meta = s;
        meta.id = std::string(buf) + "_" + s.protocol + "_fixed";
        meta.soc_initial = lo;
        meta.soc_final = hi;
        out.emplace_back(std::move(meta), std::move(slice));
    }
    if (out.empty()) throw DataError("no test modules for the fixed-range evaluation");
    return out;
}

void write_residuals_csv(const std::string& path, const std::vector<SampleMeta>& meta,
                         const std::vector<double>& values, const char* value_name) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write '" + path + "'");
    std::fprintf(f, "id,protocol,soh,span,%s\n", value_name);
    for (std::size_t i = 0; i < meta.size(); ++i)
        std::fprintf(f, "%s,%s,%.10g,%.10g,%.10g\n", meta[i].id.c_str(), meta[i].protocol.c_str(), meta[i].soh,
                     meta[i].soc_final - meta[i].soc_initial, values[i]);
    std::fclose(f);
}

// quartile categories plus the representative sample nearest each category mean
void emit_curve_plot_data(const std::string& out_dir, const DatasetIndex& idx, const nn::Checkpoint& ckpt,
                          nn::ParamStore& params, const std::vector<SampleMeta>& meta,
                          const std::vector<double>& errors) {
    if (errors.empty()) throw DataError("no residuals for plot data");
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    double q1 = interpolated_quantile(sorted, 0.25);
    double q2 = interpolated_quantile(sorted, 0.50);
    double q3 = interpolated_quantile(sorted, 0.75);
    const double edges[5] = {-1e300, q1, q2, q3, 1e300};
    const char* names[4] = {"A", "B", "C", "D"};

    std::FILE* f = std::fopen((fs::path(out_dir) / "categories.csv").string().c_str(), "wb");
    if (!f) throw DataError("cannot write categories.csv");
    std::fputs("category,lo,hi,count,mean_error,representative_id,representative_error\n", f);
    PreprocessConfig pcfg = preprocess_from_checkpoint(ckpt);
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0;
        std::size_t count = 0;
        for (double e : errors)
            if (e >= edges[c] && e < edges[c + 1]) {
                mean += e;
                ++count;
            }
        if (count) mean /= static_cast<double>(count);
        // representative: the sample whose error is nearest the category mean
        std::size_t rep = errors.size();
        double best = 1e300;
        for (std::size_t i = 0; i < errors.size(); ++i) {
            if (errors[i] < edges[c] || errors[i] >= edges[c + 1]) continue;
            double d = std::abs(errors[i] - mean);
            if (d < best) {
                best = d;
                rep = i;
            }
        }
        std::string rep_id = rep < errors.size() ? meta[rep].id : "";
        std::fprintf(f, "%s,%.10g,%.10g,%zu,%.10g,%s,%.10g\n", names[c], edges[c], edges[c + 1], count, mean,
                     rep_id.c_str(), rep < errors.size() ? errors[rep] : 0.0);
        if (rep < errors.size()) {
            ChargingProfile p = load_sample_profile(idx, meta[rep]);
            PreprocessedInput in = preprocess_profile(p, pcfg, ckpt.norm.at("i"), ckpt.norm.at("v"));
            CurveTriple vic = construct_virtual_curve(in, ckpt, params);
            write_curve_csv(vic, (fs::path(out_dir) / ("category_" + std::string(names[c]) + "_virtual.csv")).string());
            write_curve_csv(load_truth_curve(idx, meta[rep]),
                            (fs::path(out_dir) / ("category_" + std::string(names[c]) + "_actual.csv")).string());
        }
    }
    std::fclose(f);
}

} // namespace

int cmd_eval(const EvalOptions& opt) {
    ensure_dir(opt.out_dir);
    DatasetIndex idx = load_dataset(opt.data_dir);
    nn::Checkpoint ckpt = nn::load_checkpoint(opt.checkpoint);
    std::map<std::string, std::string> inputs{{"checkpoint", opt.checkpoint},
                                              {"dataset_manifest", (fs::path(opt.data_dir) / "manifest.json").string()}};

    std::vector<SampleMeta> samples;
    std::vector<std::pair<SampleMeta, ChargingProfile>> fixed;
    bool use_fixed = !opt.fixed_range.empty();
    if (use_fixed) {
        auto colon = opt.fixed_range.find(':');
        if (colon == std::string::npos) throw ConfigError("--range expects lo:hi");
        double lo = std::stod(opt.fixed_range.substr(0, colon));
        double hi = std::stod(opt.fixed_range.substr(colon + 1));
        fixed = fixed_range_inputs(idx, lo, hi);
        for (auto& [m, p] : fixed) samples.push_back(m);
    } else {
        for (const SampleMeta& s : idx.samples)
            if (s.split == "test") samples.push_back(s);
        if (samples.empty()) throw DataError("dataset has no test samples");
    }

    PreprocessConfig pcfg = preprocess_from_checkpoint(ckpt);
    auto input_of = [&](std::size_t i) {
        ChargingProfile p = use_fixed ? fixed[i].second : load_sample_profile(idx, samples[i]);
        return preprocess_profile(p, pcfg, ckpt.norm.at("i"), ckpt.norm.at("v"));
    };

    nlohmann::json report;
    report["route"] = opt.route;
    report["n"] = samples.size();
    if (use_fixed) report["fixed_range"] = opt.fixed_range;

    if (opt.route == "curves") {
        if (output_shape(ckpt.graph).channels != 3) throw ConfigError("curves route needs a curve checkpoint");
        std::vector<double> errors(samples.size());
        std::map<std::string, CurveTriple> truths;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            PreprocessedInput in = input_of(i);
            CurveTriple vic = construct_virtual_curve(in, ckpt, ckpt.params);
            auto it = truths.find(samples[i].truth_file);
            if (it == truths.end()) it = truths.emplace(samples[i].truth_file, load_truth_curve(idx, samples[i])).first;
            errors[i] = curve_error(vic, it->second, ckpt.norm);
        }
        double mean = 0.0;
        for (double e : errors) mean += e;
        mean /= static_cast<double>(errors.size());
        report["mean_curve_error"] = mean;
        report["median_curve_error"] = interpolated_quantile(errors, 0.5);
        write_residuals_csv((fs::path(opt.out_dir) / "residuals.csv").string(), samples, errors, "curve_error");
        write_histogram_csv((fs::path(opt.out_dir) / "histogram.csv").string(), errors, 24);
        if (!use_fixed) emit_curve_plot_data(opt.out_dir, idx, ckpt, ckpt.params, samples, errors);
    } else if (opt.route == "features" || opt.route == "direct") {
        FeatureRegressor reg;
        if (opt.route == "features") {
            if (opt.regressor.empty()) throw ConfigError("features route needs --regressor");
            reg = load_regressor(opt.regressor);
            inputs["regressor"] = opt.regressor;
        }
        FeatureConfig fc = feature_config_from_meta(ckpt);
        std::vector<double> pred(samples.size()), labels(samples.size()), spans(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            PreprocessedInput in = input_of(i);
            pred[i] = opt.route == "features" ? estimate_soh_via_curves(in, ckpt, ckpt.params, reg, fc)
                                              : std::clamp(estimate_soh_direct(in, ckpt, ckpt.params), 0.0, 1.0);
            labels[i] = samples[i].soh;
            spans[i] = samples[i].soc_final - samples[i].soc_initial;
        }
        EvalReport rep = evaluate(pred, labels, spans);
        report.update(rep.to_json());
        std::vector<double> abs_res(rep.residuals.size());
        for (std::size_t i = 0; i < abs_res.size(); ++i) abs_res[i] = std::abs(rep.residuals[i]);
        write_residuals_csv((fs::path(opt.out_dir) / "residuals.csv").string(), samples, rep.residuals, "residual");
        write_histogram_csv((fs::path(opt.out_dir) / "histogram.csv").string(), abs_res, 24);
    } else {
        throw ConfigError("eval route must be curves, features or direct");
    }

    write_json((fs::path(opt.out_dir) / "report.json").string(), report);
    write_run_manifest(opt.out_dir, "eval",
                       {{"route", opt.route},
                        {"data_dir", opt.data_dir},
                        {"checkpoint", opt.checkpoint},
                        {"regressor", opt.regressor},
                        {"out_dir", opt.out_dir},
                        {"fixed_range", opt.fixed_range}},
                       inputs);
    return 0;
}

int cmd_flops(const std::string& preset) {
    struct Row {
        std::string name;
        nn::CountReport r;
    };
    std::vector<Row> rows;
    Rng rng(1);
    nn::ModelGraph unet = build_unet(128);
    nn::ModelGraph mob = build_mobile_unet(128);
    nn::Checkpoint cu{unet, nn::init_params(unet, rng.fork("u")), {}, {}, 0};
    nn::Checkpoint cm{mob, nn::init_params(mob, rng.fork("m")), {}, {}, 0};
    TransferResult conv = build_convnet(cu, {}, rng.fork("c"));
    TransferResult mnet = build_mobilenet(cm, {}, rng.fork("n"));

    rows.push_back({"unet", nn::count_params_and_flops(unet)});
    rows.push_back({"mobile-unet", nn::count_params_and_flops(mob)});
    rows.push_back({"conv-net", nn::count_params_and_flops(conv.graph, conv.frozen)});
    rows.push_back({"mobile-net", nn::count_params_and_flops(mnet.graph, mnet.frozen)});

    std::printf("%-12s %12s %12s %12s %14s\n", "model", "total", "trainable", "fixed", "flops");
    bool any = false;
    for (const Row& row : rows) {
        if (!preset.empty() && row.name != preset) continue;
        std::printf("%-12s %12lld %12lld %12lld %14lld\n", row.name.c_str(), row.r.total, row.r.trainable,
                    row.r.fixed, row.r.flops);
        any = true;
    }
    if (!any) throw ConfigError("unknown preset '" + preset + "'");
    return 0;
}

int cmd_finetune(const FinetuneOptions& opt) {
    ensure_dir(opt.out_dir);
    nn::Checkpoint src = nn::load_checkpoint(opt.checkpoint);
    if (output_shape(src.graph).channels != 3) throw ConfigError("finetune expects a curve checkpoint");
    DatasetIndex idx = load_dataset(opt.data_dir);
    CurveDataset data = assemble_curve_dataset(idx);

    // baseline: the source model as-is, measured in the new dataset's metric
    CurveEvalResult baseline = evaluate_curve_checkpoint(src, src.params, idx, data.test_meta, data.norm);

    std::vector<std::string> selection;
    if (opt.layers == "preset")
        selection = fine_tune_preset(src.graph);
    else if (opt.layers == "all")
        for (const nn::LayerSpec& s : src.graph.layers) selection.push_back(s.name);
    else {
        std::string rest = opt.layers;
        while (!rest.empty()) {
            auto comma = rest.find(',');
            selection.push_back(rest.substr(0, comma));
            rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
        }
    }

    nn::ParamStore params = src.params;
    apply_fine_tune_selection(src.graph, params, selection);
    nn::TrainConfig cfg = train_config(opt.batch_size, opt.patience, opt.max_epochs, opt.step_size,
                                       Rng(opt.seed).fork("train").seed(), opt.verbose);
    nn::TrainResult result = nn::train(src.graph, std::move(params), data.train, data.val, cfg);

    nn::Checkpoint tuned;
    tuned.graph = src.graph;
    tuned.params = result.params;
    tuned.norm = data.norm; // recalibrated on the new dataset's training split
    tuned.meta = src.meta;
    tuned.meta["fine_tuned_from_fnv64"] = fnv64_file(opt.checkpoint);
    tuned.meta["fine_tuned_layers"] = selection;
    tuned.meta["pa2_cutoff_abs"] = idx.pa2_cutoff_abs;
    tuned.meta["pa1_halfwidth_v"] = idx.config.pa1_halfwidth_v;
    tuned.seed = opt.seed;
    nn::save_checkpoint(tuned, (fs::path(opt.out_dir) / "finetuned.ckpt").string());
    write_history_csv((fs::path(opt.out_dir) / "history.csv").string(), result);

    CurveEvalResult after = evaluate_curve_checkpoint(tuned, tuned.params, idx, data.test_meta, data.norm);
    double reduction = baseline.mean > 0.0 ? 1.0 - after.mean / baseline.mean : 0.0;
    write_json((fs::path(opt.out_dir) / "comparison.json").string(),
               {{"baseline_error", baseline.mean},
                {"finetuned_error", after.mean},
                {"relative_reduction", reduction},
                {"layers", selection},
                {"epochs_run", result.epochs_run}});

    write_run_manifest(opt.out_dir, "finetune",
                       {{"checkpoint", opt.checkpoint},
                        {"data_dir", opt.data_dir},
                        {"out_dir", opt.out_dir},
                        {"layers", opt.layers},
                        {"batch_size", opt.batch_size},
                        {"patience", opt.patience},
                        {"max_epochs", opt.max_epochs},
                        {"step_size", opt.step_size},
                        {"seed", opt.seed}},
                       {{"checkpoint", opt.checkpoint},
                        {"dataset_manifest", (fs::path(opt.data_dir) / "manifest.json").string()}});
    return 0;
}

} // namespace vicnet::cli

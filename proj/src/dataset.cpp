#include "vicnet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

namespace fs = std::filesystem;

namespace vicnet {

nlohmann::json datagen_config_to_json(const DatagenConfig& c) {
    nlohmann::json o;
    o["n_modules"] = c.n_modules;
    o["soh_min"] = c.soh_min;
    o["soh_max"] = c.soh_max;
    o["soh_step"] = c.soh_step;
    o["n_truncate"] = c.n_truncate;
    o["trunc_soc_low"] = c.trunc.soc_low;
    o["trunc_soc_high"] = c.trunc.soc_high;
    o["trunc_min_span"] = c.trunc.min_span;
    o["c_fresh_ah"] = c.c_fresh_ah;
    o["ref_c_rate"] = c.ref_c_rate;
    o["ref_soc_start"] = c.ref_soc_start;
    o["ref_soc_end"] = c.ref_soc_end;
    o["dt_s"] = c.dt_s;
    o["noise_sigma_i_a"] = c.input_noise.sigma_i_a;
    o["noise_sigma_v_v"] = c.input_noise.sigma_v_v;
    o["ocv_jitter_frac"] = c.ocv_jitter_frac;
    o["protocol_set"] = c.protocol_set;
    o["ocv_v_soc0"] = c.base_ocv.v_soc0;
    o["ocv_v_soc1"] = c.base_ocv.v_soc1;
    o["ocv_slope"] = c.base_ocv.slope;
    nlohmann::json comps = nlohmann::json::array();
    for (const OcvComponent& oc : c.base_ocv.components)
        comps.push_back({{"amplitude", oc.amplitude}, {"center_v", oc.center_v}, {"width_v", oc.width_v}});
    o["ocv_components"] = std::move(comps);
    o["n_nn"] = c.n_nn;
    o["out_soc_initial"] = c.out_soc_initial;
    o["out_soc_final"] = c.out_soc_final;
    o["train_frac"] = c.train_frac;
    o["val_frac"] = c.val_frac;
    o["test_frac"] = c.test_frac;
    o["pa1_halfwidth_v"] = c.pa1_halfwidth_v;
    o["pa2_cutoff_frac"] = c.pa2_cutoff_frac;
    o["seed"] = c.seed;
    return o;
}

DatagenConfig datagen_config_from_json(const nlohmann::json& j) {
    DatagenConfig c;
    c.n_modules = j.value("n_modules", c.n_modules);
    c.soh_min = j.value("soh_min", c.soh_min);
    c.soh_max = j.value("soh_max", c.soh_max);
    c.soh_step = j.value("soh_step", c.soh_step);
    c.n_truncate = j.value("n_truncate", c.n_truncate);
    c.trunc.soc_low = j.value("trunc_soc_low", c.trunc.soc_low);
    c.trunc.soc_high = j.value("trunc_soc_high", c.trunc.soc_high);
    c.trunc.min_span = j.value("trunc_min_span", c.trunc.min_span);
    c.c_fresh_ah = j.value("c_fresh_ah", c.c_fresh_ah);
    c.ref_c_rate = j.value("ref_c_rate", c.ref_c_rate);
    c.ref_soc_start = j.value("ref_soc_start", c.ref_soc_start);
    c.ref_soc_end = j.value("ref_soc_end", c.ref_soc_end);
    c.dt_s = j.value("dt_s", c.dt_s);
    c.input_noise.sigma_i_a = j.value("noise_sigma_i_a", c.input_noise.sigma_i_a);
    c.input_noise.sigma_v_v = j.value("noise_sigma_v_v", c.input_noise.sigma_v_v);
    c.ocv_jitter_frac = j.value("ocv_jitter_frac", c.ocv_jitter_frac);
    c.protocol_set = j.value("protocol_set", c.protocol_set);
    c.base_ocv.v_soc0 = j.value("ocv_v_soc0", c.base_ocv.v_soc0);
    c.base_ocv.v_soc1 = j.value("ocv_v_soc1", c.base_ocv.v_soc1);
    c.base_ocv.slope = j.value("ocv_slope", c.base_ocv.slope);
    if (j.contains("ocv_components")) {
        c.base_ocv.components.clear();
        for (const auto& oc : j.at("ocv_components"))
            c.base_ocv.components.push_back(
                {oc.at("amplitude").get<double>(), oc.at("center_v").get<double>(), oc.at("width_v").get<double>()});
    }
    c.n_nn = j.value("n_nn", c.n_nn);
    c.out_soc_initial = j.value("out_soc_initial", c.out_soc_initial);
    c.out_soc_final = j.value("out_soc_final", c.out_soc_final);
    c.train_frac = j.value("train_frac", c.train_frac);
    c.val_frac = j.value("val_frac", c.val_frac);
    c.test_frac = j.value("test_frac", c.test_frac);
    c.pa1_halfwidth_v = j.value("pa1_halfwidth_v", c.pa1_halfwidth_v);
    c.pa2_cutoff_frac = j.value("pa2_cutoff_frac", c.pa2_cutoff_frac);
    c.seed = j.value("seed", c.seed);
    return c;
}

namespace {

nlohmann::json sample_to_json(const SampleMeta& s) {
    return {{"id", s.id},
            {"module", s.module_index},
            {"protocol", s.protocol},
            {"soh", s.soh},
            {"soc_initial", s.soc_initial},
            {"soc_final", s.soc_final},
            {"split", s.split},
            {"profile", s.profile_file},
            {"truth", s.truth_file}};
}

SampleMeta sample_from_json(const nlohmann::json& j) {
    SampleMeta s;
    s.id = j.at("id").get<std::string>();
    s.module_index = j.at("module").get<int>();
    s.protocol = j.at("protocol").get<std::string>();
    s.soh = j.at("soh").get<double>();
    s.soc_initial = j.at("soc_initial").get<double>();
    s.soc_final = j.at("soc_final").get<double>();
    s.split = j.at("split").get<std::string>();
    s.profile_file = j.at("profile").get<std::string>();
    s.truth_file = j.at("truth").get<std::string>();
    return s;
}

ModuleModel make_module(const DatagenConfig& cfg, int index, double soh, Rng& jitter_rng) {
    ModuleModel m;
    m.c_fresh_ah = cfg.c_fresh_ah;
    m.soh = soh;
    m.ocv_shape = cfg.base_ocv;
    for (OcvComponent& c : m.ocv_shape.components)
        c.amplitude *= 1.0 + cfg.ocv_jitter_frac * (2.0 * jitter_rng.uniform() - 1.0);
    (void)index;
    return m;
}

std::string module_tag(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "m%03d", index);
    return buf;
}

} // namespace

DatasetIndex generate_dataset(const DatagenConfig& cfg, const std::string& out_dir) {
    if (cfg.n_modules < 1 || cfg.n_truncate < 1) throw ConfigError("datagen: n_modules and n_truncate must be >= 1");
    if (cfg.soh_min < 0.0 || cfg.soh_max > 1.0 || cfg.soh_min > cfg.soh_max)
        throw ConfigError("datagen: soh grid must lie within [0, 1]");

    std::vector<Protocol> protocols =
        cfg.protocol_set == "alternate" ? alternate_fast_protocols() : standard_fast_protocols();

    fs::create_directories(fs::path(out_dir) / "profiles");
    fs::create_directories(fs::path(out_dir) / "profiles_full");
    fs::create_directories(fs::path(out_dir) / "truth");

    Rng root(cfg.seed);

    // soh grid assignment: module i gets grid[i mod grid_size]
    std::vector<double> soh_grid;
    for (double s = cfg.soh_min; s <= cfg.soh_max + 1e-9; s += cfg.soh_step) soh_grid.push_back(std::min(s, 1.0));

    std::vector<std::string> split =
        split_modules(cfg.n_modules, cfg.train_frac, cfg.val_frac, cfg.test_frac, root.fork("split"));

    // pa2 cutoff is calibrated once from the fresh nominal module
    ModuleModel nominal;
    nominal.c_fresh_ah = cfg.c_fresh_ah;
    nominal.ocv_shape = cfg.base_ocv;
    OutputGridConfig nominal_grid{cfg.n_nn, cfg.out_soc_initial, cfg.out_soc_final, 0.0, nominal.capacity_ah()};
    FeatureConfig fresh_fc;
    IcFeatures fresh_features =
        extract_features(analytic_ic(nominal, cfg.ref_c_rate * cfg.c_fresh_ah, nominal_grid), fresh_fc);
    double pa2_cutoff = cfg.pa2_cutoff_frac * fresh_features.ic_ph;

    DatasetIndex idx;
    idx.dir = out_dir;
    idx.config = cfg;
    idx.pa2_cutoff_abs = pa2_cutoff;

    SimNoise no_noise;
    for (int mi = 0; mi < cfg.n_modules; ++mi) {
        double soh = soh_grid[static_cast<std::size_t>(mi) % soh_grid.size()];
        Rng jitter = root.fork("module", mi);
        ModuleModel model = make_module(cfg, mi, soh, jitter);
        std::string mtag = module_tag(mi);

        // reference CC charge -> ground-truth triple for this module
        Rng ref_rng = root.fork("refcc", mi);
        ChargingProfile ref = simulate_charge(model, ref_cc_protocol(), cfg.ref_soc_start, cfg.ref_soc_end, cfg.dt_s,
                                              no_noise, ref_rng);
        OutputGridConfig grid{cfg.n_nn, cfg.out_soc_initial, cfg.out_soc_final, cfg.ref_soc_start,
                              model.capacity_ah()};
        CurveTriple truth = ic_from_cc(coulomb_count(ref), {}, grid);
        std::string truth_file = "truth/" + mtag + ".csv";
        write_curve_csv(truth, (fs::path(out_dir) / truth_file).string());

        for (std::size_t pi = 0; pi < protocols.size(); ++pi) {
            const Protocol& proto = protocols[pi];
            Rng run_rng = root.fork("fast." + proto.id, mi);
            SimulatedRun run = simulate_run(model, proto, cfg.trunc.soc_low, cfg.trunc.soc_high, cfg.dt_s,
                                            cfg.input_noise, run_rng);
            std::string full_file = "profiles_full/" + mtag + "_" + proto.id + ".csv";
            write_profile_csv(run.profile, (fs::path(out_dir) / full_file).string());

            Rng trunc_rng = root.fork("trunc." + proto.id, mi);
            for (int ti = 0; ti < cfg.n_truncate; ++ti) {
                auto [s_i, s_f] = sample_truncation(cfg.trunc, trunc_rng);
                ChargingProfile slice = truncate_run(run, s_i, s_f);

                SampleMeta meta;
                char tbuf[16];
                std::snprintf(tbuf, sizeof tbuf, "t%02d", ti);
                meta.id = mtag + "_" + proto.id + "_" + tbuf;
                meta.module_index = mi;
                meta.protocol = proto.id;
                meta.soh = soh;
                meta.soc_initial = slice.soc_initial.value();
                meta.soc_final = slice.soc_final.value();
                meta.split = split[mi];
                meta.profile_file = "profiles/" + meta.id + ".csv";
                meta.truth_file = truth_file;
                write_profile_csv(slice, (fs::path(out_dir) / meta.profile_file).string());

                nlohmann::json sidecar = {{"protocol", meta.protocol},
                                          {"soh", meta.soh},
                                          {"soc_initial", meta.soc_initial},
                                          {"soc_final", meta.soc_final},
                                          {"module", meta.module_index}};
                std::ofstream sc((fs::path(out_dir) / ("profiles/" + meta.id + ".json")));
                sc << sidecar.dump(2) << "\n";

                idx.samples.push_back(std::move(meta));
            }
        }
    }

    // labels.jsonl
    {
        std::ofstream lf(fs::path(out_dir) / "labels.jsonl");
        for (const SampleMeta& s : idx.samples) lf << sample_to_json(s).dump() << "\n";
    }

    nlohmann::json cfg_json = datagen_config_to_json(cfg);
    std::string cfg_dump = cfg_json.dump();
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["command"] = "datagen";
    manifest["seed"] = cfg.seed;
    manifest["config"] = cfg_json;
    manifest["config_hash"] = fnv64_bytes(cfg_dump.data(), cfg_dump.size());
    manifest["n_samples"] = idx.samples.size();
    manifest["pa2_cutoff_abs"] = pa2_cutoff;
    manifest["pa1_halfwidth_v"] = cfg.pa1_halfwidth_v;
    nlohmann::json split_json = nlohmann::json::object();
    for (int mi = 0; mi < cfg.n_modules; ++mi) split_json[module_tag(mi)] = split[mi];
    manifest["split"] = std::move(split_json);
    {
        std::ofstream mf(fs::path(out_dir) / "manifest.json");
        mf << manifest.dump(2) << "\n";
    }
    idx.manifest = std::move(manifest);
    return idx;
}

DatasetIndex load_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("no manifest.json in dataset dir '" + dir + "'");
    DatasetIndex idx;
    idx.dir = dir;
    mf >> idx.manifest;
    idx.config = datagen_config_from_json(idx.manifest.at("config"));
    idx.pa2_cutoff_abs = idx.manifest.at("pa2_cutoff_abs").get<double>();

    std::ifstream lf(fs::path(dir) / "labels.jsonl");
    if (!lf) throw DataError("no labels.jsonl in dataset dir '" + dir + "'");
    std::string line;
    while (std::getline(lf, line)) {
        if (line.empty()) continue;
        idx.samples.push_back(sample_from_json(nlohmann::json::parse(line)));
    }
    if (idx.samples.empty()) throw DataError("dataset '" + dir + "' has no samples");
    return idx;
}

CurveTriple load_truth_curve(const DatasetIndex& idx, const SampleMeta& meta) {
    return read_curve_csv((fs::path(idx.dir) / meta.truth_file).string());
}

ChargingProfile load_sample_profile(const DatasetIndex& idx, const SampleMeta& meta) {
    ChargingProfile p = read_profile_csv((fs::path(idx.dir) / meta.profile_file).string());
    p.protocol = meta.protocol;
    p.soc_initial = meta.soc_initial;
    p.soc_final = meta.soc_final;
    return p;
}

CurveDataset assemble_curve_dataset(const DatasetIndex& idx) {
    PreprocessConfig pcfg = idx.config.preprocess();
    double dq = pcfg.delta_q();

    struct Prepared {
        const SampleMeta* meta;
        std::vector<double> i_pad, v_pad;  // padded, physical units
        const CurveTriple* truth;
    };

    // one truth curve per module, loaded once
    std::map<std::string, CurveTriple> truths;
    std::vector<Prepared> prepared;
    prepared.reserve(idx.samples.size());
    for (const SampleMeta& meta : idx.samples) {
        auto it = truths.find(meta.truth_file);
        if (it == truths.end()) it = truths.emplace(meta.truth_file, load_truth_curve(idx, meta)).first;

        ChargingProfile p = load_sample_profile(idx, meta);
        Downsampled ds = downsample(coulomb_count(p), dq);
        Prepared prep;
        prep.meta = &meta;
        prep.i_pad = pad_symmetric(ds.current_a, pcfg.n_nn);
        prep.v_pad = pad_symmetric(ds.voltage_v, pcfg.n_nn);
        prep.truth = &it->second;
        prepared.push_back(std::move(prep));
    }

    // standardization constants from the training split only
    std::vector<std::vector<double>> pool_i, pool_v, pool_q, pool_vc, pool_ic;
    for (const Prepared& pr : prepared) {
        if (pr.meta->split != "train") continue;
        pool_i.push_back(pr.i_pad);
        pool_v.push_back(pr.v_pad);
        pool_q.push_back(pr.truth->q_ah);
        pool_vc.push_back(pr.truth->v_v);
        pool_ic.push_back(pr.truth->ic_ah_per_v);
    }
    if (pool_i.size() < 2) throw DataError("assemble: training split has fewer than 2 samples");

    CurveDataset out;
    out.norm["i"] = fit_norm_stats(pool_i);
    out.norm["v"] = fit_norm_stats(pool_v);
    out.norm["q_cc"] = fit_norm_stats(pool_q);
    out.norm["v_cc"] = fit_norm_stats(pool_vc);
    out.norm["ic"] = fit_norm_stats(pool_ic);

    auto count_split = [&](const char* s) {
        std::size_t n = 0;
        for (const Prepared& pr : prepared)
            if (pr.meta->split == s) ++n;
        return n;
    };
    int n_nn = pcfg.n_nn;
    auto init_set = [&](nn::TensorDataset& d, std::size_t n) {
        d.x = Tensor3(n, 2, n_nn);
        d.y = Tensor3(n, 3, n_nn);
    };
    init_set(out.train, count_split("train"));
    init_set(out.val, count_split("val"));
    init_set(out.test, count_split("test"));

    std::size_t it_train = 0, it_val = 0, it_test = 0;
    for (const Prepared& pr : prepared) {
        nn::TensorDataset* d;
        std::vector<SampleMeta>* metas;
        std::size_t* cursor;
        if (pr.meta->split == "train") {
            d = &out.train;
            metas = &out.train_meta;
            cursor = &it_train;
        } else if (pr.meta->split == "val") {
            d = &out.val;
            metas = &out.val_meta;
            cursor = &it_val;
        } else {
            d = &out.test;
            metas = &out.test_meta;
            cursor = &it_test;
        }
        std::size_t row = *cursor;
        for (int k = 0; k < n_nn; ++k) {
            d->x.at(row, 0, k) = (pr.i_pad[k] - out.norm["i"].mean) / out.norm["i"].stddev;
            d->x.at(row, 1, k) = (pr.v_pad[k] - out.norm["v"].mean) / out.norm["v"].stddev;
            d->y.at(row, 0, k) = (pr.truth->q_ah[k] - out.norm["q_cc"].mean) / out.norm["q_cc"].stddev;
            d->y.at(row, 1, k) = (pr.truth->v_v[k] - out.norm["v_cc"].mean) / out.norm["v_cc"].stddev;
            d->y.at(row, 2, k) = (pr.truth->ic_ah_per_v[k] - out.norm["ic"].mean) / out.norm["ic"].stddev;
        }
        metas->push_back(*pr.meta);
        *cursor += 1;
    }
    return out;
}

nn::TensorDataset with_soh_targets(const nn::TensorDataset& base, const std::vector<SampleMeta>& meta) {
    if (base.x.batch != meta.size()) throw ShapeError("with_soh_targets: size mismatch");
    nn::TensorDataset d;
    d.x = base.x;
    d.y = Tensor3(meta.size(), 1, 1);
    for (std::size_t i = 0; i < meta.size(); ++i) d.y.data[i] = meta[i].soh;
    return d;
}

std::uint64_t fnv64_bytes(const void* data, std::size_t size) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot hash missing file '" + path + "'");
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

} // namespace vicnet

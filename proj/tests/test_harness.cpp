#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "vicnet/harness.hpp"
#include "vicnet/models.hpp"

using namespace vicnet;
namespace fs = std::filesystem;

namespace {

// small dataset reused by the whole smoke flow (module-level fixture)
struct SmokeEnv {
    fs::path root;
    DatagenConfig cfg;
    DatasetIndex idx;

    SmokeEnv() {
        root = fs::temp_directory_path() / "vicnet_smoke";
        fs::remove_all(root);
        fs::create_directories(root);
        cfg.n_modules = 6;
        cfg.n_truncate = 2;
        cfg.seed = 7;
        idx = generate_dataset(cfg, (root / "data").string());
    }
    ~SmokeEnv() { fs::remove_all(root); }
};

SmokeEnv& env() {
    static SmokeEnv e;
    return e;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    nlohmann::json j;
    is >> j;
    return j;
}

} // namespace

TEST_CASE("datagen writes a complete, loadable dataset") {
    SmokeEnv& e = env();
    CHECK(e.idx.samples.size() == 6u * 3u * 2u);
    CHECK(fs::exists(e.root / "data/manifest.json"));
    CHECK(fs::exists(e.root / "data/labels.jsonl"));

    DatasetIndex loaded = load_dataset((e.root / "data").string());
    CHECK(loaded.samples.size() == e.idx.samples.size());
    CHECK(loaded.pa2_cutoff_abs == doctest::Approx(e.idx.pa2_cutoff_abs));

    // every sample's files exist and each module id sits in exactly one split
    std::map<int, std::string> module_split;
    for (const SampleMeta& s : loaded.samples) {
        CHECK(fs::exists(e.root / "data" / s.profile_file));
        CHECK(fs::exists(e.root / "data" / s.truth_file));
        auto it = module_split.find(s.module_index);
        if (it == module_split.end())
            module_split[s.module_index] = s.split;
        else
            CHECK(it->second == s.split);
        CHECK(s.soc_final - s.soc_initial >= loaded.config.trunc.min_span - 0.02);
    }

    // ground-truth curves satisfy the curve invariants
    CurveTriple t = load_truth_curve(loaded, loaded.samples.front());
    t.validate();
}

TEST_CASE("datagen is byte-identical under the same seed") {
    SmokeEnv& e = env();
    fs::path again = e.root / "data_again";
    generate_dataset(e.cfg, again.string());
    for (auto& entry : fs::recursive_directory_iterator(e.root / "data")) {
        if (!entry.is_regular_file()) continue;
        fs::path rel = fs::relative(entry.path(), e.root / "data");
        CHECK(fnv64_file(entry.path().string()) == fnv64_file((again / rel).string()));
    }
    fs::remove_all(again);
}

TEST_CASE("curve dataset assembly: shapes, standardization, leakage guard") {
    SmokeEnv& e = env();
    CurveDataset d = assemble_curve_dataset(e.idx);
    CHECK(d.train.x.channels == 2);
    CHECK(d.train.y.channels == 3);
    CHECK(d.train.x.length == 128);
    CHECK(d.train.size() + d.val.size() + d.test.size() == e.idx.samples.size());

    // training targets pool to mean 0 / std 1 per channel family
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < d.train.y.batch; ++b)
        for (std::size_t k = 0; k < d.train.y.length; ++k) {
            double v = d.train.y.at(b, 2, k); // ic channel
            sum += v;
            sq += v * v;
            ++n;
        }
    // the ic pool mixes all train samples; mean near 0 by construction
    CHECK(std::abs(sum / n) < 1e-9);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-6));

    // leakage guard: dropping the val/test profiles from disk leaves the
    // training statistics untouched
    fs::path copy = e.root / "data_trainonly";
    fs::create_directories(copy / "profiles");
    fs::create_directories(copy / "truth");
    fs::copy_file(e.root / "data/manifest.json", copy / "manifest.json");
    std::ofstream lf(copy / "labels.jsonl");
    std::ifstream orig(e.root / "data/labels.jsonl");
    std::string line;
    while (std::getline(orig, line)) {
        if (line.find("\"train\"") == std::string::npos) continue;
        lf << line << "\n";
    }
    lf.close();
    for (const SampleMeta& s : e.idx.samples) {
        if (s.split != "train") continue;
        fs::copy_file(e.root / "data" / s.profile_file, copy / s.profile_file,
                      fs::copy_options::skip_existing);
        fs::copy_file(e.root / "data" / s.truth_file, copy / s.truth_file, fs::copy_options::skip_existing);
    }
    DatasetIndex trimmed = load_dataset(copy.string());
    CurveDataset d2 = assemble_curve_dataset(trimmed);
    CHECK(d2.norm.at("ic").mean == d.norm.at("ic").mean);
    CHECK(d2.norm.at("ic").stddev == d.norm.at("ic").stddev);
    CHECK(d2.norm.at("i").mean == d.norm.at("i").mean);
    fs::remove_all(copy);
}

TEST_CASE("cli smoke: train, construct, estimate, eval, flops, finetune") {
    SmokeEnv& e = env();
    std::string data = (e.root / "data").string();

    // tiny unet run: correctness of the plumbing, not accuracy
    cli::TrainOptions t;
    t.data_dir = data;
    t.preset = "unet";
    t.out_dir = (e.root / "run_unet").string();
    t.batch_size = 8;
    t.patience = 2;
    t.max_epochs = 2;
    t.seed = 11;
    CHECK(cli::cmd_train(t) == 0);
    std::string unet_ckpt = (e.root / "run_unet/unet.ckpt").string();
    CHECK(fs::exists(unet_ckpt));
    CHECK(fs::exists(e.root / "run_unet/history.csv"));
    CHECK(fs::exists(e.root / "run_unet/manifest.json"));
    CHECK(read_json(e.root / "run_unet/report.json").contains("test_mean_curve_error"));

    // conv-net on top of it
    cli::TrainOptions tc = t;
    tc.preset = "conv-net";
    tc.from_checkpoint = unet_ckpt;
    tc.out_dir = (e.root / "run_conv").string();
    CHECK(cli::cmd_train(tc) == 0);
    std::string conv_ckpt = (e.root / "run_conv/conv-net.ckpt").string();
    CHECK(fs::exists(conv_ckpt));

    // feature regressor
    cli::TrainOptions tr = t;
    tr.preset = "feature-regressor";
    tr.from_checkpoint = unet_ckpt;
    tr.out_dir = (e.root / "run_reg").string();
    CHECK(cli::cmd_train(tr) == 0);
    std::string reg = (e.root / "run_reg/regressor.json").string();
    CHECK(fs::exists(reg));

    // construct on one test profile, with truth
    const SampleMeta* test_sample = nullptr;
    for (const SampleMeta& s : e.idx.samples)
        if (s.split == "test") {
            test_sample = &s;
            break;
        }
    REQUIRE(test_sample);
    cli::ConstructOptions c;
    c.checkpoint = unet_ckpt;
    c.profile = (e.root / "data" / test_sample->profile_file).string();
    c.truth = (e.root / "data" / test_sample->truth_file).string();
    c.out_dir = (e.root / "run_construct").string();
    CHECK(cli::cmd_construct(c) == 0);
    CHECK(fs::exists(e.root / "run_construct/vic_curve.csv"));
    CHECK(read_json(e.root / "run_construct/error.json").contains("curve_error"));

    // estimate via both routes
    cli::EstimateOptions est;
    est.route = "features";
    est.checkpoint = unet_ckpt;
    est.regressor = reg;
    est.profile = c.profile;
    est.out_file = (e.root / "soh_features.json").string();
    CHECK(cli::cmd_estimate(est) == 0);
    double soh_f = read_json(est.out_file).at("soh").get<double>();
    CHECK(soh_f >= 0.0);
    CHECK(soh_f <= 1.0);

    est.route = "direct";
    est.checkpoint = conv_ckpt;
    est.out_file = (e.root / "soh_direct.json").string();
    CHECK(cli::cmd_estimate(est) == 0);
    double soh_d = read_json(est.out_file).at("soh").get<double>();
    CHECK(soh_d > 0.0);
    CHECK(soh_d < 1.0);

    // eval all three routes
    cli::EvalOptions ev;
    ev.data_dir = data;
    ev.route = "curves";
    ev.checkpoint = unet_ckpt;
    ev.out_dir = (e.root / "eval_curves").string();
    CHECK(cli::cmd_eval(ev) == 0);
    CHECK(fs::exists(e.root / "eval_curves/report.json"));
    CHECK(fs::exists(e.root / "eval_curves/histogram.csv"));
    CHECK(fs::exists(e.root / "eval_curves/categories.csv"));
    CHECK(fs::exists(e.root / "eval_curves/residuals.csv"));

    // quartile categories hold n/4 +-1 samples each; representative curve
    // pairs exist for every category
    {
        std::ifstream cf(e.root / "eval_curves/categories.csv");
        std::string header, line;
        std::getline(cf, header);
        std::size_t n_test = 0;
        for (const SampleMeta& s : e.idx.samples)
            if (s.split == "test") ++n_test;
        int rows = 0;
        while (std::getline(cf, line)) {
            char cat[8], rep_id[64];
            double lo, hi, mean, rep_err;
            std::size_t count;
            REQUIRE(std::sscanf(line.c_str(), "%7[^,],%lf,%lf,%zu,%lf,%63[^,],%lf", cat, &lo, &hi, &count, &mean,
                                rep_id, &rep_err) == 7);
            CHECK(std::abs(static_cast<double>(count) - n_test / 4.0) <= 1.0);
            ++rows;
        }
        CHECK(rows == 4);
        for (const char* name : {"A", "B", "C", "D"}) {
            CHECK(fs::exists(e.root / ("eval_curves/category_" + std::string(name) + "_virtual.csv")));
            CHECK(fs::exists(e.root / ("eval_curves/category_" + std::string(name) + "_actual.csv")));
        }
    }

    ev.route = "features";
    ev.regressor = reg;
    ev.out_dir = (e.root / "eval_features").string();
    CHECK(cli::cmd_eval(ev) == 0);
    CHECK(read_json(e.root / "eval_features/report.json").contains("rmse"));

    ev.route = "direct";
    ev.checkpoint = conv_ckpt;
    ev.regressor.clear();
    ev.out_dir = (e.root / "eval_direct").string();
    CHECK(cli::cmd_eval(ev) == 0);

    // fixed-range harness runs without retraining
    ev.route = "curves";
    ev.checkpoint = unet_ckpt;
    ev.fixed_range = "0.40:0.80";
    ev.out_dir = (e.root / "eval_medium").string();
    CHECK(cli::cmd_eval(ev) == 0);
    CHECK(read_json(e.root / "eval_medium/report.json").at("fixed_range") == "0.40:0.80");

    // flops table
    CHECK(cli::cmd_flops("") == 0);
    CHECK(cli::cmd_flops("mobile-unet") == 0);
    CHECK_THROWS_AS(cli::cmd_flops("nope"), ConfigError);

    // finetune on a second tiny dataset with different ocv and protocols
    DatagenConfig cfg2 = e.cfg;
    cfg2.seed = 99;
    cfg2.protocol_set = "alternate";
    cfg2.base_ocv.components[0].center_v = 3.46;
    cfg2.base_ocv.components[1].center_v = 3.60;
    generate_dataset(cfg2, (e.root / "data2").string());
    cli::FinetuneOptions ft;
    ft.checkpoint = unet_ckpt;
    ft.data_dir = (e.root / "data2").string();
    ft.out_dir = (e.root / "run_ft").string();
    ft.batch_size = 8;
    ft.patience = 2;
    ft.max_epochs = 2;
    CHECK(cli::cmd_finetune(ft) == 0);
    nlohmann::json cmp = read_json(e.root / "run_ft/comparison.json");
    CHECK(cmp.contains("baseline_error"));
    CHECK(cmp.contains("finetuned_error"));

    // non-listed layers are bit-identical after fine-tuning
    nn::Checkpoint src = nn::load_checkpoint(unet_ckpt);
    nn::Checkpoint tuned = nn::load_checkpoint((e.root / "run_ft/finetuned.ckpt").string());
    std::vector<std::string> listed = fine_tune_preset(src.graph);
    for (std::size_t i = 0; i < src.params.tensors.size(); ++i) {
        const auto& a = src.params.tensors[i];
        const auto& b = tuned.params.tensors[i];
        bool in_list = false;
        for (const std::string& l : listed)
            if (a.name.rfind(l + ".", 0) == 0) in_list = true;
        if (!in_list && !a.statistic) CHECK(a.value == b.value);
    }
}

TEST_CASE("window check rejects undersized profiles through the cli surface") {
    SmokeEnv& e = env();
    // synthesize a tiny profile: 5 Ah transferred, far below the 33.28 Ah floor
    ChargingProfile p;
    for (int i = 0; i <= 200; ++i) {
        p.t_s.push_back(i);
        p.current_a.push_back(90.0);
        p.voltage_v.push_back(3.4 + 1e-4 * i);
    }
    fs::path prof = e.root / "small.csv";
    write_profile_csv(p, prof.string());

    cli::ConstructOptions c;
    c.checkpoint = (e.root / "run_unet/unet.ckpt").string();
    c.profile = prof.string();
    c.out_dir = (e.root / "run_construct_small").string();
    CHECK_THROWS_AS(cli::cmd_construct(c), WindowError);
}

TEST_CASE("training reruns from the manifest are byte-identical") {
    SmokeEnv& e = env();
    cli::TrainOptions t = cli::train_options_from_json(read_json(e.root / "run_unet/manifest.json").at("config"));
    t.out_dir = (e.root / "run_unet_again").string();
    CHECK(cli::cmd_train(t) == 0);
    CHECK(fnv64_file((e.root / "run_unet/unet.ckpt").string()) ==
          fnv64_file((e.root / "run_unet_again/unet.ckpt").string()));
    CHECK(fnv64_file((e.root / "run_unet/history.csv").string()) ==
          fnv64_file((e.root / "run_unet_again/history.csv").string()));
}

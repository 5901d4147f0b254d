#include "vicnet/soh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vicnet/nn/network.hpp"

namespace vicnet {

namespace {

// dense symmetric solve, k <= 3 in practice
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        if (std::abs(a[k][k]) < 1e-300) throw NumericError("ridge: singular normal equations");
        for (std::size_t i = k + 1; i < n; ++i) {
            double f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= a[ii][j] * x[j];
        x[ii] = s / a[ii][ii];
    }
    return x;
}

} // namespace

double FeatureRegressor::predict(const std::vector<double>& raw_features) const {
    if (raw_features.size() != weights.size()) throw ShapeError("regressor: feature count mismatch");
    double y = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) {
        const nn::NormEntry& s = feature_norm.at(feature_ids[j]);
        y += weights[j] * (raw_features[j] - s.mean) / s.stddev;
    }
    return std::clamp(y, 0.0, 1.0);
}

FeatureRegressor fit_feature_regressor(const std::vector<std::vector<double>>& features,
                                       const std::vector<double>& soh_labels, double ridge,
                                       std::vector<std::string> feature_ids) {
    std::size_t n = features.size();
    if (n < 2 || soh_labels.size() != n) throw DataError("ridge: need >= 2 matched samples");
    std::size_t k = feature_ids.size();
    for (const auto& row : features) {
        if (row.size() != k) throw ShapeError("ridge: ragged feature matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw DataError("ridge: non-finite feature");
    }
    if (ridge < 0.0) throw ConfigError("ridge: strength must be >= 0");

    FeatureRegressor r;
    r.feature_ids = std::move(feature_ids);
    r.ridge = ridge;

    // standardize each feature column
    for (std::size_t j = 0; j < k; ++j) {
        double mean = 0.0;
        for (const auto& row : features) mean += row[j];
        mean /= static_cast<double>(n);
        double sq = 0.0;
        for (const auto& row : features) sq += (row[j] - mean) * (row[j] - mean);
        double sd = std::sqrt(sq / static_cast<double>(n));
        if (sd <= 0.0) throw DataError("ridge: degenerate feature '" + r.feature_ids[j] + "'");
        r.feature_norm[r.feature_ids[j]] = {mean, sd};
    }

    // normal equations on standardized features with an intercept column
    // (intercept not penalized)
    std::vector<std::vector<double>> a(k + 1, std::vector<double>(k + 1, 0.0));
    std::vector<double> b(k + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> z(k + 1, 1.0);
        for (std::size_t j = 0; j < k; ++j) {
            const nn::NormEntry& s = r.feature_norm.at(r.feature_ids[j]);
            z[j] = (features[i][j] - s.mean) / s.stddev;
        }
        for (std::size_t p = 0; p <= k; ++p) {
            b[p] += z[p] * soh_labels[i];
            for (std::size_t q = 0; q <= k; ++q) a[p][q] += z[p] * z[q];
        }
    }
    for (std::size_t j = 0; j < k; ++j) a[j][j] += ridge * static_cast<double>(n);

    std::vector<double> x = solve_dense(std::move(a), std::move(b));
    r.weights.assign(x.begin(), x.begin() + static_cast<long>(k));
    r.intercept = x[k];
    return r;
}

nlohmann::json regressor_to_json(const FeatureRegressor& r) {
    nlohmann::json norm = nlohmann::json::object();
    for (const auto& [key, s] : r.feature_norm) norm[key] = {{"mean", s.mean}, {"std", s.stddev}};
    return {{"feature_ids", r.feature_ids},
            {"weights", r.weights},
            {"intercept", r.intercept},
            {"ridge", r.ridge},
            {"feature_norm", norm}};
}

FeatureRegressor regressor_from_json(const nlohmann::json& j) {
    FeatureRegressor r;
    r.feature_ids = j.at("feature_ids").get<std::vector<std::string>>();
    r.weights = j.at("weights").get<std::vector<double>>();
    r.intercept = j.at("intercept").get<double>();
    r.ridge = j.at("ridge").get<double>();
    for (auto it = j.at("feature_norm").begin(); it != j.at("feature_norm").end(); ++it)
        r.feature_norm[it.key()] = {it.value().at("mean").get<double>(), it.value().at("std").get<double>()};
    return r;
}

void save_regressor(const FeatureRegressor& r, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write regressor '" + path + "'");
    os << regressor_to_json(r).dump(2) << "\n";
}

FeatureRegressor load_regressor(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open regressor '" + path + "'");
    nlohmann::json j;
    is >> j;
    return regressor_from_json(j);
}

std::vector<double> feature_vector(const IcFeatures& f, const std::vector<std::string>& ids) {
    std::vector<double> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        if (id == "ic_ph")
            out.push_back(f.ic_ph);
        else if (id == "ic_pa1")
            out.push_back(f.ic_pa1);
        else if (id == "ic_pa2")
            out.push_back(f.ic_pa2);
        else if (id == "peak_voltage")
            out.push_back(f.peak_voltage);
        else
            throw ConfigError("unknown feature id '" + id + "'");
    }
    return out;
}

CurveTriple construct_virtual_curve(const PreprocessedInput& input, const nn::Checkpoint& curve_ckpt,
                                    nn::ParamStore& params) {
    int n_nn = curve_ckpt.graph.n_nn;
    if (static_cast<int>(input.current.size()) != n_nn) throw ShapeError("input length does not match the model");
    Tensor3 x(1, 2, n_nn);
    for (int k = 0; k < n_nn; ++k) {
        x.at(0, 0, k) = input.current[k];
        x.at(0, 1, k) = input.voltage[k];
    }
    Tensor3 y = nn::forward(curve_ckpt.graph, params, x, nn::Mode::eval);
    if (y.channels != 3) throw ShapeError("curve model must emit 3 channels");

    const nn::NormEntry& sq = curve_ckpt.norm.at("q_cc");
    const nn::NormEntry& sv = curve_ckpt.norm.at("v_cc");
    const nn::NormEntry& si = curve_ckpt.norm.at("ic");
    CurveTriple c;
    c.soc_initial = curve_ckpt.meta.value("out_soc_initial", 0.05);
    c.soc_final = curve_ckpt.meta.value("out_soc_final", 0.56);
    c.q_ah.resize(n_nn);
    c.v_v.resize(n_nn);
    c.ic_ah_per_v.resize(n_nn);
    for (int k = 0; k < n_nn; ++k) {
        c.q_ah[k] = y.at(0, 0, k) * sq.stddev + sq.mean;
        c.v_v[k] = y.at(0, 1, k) * sv.stddev + sv.mean;
        c.ic_ah_per_v[k] = y.at(0, 2, k) * si.stddev + si.mean;
    }
    return c;
}

double estimate_soh_via_curves(const PreprocessedInput& input, const nn::Checkpoint& curve_ckpt,
                               nn::ParamStore& params, const FeatureRegressor& regressor, const FeatureConfig& fc) {
    CurveTriple vic = construct_virtual_curve(input, curve_ckpt, params);
    IcFeatures f = extract_features(vic, fc);
    return regressor.predict(feature_vector(f, regressor.feature_ids));
}

double estimate_soh_direct(const PreprocessedInput& input, const nn::Checkpoint& soh_ckpt, nn::ParamStore& params) {
    int n_nn = soh_ckpt.graph.n_nn;
    if (static_cast<int>(input.current.size()) != n_nn) throw ShapeError("input length does not match the model");
    Tensor3 x(1, 2, n_nn);
    for (int k = 0; k < n_nn; ++k) {
        x.at(0, 0, k) = input.current[k];
        x.at(0, 1, k) = input.voltage[k];
    }
    Tensor3 y = nn::forward(soh_ckpt.graph, params, x, nn::Mode::eval);
    if (y.size() != 1) throw ShapeError("soh model must emit a scalar");
    return y.data[0];
}

double interpolated_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile of an empty set");
    std::sort(values.begin(), values.end());
    double h = q * static_cast<double>(values.size() - 1);
    std::size_t i = static_cast<std::size_t>(std::floor(h));
    if (i + 1 >= values.size()) return values.back();
    double frac = h - static_cast<double>(i);
    return values[i] + frac * (values[i + 1] - values[i]);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json buckets = nlohmann::json::array();
    for (const SpanBucket& b : by_span)
        buckets.push_back({{"label", b.label}, {"count", b.count}, {"rmse", b.rmse}});
    return {{"rmse", rmse}, {"p997_abs_err", p997_abs_err}, {"n", residuals.size()}, {"by_span", buckets}};
}

EvalReport evaluate(const std::vector<double>& predictions, const std::vector<double>& labels,
                    const std::vector<double>& spans) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw DataError("evaluate: empty or mismatched prediction/label sets");
    EvalReport rep;
    rep.residuals.resize(predictions.size());
    double sq = 0.0;
    std::vector<double> abs_res(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double r = predictions[i] - labels[i];
        rep.residuals[i] = r;
        abs_res[i] = std::abs(r);
        sq += r * r;
    }
    rep.rmse = std::sqrt(sq / static_cast<double>(predictions.size()));
    rep.p997_abs_err = interpolated_quantile(abs_res, 0.997);

    if (spans.size() == predictions.size()) {
        struct Edge {
            const char* label;
            double lo, hi;
        };
        const Edge edges[] = {{"span_0.20_0.30", 0.20, 0.30},
                              {"span_0.30_0.45", 0.30, 0.45},
                              {"span_0.45_0.60", 0.45, 0.60},
                              {"span_0.60_plus", 0.60, 10.0}};
        for (const Edge& e : edges) {
            SpanBucket b;
            b.label = e.label;
            double s = 0.0;
            for (std::size_t i = 0; i < spans.size(); ++i) {
                if (spans[i] >= e.lo && spans[i] < e.hi) {
                    s += rep.residuals[i] * rep.residuals[i];
                    ++b.count;
                }
            }
            b.rmse = b.count ? std::sqrt(s / static_cast<double>(b.count)) : 0.0;
            rep.by_span.push_back(b);
        }
    }
    return rep;
}

} // namespace vicnet

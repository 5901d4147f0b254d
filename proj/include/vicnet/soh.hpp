#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "vicnet/ica.hpp"
#include "vicnet/nn/checkpoint.hpp"
#include "vicnet/preprocess.hpp"

namespace vicnet {

// Ridge regression from standardized IC features to SOH, closed form.
struct FeatureRegressor {
    std::vector<std::string> feature_ids{"ic_pa1", "ic_pa2"};
    std::vector<double> weights;
    double intercept = 0.0;
    double ridge = 1e-4;
    nn::NormMap feature_norm;

    double predict(const std::vector<double>& raw_features) const; // clamped to [0, 1]
};

FeatureRegressor fit_feature_regressor(const std::vector<std::vector<double>>& features,
                                       const std::vector<double>& soh_labels, double ridge,
                                       std::vector<std::string> feature_ids = {"ic_pa1", "ic_pa2"});

nlohmann::json regressor_to_json(const FeatureRegressor& r);
FeatureRegressor regressor_from_json(const nlohmann::json& j);
void save_regressor(const FeatureRegressor& r, const std::string& path);
FeatureRegressor load_regressor(const std::string& path);

std::vector<double> feature_vector(const IcFeatures& f, const std::vector<std::string>& ids);

// Algorithm-1 output for one preprocessed input: forward the curve model and
// destandardize into physical units. The q channel of the prediction is the
// network's own estimate and is not exactly uniform.
CurveTriple construct_virtual_curve(const PreprocessedInput& input, const nn::Checkpoint& curve_ckpt,
                                    nn::ParamStore& params);

// feature route: virtual curve -> IC features -> ridge regression
double estimate_soh_via_curves(const PreprocessedInput& input, const nn::Checkpoint& curve_ckpt,
                               nn::ParamStore& params, const FeatureRegressor& regressor, const FeatureConfig& fc);

// direct route: one forward pass of a SOH head
double estimate_soh_direct(const PreprocessedInput& input, const nn::Checkpoint& soh_ckpt, nn::ParamStore& params);

struct SpanBucket {
    std::string label;
    std::size_t count = 0;
    double rmse = 0.0;
};

struct EvalReport {
    double rmse = 0.0;
    double p997_abs_err = 0.0; // 99.7th percentile of |residual|, interpolated
    std::vector<double> residuals;
    std::vector<SpanBucket> by_span;

    nlohmann::json to_json() const;
};

// spans may be empty; when given they feed the per-SOC-range breakdown
EvalReport evaluate(const std::vector<double>& predictions, const std::vector<double>& labels,
                    const std::vector<double>& spans = {});

// linear interpolation between order statistics
double interpolated_quantile(std::vector<double> values, double q);

} // namespace vicnet

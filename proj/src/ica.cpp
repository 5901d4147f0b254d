#include "vicnet/ica.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vicnet/spline.hpp"

namespace vicnet {

void CurveTriple::validate() const {
    std::size_t n = q_ah.size();
    if (n < 2 || v_v.size() != n || ic_ah_per_v.size() != n) throw DataError("curve triple: length mismatch");
    double step = (q_ah.back() - q_ah.front()) / static_cast<double>(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs((q_ah[i] - q_ah[i - 1]) - step) > 1e-9) throw DataError("curve triple: q grid not uniform");
        if (v_v[i] < v_v[i - 1]) throw DataError("curve triple: voltage not nondecreasing");
    }
    for (double ic : ic_ah_per_v)
        if (ic <= 0.0) throw DataError("curve triple: non-positive incremental capacity");
}

CurveTriple ic_from_cc(const ChargeDomainProfile& cc, const SmoothingConfig& smoothing, const OutputGridConfig& grid) {
    if (cc.dq_ah.size() < 8) throw DataError("ic_from_cc: profile too short");

    // the method is defined for constant-current charging only
    double mean_i = 0.0;
    for (double i : cc.current_a) mean_i += i;
    mean_i /= static_cast<double>(cc.current_a.size());
    double var_i = 0.0;
    for (double i : cc.current_a) var_i += (i - mean_i) * (i - mean_i);
    var_i /= static_cast<double>(cc.current_a.size());
    if (mean_i <= 0.0 || std::sqrt(var_i) / mean_i > 0.01)
        throw DataError("ic_from_cc: current is not constant (coefficient of variation > 1%)");

    SmoothingSpline spline = smoothing.fixed_lambda
                                 ? SmoothingSpline::fit(cc.dq_ah, cc.voltage_v, *smoothing.fixed_lambda)
                                 : SmoothingSpline::fit_cv(cc.dq_ah, cc.voltage_v, smoothing.cv_folds);

    if (grid.n_points < 2 || grid.soc_final <= grid.soc_initial)
        throw ConfigError("ic_from_cc: bad output grid");

    CurveTriple out;
    out.soc_initial = grid.soc_initial;
    out.soc_final = grid.soc_final;
    out.q_ah.resize(grid.n_points);
    out.v_v.resize(grid.n_points);
    out.ic_ah_per_v.resize(grid.n_points);

    double soc_step = (grid.soc_final - grid.soc_initial) / static_cast<double>(grid.n_points - 1);
    for (int k = 0; k < grid.n_points; ++k) {
        double soc = grid.soc_initial + soc_step * static_cast<double>(k);
        double dq = (soc - grid.profile_soc_start) * grid.capacity_ah; // charge since the profile start
        if (dq < -1e-9 || dq > cc.total_charge_ah + 1e-9)
            throw RangeError("ic_from_cc: output SOC range [" + std::to_string(grid.soc_initial) + ", " +
                             std::to_string(grid.soc_final) + "] not covered by the profile");
        out.q_ah[k] = soc_step * grid.capacity_ah * static_cast<double>(k);
        out.v_v[k] = spline.value(dq);
        double dvdq = spline.derivative(dq);
        if (dvdq <= 0.0) throw DataError("ic_from_cc: smoothed voltage not strictly increasing");
        out.ic_ah_per_v[k] = 1.0 / dvdq;
    }
    return out;
}

std::vector<double> dv_from_ic(const CurveTriple& curve) {
    std::vector<double> dv(curve.ic_ah_per_v.size());
    for (std::size_t i = 0; i < dv.size(); ++i) {
        if (curve.ic_ah_per_v[i] <= 0.0) throw NumericError("dv_from_ic: non-positive incremental capacity");
        dv[i] = 1.0 / curve.ic_ah_per_v[i];
    }
    return dv;
}

namespace {

double interp_ic(const CurveTriple& c, std::size_t seg, double v) {
    double v0 = c.v_v[seg], v1 = c.v_v[seg + 1];
    if (v1 <= v0) return c.ic_ah_per_v[seg];
    double w = (v - v0) / (v1 - v0);
    return c.ic_ah_per_v[seg] + w * (c.ic_ah_per_v[seg + 1] - c.ic_ah_per_v[seg]);
}

// integral of max(ic(v) - cutoff, 0) over [lo, hi]; the IC curve is treated as
// piecewise linear in v, and cutoff crossings are integrated exactly
double clipped_area(const CurveTriple& c, double lo, double hi, double cutoff) {
    double area = 0.0;
    for (std::size_t seg = 0; seg + 1 < c.size(); ++seg) {
        double a = std::max(lo, c.v_v[seg]);
        double b = std::min(hi, c.v_v[seg + 1]);
        if (b <= a) continue;
        double ya = interp_ic(c, seg, a) - cutoff;
        double yb = interp_ic(c, seg, b) - cutoff;
        if (ya >= 0.0 && yb >= 0.0) {
            area += 0.5 * (ya + yb) * (b - a);
        } else if (ya < 0.0 && yb < 0.0) {
            continue;
        } else {
            double cross = a + (b - a) * (0.0 - ya) / (yb - ya);
            if (ya >= 0.0)
                area += 0.5 * ya * (cross - a);
            else
                area += 0.5 * yb * (b - cross);
        }
    }
    return area;
}

} // namespace

IcFeatures extract_features(const CurveTriple& curve, const FeatureConfig& cfg) {
    if (curve.size() < 2) throw DataError("extract_features: curve too short");
    // use the value range rather than the endpoints so constructed (possibly
    // locally disordered) curves are still searchable
    auto [vmin_it, vmax_it] = std::minmax_element(curve.v_v.begin(), curve.v_v.end());
    double v_lo = std::max(cfg.window_v_lo, *vmin_it);
    double v_hi = std::min(cfg.window_v_hi, *vmax_it);
    if (v_hi < v_lo) throw RangeError("extract_features: peak window does not intersect the curve");

    IcFeatures f;
    f.ic_ph = -1.0;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        double v = curve.v_v[i];
        if (v < v_lo || v > v_hi) continue;
        if (curve.ic_ah_per_v[i] > f.ic_ph) { // strict: ties resolve toward lower voltage
            f.ic_ph = curve.ic_ah_per_v[i];
            f.peak_voltage = v;
        }
    }
    if (f.ic_ph < 0.0) throw RangeError("extract_features: no grid point inside the peak window");

    f.ic_pa1 = clipped_area(curve, f.peak_voltage - cfg.pa1_halfwidth_v, f.peak_voltage + cfg.pa1_halfwidth_v, 0.0);
    f.ic_pa2 = clipped_area(curve, curve.v_v.front(), curve.v_v.back(), cfg.pa2_cutoff);
    return f;
}

double curve_error(const CurveTriple& pred, const CurveTriple& truth, const nn::NormMap& norm) {
    std::size_t n = truth.size();
    if (pred.size() != n || n == 0) throw ShapeError("curve_error: length mismatch");
    const nn::NormEntry& sq = norm.at("q_cc");
    const nn::NormEntry& sv = norm.at("v_cc");
    const nn::NormEntry& si = norm.at("ic");
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double dq = (pred.q_ah[k] - truth.q_ah[k]) / sq.stddev;
        double dv = (pred.v_v[k] - truth.v_v[k]) / sv.stddev;
        double di = (pred.ic_ah_per_v[k] - truth.ic_ah_per_v[k]) / si.stddev;
        sum += dq * dq + dv * dv + di * di;
    }
    return sum / static_cast<double>(n);
}

void write_curve_csv(const CurveTriple& curve, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write curve '" + path + "'");
    std::fputs("q_ah,v_v,ic_ah_per_v\n", f);
    for (std::size_t i = 0; i < curve.size(); ++i)
        std::fprintf(f, "%.17g,%.17g,%.17g\n", curve.q_ah[i], curve.v_v[i], curve.ic_ah_per_v[i]);
    std::fclose(f);
}

CurveTriple read_curve_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open curve '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != "q_ah,v_v,ic_ah_per_v")
        throw DataError("curve '" + path + "': unexpected header");
    CurveTriple c;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        double col[3];
        const char* ptr = line.data();
        const char* end = line.data() + line.size();
        for (int k = 0; k < 3; ++k) {
            auto [next, ec] = std::from_chars(ptr, end, col[k]);
            if (ec != std::errc()) throw DataError("curve '" + path + "': bad row '" + line + "'");
            ptr = next;
            if (k < 2) ++ptr; // skip comma
        }
        c.q_ah.push_back(col[0]);
        c.v_v.push_back(col[1]);
        c.ic_ah_per_v.push_back(col[2]);
    }
    return c;
}

} // namespace vicnet

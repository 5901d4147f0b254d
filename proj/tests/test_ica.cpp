#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "vicnet/battery_sim.hpp"
#include "vicnet/ica.hpp"
#include "vicnet/spline.hpp"

using namespace vicnet;

namespace {

nn::NormMap unit_norm() {
    return {{"q_cc", {0.0, 1.0}}, {"v_cc", {0.0, 1.0}}, {"ic", {0.0, 1.0}}};
}

// piecewise-linear IC pulse over v for the feature geometry cases
CurveTriple synthetic_curve(const std::vector<double>& v, const std::vector<double>& ic) {
    CurveTriple c;
    c.v_v = v;
    c.ic_ah_per_v = ic;
    c.q_ah.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) c.q_ah[i] = static_cast<double>(i); // even grid
    return c;
}

} // namespace

TEST_CASE("smoothing spline recovers polynomials") {
    std::vector<double> x, y;
    for (int i = 0; i <= 200; ++i) {
        double t = static_cast<double>(i) / 200.0 * 4.0;
        x.push_back(t);
        y.push_back(0.5 + 0.3 * t);
    }
    SUBCASE("a line is reproduced for any lambda, derivative exact") {
        for (double lambda : {1e-12, 1e-6, 1e-2}) {
            SmoothingSpline s = SmoothingSpline::fit(x, y, lambda);
            for (double t : {0.0, 0.7, 2.22, 4.0}) {
                CHECK(s.value(t) == doctest::Approx(0.5 + 0.3 * t).epsilon(1e-9));
                CHECK(s.derivative(t) == doctest::Approx(0.3).epsilon(1e-9));
            }
        }
    }
    SUBCASE("cubic data: cross-validated fit tracks the analytic derivative") {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double t = x[i];
            y[i] = 1.0 + 0.2 * t + 0.05 * t * t - 0.004 * t * t * t;
        }
        SmoothingSpline s = SmoothingSpline::fit_cv(x, y);
        for (double t = 0.2; t < 3.9; t += 0.1) {
            double dy = 0.2 + 0.1 * t - 0.012 * t * t;
            CHECK(s.derivative(t) == doctest::Approx(dy).epsilon(5e-3));
        }
    }
    SUBCASE("noisy sine: cv smoothing beats interpolation on the derivative") {
        Rng rng(77);
        std::vector<double> yn(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) yn[i] = std::sin(x[i]) + rng.normal(0.0, 0.01);
        SmoothingSpline cv = SmoothingSpline::fit_cv(x, yn);
        SmoothingSpline interp = SmoothingSpline::fit(x, yn, 1e-14);
        double err_cv = 0.0, err_in = 0.0;
        int n = 0;
        for (double t = 0.3; t < 3.7; t += 0.05) {
            err_cv += std::abs(cv.derivative(t) - std::cos(t));
            err_in += std::abs(interp.derivative(t) - std::cos(t));
            ++n;
        }
        CHECK(err_cv / n < err_in / n);
        CHECK(err_cv / n < 0.05);
    }
    SUBCASE("non-increasing x rejected") {
        CHECK_THROWS_AS(SmoothingSpline::fit({0.0, 1.0, 1.0}, {0.0, 1.0, 2.0}, 1e-6), DataError);
    }
}

TEST_CASE("ic_from_cc on a linear voltage ramp gives constant IC") {
    // V(Q) = V0 + alpha Q  =>  IC = 1/alpha everywhere
    double alpha = 0.004, v0 = 3.3;
    ChargeDomainProfile cc;
    for (int i = 0; i <= 4000; ++i) {
        double q = 0.05 * i; // 0..200 Ah
        cc.dq_ah.push_back(q);
        cc.current_a.push_back(83.2);
        cc.voltage_v.push_back(v0 + alpha * q);
    }
    cc.total_charge_ah = cc.dq_ah.back();

    OutputGridConfig grid;
    grid.n_points = 128;
    grid.profile_soc_start = 0.0;
    grid.capacity_ah = 208.0;
    CurveTriple c = ic_from_cc(cc, {}, grid);
    c.validate();
    for (double ic : c.ic_ah_per_v) CHECK(ic == doctest::Approx(1.0 / alpha).epsilon(1e-5));
    CHECK(c.q_ah.front() == 0.0);
    CHECK(c.q_ah.back() == doctest::Approx(0.51 * 208.0).epsilon(1e-9));
}

TEST_CASE("ic_from_cc matches the analytic oracle on a noiseless simulated charge") {
    ModuleModel model;
    model.soh = 0.92;
    Rng rng(123);
    SimNoise no_noise;
    double i_ref = 0.4 * model.c_fresh_ah;
    ChargingProfile p = simulate_charge(model, ref_cc_protocol(), 0.02, 0.98, 1.0, no_noise, rng);
    ChargeDomainProfile cc = coulomb_count(p);

    OutputGridConfig grid;
    grid.n_points = 128;
    grid.profile_soc_start = 0.02;
    grid.capacity_ah = model.capacity_ah();
    CurveTriple fitted = ic_from_cc(cc, {}, grid);
    CurveTriple truth = analytic_ic(model, i_ref, grid);

    fitted.validate();
    truth.validate();

    // sup-norm within 2% on the interior 90% of the range
    double peak = *std::max_element(truth.ic_ah_per_v.begin(), truth.ic_ah_per_v.end());
    int lo = 128 / 20, hi = 128 - 128 / 20;
    double worst = 0.0;
    for (int k = lo; k < hi; ++k)
        worst = std::max(worst, std::abs(fitted.ic_ah_per_v[k] - truth.ic_ah_per_v[k]) / peak);
    CHECK(worst < 0.02);
    for (int k = lo; k < hi; ++k)
        CHECK(fitted.v_v[k] == doctest::Approx(truth.v_v[k]).epsilon(2e-4));

    // detected peak location agrees within one grid step
    FeatureConfig fc;
    IcFeatures ff = extract_features(fitted, fc);
    IcFeatures ft = extract_features(truth, fc);
    double v_step = (truth.v_v.back() - truth.v_v.front()) / 127.0 * 4.0; // local spacing bound
    CHECK(std::abs(ff.peak_voltage - ft.peak_voltage) <= v_step);
}

TEST_CASE("ic_from_cc rejects non-CC profiles") {
    ChargeDomainProfile cc;
    for (int i = 0; i <= 100; ++i) {
        cc.dq_ah.push_back(static_cast<double>(i));
        cc.current_a.push_back(i < 50 ? 100.0 : 50.0); // two-stage current
        cc.voltage_v.push_back(3.0 + 0.002 * i);
    }
    cc.total_charge_ah = 100.0;
    OutputGridConfig grid;
    grid.profile_soc_start = 0.0;
    grid.capacity_ah = 150.0;
    CHECK_THROWS_AS(ic_from_cc(cc, {}, grid), DataError);
}

TEST_CASE("ic_from_cc rejects an uncovered output range") {
    ChargeDomainProfile cc;
    for (int i = 0; i <= 100; ++i) {
        cc.dq_ah.push_back(0.2 * i); // only 20 Ah
        cc.current_a.push_back(80.0);
        cc.voltage_v.push_back(3.0 + 0.01 * i);
    }
    cc.total_charge_ah = 20.0;
    OutputGridConfig grid; // needs (0.56-0.20)*208 Ah from soc 0.20
    grid.profile_soc_start = 0.20;
    grid.capacity_ah = 208.0;
    CHECK_THROWS_AS(ic_from_cc(cc, {}, grid), RangeError);
}

TEST_CASE("dv is the elementwise reciprocal of ic") {
    CurveTriple c = synthetic_curve({3.0, 3.1, 3.2}, {2.0, 4.0, 5.0});
    std::vector<double> dv = dv_from_ic(c);
    CHECK(dv == std::vector<double>{0.5, 0.25, 0.2});

    // applying the reciprocal twice restores ic
    CurveTriple c2 = c;
    c2.ic_ah_per_v = dv;
    std::vector<double> back = dv_from_ic(c2);
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == doctest::Approx(c.ic_ah_per_v[i]).epsilon(1e-12));

    c.ic_ah_per_v[1] = 0.0;
    CHECK_THROWS_AS(dv_from_ic(c), NumericError);
}

TEST_CASE("feature extraction geometry") {
    SUBCASE("rectangular pulse: ph = h, pa1 = pa2 = area when cutoff 0 and window covers it") {
        double h = 10.0, w = 0.04; // half-width
        CurveTriple c = synthetic_curve({3.0, 3.4999, 3.50, 3.58, 3.5801, 4.0},
                                        {0.0, 0.0, h, h, 0.0, 0.0});
        FeatureConfig cfg;
        cfg.pa1_halfwidth_v = w;
        cfg.pa2_cutoff = 0.0;
        IcFeatures f = extract_features(c, cfg);
        CHECK(f.ic_ph == doctest::Approx(h));
        CHECK(f.peak_voltage == doctest::Approx(3.50)); // tie toward lower voltage
        CHECK(f.ic_pa1 == doctest::Approx(h * w + 0.5 * h * 1e-4).epsilon(1e-3)); // window [3.46, 3.54]
        // full rectangle plus the two 1e-4-wide ramps
        CHECK(f.ic_pa2 == doctest::Approx(h * 0.08 + h * 1e-4).epsilon(1e-6));
    }
    SUBCASE("cutoff above the maximum zeroes pa2") {
        CurveTriple c = synthetic_curve({3.0, 3.5, 4.0}, {1.0, 5.0, 1.0});
        FeatureConfig cfg;
        cfg.pa2_cutoff = 6.0;
        IcFeatures f = extract_features(c, cfg);
        CHECK(f.ic_pa2 == 0.0);
    }
    SUBCASE("triangular peak with cutoff h/2 keeps the top quarter") {
        // triangle base 0.2 V, height 8: area above cutoff 4 is (1/4) base h
        CurveTriple c = synthetic_curve({3.0, 3.4, 3.5, 3.6, 4.0}, {0.0, 0.0, 8.0, 0.0, 0.0});
        FeatureConfig cfg;
        cfg.pa2_cutoff = 4.0;
        IcFeatures f = extract_features(c, cfg);
        CHECK(f.ic_pa2 == doctest::Approx(0.25 * 0.2 * 8.0 / 2.0)); // half-base triangle: 0.5*0.1*4
    }
    SUBCASE("empty window intersection raises") {
        CurveTriple c = synthetic_curve({3.0, 3.5, 4.0}, {1.0, 2.0, 1.0});
        FeatureConfig cfg;
        cfg.window_v_lo = 5.0;
        cfg.window_v_hi = 6.0;
        CHECK_THROWS_AS(extract_features(c, cfg), RangeError);
    }
}

TEST_CASE("scaling covariance: charge scale multiplies ic and areas, peak voltage fixed") {
    ModuleModel model;
    OutputGridConfig grid;
    grid.capacity_ah = model.capacity_ah();
    CurveTriple base = analytic_ic(model, 83.2, grid);
    FeatureConfig cfg;
    cfg.pa2_cutoff = 100.0;
    IcFeatures f0 = extract_features(base, cfg);

    double scale = 1.7;
    CurveTriple scaled = base;
    for (double& q : scaled.q_ah) q *= scale;
    for (double& ic : scaled.ic_ah_per_v) ic *= scale;
    FeatureConfig cfg2 = cfg;
    cfg2.pa2_cutoff *= scale;
    IcFeatures f1 = extract_features(scaled, cfg2);
    CHECK(f1.ic_ph == doctest::Approx(scale * f0.ic_ph).epsilon(1e-12));
    CHECK(f1.ic_pa1 == doctest::Approx(scale * f0.ic_pa1).epsilon(1e-9));
    CHECK(f1.ic_pa2 == doctest::Approx(scale * f0.ic_pa2).epsilon(1e-9));
    CHECK(f1.peak_voltage == f0.peak_voltage);
}

TEST_CASE("charge conservation: integral of IC over V equals the q span") {
    ModuleModel model;
    model.soh = 0.9;
    OutputGridConfig grid;
    grid.capacity_ah = model.capacity_ah();
    CurveTriple c = analytic_ic(model, 83.2, grid);
    double integral = 0.0;
    for (std::size_t i = 1; i < c.size(); ++i)
        integral += 0.5 * (c.ic_ah_per_v[i] + c.ic_ah_per_v[i - 1]) * (c.v_v[i] - c.v_v[i - 1]);
    double span = c.q_ah.back() - c.q_ah.front();
    CHECK(integral == doctest::Approx(span).epsilon(0.01));
}

TEST_CASE("construction error metric (eq. 7 algebra)") {
    ModuleModel model;
    OutputGridConfig grid;
    grid.capacity_ah = model.capacity_ah();
    CurveTriple truth = analytic_ic(model, 83.2, grid);

    SUBCASE("identical curves give zero") {
        CHECK(curve_error(truth, truth, unit_norm()) == 0.0);
    }
    SUBCASE("+1 standardized offset in one channel gives 1") {
        CurveTriple pred = truth;
        for (double& v : pred.v_v) v += 1.0;
        CHECK(curve_error(pred, truth, unit_norm()) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("+1 in all three channels gives 3") {
        CurveTriple pred = truth;
        for (double& v : pred.v_v) v += 1.0;
        for (double& q : pred.q_ah) q += 1.0;
        for (double& ic : pred.ic_ah_per_v) ic += 1.0;
        CHECK(curve_error(pred, truth, unit_norm()) == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("stddev scaling of the norm map") {
        CurveTriple pred = truth;
        for (double& v : pred.v_v) v += 0.5;
        nn::NormMap norm = unit_norm();
        norm["v_cc"].stddev = 0.5;
        CHECK(curve_error(pred, truth, norm) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("length mismatch raises") {
        CurveTriple pred = truth;
        pred.q_ah.pop_back();
        pred.v_v.pop_back();
        pred.ic_ah_per_v.pop_back();
        CHECK_THROWS_AS(curve_error(pred, truth, unit_norm()), ShapeError);
    }
}

TEST_CASE("curve csv round trip") {
    ModuleModel model;
    OutputGridConfig grid;
    grid.n_points = 16;
    grid.capacity_ah = model.capacity_ah();
    CurveTriple c = analytic_ic(model, 83.2, grid);
    auto path = (std::filesystem::temp_directory_path() / "vicnet_curve.csv").string();
    write_curve_csv(c, path);
    CurveTriple back = read_curve_csv(path);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back.v_v[i] == doctest::Approx(c.v_v[i]).epsilon(1e-9));
        CHECK(back.ic_ah_per_v[i] == doctest::Approx(c.ic_ah_per_v[i]).epsilon(1e-9));
    }
    std::filesystem::remove(path);
}

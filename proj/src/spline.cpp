#include "vicnet/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vicnet {

namespace {

struct Normalized {
    std::vector<double> u, w;
    double x0, xs, y0, ys;
};

Normalized normalize(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DataError("spline: need >= 2 matched points");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] <= x[i - 1]) throw DataError("spline: x must be strictly increasing");
    Normalized n;
    n.x0 = x.front();
    n.xs = x.back() - x.front();
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double sq = 0.0;
    for (double v : y) sq += (v - mean) * (v - mean);
    double sd = std::sqrt(sq / static_cast<double>(y.size()));
    n.y0 = mean;
    n.ys = sd > 0.0 ? sd : 1.0;
    n.u.resize(x.size());
    n.w.resize(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        n.u[i] = (x[i] - n.x0) / n.xs;
        n.w[i] = (y[i] - n.y0) / n.ys;
    }
    return n;
}

// pentadiagonal LDL^T solve, in place: on entry d0/d1/d2 hold the diagonals of
// the SPD matrix A (main, +1, +2) and rhs the right-hand side; on exit d0 holds
// D, d1/d2 the unit-lower-triangular multipliers, rhs the solution
void solve_band2(std::vector<double>& d0, std::vector<double>& d1, std::vector<double>& d2, std::vector<double>& rhs) {
    std::size_t m = d0.size();
    for (std::size_t i = 0; i < m; ++i) {
        double di = d0[i];
        if (i >= 1) di -= d1[i - 1] * d1[i - 1] * d0[i - 1];
        if (i >= 2) di -= d2[i - 2] * d2[i - 2] * d0[i - 2];
        if (di <= 0.0) throw NumericError("spline: system not positive definite");
        d0[i] = di;
        if (i + 1 < m) {
            double v = d1[i];
            if (i >= 1 && i - 1 < d2.size()) v -= d2[i - 1] * d1[i - 1] * d0[i - 1];
            d1[i] = v / di;
        }
        if (i + 2 < m) d2[i] /= di;
    }
    // L z = rhs
    for (std::size_t i = 0; i < m; ++i) {
        if (i >= 1) rhs[i] -= d1[i - 1] * rhs[i - 1];
        if (i >= 2) rhs[i] -= d2[i - 2] * rhs[i - 2];
    }
    // D w = z
    for (std::size_t i = 0; i < m; ++i) rhs[i] /= d0[i];
    // L^T g = w
    for (std::size_t ii = m; ii-- > 0;) {
        if (ii + 1 < m) rhs[ii] -= d1[ii] * rhs[ii + 1];
        if (ii + 2 < m) rhs[ii] -= d2[ii] * rhs[ii + 2];
    }
}

} // namespace

SmoothingSpline SmoothingSpline::fit(const std::vector<double>& x, const std::vector<double>& y, double lambda) {
    Normalized n = normalize(x, y);
    std::size_t np = n.u.size();

    SmoothingSpline s;
    s.x0_ = n.x0;
    s.xs_ = n.xs;
    s.y0_ = n.y0;
    s.ys_ = n.ys;
    s.lambda_ = lambda;
    s.knots_ = n.u;
    s.second_.assign(np, 0.0);

    if (np == 2) {
        s.vals_ = n.w; // a line; nothing to smooth
        return s;
    }

    std::size_t m = np - 2;
    std::vector<double> h(np - 1);
    for (std::size_t i = 0; i + 1 < np; ++i) h[i] = n.u[i + 1] - n.u[i];

    // band of A = R + lambda Q^T Q and rhs = Q^T w
    std::vector<double> d0(m), d1(m > 1 ? m - 1 : 0), d2(m > 2 ? m - 2 : 0), rhs(m);
    for (std::size_t j = 0; j < m; ++j) {
        double inv_a = 1.0 / h[j];
        double inv_b = 1.0 / h[j + 1];
        double qjj = inv_a;
        double qj1 = -inv_a - inv_b;
        double qj2 = inv_b;
        d0[j] = (h[j] + h[j + 1]) / 3.0 + lambda * (qjj * qjj + qj1 * qj1 + qj2 * qj2);
        if (j + 1 < m) {
            double inv_c = 1.0 / h[j + 2];
            // overlap of columns j and j+1 at rows j+1 and j+2
            d1[j] = h[j + 1] / 6.0 + lambda * (qj1 * inv_b + qj2 * (-inv_b - inv_c));
        }
        if (j + 2 < m) d2[j] = lambda * inv_b * (1.0 / h[j + 2]);
        rhs[j] = (n.w[j + 2] - n.w[j + 1]) * inv_b - (n.w[j + 1] - n.w[j]) * inv_a;
    }

    solve_band2(d0, d1, d2, rhs); // rhs now holds gamma at interior knots

    s.vals_ = n.w;
    for (std::size_t j = 0; j < m; ++j) {
        double g = rhs[j];
        s.second_[j + 1] = g;
        s.vals_[j] -= lambda * g / h[j];
        s.vals_[j + 1] += lambda * g * (1.0 / h[j] + 1.0 / h[j + 1]);
        s.vals_[j + 2] -= lambda * g / h[j + 1];
    }
    return s;
}

SmoothingSpline SmoothingSpline::fit_cv(const std::vector<double>& x, const std::vector<double>& y, int folds) {
    if (folds < 2) throw ConfigError("spline cv: need >= 2 folds");
    std::size_t np = x.size();
    if (np < static_cast<std::size_t>(4 * folds)) {
        // too few points for a meaningful split; fall back to light smoothing
        return fit(x, y, 1e-10);
    }

    double best_lambda = 1e-14;
    double best_score = std::numeric_limits<double>::infinity();
    for (int e = -14; e <= -2; ++e) {
        double lambda = std::pow(10.0, e);
        double score = 0.0;
        std::size_t n_held = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<double> xf, yf;
            xf.reserve(np);
            yf.reserve(np);
            for (std::size_t i = 0; i < np; ++i) {
                // keep both endpoints in every training fold so held-out
                // points are interpolated, never extrapolated
                if (i == 0 || i + 1 == np || static_cast<int>(i % folds) != f) {
                    xf.push_back(x[i]);
                    yf.push_back(y[i]);
                }
            }
            SmoothingSpline s = fit(xf, yf, lambda);
            for (std::size_t i = 1; i + 1 < np; ++i) {
                if (static_cast<int>(i % folds) != f) continue;
                double r = s.value(x[i]) - y[i];
                score += r * r;
                ++n_held;
            }
        }
        score /= static_cast<double>(n_held);
        if (score < best_score) {
            best_score = score;
            best_lambda = lambda;
        }
    }
    return fit(x, y, best_lambda);
}

std::size_t SmoothingSpline::segment(double u) const {
    // index of the segment [knots_[i], knots_[i+1]) containing u, clamped
    if (u <= knots_.front()) return 0;
    if (u >= knots_.back()) return knots_.size() - 2;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), u);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

double SmoothingSpline::value(double x) const {
    double u = (x - x0_) / xs_;
    std::size_t i = segment(u);
    double h = knots_[i + 1] - knots_[i];
    double t = u - knots_[i];
    if (u < knots_.front()) {
        // natural spline: linear extrapolation below the first knot
        double b = (vals_[1] - vals_[0]) / h - h * (2.0 * second_[0] + second_[1]) / 6.0;
        return y0_ + ys_ * (vals_[0] + b * t);
    }
    if (u > knots_.back()) {
        std::size_t j = knots_.size() - 1;
        double hj = knots_[j] - knots_[j - 1];
        double b = (vals_[j] - vals_[j - 1]) / hj + hj * (second_[j - 1] + 2.0 * second_[j]) / 6.0;
        return y0_ + ys_ * (vals_[j] + b * (u - knots_[j]));
    }
    double c = second_[i] / 2.0;
    double d = (second_[i + 1] - second_[i]) / (6.0 * h);
    double b = (vals_[i + 1] - vals_[i]) / h - h * (2.0 * second_[i] + second_[i + 1]) / 6.0;
    return y0_ + ys_ * (vals_[i] + t * (b + t * (c + t * d)));
}

double SmoothingSpline::derivative(double x) const {
    double u = (x - x0_) / xs_;
    std::size_t i = segment(u);
    double h = knots_[i + 1] - knots_[i];
    double scale = ys_ / xs_;
    if (u < knots_.front()) {
        double b = (vals_[1] - vals_[0]) / h - h * (2.0 * second_[0] + second_[1]) / 6.0;
        return scale * b;
    }
    if (u > knots_.back()) {
        std::size_t j = knots_.size() - 1;
        double hj = knots_[j] - knots_[j - 1];
        double b = (vals_[j] - vals_[j - 1]) / hj + hj * (second_[j - 1] + 2.0 * second_[j]) / 6.0;
        return scale * b;
    }
    double t = u - knots_[i];
    double c = second_[i] / 2.0;
    double d = (second_[i + 1] - second_[i]) / (6.0 * h);
    double b = (vals_[i + 1] - vals_[i]) / h - h * (2.0 * second_[i] + second_[i + 1]) / 6.0;
    return scale * (b + t * (2.0 * c + t * 3.0 * d));
}

} // namespace vicnet

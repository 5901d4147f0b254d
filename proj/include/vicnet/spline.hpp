#pragma once

#include <vector>

#include "vicnet/errors.hpp"

namespace vicnet {

// Natural cubic smoothing spline minimizing
//   sum_i (y_i - f(x_i))^2 + lambda * integral f''(t)^2 dt
// solved with the classic banded formulation: (R + lambda Q^T Q) gamma = Q^T y,
// fitted values f = y - lambda Q gamma. Evaluation and the analytic first
// derivative come from the natural-spline representation (values + second
// derivatives at the knots). Inputs are normalized internally so lambda is
// scale-free; the reported lambda refers to the normalized domain.
class SmoothingSpline {
public:
    // x strictly increasing, size >= 2
    static SmoothingSpline fit(const std::vector<double>& x, const std::vector<double>& y, double lambda);

    // pick lambda by K-fold cross-validation on an interleaved split over a
    // log-spaced grid, then refit on all points
    static SmoothingSpline fit_cv(const std::vector<double>& x, const std::vector<double>& y, int folds = 5);

    double value(double x) const;
    double derivative(double x) const;
    double lambda() const { return lambda_; }

private:
    // normalized-domain representation
    std::vector<double> knots_;
    std::vector<double> vals_;
    std::vector<double> second_;
    double x0_ = 0.0, xs_ = 1.0, y0_ = 0.0, ys_ = 1.0;
    double lambda_ = 0.0;

    std::size_t segment(double u) const;
};

} // namespace vicnet

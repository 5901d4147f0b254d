#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vicnet/errors.hpp"

namespace vicnet {

// Dense batch x channels x length array, row-major with length fastest.
struct Tensor3 {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t b, std::size_t c, std::size_t l) : batch(b), channels(c), length(l), data(b * c * l, 0.0) {}

    std::size_t size() const { return batch * channels * length; }

    double& at(std::size_t b, std::size_t c, std::size_t l) { return data[(b * channels + c) * length + l]; }
    double at(std::size_t b, std::size_t c, std::size_t l) const { return data[(b * channels + c) * length + l]; }

    // pointer to the start of one (batch, channel) row
    double* row(std::size_t b, std::size_t c) { return data.data() + (b * channels + c) * length; }
    const double* row(std::size_t b, std::size_t c) const { return data.data() + (b * channels + c) * length; }

    bool same_shape(const Tensor3& o) const {
        return batch == o.batch && channels == o.channels && length == o.length;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const {
        return "(" + std::to_string(batch) + ", " + std::to_string(channels) + ", " + std::to_string(length) + ")";
    }
};

inline void require_finite(const Tensor3& t, const std::string& where) {
    if (!t.all_finite()) throw NumericError("non-finite activation in " + where);
}

} // namespace vicnet

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "nodeonet/error.hpp"

namespace nodeonet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

/// Dense row-major array of doubles. Rank 0 (scalar), 1 (vector), or 2
/// (matrix) is all the NODE variants and decoders need.
class DenseArray {
public:
    DenseArray() = default;

    explicit DenseArray(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    DenseArray(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        require(data_.size() == shape_size(shape_), Error::Shape,
                "data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_str(shape_));
        check_finite();
    }

    static DenseArray scalar(double v) { return DenseArray(Shape{}, {v}); }

    static DenseArray vector(std::vector<double> v) {
        Shape s{v.size()};
        return DenseArray(std::move(s), std::move(v));
    }

    static DenseArray matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return DenseArray(Shape{rows, cols}, std::move(v));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

    double scalar_value() const {
        require(is_scalar(), Error::Shape, "array of size " + std::to_string(size()) + " is not scalar");
        return data_[0];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void check_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) raise(Error::NonFinite, "array contains NaN/Inf");
    }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

inline bool same_shape(const DenseArray& a, const DenseArray& b) {
    return a.shape() == b.shape();
}

// ---------------------------------------------------------------------------
// Raw kernels. Both the tape executor and the plain executor call these, so
// recorded and un-recorded evaluations are bitwise identical.
// ---------------------------------------------------------------------------

namespace kernels {

inline void add(const double* a, const double* b, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

inline void sub(const double* a, const double* b, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

inline void hadamard(const double* a, const double* b, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

/// out = M x for row-major M (rows x cols).
inline void matvec(const double* m, const double* x, double* __restrict out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = m + i * cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
}

inline void scale(const double* a, double s, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = s * a[i];
}

inline void relu(const double* a, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

inline void tanh_(const double* a, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
}

inline double sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

inline void square(const double* a, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * a[i];
}

inline void abs_(const double* a, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(a[i]);
}

/// out = s*x + y.
inline void axpy(double s, const double* x, const double* y, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i] + y[i];
}

// Backward accumulators (+= into grad buffers).

inline void acc(const double* g, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += g[i];
}

inline void acc_neg(const double* g, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] -= g[i];
}

inline void acc_mul(const double* g, const double* w, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += g[i] * w[i];
}

inline void acc_scale(const double* g, double s, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += s * g[i];
}

/// dM += outer(g, x) for the matvec backward.
inline void acc_outer(const double* g, const double* x, double* __restrict dm, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        double gi = g[i];
        double* row = dm + i * cols;
        for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
    }
}

/// dx += M^T g.
inline void acc_tmatvec(const double* m, const double* g, double* __restrict dx, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        double gi = g[i];
        const double* row = m + i * cols;
        for (std::size_t j = 0; j < cols; ++j) dx[j] += gi * row[j];
    }
}

inline void acc_relu(const double* g, const double* x, double* __restrict out, std::size_t n) {
    // relu'(0) := 0 by convention.
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i] > 0.0 ? g[i] : 0.0;
}

inline void acc_tanh(const double* g, const double* y, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += g[i] * (1.0 - y[i] * y[i]);
}

inline void acc_square(const double* g, const double* x, double* __restrict out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += 2.0 * x[i] * g[i];
}

inline void acc_abs(const double* g, const double* x, double* __restrict out, std::size_t n) {
    // d|x|/dx at 0 := 0, matching the L1 subgradient convention.
    for (std::size_t i = 0; i < n; ++i)
        out[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
}

}  // namespace kernels

}  // namespace nodeonet

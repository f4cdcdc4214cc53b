#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nodeonet/error.hpp"

namespace nodeonet {

/// Scalar function sampled on a spatial grid: either 1-D on explicit node
/// coordinates (Dirichlet problems on [0,1]) or 2-D on the periodic unit
/// square with n x n nodes at (i/n, j/n), row-major in (i, j).
struct Field {
    int dim = 1;
    std::vector<double> xs;      // 1-D node coordinates, strictly increasing
    std::size_t n2 = 0;          // 2-D side length
    std::vector<double> values;

    static Field zeros_1d(std::vector<double> coords) {
        Field f;
        f.dim = 1;
        f.values.assign(coords.size(), 0.0);
        f.xs = std::move(coords);
        return f;
    }

    static Field from_function_1d(std::vector<double> coords, const std::function<double(double)>& fn) {
        Field f = zeros_1d(std::move(coords));
        for (std::size_t i = 0; i < f.xs.size(); ++i) f.values[i] = fn(f.xs[i]);
        return f;
    }

    static Field zeros_2d(std::size_t n) {
        Field f;
        f.dim = 2;
        f.n2 = n;
        f.values.assign(n * n, 0.0);
        return f;
    }

    static Field from_function_2d(std::size_t n, const std::function<double(double, double)>& fn) {
        Field f = zeros_2d(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                f.values[i * n + j] = fn(static_cast<double>(i) / static_cast<double>(n),
                                         static_cast<double>(j) / static_cast<double>(n));
        return f;
    }

    std::size_t size() const noexcept { return values.size(); }

    double& at2(std::size_t i, std::size_t j) noexcept { return values[i * n2 + j]; }
    double at2(std::size_t i, std::size_t j) const noexcept { return values[i * n2 + j]; }

    /// Linear interpolation between 1-D nodes; exact at nodes.
    double value_at(double x) const {
        require(dim == 1, Error::Shape, "value_at(x) on a 2-D field");
        const double lo = xs.front(), hi = xs.back();
        const double tol = 1e-12 * std::max(1.0, std::fabs(hi - lo));
        require(x >= lo - tol && x <= hi + tol, Error::OutOfDomain,
                "point " + std::to_string(x) + " outside field support");
        if (x <= lo) return values.front();
        if (x >= hi) return values.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t i = static_cast<std::size_t>(it - xs.begin());
        const double x0 = xs[i - 1], x1 = xs[i];
        if (x == x0) return values[i - 1];
        const double w = (x - x0) / (x1 - x0);
        return (1.0 - w) * values[i - 1] + w * values[i];
    }

    /// Bilinear interpolation with periodic wrap; exact at grid nodes.
    double value_at(double x1, double x2) const {
        require(dim == 2, Error::Shape, "value_at(x1,x2) on a 1-D field");
        const double n = static_cast<double>(n2);
        double u = x1 - std::floor(x1);
        double v = x2 - std::floor(x2);
        double fi = u * n, fj = v * n;
        std::size_t i0 = static_cast<std::size_t>(fi) % n2;
        std::size_t j0 = static_cast<std::size_t>(fj) % n2;
        double wi = fi - std::floor(fi), wj = fj - std::floor(fj);
        std::size_t i1 = (i0 + 1) % n2, j1 = (j0 + 1) % n2;
        return (1 - wi) * (1 - wj) * at2(i0, j0) + (1 - wi) * wj * at2(i0, j1) +
               wi * (1 - wj) * at2(i1, j0) + wi * wj * at2(i1, j1);
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::fabs(v));
        return m;
    }

    double mean() const {
        double s = 0.0;
        for (double v : values) s += v;
        return values.empty() ? 0.0 : s / static_cast<double>(values.size());
    }
};

/// n equi-spaced points on [a,b] including both endpoints.
inline std::vector<double> uniform_grid(std::size_t n, double a = 0.0, double b = 1.0) {
    require(n >= 2, Error::BadGrid, "uniform grid needs at least 2 points");
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i)
        xs[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return xs;
}

/// Restrict a 2-D periodic field to a coarser nested grid (stride n/m), or
/// bilinearly interpolate when the grids do not nest.
inline Field restrict_2d(const Field& fine, std::size_t m) {
    require(fine.dim == 2, Error::Shape, "restrict_2d needs a 2-D field");
    Field out = Field::zeros_2d(m);
    if (fine.n2 % m == 0) {
        const std::size_t s = fine.n2 / m;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) out.at2(i, j) = fine.at2(i * s, j * s);
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                out.at2(i, j) = fine.value_at(static_cast<double>(i) / static_cast<double>(m),
                                              static_cast<double>(j) / static_cast<double>(m));
    }
    return out;
}

}  // namespace nodeonet

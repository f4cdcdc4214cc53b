#pragma once

#include <functional>
#include <vector>

#include "nodeonet/dense_array.hpp"
#include "nodeonet/error.hpp"
#include "nodeonet/field.hpp"

namespace nodeonet {

/// Point-evaluation encoder: v -> (v(x_1), ..., v(x_{d_V})). Sensors live in
/// the closed domain; 2-D sensors are the n x n periodic grid nodes.
struct SensorEncoder {
    int dim = 1;
    std::vector<double> xs;                            // 1-D sensor locations
    std::vector<std::pair<double, double>> points2d;   // 2-D sensor locations

    std::size_t d_v() const noexcept { return dim == 1 ? xs.size() : points2d.size(); }

    static SensorEncoder uniform_1d(std::size_t d_v) {
        SensorEncoder e;
        e.dim = 1;
        e.xs = uniform_grid(d_v);
        return e;
    }

    static SensorEncoder grid_2d(std::size_t n) {
        SensorEncoder e;
        e.dim = 2;
        e.points2d.reserve(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                e.points2d.emplace_back(static_cast<double>(i) / static_cast<double>(n),
                                        static_cast<double>(j) / static_cast<double>(n));
        return e;
    }
};

inline DenseArray encode(const SensorEncoder& enc, const Field& v) {
    require(v.dim == enc.dim, Error::Shape, "field/encoder dimension mismatch");
    DenseArray out(Shape{enc.d_v()});
    if (enc.dim == 1) {
        for (std::size_t l = 0; l < enc.xs.size(); ++l) out[l] = v.value_at(enc.xs[l]);
    } else {
        for (std::size_t l = 0; l < enc.points2d.size(); ++l)
            out[l] = v.value_at(enc.points2d[l].first, enc.points2d[l].second);
    }
    return out;
}

inline DenseArray encode(const SensorEncoder& enc, const std::function<double(double)>& v) {
    require(enc.dim == 1, Error::Shape, "1-D callable with a 2-D encoder");
    DenseArray out(Shape{enc.d_v()});
    for (std::size_t l = 0; l < enc.xs.size(); ++l) out[l] = v(enc.xs[l]);
    return out;
}

inline DenseArray encode(const SensorEncoder& enc, const std::function<double(double, double)>& v) {
    require(enc.dim == 2, Error::Shape, "2-D callable with a 1-D encoder");
    DenseArray out(Shape{enc.d_v()});
    for (std::size_t l = 0; l < enc.points2d.size(); ++l)
        out[l] = v(enc.points2d[l].first, enc.points2d[l].second);
    return out;
}

}  // namespace nodeonet

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "nodeonet/decoder.hpp"
#include "nodeonet/encoder.hpp"
#include "nodeonet/error.hpp"

namespace nodeonet {

/// Result of checking the generalized-inverse identities for a FemP1
/// decoder against a sensor encoder.
struct PseudoInverseReport {
    bool nodes_match_sensors = false;
    double max_identity_err = 0.0;  // max |alpha_i(x_j) - delta_ij|
    double max_dod_err = 0.0;       // max |D(E(D(e_i))) - D(e_i)| over a fine grid
    bool identity_ok = false;
    bool dod_ok = false;
    bool ok() const noexcept { return identity_ok && dod_ok; }
};

inline PseudoInverseReport pseudo_inverse_check(const SensorEncoder& enc, const DecoderSpec& dec) {
    require(dec.kind == DecoderKind::FemP1, Error::Validation,
            "pseudo-inverse check applies to the FemP1 decoder");
    require(enc.dim == 1, Error::Validation, "pseudo-inverse check is 1-D");
    PseudoInverseReport rep;

    rep.nodes_match_sensors = dec.nodes.size() == enc.xs.size();
    if (rep.nodes_match_sensors)
        for (std::size_t i = 0; i < dec.nodes.size(); ++i)
            if (dec.nodes[i] != enc.xs[i]) rep.nodes_match_sensors = false;

    DecoderParams none;
    const std::size_t d = dec.d_u;

    // E o D = identity on R^{d_U}: alpha_i(x_j) = delta_ij.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < enc.xs.size(); ++j) {
            const double a = detail::hat_value(dec.nodes, i, enc.xs[j]);
            const double target = i == j ? 1.0 : 0.0;
            rep.max_identity_err = std::max(rep.max_identity_err, std::fabs(a - target));
        }

    // D o E o D = D on the latent basis, compared as functions on a fine grid.
    const auto fine = uniform_grid(2049, dec.nodes.front(), dec.nodes.back());
    DenseArray e(Shape{d});
    for (std::size_t i = 0; i < d; ++i) {
        e.fill(0.0);
        e[i] = 1.0;
        Field de = Field::from_function_1d(fine, [&](double x) { return decode(dec, none, e, x); });
        DenseArray round = encode(enc, de);
        for (double x : fine) {
            const double lhs = decode(dec, none, round, x);
            const double rhs = decode(dec, none, e, x);
            rep.max_dod_err = std::max(rep.max_dod_err, std::fabs(lhs - rhs));
        }
    }

    rep.identity_ok = rep.max_identity_err <= 1e-12;
    rep.dod_ok = rep.max_dod_err <= 1e-12;
    return rep;
}

enum class FunctionClass { HolderAlpha, C1, C2 };

/// Mesh sizes, round-trip errors, and fitted orders of the encode-decode
/// consistency study. The sensor/P1 pair and the FemP1 output pair coincide
/// in this instantiation, so d1 and d2 use the same operator applied to the
/// class functions.
struct ConsistencyReport {
    std::vector<double> h;
    std::vector<double> d1;
    std::vector<double> d2;
    double order_d1 = 0.0;
    double order_d2 = 0.0;
};

namespace detail {

inline double fitted_order(const std::vector<double>& h, const std::vector<double>& err) {
    // least-squares slope of log(err) against log(h)
    const std::size_t n = h.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(h[i]);
        const double y = std::log(std::max(err[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

inline std::vector<std::function<double(double)>> class_functions(FunctionClass klass, double alpha) {
    switch (klass) {
    case FunctionClass::HolderAlpha:
        return {[alpha](double x) { return std::pow(std::fabs(x - 0.5), alpha); }};
    case FunctionClass::C1:
        return {[](double x) { return std::sin(kTwoPi * x); },
                [](double x) { return std::cos(kTwoPi * x); }};
    case FunctionClass::C2:
        return {[](double x) { return std::sin(kTwoPi * x) + 0.3 * std::cos(2.0 * kTwoPi * x); }};
    }
    raise(Error::Validation, "unknown function class");
}

/// Max-norm round-trip error of the sensor/P1 pair at mesh size h, measured
/// on a dyadic evaluation grid that contains the interpolation nodes.
inline double round_trip_error(const std::function<double(double)>& fn, double h) {
    const auto n_nodes = static_cast<std::size_t>(std::llround(1.0 / h)) + 1;
    SensorEncoder enc = SensorEncoder::uniform_1d(n_nodes);
    DecoderSpec dec;
    dec.kind = DecoderKind::FemP1;
    dec.d_u = n_nodes;
    dec.nodes = enc.xs;
    dec.finalize();
    DecoderParams none;

    DenseArray coeffs = encode(enc, fn);
    double worst = 0.0;
    const std::size_t fine_n = 4097;
    for (std::size_t i = 0; i < fine_n; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(fine_n - 1);
        worst = std::max(worst, std::fabs(decode(dec, none, coeffs, x) - fn(x)));
    }
    return worst;
}

}  // namespace detail

inline ConsistencyReport consistency_study(FunctionClass klass, double alpha,
                                           const std::vector<double>& levels) {
    require(levels.size() >= 3, Error::InsufficientLevels,
            "consistency study needs at least 3 mesh levels");
    for (std::size_t i = 1; i < levels.size(); ++i)
        require(levels[i] < levels[i - 1], Error::Validation, "mesh sizes must decrease");
    if (levels.size() >= 2) {
        const double ratio = levels[1] / levels[0];
        for (std::size_t i = 2; i < levels.size(); ++i)
            require(std::fabs(levels[i] / levels[i - 1] - ratio) <= 1e-9 * ratio, Error::Validation,
                    "mesh sizes must form a geometric sequence");
    }

    ConsistencyReport rep;
    rep.h = levels;
    const auto fns = detail::class_functions(klass, alpha);
    for (double h : levels) {
        double worst = 0.0;
        for (const auto& fn : fns) worst = std::max(worst, detail::round_trip_error(fn, h));
        rep.d1.push_back(worst);
        rep.d2.push_back(worst);  // input and output pairs coincide (FD mesh + P1 basis)
    }
    rep.order_d1 = detail::fitted_order(rep.h, rep.d1);
    rep.order_d2 = detail::fitted_order(rep.h, rep.d2);
    return rep;
}

/// Default geometric ladder h = 1/2, 1/4, ..., used by the CLI.
inline std::vector<double> geometric_levels(std::size_t count) {
    std::vector<double> h(count);
    double v = 0.5;
    for (std::size_t i = 0; i < count; ++i, v *= 0.5) h[i] = v;
    return h;
}

}  // namespace nodeonet

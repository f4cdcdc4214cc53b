#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "nodeonet/dense_array.hpp"
#include "nodeonet/error.hpp"
#include "nodeonet/tape.hpp"

namespace nodeonet {

enum class DecoderKind { LearnedBasis, Fourier, FemP1 };
enum class Activation { Relu, Tanh };

struct FourierTerm {
    int freq;
    bool is_sin;
};

/// Basis-index convention: constant first, then paired cos/sin per frequency
/// {1, cos(2 pi x), sin(2 pi x), cos(4 pi x), ...}.
inline std::vector<FourierTerm> make_fourier_terms(std::size_t d_u) {
    std::vector<FourierTerm> terms;
    terms.reserve(d_u);
    for (std::size_t j = 0; j < d_u; ++j) {
        if (j == 0) {
            terms.push_back({0, false});
        } else {
            terms.push_back({static_cast<int>((j + 1) / 2), j % 2 == 0});
        }
    }
    return terms;
}

/// Spatial basis producing alpha(x) in R^{d_U}: a small MLP, a fixed Fourier
/// family, or P1 hat functions on given nodes.
struct DecoderSpec {
    DecoderKind kind = DecoderKind::LearnedBasis;
    std::size_t d_u = 50;
    int input_dim = 1;
    std::vector<std::size_t> hidden{100, 100};  // LearnedBasis
    Activation activation = Activation::Relu;
    std::vector<FourierTerm> frequencies;       // Fourier; filled by finalize()
    std::vector<double> nodes;                  // FemP1 node locations

    void finalize() {
        require(d_u >= 1, Error::Validation, "decoder d_U must be >= 1");
        if (kind == DecoderKind::Fourier) {
            require(input_dim == 1, Error::Validation, "Fourier decoder is 1-D only");
            if (frequencies.empty()) frequencies = make_fourier_terms(d_u);
            require(frequencies.size() == d_u, Error::Validation, "Fourier list length must equal d_U");
        }
        if (kind == DecoderKind::FemP1) {
            require(input_dim == 1, Error::Validation, "FemP1 decoder is 1-D only");
            require(nodes.size() == d_u, Error::Validation, "FemP1 node count must equal d_U");
            for (std::size_t i = 1; i < nodes.size(); ++i)
                require(nodes[i] > nodes[i - 1], Error::Validation, "FemP1 nodes must be increasing");
        }
    }

    bool trainable() const noexcept { return kind == DecoderKind::LearnedBasis; }

    /// Layer sizes of the basis network, input to output.
    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> sizes{static_cast<std::size_t>(input_dim)};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(d_u);
        return sizes;
    }
};

/// Weights/biases of the basis network, layer by layer. Empty for the fixed
/// basis kinds.
struct DecoderParams {
    std::vector<DenseArray> weights;  // (out x in)
    std::vector<DenseArray> biases;   // (out)
};

namespace detail {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double fourier_value(const FourierTerm& t, double x) {
    if (t.freq == 0) return 1.0;
    const double a = kTwoPi * t.freq * x;
    return t.is_sin ? std::sin(a) : std::cos(a);
}

inline double hat_value(const std::vector<double>& nodes, std::size_t i, double x) {
    const double xi = nodes[i];
    if (x <= xi) {
        if (i == 0) return x >= xi ? 1.0 : (x >= nodes.front() ? 1.0 : 0.0);
        const double xl = nodes[i - 1];
        if (x < xl) return 0.0;
        return (x - xl) / (xi - xl);
    }
    if (i + 1 == nodes.size()) return 0.0;
    const double xr = nodes[i + 1];
    if (x > xr) return 0.0;
    return (xr - x) / (xr - xi);
}

}  // namespace detail

/// alpha(x) for a single point (plain evaluation).
inline DenseArray basis_at(const DecoderSpec& spec, const DecoderParams& params,
                           std::span<const double> x) {
    require(x.size() == static_cast<std::size_t>(spec.input_dim), Error::Shape,
            "decoder input dimension mismatch");
    switch (spec.kind) {
    case DecoderKind::Fourier: {
        DenseArray out(Shape{spec.d_u});
        for (std::size_t j = 0; j < spec.d_u; ++j)
            out[j] = detail::fourier_value(spec.frequencies[j], x[0]);
        return out;
    }
    case DecoderKind::FemP1: {
        DenseArray out(Shape{spec.d_u});
        for (std::size_t j = 0; j < spec.d_u; ++j) out[j] = detail::hat_value(spec.nodes, j, x[0]);
        return out;
    }
    case DecoderKind::LearnedBasis: {
        DenseArray h(Shape{x.size()}, std::vector<double>(x.begin(), x.end()));
        for (std::size_t layer = 0; layer < params.weights.size(); ++layer) {
            const DenseArray& w = params.weights[layer];
            const DenseArray& b = params.biases[layer];
            DenseArray z(Shape{w.shape()[0]});
            kernels::matvec(w.data(), h.data(), z.data(), w.shape()[0], w.shape()[1]);
            DenseArray zb(Shape{w.shape()[0]});
            kernels::add(z.data(), b.data(), zb.data(), zb.size());
            if (layer + 1 < params.weights.size()) {
                DenseArray act(Shape{zb.size()});
                if (spec.activation == Activation::Relu)
                    kernels::relu(zb.data(), act.data(), act.size());
                else
                    kernels::tanh_(zb.data(), act.data(), act.size());
                h = std::move(act);
            } else {
                h = std::move(zb);
            }
        }
        return h;
    }
    }
    raise(Error::Validation, "unknown decoder kind");
}

inline DenseArray basis_at(const DecoderSpec& spec, const DecoderParams& params, double x) {
    return basis_at(spec, params, std::span<const double>(&x, 1));
}

/// Reconstruction sum_j alpha_j(x) psi_j.
inline double decode(const DecoderSpec& spec, const DecoderParams& params, const DenseArray& psi,
                     std::span<const double> x) {
    require(psi.size() == spec.d_u, Error::Shape, "psi length must equal d_U");
    DenseArray a = basis_at(spec, params, x);
    double s = 0.0;
    for (std::size_t j = 0; j < spec.d_u; ++j) s += a[j] * psi[j];
    return s;
}

inline double decode(const DecoderSpec& spec, const DecoderParams& params, const DenseArray& psi,
                     double x) {
    return decode(spec, params, psi, std::span<const double>(&x, 1));
}

/// Rows alpha(x_p) stacked over evaluation points (row-major N x d_U).
inline DenseArray basis_matrix(const DecoderSpec& spec, const DecoderParams& params,
                               const std::vector<std::vector<double>>& points) {
    DenseArray out(Shape{points.size(), spec.d_u});
    for (std::size_t p = 0; p < points.size(); ++p) {
        DenseArray row = basis_at(spec, params, std::span<const double>(points[p].data(), points[p].size()));
        for (std::size_t j = 0; j < spec.d_u; ++j) out.at2(p, j) = row[j];
    }
    return out;
}

/// Tape-recorded basis matrix for the learned decoder. `weight_nodes` and
/// `bias_nodes` are parameter leaves in layer order; records the identical
/// kernel sequence as the plain path, then concatenates rows.
inline NodeId record_basis_matrix(Tape& tape, const DecoderSpec& spec,
                                  const std::vector<NodeId>& weight_nodes,
                                  const std::vector<NodeId>& bias_nodes,
                                  const std::vector<std::vector<double>>& points) {
    require(spec.kind == DecoderKind::LearnedBasis, Error::Validation,
            "only the learned basis is recorded on tape");
    std::vector<NodeId> rows;
    rows.reserve(points.size());
    for (const auto& pt : points) {
        NodeId h = tape.leaf(DenseArray(Shape{pt.size()}, std::vector<double>(pt.begin(), pt.end())));
        for (std::size_t layer = 0; layer < weight_nodes.size(); ++layer) {
            NodeId z = tape.matvec(weight_nodes[layer], h);
            NodeId zb = tape.add(z, bias_nodes[layer]);
            if (layer + 1 < weight_nodes.size())
                h = spec.activation == Activation::Relu ? tape.relu(zb) : tape.tanh_(zb);
            else
                h = zb;
        }
        rows.push_back(h);
    }
    const auto n_rows = static_cast<std::uint32_t>(points.size());
    const auto n_cols = static_cast<std::uint32_t>(spec.d_u);
    return tape.concat(std::span<const NodeId>(rows.data(), rows.size()),
                       Tape::ShapeSpec{n_rows * n_cols, n_rows, n_cols});
}

}  // namespace nodeonet

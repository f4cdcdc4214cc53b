#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nodeonet/dense_array.hpp"
#include "nodeonet/error.hpp"

namespace nodeonet {

/// Fixed primitive-op vocabulary. Every NODE right-hand side, decoder
/// network, and loss in this project is a composition of these.
enum class OpKind : std::uint8_t {
    Const,     ///< leaf with externally supplied value
    Param,     ///< leaf bound to a trainable parameter
    Add,
    Sub,
    Hadamard,  ///< element-wise product
    Matvec,    ///< (rows x cols) matrix times vector
    Scale,     ///< multiply by a constant scalar attribute
    Relu,
    Tanh,
    Sum,       ///< reduce to scalar
    Mean,      ///< reduce to scalar
    Square,
    Abs,
    Concat,    ///< concatenate inputs into one array of a given shape
    Slice,     ///< contiguous sub-range of a 1-D node
    Axpy       ///< s*x + y with constant scalar s
};

using NodeId = std::int32_t;
using ParamId = std::int32_t;

constexpr NodeId kNoNode = -1;

/// Derivative assigned to relu at exactly 0.
inline double relu_subgradient_convention() { return 0.0; }

/// Reverse-mode differentiation record. Values and adjoints live in flat
/// arenas so a tape can be re-run every epoch without reallocation. Tapes are
/// single-owner; concurrent use is only across distinct tapes.
class Tape {
public:
    struct Node {
        OpKind op;
        NodeId a = kNoNode;
        NodeId b = kNoNode;
        double attr = 0.0;          // Scale/Axpy scalar; Slice offset
        std::size_t offset = 0;     // value/adjoint offset in the arenas
        std::uint32_t len = 0;
        std::uint32_t rows = 0;     // rank2: rows>0 && cols>0; rank1: rows=len, cols=0; rank0: rows=cols=0
        std::uint32_t cols = 0;
        std::uint32_t list_begin = 0;  // Concat input list
        std::uint32_t list_count = 0;
        const double* ext_val = nullptr;  // bound leaf: value read through this pointer
        double* ext_adj = nullptr;        // bound leaf: adjoint accumulated here
    };

    struct ShapeSpec {
        std::uint32_t len;
        std::uint32_t rows;  // 0 for rank-0/1
        std::uint32_t cols;  // 0 for rank-0/1
    };

    // ---- construction ------------------------------------------------------

    NodeId leaf(const DenseArray& v) {
        NodeId id = push_node(OpKind::Const, kNoNode, kNoNode, shape_of(v));
        std::memcpy(value_ptr(id), v.data(), v.size() * sizeof(double));
        return id;
    }

    NodeId param(ParamId pid, const DenseArray& v) {
        NodeId id = push_node(OpKind::Param, kNoNode, kNoNode, shape_of(v));
        std::memcpy(value_ptr(id), v.data(), v.size() * sizeof(double));
        param_nodes_.emplace_back(id, pid);
        return id;
    }

    /// Leaf bound to caller-owned storage: the value is read live through
    /// `bound` (no per-run copy) and, when `adjoint_sink` is given, its
    /// adjoint accumulates there instead of in the arena. The caller keeps
    /// both pointers valid and processes tapes sequentially per sink.
    NodeId bound_leaf(const DenseArray& bound, double* adjoint_sink = nullptr) {
        InternalShape sh = shape_of(bound);
        Node nd;
        nd.op = OpKind::Const;
        nd.len = sh.len;
        nd.rows = sh.rows;
        nd.cols = sh.cols;
        nd.ext_val = bound.data();
        nd.ext_adj = adjoint_sink;
        if (!adjoint_sink) {
            // scratch adjoint slot; written by consumers, never read
            nd.offset = arena_used_;
            grow_arena(sh.len);
        }
        nodes_.push_back(nd);
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    /// Update a leaf in place (same shape); used when re-running an epoch.
    void set_leaf(NodeId id, const double* data, std::size_t n) {
        const Node& nd = nodes_[static_cast<std::size_t>(id)];
        require(nd.op == OpKind::Const || nd.op == OpKind::Param, Error::Shape, "set_leaf on non-leaf node");
        require(nd.ext_val == nullptr, Error::Shape, "set_leaf on a bound leaf");
        require(n == nd.len, Error::Shape, "set_leaf length mismatch");
        std::memcpy(values_.data() + nd.offset, data, n * sizeof(double));
    }

    void set_leaf(NodeId id, const DenseArray& v) { set_leaf(id, v.data(), v.size()); }

    /// Point a bound leaf at different caller-owned storage of the same size.
    void rebind_leaf(NodeId id, const double* data) {
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        require(nd.op == OpKind::Const && nd.ext_val != nullptr, Error::Shape,
                "rebind_leaf expects a bound leaf");
        nd.ext_val = data;
    }

    // ---- recorded operations ----------------------------------------------
    // Each computes its forward value immediately through the shared kernels.

    NodeId add(NodeId x, NodeId y) { return binary_same(OpKind::Add, x, y); }
    NodeId sub(NodeId x, NodeId y) { return binary_same(OpKind::Sub, x, y); }
    NodeId hadamard(NodeId x, NodeId y) { return binary_same(OpKind::Hadamard, x, y); }

    NodeId matvec(NodeId m, NodeId x) {
        const Node& nm = nodes_[static_cast<std::size_t>(m)];
        const Node& nx = nodes_[static_cast<std::size_t>(x)];
        require(nm.rows > 0 && nm.cols > 0, Error::Shape, "matvec expects a rank-2 left operand");
        require(nx.cols == 0 && nx.len == nm.cols, Error::Shape,
                "matvec dimension mismatch: " + std::to_string(nm.rows) + "x" + std::to_string(nm.cols) +
                    " times vector of length " + std::to_string(nx.len));
        NodeId id = push_node(OpKind::Matvec, m, x, {nm.rows, 0, nm.rows});
        eval_node(id);
        return id;
    }

    NodeId scale(NodeId x, double s) {
        NodeId id = push_like(OpKind::Scale, x);
        nodes_[static_cast<std::size_t>(id)].attr = s;
        eval_node(id);
        return id;
    }

    NodeId relu(NodeId x) { return unary(OpKind::Relu, x); }
    NodeId tanh_(NodeId x) { return unary(OpKind::Tanh, x); }
    NodeId square(NodeId x) { return unary(OpKind::Square, x); }
    NodeId abs_(NodeId x) { return unary(OpKind::Abs, x); }

    NodeId sum(NodeId x) { return reduce(OpKind::Sum, x); }
    NodeId mean(NodeId x) { return reduce(OpKind::Mean, x); }

    NodeId axpy(double s, NodeId x, NodeId y) {
        NodeId id = binary_same(OpKind::Axpy, x, y, /*defer_eval=*/true);
        nodes_[static_cast<std::size_t>(id)].attr = s;
        eval_node(id);
        return id;
    }

    /// Concatenate rank-1/rank-0 inputs in order into an array of `shape`.
    NodeId concat(std::span<const NodeId> inputs, const ShapeSpec& shape) {
        std::size_t total = 0;
        for (NodeId in : inputs) total += nodes_[static_cast<std::size_t>(in)].len;
        require(total == shape.len, Error::Shape, "concat inputs do not fill the requested shape");
        NodeId id = push_node(OpKind::Concat, kNoNode, kNoNode,
                              InternalShape{shape.rows, shape.cols, shape.len});
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        nd.list_begin = static_cast<std::uint32_t>(concat_lists_.size());
        nd.list_count = static_cast<std::uint32_t>(inputs.size());
        concat_lists_.insert(concat_lists_.end(), inputs.begin(), inputs.end());
        eval_node(id);
        return id;
    }

    NodeId slice(NodeId x, std::size_t offset, std::size_t len) {
        const Node& nx = nodes_[static_cast<std::size_t>(x)];
        require(offset + len <= nx.len, Error::Shape, "slice range exceeds input");
        NodeId id = push_node(OpKind::Slice, x, kNoNode, {static_cast<std::uint32_t>(len), 0,
                                                          static_cast<std::uint32_t>(len)});
        nodes_[static_cast<std::size_t>(id)].attr = static_cast<double>(offset);
        eval_node(id);
        return id;
    }

    /// Generic entry point over the op vocabulary; thin wrapper used by tests
    /// that drive the tape as data. Slice takes (offset, length) as attrs.
    NodeId record_op(OpKind op, const std::vector<NodeId>& inputs, double attr = 0.0, double attr2 = 0.0) {
        switch (op) {
        case OpKind::Add: return add(inputs.at(0), inputs.at(1));
        case OpKind::Sub: return sub(inputs.at(0), inputs.at(1));
        case OpKind::Hadamard: return hadamard(inputs.at(0), inputs.at(1));
        case OpKind::Matvec: return matvec(inputs.at(0), inputs.at(1));
        case OpKind::Scale: return scale(inputs.at(0), attr);
        case OpKind::Relu: return relu(inputs.at(0));
        case OpKind::Tanh: return tanh_(inputs.at(0));
        case OpKind::Sum: return sum(inputs.at(0));
        case OpKind::Mean: return mean(inputs.at(0));
        case OpKind::Square: return square(inputs.at(0));
        case OpKind::Abs: return abs_(inputs.at(0));
        case OpKind::Axpy: return axpy(attr, inputs.at(0), inputs.at(1));
        case OpKind::Slice:
            return slice(inputs.at(0), static_cast<std::size_t>(attr), static_cast<std::size_t>(attr2));
        case OpKind::Concat: {
            std::uint32_t total = 0;
            for (NodeId in : inputs) total += nodes_[static_cast<std::size_t>(in)].len;
            return concat(std::span<const NodeId>(inputs.data(), inputs.size()), ShapeSpec{total, total, 0});
        }
        default:
            raise(Error::Shape, "record_op: unsupported op");
        }
    }

    // ---- execution ---------------------------------------------------------

    /// Recompute every non-leaf value in topological (= recording) order.
    void forward_all() {
        const NodeId n = static_cast<NodeId>(nodes_.size());
        for (NodeId id = 0; id < n; ++id) {
            OpKind op = nodes_[static_cast<std::size_t>(id)].op;
            if (op != OpKind::Const && op != OpKind::Param) eval_node(id);
        }
    }

    /// Copy fresh parameter values into the bound leaves.
    template <class ParamLookup>
    void refresh_params(const ParamLookup& lookup) {
        for (auto [node, pid] : param_nodes_) {
            const DenseArray& v = lookup(pid);
            set_leaf(node, v);
        }
    }

    void zero_adjoints() {
        std::fill(adjoints_.begin(), adjoints_.begin() + static_cast<std::ptrdiff_t>(arena_used_), 0.0);
    }

    void seed_adjoint(NodeId id, const double* g, std::size_t n) {
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        require(n == nd.len, Error::Shape, "adjoint seed length mismatch");
        kernels::acc(g, aptr(nd), n);
    }

    void seed_scalar(NodeId id, double g) { seed_adjoint(id, &g, 1); }

    /// Reverse sweep over the whole tape using previously seeded adjoints.
    /// Interior adjoints are zeroed as soon as they are consumed, so the
    /// arena is clean for the next run; leaf adjoints survive for the caller
    /// and are cleared by take_adjoint/clear_leaf_adjoints.
    void run_backward() {
        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            const Node& nd = nodes_[static_cast<std::size_t>(id)];
            if (nd.op == OpKind::Const || nd.op == OpKind::Param) continue;
            backward_node(id);
            double* g = adjoints_.data() + nd.offset;
            std::fill(g, g + nd.len, 0.0);
        }
    }

    /// Read a leaf's accumulated adjoint into `out` (+=) and reset it.
    void take_adjoint(NodeId id, double* out) {
        const Node& nd = nodes_[static_cast<std::size_t>(id)];
        require(nd.ext_adj == nullptr, Error::Shape, "take_adjoint on a sink-bound leaf");
        double* g = adjoints_.data() + nd.offset;
        kernels::acc(g, out, nd.len);
        std::fill(g, g + nd.len, 0.0);
    }

    void clear_leaf_adjoints() {
        for (const Node& nd : nodes_) {
            if (nd.op != OpKind::Const && nd.op != OpKind::Param) continue;
            if (nd.ext_adj) continue;
            double* g = adjoints_.data() + nd.offset;
            std::fill(g, g + nd.len, 0.0);
        }
    }

    /// Gradient of a scalar loss with respect to every registered parameter.
    /// Adjoints are reset afterwards.
    std::map<ParamId, DenseArray> backward(NodeId loss) {
        const Node& nl = nodes_[static_cast<std::size_t>(loss)];
        require(nl.len == 1, Error::NonScalarLoss,
                "loss node has " + std::to_string(nl.len) + " entries");
        zero_adjoints();
        seed_scalar(loss, 1.0);
        run_backward();
        std::map<ParamId, DenseArray> grads;
        for (auto [node, pid] : param_nodes_) {
            DenseArray g = adjoint_array(node);
            auto it = grads.find(pid);
            if (it == grads.end()) {
                grads.emplace(pid, std::move(g));
            } else {
                kernels::acc(g.data(), it->second.data(), g.size());
            }
        }
        zero_adjoints();
        return grads;
    }

    // ---- inspection --------------------------------------------------------

    std::size_t node_count() const noexcept { return nodes_.size(); }

    const double* value(NodeId id) const { return vptr(nodes_[static_cast<std::size_t>(id)]); }
    double* value_ptr(NodeId id) {
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        require(nd.ext_val == nullptr, Error::Shape, "mutable access to a bound leaf");
        return values_.data() + nd.offset;
    }
    const double* adjoint(NodeId id) const { return aptr_const(nodes_[static_cast<std::size_t>(id)]); }
    std::size_t value_len(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].len; }

    double scalar_value(NodeId id) const {
        require(value_len(id) == 1, Error::Shape, "node is not scalar");
        return value(id)[0];
    }

    DenseArray value_array(NodeId id) const { return to_array(value(id), id); }
    DenseArray adjoint_array(NodeId id) const { return to_array(adjoint(id), id); }

    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

    /// All relu pre-activation values; the gradient-check harness uses this
    /// to keep random instances away from the kinks.
    double min_distance_to_relu_kink() const {
        double best = 1e300;
        for (const Node& nd : nodes_) {
            if (nd.op != OpKind::Relu) continue;
            const Node& in = nodes_[static_cast<std::size_t>(nd.a)];
            const double* x = vptr(in);
            for (std::uint32_t i = 0; i < in.len; ++i) {
                double d = std::fabs(x[i]);
                if (d < best) best = d;
            }
        }
        return best;
    }

    void clear() {
        nodes_.clear();
        param_nodes_.clear();
        concat_lists_.clear();
        arena_used_ = 0;
    }

private:
    struct InternalShape {
        std::uint32_t rows;
        std::uint32_t cols;
        std::uint32_t len;
    };

    static InternalShape shape_of(const DenseArray& v) {
        const Shape& s = v.shape();
        if (s.size() == 2)
            return {static_cast<std::uint32_t>(s[0]), static_cast<std::uint32_t>(s[1]),
                    static_cast<std::uint32_t>(v.size())};
        if (s.size() == 1) return {static_cast<std::uint32_t>(s[0]), 0, static_cast<std::uint32_t>(v.size())};
        return {0, 0, 1};
    }

    DenseArray to_array(const double* src, NodeId id) const {
        const Node& nd = nodes_[static_cast<std::size_t>(id)];
        Shape s;
        if (nd.cols > 0)
            s = {nd.rows, nd.cols};
        else if (nd.rows > 0)
            s = {nd.rows};
        DenseArray out(s);
        std::memcpy(out.data(), src, nd.len * sizeof(double));
        return out;
    }

    void grow_arena(std::size_t len) {
        arena_used_ += len;
        if (values_.size() < arena_used_) {
            values_.resize(arena_used_ + arena_used_ / 2);
            adjoints_.resize(values_.size(), 0.0);
        }
    }

    NodeId push_node(OpKind op, NodeId a, NodeId b, InternalShape sh) {
        Node nd;
        nd.op = op;
        nd.a = a;
        nd.b = b;
        nd.offset = arena_used_;
        nd.len = sh.len;
        nd.rows = sh.rows;
        nd.cols = sh.cols;
        grow_arena(sh.len);
        std::fill(adjoints_.begin() + static_cast<std::ptrdiff_t>(nd.offset),
                  adjoints_.begin() + static_cast<std::ptrdiff_t>(nd.offset + nd.len), 0.0);
        nodes_.push_back(nd);
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    const double* vptr(const Node& nd) const {
        return nd.ext_val ? nd.ext_val : values_.data() + nd.offset;
    }
    double* aptr(Node& nd) { return nd.ext_adj ? nd.ext_adj : adjoints_.data() + nd.offset; }
    const double* aptr_const(const Node& nd) const {
        return nd.ext_adj ? nd.ext_adj : adjoints_.data() + nd.offset;
    }

    NodeId push_like(OpKind op, NodeId x) {
        const Node& nx = nodes_[static_cast<std::size_t>(x)];
        return push_node(op, x, kNoNode, InternalShape{nx.rows, nx.cols, nx.len});
    }

    NodeId unary(OpKind op, NodeId x) {
        NodeId id = push_like(op, x);
        eval_node(id);
        return id;
    }

    NodeId reduce(OpKind op, NodeId x) {
        NodeId id = push_node(op, x, kNoNode, InternalShape{0, 0, 1});
        eval_node(id);
        return id;
    }

    NodeId binary_same(OpKind op, NodeId x, NodeId y, bool defer_eval = false) {
        const Node& nx = nodes_[static_cast<std::size_t>(x)];
        const Node& ny = nodes_[static_cast<std::size_t>(y)];
        require(nx.len == ny.len && nx.rows == ny.rows && nx.cols == ny.cols, Error::Shape,
                "operand shapes differ");
        NodeId id = push_node(op, x, y, InternalShape{nx.rows, nx.cols, nx.len});
        if (!defer_eval) eval_node(id);
        return id;
    }

    void eval_node(NodeId id) {
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        double* out = values_.data() + nd.offset;
        const std::size_t n = nd.len;
        const double* a = nd.a >= 0 ? vptr(nodes_[static_cast<std::size_t>(nd.a)]) : nullptr;
        const double* b = nd.b >= 0 ? vptr(nodes_[static_cast<std::size_t>(nd.b)]) : nullptr;
        switch (nd.op) {
        case OpKind::Const:
        case OpKind::Param:
            return;
        case OpKind::Add: kernels::add(a, b, out, n); break;
        case OpKind::Sub: kernels::sub(a, b, out, n); break;
        case OpKind::Hadamard: kernels::hadamard(a, b, out, n); break;
        case OpKind::Matvec: {
            const Node& na = nodes_[static_cast<std::size_t>(nd.a)];
            kernels::matvec(a, b, out, na.rows, na.cols);
            break;
        }
        case OpKind::Scale: kernels::scale(a, nd.attr, out, n); break;
        case OpKind::Relu: kernels::relu(a, out, n); break;
        case OpKind::Tanh: kernels::tanh_(a, out, n); break;
        case OpKind::Sum: out[0] = kernels::sum(a, nodes_[static_cast<std::size_t>(nd.a)].len); break;
        case OpKind::Mean:
            out[0] = kernels::sum(a, nodes_[static_cast<std::size_t>(nd.a)].len) /
                     static_cast<double>(nodes_[static_cast<std::size_t>(nd.a)].len);
            break;
        case OpKind::Square: kernels::square(a, out, n); break;
        case OpKind::Abs: kernels::abs_(a, out, n); break;
        case OpKind::Concat: {
            std::size_t pos = 0;
            for (std::uint32_t i = 0; i < nd.list_count; ++i) {
                const Node& in = nodes_[static_cast<std::size_t>(concat_lists_[nd.list_begin + i])];
                std::memcpy(out + pos, vptr(in), in.len * sizeof(double));
                pos += in.len;
            }
            break;
        }
        case OpKind::Slice:
            std::memcpy(out, a + static_cast<std::size_t>(nd.attr), n * sizeof(double));
            break;
        case OpKind::Axpy: kernels::axpy(nd.attr, a, b, out, n); break;
        }
        // Cheap vectorizable probe first; a NaN/Inf anywhere poisons the sum.
        double probe = 0.0;
        for (std::size_t i = 0; i < n; ++i) probe += out[i];
        if (!std::isfinite(probe)) {
            for (std::size_t i = 0; i < n; ++i)
                if (!std::isfinite(out[i]))
                    raise(Error::NonFinite, "non-finite value produced by tape op");
        }
    }

    void backward_node(NodeId id) {
        const Node& nd = nodes_[static_cast<std::size_t>(id)];
        if (nd.op == OpKind::Const || nd.op == OpKind::Param) return;
        const double* g = adjoints_.data() + nd.offset;
        const std::size_t n = nd.len;
        double* da = nd.a >= 0 ? aptr(nodes_[static_cast<std::size_t>(nd.a)]) : nullptr;
        double* db = nd.b >= 0 ? aptr(nodes_[static_cast<std::size_t>(nd.b)]) : nullptr;
        const double* va = nd.a >= 0 ? vptr(nodes_[static_cast<std::size_t>(nd.a)]) : nullptr;
        const double* vb = nd.b >= 0 ? vptr(nodes_[static_cast<std::size_t>(nd.b)]) : nullptr;
        switch (nd.op) {
        case OpKind::Add:
            kernels::acc(g, da, n);
            kernels::acc(g, db, n);
            break;
        case OpKind::Sub:
            kernels::acc(g, da, n);
            kernels::acc_neg(g, db, n);
            break;
        case OpKind::Hadamard:
            kernels::acc_mul(g, vb, da, n);
            kernels::acc_mul(g, va, db, n);
            break;
        case OpKind::Matvec: {
            const Node& na = nodes_[static_cast<std::size_t>(nd.a)];
            kernels::acc_outer(g, vb, da, na.rows, na.cols);
            kernels::acc_tmatvec(va, g, db, na.rows, na.cols);
            break;
        }
        case OpKind::Scale: kernels::acc_scale(g, nd.attr, da, n); break;
        case OpKind::Relu: kernels::acc_relu(g, va, da, n); break;
        case OpKind::Tanh: kernels::acc_tanh(g, values_.data() + nd.offset, da, n); break;
        case OpKind::Sum: {
            const std::size_t m = nodes_[static_cast<std::size_t>(nd.a)].len;
            for (std::size_t i = 0; i < m; ++i) da[i] += g[0];
            break;
        }
        case OpKind::Mean: {
            const std::size_t m = nodes_[static_cast<std::size_t>(nd.a)].len;
            const double gi = g[0] / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) da[i] += gi;
            break;
        }
        case OpKind::Square: kernels::acc_square(g, va, da, n); break;
        case OpKind::Abs: kernels::acc_abs(g, va, da, n); break;
        case OpKind::Concat: {
            std::size_t pos = 0;
            for (std::uint32_t i = 0; i < nd.list_count; ++i) {
                Node& in = nodes_[static_cast<std::size_t>(concat_lists_[nd.list_begin + i])];
                kernels::acc(g + pos, aptr(in), in.len);
                pos += in.len;
            }
            break;
        }
        case OpKind::Slice:
            kernels::acc(g, da + static_cast<std::size_t>(nd.attr), n);
            break;
        case OpKind::Axpy:
            kernels::acc_scale(g, nd.attr, da, n);
            kernels::acc(g, db, n);
            break;
        default:
            break;
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::pair<NodeId, ParamId>> param_nodes_;
    std::vector<NodeId> concat_lists_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::size_t arena_used_ = 0;
};

}  // namespace nodeonet

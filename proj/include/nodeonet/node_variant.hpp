#pragma once

#include <map>
#include <string>
#include <vector>

#include "nodeonet/dense_array.hpp"
#include "nodeonet/decoder.hpp"
#include "nodeonet/error.hpp"
#include "nodeonet/tape.hpp"

namespace nodeonet {

/// The physics-encoded right-hand-side families. SourceOnly, DiffusionInput,
/// and MultiInput start from psi(0) = 0; DiffusionReactionFull and
/// NavierStokes start from psi(0) = P_u (encoded u0).
enum class NodeVariantKind {
    DiffusionReactionFull,
    SourceOnly,
    DiffusionInput,
    MultiInput,
    NavierStokes
};

enum class InputRole { Source, Diffusion, Reaction, Initial };

inline const char* input_role_name(InputRole r) {
    switch (r) {
    case InputRole::Source: return "f";
    case InputRole::Diffusion: return "D";
    case InputRole::Reaction: return "R";
    case InputRole::Initial: return "u0";
    }
    return "?";
}

struct NodeVariant {
    NodeVariantKind kind = NodeVariantKind::SourceOnly;
    std::size_t terms = 1;        // P
    std::size_t poly_degree = 1;  // n in A_i^n(t)
    bool poly_zero_constant = true;  // pin a_i^0 = 0 (A_i^n(t) = a_i^1 t + ...)
    std::size_t d_u = 50;
    std::size_t d_v = 20;
    Activation activation = Activation::Relu;

    bool uses_v() const noexcept { return kind == NodeVariantKind::DiffusionReactionFull; }
    bool uses_cd() const noexcept { return kind == NodeVariantKind::NavierStokes; }
    bool uses_p_d() const noexcept {
        return kind == NodeVariantKind::DiffusionReactionFull ||
               kind == NodeVariantKind::DiffusionInput || kind == NodeVariantKind::MultiInput;
    }
    bool uses_p_r() const noexcept { return kind == NodeVariantKind::DiffusionReactionFull; }
    bool uses_p_u() const noexcept {
        return kind == NodeVariantKind::DiffusionReactionFull || kind == NodeVariantKind::NavierStokes;
    }
    /// P_f f appears inside the sum over terms for the full and NS forms,
    /// outside it for the reduced forms.
    bool source_inside_sum() const noexcept {
        return kind == NodeVariantKind::DiffusionReactionFull || kind == NodeVariantKind::NavierStokes;
    }

    std::vector<InputRole> required_roles() const {
        switch (kind) {
        case NodeVariantKind::SourceOnly: return {InputRole::Source};
        case NodeVariantKind::DiffusionInput:
        case NodeVariantKind::MultiInput: return {InputRole::Diffusion, InputRole::Source};
        case NodeVariantKind::DiffusionReactionFull:
            return {InputRole::Diffusion, InputRole::Reaction, InputRole::Source, InputRole::Initial};
        case NodeVariantKind::NavierStokes: return {InputRole::Source, InputRole::Initial};
        }
        return {};
    }

    void validate() const {
        require(terms >= 1, Error::Validation, "P must be >= 1");
        require(d_u >= 1 && d_v >= 1, Error::Validation, "latent dimensions must be positive");
    }
};

/// Trainable parameters of one variant. Vectors live in R^{d_U}; the role
/// matrices are d_U x d_V. Unused members stay empty.
struct NodeParams {
    std::vector<DenseArray> w, v, a, b, c, d;     // per-term vectors
    std::vector<std::vector<DenseArray>> poly;    // poly[i][j], j = 0..n
    DenseArray p_d, p_r, p_f, p_u;

    static NodeParams zeros(const NodeVariant& var) {
        NodeParams p;
        auto vecs = [&](std::vector<DenseArray>& dst) {
            dst.assign(var.terms, DenseArray(Shape{var.d_u}));
        };
        vecs(p.w);
        vecs(p.a);
        vecs(p.b);
        if (var.uses_v()) vecs(p.v);
        if (var.uses_cd()) {
            vecs(p.c);
            vecs(p.d);
        }
        p.poly.assign(var.terms,
                      std::vector<DenseArray>(var.poly_degree + 1, DenseArray(Shape{var.d_u})));
        const Shape mat{var.d_u, var.d_v};
        p.p_f = DenseArray(mat);
        if (var.uses_p_d()) p.p_d = DenseArray(mat);
        if (var.uses_p_r()) p.p_r = DenseArray(mat);
        if (var.uses_p_u()) p.p_u = DenseArray(mat);
        return p;
    }

    void validate(const NodeVariant& var) const {
        auto check_vecs = [&](const std::vector<DenseArray>& vs, const char* name, bool used) {
            require(vs.size() == (used ? var.terms : 0), Error::Shape,
                    std::string(name) + " term count mismatch");
            for (const auto& x : vs)
                require(x.shape() == Shape{var.d_u}, Error::Shape, std::string(name) + " shape mismatch");
        };
        check_vecs(w, "W", true);
        check_vecs(a, "A", true);
        check_vecs(b, "B", true);
        check_vecs(v, "V", var.uses_v());
        check_vecs(c, "C", var.uses_cd());
        check_vecs(d, "D", var.uses_cd());
        require(poly.size() == var.terms, Error::Shape, "poly term count mismatch");
        for (const auto& coeffs : poly) {
            require(coeffs.size() == var.poly_degree + 1, Error::Shape, "poly degree mismatch");
            for (const auto& x : coeffs)
                require(x.shape() == Shape{var.d_u}, Error::Shape, "poly coefficient shape mismatch");
        }
        const Shape mat{var.d_u, var.d_v};
        require(p_f.shape() == mat, Error::Shape, "P_f shape mismatch");
        if (var.uses_p_d()) require(p_d.shape() == mat, Error::Shape, "P_D shape mismatch");
        if (var.uses_p_r()) require(p_r.shape() == mat, Error::Shape, "P_r shape mismatch");
        if (var.uses_p_u()) require(p_u.shape() == mat, Error::Shape, "P_u shape mismatch");
    }
};

/// Horner evaluation of A_i^n(t); the spec-level one-shot operation.
inline DenseArray poly_time_term(const NodeVariant& var, const NodeParams& params, std::size_t i,
                                 double t) {
    require(i < var.terms, Error::Shape, "poly term index out of range");
    const auto& coeffs = params.poly[i];
    DenseArray h = coeffs[var.poly_degree];
    DenseArray tmp(Shape{var.d_u});
    for (std::size_t j = var.poly_degree; j-- > 0;) {
        kernels::axpy(t, h.data(), coeffs[j].data(), tmp.data(), tmp.size());
        h = tmp;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Executors: the same recipe code drives plain evaluation and tape recording,
// so both paths perform the identical kernel sequence.
// ---------------------------------------------------------------------------

struct PlainExec {
    using Handle = DenseArray;

    static void check(DenseArray& out) {
        double probe = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) probe += out[i];
        if (!std::isfinite(probe)) out.check_finite();
    }

    Handle constant(DenseArray v) { return v; }

    Handle add(const Handle& a, const Handle& b) {
        require(same_shape(a, b), Error::Shape, "add shape mismatch");
        DenseArray out(a.shape());
        kernels::add(a.data(), b.data(), out.data(), out.size());
        check(out);
        return out;
    }
    Handle hadamard(const Handle& a, const Handle& b) {
        require(same_shape(a, b), Error::Shape, "hadamard shape mismatch");
        DenseArray out(a.shape());
        kernels::hadamard(a.data(), b.data(), out.data(), out.size());
        check(out);
        return out;
    }
    Handle matvec(const Handle& m, const Handle& x) {
        require(m.rank() == 2 && x.rank() == 1 && m.shape()[1] == x.size(), Error::Shape,
                "matvec shape mismatch");
        DenseArray out(Shape{m.shape()[0]});
        kernels::matvec(m.data(), x.data(), out.data(), m.shape()[0], m.shape()[1]);
        check(out);
        return out;
    }
    Handle axpy(double s, const Handle& x, const Handle& y) {
        require(same_shape(x, y), Error::Shape, "axpy shape mismatch");
        DenseArray out(x.shape());
        kernels::axpy(s, x.data(), y.data(), out.data(), out.size());
        check(out);
        return out;
    }
    Handle activation(Activation act, const Handle& x) {
        DenseArray out(x.shape());
        if (act == Activation::Relu)
            kernels::relu(x.data(), out.data(), out.size());
        else
            kernels::tanh_(x.data(), out.data(), out.size());
        check(out);
        return out;
    }
};

struct TapeExec {
    Tape* tape;
    using Handle = NodeId;

    Handle constant(const DenseArray& v) { return tape->leaf(v); }
    Handle add(Handle a, Handle b) { return tape->add(a, b); }
    Handle hadamard(Handle a, Handle b) { return tape->hadamard(a, b); }
    Handle matvec(Handle m, Handle x) { return tape->matvec(m, x); }
    Handle axpy(double s, Handle x, Handle y) { return tape->axpy(s, x, y); }
    Handle activation(Activation act, Handle x) {
        return act == Activation::Relu ? tape->relu(x) : tape->tanh_(x);
    }
};

/// Parameter handles for one executor; mirrors NodeParams.
template <class Ex>
struct VariantProgram {
    using H = typename Ex::Handle;
    std::vector<H> w, v, a, b, c, d;
    std::vector<std::vector<H>> poly;
    H p_d{}, p_r{}, p_f{}, p_u{};
};

inline VariantProgram<PlainExec> make_plain_program(PlainExec&, const NodeVariant& var,
                                                    const NodeParams& params) {
    params.validate(var);
    VariantProgram<PlainExec> prog;
    prog.w = params.w;
    prog.v = params.v;
    prog.a = params.a;
    prog.b = params.b;
    prog.c = params.c;
    prog.d = params.d;
    prog.poly = params.poly;
    prog.p_d = params.p_d;
    prog.p_r = params.p_r;
    prog.p_f = params.p_f;
    prog.p_u = params.p_u;
    return prog;
}

/// Encoded input over time: one vector (time-invariant) or one per Euler
/// node, pre-interpolated by the caller.
template <class H>
struct EncodedSeq {
    std::vector<H> per_step;
    bool invariant = true;
    const H& at(std::size_t k) const { return invariant ? per_step[0] : per_step[k]; }
};

namespace recipe {

/// A_i^n(t) + B_i. Fused to one axpy for the common degree-1,
/// zero-constant configuration.
template <class Ex>
typename Ex::Handle poly_plus_bias(Ex& ex, const NodeVariant& var,
                                   const VariantProgram<Ex>& prog, std::size_t i, double t) {
    if (var.poly_degree == 1 && var.poly_zero_constant)
        return ex.axpy(t, prog.poly[i][1], prog.b[i]);
    auto h = prog.poly[i][var.poly_degree];
    for (std::size_t j = var.poly_degree; j-- > 0;) h = ex.axpy(t, h, prog.poly[i][j]);
    return ex.add(h, prog.b[i]);
}

/// One right-hand-side evaluation given already-projected inputs.
/// `src` = P_f f(t), `pd` = P_D D(t), `pr` = P_r R(t) (unused handles ignored).
template <class Ex>
typename Ex::Handle rhs_from_projected(Ex& ex, const NodeVariant& var,
                                       const VariantProgram<Ex>& prog,
                                       const typename Ex::Handle& psi, double t,
                                       const typename Ex::Handle& src,
                                       const typename Ex::Handle* pd,
                                       const typename Ex::Handle* pr) {
    using H = typename Ex::Handle;
    H acc{};
    bool first = true;
    for (std::size_t i = 0; i < var.terms; ++i) {
        H lin{};
        switch (var.kind) {
        case NodeVariantKind::SourceOnly:
            lin = ex.hadamard(prog.a[i], psi);
            break;
        case NodeVariantKind::DiffusionInput:
        case NodeVariantKind::MultiInput:
        case NodeVariantKind::DiffusionReactionFull:
            lin = ex.hadamard(ex.hadamard(prog.a[i], *pd), psi);
            break;
        case NodeVariantKind::NavierStokes: {
            H az = ex.hadamard(prog.a[i], psi);
            H cz = ex.hadamard(prog.c[i], psi);
            H dz = ex.hadamard(prog.d[i], psi);
            lin = ex.add(az, ex.hadamard(cz, dz));
            break;
        }
        }
        H pre = ex.add(lin, poly_plus_bias(ex, var, prog, i, t));
        H sig = ex.activation(var.activation, pre);
        H term;
        if (var.kind == NodeVariantKind::DiffusionReactionFull) {
            // (W_i (.) [P_r R] + V_i) (.) sigma(...)
            H coeff = ex.add(ex.hadamard(prog.w[i], *pr), prog.v[i]);
            term = ex.hadamard(coeff, sig);
        } else {
            term = ex.hadamard(prog.w[i], sig);
        }
        acc = first ? term : ex.add(acc, term);
        first = false;
    }
    if (var.source_inside_sum()) {
        // P_f f sits inside the sum over i, so it enters P times.
        return ex.axpy(static_cast<double>(var.terms), src, acc);
    }
    return ex.add(acc, src);
}

/// Unrolled explicit Euler: psi(t_{k+1}) = psi(t_k) + dt * rhs(psi(t_k), t_k).
/// Returns all N_t + 1 states. Projections of time-invariant inputs are
/// hoisted out of the loop.
template <class Ex>
std::vector<typename Ex::Handle> euler(Ex& ex, const NodeVariant& var,
                                       const VariantProgram<Ex>& prog,
                                       const typename Ex::Handle& psi0,
                                       const std::map<InputRole, EncodedSeq<typename Ex::Handle>>& inputs,
                                       double horizon, std::size_t n_steps) {
    using H = typename Ex::Handle;
    require(n_steps >= 1, Error::Validation, "N_t must be >= 1");
    for (InputRole role : var.required_roles())
        if (role != InputRole::Initial)
            require(inputs.count(role) == 1, Error::MissingInput,
                    std::string("variant requires encoded input ") + input_role_name(role));

    const double dt = horizon / static_cast<double>(n_steps);
    const auto& f_seq = inputs.at(InputRole::Source);
    const EncodedSeq<H>* d_seq = var.uses_p_d() ? &inputs.at(InputRole::Diffusion) : nullptr;
    const EncodedSeq<H>* r_seq = var.uses_p_r() ? &inputs.at(InputRole::Reaction) : nullptr;

    H src{}, pd{}, pr{};
    if (f_seq.invariant) src = ex.matvec(prog.p_f, f_seq.at(0));
    if (d_seq && d_seq->invariant) pd = ex.matvec(prog.p_d, d_seq->at(0));
    if (r_seq && r_seq->invariant) pr = ex.matvec(prog.p_r, r_seq->at(0));

    std::vector<H> states;
    states.reserve(n_steps + 1);
    states.push_back(psi0);
    H psi = psi0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        try {
            H src_k = f_seq.invariant ? src : ex.matvec(prog.p_f, f_seq.at(k));
            H pd_k{};
            if (d_seq) pd_k = d_seq->invariant ? pd : ex.matvec(prog.p_d, d_seq->at(k));
            H pr_k{};
            if (r_seq) pr_k = r_seq->invariant ? pr : ex.matvec(prog.p_r, r_seq->at(k));
            H rhs = rhs_from_projected(ex, var, prog, psi, t, src_k, d_seq ? &pd_k : nullptr,
                                       r_seq ? &pr_k : nullptr);
            psi = ex.axpy(dt, rhs, psi);
        } catch (const NodeOnetError& e) {
            if (e.code() == Error::NonFinite)
                raise(Error::Diverged, "non-finite state at Euler step " + std::to_string(k + 1));
            throw;
        }
        states.push_back(psi);
    }
    return states;
}

}  // namespace recipe

// ---------------------------------------------------------------------------
// Plain one-shot operations.
// ---------------------------------------------------------------------------

inline DenseArray rhs(const NodeVariant& var, const NodeParams& params, const DenseArray& psi,
                      double t, const std::map<InputRole, DenseArray>& encoded) {
    var.validate();
    require(psi.shape() == Shape{var.d_u}, Error::Shape, "psi must have length d_U");
    for (InputRole role : var.required_roles()) {
        if (role == InputRole::Initial) continue;
        require(encoded.count(role) == 1, Error::MissingInput,
                std::string("missing encoded input ") + input_role_name(role));
        require(encoded.at(role).shape() == Shape{var.d_v}, Error::Shape,
                std::string("encoded input ") + input_role_name(role) + " must have length d_V");
    }
    PlainExec ex;
    auto prog = make_plain_program(ex, var, params);
    DenseArray src = ex.matvec(prog.p_f, encoded.at(InputRole::Source));
    DenseArray pd, pr;
    if (var.uses_p_d()) pd = ex.matvec(prog.p_d, encoded.at(InputRole::Diffusion));
    if (var.uses_p_r()) pr = ex.matvec(prog.p_r, encoded.at(InputRole::Reaction));
    return recipe::rhs_from_projected(ex, var, prog, psi, t, src, var.uses_p_d() ? &pd : nullptr,
                                      var.uses_p_r() ? &pr : nullptr);
}

/// Encoded input trajectory for the plain integrator.
struct EncodedInput {
    DenseArray constant;
    std::vector<double> times;          // time-dependent case
    std::vector<DenseArray> snapshots;  // aligned with `times`

    static EncodedInput invariant(DenseArray v) {
        EncodedInput e;
        e.constant = std::move(v);
        return e;
    }

    bool time_dependent() const noexcept { return !times.empty(); }

    /// Piecewise-linear interpolation between snapshot times, clamped at the
    /// ends.
    DenseArray at(double t) const {
        if (!time_dependent()) return constant;
        require(times.size() == snapshots.size() && !times.empty(), Error::Shape,
                "encoded trajectory times/snapshots mismatch");
        if (t <= times.front()) return snapshots.front();
        if (t >= times.back()) return snapshots.back();
        std::size_t hi = 1;
        while (times[hi] < t) ++hi;
        const double w = (t - times[hi - 1]) / (times[hi] - times[hi - 1]);
        DenseArray out(snapshots[hi].shape());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (1.0 - w) * snapshots[hi - 1][i] + w * snapshots[hi][i];
        return out;
    }
};

struct LatentTrajectory {
    std::vector<double> times;       // t_0 = 0 .. t_{N_t} = T, uniform
    std::vector<DenseArray> states;  // psi(t_k)
};

inline LatentTrajectory integrate_euler(const NodeVariant& var, const NodeParams& params,
                                        const std::map<InputRole, EncodedInput>& encoded,
                                        double horizon, std::size_t n_steps) {
    var.validate();
    PlainExec ex;
    auto prog = make_plain_program(ex, var, params);

    const double dt = horizon / static_cast<double>(n_steps);
    std::map<InputRole, EncodedSeq<DenseArray>> seqs;
    for (InputRole role : var.required_roles()) {
        if (role == InputRole::Initial) continue;
        require(encoded.count(role) == 1, Error::MissingInput,
                std::string("missing encoded input ") + input_role_name(role));
        const EncodedInput& in = encoded.at(role);
        EncodedSeq<DenseArray> seq;
        if (in.time_dependent()) {
            seq.invariant = false;
            for (std::size_t k = 0; k < n_steps; ++k)
                seq.per_step.push_back(in.at(static_cast<double>(k) * dt));
        } else {
            seq.per_step.push_back(in.constant);
        }
        for (const auto& snap : seq.per_step)
            require(snap.shape() == Shape{var.d_v}, Error::Shape, "encoded input must have length d_V");
        seqs.emplace(role, std::move(seq));
    }

    DenseArray psi0(Shape{var.d_u});
    if (var.uses_p_u()) {
        require(encoded.count(InputRole::Initial) == 1, Error::MissingInput, "missing encoded input u0");
        psi0 = ex.matvec(prog.p_u, encoded.at(InputRole::Initial).constant);
    }

    LatentTrajectory traj;
    traj.states = recipe::euler(ex, var, prog, psi0, seqs, horizon, n_steps);
    traj.times.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) traj.times[k] = static_cast<double>(k) * dt;
    return traj;
}

}  // namespace nodeonet

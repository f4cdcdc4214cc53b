#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "nodeonet/rng.hpp"
#include "nodeonet/tape.hpp"

using namespace nodeonet;

namespace {

// ---------------------------------------------------------------------------
// Central finite-difference oracle. Independent of the backward rules: it
// only re-runs the forward build at perturbed leaf values.
// ---------------------------------------------------------------------------

using BuildFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

double eval_loss(const BuildFn& build, const std::vector<DenseArray>& inputs) {
    Tape tape;
    std::vector<NodeId> leaves;
    leaves.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
        leaves.push_back(tape.param(static_cast<ParamId>(i), inputs[i]));
    NodeId loss = build(tape, leaves);
    return tape.scalar_value(loss);
}

std::vector<DenseArray> fd_gradient(const BuildFn& build, const std::vector<DenseArray>& inputs,
                                    double h = 1e-5) {
    std::vector<DenseArray> grads;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        DenseArray g(inputs[i].shape());
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            auto plus = inputs;
            auto minus = inputs;
            plus[i][j] += h;
            minus[i][j] -= h;
            g[j] = (eval_loss(build, plus) - eval_loss(build, minus)) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

std::vector<DenseArray> ad_gradient(const BuildFn& build, const std::vector<DenseArray>& inputs) {
    Tape tape;
    std::vector<NodeId> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        leaves.push_back(tape.param(static_cast<ParamId>(i), inputs[i]));
    NodeId loss = build(tape, leaves);
    auto grads = tape.backward(loss);
    std::vector<DenseArray> out;
    for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(grads.at(static_cast<ParamId>(i)));
    return out;
}

/// Componentwise relative deviation with a floor tied to the gradient scale,
/// below which central differences are dominated by cancellation noise.
double max_rel_deviation(const std::vector<DenseArray>& ad, const std::vector<DenseArray>& fd) {
    double gmax = 0.0;
    for (const auto& g : fd)
        for (std::size_t j = 0; j < g.size(); ++j) gmax = std::max(gmax, std::fabs(g[j]));
    double worst = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) {
        for (std::size_t j = 0; j < ad[i].size(); ++j) {
            double denom = std::max({std::fabs(fd[i][j]), std::fabs(ad[i][j]), 1e-3 * gmax, 1e-12});
            worst = std::max(worst, std::fabs(ad[i][j] - fd[i][j]) / denom);
        }
    }
    return worst;
}

DenseArray random_vec(RngState& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    DenseArray v(Shape{n});
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

/// Random composite graph over the op vocabulary, d-dimensional leaves,
/// `depth` layers, scalar output via mean.
BuildFn random_graph(std::uint64_t seed, int depth) {
    return [seed, depth](Tape& t, const std::vector<NodeId>& leaves) {
        RngState rng(seed);
        std::vector<NodeId> pool(leaves.begin(), leaves.end());
        auto pick = [&]() { return pool[rng.next_u64() % pool.size()]; };
        for (int d = 0; d < depth; ++d) {
            int op = static_cast<int>(rng.next_u64() % 8);
            NodeId x = pick(), y = pick();
            NodeId made;
            switch (op) {
            case 0: made = t.add(x, y); break;
            case 1: made = t.sub(x, y); break;
            case 2: made = t.hadamard(x, y); break;
            case 3: made = t.scale(x, rng.uniform(-2.0, 2.0)); break;
            case 4: made = t.relu(x); break;
            case 5: made = t.tanh_(x); break;
            case 6: made = t.square(x); break;
            default: made = t.axpy(rng.uniform(-1.5, 1.5), x, y); break;
            }
            pool.push_back(made);
        }
        NodeId joined = pool.back();
        for (std::size_t i = 0; i + 1 < pool.size(); i += 3) joined = t.add(joined, pool[i]);
        return t.mean(joined);
    };
}

/// Smallest |pre-activation| over all relu nodes; instances closer than
/// 1e-4 to the kink are resampled.
double kink_distance(const BuildFn& build, const std::vector<DenseArray>& inputs) {
    Tape tape;
    std::vector<NodeId> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        leaves.push_back(tape.param(static_cast<ParamId>(i), inputs[i]));
    build(tape, leaves);
    return tape.min_distance_to_relu_kink();
}

}  // namespace

TEST_CASE("primitive forward values") {
    Tape t;
    NodeId a = t.leaf(DenseArray::vector({1, 2, 3}));
    NodeId b = t.leaf(DenseArray::vector({4, 5, 6}));
    NodeId h = t.hadamard(a, b);
    CHECK(t.value(h)[0] == 4.0);
    CHECK(t.value(h)[1] == 10.0);
    CHECK(t.value(h)[2] == 18.0);

    NodeId r = t.relu(t.leaf(DenseArray::vector({-1, 0, 2})));
    CHECK(t.value(r)[0] == 0.0);
    CHECK(t.value(r)[1] == 0.0);
    CHECK(t.value(r)[2] == 2.0);

    NodeId eye = t.leaf(DenseArray::matrix(2, 2, {1, 0, 0, 1}));
    NodeId x = t.leaf(DenseArray::vector({3, 7}));
    NodeId mv = t.matvec(eye, x);
    CHECK(t.value(mv)[0] == 3.0);
    CHECK(t.value(mv)[1] == 7.0);
}

TEST_CASE("relu subgradient convention") {
    CHECK(relu_subgradient_convention() == 0.0);

    auto deriv_at = [](double x0) {
        Tape t;
        NodeId w = t.param(0, DenseArray::vector({x0}));
        NodeId loss = t.sum(t.relu(w));
        return t.backward(loss).at(0)[0];
    };
    CHECK(deriv_at(0.0) == 0.0);
    CHECK(deriv_at(1e-12) == 1.0);
    CHECK(deriv_at(-1e-12) == 0.0);
}

TEST_CASE("backward on linear and quadratic forms") {
    Tape t;
    NodeId w = t.param(0, DenseArray::vector({1, 2}));
    NodeId x = t.leaf(DenseArray::vector({3, 4}));
    NodeId loss = t.sum(t.hadamard(w, x));
    auto g = t.backward(loss);
    CHECK(g.at(0)[0] == 3.0);
    CHECK(g.at(0)[1] == 4.0);

    Tape t2;
    NodeId w2 = t2.param(0, DenseArray::vector({2, -2}));
    NodeId loss2 = t2.mean(t2.square(w2));
    auto g2 = t2.backward(loss2);
    CHECK(g2.at(0)[0] == 2.0);
    CHECK(g2.at(0)[1] == -2.0);
}

TEST_CASE("random composite graphs match central finite differences") {
    // d=4 leaves, depth 6, as in the module contract; several instances.
    int accepted = 0;
    for (std::uint64_t seed = 1; accepted < 12 && seed < 200; ++seed) {
        RngState rng(seed * 977);
        std::vector<DenseArray> inputs{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
        BuildFn build = random_graph(seed, 6);
        if (kink_distance(build, inputs) < 1e-4) continue;
        ++accepted;
        auto fd = fd_gradient(build, inputs);
        auto ad = ad_gradient(build, inputs);
        INFO("seed " << seed);
        CHECK(max_rel_deviation(ad, fd) <= 1e-6);
    }
    CHECK(accepted == 12);
}

TEST_CASE("graphs with matvec, concat, slice, sum, abs differentiate correctly") {
    BuildFn build = [](Tape& t, const std::vector<NodeId>& leaves) {
        NodeId m = leaves[0];  // 3x4 matrix
        NodeId x = leaves[1];  // 4-vector
        NodeId y = t.matvec(m, x);
        NodeId c = t.concat(std::array<NodeId, 2>{y, x}, Tape::ShapeSpec{7, 7, 0});
        NodeId s = t.slice(c, 1, 5);
        NodeId a = t.abs_(s);
        return t.add(t.sum(a), t.mean(t.square(y)));
    };
    RngState rng(42);
    DenseArray m(Shape{3, 4});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-1.0, 1.0);
    std::vector<DenseArray> inputs{m, random_vec(rng, 4)};
    auto fd = fd_gradient(build, inputs);
    auto ad = ad_gradient(build, inputs);
    CHECK(max_rel_deviation(ad, fd) <= 1e-6);
}

TEST_CASE("backward is linear in the loss") {
    RngState rng(7);
    std::vector<DenseArray> inputs{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
    const double ca = 1.7, cb = -0.6;

    BuildFn f = random_graph(11, 6);
    BuildFn g = random_graph(12, 6);
    BuildFn combo = [&](Tape& t, const std::vector<NodeId>& leaves) {
        NodeId lf = f(t, leaves);
        NodeId lg = g(t, leaves);
        return t.add(t.scale(lf, ca), t.scale(lg, cb));
    };

    auto gf = ad_gradient(f, inputs);
    auto gg = ad_gradient(g, inputs);
    auto gc = ad_gradient(combo, inputs);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (std::size_t j = 0; j < inputs[i].size(); ++j)
            CHECK(gc[i][j] == Catch::Approx(ca * gf[i][j] + cb * gg[i][j]).margin(1e-12));
}

TEST_CASE("forward+backward re-runs are bitwise deterministic") {
    RngState rng(19);
    std::vector<DenseArray> inputs{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
    BuildFn build = random_graph(23, 6);

    Tape tape;
    std::vector<NodeId> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        leaves.push_back(tape.param(static_cast<ParamId>(i), inputs[i]));
    NodeId loss = build(tape, leaves);

    double v1 = tape.scalar_value(loss);
    auto g1 = tape.backward(loss);
    tape.forward_all();
    double v2 = tape.scalar_value(loss);
    auto g2 = tape.backward(loss);

    CHECK(v1 == v2);
    for (auto& [pid, g] : g1)
        for (std::size_t j = 0; j < g.size(); ++j) CHECK(g[j] == g2.at(pid)[j]);
}

TEST_CASE("shape mismatches and non-scalar losses are rejected") {
    Tape t;
    NodeId a = t.leaf(DenseArray::vector({1, 2, 3}));
    NodeId b = t.leaf(DenseArray::vector({1, 2}));
    CHECK_THROWS_MATCHES(t.add(a, b), NodeOnetError,
                         Catch::Matchers::Predicate<NodeOnetError>(
                             [](const NodeOnetError& e) { return e.code() == Error::Shape; }));

    NodeId m = t.leaf(DenseArray::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS(t.matvec(m, b), NodeOnetError);  // needs length 3

    CHECK_THROWS_MATCHES(t.backward(a), NodeOnetError,
                         Catch::Matchers::Predicate<NodeOnetError>(
                             [](const NodeOnetError& e) { return e.code() == Error::NonScalarLoss; }));
}

TEST_CASE("non-finite results raise") {
    Tape t;
    NodeId big = t.leaf(DenseArray::vector({1e308, 1e308}));
    CHECK_THROWS_MATCHES(t.add(big, big), NodeOnetError,
                         Catch::Matchers::Predicate<NodeOnetError>(
                             [](const NodeOnetError& e) { return e.code() == Error::NonFinite; }));
}

TEST_CASE("generic record_op mirrors the typed interface") {
    Tape t;
    NodeId a = t.leaf(DenseArray::vector({1, -2, 3}));
    NodeId b = t.leaf(DenseArray::vector({2, 2, 2}));
    NodeId h = t.record_op(OpKind::Hadamard, {a, b});
    CHECK(t.value(h)[1] == -4.0);
    NodeId s = t.record_op(OpKind::Slice, {h}, 1.0, 2.0);
    CHECK(t.value_len(s) == 2);
    CHECK(t.value(s)[0] == -4.0);
    NodeId ax = t.record_op(OpKind::Axpy, {a, b}, 10.0);
    CHECK(t.value(ax)[0] == 12.0);
}

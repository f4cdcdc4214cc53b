#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nodeonet/evaluation.hpp"
#include "nodeonet/gradcheck.hpp"
#include "nodeonet/training.hpp"

using namespace nodeonet;

namespace {

/// Tiny source-only setup with a Fourier decoder used by several cases.
struct Toy {
    NodeModel model;
    TrainingBatch batch;
    TrainConfig config;
};

Toy make_toy(std::uint64_t seed, std::size_t n_samples = 2) {
    NodeVariant var;
    var.kind = NodeVariantKind::SourceOnly;
    var.terms = 3;
    var.d_u = 4;
    var.d_v = 3;
    DecoderSpec dec;
    dec.kind = DecoderKind::Fourier;
    dec.d_u = 4;
    dec.finalize();

    Toy toy;
    toy.model = init_params(var, dec, seed);
    toy.model.train_horizon = 1.0;
    toy.model.train_steps = 5;
    toy.batch = gradcheck_detail::random_batch(var, seed + 1, n_samples, 5, 6, 1);
    toy.config.epochs = 0;
    toy.config.learning_rate = 1e-3;
    return toy;
}

}  // namespace

TEST_CASE("loss trivial values") {
    SECTION("predictions equal labels gives zero loss") {
        Toy toy = make_toy(3);
        // Generate labels from the model itself on the batch grid.
        for (auto& sample : toy.batch.samples) {
            std::map<InputRole, EncodedInput> enc;
            for (const auto& [role, v] : sample.encoded) enc.emplace(role, EncodedInput::invariant(v));
            Prediction pred = forward_on_grid(toy.model, enc, toy.batch.label_times,
                                              toy.batch.label_points, 1.0, toy.batch.n_t());
            sample.labels = pred.values;
        }
        LossBreakdown lb = loss(toy.model, toy.batch, toy.config);
        CHECK(lb.data_term <= 1e-20);
        CHECK(lb.total <= 1e-20);
    }

    SECTION("single point squared error") {
        NodeVariant var;
        var.kind = NodeVariantKind::SourceOnly;
        var.terms = 1;
        var.d_u = 1;
        var.d_v = 1;
        DecoderSpec dec;
        dec.kind = DecoderKind::Fourier;
        dec.d_u = 1;
        dec.finalize();
        NodeModel model = init_params(var, dec, 1);
        // Zero dynamics: prediction at t_1 is psi(0) = 0, label 2 -> loss 4.
        model.params = NodeParams::zeros(var);
        TrainingBatch batch;
        batch.horizon = 1.0;
        batch.label_times = {1.0};
        batch.label_points = {{0.5}};
        TrainSample s;
        s.encoded.emplace(InputRole::Source, DenseArray::vector({0.0}));
        s.labels = DenseArray(Shape{1, 1}, std::vector<double>{2.0});
        batch.samples.push_back(s);
        TrainConfig cfg;
        LossBreakdown lb = loss(model, batch, cfg);
        CHECK(lb.data_term == 4.0);
    }

    SECTION("l1 regularization value") {
        Toy toy = make_toy(5);
        toy.config.lambda = 1.0;
        toy.config.reg_kind = TrainConfig::Reg::L1;
        LossBreakdown lb = loss(toy.model, toy.batch, toy.config);
        double manual = 0.0;
        auto refs = flatten_params(toy.model);
        for (const auto& r : refs)
            for (std::size_t i = 0; i < r.value->size(); ++i) manual += std::fabs((*r.value)[i]);
        CHECK(lb.reg_term == Catch::Approx(manual).margin(1e-12));
        CHECK(lb.total == Catch::Approx(lb.data_term + manual).margin(1e-9));
    }
}

TEST_CASE("grid mismatch is rejected") {
    Toy toy = make_toy(7);
    toy.batch.label_times.back() = 0.9;  // no longer k*T/N_t
    CHECK_THROWS_MATCHES(loss(toy.model, toy.batch, toy.config), NodeOnetError,
                         Catch::Matchers::Predicate<NodeOnetError>(
                             [](const NodeOnetError& e) { return e.code() == Error::GridMismatch; }));
}

TEST_CASE("adam hand-checked first step") {
    NodeModel dummy;
    dummy.variant.kind = NodeVariantKind::SourceOnly;
    dummy.variant.terms = 1;
    dummy.variant.d_u = 1;
    dummy.variant.d_v = 1;
    dummy.params = NodeParams::zeros(dummy.variant);
    dummy.params.w[0] = DenseArray::vector({1.0});

    auto refs = flatten_params(dummy);
    std::vector<char> trainable(refs.size(), 1);
    std::vector<DenseArray> grads;
    for (const auto& r : refs) grads.emplace_back(r.value->shape());
    // gradient 1 on W only
    grads[0][0] = 1.0;

    AdamState state = AdamState::like(refs);
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    adam_step(refs, trainable, grads, state, cfg);
    // mhat = 1, vhat = 1: step = -lr / (1 + eps) ~ -0.1.
    CHECK(dummy.params.w[0][0] == Catch::Approx(0.9).margin(1e-8));

    SECTION("zero gradients from a fresh state leave parameters unchanged") {
        NodeModel d2 = dummy;
        auto r2 = flatten_params(d2);
        std::vector<DenseArray> zero_grads;
        for (const auto& r : r2) zero_grads.emplace_back(r.value->shape());
        AdamState s2 = AdamState::like(r2);
        const double before = d2.params.w[0][0];
        adam_step(r2, trainable, zero_grads, s2, cfg);
        adam_step(r2, trainable, zero_grads, s2, cfg);
        CHECK(d2.params.w[0][0] == before);
    }

    SECTION("identical steps are bitwise reproducible") {
        NodeModel a = dummy, b = dummy;
        auto ra = flatten_params(a), rb = flatten_params(b);
        AdamState sa = AdamState::like(ra), sb = AdamState::like(rb);
        adam_step(ra, trainable, grads, sa, cfg);
        adam_step(rb, trainable, grads, sb, cfg);
        CHECK(a.params.w[0][0] == b.params.w[0][0]);
        CHECK(sa.m[0][0] == sb.m[0][0]);
        CHECK(sa.v[0][0] == sb.v[0][0]);
    }
}

TEST_CASE("init_params bounds and reproducibility") {
    NodeVariant var;
    var.kind = NodeVariantKind::MultiInput;
    var.terms = 4;
    var.d_u = 100;
    var.d_v = 20;
    DecoderSpec dec;
    dec.kind = DecoderKind::LearnedBasis;
    dec.d_u = 100;
    dec.hidden = {100};
    NodeModel m1 = init_params(var, dec, 42);
    NodeModel m2 = init_params(var, dec, 42);

    auto r1 = flatten_params(m1), r2 = flatten_params(m2);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t p = 0; p < r1.size(); ++p)
        for (std::size_t i = 0; i < r1[p].value->size(); ++i)
            CHECK((*r1[p].value)[i] == (*r2[p].value)[i]);

    // fan_in = 100 for the hidden->output layer: everything within 0.1.
    const DenseArray& w_last = m1.decoder.weights.back();
    for (std::size_t i = 0; i < w_last.size(); ++i) CHECK(std::fabs(w_last[i]) <= 0.1);
    // per-term vectors bounded by 1/sqrt(d_U) = 0.1
    for (std::size_t i = 0; i < var.d_u; ++i) CHECK(std::fabs(m1.params.w[0][i]) <= 0.1);
}

TEST_CASE("init draw statistics match the uniform law") {
    // 10^6 draws via the init path: mean within 3 sigma / sqrt(n).
    NodeVariant var;
    var.kind = NodeVariantKind::SourceOnly;
    var.terms = 2500;
    var.d_u = 100;
    var.d_v = 100;
    DecoderSpec dec;
    dec.kind = DecoderKind::Fourier;
    dec.d_u = 100;
    NodeModel m = init_params(var, dec, 7);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < var.terms; ++i)
        for (const DenseArray* v : {&m.params.w[i], &m.params.a[i], &m.params.b[i], &m.params.poly[i][1]})
            for (std::size_t j = 0; j < v->size(); ++j) {
                sum += (*v)[j];
                ++count;
            }
    REQUIRE(count == 1000000);
    const double bound = 0.1;  // 1/sqrt(d_U)
    const double sigma = bound / std::sqrt(3.0);
    CHECK(std::fabs(sum / static_cast<double>(count)) <= 3.0 * sigma / 1000.0);
}

TEST_CASE("loss gradients match finite differences on a tiny model") {
    auto results = run_gradient_checks(2024);
    for (const auto& r : results) {
        INFO(r.case_name << " dev=" << r.max_rel_deviation << " kink=" << r.kink_distance);
        CHECK(r.pass);
        CHECK(r.max_rel_deviation <= 1e-6);
    }
}

TEST_CASE("training epochs=0 returns the initial model") {
    Toy toy = make_toy(11);
    NodeModel before = toy.model;
    toy.config.epochs = 0;
    TrainResult res = train(toy.model, toy.batch, toy.config);
    CHECK(res.epochs_run == 0);
    auto ra = flatten_params(before), rb = flatten_params(toy.model);
    for (std::size_t p = 0; p < ra.size(); ++p)
        for (std::size_t i = 0; i < ra[p].value->size(); ++i)
            CHECK((*ra[p].value)[i] == (*rb[p].value)[i]);
}

TEST_CASE("toy problem converges to near-zero loss") {
    // Fit psi' = const with a constant decoder basis to labels u = t: the
    // family contains the exact solution, so ADAM should reach ~0.
    NodeVariant var;
    var.kind = NodeVariantKind::SourceOnly;
    var.terms = 1;
    var.d_u = 1;
    var.d_v = 1;
    DecoderSpec dec;
    dec.kind = DecoderKind::Fourier;  // d_U = 1 -> constant basis
    dec.d_u = 1;
    dec.finalize();
    NodeModel model = init_params(var, dec, 5);
    model.train_horizon = 1.0;
    model.train_steps = 5;

    TrainingBatch batch;
    batch.horizon = 1.0;
    for (int k = 1; k <= 5; ++k) batch.label_times.push_back(k / 5.0);
    batch.label_points = {{0.25}, {0.75}};
    TrainSample s;
    s.encoded.emplace(InputRole::Source, DenseArray::vector({1.0}));
    DenseArray labels(Shape{5, 2});
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 2; ++j) labels.at2(k, j) = (k + 1) / 5.0;
    s.labels = labels;
    batch.samples.push_back(s);

    TrainConfig cfg;
    cfg.epochs = 5000;
    cfg.learning_rate = 1e-2;
    cfg.log_every = 1000;
    TrainResult res = train(model, batch, cfg);
    CHECK(res.final_loss.total < 1e-6);
}

TEST_CASE("freeze_decoder keeps the basis parameters bitwise") {
    NodeVariant var;
    var.kind = NodeVariantKind::SourceOnly;
    var.terms = 2;
    var.d_u = 3;
    var.d_v = 2;
    DecoderSpec dec;
    dec.kind = DecoderKind::LearnedBasis;
    dec.d_u = 3;
    dec.hidden = {6};
    NodeModel model = init_params(var, dec, 13);
    model.train_horizon = 1.0;
    model.train_steps = 4;
    DecoderParams frozen = model.decoder;

    TrainingBatch batch = gradcheck_detail::random_batch(var, 77, 3, 4, 5, 1);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.freeze_decoder = true;
    cfg.learning_rate = 1e-2;
    train(model, batch, cfg);

    for (std::size_t l = 0; l < frozen.weights.size(); ++l) {
        for (std::size_t i = 0; i < frozen.weights[l].size(); ++i)
            CHECK(model.decoder.weights[l][i] == frozen.weights[l][i]);
        for (std::size_t i = 0; i < frozen.biases[l].size(); ++i)
            CHECK(model.decoder.biases[l][i] == frozen.biases[l][i]);
    }
}

TEST_CASE("two identical training runs are bitwise identical") {
    auto run = [] {
        Toy toy = make_toy(21, 3);
        toy.config.epochs = 40;
        toy.config.learning_rate = 1e-2;
        train(toy.model, toy.batch, toy.config);
        std::vector<double> flat;
        for (const auto& r : flatten_params(toy.model))
            for (std::size_t i = 0; i < r.value->size(); ++i) flat.push_back((*r.value)[i]);
        return flat;
    };
    auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("converged runs have a non-increasing smoothed loss tail") {
    NodeVariant var;
    var.kind = NodeVariantKind::SourceOnly;
    var.terms = 2;
    var.d_u = 2;
    var.d_v = 2;
    DecoderSpec dec;
    dec.kind = DecoderKind::Fourier;
    dec.d_u = 2;
    NodeModel model = init_params(var, dec, 31);
    model.train_horizon = 1.0;
    TrainingBatch batch = gradcheck_detail::random_batch(var, 32, 2, 4, 3, 1);
    // make the labels small so the model can fit them
    for (auto& s : batch.samples)
        for (std::size_t i = 0; i < s.labels.size(); ++i) s.labels[i] *= 0.05;

    TrainConfig cfg;
    cfg.epochs = 3000;
    cfg.learning_rate = 3e-3;
    cfg.log_every = 1;
    TrainResult res = train(model, batch, cfg);

    // 100-epoch moving average over the final 80%: at most 5% of windows may
    // increase, each by less than 1e-3 relative.
    const auto& hist = res.history;
    std::vector<double> ma;
    const std::size_t w = 100;
    for (std::size_t i = 0; i + w <= hist.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = i; j < i + w; ++j) s += hist[j].total;
        ma.push_back(s / static_cast<double>(w));
    }
    const std::size_t start = ma.size() / 5;
    std::size_t violations = 0;
    for (std::size_t i = start + 1; i < ma.size(); ++i) {
        if (ma[i] > ma[i - 1]) {
            ++violations;
            CHECK((ma[i] - ma[i - 1]) / std::max(ma[i - 1], 1e-300) < 1e-3);
        }
    }
    CHECK(violations <= (ma.size() - start) / 20);
}

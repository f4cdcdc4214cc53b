#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "nodeonet/dataset.hpp"
#include "nodeonet/experiment.hpp"

using namespace nodeonet;

TEST_CASE("dr-source dataset matches the requested resolutions") {
    BuildOptions opt;
    opt.n_train = 4;
    opt.n_test = 2;
    opt.nx = 10;
    opt.nt = 5;
    opt.test_nx = 20;
    opt.test_nt = 10;
    opt.seed = 5;
    Dataset ds = build_dataset(ProblemFamily::DrSource, opt);

    CHECK(ds.train.samples.size() == 4);
    CHECK(ds.test.samples.size() == 2);
    CHECK(ds.train.times.size() == 5);
    CHECK(ds.train.points.size() == 10);
    CHECK(ds.train.samples[0].labels.shape() == Shape{5, 10});
    CHECK(ds.test.samples[0].labels.shape() == Shape{10, 20});
    CHECK(ds.train.times.back() == Catch::Approx(1.0));
    // inputs live on the fine 1001-point grid
    CHECK(ds.train.samples[0].fields.at(InputRole::Source).values.size() == 1001);
}

TEST_CASE("empty training split is a valid dataset") {
    BuildOptions opt;
    opt.n_train = 0;
    opt.n_test = 2;
    opt.nx = 10;
    opt.nt = 5;
    Dataset ds = build_dataset(ProblemFamily::DrSource, opt);
    CHECK(ds.train.samples.empty());
    CHECK(ds.test.samples.size() == 2);
    Container c = dataset_to_container(ds);
    Dataset back = dataset_from_container(c);
    CHECK(back.train.samples.empty());
    CHECK(back.test.samples.size() == 2);
}

TEST_CASE("dataset serialization is bitwise deterministic") {
    auto build_bytes = [] {
        BuildOptions opt;
        opt.n_train = 3;
        opt.n_test = 2;
        opt.nx = 8;
        opt.nt = 4;
        opt.seed = 11;
        Dataset ds = build_dataset(ProblemFamily::DrMulti, opt);
        return encode_container(dataset_to_container(ds));
    };
    CHECK(build_bytes() == build_bytes());
}

TEST_CASE("threaded generation matches single-threaded bitwise") {
    BuildOptions opt;
    opt.n_train = 4;
    opt.n_test = 0;
    opt.nx = 8;
    opt.nt = 4;
    opt.seed = 13;
    opt.threads = 1;
    std::string a = encode_container(dataset_to_container(build_dataset(ProblemFamily::DrSource, opt)));
    opt.threads = 3;
    std::string b = encode_container(dataset_to_container(build_dataset(ProblemFamily::DrSource, opt)));
    CHECK(a == b);
}

TEST_CASE("ns-initial dataset has the documented shape") {
    BuildOptions opt;
    opt.n_train = 2;
    opt.n_test = 1;
    opt.nx = 16;      // label grid side
    opt.nt = 4;
    opt.grid_n = 32;
    opt.horizon = 1.0;
    opt.seed = 3;
    Dataset ds = build_dataset(ProblemFamily::NsInitial, opt);
    CHECK(ds.train.samples[0].labels.shape() == Shape{4, 256});
    CHECK(ds.train.points.size() == 256);
    CHECK(ds.shared.count(InputRole::Source) == 1);   // fixed forcing stored once
    CHECK(ds.train.samples[0].fields.at(InputRole::Initial).n2 == 32);

    Container c = dataset_to_container(ds);
    Dataset back = dataset_from_container(c);
    CHECK(back.shared.at(InputRole::Source).n2 == 32);
    const auto& a = ds.train.samples[1].labels;
    const auto& b = back.train.samples[1].labels;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("dr-multi draws positive diffusion and both inputs") {
    BuildOptions opt;
    opt.n_train = 2;
    opt.n_test = 0;
    opt.nx = 8;
    opt.nt = 4;
    Dataset ds = build_dataset(ProblemFamily::DrMulti, opt);
    for (const auto& s : ds.train.samples) {
        REQUIRE(s.fields.count(InputRole::Diffusion) == 1);
        REQUIRE(s.fields.count(InputRole::Source) == 1);
        for (double v : s.fields.at(InputRole::Diffusion).values) CHECK(v >= 0.01);
    }
    CHECK(ds.length_scale == 0.2);
}

TEST_CASE("config validation rejects mismatched d_V and unknown keys") {
    BuildOptions opt;
    opt.n_train = 1;
    opt.n_test = 1;
    opt.nx = 16;
    opt.nt = 2;
    opt.grid_n = 32;
    opt.horizon = 1.0;
    Dataset ds = build_dataset(ProblemFamily::NsInitial, opt);

    nlohmann::json j{{"problem", "ns-initial"},
                     {"d_V", 100},  // should be 256
                     {"d_U", 8},
                     {"P", 4},
                     {"decoder", {{"kind", "learned"}, {"hidden", {8}}}},
                     {"train", {{"epochs", 1}, {"learning_rate", 1e-3}}}};
    ExperimentConfig cfg = parse_experiment_config(j);
    CHECK_THROWS_MATCHES(build_model(cfg, ds), NodeOnetError,
                         Catch::Matchers::Predicate<NodeOnetError>(
                             [](const NodeOnetError& e) { return e.code() == Error::Validation; }));

    nlohmann::json bad = j;
    bad["surprise"] = 1;
    CHECK_THROWS_AS(parse_experiment_config(bad), NodeOnetError);
    nlohmann::json bad2 = j;
    bad2["train"]["momentum"] = 0.9;
    CHECK_THROWS_AS(parse_experiment_config(bad2), NodeOnetError);
}

TEST_CASE("checkpoint round-trips bitwise") {
    NodeVariant var;
    var.kind = NodeVariantKind::MultiInput;
    var.terms = 3;
    var.d_u = 5;
    var.d_v = 4;
    DecoderSpec dec;
    dec.kind = DecoderKind::LearnedBasis;
    dec.d_u = 5;
    dec.hidden = {7};
    Checkpoint ck;
    ck.model = init_params(var, dec, 77);
    ck.model.encoder = SensorEncoder::uniform_1d(4);
    ck.model.train_horizon = 1.0;
    ck.model.train_steps = 5;
    ck.adam = AdamState::like(flatten_params(ck.model));
    ck.adam.step = 9;
    ck.epoch = 42;
    ck.history.push_back(HistoryRow{10, 0.5, 0.1, 0.6});

    std::string once = encode_container(checkpoint_to_container(ck));
    Checkpoint back = checkpoint_from_container(decode_container(once));
    std::string twice = encode_container(checkpoint_to_container(back));
    CHECK(once == twice);
    CHECK(back.epoch == 42);
    CHECK(back.adam.step == 9);
    CHECK(back.history.size() == 1);
}

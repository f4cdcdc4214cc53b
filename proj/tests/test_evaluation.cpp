#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "nodeonet/evaluation.hpp"
#include "nodeonet/rng.hpp"

using namespace nodeonet;

namespace {

std::vector<DenseArray> random_arrays(std::uint64_t seed, std::size_t n, std::size_t n_t,
                                      std::size_t n_x) {
    RngState rng(seed);
    std::vector<DenseArray> out;
    for (std::size_t i = 0; i < n; ++i) {
        DenseArray a(Shape{n_t, n_x});
        for (std::size_t j = 0; j < a.size(); ++j) a[j] = rng.uniform(-1.0, 1.0);
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<double> times_of(std::size_t n_t) {
    std::vector<double> t(n_t);
    for (std::size_t k = 0; k < n_t; ++k) t[k] = static_cast<double>(k + 1) / static_cast<double>(n_t);
    return t;
}

}  // namespace

TEST_CASE("error metric trivial values") {
    auto labels = random_arrays(1, 3, 4, 5);

    SECTION("predictions equal labels") {
        auto rep = compute_errors(labels, labels, times_of(4));
        CHECK(rep.absolute_error == 0.0);
        CHECK(rep.relative_error == 0.0);
    }

    SECTION("predictions double the labels") {
        auto preds = labels;
        for (auto& p : preds)
            for (std::size_t i = 0; i < p.size(); ++i) p[i] *= 2.0;
        auto rep = compute_errors(preds, labels, times_of(4));
        CHECK(rep.relative_error == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("single point") {
        std::vector<DenseArray> pred{DenseArray(Shape{1, 1}, std::vector<double>{3.0})};
        std::vector<DenseArray> label{DenseArray(Shape{1, 1}, std::vector<double>{4.0})};
        auto rep = compute_errors(pred, label, {1.0});
        CHECK(rep.absolute_error == Catch::Approx(1.0).margin(1e-15));
        CHECK(rep.relative_error == Catch::Approx(0.25).margin(1e-15));
    }
}

TEST_CASE("zero labels raise DegenerateLabels") {
    std::vector<DenseArray> pred{DenseArray(Shape{2, 2}, 1.0)};
    std::vector<DenseArray> label{DenseArray(Shape{2, 2}, 0.0)};
    CHECK_THROWS_MATCHES(compute_errors(pred, label, times_of(2)), NodeOnetError,
                         Catch::Matchers::Predicate<NodeOnetError>([](const NodeOnetError& e) {
                             return e.code() == Error::DegenerateLabels;
                         }));
}

TEST_CASE("compute_errors is permutation-invariant over samples") {
    auto preds = random_arrays(11, 6, 3, 7);
    auto labels = random_arrays(12, 6, 3, 7);
    auto rep = compute_errors(preds, labels, times_of(3));

    std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
    std::vector<DenseArray> p2, l2;
    for (std::size_t i : perm) {
        p2.push_back(preds[i]);
        l2.push_back(labels[i]);
    }
    auto rep2 = compute_errors(p2, l2, times_of(3));
    CHECK(rep2.absolute_error == Catch::Approx(rep.absolute_error).epsilon(1e-12));
    CHECK(rep2.relative_error == Catch::Approx(rep.relative_error).epsilon(1e-12));
}

TEST_CASE("homogeneous scaling of predictions and labels") {
    auto preds = random_arrays(21, 4, 5, 6);
    auto labels = random_arrays(22, 4, 5, 6);
    auto rep = compute_errors(preds, labels, times_of(5));

    const double s = 3.7;
    for (auto& a : preds)
        for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
    for (auto& a : labels)
        for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
    auto scaled = compute_errors(preds, labels, times_of(5));
    CHECK(scaled.absolute_error == Catch::Approx(s * rep.absolute_error).epsilon(1e-12));
    CHECK(scaled.relative_error == Catch::Approx(rep.relative_error).epsilon(1e-12));
}

TEST_CASE("horizon split aggregates the leading slices bitwise") {
    auto preds = random_arrays(31, 5, 8, 4);
    auto labels = random_arrays(32, 5, 8, 4);
    auto times = times_of(8);

    auto full = compute_errors(preds, labels, times, 4, 0.5);

    // Standard evaluation restricted to the first 4 slices.
    std::vector<DenseArray> p_head, l_head;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        DenseArray p(Shape{4, 4}), l(Shape{4, 4});
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < 4; ++j) {
                p.at2(k, j) = preds[i].at2(k, j);
                l.at2(k, j) = labels[i].at2(k, j);
            }
        p_head.push_back(std::move(p));
        l_head.push_back(std::move(l));
    }
    auto head = compute_errors(p_head, l_head, std::vector<double>(times.begin(), times.begin() + 4));

    CHECK(full.within_absolute == head.absolute_error);  // bitwise
    CHECK(full.within_relative == head.relative_error);
    CHECK(full.beyond_absolute > 0.0);
}

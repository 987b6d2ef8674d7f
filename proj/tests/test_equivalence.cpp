#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "cvquant/equivalence.hpp"
#include "cvquant/profile_json.hpp"
#include "cvquant/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using cvquant::ConfusionDataset;
using cvquant::EquivalenceFunction;
using cvquant::LinearTransform;
using cvquant::NonlinearTransform;
using cvquant::Rgb24;
using cvquant::TransformKind;

namespace {

Rgb24 random_color(cvquant::Rng& rng) {
    return Rgb24{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)),
                 std::uint8_t(rng.below(256))};
}

ConfusionDataset random_dataset(std::uint64_t seed, std::size_t n) {
    cvquant::Rng rng(seed);
    ConfusionDataset d;
    d.user_id = "random";
    for (std::size_t i = 0; i < n; ++i) {
        d.events.push_back({i, random_color(rng), random_color(rng)});
    }
    return d;
}

EquivalenceFunction linear_fn(const std::array<double, 9>& m) {
    EquivalenceFunction f;
    LinearTransform t;
    t.m = m;
    f.transform = t;
    return f;
}

}  // namespace

TEST_CASE("identity data fits to the identity matrix") {
    cvquant::Rng rng(11);
    ConfusionDataset d;
    for (std::size_t i = 0; i < 60; ++i) {
        const Rgb24 c = random_color(rng);
        d.events.push_back({i, c, c});
    }
    const LinearTransform t = cvquant::fit_linear(d);
    for (int i = 0; i < 9; ++i) {
        const double want = (i % 4 == 0) ? 1.0 : 0.0;
        CHECK(t.m[std::size_t(i)] == Catch::Approx(want).margin(1e-8));
    }
}

TEST_CASE("least squares matches the adjugate-inverse reference") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ConfusionDataset d = random_dataset(seed, 40);
        const LinearTransform t = cvquant::fit_linear(d);

        std::vector<std::array<double, 3>> targets, selections;
        for (const auto& e : d.events) {
            const auto y = oracle::rgb_to_lab_reference(e.target.r, e.target.g, e.target.b);
            const auto s = oracle::rgb_to_lab_reference(e.selected.r, e.selected.g, e.selected.b);
            targets.push_back(y);
            selections.push_back(s);
        }
        const auto want = oracle::ols_reference(targets, selections);

        double scale = 1.0;
        for (double v : want) scale = std::max(scale, std::abs(v));
        for (int i = 0; i < 9; ++i) {
            REQUIRE(std::abs(t.m[std::size_t(i)] - want[std::size_t(i)]) <= 1e-6 * scale);
        }
    }
}

TEST_CASE("degenerate targets are rejected") {
    // Gray targets keep a and b at numerical zero, so the normal matrix has
    // rank one.
    ConfusionDataset d;
    for (std::size_t i = 0; i < 30; ++i) {
        const auto v = std::uint8_t(i * 8);
        d.events.push_back({i, Rgb24{v, v, v}, Rgb24{v, std::uint8_t(v / 2), v}});
    }
    CHECK_THROWS_WITH(cvquant::fit_linear(d), Catch::Matchers::ContainsSubstring("rank-deficient"));

    ConfusionDataset tiny;
    tiny.events.push_back({0, Rgb24{1, 2, 3}, Rgb24{1, 2, 3}});
    CHECK_THROWS_WITH(cvquant::fit_linear(tiny), Catch::Matchers::ContainsSubstring("at least 3"));
}

TEST_CASE("confusions_only drops correct selections from the fit") {
    cvquant::Rng rng(23);
    ConfusionDataset mixed;
    ConfusionDataset confused_only;
    for (std::size_t i = 0; i < 80; ++i) {
        const Rgb24 t = random_color(rng);
        Rgb24 s = random_color(rng);
        if (s == t) s.r = std::uint8_t(s.r ^ 1);
        mixed.events.push_back({2 * i, t, s});
        confused_only.events.push_back({i, t, s});
        mixed.events.push_back({2 * i + 1, t, t});  // interleave correct picks
    }
    const auto a = cvquant::fit_linear(mixed, true);
    const auto b = cvquant::fit_linear(confused_only, false);
    for (int i = 0; i < 9; ++i) CHECK(a.m[std::size_t(i)] == b.m[std::size_t(i)]);
}

TEST_CASE("inverse-distance score is symmetric and capped at 1/epsilon") {
    const auto protan = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 500, 5, 0.5);
    const EquivalenceFunction lin = cvquant::fit_equivalence(protan, TransformKind::linear);
    const EquivalenceFunction mlp = cvquant::fit_equivalence(protan, TransformKind::nonlinear, 16, 3);

    cvquant::Rng rng(99);
    for (const auto& f : {lin, mlp}) {
        for (int i = 0; i < 500; ++i) {
            const Rgb24 a = random_color(rng);
            const Rgb24 b = random_color(rng);
            CHECK(cvquant::delta_u(f, a, b) == cvquant::delta_u(f, b, a));
            CHECK(cvquant::delta_u(f, a, a) == 1.0 / f.epsilon);
            CHECK(cvquant::delta_u(f, a, b) <= 1.0 / f.epsilon);
            CHECK(cvquant::delta_u(f, a, b) > 0.0);
        }
    }
}

TEST_CASE("closer pairs in the transformed space score strictly higher") {
    const auto protan = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 500, 6, 0.5);
    const EquivalenceFunction lin = cvquant::fit_equivalence(protan, TransformKind::linear);
    const EquivalenceFunction mlp = cvquant::fit_equivalence(protan, TransformKind::nonlinear, 16, 4);

    cvquant::Rng rng(7);
    for (const auto& f : {lin, mlp}) {
        std::size_t checked = 0;
        for (int i = 0; i < 2000; ++i) {
            const Rgb24 a = random_color(rng);
            const Rgb24 b = random_color(rng);
            const Rgb24 c = random_color(rng);
            const double dab =
                cvquant::vec3_distance(cvquant::transform_color(f, a), cvquant::transform_color(f, b));
            const double dac =
                cvquant::vec3_distance(cvquant::transform_color(f, a), cvquant::transform_color(f, c));
            if (std::abs(dab - dac) <= 1e-9) continue;
            ++checked;
            if (dab < dac) {
                REQUIRE(cvquant::delta_u(f, a, b) > cvquant::delta_u(f, a, c));
            } else {
                REQUIRE(cvquant::delta_u(f, a, b) < cvquant::delta_u(f, a, c));
            }
        }
        CHECK(checked > 1500);
    }
}

TEST_CASE("network training is deterministic in the seed") {
    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::deutan, 300, 9, 0.5);
    const NonlinearTransform a = cvquant::fit_nonlinear(data, 24, 42);
    const NonlinearTransform b = cvquant::fit_nonlinear(data, 24, 42);
    REQUIRE(a.w1 == b.w1);
    REQUIRE(a.b1 == b.b1);
    REQUIRE(a.w2 == b.w2);
    REQUIRE(a.b2 == b.b2);

    const NonlinearTransform c = cvquant::fit_nonlinear(data, 24, 43);
    CHECK(a.w1 != c.w1);
}

TEST_CASE("network training beats the constant-mean predictor") {
    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 500, 12, 0.5);
    const NonlinearTransform net = cvquant::fit_nonlinear(data, 32, 1);

    cvquant::Vec3 mean{};
    std::size_t n = 0;
    for (const auto& e : data.events) {
        const auto lab = cvquant::rgb_to_lab(e.selected);
        mean[0] += lab.L;
        mean[1] += lab.a;
        mean[2] += lab.b;
        ++n;
    }
    for (auto& v : mean) v /= double(n);

    double sse_net = 0.0, sse_mean = 0.0;
    for (const auto& e : data.events) {
        const auto want = cvquant::rgb_to_lab(e.selected);
        const cvquant::Vec3 w{want.L, want.a, want.b};
        const auto got = cvquant::apply_transform(net, cvquant::rgb_to_lab(e.target));
        for (int k = 0; k < 3; ++k) {
            sse_net += (got[std::size_t(k)] - w[std::size_t(k)]) * (got[std::size_t(k)] - w[std::size_t(k)]);
            sse_mean += (mean[std::size_t(k)] - w[std::size_t(k)]) * (mean[std::size_t(k)] - w[std::size_t(k)]);
        }
    }
    CHECK(sse_net < 0.5 * sse_mean);
}

TEST_CASE("network fit validates its arguments") {
    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 50, 1, 0.5);
    CHECK_THROWS(cvquant::fit_nonlinear(data, 0, 1));
    ConfusionDataset one;
    one.events.push_back({0, Rgb24{1, 2, 3}, Rgb24{3, 2, 1}});
    CHECK_THROWS(cvquant::fit_nonlinear(one, 8, 1));
}

TEST_CASE("held-out validation is exact for pinned transforms") {
    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 1000, 21, 0.5);

    SECTION("identity transform changes nothing") {
        const auto fit = [](const ConfusionDataset&) {
            return linear_fn({1, 0, 0, 0, 1, 0, 0, 0, 1});
        };
        const auto report = cvquant::validate_distance_change_with(data, fit, 10, 0.8, 3);
        CHECK(report.splits_used == 10);
        CHECK(report.mean_relative_change == 0.0);
        CHECK(report.std_relative_change == 0.0);
        for (double m : report.split_means) CHECK(m == 0.0);
    }

    SECTION("uniform halving lands on exactly -0.5") {
        const auto fit = [](const ConfusionDataset&) {
            return linear_fn({0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.5});
        };
        const auto report = cvquant::validate_distance_change_with(data, fit, 10, 0.8, 3);
        CHECK(report.splits_used == 10);
        CHECK(report.mean_relative_change == -0.5);
        CHECK(report.std_relative_change == 0.0);
    }
}

TEST_CASE("held-out validation contracts confused pairs for a dichromat") {
    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 2000, 31, 0.5);
    const auto report = cvquant::validate_distance_change(data, TransformKind::linear, 5, 0.8, 17);
    CHECK(report.splits_used == 5);
    CHECK(report.mean_relative_change < 0.0);
}

TEST_CASE("held-out validation rejects impossible inputs") {
    ConfusionDataset same_pair;
    for (std::size_t i = 0; i < 200; ++i) {
        same_pair.events.push_back({i, Rgb24{200, 10, 10}, Rgb24{10, 200, 10}});
    }
    CHECK_THROWS_WITH(
        cvquant::validate_distance_change_with(
            same_pair, [](const ConfusionDataset&) { return EquivalenceFunction{}; }, 10, 0.8, 0),
        Catch::Matchers::ContainsSubstring("diversity"));

    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 50, 1, 0.5);
    const auto id_fit = [](const ConfusionDataset&) { return EquivalenceFunction{}; };
    CHECK_THROWS(cvquant::validate_distance_change_with(data, id_fit, 0, 0.8, 0));
    CHECK_THROWS(cvquant::validate_distance_change_with(data, id_fit, 10, 0.0, 0));
    CHECK_THROWS(cvquant::validate_distance_change_with(data, id_fit, 10, 1.0, 0));
}

TEST_CASE("profiles survive a json round trip bit for bit") {
    SECTION("linear") {
        const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::deutan, 300, 4, 0.5);
        const EquivalenceFunction f = cvquant::fit_equivalence(data, TransformKind::linear);
        const auto j = cvquant::profile_to_json(f);
        const EquivalenceFunction g = cvquant::profile_from_json(j);
        REQUIRE(g.kind() == TransformKind::linear);
        CHECK(g.epsilon == f.epsilon);
        const auto& tf = std::get<LinearTransform>(f.transform);
        const auto& tg = std::get<LinearTransform>(g.transform);
        CHECK(tf.m == tg.m);
    }
    SECTION("nonlinear") {
        const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 300, 4, 0.5);
        const EquivalenceFunction f = cvquant::fit_equivalence(data, TransformKind::nonlinear, 12, 5);
        const auto j = cvquant::profile_to_json(f);
        const EquivalenceFunction g = cvquant::profile_from_json(j);
        REQUIRE(g.kind() == TransformKind::nonlinear);
        const auto& tf = std::get<NonlinearTransform>(f.transform);
        const auto& tg = std::get<NonlinearTransform>(g.transform);
        CHECK(tf.hidden == tg.hidden);
        CHECK(tf.seed == tg.seed);
        CHECK(tf.w1 == tg.w1);
        CHECK(tf.b1 == tg.b1);
        CHECK(tf.w2 == tg.w2);
        CHECK(tf.b2 == tg.b2);
    }
    SECTION("through a file") {
        fixtures::TempDir dir;
        const auto path = dir.path() / "profile.json";
        const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::tritan, 300, 4, 0.5);
        const EquivalenceFunction f = cvquant::fit_equivalence(data, TransformKind::nonlinear, 10, 6);
        cvquant::save_profile(path, f);
        const EquivalenceFunction g = cvquant::load_profile(path);
        const Rgb24 probe{123, 45, 67};
        CHECK(cvquant::transform_color(f, probe) == cvquant::transform_color(g, probe));
    }
}

TEST_CASE("profile parsing rejects malformed documents") {
    const auto data = cvquant::synthesize_observer(cvquant::ObserverModel::protan, 300, 4, 0.5);
    const auto good = cvquant::profile_to_json(cvquant::fit_equivalence(data, TransformKind::linear));

    auto j = good;
    j["format"] = "something-else";
    CHECK_THROWS_WITH(cvquant::profile_from_json(j), Catch::Matchers::ContainsSubstring("not a"));

    j = good;
    j["version"] = 99;
    CHECK_THROWS_WITH(cvquant::profile_from_json(j), Catch::Matchers::ContainsSubstring("version"));

    j = good;
    j["matrix"]["shape"] = std::vector<std::size_t>{9};
    CHECK_THROWS_WITH(cvquant::profile_from_json(j), Catch::Matchers::ContainsSubstring("shape"));

    j = good;
    j["matrix"]["data"] = std::vector<double>{1, 2, 3};
    CHECK_THROWS(cvquant::profile_from_json(j));

    j = good;
    j["kind"] = "quadratic";
    CHECK_THROWS(cvquant::profile_from_json(j));
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ccm/cuts.hpp"
#include "ccm/environments.hpp"
#include "support/cut_oracle.hpp"

using namespace ccm;
using namespace ccm::testing;
using Catch::Approx;

TEST_CASE("fixtures load and match their recorded digests") {
    for (const char* name : {"env1", "env2", "env3", "glucose"}) {
        const auto s = load_scenario(name);
        REQUIRE(s.name == name);
        REQUIRE(s.fixture_digest != 0);
    }
}

TEST_CASE("tampered fixtures are refused") {
    const auto dir = fixture_dir();
    const std::string tmp = "tampered_fixtures";
    std::filesystem::create_directories(tmp);
    auto text = read_text_file(dir + "/env1.json");
    text += " ";
    write_text_file(tmp + "/env1.json", text);
    std::filesystem::copy_file(dir + "/MANIFEST.json", tmp + "/MANIFEST.json",
                               std::filesystem::copy_options::overwrite_existing);
    REQUIRE_THROWS_AS(load_scenario("env1", tmp), ConfigError);
    std::filesystem::remove_all(tmp);
}

TEST_CASE("first synthetic scenario matches its committed structure") {
    const auto s = build_env1();
    REQUIRE(s.graph.nodes.size() == 5);
    REQUIRE(s.episode_len == 100);

    auto g = s.graph.instantiate(1);
    // interior collider: two arrowheads meet at node 1
    REQUIRE(g.parents_of(g.idx(1)).size() >= 2);
    // every equation is linear with sd 0.1
    for (const auto& n : s.graph.nodes) {
        REQUIRE(n.equation.kind == StructuralEquation::Kind::LinearGaussian);
        REQUIRE(n.equation.linear.noise_sd == Approx(0.1));
    }
    // the catalog offers the articulation nodes, including {2}
    const auto catalog = enumerate_min_cuts(g);
    REQUIRE(std::find(catalog.cuts.begin(), catalog.cuts.end(), CutSet{{2}}) !=
            catalog.cuts.end());
    CutOracle oracle(g, s.modifiable_ids(), s.target_ids());
    REQUIRE(catalog.cuts == oracle.all_min_cuts());
}

TEST_CASE("second synthetic scenario is saturating with per-edge delays") {
    const auto s = build_env2();
    int delayed_terms = 0;
    for (const auto& n : s.graph.nodes) {
        if (n.equation.kind != StructuralEquation::Kind::HillDelay) continue;
        for (const auto& t : n.equation.hill.terms) {
            REQUIRE(t.delay >= 1);
            REQUIRE(t.delay <= 3);
            ++delayed_terms;
        }
    }
    REQUIRE(delayed_terms >= 3);
    // non-root nodes are all saturating
    auto g = s.graph.instantiate(1);
    for (const auto& n : s.graph.nodes)
        if (!g.parents_of(g.idx(n.id)).empty())
            REQUIRE(n.equation.kind == StructuralEquation::Kind::HillDelay);
}

TEST_CASE("zero-delay variant reduces to memoryless saturation") {
    auto s = build_env2();
    for (auto& n : s.graph.nodes)
        if (n.equation.kind == StructuralEquation::Kind::HillDelay)
            for (auto& t : n.equation.hill.terms) t.delay = 0;
    s = zero_noise(std::move(s));
    auto g = s.graph.instantiate(3);
    g.apply_do(0, 6.0);
    g.step();
    // node 1 reads the clamp immediately: saturation of 6 at gain 3, K 2, n 2
    const double expect = 3.0 * 36.0 / (4.0 + 36.0);
    REQUIRE(g.value(1) == Approx(expect));
}

TEST_CASE("zero-gain limit leaves the target as pure observation noise") {
    auto s = build_env2();
    for (auto& n : s.graph.nodes)
        if (n.equation.kind == StructuralEquation::Kind::HillDelay)
            for (auto& t : n.equation.hill.terms) t.gain = 1e-12;
    auto g = s.graph.instantiate(4);
    g.apply_do(0, 10.0);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        g.step();
        sum += g.value(4);
        sq += g.value(4) * g.value(4);
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    REQUIRE(std::abs(mean) < 0.005);
    REQUIRE(sd == Approx(0.1).margin(0.01));
}

TEST_CASE("third scenario forces two-node cuts on a mirrored double route") {
    const auto s = build_env3();
    auto g = s.graph.instantiate(1);
    const auto catalog = enumerate_min_cuts(g);
    REQUIRE_FALSE(catalog.cuts.empty());
    for (const auto& c : catalog.cuts) REQUIRE(c.size() == 2);

    CutOracle oracle(g, s.modifiable_ids(), s.target_ids());
    REQUIRE(catalog.cuts == oracle.all_min_cuts());

    // single removals never disconnect (the double route is redundant)
    for (const auto& n : s.graph.nodes)
        if (n.role == NodeRole::Observed)
            REQUIRE_FALSE(oracle.disconnects({n.id}));

    // mirrored branches share identical response terms
    const auto& a = s.graph.nodes[2].equation.hill.terms;  // node 2
    const auto& b = s.graph.nodes[4].equation.hill.terms;  // node 4
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].gain == b[i].gain);
        REQUIRE(a[i].threshold == b[i].threshold);
        REQUIRE(a[i].exponent == b[i].exponent);
        REQUIRE(a[i].delay == b[i].delay);
    }

    REQUIRE(s.noise.kind == NoiseKind::RandomLarge);
    REQUIRE(s.noise.magnitude_factor > 10.0);
}

TEST_CASE("physiological scenario carries the clinical goal band") {
    const auto s = load_scenario("glucose");
    REQUIRE(s.episode_len == 1440);
    REQUIRE(s.goal.dim() == 1);
    REQUIRE(s.goal.lo(0) == Approx(70.0));
    REQUIRE(s.goal.hi(0) == Approx(180.0));
    REQUIRE(s.meals.has_value());
    REQUIRE(s.meals->times.size() == 3);
}

TEST_CASE("a meal without insulin sends glucose monotonically up") {
    auto s = load_scenario("glucose");
    s.meals->times = {10};
    s.meals->carbs = {40.0};
    s.meals->jitter = 0;
    Environment env(s, 5);
    env.reset(5);
    const double pre_meal = env.graph().value(4);
    for (int t = 0; t < 10; ++t) env.step();  // zero insulin throughout
    double prev = env.graph().value(4);
    for (int t = 0; t < 60; ++t) {
        env.step();
        const double g = env.graph().value(4);
        REQUIRE(g >= prev - 1e-12);
        prev = g;
    }
    REQUIRE(prev > pre_meal);
}

TEST_CASE("physiological states stay nonnegative under random dosing") {
    auto s = load_scenario("glucose");
    Environment env(s, 6);
    Rng rng(7);
    for (int ep = 0; ep < 3; ++ep) {
        env.reset(100 + ep);
        for (int t = 0; t < 400; ++t) {
            env.step({{0, rng.uniform(0.0, 60.0)}});
            for (double v : env.graph().state()) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 2000.0);
            }
        }
    }
}

TEST_CASE("nonpositive rates are rejected") {
    auto base = glucose_base_individual();
    base.values[0] = 0.0;
    REQUIRE_THROWS_AS(build_glucose(base), ParamError);
}

TEST_CASE("cohorts split into three groups with increasing spread") {
    const auto base = glucose_base_individual();
    Rng rng(7777);
    const auto cohort = make_cohort(base, 30, rng);
    REQUIRE(cohort.size() == 30);

    std::map<std::string, int> counts;
    std::map<std::string, double> dist;
    for (const auto& ind : cohort) {
        ++counts[ind.group];
        double d = 0.0;
        for (std::size_t i = 0; i < ind.values.size(); ++i)
            d += std::abs(std::log(ind.values[i] / base.values[i]));
        dist[ind.group] += d / ind.values.size();
        for (std::size_t i = 0; i < ind.values.size(); ++i) {
            REQUIRE(ind.values[i] >= 0.5 * base.values[i] - 1e-12);
            REQUIRE(ind.values[i] <= 1.5 * base.values[i] + 1e-12);
        }
    }
    REQUIRE(counts["adolescent"] == 10);
    REQUIRE(counts["adult"] == 10);
    REQUIRE(counts["child"] == 10);
    REQUIRE(dist["child"] / 10 > dist["adult"] / 10);
}

TEST_CASE("zero spread reproduces the base individual") {
    const auto base = glucose_base_individual();
    Rng rng(1);
    for (const auto& ind : make_cohort(base, 6, rng, 0.0))
        REQUIRE(ind.values == base.values);
}

TEST_CASE("time-in-range fractions") {
    REQUIRE(tir(std::vector<double>{100.0, 120.0, 140.0}) == 1.0);
    REQUIRE(tir(std::vector<double>{200.0, 200.0}) == 0.0);
    REQUIRE(tir(std::vector<double>{60.0, 100.0, 190.0, 100.0}) == 0.5);
    REQUIRE_THROWS_AS(tir(std::vector<double>{}), ParamError);
}

TEST_CASE("silenced scenarios are fully deterministic") {
    const auto s = zero_noise(build_env3());
    auto run = [&] {
        Environment env(s, 9);
        env.reset(9);
        std::vector<double> trace;
        for (int t = 0; t < 100; ++t) {
            env.step({{0, 4.0}});
            trace.push_back(env.graph().value(7));
        }
        return trace;
    };
    REQUIRE(run() == run());
}

TEST_CASE("meal jitter stays within its window and reshuffles per episode") {
    auto s = load_scenario("glucose");
    Environment env(s, 10);
    for (int ep = 0; ep < 2; ++ep) {
        env.reset(200 + ep);
        std::vector<int> seen;
        for (int t = 1; t <= s.episode_len; ++t) {
            const double before = env.graph().value(3);
            env.step();
            if (env.graph().value(3) > before + 5.0) seen.push_back(t);
        }
        REQUIRE(seen.size() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            REQUIRE(std::abs(seen[i] - s.meals->times[i]) <= s.meals->jitter);
    }
}

TEST_CASE("graph files round-trip through save and load") {
    const auto s = build_env2();
    const std::string path = "round_trip_graph.json";
    save_graph_file(s.graph, path);
    const auto back = load_graph_file(path);
    REQUIRE(graph_to_json(back) == graph_to_json(s.graph));
    std::remove(path.c_str());
}

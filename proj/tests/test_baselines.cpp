#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "drhg/baselines.hpp"
#include "drhg/errors.hpp"
#include "oracles.hpp"

using namespace drhg;

namespace {

std::vector<std::pair<double, double>> pairs(const Instance& inst) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : inst.coords) out.emplace_back(p.x, p.y);
    return out;
}

bool is_permutation(const Tour& t, int n) {
    std::vector<int> o = t.order;
    std::sort(o.begin(), o.end());
    std::vector<int> id(n);
    std::iota(id.begin(), id.end(), 0);
    return o == id;
}

}  // namespace

TEST_CASE("random insertion") {
    const Instance tri = make_tsp({{0, 0}, {1, 0}, {0, 1}});
    CHECK(oracle::edge_set(random_insertion(tri, 5).order) == oracle::edge_set({0, 1, 2}));

    const Instance inst = gen_uniform(ProblemKind::Tsp, 50, 2);
    CHECK(random_insertion(inst, 9) == random_insertion(inst, 9));
    CHECK(is_permutation(random_insertion(inst, 9), 50));
    CHECK_THROWS_AS(random_insertion(gen_uniform(ProblemKind::Cvrp, 5, 1), 0), KindError);

    // regression baseline against the exact optimum
    double g = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Instance s = gen_uniform(ProblemKind::Tsp, 12, 100 + i);
        g += gap(tour_length(s, random_insertion(s, i)), tour_length(s, held_karp(s)));
    }
    g /= 1000.0;
    MESSAGE("random insertion mean gap on TSP12: " << g * 100.0 << "%");
    CHECK(g > 0.0);
    CHECK(g < 0.1);
}

TEST_CASE("sweep") {
    const Instance loose = make_cvrp({{0, 0}, {1, 0}, {0, 1}, {-1, 0}}, {0, 1, 1, 1}, 10);
    CHECK(sweep(loose).routes.size() == 1);

    // customers on the four bisectors, each filling a vehicle
    const Instance full = make_cvrp({{0, 0}, {1, 1}, {-1, 1}, {-1, -1}, {1, -1}}, {0, 5, 5, 5, 5}, 5);
    const RoutePlan p = sweep(full);
    REQUIRE(p.routes.size() == 4);
    for (const auto& r : p.routes) CHECK(r.size() == 1);
    std::vector<int> seq;
    for (const auto& r : p.routes) seq.push_back(r[0]);
    // angular order up to the starting angle: a rotation of 1, 2, 3, 4 (counter-clockwise)
    const auto start = std::find(seq.begin(), seq.end(), 1) - seq.begin();
    for (int i = 0; i < 4; ++i) CHECK(seq[(start + i) % 4] == 1 + i);

    for (int s = 0; s < 50; ++s) {
        const Instance inst = gen_uniform(ProblemKind::Cvrp, 30, s);
        const RoutePlan plan = sweep(inst);
        CHECK_NOTHROW(validate_routes(inst, plan));
        const int total = std::accumulate(inst.demands.begin(), inst.demands.end(), 0);
        CHECK(static_cast<int>(plan.routes.size()) >= (total + inst.capacity - 1) / inst.capacity);
        CHECK(oracle::routes_feasible(plan.routes, inst.demands, inst.capacity));
    }
    CHECK_THROWS_AS(sweep(gen_uniform(ProblemKind::Tsp, 5, 1)), KindError);
}

TEST_CASE("Held-Karp") {
    const Instance sq = make_tsp({{0, 0}, {1, 1}, {1, 0}, {0, 1}});
    CHECK(tour_length(sq, held_karp(sq)) == doctest::Approx(4.0).epsilon(1e-15));
    const Instance tri = make_tsp({{0, 0}, {3, 0}, {0, 4}});
    CHECK(tour_length(tri, held_karp(tri)) == doctest::Approx(12.0).epsilon(1e-15));

    for (int i = 0; i < 500; ++i) {
        const Instance inst = gen_uniform(ProblemKind::Tsp, 8, 900 + i);
        const Tour t = held_karp(inst);
        REQUIRE(is_permutation(t, 8));
        CHECK(std::abs(tour_length(inst, t) - oracle::brute_force_tsp(pairs(inst))) < 1e-12);
    }
    CHECK_THROWS_AS(held_karp(gen_uniform(ProblemKind::Tsp, 17, 1)), SizeError);
    CHECK_NOTHROW(held_karp(gen_uniform(ProblemKind::Tsp, 17, 1), 17));
}

TEST_CASE("Held-Karp on an explicit matrix") {
    // optimum 0-1-2-3 of length 4
    const std::vector<std::vector<double>> dm = {{0, 1, 9, 1}, {1, 0, 1, 9}, {9, 1, 0, 1}, {1, 9, 1, 0}};
    const ExactTour t = held_karp(dm);
    CHECK(t.length == 4.0);
    CHECK(t.order.front() == 0);
    CHECK_THROWS_AS(held_karp(std::vector<std::vector<double>>{}), DomainError);
}

TEST_CASE("local search labels") {
    const Instance sq = make_tsp({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    LabelerConfig cfg;
    const Tour crossed{{0, 2, 1, 3}};
    const Tour fixed = local_search_label(sq, crossed, cfg);
    CHECK(tour_length(sq, fixed) == doctest::Approx(4.0).epsilon(1e-15));

    const Instance inst = gen_uniform(ProblemKind::Tsp, 40, 4);
    const Tour once = local_search_label(inst, random_insertion(inst, 1), cfg);
    CHECK(local_search_label(inst, once, cfg) == once);

    double g = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Instance s = gen_uniform(ProblemKind::Tsp, 12, 3000 + i);
        const Tour start = random_insertion(s, i);
        cfg.seed = i;
        const Tour ls = local_search_label(s, start, cfg);
        REQUIRE(tour_length(s, ls) <= tour_length(s, start) + 1e-12);
        g += gap(tour_length(s, ls), tour_length(s, held_karp(s)));
    }
    g /= 1000.0;
    MESSAGE("local search mean gap on TSP12: " << g * 100.0 << "%");
    CHECK(g <= 0.01);

    cfg.ls_rounds = 0;
    CHECK_THROWS_AS(local_search_label(inst, once, cfg), ConfigError);
}

TEST_CASE("make_label picks the oracle by mode") {
    const Instance small = gen_uniform(ProblemKind::Tsp, 10, 6);
    LabelerConfig cfg;
    CHECK(tour_length(small, make_label(small, cfg)) == doctest::Approx(tour_length(small, held_karp(small))));
    const Instance big = gen_uniform(ProblemKind::Tsp, 20, 6);
    CHECK_THROWS_AS(make_label(big, cfg), SizeError);
    cfg.mode = LabelMode::LocalSearch;
    CHECK(is_permutation(make_label(big, cfg), 20));
}

TEST_CASE("label files") {
    std::vector<Label> ls = {{"a", Tour{{0, 2, 1}}, {}, false}, {"b", {}, RoutePlan{{{1, 2}, {3}}}, true}};
    std::stringstream ss;
    write_labels(ss, ls);
    const auto back = read_labels(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].instance_name == "a");
    CHECK(back[0].tour == ls[0].tour);
    CHECK(back[1].is_routes);
    CHECK(back[1].plan == ls[1].plan);

    std::stringstream bad("{\"instance_name\": 3}\n");
    CHECK_THROWS_AS(read_labels(bad), ParseError);
}

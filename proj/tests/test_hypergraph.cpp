#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "drhg/baselines.hpp"
#include "drhg/errors.hpp"
#include "drhg/hypergraph.hpp"
#include "drhg/random.hpp"
#include "oracles.hpp"

using namespace drhg;

namespace {

Instance pentagon() {
    std::vector<Point> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({std::cos(i * 1.2566370614359172), std::sin(i * 1.2566370614359172)});
    return make_tsp(pts);
}

Tour identity_tour(int n) {
    Tour t;
    t.order.resize(n);
    std::iota(t.order.begin(), t.order.end(), 0);
    return t;
}

Tour shuffled(int n, Rng& rng) {
    Tour t = identity_tour(n);
    std::shuffle(t.order.begin(), t.order.end(), rng);
    return t;
}

double path_length(const Instance& inst, const std::vector<int>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        s += std::hypot(inst.coords[p[i]].x - inst.coords[p[i + 1]].x, inst.coords[p[i]].y - inst.coords[p[i + 1]].y);
    }
    return s;
}

}  // namespace

TEST_CASE("cluster destruction") {
    const Instance inst = pentagon();
    const Tour t = identity_tour(5);

    const Destruction all = cluster_destroy(inst, t, 0, 5);
    CHECK(all.isolated == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(all.segments.empty());

    const Destruction one = cluster_destroy(inst, t, 2, 1);
    CHECK(one.destroyed == std::vector<int>{2});
    CHECK(one.isolated == std::vector<int>{2});
    REQUIRE(one.segments.size() == 1);
    CHECK(one.segments[0] == std::vector<int>{3, 4, 0, 1});
    CHECK(one.destroyed_edges.size() == 2);

    const Instance big = gen_uniform(ProblemKind::Tsp, 30, 1);
    Rng rng = make_rng(4);
    const Destruction d = cluster_destroy(big, shuffled(30, rng), 7, 1);
    CHECK(d.isolated == std::vector<int>{7});
    REQUIRE(d.segments.size() == 1);
    CHECK(d.segments[0].size() == 29);

    CHECK_THROWS_AS(cluster_destroy(inst, t, 0, 6), DomainError);
    CHECK_THROWS_AS(cluster_destroy(inst, t, 0, 0), DomainError);
    CHECK_THROWS_AS(cluster_destroy(inst, t, 9, 1), IndexError);
}

TEST_CASE("nearest order breaks ties by index") {
    // nodes 1 and 3 are equidistant from 0, as are 2 and 4
    const Instance inst = make_tsp({{0, 0}, {1, 0}, {2, 0}, {-1, 0}, {-2, 0}});
    const SolutionGraph g = solution_graph(inst, identity_tour(5));
    CHECK(nearest_order(inst, g, 0) == std::vector<int>{0, 1, 3, 2, 4});
}

TEST_CASE("CVRP destruction drops depot edges") {
    const Instance g = gen_uniform(ProblemKind::Cvrp, 12, 3);
    const Instance inst = make_cvrp(g.coords, [] { std::vector<int> d(13, 1); d[0] = 0; return d; }(), 4);
    const RoutePlan plan{{{1, 2, 3, 4}, {5, 6, 7, 8}, {9, 10, 11, 12}}};
    const Destruction d = cluster_destroy(inst, plan, 2, 1);
    CHECK(d.destroyed == std::vector<int>{2});
    for (const auto& s : d.segments) CHECK(std::find(s.begin(), s.end(), 0) == s.end());
    // route 1 splits into {1} (isolated) and {3, 4}
    CHECK(std::find(d.isolated.begin(), d.isolated.end(), 1) != d.isolated.end());
    CHECK(d.segments.size() == 3);
    CHECK_THROWS_AS(cluster_destroy(inst, plan, 2, 13), DomainError);
}

TEST_CASE("emergence counts") {
    const int n = 6;
    const Instance inst = gen_uniform(ProblemKind::Tsp, n, 2);
    const Tour t = identity_tour(n);
    const SolutionGraph g = solution_graph(inst, t);
    auto by_oracle = [&](std::vector<char> destroyed, int node) {
        const int before = oracle::direct_size({t.order}, true, destroyed);
        destroyed[node] = 1;
        return oracle::direct_size({t.order}, true, destroyed) - before;
    };
    std::vector<char> none(n, 0);
    CHECK(emergence_count(g, 2, none) == 3);
    CHECK(by_oracle(none, 2) == 3);

    std::vector<char> both(n, 0);
    both[1] = both[3] = 1;
    CHECK(emergence_count(g, 2, both) == 0);

    std::vector<char> one_side(n, 0);
    one_side[1] = one_side[4] = 1;  // 2-1 gone; 2-3 intact but 3-4 gone
    CHECK(emergence_count(g, 2, one_side) == 0);
    CHECK(by_oracle(one_side, 2) == 0);

    // every destroyed subset of a 6-cycle and every remaining node
    for (int mask = 0; mask < (1 << n); ++mask) {
        std::vector<char> d(n);
        for (int v = 0; v < n; ++v) d[v] = (mask >> v) & 1;
        for (int v = 0; v < n; ++v) {
            if (!d[v]) REQUIRE(emergence_count(g, v, d) == by_oracle(d, v));
        }
    }
}

TEST_CASE("alignment") {
    const Instance inst = pentagon();
    const SolutionGraph g = solution_graph(inst, identity_tour(5));

    const AlignmentResult a = align_sample_size(inst, g, 2, 3);
    CHECK(a.feasible);
    CHECK(a.destroy_count == 1);
    CHECK(a.achieved_size == 3);
    CHECK(a.order.front() == 2);

    const AlignmentResult full = align_sample_size(inst, g, 0, 5);
    CHECK(full.cumulative.back() == 5);
    CHECK(full.feasible);
    CHECK(full.achieved_size == 5);

    // a size no prefix reaches: 1 is below the first prefix size of 3
    const AlignmentResult miss = align_sample_size(inst, g, 0, 1);
    CHECK_FALSE(miss.feasible);
    CHECK(miss.destroy_count == 0);

    // prefix sizes against the direct oracle and the reduction itself on random instances
    Rng rng = make_rng(12);
    for (int i = 0; i < 300; ++i) {
        const int n = uniform_int(rng, 3, 40);
        const Instance r = gen_uniform(ProblemKind::Tsp, n, 7000 + i);
        const Tour t = shuffled(n, rng);
        const SolutionGraph rg = solution_graph(r, t);
        const int center = uniform_int(rng, 0, n - 1);
        const int k = uniform_int(rng, 1, n);
        const AlignmentResult al = align_sample_size(r, rg, center, k);
        REQUIRE(al.achieved_size <= k);
        REQUIRE(al.feasible == (al.achieved_size == k));
        if (al.destroy_count > 0) {
            REQUIRE(reduce(r, cluster_destroy(r, t, center, al.destroy_count)).size() == al.achieved_size);
        }
        // maximality: the next prefix overshoots
        if (al.destroy_count < n) REQUIRE(al.cumulative[al.destroy_count] > k);
    }
}

TEST_CASE("CVRP alignment counts customers only") {
    Rng rng = make_rng(5);
    for (int i = 0; i < 200; ++i) {
        const Instance inst = gen_uniform(ProblemKind::Cvrp, 15, 600 + i);
        const RoutePlan plan = sweep(inst);
        const SolutionGraph g = solution_graph(inst, plan);
        const int center = uniform_int(rng, 1, 15);
        const AlignmentResult al = align_sample_size(inst, g, center, 15);
        std::vector<char> destroyed(inst.size(), 0);
        for (int p = 0; p < static_cast<int>(al.order.size()); ++p) {
            destroyed[al.order[p]] = 1;
            REQUIRE(oracle::direct_size(plan.routes, false, destroyed) == al.cumulative[p]);
            REQUIRE(reduce(inst, cluster_destroy(inst, plan, center, p + 1)).size() == al.cumulative[p]);
        }
    }
}

TEST_CASE("reduction rows") {
    const Instance inst = pentagon();
    const HyperGraph all = reduce(inst, cluster_destroy(inst, identity_tour(5), 0, 5));
    CHECK(all.size() == 5);
    for (int r = 0; r < 5; ++r) {
        const Point p = inst.coords[all.origin[r]];
        CHECK(all.rows[r] == FeatureRow{p.x, p.y, p.x, p.y, 0.0, 0.0});
        CHECK(all.partner[r] == -1);
    }

    const HyperGraph one = reduce(inst, cluster_destroy(inst, identity_tour(5), 2, 1));
    CHECK(one.size() == 3);
    CHECK(one.row_of(4) == -1);
    CHECK(one.row_of(0) == -1);
    const int r3 = one.row_of(3), r1 = one.row_of(1);
    REQUIRE((r3 >= 0 && r1 >= 0));
    CHECK(one.partner[r3] == r1);
    CHECK(one.rows[r3] == FeatureRow{inst.coords[3].x, inst.coords[3].y, inst.coords[1].x, inst.coords[1].y, 1.0, 0.0});
    CHECK(one.rows[r1] == FeatureRow{inst.coords[1].x, inst.coords[1].y, inst.coords[3].x, inst.coords[3].y, 1.0, 0.0});

    // CVRP: demands 2, 3, 4 along one surviving segment aggregate to 9 on both endpoints
    const Instance c = make_cvrp({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}}, {0, 5, 2, 3, 4}, 20);
    const HyperGraph ch = reduce(c, cluster_destroy(c, RoutePlan{{{1, 2, 3, 4}}}, 1, 1));
    const int e2 = ch.row_of(2), e4 = ch.row_of(4);
    REQUIRE((e2 >= 0 && e4 >= 0));
    CHECK(ch.rows[e2].dr == 9.0);
    CHECK(ch.rows[e4].dr == 9.0);
    CHECK(ch.rows[ch.row_of(1)].dr == 5.0);
    const auto fm = ch.feature_matrix();
    CHECK(fm.size() == 3u * 6u);
    CHECK(fm[e2 * 6 + 5] == 9.0 / 20.0);

    CHECK_THROWS_AS(reduce(inst, Destruction{}), DomainError);
}

TEST_CASE("reduction invariants on random destructions") {
    Rng rng = make_rng(8);
    for (int i = 0; i < 500; ++i) {
        const int n = uniform_int(rng, 4, 50);
        const Instance inst = gen_uniform(ProblemKind::Tsp, n, 100 + i);
        const HyperGraph hg = reduce(inst, cluster_destroy(inst, shuffled(n, rng), uniform_int(rng, 0, n - 1),
                                                           uniform_int(rng, 1, n)));
        REQUIRE_NOTHROW(hg.check_invariants());
        REQUIRE(hg.size() == static_cast<int>(hg.isolated.size() + 2 * hg.edges.size()));
        std::vector<int> role(n, 0);
        for (int v : hg.isolated) ++role[v];
        for (const auto& e : hg.edges) {
            for (int v : e.nodes) ++role[v];
        }
        for (int v = 0; v < n; ++v) REQUIRE(role[v] == 1);
        for (int r = 0; r < hg.size(); ++r) {
            const FeatureRow& f = hg.rows[r];
            REQUIRE(f.xa == inst.coords[hg.origin[r]].x);
            if (hg.partner[r] < 0) {
                REQUIRE((f.flag == 0.0 && f.xb == f.xa && f.yb == f.ya));
            } else {
                REQUIRE(f.flag == 1.0);
                REQUIRE(f.xb == inst.coords[hg.origin[hg.partner[r]]].x);
                REQUIRE(hg.partner[hg.partner[r]] == r);
            }
        }
    }
}

TEST_CASE("coordinate transform") {
    const Instance unit = make_tsp({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.25}});
    const HyperGraph h = reduce(unit, cluster_destroy(unit, identity_tour(5), 4, 2));
    CHECK(transform_coords(h).rows == h.rows);

    Rng rng = make_rng(2);
    for (int i = 0; i < 50; ++i) {
        std::vector<Point> pts(20), shifted(20), scaled(20);
        for (int v = 0; v < 20; ++v) {
            // dyadic coordinates keep the shift and the scale exact
            pts[v] = {uniform_int(rng, 0, 1 << 16) / 65536.0, uniform_int(rng, 0, 1 << 16) / 65536.0};
            shifted[v] = {pts[v].x + 5, pts[v].y + 5};
            scaled[v] = {pts[v].x * 3, pts[v].y * 3};
        }
        const Tour t = shuffled(20, rng);
        const int c = uniform_int(rng, 0, 19), k = uniform_int(rng, 2, 19);
        auto rows = [&](const std::vector<Point>& p) {
            const Instance inst = make_tsp(p);
            return transform_coords(reduce(inst, cluster_destroy(inst, t, c, k))).rows;
        };
        const auto base = rows(pts);
        CHECK(rows(shifted) == base);
        CHECK(rows(scaled) == base);
        for (const auto& f : base) {
            REQUIRE((f.xa >= 0.0 && f.xa <= 1.0 && f.ya >= 0.0 && f.ya <= 1.0));
        }
    }

    const Instance same = make_tsp({{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}});
    CHECK_THROWS_AS(transform_coords(reduce(same, cluster_destroy(same, identity_tour(4), 0, 4))),
                    DegenerateInputError);
}

TEST_CASE("target sequences") {
    const Instance inst = gen_uniform(ProblemKind::Tsp, 12, 40);
    const Tour label = held_karp(inst);
    const HyperGraph all = reduce(inst, cluster_destroy(inst, label, 0, 12));
    const TargetSequence ts = target_sequence(label, all);
    std::vector<int> mapped;
    for (int r : ts.order) mapped.push_back(all.origin[r]);
    CHECK(mapped == label.order);
    CHECK(std::count(ts.forced.begin(), ts.forced.end(), 1) == 0);

    Rng rng = make_rng(77);
    for (int i = 0; i < 300; ++i) {
        const Instance s = gen_uniform(ProblemKind::Tsp, 12, 500 + i);
        Tour l = held_karp(s);
        if (i % 2) std::reverse(l.order.begin(), l.order.end());
        const HyperGraph hg = reduce(s, cluster_destroy(s, l, uniform_int(rng, 0, 11), uniform_int(rng, 1, 11)));
        const TargetSequence t = target_sequence(l, hg);
        REQUIRE(t.order.size() == static_cast<std::size_t>(hg.size()));
        REQUIRE(std::count(t.forced.begin(), t.forced.end(), 1) == static_cast<long>(hg.edges.size()));
        for (std::size_t p = 1; p < t.order.size(); ++p) {
            if (t.forced[p]) REQUIRE(hg.partner[t.order[p - 1]] == t.order[p]);
        }
        // every valid start row yields a full walk
        for (int start : valid_start_rows(l, hg)) {
            const TargetSequence alt = target_sequence(l, hg, start);
            REQUIRE(alt.order.front() == start);
            REQUIRE(std::abs(tour_length(s, restore_tour(hg, {alt.order, {}})) - tour_length(s, l)) < 1e-9);
        }
    }

    const Instance other = gen_uniform(ProblemKind::Tsp, 12, 41);
    const Tour wrong = random_insertion(other, 1);
    const HyperGraph hg = reduce(inst, cluster_destroy(inst, label, 3, 4));
    if (oracle::edge_set(wrong.order) != oracle::edge_set(label.order)) {
        CHECK_THROWS_AS(target_sequence(wrong, hg), ConsistencyError);
    }
}

TEST_CASE("restoration") {
    const Instance inst = gen_uniform(ProblemKind::Tsp, 9, 3);
    const HyperGraph all = reduce(inst, cluster_destroy(inst, identity_tour(9), 0, 9));
    const std::vector<int> order = {4, 2, 0, 8, 1, 3, 5, 7, 6};
    const Tour back = restore_tour(all, {order, {}});
    std::vector<int> expect;
    for (int r : order) expect.push_back(all.origin[r]);
    CHECK(back.order == expect);

    Rng rng = make_rng(21);
    for (int i = 0; i < 1000; ++i) {
        const Instance s = gen_uniform(ProblemKind::Tsp, 12, 20000 + i);
        const Tour t = shuffled(12, rng);
        const HyperGraph hg = reduce(s, cluster_destroy(s, t, uniform_int(rng, 0, 11), uniform_int(rng, 1, 12)));
        // a random valid reduced order: shuffle units, orient hyper-edges at random
        std::vector<std::vector<int>> units;
        for (int r = 0; r < hg.size(); ++r) {
            if (hg.partner[r] < 0) units.push_back({r});
            else if (r < hg.partner[r]) units.push_back(uniform_int(rng, 0, 1) ? std::vector<int>{r, hg.partner[r]}
                                                                               : std::vector<int>{hg.partner[r], r});
        }
        std::shuffle(units.begin(), units.end(), rng);
        std::vector<int> ro;
        for (const auto& u : units) ro.insert(ro.end(), u.begin(), u.end());
        REQUIRE(is_valid_reduced_order(hg, ro));
        const Tour restored = restore_tour(hg, {ro, {}});
        REQUIRE_NOTHROW(validate_tour(s, restored));
        // reduced connections plus fixed chains, summed independently
        double conn = 0.0;
        for (std::size_t p = 0; p < ro.size(); ++p) {
            const int a = ro[p], b = ro[(p + 1) % ro.size()];
            if (hg.partner[a] == b) continue;
            conn += path_length(s, {hg.origin[a], hg.origin[b]});
        }
        double fixed = 0.0;
        for (const auto& e : hg.edges) fixed += path_length(s, e.nodes);
        REQUIRE(std::abs(tour_length(s, restored) - (conn + fixed)) < 1e-9);
        REQUIRE(std::abs(reduced_connection_length(s, hg, ro) - conn) < 1e-9);
        REQUIRE(std::abs(fixed_segment_length(s, hg) - fixed) < 1e-9);
    }

    // 8-cycle without nodes 0 and 3: chains 1-2 and 4-5-6-7
    const Instance eight = gen_uniform(ProblemKind::Tsp, 8, 4);
    std::vector<char> gone(8, 0);
    gone[0] = gone[3] = 1;
    const HyperGraph two = reduce(eight, destroy_nodes(solution_graph(eight, identity_tour(8)), gone));
    REQUIRE(two.size() == 6);
    auto rows = [&](std::vector<int> nodes) {
        for (int& v : nodes) v = two.row_of(v);
        return ReducedSolution{nodes, {}};
    };
    CHECK_NOTHROW(restore_tour(two, rows({1, 2, 0, 4, 7, 3})));
    CHECK_NOTHROW(restore_tour(two, rows({2, 7, 4, 0, 3, 1})));  // wraps from 1 back to 2
    CHECK_THROWS_AS(restore_tour(two, rows({1, 0, 2, 4, 7, 3})), InfeasibleError);
    CHECK_THROWS_AS(restore_tour(two, rows({1, 2, 4, 7, 3})), InfeasibleError);
}

TEST_CASE("CVRP round trip") {
    Rng rng = make_rng(31);
    for (int i = 0; i < 200; ++i) {
        const Instance inst = gen_uniform(ProblemKind::Cvrp, 20, 800 + i);
        const RoutePlan plan = sweep(inst);
        const HyperGraph hg = reduce(inst, cluster_destroy(inst, plan, uniform_int(rng, 1, 20), uniform_int(rng, 1, 20)));
        const int first = uniform_int(rng, 0, static_cast<int>(plan.routes.size()) - 1);
        const TargetSequence ts = target_sequence(plan, hg, first);
        REQUIRE(ts.order.size() == static_cast<std::size_t>(hg.size()));
        const RoutePlan back = restore_routes(hg, {ts.order, ts.route_start});
        REQUIRE(oracle::routes_feasible(back.routes, inst.demands, inst.capacity));
        REQUIRE(std::abs(route_cost(inst, back) - route_cost(inst, plan)) < 1e-9);
    }
}

TEST_CASE("row permutation") {
    const Instance inst = gen_uniform(ProblemKind::Tsp, 15, 9);
    const HyperGraph hg = reduce(inst, cluster_destroy(inst, identity_tour(15), 4, 5));
    std::vector<int> perm(hg.size());
    std::iota(perm.rbegin(), perm.rend(), 0);
    const HyperGraph p = permute_rows(hg, perm);
    REQUIRE_NOTHROW(p.check_invariants());
    for (int i = 0; i < hg.size(); ++i) {
        CHECK(p.rows[i] == hg.rows[perm[i]]);
        CHECK(p.origin[i] == hg.origin[perm[i]]);
        if (hg.partner[perm[i]] >= 0) CHECK(perm[p.partner[i]] == hg.partner[perm[i]]);
    }
    CHECK_THROWS_AS(permute_rows(hg, std::vector<int>(hg.size(), 0)), ShapeError);
}

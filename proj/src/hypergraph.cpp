#include "drhg/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drhg/errors.hpp"

namespace drhg {

SolutionGraph solution_graph(const Instance& inst, const Tour& tour) {
    if (inst.kind != ProblemKind::Tsp) throw KindError("tour graph needs a TSP instance");
    validate_tour(inst, tour);
    const int n = inst.size();
    SolutionGraph g{std::vector<int>(n, -1), std::vector<int>(n, -1), std::vector<char>(n, 1)};
    for (int i = 0; i < n; ++i) {
        const int u = tour.order[i];
        const int v = tour.order[(i + 1) % n];
        g.next[u] = v;
        g.prev[v] = u;
    }
    return g;
}

SolutionGraph solution_graph(const Instance& inst, const RoutePlan& plan) {
    validate_routes(inst, plan);
    const int n = inst.size();
    SolutionGraph g{std::vector<int>(n, -1), std::vector<int>(n, -1), std::vector<char>(n, 1)};
    g.participant[0] = 0;
    for (const auto& route : plan.routes) {
        for (std::size_t i = 0; i + 1 < route.size(); ++i) {
            g.next[route[i]] = route[i + 1];
            g.prev[route[i + 1]] = route[i];
        }
    }
    return g;
}

std::vector<int> nearest_order(const Instance& inst, const SolutionGraph& g, int center) {
    if (center < 0 || center >= g.size() || !g.participant[center]) {
        throw IndexError("invalid destruction center " + std::to_string(center));
    }
    std::vector<std::pair<double, int>> keyed;
    keyed.reserve(g.size());
    const Point c = inst.coords[center];
    for (int v = 0; v < g.size(); ++v) {
        if (g.participant[v]) keyed.emplace_back(euclidean(inst.coords[v], c), v);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<int> order;
    order.reserve(keyed.size());
    for (const auto& kv : keyed) order.push_back(kv.second);
    return order;
}

Destruction destroy_nodes(const SolutionGraph& g, const std::vector<char>& destroyed) {
    const int n = g.size();
    if (static_cast<int>(destroyed.size()) != n) throw ShapeError("destroy mask size mismatch");
    Destruction d;
    std::vector<int> sprev(n, -1), snext(n, -1);
    for (int v = 0; v < n; ++v) {
        if (destroyed[v]) {
            if (!g.participant[v]) throw DomainError("node " + std::to_string(v) + " cannot be destroyed");
            d.destroyed.push_back(v);
        }
        const int w = g.next[v];
        if (w < 0) continue;
        if (destroyed[v] || destroyed[w]) {
            d.destroyed_edges.emplace_back(v, w);
        } else {
            snext[v] = w;
            sprev[w] = v;
        }
    }
    for (int v = 0; v < n; ++v) {
        if (!g.participant[v]) continue;
        if (sprev[v] < 0 && snext[v] < 0) {
            d.isolated.push_back(v);
        } else if (sprev[v] < 0) {
            std::vector<int> seg{v};
            for (int w = snext[v]; w >= 0; w = snext[w]) seg.push_back(w);
            d.segments.push_back(std::move(seg));
        }
    }
    return d;
}

Destruction cluster_destroy(const Instance& inst, const Tour& tour, int center, int count) {
    const SolutionGraph g = solution_graph(inst, tour);
    if (count < 1 || count > inst.size()) {
        throw DomainError("destroy count " + std::to_string(count) + " outside [1, " + std::to_string(inst.size()) + "]");
    }
    const auto order = nearest_order(inst, g, center);
    std::vector<char> mask(inst.size(), 0);
    for (int i = 0; i < count; ++i) mask[order[i]] = 1;
    return destroy_nodes(g, mask);
}

Destruction cluster_destroy(const Instance& inst, const RoutePlan& plan, int center, int count) {
    const SolutionGraph g = solution_graph(inst, plan);
    if (count < 1 || count > inst.customer_count()) {
        throw DomainError("destroy count " + std::to_string(count) + " outside [1, " +
                          std::to_string(inst.customer_count()) + "]");
    }
    const auto order = nearest_order(inst, g, center);
    std::vector<char> mask(inst.size(), 0);
    for (int i = 0; i < count; ++i) mask[order[i]] = 1;
    Destruction d = destroy_nodes(g, mask);
    for (const auto& route : plan.routes) {
        d.destroyed_edges.emplace_back(0, route.front());
        d.destroyed_edges.emplace_back(route.back(), 0);
    }
    return d;
}

int emergence_count(const SolutionGraph& g, int node, const std::vector<char>& destroyed) {
    const auto alive = [&](int v) { return v >= 0 && !destroyed[v]; };
    const int a1 = g.prev[node];
    const int b1 = g.next[node];
    const bool c1a = alive(a1);
    const bool c1b = alive(b1);
    const bool c2a = c1a && alive(g.prev[a1]);
    const bool c2b = c1b && alive(g.next[b1]);
    return std::max(0, int(c1a) + int(c1b) + int(c2a) + int(c2b) - 1);
}

AlignmentResult align_sample_size(const Instance& inst, const SolutionGraph& g, int center, int target_size) {
    const int n = g.size();
    AlignmentResult res;
    res.order = nearest_order(inst, g, center);
    std::vector<int> rank(n, std::numeric_limits<int>::max());
    for (int i = 0; i < static_cast<int>(res.order.size()); ++i) rank[res.order[i]] = i;

    // Size before any destruction: path ends and lone nodes (zero for a cycle).
    int base = 0;
    for (int v = 0; v < n; ++v) {
        if (!g.participant[v]) continue;
        if (g.prev[v] < 0 || g.next[v] < 0) ++base;
    }

    // A neighbour is still connected when it is destroyed later (higher rank).
    res.emergence.resize(res.order.size());
    res.cumulative.resize(res.order.size());
    int h = base;
    for (std::size_t i = 0; i < res.order.size(); ++i) {
        const int v = res.order[i];
        const int r = rank[v];
        const auto later = [&](int w) { return w >= 0 && rank[w] > r; };
        const int a1 = g.prev[v];
        const int b1 = g.next[v];
        const bool c1a = later(a1);
        const bool c1b = later(b1);
        const bool c2a = c1a && later(g.prev[a1]);
        const bool c2b = c1b && later(g.next[b1]);
        res.emergence[i] = std::max(0, int(c1a) + int(c1b) + int(c2a) + int(c2b) - 1);
        h += res.emergence[i];
        res.cumulative[i] = h;
    }

    res.mask.assign(n, 0);
    int p = 0;
    while (p < static_cast<int>(res.order.size()) && res.cumulative[p] <= target_size) {
        res.mask[res.order[p]] = 1;
        ++p;
    }
    res.destroy_count = p;
    res.achieved_size = p > 0 ? res.cumulative[p - 1] : base;
    res.feasible = p > 0 && res.achieved_size == target_size;
    return res;
}

// --- reduction ----------------------------------------------------------------

int HyperGraph::row_of(int node) const {
    const auto it = std::find(origin.begin(), origin.end(), node);
    return it == origin.end() ? -1 : static_cast<int>(it - origin.begin());
}

std::vector<double> HyperGraph::feature_matrix() const {
    const int dim = input_dim();
    std::vector<double> out;
    out.reserve(rows.size() * dim);
    for (const auto& r : rows) {
        out.insert(out.end(), {r.xa, r.ya, r.xb, r.yb, r.flag});
        if (kind == ProblemKind::Cvrp) out.push_back(capacity > 0 ? r.dr / capacity : r.dr);
    }
    return out;
}

void HyperGraph::check_invariants() const {
    const int m = size();
    if (m != static_cast<int>(isolated.size() + 2 * edges.size())) {
        throw ConsistencyError("m != |A| + 2|E_r|");
    }
    if (static_cast<int>(origin.size()) != m || static_cast<int>(partner.size()) != m ||
        static_cast<int>(edge_of.size()) != m) {
        throw ConsistencyError("row metadata size mismatch");
    }
    for (int r = 0; r < m; ++r) {
        const auto& f = rows[r];
        if (partner[r] < 0) {
            if (f.flag != 0.0 || f.xb != f.xa || f.yb != f.ya) throw ConsistencyError("bad isolated row");
        } else {
            const auto& p = rows[partner[r]];
            if (f.flag != 1.0 || f.xb != p.xa || f.yb != p.ya || partner[partner[r]] != r) {
                throw ConsistencyError("bad endpoint row");
            }
        }
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto& he = edges[e];
        if (he.nodes.size() < 2 || origin[he.row_a] != he.nodes.front() || origin[he.row_b] != he.nodes.back() ||
            edge_of[he.row_a] != static_cast<int>(e) || edge_of[he.row_b] != static_cast<int>(e)) {
            throw ConsistencyError("bad hyper-edge record");
        }
    }
}

HyperGraph reduce(const Instance& inst, const Destruction& destruction) {
    if (destruction.destroyed.empty()) throw DomainError("reduce needs at least one destroyed node");
    HyperGraph hg;
    hg.kind = inst.kind;
    hg.capacity = inst.capacity;
    hg.isolated = destruction.isolated;
    for (const auto& seg : destruction.segments) {
        if (seg.size() < 2) throw ConsistencyError("segment shorter than 2 nodes");
        hg.endpoints.push_back(seg.front());
        hg.endpoints.push_back(seg.back());
    }
    std::sort(hg.endpoints.begin(), hg.endpoints.end());

    hg.origin = hg.isolated;
    hg.origin.insert(hg.origin.end(), hg.endpoints.begin(), hg.endpoints.end());
    std::sort(hg.origin.begin(), hg.origin.end());
    if (std::adjacent_find(hg.origin.begin(), hg.origin.end()) != hg.origin.end()) {
        throw ConsistencyError("node is both isolated and an endpoint");
    }
    const int m = static_cast<int>(hg.origin.size());
    hg.partner.assign(m, -1);
    hg.edge_of.assign(m, -1);
    hg.demand.assign(m, 0);
    hg.rows.resize(m);

    const bool cvrp = inst.kind == ProblemKind::Cvrp;
    for (int r = 0; r < m; ++r) {
        const Point p = inst.coords[hg.origin[r]];
        hg.rows[r] = FeatureRow{p.x, p.y, p.x, p.y, 0.0, 0.0};
        if (cvrp) {
            hg.demand[r] = inst.demands[hg.origin[r]];
            hg.rows[r].dr = hg.demand[r];
        }
    }
    const auto sorted_row = [&](int node) {
        return static_cast<int>(std::lower_bound(hg.origin.begin(), hg.origin.end(), node) - hg.origin.begin());
    };
    for (const auto& seg : destruction.segments) {
        HyperEdge he{sorted_row(seg.front()), sorted_row(seg.back()), seg};
        const int e = static_cast<int>(hg.edges.size());
        hg.partner[he.row_a] = he.row_b;
        hg.partner[he.row_b] = he.row_a;
        hg.edge_of[he.row_a] = hg.edge_of[he.row_b] = e;
        int dr = 0;
        if (cvrp) for (int v : seg) dr += inst.demands[v];
        for (const auto& [self, other] : {std::pair{he.row_a, he.row_b}, std::pair{he.row_b, he.row_a}}) {
            auto& f = hg.rows[self];
            f.xb = hg.rows[other].xa;
            f.yb = hg.rows[other].ya;
            f.flag = 1.0;
            if (cvrp) {
                f.dr = dr;
                hg.demand[self] = dr;
            }
        }
        hg.edges.push_back(std::move(he));
    }
    return hg;
}

HyperGraph transform_coords(const HyperGraph& hg) {
    if (hg.size() < 2) throw DomainError("coordinate transform needs at least 2 rows");
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    for (const auto& r : hg.rows) {
        min_x = std::min({min_x, r.xa, r.xb});
        min_y = std::min({min_y, r.ya, r.yb});
        max_x = std::max({max_x, r.xa, r.xb});
        max_y = std::max({max_y, r.ya, r.yb});
    }
    const double side = std::max(max_x - min_x, max_y - min_y);
    if (!(side > 0.0)) throw DegenerateInputError("all hyper-graph coordinates coincide");
    HyperGraph out = hg;
    for (auto& r : out.rows) {
        r.xa = (r.xa - min_x) / side;
        r.ya = (r.ya - min_y) / side;
        r.xb = (r.xb - min_x) / side;
        r.yb = (r.yb - min_y) / side;
    }
    out.transform = CoordTransform{min_x, min_y, 1.0 / side};
    return out;
}

HyperGraph permute_rows(const HyperGraph& hg, const std::vector<int>& perm) {
    const int m = hg.size();
    if (static_cast<int>(perm.size()) != m) throw ShapeError("permutation size mismatch");
    std::vector<int> inv(m, -1);
    for (int i = 0; i < m; ++i) {
        if (perm[i] < 0 || perm[i] >= m || inv[perm[i]] >= 0) throw ShapeError("not a permutation");
        inv[perm[i]] = i;
    }
    HyperGraph out = hg;
    for (int i = 0; i < m; ++i) {
        const int src = perm[i];
        out.rows[i] = hg.rows[src];
        out.origin[i] = hg.origin[src];
        out.partner[i] = hg.partner[src] < 0 ? -1 : inv[hg.partner[src]];
        out.edge_of[i] = hg.edge_of[src];
        out.demand[i] = hg.demand[src];
    }
    for (auto& e : out.edges) {
        e.row_a = inv[e.row_a];
        e.row_b = inv[e.row_b];
    }
    return out;
}

// --- supervision targets ----------------------------------------------------------

namespace {

/// Row lookup table indexed by original node id.
std::vector<int> row_table(const HyperGraph& hg, int n) {
    std::vector<int> table(n, -1);
    for (int r = 0; r < hg.size(); ++r) {
        if (hg.origin[r] < 0 || hg.origin[r] >= n) throw ConsistencyError("hyper-graph node outside the solution");
        table[hg.origin[r]] = r;
    }
    return table;
}

/// Walks `nodes` (a closed walk for TSP, concatenated routes for CVRP) and
/// emits rows, verifying every hyper-edge is traversed whole.
TargetSequence walk_rows(const HyperGraph& hg, const std::vector<int>& nodes, const std::vector<char>& opens_route,
                         const std::vector<int>& rows) {
    TargetSequence ts;
    const int m = hg.size();
    std::vector<char> emitted(m, 0);
    std::vector<int> expected;  // remaining chain nodes of the hyper-edge being traversed
    std::size_t exp_pos = 0;
    int entry_row = -1;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int u = nodes[i];
        const int r = rows[u];
        if (entry_row >= 0) {
            if (exp_pos >= expected.size() || expected[exp_pos] != u) {
                throw ConsistencyError("label does not traverse hyper-edge contiguously");
            }
            ++exp_pos;
            if (exp_pos == expected.size()) {
                if (r != hg.partner[entry_row]) throw ConsistencyError("hyper-edge exit mismatch");
                ts.order.push_back(r);
                ts.forced.push_back(1);
                if (!opens_route.empty()) ts.route_start.push_back(0);
                emitted[r] = 1;
                entry_row = -1;
            } else if (r >= 0) {
                throw ConsistencyError("hyper-graph row inside a hyper-edge");
            }
            continue;
        }
        if (r < 0) throw ConsistencyError("interior node reached outside its hyper-edge");
        if (emitted[r]) throw ConsistencyError("row visited twice");
        ts.order.push_back(r);
        ts.forced.push_back(0);
        if (!opens_route.empty()) ts.route_start.push_back(opens_route[i]);
        emitted[r] = 1;
        if (hg.partner[r] >= 0) {
            const auto& he = hg.edges[hg.edge_of[r]];
            expected = he.nodes;
            if (r == he.row_b) std::reverse(expected.begin(), expected.end());
            exp_pos = 1;
            entry_row = r;
        }
    }
    if (entry_row >= 0) throw ConsistencyError("walk ended inside a hyper-edge");
    if (static_cast<int>(ts.order.size()) != m) throw ConsistencyError("label does not cover the hyper-graph");
    return ts;
}

bool is_entry(const std::vector<int>& next, const HyperGraph& hg, int row) {
    if (hg.partner[row] < 0) return false;
    const auto& he = hg.edges[hg.edge_of[row]];
    const int along = row == he.row_a ? he.nodes[1] : he.nodes[he.nodes.size() - 2];
    return next[hg.origin[row]] == along;
}

std::vector<int> tour_next(const Tour& tour, int n) {
    std::vector<int> next(n, -1);
    for (int i = 0; i < n; ++i) next[tour.order[i]] = tour.order[(i + 1) % n];
    return next;
}

}  // namespace

std::vector<int> valid_start_rows(const Tour& tour, const HyperGraph& hg) {
    const int n = static_cast<int>(tour.order.size());
    const auto next = tour_next(tour, n);
    std::vector<int> out;
    if (hg.edges.empty()) {
        out.resize(hg.size());
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    for (const auto& he : hg.edges) {
        if (is_entry(next, hg, he.row_a)) out.push_back(he.row_a);
        else if (is_entry(next, hg, he.row_b)) out.push_back(he.row_b);
        else throw ConsistencyError("hyper-edge not traversed by the tour");
    }
    return out;
}

TargetSequence target_sequence(const Tour& tour, const HyperGraph& hg, std::optional<int> start_row) {
    const int n = static_cast<int>(tour.order.size());
    const auto rows = row_table(hg, n);
    const auto next = tour_next(tour, n);
    int start;
    if (start_row) {
        start = *start_row;
        if (start < 0 || start >= hg.size()) throw IndexError("start row out of range");
        if (hg.partner[start] >= 0 && !is_entry(next, hg, start)) {
            throw ConsistencyError("start row is not an entry endpoint for this orientation");
        }
    } else {
        start = hg.edges.empty() ? rows[tour.order[0]] : valid_start_rows(tour, hg).front();
        if (start < 0) throw ConsistencyError("tour start is not a hyper-graph row");
    }
    std::vector<int> walk;
    walk.reserve(n);
    const int s = static_cast<int>(std::find(tour.order.begin(), tour.order.end(), hg.origin[start]) - tour.order.begin());
    if (s == n) throw ConsistencyError("start node missing from the tour");
    for (int i = 0; i < n; ++i) walk.push_back(tour.order[(s + i) % n]);
    return walk_rows(hg, walk, {}, rows);
}

TargetSequence target_sequence(const RoutePlan& plan, const HyperGraph& hg, int first_route) {
    const int routes = static_cast<int>(plan.routes.size());
    if (first_route < 0 || first_route >= routes) throw IndexError("first route out of range");
    int n = 0;
    for (const auto& r : plan.routes) for (int v : r) n = std::max(n, v + 1);
    for (int v : hg.origin) n = std::max(n, v + 1);
    const auto rows = row_table(hg, n);
    std::vector<int> walk;
    std::vector<char> opens;
    for (int k = 0; k < routes; ++k) {
        const auto& route = plan.routes[(first_route + k) % routes];
        for (std::size_t i = 0; i < route.size(); ++i) {
            walk.push_back(route[i]);
            opens.push_back(i == 0);
        }
    }
    return walk_rows(hg, walk, opens, rows);
}

// --- restoration ----------------------------------------------------------------

namespace {

struct Unit {
    int entry = -1;
    int exit = -1;  // -1 for an isolated row
};

std::optional<std::vector<Unit>> pair_linear(const HyperGraph& hg, const std::vector<int>& order) {
    std::vector<Unit> units;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int r = order[i];
        if (hg.partner[r] < 0) {
            units.push_back({r, -1});
            continue;
        }
        if (i + 1 >= order.size() || order[i + 1] != hg.partner[r]) return std::nullopt;
        units.push_back({r, order[i + 1]});
        ++i;
    }
    return units;
}

bool is_permutation_of_rows(const HyperGraph& hg, const std::vector<int>& order) {
    const int m = hg.size();
    if (static_cast<int>(order.size()) != m) return false;
    std::vector<char> seen(m, 0);
    for (int r : order) {
        if (r < 0 || r >= m || seen[r]) return false;
        seen[r] = 1;
    }
    return true;
}

/// Pairs rows into units; TSP orders may wrap around once.
std::vector<Unit> pair_units(const HyperGraph& hg, const std::vector<int>& order) {
    if (!is_permutation_of_rows(hg, order)) throw InfeasibleError("reduced order is not a permutation of rows");
    if (auto u = pair_linear(hg, order)) return *u;
    if (hg.kind == ProblemKind::Tsp && order.size() >= 2) {
        std::vector<int> rotated{order.back()};
        rotated.insert(rotated.end(), order.begin(), order.end() - 1);
        if (auto u = pair_linear(hg, rotated)) return *u;
    }
    throw InfeasibleError("hyper-edge endpoints not adjacent in reduced order");
}

void append_unit(const HyperGraph& hg, const Unit& u, std::vector<int>& out) {
    if (u.exit < 0) {
        out.push_back(hg.origin[u.entry]);
        return;
    }
    const auto& nodes = hg.edges[hg.edge_of[u.entry]].nodes;
    if (u.entry == hg.edges[hg.edge_of[u.entry]].row_a) out.insert(out.end(), nodes.begin(), nodes.end());
    else out.insert(out.end(), nodes.rbegin(), nodes.rend());
}

}  // namespace

bool is_valid_reduced_order(const HyperGraph& hg, const std::vector<int>& order) {
    try {
        pair_units(hg, order);
        return true;
    } catch (const InfeasibleError&) {
        return false;
    }
}

Tour restore_tour(const HyperGraph& hg, const ReducedSolution& sol) {
    if (hg.kind != ProblemKind::Tsp) throw KindError("restore_tour needs a TSP hyper-graph");
    Tour t;
    for (const auto& u : pair_units(hg, sol.order)) append_unit(hg, u, t.order);
    return t;
}

RoutePlan restore_routes(const HyperGraph& hg, const ReducedSolution& sol) {
    if (hg.kind != ProblemKind::Cvrp) throw KindError("restore_routes needs a CVRP hyper-graph");
    if (!is_permutation_of_rows(hg, sol.order)) throw InfeasibleError("reduced order is not a permutation of rows");
    const auto units = pair_linear(hg, sol.order);
    if (!units) throw InfeasibleError("hyper-edge endpoints not adjacent in reduced order");
    if (!sol.route_start.empty() && sol.route_start.size() != sol.order.size()) {
        throw ShapeError("route_start size mismatch");
    }
    RoutePlan plan;
    std::vector<int> route;
    int load = 0;
    std::size_t pos = 0;
    for (const auto& u : *units) {
        const int dem = hg.demand[u.entry];
        const bool open = sol.route_start.empty() ? (!route.empty() && load + dem > hg.capacity)
                                                  : (pos == 0 || sol.route_start[pos]);
        if (open && !route.empty()) {
            plan.routes.push_back(std::move(route));
            route.clear();
            load = 0;
        }
        if (!sol.route_start.empty() && u.exit >= 0 && sol.route_start[pos + 1]) {
            throw InfeasibleError("route break inside a hyper-edge");
        }
        load += dem;
        if (load > hg.capacity) throw InfeasibleError("route exceeds capacity");
        append_unit(hg, u, route);
        pos += u.exit < 0 ? 1 : 2;
    }
    if (!route.empty()) plan.routes.push_back(std::move(route));
    return plan;
}

double reduced_connection_length(const Instance& inst, const HyperGraph& hg, const std::vector<int>& order) {
    const auto units = pair_units(hg, order);
    double total = 0.0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& a = units[i];
        const auto& b = units[(i + 1) % units.size()];
        const int from = hg.origin[a.exit < 0 ? a.entry : a.exit];
        total += distance(inst, from, hg.origin[b.entry]);
    }
    return total;
}

double fixed_segment_length(const Instance& inst, const HyperGraph& hg) {
    double total = 0.0;
    for (const auto& he : hg.edges) {
        for (std::size_t i = 0; i + 1 < he.nodes.size(); ++i) total += distance(inst, he.nodes[i], he.nodes[i + 1]);
    }
    return total;
}

}  // namespace drhg

#include "drhg/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "drhg/errors.hpp"
#include "drhg/random.hpp"

namespace drhg {

Tour random_insertion(const Instance& inst, std::uint64_t seed) {
    if (inst.kind != ProblemKind::Tsp) throw KindError("random insertion needs a TSP instance");
    const int n = inst.size();
    Rng rng = make_rng(seed);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<int> tour(perm.begin(), perm.begin() + 3);
    tour.reserve(n);
    for (int idx = 3; idx < n; ++idx) {
        const int v = perm[idx];
        std::size_t best_pos = 0;
        double best = std::numeric_limits<double>::infinity();
        const std::size_t len = tour.size();
        for (std::size_t i = 0; i < len; ++i) {
            const int a = tour[i];
            const int b = tour[(i + 1) % len];
            const double delta = distance(inst, a, v) + distance(inst, v, b) - distance(inst, a, b);
            if (delta < best) {
                best = delta;
                best_pos = i + 1;
            }
        }
        tour.insert(tour.begin() + static_cast<std::ptrdiff_t>(best_pos), v);
    }
    return Tour{std::move(tour)};
}

RoutePlan sweep(const Instance& inst) {
    if (inst.kind != ProblemKind::Cvrp) throw KindError("sweep needs a CVRP instance");
    const Point depot = inst.coords[0];
    std::vector<std::pair<double, int>> by_angle;
    for (int i = 1; i < inst.size(); ++i) {
        by_angle.emplace_back(std::atan2(inst.coords[i].y - depot.y, inst.coords[i].x - depot.x), i);
    }
    std::sort(by_angle.begin(), by_angle.end());

    RoutePlan plan;
    std::vector<int> route;
    int load = 0;
    for (const auto& [angle, v] : by_angle) {
        if (!route.empty() && load + inst.demands[v] > inst.capacity) {
            plan.routes.push_back(std::move(route));
            route.clear();
            load = 0;
        }
        route.push_back(v);
        load += inst.demands[v];
    }
    if (!route.empty()) plan.routes.push_back(std::move(route));
    return plan;
}

ExactTour held_karp(const std::vector<std::vector<double>>& dm) {
    const int n = static_cast<int>(dm.size());
    if (n == 0) throw DomainError("empty distance matrix");
    if (n == 1) return {{0}, 0.0};
    if (n == 2) return {{0, 1}, dm[0][1] + dm[1][0]};
    if (n > 24) throw SizeError("Held-Karp limited to 24 nodes");

    // Node v in 1..n-1 maps to bit v-1; dp[mask * k + (v-1)] = shortest path
    // 0 -> ... -> v covering exactly the nodes of mask.
    const int k = n - 1;
    const std::size_t states = std::size_t{1} << k;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp(states * k, inf);
    for (int v = 0; v < k; ++v) dp[(std::size_t{1} << v) * k + v] = dm[0][v + 1];

    for (std::size_t mask = 1; mask < states; ++mask) {
        if ((mask & (mask - 1)) == 0) continue;
        double* row = &dp[mask * k];
        for (int v = 0; v < k; ++v) {
            if (!(mask & (std::size_t{1} << v))) continue;
            const std::size_t prev = mask ^ (std::size_t{1} << v);
            const double* prow = &dp[prev * k];
            const auto& dv = dm[v + 1];
            double best = inf;
            for (int u = 0; u < k; ++u) {
                if (!(prev & (std::size_t{1} << u))) continue;
                const double c = prow[u] + dv[u + 1];
                if (c < best) best = c;
            }
            row[v] = best;
        }
    }

    const std::size_t full = states - 1;
    double best = inf;
    int last = -1;
    for (int v = 0; v < k; ++v) {
        const double c = dp[full * k + v] + dm[v + 1][0];
        if (c < best) {
            best = c;
            last = v;
        }
    }

    std::vector<int> rev;
    std::size_t mask = full;
    int cur = last;
    while (cur >= 0) {
        rev.push_back(cur + 1);
        const std::size_t prev = mask ^ (std::size_t{1} << cur);
        if (prev == 0) break;
        const double target = dp[mask * k + cur];
        int next = -1;
        double best_gap = inf;
        for (int u = 0; u < k; ++u) {
            if (!(prev & (std::size_t{1} << u))) continue;
            const double g = std::abs(dp[prev * k + u] + dm[u + 1][cur + 1] - target);
            if (g < best_gap) {
                best_gap = g;
                next = u;
            }
        }
        mask = prev;
        cur = next;
    }
    std::vector<int> order{0};
    order.insert(order.end(), rev.rbegin(), rev.rend());
    return {std::move(order), best};
}

Tour held_karp(const Instance& inst, int max_exact_n) {
    if (inst.kind != ProblemKind::Tsp) throw KindError("Held-Karp needs a TSP instance");
    if (inst.size() > max_exact_n) {
        throw SizeError("Held-Karp limited to " + std::to_string(max_exact_n) + " nodes, instance has " +
                        std::to_string(inst.size()));
    }
    return Tour{held_karp(distance_matrix(inst)).order};
}

namespace {

constexpr double kImproveEps = 1e-10;

/// One randomized first-improvement 2-opt sweep. Returns true if any move applied.
bool two_opt_pass(const std::vector<std::vector<double>>& d, std::vector<int>& t, Rng& rng) {
    const int n = static_cast<int>(t.size());
    std::vector<int> scan(n);
    std::iota(scan.begin(), scan.end(), 0);
    std::shuffle(scan.begin(), scan.end(), rng);
    bool improved = false;
    for (int i : scan) {
        for (int j = 0; j < n; ++j) {
            // Edges (t[lo], t[lo+1]) and (t[hi], t[hi+1]).
            int lo = std::min(i, j);
            int hi = std::max(i, j);
            if (hi - lo < 2 || (lo == 0 && hi == n - 1)) continue;
            const int a = t[lo], b = t[lo + 1], c = t[hi], e = t[(hi + 1) % n];
            const double delta = d[a][c] + d[b][e] - d[a][b] - d[c][e];
            if (delta < -kImproveEps) {
                std::reverse(t.begin() + lo + 1, t.begin() + hi + 1);
                improved = true;
            }
        }
    }
    return improved;
}

/// Or-opt: relocate a segment of 1..3 consecutive nodes, optionally reversed.
bool or_opt_pass(const std::vector<std::vector<double>>& d, std::vector<int>& t) {
    const int n = static_cast<int>(t.size());
    bool improved = false;
    for (int seg = 1; seg <= 3 && seg + 2 < n; ++seg) {
        for (int start = 0; start < n; ++start) {
            const int s0 = t[start];
            const int s1 = t[(start + seg - 1) % n];
            const int prev = t[(start + n - 1) % n];
            const int next = t[(start + seg) % n];
            const double removal = d[prev][s0] + d[s1][next] - d[prev][next];
            // Candidate edges (p, q) outside the segment and not (prev, next)'s neighbours.
            double best = -kImproveEps;
            int best_p = -1;
            bool best_rev = false;
            for (int off = seg; off < n - 1; ++off) {
                const int p = t[(start + off) % n];
                const int q = t[(start + off + 1) % n];
                const double fwd = d[p][s0] + d[s1][q] - d[p][q] - removal;
                const double bwd = d[p][s1] + d[s0][q] - d[p][q] - removal;
                if (fwd < best) { best = fwd; best_p = off; best_rev = false; }
                if (bwd < best) { best = bwd; best_p = off; best_rev = true; }
            }
            if (best_p < 0) continue;
            // Rebuild: rotate so the segment sits at the front, then move it.
            std::vector<int> rot(n);
            for (int i = 0; i < n; ++i) rot[i] = t[(start + i) % n];
            std::vector<int> segment(rot.begin(), rot.begin() + seg);
            if (best_rev) std::reverse(segment.begin(), segment.end());
            std::vector<int> rest(rot.begin() + seg, rot.end());
            const int insert_after = best_p - seg;  // index in rest of p
            std::vector<int> out;
            out.reserve(n);
            out.insert(out.end(), rest.begin(), rest.begin() + insert_after + 1);
            out.insert(out.end(), segment.begin(), segment.end());
            out.insert(out.end(), rest.begin() + insert_after + 1, rest.end());
            t = std::move(out);
            improved = true;
        }
    }
    return improved;
}

}  // namespace

Tour local_search_label(const Instance& inst, const Tour& start, const LabelerConfig& cfg) {
    if (inst.kind != ProblemKind::Tsp) throw KindError("local search labels need a TSP instance");
    validate_tour(inst, start);
    if (cfg.ls_rounds <= 0) throw ConfigError("ls_rounds must be positive");
    if (inst.size() < 4) return start;
    const auto d = distance_matrix(inst);
    Rng rng = make_rng(cfg.seed, {0x2097});
    std::vector<int> t = start.order;
    for (int round = 0; round < cfg.ls_rounds; ++round) {
        const bool a = two_opt_pass(d, t, rng);
        const bool b = or_opt_pass(d, t);
        if (!a && !b) break;
    }
    return Tour{std::move(t)};
}

Tour make_label(const Instance& inst, const LabelerConfig& cfg) {
    if (cfg.mode == LabelMode::ExactDp) return held_karp(inst, cfg.max_exact_n);
    return local_search_label(inst, random_insertion(inst, cfg.seed), cfg);
}

// --- label files --------------------------------------------------------------

std::vector<Label> read_labels(std::istream& in) {
    std::vector<Label> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Label l;
            l.instance_name = j.at("instance_name").get<std::string>();
            if (j.contains("routes")) {
                l.is_routes = true;
                l.plan.routes = j.at("routes").get<std::vector<std::vector<int>>>();
            } else {
                l.tour.order = j.at("order").get<std::vector<int>>();
            }
            out.push_back(std::move(l));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

std::vector<Label> read_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_labels(in);
}

void write_labels(std::ostream& out, const std::vector<Label>& labels) {
    for (const auto& l : labels) {
        nlohmann::json j;
        j["instance_name"] = l.instance_name;
        if (l.is_routes) j["routes"] = l.plan.routes;
        else j["order"] = l.tour.order;
        out << j.dump() << '\n';
    }
}

void write_labels_file(const std::string& path, const std::vector<Label>& labels) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_labels(out, labels);
}

}  // namespace drhg

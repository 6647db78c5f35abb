#include "drhg/search.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "drhg/baselines.hpp"
#include "drhg/errors.hpp"
#include "drhg/parallel.hpp"

namespace drhg {

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<int> participants(const Instance& inst) {
    std::vector<int> out;
    for (int v = inst.kind == ProblemKind::Cvrp ? 1 : 0; v < inst.size(); ++v) out.push_back(v);
    return out;
}

std::vector<std::vector<int>> polylines(const Tour& t) {
    std::vector<int> path = t.order;
    if (!path.empty()) path.push_back(path.front());
    return {path};
}

std::vector<std::vector<int>> polylines(const RoutePlan& plan) {
    std::vector<std::vector<int>> out;
    for (const auto& r : plan.routes) {
        std::vector<int> path = {0};
        path.insert(path.end(), r.begin(), r.end());
        path.push_back(0);
        out.push_back(std::move(path));
    }
    return out;
}

template <class Solution>
void notify(const SearchConfig& cfg, const TraceRecord& rec, const Destruction& d, const Solution& before,
            const Solution& candidate) {
    if (!cfg.observer) return;
    IterationSnapshot snap;
    snap.iteration = rec.iteration;
    snap.accepted = rec.accepted;
    snap.destroyed = d.destroyed;
    snap.segments = d.segments;
    snap.before = polylines(before);
    snap.candidate = polylines(candidate);
    cfg.observer(snap);
}

bool accept(Acceptance policy, double candidate, double current) {
    return policy == Acceptance::Always || candidate <= current;
}

}  // namespace

std::pair<int, int> resolve_k_range(const SearchConfig& cfg, const Instance& inst) {
    const int n = inst.customer_count();
    int hi = cfg.k_max > 0 ? cfg.k_max : std::min(inst.kind == ProblemKind::Tsp ? 1000 : 200, n);
    hi = std::min(hi, n);
    const int lo = std::max(1, std::min(cfg.k_min, hi));
    if (hi < 1) throw DomainError("instance has no destroyable nodes");
    return {lo, hi};
}

bool TraceRecord::same_decisions(const TraceRecord& o) const {
    return iteration == o.iteration && k == o.k && center == o.center && m == o.m &&
           objective_after == o.objective_after && accepted == o.accepted && best_so_far == o.best_so_far;
}

void write_trace_csv(std::ostream& out, const SearchTrace& trace) {
    out << "iteration,k,center,m,objective_after,accepted,best_so_far,millis\n";
    out << std::setprecision(17);
    out << 0 << ",0,-1,0," << trace.initial_objective << ",1," << trace.initial_objective << ",0\n";
    for (const auto& r : trace.records) {
        out << r.iteration << ',' << r.k << ',' << r.center << ',' << r.m << ',' << r.objective_after << ','
            << (r.accepted ? 1 : 0) << ',' << r.best_so_far << ',' << r.millis << '\n';
    }
}

// --- repair policies ---------------------------------------------------------------------

ReducedSolution ModelRepair::repair(const Instance&, const HyperGraph&, const HyperGraph& scaled, Rng& rng) {
    return rollout(scaled, params_, mode_, rng);
}

ReducedSolution ExactRepair::repair(const Instance& inst, const HyperGraph& hg, const HyperGraph&, Rng&) {
    if (hg.kind != ProblemKind::Tsp) throw KindError("exact repair supports TSP hyper-graphs only");
    const int m = hg.size();
    if (m > max_m_) throw SizeError("exact repair limited to m <= " + std::to_string(max_m_));
    double total = 0.0;
    std::vector<std::vector<double>> dm(m, std::vector<double>(m, 0.0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            dm[i][j] = distance(inst, hg.origin[i], hg.origin[j]);
            total += dm[i][j];
        }
    }
    // A partner hop cheaper than any full tour makes every hyper-edge part of the optimum.
    const double bonus = 2.0 * total + 1.0;
    for (int i = 0; i < m; ++i) {
        if (hg.partner[i] >= 0) dm[i][hg.partner[i]] = -bonus;
    }
    ReducedSolution sol;
    sol.order = held_karp(dm).order;
    return sol;
}

// --- solver loops ----------------------------------------------------------------------------

TspSearchResult solve_tsp(const Instance& inst, RepairPolicy& policy, const SearchConfig& cfg,
                          std::optional<Tour> initial) {
    if (inst.kind != ProblemKind::Tsp) throw KindError("solve_tsp needs a TSP instance");
    if (cfg.iterations < 0) throw ConfigError("iteration count must be non-negative");
    Rng rng = make_rng(cfg.seed, {0x5ea});
    Tour current = initial ? std::move(*initial) : random_insertion(inst, rng());
    validate_tour(inst, current);
    double cur_obj = tour_length(inst, current);

    TspSearchResult res;
    res.best = current;
    res.best_objective = cur_obj;
    res.trace.initial_objective = cur_obj;
    if (cfg.iterations == 0 || inst.size() < 4) return res;

    const auto [k_lo, k_hi] = resolve_k_range(cfg, inst);
    const auto nodes = participants(inst);
    for (int it = 1; it <= cfg.iterations; ++it) {
        const auto t0 = Clock::now();
        TraceRecord rec;
        rec.iteration = it;
        rec.k = uniform_int(rng, k_lo, k_hi);
        rec.center = nodes[uniform_int(rng, 0, static_cast<int>(nodes.size()) - 1)];
        const Destruction destruction = cluster_destroy(inst, current, rec.center, rec.k);
        const HyperGraph hg = reduce(inst, destruction);
        rec.m = hg.size();
        Tour candidate;
        try {
            const HyperGraph scaled = transform_coords(hg);
            candidate = restore_tour(hg, policy.repair(inst, hg, scaled, rng));
        } catch (const DegenerateInputError&) {
            candidate = current;  // every row on one point: nothing to reorder
        }
        if (cfg.validate) validate_tour(inst, candidate);
        rec.objective_after = tour_length(inst, candidate);
        rec.accepted = accept(cfg.acceptance, rec.objective_after, cur_obj);
        notify(cfg, rec, destruction, current, candidate);
        if (rec.accepted) {
            current = std::move(candidate);
            cur_obj = rec.objective_after;
            if (cur_obj < res.best_objective) {
                res.best = current;
                res.best_objective = cur_obj;
            }
        }
        rec.best_so_far = res.best_objective;
        rec.millis = millis_since(t0);
        res.trace.records.push_back(rec);
    }
    return res;
}

TspSearchResult solve_tsp(const Instance& inst, const ModelParams& params, const SearchConfig& cfg,
                          std::optional<Tour> initial) {
    if (params.hp.input_dim != 5) throw ConfigError("TSP search needs a model with input_dim 5");
    ModelRepair policy(params, cfg.mode);
    return solve_tsp(inst, policy, cfg, std::move(initial));
}

CvrpSearchResult solve_cvrp(const Instance& inst, RepairPolicy& policy, const SearchConfig& cfg,
                            std::optional<RoutePlan> initial) {
    if (inst.kind != ProblemKind::Cvrp) throw KindError("solve_cvrp needs a CVRP instance");
    if (cfg.iterations < 0) throw ConfigError("iteration count must be non-negative");
    inst.validate();
    Rng rng = make_rng(cfg.seed, {0x5ea});
    RoutePlan current = initial ? std::move(*initial) : sweep(inst);
    validate_routes(inst, current);
    double cur_obj = route_cost(inst, current);

    CvrpSearchResult res;
    res.best = current;
    res.best_objective = cur_obj;
    res.trace.initial_objective = cur_obj;
    if (cfg.iterations == 0 || inst.customer_count() < 2) return res;

    const auto [k_lo, k_hi] = resolve_k_range(cfg, inst);
    const auto nodes = participants(inst);
    for (int it = 1; it <= cfg.iterations; ++it) {
        const auto t0 = Clock::now();
        TraceRecord rec;
        rec.iteration = it;
        rec.k = uniform_int(rng, k_lo, k_hi);
        rec.center = nodes[uniform_int(rng, 0, static_cast<int>(nodes.size()) - 1)];
        const Destruction destruction = cluster_destroy(inst, current, rec.center, rec.k);
        const HyperGraph hg = reduce(inst, destruction);
        rec.m = hg.size();
        RoutePlan candidate;
        if (hg.size() < 2) {
            candidate = current;
        } else {
            try {
                const HyperGraph scaled = transform_coords(hg);
                candidate = restore_routes(hg, policy.repair(inst, hg, scaled, rng));
            } catch (const DegenerateInputError&) {
                candidate = current;
            }
        }
        if (cfg.validate) validate_routes(inst, candidate);
        rec.objective_after = route_cost(inst, candidate);
        rec.accepted = accept(cfg.acceptance, rec.objective_after, cur_obj);
        notify(cfg, rec, destruction, current, candidate);
        if (rec.accepted) {
            current = std::move(candidate);
            cur_obj = rec.objective_after;
            if (cur_obj < res.best_objective) {
                res.best = current;
                res.best_objective = cur_obj;
            }
        }
        rec.best_so_far = res.best_objective;
        rec.millis = millis_since(t0);
        res.trace.records.push_back(rec);
    }
    return res;
}

CvrpSearchResult solve_cvrp(const Instance& inst, const ModelParams& params, const SearchConfig& cfg,
                            std::optional<RoutePlan> initial) {
    if (params.hp.input_dim != 6) throw ConfigError("CVRP search needs a model with input_dim 6");
    ModelRepair policy(params, cfg.mode);
    return solve_cvrp(inst, policy, cfg, std::move(initial));
}

// --- evaluation ------------------------------------------------------------------------------

EvalTable evaluate(const std::vector<Instance>& instances, const Solver& solver,
                   const std::map<std::string, double>& references, int workers) {
    EvalTable table;
    table.rows.resize(instances.size());
    const auto t_all = Clock::now();
    parallel_for(instances.size(), workers, [&](std::size_t i) {
        const auto t0 = Clock::now();
        EvalRecord rec;
        rec.name = instances[i].name;
        rec.objective = solver(instances[i], i);
        rec.wall_time = millis_since(t0) / 1000.0;
        if (auto it = references.find(rec.name); it != references.end()) {
            rec.reference = it->second;
            rec.gap = gap(rec.objective, it->second);
        }
        table.rows[i] = std::move(rec);
    });
    table.total_time = millis_since(t_all) / 1000.0;

    double obj = 0.0, gaps = 0.0;
    int with_ref = 0;
    for (const auto& r : table.rows) {
        obj += r.objective;
        if (r.gap) {
            gaps += *r.gap;
            ++with_ref;
        } else {
            ++table.missing_references;
        }
    }
    if (!table.rows.empty()) table.mean_objective = obj / static_cast<double>(table.rows.size());
    if (with_ref > 0) table.mean_gap = gaps / with_ref;
    return table;
}

void write_eval_csv(std::ostream& out, const EvalTable& table) {
    out << "name,objective,reference,gap_percent,seconds\n" << std::setprecision(10);
    for (const auto& r : table.rows) {
        out << r.name << ',' << r.objective << ',';
        if (r.reference) out << *r.reference;
        else out << "no-reference";
        out << ',';
        if (r.gap) out << *r.gap * 100.0;
        else out << "no-reference";
        out << ',' << r.wall_time << '\n';
    }
    out << "MEAN," << table.mean_objective << ",,";
    if (table.mean_gap) out << *table.mean_gap * 100.0;
    out << ',' << table.total_time << '\n';
}

std::string format_eval_table(const EvalTable& table) {
    std::size_t w = 8;
    for (const auto& r : table.rows) w = std::max(w, r.name.size());
    std::ostringstream os;
    os << std::fixed;
    os << std::left << std::setw(static_cast<int>(w)) << "name" << std::right << std::setw(14) << "objective"
       << std::setw(14) << "reference" << std::setw(10) << "gap%" << std::setw(11) << "time(s)" << '\n';
    for (const auto& r : table.rows) {
        os << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << std::setw(14)
           << std::setprecision(4) << r.objective;
        if (r.reference) os << std::setw(14) << *r.reference;
        else os << std::setw(14) << "no-reference";
        if (r.gap) os << std::setw(10) << std::setprecision(3) << *r.gap * 100.0;
        else os << std::setw(10) << "-";
        os << std::setw(11) << std::setprecision(3) << r.wall_time << '\n';
    }
    os << std::left << std::setw(static_cast<int>(w)) << "mean" << std::right << std::setw(14) << std::setprecision(4)
       << table.mean_objective << std::setw(14) << "";
    if (table.mean_gap) os << std::setw(10) << std::setprecision(3) << *table.mean_gap * 100.0;
    else os << std::setw(10) << "-";
    os << std::setw(11) << std::setprecision(3) << table.total_time << '\n';
    if (table.missing_references > 0) os << table.missing_references << " row(s) without reference\n";
    return os.str();
}

}  // namespace drhg

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drhg/hypergraph.hpp"
#include "drhg/model.hpp"

namespace drhg {

enum class Acceptance { GreedyImprove, Always };

/// What one iteration looked like, for plotting. Solutions are node
/// polylines: a closed TSP tour, or depot-to-depot CVRP routes.
struct IterationSnapshot {
    int iteration = 0;
    bool accepted = false;
    std::vector<int> destroyed;
    std::vector<std::vector<int>> segments;  // surviving fixed chains
    std::vector<std::vector<int>> before;
    std::vector<std::vector<int>> candidate;
};
using IterationObserver = std::function<void(const IterationSnapshot&)>;

struct SearchConfig {
    int iterations = 1000;
    int k_min = 20;
    int k_max = 0;  // 0: min(1000, n) for TSP, min(200, n) for CVRP
    RolloutMode mode = RolloutMode::Greedy;
    Acceptance acceptance = Acceptance::GreedyImprove;
    std::uint64_t seed = 0;
    bool validate = false;  // run the solution validators every iteration
    IterationObserver observer;  // called after every iteration when set
};

/// Destroy-count range actually used for an instance: the configured range
/// clamped to the number of destroyable nodes.
std::pair<int, int> resolve_k_range(const SearchConfig& cfg, const Instance& inst);

struct TraceRecord {
    int iteration = 0;
    int k = 0;
    int center = -1;
    int m = 0;  // hyper-graph size
    double objective_after = 0.0;
    bool accepted = false;
    double best_so_far = 0.0;
    double millis = 0.0;

    /// Equality ignoring the timing column.
    bool same_decisions(const TraceRecord& o) const;
};

struct SearchTrace {
    double initial_objective = 0.0;
    std::vector<TraceRecord> records;
};

void write_trace_csv(std::ostream& out, const SearchTrace& trace);

/// Repairs a reduced problem. `hg` carries original coordinates, `scaled`
/// the normalised copy fed to learned policies.
class RepairPolicy {
public:
    virtual ~RepairPolicy() = default;
    virtual ReducedSolution repair(const Instance& inst, const HyperGraph& hg, const HyperGraph& scaled, Rng& rng) = 0;
};

class ModelRepair : public RepairPolicy {
public:
    explicit ModelRepair(const ModelParams& params, RolloutMode mode = RolloutMode::Greedy)
        : params_(params), mode_(mode) {}
    ReducedSolution repair(const Instance& inst, const HyperGraph& hg, const HyperGraph& scaled, Rng& rng) override;

private:
    const ModelParams& params_;
    RolloutMode mode_;
};

/// Optimal reconnection of a TSP hyper-graph by Held-Karp, every hyper-edge
/// forced into the tour.
class ExactRepair : public RepairPolicy {
public:
    explicit ExactRepair(int max_m = 12) : max_m_(max_m) {}
    ReducedSolution repair(const Instance& inst, const HyperGraph& hg, const HyperGraph& scaled, Rng& rng) override;

private:
    int max_m_;
};

struct TspSearchResult {
    Tour best;
    double best_objective = 0.0;
    SearchTrace trace;
};

struct CvrpSearchResult {
    RoutePlan best;
    double best_objective = 0.0;
    SearchTrace trace;
};

/// Destroy and repair from `initial` (random insertion when absent).
TspSearchResult solve_tsp(const Instance& inst, RepairPolicy& policy, const SearchConfig& cfg,
                          std::optional<Tour> initial = {});
TspSearchResult solve_tsp(const Instance& inst, const ModelParams& params, const SearchConfig& cfg,
                          std::optional<Tour> initial = {});
/// Destroy and repair from `initial` (sweep when absent); depot edges are
/// always dropped and routes are rebuilt by capacity masking.
CvrpSearchResult solve_cvrp(const Instance& inst, RepairPolicy& policy, const SearchConfig& cfg,
                            std::optional<RoutePlan> initial = {});
CvrpSearchResult solve_cvrp(const Instance& inst, const ModelParams& params, const SearchConfig& cfg,
                            std::optional<RoutePlan> initial = {});

// --- evaluation -------------------------------------------------------------------------

/// Objective of instance `index`.
using Solver = std::function<double(const Instance& inst, std::size_t index)>;

struct EvalTable {
    std::vector<EvalRecord> rows;  // input order
    double mean_objective = 0.0;
    std::optional<double> mean_gap;  // over rows with a reference
    int missing_references = 0;
    double total_time = 0.0;
};

/// Runs the solver on every instance and compares against `references`
/// (keyed by instance name).
EvalTable evaluate(const std::vector<Instance>& instances, const Solver& solver,
                   const std::map<std::string, double>& references, int workers = 1);

void write_eval_csv(std::ostream& out, const EvalTable& table);
std::string format_eval_table(const EvalTable& table);

}  // namespace drhg

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "drhg/instances.hpp"

namespace drhg {

/// A solution seen as a graph of degree <= 2: `prev`/`next` neighbour of
/// every node, -1 where there is none. A TSP tour is one cycle; a CVRP plan
/// is a set of customer paths (all depot edges dropped).
struct SolutionGraph {
    std::vector<int> prev;
    std::vector<int> next;
    std::vector<char> participant;  // nodes that can be destroyed (CVRP: customers)

    int size() const { return static_cast<int>(prev.size()); }
};

SolutionGraph solution_graph(const Instance& inst, const Tour& tour);
SolutionGraph solution_graph(const Instance& inst, const RoutePlan& plan);

struct Destruction {
    std::vector<int> destroyed;                      // ascending
    std::vector<std::pair<int, int>> destroyed_edges;
    std::vector<std::vector<int>> segments;          // surviving chains, >= 2 nodes, solution order
    std::vector<int> isolated;                       // ascending; nodes with no surviving edge
};

/// Participants sorted by distance to `center`, ties by node index.
std::vector<int> nearest_order(const Instance& inst, const SolutionGraph& g, int center);

/// Removes every edge incident to a destroyed node and extracts the
/// surviving segments.
Destruction destroy_nodes(const SolutionGraph& g, const std::vector<char>& destroyed);

/// Destroys the `count` nearest nodes to `center` (center included).
Destruction cluster_destroy(const Instance& inst, const Tour& tour, int center, int count);
/// CVRP flavour: customers only, plus every depot-incident edge.
Destruction cluster_destroy(const Instance& inst, const RoutePlan& plan, int center, int count);

/// New hyper-graph nodes created by destroying `node` when the nodes flagged
/// in `destroyed` are already gone.
int emergence_count(const SolutionGraph& g, int node, const std::vector<char>& destroyed);

struct AlignmentResult {
    std::vector<char> mask;       // per node: destroy
    std::vector<int> order;       // destruction order (nearest first)
    std::vector<int> emergence;   // per position in `order`
    std::vector<int> cumulative;  // hyper-graph size after destroying order[0..i]
    int destroy_count = 0;        // length of the marked prefix
    int achieved_size = 0;
    bool feasible = false;
};

/// Predicts, without destroying anything, the hyper-graph size of every
/// nearest-first destruction prefix and marks the longest prefix whose size
/// does not exceed `target_size`.
AlignmentResult align_sample_size(const Instance& inst, const SolutionGraph& g, int center, int target_size);

struct FeatureRow {
    double xa = 0, ya = 0;  // own coordinates
    double xb = 0, yb = 0;  // partner endpoint (== own for isolated rows)
    double flag = 0;        // 1 endpoint, 0 isolated
    double dr = 0;          // aggregated demand (CVRP)

    bool operator==(const FeatureRow&) const = default;
};

struct HyperEdge {
    int row_a = -1;          // row of nodes.front()
    int row_b = -1;          // row of nodes.back()
    std::vector<int> nodes;  // full chain, endpoints included
};

struct CoordTransform {
    double offset_x = 0, offset_y = 0;
    double scale = 1;
};

struct HyperGraph {
    ProblemKind kind = ProblemKind::Tsp;
    std::vector<int> isolated;         // A, original node ids
    std::vector<int> endpoints;        // B, original node ids
    std::vector<HyperEdge> edges;      // E_r
    std::vector<FeatureRow> rows;      // one per hyper-graph node
    std::vector<int> origin;           // row -> original node
    std::vector<int> partner;          // row -> partner row, -1 for isolated rows
    std::vector<int> edge_of;          // row -> hyper-edge index, -1 for isolated rows
    std::vector<int> demand;           // row -> aggregated demand (CVRP)
    int capacity = 0;
    CoordTransform transform;

    int size() const { return static_cast<int>(rows.size()); }
    int input_dim() const { return kind == ProblemKind::Tsp ? 5 : 6; }
    int row_of(int node) const;
    /// Row-major m x input_dim model input; CVRP demand scaled by capacity.
    std::vector<double> feature_matrix() const;
    void check_invariants() const;
};

HyperGraph reduce(const Instance& inst, const Destruction& destruction);

/// Translates the bounding box corner to the origin and scales its longest
/// side to 1, applied to both coordinate pairs of every row.
HyperGraph transform_coords(const HyperGraph& hg);

/// Relabels rows: row i of the result is row perm[i] of `hg`.
HyperGraph permute_rows(const HyperGraph& hg, const std::vector<int>& perm);

struct TargetSequence {
    std::vector<int> order;          // hyper-graph rows in visit order
    std::vector<char> forced;        // forced[t]: order[t] is the partner of order[t-1]
    std::vector<char> route_start;   // CVRP: order[t] opens a new route
};

/// Supervision target from the label tour walked in its stored orientation.
/// Without `start_row` the walk starts at the entry endpoint of the first
/// hyper-edge (or the row of tour.order[0] when there are none).
TargetSequence target_sequence(const Tour& tour, const HyperGraph& hg, std::optional<int> start_row = {});
/// CVRP: the walk visits routes cyclically starting from route `first_route`.
TargetSequence target_sequence(const RoutePlan& plan, const HyperGraph& hg, int first_route = 0);

/// Rows at which a walk may start: entry endpoints (w.r.t. the tour's
/// orientation) or, with no hyper-edges, every row.
std::vector<int> valid_start_rows(const Tour& tour, const HyperGraph& hg);

struct ReducedSolution {
    std::vector<int> order;
    std::vector<char> route_start;  // CVRP, optional: empty means capacity rule
};

/// Expands hyper-edges along the traversal direction. The order may wrap
/// (first and last rows partners) for TSP.
Tour restore_tour(const HyperGraph& hg, const ReducedSolution& sol);
RoutePlan restore_routes(const HyperGraph& hg, const ReducedSolution& sol);

/// Checks the restore precondition: a row permutation with each hyper-edge's
/// endpoints adjacent.
bool is_valid_reduced_order(const HyperGraph& hg, const std::vector<int>& order);

/// Length of the connections chosen by the repair (partner hops excluded).
double reduced_connection_length(const Instance& inst, const HyperGraph& hg, const std::vector<int>& order);
/// Total length of all fixed hyper-edge chains.
double fixed_segment_length(const Instance& inst, const HyperGraph& hg);

}  // namespace drhg

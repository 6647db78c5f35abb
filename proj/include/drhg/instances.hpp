#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace drhg {

enum class ProblemKind { Tsp, Cvrp };

enum class DistanceKind {
    ExactEuclidean,
    Euc2dRounded,  // TSPLIB EUC_2D: nearest integer
    Ceil2d,        // TSPLIB CEIL_2D
};

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

/// A TSP or CVRP problem. For CVRP node 0 is the depot and nodes 1..n are
/// customers.
struct Instance {
    ProblemKind kind = ProblemKind::Tsp;
    std::vector<Point> coords;
    std::vector<int> demands;  // CVRP only, demands[0] == 0
    int capacity = 0;          // CVRP only
    DistanceKind distance_kind = DistanceKind::ExactEuclidean;
    std::string name;

    int size() const { return static_cast<int>(coords.size()); }
    int customer_count() const { return kind == ProblemKind::Cvrp ? size() - 1 : size(); }

    /// Throws ValidationError when an invariant is broken.
    void validate() const;

    bool operator==(const Instance&) const = default;
};

Instance make_tsp(std::vector<Point> coords, std::string name = {},
                  DistanceKind dk = DistanceKind::ExactEuclidean);
Instance make_cvrp(std::vector<Point> coords, std::vector<int> demands, int capacity,
                   std::string name = {}, DistanceKind dk = DistanceKind::ExactEuclidean);

/// Cyclic node permutation.
struct Tour {
    std::vector<int> order;

    bool operator==(const Tour&) const = default;
};

/// Depot-delimited routes; each inner sequence lists customers only.
struct RoutePlan {
    std::vector<std::vector<int>> routes;

    bool operator==(const RoutePlan&) const = default;
};

struct EvalRecord {
    std::string name;
    double objective = 0.0;
    std::optional<double> reference;
    std::optional<double> gap;
    double wall_time = 0.0;  // seconds
};

double euclidean(Point a, Point b);

/// Distance between nodes i and j under the instance's metric.
double distance(const Instance& inst, int i, int j);

void validate_tour(const Instance& inst, const Tour& t);
double tour_length(const Instance& inst, const Tour& t);

/// Coverage and capacity check for a CVRP plan.
void validate_routes(const Instance& inst, const RoutePlan& plan);
double route_cost(const Instance& inst, const RoutePlan& plan);

/// (objective - reference) / reference.
double gap(double objective, double reference);

std::vector<std::vector<double>> distance_matrix(const Instance& inst);

// --- synthetic instances ----------------------------------------------------

struct DemandConfig {
    int min_demand = 1;
    int max_demand = 9;
    int capacity = 0;  // 0: pick the conventional capacity for the size
};

/// Conventional capacity for n customers (50 / 80 / 100 / 250 anchors,
/// linearly interpolated between and clamped outside).
int default_capacity(int customers);

/// Uniform [0,1]^2 instance. For CVRP, n counts customers.
Instance gen_uniform(ProblemKind kind, int n, std::uint64_t seed,
                     const DemandConfig& demand_cfg = {});

/// `count` instances, instance i drawn from stream (seed, i).
std::vector<Instance> gen_uniform_batch(ProblemKind kind, int n, int count, std::uint64_t seed,
                                        const DemandConfig& demand_cfg = {});

// --- text formats ---------------------------------------------------------

Instance parse_tsplib(std::string_view text);
Instance parse_cvrplib(std::string_view text);
/// Dispatches on the TYPE field.
Instance parse_vrp_file(std::string_view text);
Instance load_instance_file(const std::string& path);

/// TSPLIB95 / CVRPLIB serialization of an instance.
std::string write_tsplib(const Instance& inst);

// --- JSON-lines dataset -----------------------------------------------------

nlohmann::json instance_to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

std::vector<Instance> read_dataset(std::istream& in);
std::vector<Instance> read_dataset_file(const std::string& path);
void write_dataset(std::ostream& out, const std::vector<Instance>& instances);
void write_dataset_file(const std::string& path, const std::vector<Instance>& instances);

/// Best-known-solution lookup: two whitespace-separated columns, name and
/// objective. Blank lines and lines starting with '#' are skipped.
std::map<std::string, double> read_bks(std::istream& in);
std::map<std::string, double> read_bks_file(const std::string& path);

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(std::string_view s);

}  // namespace drhg

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "drhg/instances.hpp"

namespace drhg {

enum class LabelMode { ExactDp, LocalSearch };

struct LabelerConfig {
    LabelMode mode = LabelMode::ExactDp;
    int max_exact_n = 16;
    int ls_rounds = 1000;
    std::uint64_t seed = 0;
};

/// Random 3-node cycle, then every other node (random order) inserted at its
/// cheapest cyclic position.
Tour random_insertion(const Instance& inst, std::uint64_t seed);

/// Customers by polar angle around the depot, packed greedily into routes.
RoutePlan sweep(const Instance& inst);

struct ExactTour {
    std::vector<int> order;  // starts at node 0
    double length = 0.0;
};

/// Held-Karp over an explicit symmetric distance matrix.
ExactTour held_karp(const std::vector<std::vector<double>>& dm);

/// Optimal tour of a TSP instance; SizeError above max_exact_n nodes.
Tour held_karp(const Instance& inst, int max_exact_n = 16);

/// 2-opt (first improvement, seeded scan order) and Or-opt (segments of 1..3)
/// until a full pass finds nothing or ls_rounds passes ran.
Tour local_search_label(const Instance& inst, const Tour& start, const LabelerConfig& cfg);

/// Near-optimal or optimal label according to cfg.mode.
Tour make_label(const Instance& inst, const LabelerConfig& cfg);

// --- label files: {instance_name, order} or {instance_name, routes} ---------

struct Label {
    std::string instance_name;
    Tour tour;        // TSP
    RoutePlan plan;   // CVRP
    bool is_routes = false;
};

std::vector<Label> read_labels(std::istream& in);
std::vector<Label> read_labels_file(const std::string& path);
void write_labels(std::ostream& out, const std::vector<Label>& labels);
void write_labels_file(const std::string& path, const std::vector<Label>& labels);

}  // namespace drhg

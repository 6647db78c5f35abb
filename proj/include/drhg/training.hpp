#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drhg/baselines.hpp"
#include "drhg/hypergraph.hpp"
#include "drhg/model.hpp"

namespace drhg {

/// An instance together with its supervision label.
struct LabeledInstance {
    Instance inst;
    Tour tour;       // TSP
    RoutePlan plan;  // CVRP

    double label_objective() const;
};

/// Matches labels to instances by name; every instance needs exactly one label.
std::vector<LabeledInstance> pair_labels(const std::vector<Instance>& instances, const std::vector<Label>& labels);

struct TrainingSample {
    HyperGraph hg;  // transformed coordinates
    TargetSequence target;
    int instance_id = -1;
    int center = -1;
    int k = 0;
    bool reversed = false;
};

struct TrainConfig {
    HyperParams hp;
    int epochs = 100;
    int batch_size = 1024;
    int k_min = 20;
    int k_max = 0;  // 0: floor(0.8 n)
    double lr0 = 1e-4;
    double decay = 0.97;
    std::uint64_t seed = 0;
    bool augment_orientation = true;
    int validation_count = 64;
    int validation_iters = 50;
    int validation_k_min = 0;  // 0: same destroy range as the search defaults
    int validation_k_max = 0;
    bool audit_forced = true;  // tape-level forced-gradient check once per epoch
    int workers = 1;
    int max_batches = 0;  // per epoch, 0: all
    std::string checkpoint_dir;  // empty: no checkpoint files
    std::string metrics_path;    // empty: no metrics CSV
};

/// Hyper-graph size range used for an instance of `n` destroyable nodes.
std::pair<int, int> resolve_k_range(const TrainConfig& cfg, int n);

struct Batch {
    int k = 0;
    int attempted = 0;  // instances tried
    int kept = 0;       // feasible destructions
    std::vector<TrainingSample> samples;  // kept x orientations
};

/// One size-aligned batch over data[indices]: a shared target size k, a random
/// center per instance, prefix alignment to k, and only exact hits kept.
Batch build_batch(const std::vector<LabeledInstance>& data, std::span<const int> indices, const TrainConfig& cfg,
                  std::uint64_t batch_seed);

struct LossStats {
    int scored_steps = 0;    // non-forced steps in the denominator
    int network_steps = 0;   // steps that evaluated the network
    int clamped = 0;         // zero-probability targets clamped to 1e-12
    std::vector<nc::Var> forced_logits;  // audit mode only
};

/// Teacher-forced mean negative log-likelihood of the target over the
/// non-forced steps of one sample. With `audit` the forced steps also run
/// through the network behind the partner-only mask so their logits exist on
/// the tape.
nc::Var xent_loss_masked(nc::Tape& tape, const BoundParams& p, const HyperParams& hp, const TrainingSample& sample,
                         LossStats* stats = nullptr, bool audit = false);

/// Same loss from explicit per-step distributions: probs[t] is the
/// distribution for order[t] (t >= 1).
double xent_loss_masked(const std::vector<std::vector<double>>& probs, const std::vector<int>& order,
                        const std::vector<char>& forced, int* clamped = nullptr);

/// Mean loss and summed gradients (same order as ModelParams::named()) over
/// samples. Accumulation runs in fixed chunks so the result does not depend
/// on the worker count.
struct BatchGradient {
    double loss = 0.0;
    std::vector<nc::Matrix> grads;
    int clamped = 0;
};
BatchGradient batch_gradient(const ModelParams& params, const std::vector<TrainingSample>& samples, int workers = 1);

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    double kept_fraction = 0.0;
    double val_gap = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ModelParams last;
    ModelParams best;
    double best_val_gap = 0.0;
    std::vector<EpochMetrics> metrics;
};

/// Mean greedy search gap vs. the labels.
double validation_gap(const ModelParams& params, const std::vector<LabeledInstance>& val, const TrainConfig& cfg);

TrainResult train(const std::vector<LabeledInstance>& train_set, const std::vector<LabeledInstance>& val_set,
                  const TrainConfig& cfg);
/// train() started from `base`; lr restarts at lr0.
TrainResult fine_tune(const std::vector<LabeledInstance>& train_set, const std::vector<LabeledInstance>& val_set,
                      const TrainConfig& cfg, const ModelParams& base);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

/// JSON-lines dump of samples (used for the non-finite-loss reproducer).
void dump_samples(std::ostream& out, const std::vector<TrainingSample>& samples);

}  // namespace drhg

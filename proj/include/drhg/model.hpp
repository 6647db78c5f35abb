#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "drhg/hypergraph.hpp"
#include "drhg/numcore.hpp"
#include "drhg/random.hpp"

namespace drhg {

struct HyperParams {
    int d_h = 128;
    int layers = 6;
    int heads = 8;
    int r_f = 8;
    int r_c = 8;
    int d_ff = 512;
    int input_dim = 5;  // 5 TSP, 6 CVRP
    double logit_clip = 10.0;

    int representatives() const { return r_f + r_c; }
    void validate() const;
    bool operator==(const HyperParams&) const = default;
};

std::string describe(const HyperParams& hp);

struct AttentionWeights {
    nc::Matrix w_q, w_k, w_v, w_out;
};

struct FeedForwardWeights {
    nc::Matrix w1, b1, w2, b2;
};

/// One attention layer with its residual/norm and feed-forward sublayers.
struct AttentionBlock {
    AttentionWeights att;
    nc::Matrix norm1;
    FeedForwardWeights ff;
    nc::Matrix norm2;
};

struct LinearAttentionWeights {
    AttentionBlock aggregate;
    AttentionBlock broadcast;
};

struct ModelParams {
    HyperParams hp;
    nc::Matrix w_embed, b_embed;
    std::vector<LinearAttentionWeights> modules;
    nc::Matrix w_f, w_c, w_o;

    /// Every learnable matrix with a stable name, in checkpoint order.
    std::vector<std::pair<std::string, nc::Matrix*>> named();
    std::vector<std::pair<std::string, const nc::Matrix*>> named() const;
    std::size_t parameter_count() const;
};

/// Zero-initialised parameters with shapes derived from hp.
ModelParams make_params(const HyperParams& hp);
/// Uniform(+-1/sqrt(fan_in)) weights, unit norm gains.
ModelParams init_params(const HyperParams& hp, std::uint64_t seed);

/// Parameters bound to a tape as differentiable leaves (or constants when the
/// tape does not record gradients).
struct BoundParams {
    nc::Var w_embed, b_embed;
    struct Block {
        nc::Var w_q, w_k, w_v, w_out, norm1, w1, b1, w2, b2, norm2;
    };
    std::vector<std::pair<Block, Block>> modules;  // (aggregate, broadcast)
    nc::Var w_f, w_c, w_o;
    std::vector<nc::Var> all;  // same order as ModelParams::named()
};

BoundParams bind(nc::Tape& tape, const ModelParams& params);

/// Single linear projection of every feature row: m x d_h.
nc::Var encode(const BoundParams& p, nc::Var features);

/// (r_f + r_c) x d_h representatives from the first and current node embeddings.
nc::Var make_representatives(const BoundParams& p, const HyperParams& hp, nc::Var h_first, nc::Var h_current);

struct ModuleOutput {
    nc::Var representatives;
    nc::Var nodes;
};

/// Aggregate into the representatives, then broadcast back to all nodes.
ModuleOutput linear_attention_module(const BoundParams& p, const HyperParams& hp, int layer, nc::Var representatives,
                                     nc::Var nodes);

/// Clipped scores C * tanh(h W_o / C) for the candidate rows: 1 x candidates.
nc::Var candidate_logits(const BoundParams& p, const HyperParams& hp, nc::Var h_first, nc::Var h_current,
                         nc::Var candidates);

struct DecodeState {
    int first_row = -1;
    int current_row = -1;
    std::vector<char> visited;
    std::optional<int> forced_next;
    int remaining_capacity = 0;  // CVRP
};

/// Legal next rows: unvisited, within capacity, or only the partner on a
/// forced step.
std::vector<char> decode_mask(const HyperGraph& hg, const DecodeState& state);

/// Next-row distribution over all m rows (zero on masked rows). Forced steps
/// return the partner with probability 1 without evaluating the network.
/// `embeddings` is the encoder output H0.
std::vector<double> decode_step(const HyperGraph& hg, const ModelParams& params, const nc::Matrix& embeddings,
                                const DecodeState& state);

/// H0 for a hyper-graph (no gradient recording).
nc::Matrix embed(const HyperGraph& hg, const ModelParams& params);

enum class RolloutMode { Greedy, Sample };

/// Decodes a full reduced order; every hyper-edge's endpoints end up adjacent.
/// Without `start_row` the walk starts at the entry endpoint of a uniformly
/// random hyper-edge (a random row when there are none).
ReducedSolution rollout(const HyperGraph& hg, const ModelParams& params, RolloutMode mode, Rng& rng,
                        std::optional<int> start_row = {});

/// Start row chosen by the inference rule.
int choose_start_row(const HyperGraph& hg, Rng& rng);

// --- checkpoints -----------------------------------------------------------------------

void save_checkpoint(std::ostream& out, const ModelParams& params);
void save_checkpoint_file(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
ModelParams load_checkpoint_file(const std::string& path);

}  // namespace drhg

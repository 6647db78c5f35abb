#include "drhg/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "drhg/errors.hpp"

namespace drhg {

using nc::Matrix;
using nc::Var;

void HyperParams::validate() const {
    if (d_h <= 0 || layers < 0 || heads <= 0 || d_ff <= 0) throw ConfigError("hyper-parameters must be positive");
    if (d_h % heads != 0) {
        throw ConfigError("d_h " + std::to_string(d_h) + " not divisible by " + std::to_string(heads) + " heads");
    }
    if (r_f < 0 || r_c < 0 || r_f + r_c < 1) throw ConfigError("need at least one representative channel");
    if (input_dim != 5 && input_dim != 6) throw ConfigError("input_dim must be 5 (TSP) or 6 (CVRP)");
    if (!(logit_clip > 0.0)) throw ConfigError("logit clip must be positive");
}

std::string describe(const HyperParams& hp) {
    return "d_h=" + std::to_string(hp.d_h) + " L=" + std::to_string(hp.layers) + " heads=" + std::to_string(hp.heads) +
           " r_f=" + std::to_string(hp.r_f) + " r_c=" + std::to_string(hp.r_c) + " d_ff=" + std::to_string(hp.d_ff) +
           " input_dim=" + std::to_string(hp.input_dim) + " C=" + std::to_string(hp.logit_clip);
}

namespace {

template <typename Params, typename Ptr>
std::vector<std::pair<std::string, Ptr>> named_impl(Params& p) {
    std::vector<std::pair<std::string, Ptr>> out;
    out.emplace_back("embed.w", &p.w_embed);
    out.emplace_back("embed.b", &p.b_embed);
    for (std::size_t l = 0; l < p.modules.size(); ++l) {
        for (auto [tag, block] : {std::pair{"agg", &p.modules[l].aggregate}, std::pair{"brd", &p.modules[l].broadcast}}) {
            const std::string pre = "layer" + std::to_string(l) + "." + tag + ".";
            out.emplace_back(pre + "w_q", &block->att.w_q);
            out.emplace_back(pre + "w_k", &block->att.w_k);
            out.emplace_back(pre + "w_v", &block->att.w_v);
            out.emplace_back(pre + "w_out", &block->att.w_out);
            out.emplace_back(pre + "norm1", &block->norm1);
            out.emplace_back(pre + "ff.w1", &block->ff.w1);
            out.emplace_back(pre + "ff.b1", &block->ff.b1);
            out.emplace_back(pre + "ff.w2", &block->ff.w2);
            out.emplace_back(pre + "ff.b2", &block->ff.b2);
            out.emplace_back(pre + "norm2", &block->norm2);
        }
    }
    out.emplace_back("rep.w_f", &p.w_f);
    out.emplace_back("rep.w_c", &p.w_c);
    out.emplace_back("head.w_o", &p.w_o);
    return out;
}

AttentionBlock make_block(int d, int dff) {
    AttentionBlock b;
    b.att.w_q = b.att.w_k = b.att.w_v = b.att.w_out = Matrix::Zero(d, d);
    b.norm1 = b.norm2 = Matrix::Ones(1, d);
    b.ff.w1 = Matrix::Zero(d, dff);
    b.ff.b1 = Matrix::Zero(1, dff);
    b.ff.w2 = Matrix::Zero(dff, d);
    b.ff.b2 = Matrix::Zero(1, d);
    return b;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> ModelParams::named() { return named_impl<ModelParams, Matrix*>(*this); }

std::vector<std::pair<std::string, const Matrix*>> ModelParams::named() const {
    return named_impl<const ModelParams, const Matrix*>(*this);
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : named()) n += static_cast<std::size_t>(m->size());
    return n;
}

ModelParams make_params(const HyperParams& hp) {
    hp.validate();
    ModelParams p;
    p.hp = hp;
    p.w_embed = Matrix::Zero(hp.input_dim, hp.d_h);
    p.b_embed = Matrix::Zero(1, hp.d_h);
    for (int l = 0; l < hp.layers; ++l) p.modules.push_back({make_block(hp.d_h, hp.d_ff), make_block(hp.d_h, hp.d_ff)});
    p.w_f = Matrix::Zero(hp.d_h, hp.d_h * hp.r_f);
    p.w_c = Matrix::Zero(hp.d_h, hp.d_h * hp.r_c);
    p.w_o = Matrix::Zero(hp.d_h, 1);
    return p;
}

ModelParams init_params(const HyperParams& hp, std::uint64_t seed) {
    ModelParams p = make_params(hp);
    Rng rng = make_rng(seed, {0x1417});
    for (auto& [name, m] : p.named()) {
        if (name.ends_with("norm1") || name.ends_with("norm2")) continue;  // gains stay at 1
        // Biases share the fan-in of their weight matrix.
        Eigen::Index fan_in = m->rows();
        if (name == "embed.b") fan_in = hp.input_dim;
        else if (name.ends_with("ff.b1")) fan_in = hp.d_h;
        else if (name.ends_with("ff.b2")) fan_in = hp.d_ff;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
    }
    return p;
}

BoundParams bind(nc::Tape& tape, const ModelParams& params) {
    BoundParams b;
    b.w_embed = tape.param(params.w_embed);
    b.b_embed = tape.param(params.b_embed);
    b.all = {b.w_embed, b.b_embed};
    for (const auto& mod : params.modules) {
        auto bind_block = [&](const AttentionBlock& blk) {
            BoundParams::Block out{tape.param(blk.att.w_q), tape.param(blk.att.w_k), tape.param(blk.att.w_v),
                                   tape.param(blk.att.w_out), tape.param(blk.norm1), tape.param(blk.ff.w1),
                                   tape.param(blk.ff.b1), tape.param(blk.ff.w2), tape.param(blk.ff.b2),
                                   tape.param(blk.norm2)};
            b.all.insert(b.all.end(), {out.w_q, out.w_k, out.w_v, out.w_out, out.norm1, out.w1, out.b1, out.w2, out.b2,
                                       out.norm2});
            return out;
        };
        auto agg = bind_block(mod.aggregate);
        auto brd = bind_block(mod.broadcast);
        b.modules.emplace_back(agg, brd);
    }
    b.w_f = tape.param(params.w_f);
    b.w_c = tape.param(params.w_c);
    b.w_o = tape.param(params.w_o);
    b.all.insert(b.all.end(), {b.w_f, b.w_c, b.w_o});
    return b;
}

Var encode(const BoundParams& p, Var features) {
    if (features.cols() != p.w_embed.rows()) {
        throw ShapeError("encode: feature rows have " + std::to_string(features.cols()) + " columns, model expects " +
                         std::to_string(p.w_embed.rows()));
    }
    return nc::add_row(nc::matmul(features, p.w_embed), p.b_embed);
}

Var make_representatives(const BoundParams& p, const HyperParams& hp, Var h_first, Var h_current) {
    const Var f = nc::reshape(nc::matmul(h_first, p.w_f), hp.r_f, hp.d_h);
    const Var c = nc::reshape(nc::matmul(h_current, p.w_c), hp.r_c, hp.d_h);
    if (hp.r_f == 0) return c;
    if (hp.r_c == 0) return f;
    return nc::concat_rows(f, c);
}

namespace {

/// Attention + residual/norm, then feed-forward + residual/norm.
Var attention_block(const BoundParams::Block& b, const HyperParams& hp, Var queries, Var context) {
    const Var att = nc::attention(queries, context, context, b.w_q, b.w_k, b.w_v, b.w_out, hp.heads);
    const Var x = nc::rms_norm(nc::add(queries, att), b.norm1);
    const Var hidden = nc::relu(nc::add_row(nc::matmul(x, b.w1), b.b1));
    const Var ff = nc::add_row(nc::matmul(hidden, b.w2), b.b2);
    return nc::rms_norm(nc::add(x, ff), b.norm2);
}

}  // namespace

ModuleOutput linear_attention_module(const BoundParams& p, const HyperParams& hp, int layer, Var representatives,
                                     Var nodes) {
    if (layer < 0 || layer >= static_cast<int>(p.modules.size())) throw IndexError("no attention module " + std::to_string(layer));
    if (representatives.cols() != hp.d_h || nodes.cols() != hp.d_h) {
        throw ShapeError("linear attention module: embedding width mismatch " + nc::shape_string(representatives.value()) +
                         " / " + nc::shape_string(nodes.value()));
    }
    const auto& [agg_w, brd_w] = p.modules[layer];
    const Eigen::Index r = representatives.rows();
    const Var all = nc::concat_rows(representatives, nodes);
    const Var agg = attention_block(agg_w, hp, representatives, all);
    const Var brd = attention_block(brd_w, hp, all, agg);
    return {nc::slice_rows(brd, 0, r), nc::slice_rows(brd, r, brd.rows() - r)};
}

Var candidate_logits(const BoundParams& p, const HyperParams& hp, Var h_first, Var h_current, Var candidates) {
    Var rep = make_representatives(p, hp, h_first, h_current);
    Var nodes = candidates;
    for (int l = 0; l < hp.layers; ++l) {
        auto out = linear_attention_module(p, hp, l, rep, nodes);
        rep = out.representatives;
        nodes = out.nodes;
    }
    const Var z = nc::reshape(nc::matmul(nodes, p.w_o), 1, nodes.rows());
    return nc::scale(nc::tanh(nc::scale(z, 1.0 / hp.logit_clip)), hp.logit_clip);
}

std::vector<char> decode_mask(const HyperGraph& hg, const DecodeState& state) {
    const int m = hg.size();
    std::vector<char> mask(m, 0);
    if (state.forced_next) {
        mask[*state.forced_next] = 1;
        return mask;
    }
    for (int r = 0; r < m; ++r) {
        if (state.visited[r]) continue;
        if (hg.kind == ProblemKind::Cvrp && hg.demand[r] > state.remaining_capacity) continue;
        mask[r] = 1;
    }
    return mask;
}

Matrix embed(const HyperGraph& hg, const ModelParams& params) {
    if (hg.input_dim() != params.hp.input_dim) {
        throw ConfigError("hyper-graph input_dim " + std::to_string(hg.input_dim()) + " vs model input_dim " +
                          std::to_string(params.hp.input_dim));
    }
    nc::Tape tape(false);
    const BoundParams p = bind(tape, params);
    const auto feat = hg.feature_matrix();
    const Var x = tape.constant(Eigen::Map<const Matrix>(feat.data(), hg.size(), hg.input_dim()));
    return encode(p, x).value();
}

std::vector<double> decode_step(const HyperGraph& hg, const ModelParams& params, const Matrix& embeddings,
                                const DecodeState& state) {
    const int m = hg.size();
    std::vector<double> probs(m, 0.0);
    const auto mask = decode_mask(hg, state);
    if (state.forced_next) {
        probs[*state.forced_next] = 1.0;
        return probs;
    }
    std::vector<int> candidates;
    for (int r = 0; r < m; ++r) {
        if (!state.visited[r]) candidates.push_back(r);
    }
    nc::Mask cmask(1, static_cast<Eigen::Index>(candidates.size()));
    int legal = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cmask(0, static_cast<Eigen::Index>(i)) = mask[candidates[i]] != 0;
        legal += mask[candidates[i]] != 0;
    }
    if (legal == 0) throw InfeasibleError("no legal next row");
    if (legal == 1) {
        for (int r : candidates) if (mask[r]) probs[r] = 1.0;
        return probs;
    }

    nc::Tape tape(false);
    const BoundParams p = bind(tape, params);
    Matrix cand(static_cast<Eigen::Index>(candidates.size()), embeddings.cols());
    for (std::size_t i = 0; i < candidates.size(); ++i) cand.row(static_cast<Eigen::Index>(i)) = embeddings.row(candidates[i]);
    const Var h_first = tape.constant(embeddings.row(state.first_row));
    const Var h_cur = tape.constant(embeddings.row(state.current_row));
    const Var logits = candidate_logits(p, params.hp, h_first, h_cur, tape.constant(std::move(cand)));
    const Var pr = nc::masked_softmax(logits, cmask);
    for (std::size_t i = 0; i < candidates.size(); ++i) probs[candidates[i]] = pr.value()(0, static_cast<Eigen::Index>(i));
    return probs;
}

int choose_start_row(const HyperGraph& hg, Rng& rng) {
    if (!hg.edges.empty()) {
        const int e = uniform_int(rng, 0, static_cast<int>(hg.edges.size()) - 1);
        return hg.edges[e].row_a;
    }
    return uniform_int(rng, 0, hg.size() - 1);
}

ReducedSolution rollout(const HyperGraph& hg, const ModelParams& params, RolloutMode mode, Rng& rng,
                        std::optional<int> start_row) {
    const int m = hg.size();
    if (m < 2) throw DomainError("rollout needs at least 2 rows");
    const bool cvrp = hg.kind == ProblemKind::Cvrp;
    const Matrix h0 = embed(hg, params);

    DecodeState st;
    st.visited.assign(m, 0);
    st.first_row = start_row ? *start_row : choose_start_row(hg, rng);
    if (st.first_row < 0 || st.first_row >= m) throw IndexError("start row out of range");
    st.current_row = st.first_row;
    st.visited[st.first_row] = 1;
    st.remaining_capacity = cvrp ? hg.capacity - hg.demand[st.first_row] : 0;
    if (hg.partner[st.first_row] >= 0) st.forced_next = hg.partner[st.first_row];

    ReducedSolution sol;
    sol.order.push_back(st.first_row);
    if (cvrp) sol.route_start.push_back(1);

    for (int step = 1; step < m; ++step) {
        bool new_route = false;
        if (cvrp && !st.forced_next) {
            bool fits = false;
            for (int r = 0; r < m && !fits; ++r) fits = !st.visited[r] && hg.demand[r] <= st.remaining_capacity;
            if (!fits) {
                st.remaining_capacity = hg.capacity;
                new_route = true;
            }
        }
        const auto probs = decode_step(hg, params, h0, st);
        int next = -1;
        if (mode == RolloutMode::Greedy) {
            double best = -1.0;
            for (int r = 0; r < m; ++r) {
                if (probs[r] > best) {
                    best = probs[r];
                    next = r;
                }
            }
        } else {
            const double u = uniform01(rng);
            double acc = 0.0;
            for (int r = 0; r < m; ++r) {
                if (probs[r] <= 0.0) continue;
                next = r;
                acc += probs[r];
                if (u < acc) break;
            }
        }
        if (next < 0) throw InfeasibleError("decoder produced no candidate");

        const bool was_forced = st.forced_next.has_value();
        st.forced_next.reset();
        st.visited[next] = 1;
        st.current_row = next;
        if (!was_forced) {
            if (cvrp) st.remaining_capacity -= hg.demand[next];
            if (hg.partner[next] >= 0) st.forced_next = hg.partner[next];
        }
        sol.order.push_back(next);
        if (cvrp) sol.route_start.push_back(new_route ? 1 : 0);
    }
    return sol;
}

// --- checkpoints ---------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'R', 'H', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("truncated checkpoint", 0);
    return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
    const auto& hp = params.hp;
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    for (int v : {hp.d_h, hp.layers, hp.heads, hp.r_f, hp.r_c, hp.d_ff, hp.input_dim}) put<std::int32_t>(out, v);
    put<double>(out, hp.logit_clip);
    const auto named = params.named();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, m] : named) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m->rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(m->cols()));
        out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
    }
    if (!out) throw Error("checkpoint write failed");
}

void save_checkpoint_file(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    save_checkpoint(out, params);
}

ModelParams load_checkpoint(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a DRHG checkpoint", 0);
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw UnsupportedFormatError("checkpoint version " + std::to_string(version));
    HyperParams hp;
    hp.d_h = get<std::int32_t>(in);
    hp.layers = get<std::int32_t>(in);
    hp.heads = get<std::int32_t>(in);
    hp.r_f = get<std::int32_t>(in);
    hp.r_c = get<std::int32_t>(in);
    hp.d_ff = get<std::int32_t>(in);
    hp.input_dim = get<std::int32_t>(in);
    hp.logit_clip = get<double>(in);
    ModelParams params = make_params(hp);
    auto named = params.named();
    const auto count = get<std::uint32_t>(in);
    if (count != named.size()) throw ParseError("checkpoint tensor count mismatch", 0);
    for (auto& [expected, m] : named) {
        const auto len = get<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in || name != expected) throw ParseError("checkpoint tensor '" + name + "', expected '" + expected + "'", 0);
        if (get<std::uint32_t>(in) != 2) throw ParseError("checkpoint tensor rank must be 2", 0);
        const auto rows = get<std::uint64_t>(in);
        const auto cols = get<std::uint64_t>(in);
        if (rows != static_cast<std::uint64_t>(m->rows()) || cols != static_cast<std::uint64_t>(m->cols())) {
            throw ParseError("checkpoint tensor '" + name + "' has wrong shape", 0);
        }
        in.read(reinterpret_cast<char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
        if (!in) throw ParseError("truncated checkpoint", 0);
    }
    return params;
}

ModelParams load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return load_checkpoint(in);
}

}  // namespace drhg

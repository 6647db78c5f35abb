#include "drhg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "drhg/errors.hpp"
#include "drhg/log.hpp"
#include "drhg/parallel.hpp"
#include "drhg/search.hpp"

namespace drhg {

using nc::Matrix;
using nc::Var;

double LabeledInstance::label_objective() const {
    return inst.kind == ProblemKind::Tsp ? tour_length(inst, tour) : route_cost(inst, plan);
}

std::vector<LabeledInstance> pair_labels(const std::vector<Instance>& instances, const std::vector<Label>& labels) {
    std::map<std::string, const Label*> by_name;
    for (const auto& l : labels) {
        if (!by_name.emplace(l.instance_name, &l).second) {
            throw ConsistencyError("duplicate label for '" + l.instance_name + "'");
        }
    }
    std::vector<LabeledInstance> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        auto it = by_name.find(inst.name);
        if (it == by_name.end()) throw ConsistencyError("no label for instance '" + inst.name + "'");
        LabeledInstance li{inst, it->second->tour, it->second->plan};
        if (inst.kind == ProblemKind::Tsp) {
            if (it->second->is_routes) throw ConsistencyError("route label for TSP instance '" + inst.name + "'");
            validate_tour(inst, li.tour);
        } else {
            if (!it->second->is_routes) throw ConsistencyError("tour label for CVRP instance '" + inst.name + "'");
            validate_routes(inst, li.plan);
        }
        out.push_back(std::move(li));
    }
    return out;
}

std::pair<int, int> resolve_k_range(const TrainConfig& cfg, int n) {
    int hi = cfg.k_max > 0 ? cfg.k_max : static_cast<int>(std::floor(0.8 * n));
    hi = std::min(hi, n);
    const int lo = std::max(2, std::min(cfg.k_min, hi));
    if (hi < lo) throw ConfigError("instances too small for the training size range");
    return {lo, hi};
}

// --- batches ---------------------------------------------------------------------------------

namespace {

RoutePlan reversed_plan(const RoutePlan& plan) {
    RoutePlan r;
    for (auto it = plan.routes.rbegin(); it != plan.routes.rend(); ++it) r.routes.emplace_back(it->rbegin(), it->rend());
    return r;
}

std::vector<TrainingSample> samples_for(const LabeledInstance& li, int id, int k, const TrainConfig& cfg, Rng& rng,
                                        bool& kept) {
    kept = false;
    const Instance& inst = li.inst;
    const bool tsp = inst.kind == ProblemKind::Tsp;
    const SolutionGraph g = tsp ? solution_graph(inst, li.tour) : solution_graph(inst, li.plan);
    const int first = tsp ? 0 : 1;
    const int center = uniform_int(rng, first, inst.size() - 1);
    const AlignmentResult al = align_sample_size(inst, g, center, k);
    if (!al.feasible) return {};
    const Destruction d = tsp ? cluster_destroy(inst, li.tour, center, al.destroy_count)
                              : cluster_destroy(inst, li.plan, center, al.destroy_count);
    const HyperGraph raw = reduce(inst, d);
    if (raw.size() != k) throw ConsistencyError("alignment predicted " + std::to_string(k) + " rows, reduction gave " +
                                                std::to_string(raw.size()));
    HyperGraph hg;
    try {
        hg = transform_coords(raw);
    } catch (const DegenerateInputError&) {
        return {};
    }
    kept = true;

    std::vector<TrainingSample> out;
    const int orientations = cfg.augment_orientation ? 2 : 1;
    for (int o = 0; o < orientations; ++o) {
        TrainingSample s;
        s.instance_id = id;
        s.center = center;
        s.k = k;
        s.reversed = o == 1;
        if (tsp) {
            Tour t = li.tour;
            if (s.reversed) std::reverse(t.order.begin(), t.order.end());
            const auto starts = valid_start_rows(t, hg);
            const int start = starts[uniform_int(rng, 0, static_cast<int>(starts.size()) - 1)];
            s.target = target_sequence(t, hg, start);
        } else {
            const RoutePlan p = s.reversed ? reversed_plan(li.plan) : li.plan;
            s.target = target_sequence(p, hg, uniform_int(rng, 0, static_cast<int>(p.routes.size()) - 1));
        }
        s.hg = hg;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

Batch build_batch(const std::vector<LabeledInstance>& data, std::span<const int> indices, const TrainConfig& cfg,
                  std::uint64_t batch_seed) {
    Batch batch;
    if (indices.empty()) return batch;
    const auto [lo, hi] = resolve_k_range(cfg, data[indices[0]].inst.customer_count());
    Rng rng = make_rng(batch_seed);
    batch.k = uniform_int(rng, lo, hi);
    batch.attempted = static_cast<int>(indices.size());

    std::vector<std::vector<TrainingSample>> slots(indices.size());
    std::vector<char> kept(indices.size(), 0);
    parallel_for(indices.size(), cfg.workers, [&](std::size_t i) {
        Rng r = make_rng(batch_seed, {i + 1});
        bool ok = false;
        slots[i] = samples_for(data[indices[i]], indices[i], batch.k, cfg, r, ok);
        kept[i] = ok;
    });
    for (std::size_t i = 0; i < slots.size(); ++i) {
        batch.kept += kept[i];
        for (auto& s : slots[i]) batch.samples.push_back(std::move(s));
    }
    return batch;
}

// --- loss -------------------------------------------------------------------------------------

namespace {

constexpr double kMinProb = 1e-12;

}  // namespace

Var xent_loss_masked(nc::Tape& tape, const BoundParams& p, const HyperParams& hp, const TrainingSample& sample,
                     LossStats* stats, bool audit) {
    const HyperGraph& hg = sample.hg;
    const auto& order = sample.target.order;
    const auto& forced = sample.target.forced;
    const int m = hg.size();
    if (static_cast<int>(order.size()) != m || static_cast<int>(forced.size()) != m) {
        throw ShapeError("target sequence does not cover the hyper-graph");
    }
    const bool cvrp = hg.kind == ProblemKind::Cvrp;
    LossStats local;
    LossStats& st = stats ? *stats : local;

    const auto feat = hg.feature_matrix();
    const Var h0 = encode(p, tape.constant(Eigen::Map<const Matrix>(feat.data(), m, hg.input_dim())));

    std::vector<char> visited(m, 0);
    visited[order[0]] = 1;
    int remaining = cvrp ? hg.capacity - hg.demand[order[0]] : 0;
    std::vector<Var> terms;
    int scored = 0;
    double clamped_penalty = 0.0;

    for (int t = 1; t < m; ++t) {
        const int target = order[t];
        const bool is_forced = forced[t] != 0;
        if (cvrp && !is_forced && !sample.target.route_start.empty() && sample.target.route_start[t]) {
            remaining = hg.capacity;
        }
        if (!is_forced) ++scored;

        if (!is_forced || audit) {
            std::vector<int> cand;
            int target_pos = -1;
            int legal = 0;
            for (int r = 0; r < m; ++r) {
                if (visited[r]) continue;
                if (r == target) target_pos = static_cast<int>(cand.size());
                cand.push_back(r);
            }
            if (target_pos < 0) throw ConsistencyError("target row already visited");
            nc::Mask mask(1, static_cast<Eigen::Index>(cand.size()));
            for (std::size_t i = 0; i < cand.size(); ++i) {
                const int r = cand[i];
                const bool ok = is_forced ? r == hg.partner[order[t - 1]]
                                          : !(cvrp && hg.demand[r] > remaining);
                mask(0, static_cast<Eigen::Index>(i)) = ok;
                legal += ok;
            }
            if (!mask(0, target_pos)) {
                ++st.clamped;
                clamped_penalty += -std::log(kMinProb);
            } else if (legal > 1 || is_forced) {
                const Var logits = candidate_logits(p, hp, nc::slice_rows(h0, order[0], 1),
                                                    nc::slice_rows(h0, order[t - 1], 1), nc::gather_rows(h0, cand));
                ++st.network_steps;
                if (is_forced) st.forced_logits.push_back(logits);
                terms.push_back(nc::pick(nc::masked_log_softmax(logits, mask), 0, target_pos));
            }
        }

        visited[target] = 1;
        if (cvrp && !is_forced) remaining -= hg.demand[target];
    }
    st.scored_steps += scored;

    // Forced terms are exactly zero (a single unmasked entry) and carry no gradient.
    Var total = terms.empty() ? tape.constant(Matrix::Zero(1, 1)) : nc::sum_scalars(terms);
    if (clamped_penalty > 0.0) total = nc::add(nc::scale(total, -1.0), tape.constant(Matrix::Constant(1, 1, clamped_penalty)));
    else total = nc::scale(total, -1.0);
    return scored > 0 ? nc::scale(total, 1.0 / scored) : total;
}

double xent_loss_masked(const std::vector<std::vector<double>>& probs, const std::vector<int>& order,
                        const std::vector<char>& forced, int* clamped) {
    if (probs.size() + 1 != order.size() && probs.size() != order.size()) {
        throw ShapeError("need one probability vector per non-initial step");
    }
    const std::size_t offset = probs.size() == order.size() ? 0 : 1;
    double sum = 0.0;
    int count = 0;
    for (std::size_t t = 1; t < order.size(); ++t) {
        if (forced[t]) continue;
        double pr = probs[t - offset].at(order[t]);
        if (pr < kMinProb) {
            pr = kMinProb;
            if (clamped) ++*clamped;
        }
        sum -= std::log(pr);
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

// --- gradients --------------------------------------------------------------------------------

namespace {

constexpr std::size_t kChunk = 16;

std::vector<Matrix> zero_like(const ModelParams& params) {
    std::vector<Matrix> g;
    for (const auto& [name, m] : params.named()) g.push_back(Matrix::Zero(m->rows(), m->cols()));
    return g;
}

bool all_finite(const BatchGradient& g) {
    if (!std::isfinite(g.loss)) return false;
    for (const auto& m : g.grads) {
        if (!m.allFinite()) return false;
    }
    return true;
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params, const std::vector<TrainingSample>& samples, int workers) {
    const std::size_t chunks = (samples.size() + kChunk - 1) / kChunk;
    std::vector<BatchGradient> partial(chunks);
    parallel_for(chunks, workers, [&](std::size_t c) {
        BatchGradient& out = partial[c];
        out.grads = zero_like(params);
        for (std::size_t s = c * kChunk; s < std::min(samples.size(), (c + 1) * kChunk); ++s) {
            nc::Tape tape(true);
            const BoundParams p = bind(tape, params);
            LossStats st;
            const Var loss = xent_loss_masked(tape, p, params.hp, samples[s], &st);
            out.loss += loss.value()(0, 0);
            out.clamped += st.clamped;
            if (!tape.requires_grad(loss.id)) continue;
            tape.backward(loss);
            for (std::size_t i = 0; i < p.all.size(); ++i) {
                if (tape.has_grad(p.all[i].id)) out.grads[i] += tape.grad(p.all[i].id);
            }
        }
    });
    BatchGradient total;
    total.grads = zero_like(params);
    for (const auto& part : partial) {
        total.loss += part.loss;
        total.clamped += part.clamped;
        for (std::size_t i = 0; i < total.grads.size(); ++i) total.grads[i] += part.grads[i];
    }
    if (!samples.empty()) {
        const double inv = 1.0 / static_cast<double>(samples.size());
        total.loss *= inv;
        for (auto& g : total.grads) g *= inv;
    }
    return total;
}

// --- training loop ------------------------------------------------------------------------------

double validation_gap(const ModelParams& params, const std::vector<LabeledInstance>& val, const TrainConfig& cfg) {
    if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> gaps(val.size());
    parallel_for(val.size(), cfg.workers, [&](std::size_t i) {
        SearchConfig sc;
        sc.iterations = cfg.validation_iters;
        if (cfg.validation_k_min > 0) sc.k_min = cfg.validation_k_min;
        if (cfg.validation_k_max > 0) sc.k_max = cfg.validation_k_max;
        sc.seed = cfg.seed + i;
        const auto& li = val[i];
        const double obj = li.inst.kind == ProblemKind::Tsp ? solve_tsp(li.inst, params, sc).best_objective
                                                            : solve_cvrp(li.inst, params, sc).best_objective;
        gaps[i] = gap(obj, li.label_objective());
    });
    return std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
}

void write_metrics_header(std::ostream& out) { out << "epoch,mean_loss,kept_fraction,val_gap,lr,seconds\n"; }

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
    out << m.epoch << ',' << std::setprecision(10) << m.mean_loss << ',' << m.kept_fraction << ',' << m.val_gap << ','
        << m.lr << ',' << std::setprecision(6) << m.seconds << '\n';
}

void dump_samples(std::ostream& out, const std::vector<TrainingSample>& samples) {
    for (const auto& s : samples) {
        nlohmann::json j;
        j["instance_id"] = s.instance_id;
        j["center"] = s.center;
        j["k"] = s.k;
        j["reversed"] = s.reversed;
        j["features"] = s.hg.feature_matrix();
        j["input_dim"] = s.hg.input_dim();
        j["order"] = s.target.order;
        std::vector<int> forced(s.target.forced.begin(), s.target.forced.end());
        j["forced"] = forced;
        out << j.dump() << '\n';
    }
}

namespace {

/// Runs one sample through the tape with forced steps evaluated and checks
/// that no gradient reaches their logits.
void audit_forced_gradients(const ModelParams& params, const std::vector<TrainingSample>& samples) {
    for (const auto& s : samples) {
        if (s.hg.edges.empty()) continue;
        nc::Tape tape(true);
        const BoundParams p = bind(tape, params);
        LossStats st;
        const Var loss = xent_loss_masked(tape, p, params.hp, s, &st, true);
        if (tape.requires_grad(loss.id)) tape.backward(loss);
        for (const Var& v : st.forced_logits) {
            if (tape.has_grad(v.id) && tape.grad(v.id).cwiseAbs().maxCoeff() != 0.0) {
                throw ConsistencyError("gradient leaked into a forced step");
            }
        }
        return;
    }
}

std::string epoch_path(const std::string& dir, int epoch) {
    std::ostringstream os;
    os << "epoch_" << std::setw(3) << std::setfill('0') << epoch << ".ckpt";
    return (std::filesystem::path(dir) / os.str()).string();
}

TrainResult run_training(const std::vector<LabeledInstance>& train_set, const std::vector<LabeledInstance>& val_set,
                         const TrainConfig& cfg, ModelParams params) {
    init_logging();
    if (train_set.empty()) throw ConfigError("empty training set");
    if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("batch size and epochs must be positive");
    const int dim = train_set.front().inst.kind == ProblemKind::Tsp ? 5 : 6;
    if (params.hp.input_dim != dim) throw ConfigError("model input_dim does not match the training data kind");

    TrainResult res;
    res.best_val_gap = std::numeric_limits<double>::infinity();
    res.best = params;
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        metrics.open(cfg.metrics_path);
        if (!metrics) throw Error("cannot write " + cfg.metrics_path);
        write_metrics_header(metrics);
    }

    nc::AdamState adam;
    std::vector<Matrix*> ptrs;
    for (auto& [name, m] : params.named()) ptrs.push_back(m);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = nc::learning_rate(cfg.lr0, cfg.decay, epoch);
        std::vector<int> perm(train_set.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng shuffle_rng = make_rng(cfg.seed, {1, static_cast<std::uint64_t>(epoch)});
        std::shuffle(perm.begin(), perm.end(), shuffle_rng);

        const std::size_t batches = (perm.size() + cfg.batch_size - 1) / cfg.batch_size;
        const std::size_t limit = cfg.max_batches > 0 ? std::min<std::size_t>(batches, cfg.max_batches) : batches;
        double loss_sum = 0.0;
        int used = 0;
        long attempted = 0, kept = 0;
        bool audited = !cfg.audit_forced;
        for (std::size_t b = 0; b < limit; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t count = std::min<std::size_t>(cfg.batch_size, perm.size() - begin);
            const std::uint64_t bseed = make_rng(cfg.seed, {2, static_cast<std::uint64_t>(epoch), b})();
            Batch batch = build_batch(train_set, std::span<const int>(perm.data() + begin, count), cfg, bseed);
            attempted += batch.attempted;
            kept += batch.kept;
            if (batch.samples.empty()) {
                spdlog::info("epoch {} batch {}: no feasible sample at k={}, skipped", epoch, b, batch.k);
                continue;
            }
            if (!audited) {
                audit_forced_gradients(params, batch.samples);
                audited = true;
            }
            const BatchGradient g = batch_gradient(params, batch.samples, cfg.workers);
            if (g.clamped > 0) spdlog::warn("epoch {} batch {}: {} target(s) clamped at 1e-12", epoch, b, g.clamped);
            if (!all_finite(g)) {
                const std::string dump = (std::filesystem::path(cfg.checkpoint_dir.empty() ? "." : cfg.checkpoint_dir) /
                                          ("nonfinite_epoch" + std::to_string(epoch) + "_batch" + std::to_string(b) +
                                           ".jsonl"))
                                             .string();
                std::ofstream out(dump);
                dump_samples(out, batch.samples);
                throw NumericalError("non-finite loss or gradient at epoch " + std::to_string(epoch) + " batch " +
                                     std::to_string(b) + "; batch written to " + dump);
            }
            nc::adam_step(ptrs, g.grads, adam, lr);
            loss_sum += g.loss;
            ++used;
            spdlog::debug("epoch {} batch {}/{} k={} kept={} loss={:.5f}", epoch, b + 1, limit, batch.k, batch.kept,
                          g.loss);
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.mean_loss = used > 0 ? loss_sum / used : std::numeric_limits<double>::quiet_NaN();
        em.kept_fraction = attempted > 0 ? static_cast<double>(kept) / static_cast<double>(attempted) : 0.0;
        em.val_gap = validation_gap(params, val_set, cfg);
        em.lr = lr;
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.metrics.push_back(em);
        if (metrics) {
            write_metrics_row(metrics, em);
            metrics.flush();
        }
        spdlog::info("epoch {}: loss {:.5f} kept {:.3f} val_gap {:.4f}% lr {:.3g} ({:.1f}s)", epoch, em.mean_loss,
                     em.kept_fraction, em.val_gap * 100.0, lr, em.seconds);

        const bool improved = std::isnan(em.val_gap) || em.val_gap < res.best_val_gap;
        if (improved) {
            res.best_val_gap = std::isnan(em.val_gap) ? res.best_val_gap : em.val_gap;
            res.best = params;
        }
        if (!cfg.checkpoint_dir.empty()) {
            save_checkpoint_file(epoch_path(cfg.checkpoint_dir, epoch), params);
            if (improved) save_checkpoint_file((std::filesystem::path(cfg.checkpoint_dir) / "best.ckpt").string(), params);
        }
    }
    res.last = std::move(params);
    if (cfg.epochs == 0 && !cfg.checkpoint_dir.empty()) {
        save_checkpoint_file((std::filesystem::path(cfg.checkpoint_dir) / "best.ckpt").string(), res.last);
    }
    return res;
}

}  // namespace

TrainResult train(const std::vector<LabeledInstance>& train_set, const std::vector<LabeledInstance>& val_set,
                  const TrainConfig& cfg) {
    return run_training(train_set, val_set, cfg, init_params(cfg.hp, cfg.seed));
}

TrainResult fine_tune(const std::vector<LabeledInstance>& train_set, const std::vector<LabeledInstance>& val_set,
                      const TrainConfig& cfg, const ModelParams& base) {
    if (!(base.hp == cfg.hp)) {
        throw ConfigError("checkpoint hyper-parameters [" + describe(base.hp) + "] differ from config [" +
                          describe(cfg.hp) + "]");
    }
    return run_training(train_set, val_set, cfg, base);
}

}  // namespace drhg

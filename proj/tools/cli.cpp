#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "drhg/baselines.hpp"
#include "drhg/errors.hpp"
#include "drhg/log.hpp"
#include "drhg/parallel.hpp"
#include "drhg/search.hpp"
#include "drhg/training.hpp"

#ifndef DRHG_VERSION
#define DRHG_VERSION "unknown"
#endif

namespace drhg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Flag combination that parses but makes no sense.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

json option_snapshot(const CLI::App& sub) {
    json j = json::object();
    for (const CLI::Option* o : sub.get_options()) {
        const std::string name = o->get_single_name();
        if (name == "help" || name == "h") continue;
        if (o->count() > 0) {
            const auto& r = o->results();
            j[name] = r.size() == 1 ? json(r[0]) : json(r);
        } else {
            j[name] = o->get_default_str();
        }
    }
    return j;
}

class Manifest {
public:
    Manifest(std::string command, const CLI::App& sub, std::uint64_t seed, std::vector<std::string> argv)
        : command_(std::move(command)), config_(option_snapshot(sub)), seed_(seed), argv_(std::move(argv)),
          start_(utc_now()) {}

    void output(const std::string& path) { outputs_.push_back(path); }

    void write(const std::string& path) const {
        json j;
        j["command"] = command_;
        j["argv"] = argv_;
        j["config"] = config_;
        j["seed"] = seed_;
        j["version"] = DRHG_VERSION;
        j["start"] = start_;
        j["end"] = utc_now();
        j["outputs"] = outputs_;
        std::ofstream f(path);
        if (!f) throw Error("cannot write manifest " + path);
        f << j.dump(2) << '\n';
    }

private:
    std::string command_;
    json config_;
    std::uint64_t seed_;
    std::vector<std::string> argv_;
    std::string start_;
    std::vector<std::string> outputs_;
};

ProblemKind kind_from_flag(const std::string& s) { return s == "cvrp" ? ProblemKind::Cvrp : ProblemKind::Tsp; }

void ensure_parent(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const std::string& path) {
    ensure_parent(path);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path + " for writing");
    return f;
}

std::vector<Instance> load_dataset(const std::string& path) {
    auto v = read_dataset_file(path);
    if (v.empty()) throw ValidationError("dataset " + path + " is empty");
    return v;
}

// --- solution files ----------------------------------------------------------------------

struct Solution {
    std::string name;
    ProblemKind kind = ProblemKind::Tsp;
    double objective = 0.0;
    double initial_objective = 0.0;
    Tour tour;
    RoutePlan plan;
    double seconds = 0.0;
};

json solution_to_json(const Solution& s) {
    json j;
    j["name"] = s.name;
    j["kind"] = to_string(s.kind);
    j["objective"] = s.objective;
    j["initial_objective"] = s.initial_objective;
    if (s.kind == ProblemKind::Tsp) j["order"] = s.tour.order;
    else j["routes"] = s.plan.routes;
    j["seconds"] = s.seconds;
    return j;
}

std::vector<Solution> read_solutions(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    std::vector<Solution> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            Solution s;
            s.name = j.at("name").get<std::string>();
            s.kind = problem_kind_from_string(j.at("kind").get<std::string>());
            s.objective = j.at("objective").get<double>();
            s.initial_objective = j.value("initial_objective", s.objective);
            if (s.kind == ProblemKind::Tsp) s.tour.order = j.at("order").get<std::vector<int>>();
            else s.plan.routes = j.at("routes").get<std::vector<std::vector<int>>>();
            s.seconds = j.value("seconds", 0.0);
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(path + ": " + e.what(), static_cast<std::size_t>(line_no));
        }
    }
    return out;
}

const Instance& find_instance(const std::vector<Instance>& insts, const std::string& name) {
    for (const auto& i : insts) {
        if (i.name == name) return i;
    }
    throw ConsistencyError("no instance named '" + name + "'");
}

/// Throws ConsistencyError unless `s` is a valid solution of `inst`.
void check_matches(const Instance& inst, const Solution& s) {
    if (inst.kind != s.kind) throw ConsistencyError("solution '" + s.name + "' has the wrong problem kind");
    try {
        if (s.kind == ProblemKind::Tsp) validate_tour(inst, s.tour);
        else validate_routes(inst, s.plan);
    } catch (const ValidationError& e) {
        throw ConsistencyError("solution '" + s.name + "' does not fit its instance: " + e.what());
    }
}

// --- SVG -----------------------------------------------------------------------------------

constexpr double kView = 360.0;
constexpr double kMargin = 20.0;

struct Frame {
    double min_x = 0, min_y = 0, scale = 1;
    double ox = 0, oy = 0;

    std::pair<double, double> at(std::pair<double, double> p) const {
        return {ox + kMargin + (p.first - min_x) * scale, oy + kMargin + kView - (p.second - min_y) * scale};
    }
};

Frame frame_for(const std::vector<std::pair<double, double>>& coords, double ox, double oy) {
    Frame f;
    f.ox = ox;
    f.oy = oy;
    if (coords.empty()) return f;
    double max_x = coords[0].first, max_y = coords[0].second;
    f.min_x = max_x;
    f.min_y = max_y;
    for (const auto& [x, y] : coords) {
        f.min_x = std::min(f.min_x, x);
        f.min_y = std::min(f.min_y, y);
        max_x = std::max(max_x, x);
        max_y = std::max(max_y, y);
    }
    const double side = std::max(max_x - f.min_x, max_y - f.min_y);
    f.scale = side > 0 ? kView / side : 1.0;
    return f;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

void draw_paths(std::ostream& os, const Frame& f, const std::vector<std::pair<double, double>>& coords,
                const std::vector<std::vector<int>>& paths, const std::string& cls, const std::string& colour,
                double width) {
    for (const auto& path : paths) {
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            const auto [x1, y1] = f.at(coords[path[i]]);
            const auto [x2, y2] = f.at(coords[path[i + 1]]);
            os << "<line class=\"" << cls << "\" x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
               << "\" y2=\"" << num(y2) << "\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\"/>\n";
        }
    }
}

void draw_nodes(std::ostream& os, const Frame& f, const std::vector<std::pair<double, double>>& coords, int depot,
                const std::vector<char>& highlight) {
    for (std::size_t v = 0; v < coords.size(); ++v) {
        const auto [x, y] = f.at(coords[v]);
        if (static_cast<int>(v) == depot) {
            os << "<rect class=\"depot\" x=\"" << num(x - 5) << "\" y=\"" << num(y - 5)
               << "\" width=\"10\" height=\"10\" fill=\"black\"/>\n";
            continue;
        }
        const bool hot = !highlight.empty() && highlight[v];
        os << "<circle class=\"" << (hot ? "node destroyed" : "node") << "\" cx=\"" << num(x) << "\" cy=\"" << num(y)
           << "\" r=\"" << (hot ? 4.5 : 3) << "\" fill=\"" << (hot ? "#d62728" : "#1f77b4") << "\"/>\n";
    }
}

std::string svg_open(double w, double h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
       << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

std::vector<std::pair<double, double>> coord_pairs(const Instance& inst) {
    std::vector<std::pair<double, double>> c;
    for (const auto& p : inst.coords) c.emplace_back(p.x, p.y);
    return c;
}

std::vector<std::vector<int>> solution_paths(const Solution& s) {
    if (s.kind == ProblemKind::Tsp) {
        std::vector<int> p = s.tour.order;
        if (!p.empty()) p.push_back(p.front());
        return {p};
    }
    std::vector<std::vector<int>> out;
    for (const auto& r : s.plan.routes) {
        std::vector<int> p = {0};
        p.insert(p.end(), r.begin(), r.end());
        p.push_back(0);
        out.push_back(std::move(p));
    }
    return out;
}

// --- subcommands -----------------------------------------------------------------------------

struct Common {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
    sub->add_option("--seed", c.seed, "Seed for every random choice");
    auto* o = sub->add_option("--out", c.out, "Output path");
    if (out_required) o->required();
}

void add_workers(CLI::App* sub, Common& c) {
    sub->add_option("--workers", c.workers, "Instance-level worker threads")->check(CLI::PositiveNumber);
}

struct GenArgs {
    Common c;
    std::string kind;
    int n = 0;
    int count = 1;
    int capacity = 0;
};

void cmd_gen(const GenArgs& a, Manifest& m, std::ostream& out) {
    const ProblemKind kind = kind_from_flag(a.kind);
    if (kind == ProblemKind::Tsp && a.n < 3) throw UsageError("--n must be at least 3 for tsp");
    if (kind == ProblemKind::Cvrp && a.n < 2) throw UsageError("--n must be at least 2 for cvrp");
    if (a.capacity != 0 && kind != ProblemKind::Cvrp) throw UsageError("--capacity applies to cvrp only");
    DemandConfig dc;
    dc.capacity = a.capacity;
    const auto insts = gen_uniform_batch(kind, a.n, a.count, a.c.seed, dc);
    ensure_parent(a.c.out);
    write_dataset_file(a.c.out, insts);
    m.output(a.c.out);
    out << "wrote " << insts.size() << " instances to " << a.c.out << '\n';
}

struct LabelArgs {
    Common c;
    std::string input;
    std::string mode = "auto";
    int max_exact_n = 16;
    int ls_rounds = 1000;
};

void cmd_label(const LabelArgs& a, Manifest& m, std::ostream& out) {
    const auto insts = load_dataset(a.input);
    std::vector<Label> labels(insts.size());
    parallel_for(insts.size(), a.c.workers, [&](std::size_t i) {
        const Instance& inst = insts[i];
        Label l;
        l.instance_name = inst.name;
        if (inst.kind == ProblemKind::Cvrp) {
            l.plan = sweep(inst);
            l.is_routes = true;
        } else {
            LabelerConfig lc;
            lc.max_exact_n = a.max_exact_n;
            lc.ls_rounds = a.ls_rounds;
            lc.seed = make_rng(a.c.seed, {i})();
            if (a.mode == "exact") lc.mode = LabelMode::ExactDp;
            else if (a.mode == "local") lc.mode = LabelMode::LocalSearch;
            else lc.mode = inst.size() <= a.max_exact_n ? LabelMode::ExactDp : LabelMode::LocalSearch;
            l.tour = make_label(inst, lc);
        }
        labels[i] = std::move(l);
    });
    ensure_parent(a.c.out);
    write_labels_file(a.c.out, labels);
    m.output(a.c.out);
    out << "wrote " << labels.size() << " labels to " << a.c.out << '\n';
}

struct TrainArgs {
    Common c;
    std::string input, labels, val, val_labels, ckpt;
    TrainConfig cfg;
};

void cmd_train(TrainArgs& a, Manifest& m, std::ostream& out) {
    if (a.val.empty() != a.val_labels.empty()) throw UsageError("--val and --val-labels go together");
    const auto train_set = pair_labels(load_dataset(a.input), read_labels_file(a.labels));
    std::vector<LabeledInstance> val_set;
    if (!a.val.empty()) val_set = pair_labels(load_dataset(a.val), read_labels_file(a.val_labels));

    TrainConfig cfg = a.cfg;
    cfg.seed = a.c.seed;
    cfg.workers = a.c.workers;
    cfg.hp.input_dim = train_set.front().inst.kind == ProblemKind::Tsp ? 5 : 6;
    fs::create_directories(a.c.out);
    cfg.checkpoint_dir = (fs::path(a.c.out) / "checkpoints").string();
    cfg.metrics_path = (fs::path(a.c.out) / "metrics.csv").string();

    TrainResult r;
    if (!a.ckpt.empty()) {
        const ModelParams base = load_checkpoint_file(a.ckpt);
        r = fine_tune(train_set, val_set, cfg, base);
    } else {
        r = train(train_set, val_set, cfg);
    }
    const std::string model = (fs::path(a.c.out) / "model.ckpt").string();
    save_checkpoint_file(model, val_set.empty() ? r.last : r.best);
    m.output(model);
    m.output(cfg.checkpoint_dir);
    m.output(cfg.metrics_path);
    out << "trained " << r.metrics.size() << " epoch(s); model at " << model << '\n';
    if (!r.metrics.empty()) out << "final mean loss " << r.metrics.back().mean_loss << '\n';
}

struct SolveArgs {
    Common c;
    std::string input, ckpt, trace, repair = "model", mode = "greedy", acceptance = "greedy";
    int iters = 1000;
    int k_min = 20;
    int k_max = 0;
    bool validate = false;
};

void cmd_solve(const SolveArgs& a, Manifest& m, std::ostream& out) {
    if (a.repair == "model" && a.ckpt.empty()) throw UsageError("--ckpt is required with --repair model");
    if (a.repair == "exact" && !a.ckpt.empty()) throw UsageError("--ckpt is not used with --repair exact");
    const auto insts = load_dataset(a.input);
    std::optional<ModelParams> params;
    if (!a.ckpt.empty()) params = load_checkpoint_file(a.ckpt);
    if (!a.trace.empty()) fs::create_directories(a.trace);

    std::vector<Solution> sols(insts.size());
    parallel_for(insts.size(), a.c.workers, [&](std::size_t i) {
        const Instance& inst = insts[i];
        SearchConfig sc;
        sc.iterations = a.iters;
        sc.k_min = a.k_min;
        sc.k_max = a.k_max;
        sc.mode = a.mode == "sample" ? RolloutMode::Sample : RolloutMode::Greedy;
        sc.acceptance = a.acceptance == "always" ? Acceptance::Always : Acceptance::GreedyImprove;
        sc.seed = a.c.seed + i;
        sc.validate = a.validate;
        std::ofstream snaps;
        if (!a.trace.empty()) {
            snaps.open(fs::path(a.trace) / (inst.name + ".snapshots.jsonl"), std::ios::binary);
            sc.observer = [&](const IterationSnapshot& s) {
                json j;
                j["name"] = inst.name;
                j["iteration"] = s.iteration;
                j["accepted"] = s.accepted;
                j["destroyed"] = s.destroyed;
                j["segments"] = s.segments;
                j["before"] = s.before;
                j["candidate"] = s.candidate;
                snaps << j.dump() << '\n';
            };
        }
        std::unique_ptr<RepairPolicy> policy;
        if (params) {
            const int want = inst.kind == ProblemKind::Tsp ? 5 : 6;
            if (params->hp.input_dim != want) {
                throw ConfigError("checkpoint expects input_dim " + std::to_string(params->hp.input_dim) + ", " +
                                  to_string(inst.kind) + " needs " + std::to_string(want));
            }
            policy = std::make_unique<ModelRepair>(*params, sc.mode);
        } else {
            policy = std::make_unique<ExactRepair>();
        }
        const auto t0 = std::chrono::steady_clock::now();
        Solution s;
        s.name = inst.name;
        s.kind = inst.kind;
        SearchTrace trace;
        if (inst.kind == ProblemKind::Tsp) {
            auto r = solve_tsp(inst, *policy, sc);
            s.tour = std::move(r.best);
            s.objective = r.best_objective;
            trace = std::move(r.trace);
        } else {
            auto r = solve_cvrp(inst, *policy, sc);
            s.plan = std::move(r.best);
            s.objective = r.best_objective;
            trace = std::move(r.trace);
        }
        s.initial_objective = trace.initial_objective;
        s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!a.trace.empty()) {
            std::ofstream f(fs::path(a.trace) / (inst.name + ".trace.csv"), std::ios::binary);
            write_trace_csv(f, trace);
        }
        sols[i] = std::move(s);
    });

    auto f = open_out(a.c.out);
    double total = 0.0;
    for (const auto& s : sols) {
        f << solution_to_json(s).dump() << '\n';
        total += s.objective;
    }
    m.output(a.c.out);
    if (!a.trace.empty()) m.output(a.trace);
    out << "solved " << sols.size() << " instance(s), mean objective " << std::setprecision(6)
        << total / static_cast<double>(sols.size()) << '\n';
}

struct EvalArgs {
    Common c;
    std::string solutions, bks, labels, instances;
};

void cmd_eval(const EvalArgs& a, Manifest& m, std::ostream& out) {
    if (a.bks.empty() == a.labels.empty()) throw UsageError("give exactly one of --bks and --labels");
    if (!a.labels.empty() && a.instances.empty()) throw UsageError("--labels needs --instances");
    const auto sols = read_solutions(a.solutions);

    std::map<std::string, double> refs;
    std::vector<Instance> insts;
    if (!a.instances.empty()) insts = load_dataset(a.instances);
    if (!a.bks.empty()) {
        refs = read_bks_file(a.bks);
    } else {
        for (const auto& li : pair_labels(insts, read_labels_file(a.labels))) refs[li.inst.name] = li.label_objective();
    }

    // instances stand in by name only unless a dataset was given
    std::vector<Instance> rows;
    for (const auto& s : sols) {
        if (!insts.empty()) {
            const Instance& inst = find_instance(insts, s.name);
            check_matches(inst, s);
            rows.push_back(inst);
        } else {
            Instance stub;
            stub.name = s.name;
            stub.kind = s.kind;
            rows.push_back(std::move(stub));
        }
    }
    const EvalTable table = evaluate(rows, [&](const Instance&, std::size_t i) { return sols[i].objective; }, refs);
    out << format_eval_table(table);
    auto f = open_out(a.c.out);
    write_eval_csv(f, table);
    m.output(a.c.out);
}

struct PlotArgs {
    Common c;
    std::string instances, solutions, trace, name;
    int snapshots = 3;
};

std::string trace_svg(const Instance& inst, const std::vector<json>& picked) {
    const auto coords = coord_pairs(inst);
    const int depot = inst.kind == ProblemKind::Cvrp ? 0 : -1;
    const double cell = kView + 2 * kMargin;
    const double title = 24.0;
    std::ostringstream os;
    os << svg_open(3 * cell, static_cast<double>(picked.size()) * (cell + title));
    for (std::size_t r = 0; r < picked.size(); ++r) {
        const json& j = picked[r];
        const double oy = static_cast<double>(r) * (cell + title);
        std::vector<char> hot(coords.size(), 0);
        for (int v : j.at("destroyed").get<std::vector<int>>()) hot[v] = 1;
        const auto before = j.at("before").get<std::vector<std::vector<int>>>();
        const auto segments = j.at("segments").get<std::vector<std::vector<int>>>();
        const auto candidate = j.at("candidate").get<std::vector<std::vector<int>>>();
        os << "<g class=\"panel\" data-iteration=\"" << j.at("iteration").get<int>() << "\">\n";
        os << "<text x=\"" << num(kMargin) << "\" y=\"" << num(oy + 16) << "\" font-family=\"sans-serif\" font-size=\"14\">"
           << "iteration " << j.at("iteration").get<int>() << (j.at("accepted").get<bool>() ? " (accepted)" : " (rejected)")
           << ": destroy / reduced / repaired</text>\n";
        const std::vector<char> none;
        for (int col = 0; col < 3; ++col) {
            const Frame f = frame_for(coords, col * cell, oy + title);
            os << "<g class=\"view\">\n";
            if (col == 0) draw_paths(os, f, coords, before, "edge", "#7f7f7f", 1.2);
            if (col == 1) draw_paths(os, f, coords, segments, "fixed", "#2ca02c", 2.0);
            if (col == 2) draw_paths(os, f, coords, candidate, "edge", "#1f77b4", 1.2);
            draw_nodes(os, f, coords, depot, col == 2 ? none : hot);
            os << "</g>\n";
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void cmd_plot(const PlotArgs& a, Manifest& m, std::ostream& out) {
    if (a.trace.empty() == a.solutions.empty()) throw UsageError("give a solution file or --trace, not both");
    if (!a.trace.empty() && a.snapshots < 1) throw UsageError("--snapshots must be positive");
    const auto insts = load_dataset(a.instances);
    std::string svg;
    if (a.trace.empty()) {
        const auto sols = read_solutions(a.solutions);
        if (sols.empty()) throw ValidationError("solution file is empty");
        const Solution* s = &sols.front();
        if (!a.name.empty()) {
            auto it = std::find_if(sols.begin(), sols.end(), [&](const Solution& x) { return x.name == a.name; });
            if (it == sols.end()) throw ConsistencyError("no solution named '" + a.name + "'");
            s = &*it;
        }
        const Instance& inst = find_instance(insts, s->name);
        check_matches(inst, *s);
        svg = render_solution_svg(coord_pairs(inst), solution_paths(*s), inst.kind == ProblemKind::Cvrp ? 0 : -1);
    } else {
        std::ifstream f(a.trace);
        if (!f) throw Error("cannot open " + a.trace);
        std::vector<json> rows;
        for (std::string line; std::getline(f, line);) {
            if (!line.empty()) rows.push_back(json::parse(line));
        }
        if (static_cast<int>(rows.size()) < a.snapshots) {
            throw ValidationError("trace has " + std::to_string(rows.size()) + " iteration(s), " +
                                  std::to_string(a.snapshots) + " snapshot(s) requested");
        }
        std::vector<json> picked;
        for (int s = 0; s < a.snapshots; ++s) {
            const std::size_t idx =
                a.snapshots == 1 ? 0 : static_cast<std::size_t>(s) * (rows.size() - 1) / (a.snapshots - 1);
            picked.push_back(rows[idx]);
        }
        const Instance& inst = find_instance(insts, picked.front().at("name").get<std::string>());
        for (const auto& p : picked) {
            for (int v : p.at("destroyed").get<std::vector<int>>()) {
                if (v < 0 || v >= inst.size()) throw ConsistencyError("trace node " + std::to_string(v) + " outside instance");
            }
        }
        svg = trace_svg(inst, picked);
    }
    auto f = open_out(a.c.out);
    f << svg;
    m.output(a.c.out);
    out << "wrote " << a.c.out << '\n';
}

std::string manifest_path(const std::string& out, bool is_dir) {
    return is_dir ? (fs::path(out) / "manifest.json").string() : out + ".manifest.json";
}

}  // namespace

std::string render_solution_svg(const std::vector<std::pair<double, double>>& coords,
                                const std::vector<std::vector<int>>& paths, int depot) {
    const double side = kView + 2 * kMargin;
    std::ostringstream os;
    os << svg_open(side, side);
    const Frame f = frame_for(coords, 0, 0);
    draw_paths(os, f, coords, paths, "edge", "#1f77b4", 1.5);
    draw_nodes(os, f, coords, depot, {});
    os << "</svg>\n";
    return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    init_logging();
    CLI::App app{"Destroy-and-repair routing solver with hyper-graph reduction", "drhg"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    const std::vector<std::string> kinds = {"tsp", "cvrp"};

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate uniform random instances");
    g->add_option("--kind", gen.kind, "tsp or cvrp")->required()->check(CLI::IsMember(kinds));
    g->add_option("--n", gen.n, "Nodes (tsp) or customers (cvrp)")->required();
    g->add_option("--count", gen.count, "Number of instances")->check(CLI::PositiveNumber);
    g->add_option("--capacity", gen.capacity, "Vehicle capacity (cvrp; default by size)")->check(CLI::NonNegativeNumber);
    add_common(g, gen.c);

    LabelArgs lab;
    auto* l = app.add_subcommand("label", "Label instances with exact or local-search tours");
    l->add_option("instances", lab.input, "Dataset file")->required()->check(CLI::ExistingFile);
    l->add_option("--mode", lab.mode, "exact, local or auto")->check(CLI::IsMember({"exact", "local", "auto"}));
    l->add_option("--max-exact-n", lab.max_exact_n, "Largest size labelled exactly")->check(CLI::Range(3, 24));
    l->add_option("--ls-rounds", lab.ls_rounds, "Local search rounds")->check(CLI::PositiveNumber);
    add_common(l, lab.c);
    add_workers(l, lab.c);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train or fine-tune a repair model");
    t->add_option("instances", tr.input, "Training dataset")->required()->check(CLI::ExistingFile);
    t->add_option("--labels", tr.labels, "Training labels")->required()->check(CLI::ExistingFile);
    t->add_option("--val", tr.val, "Validation dataset")->check(CLI::ExistingFile);
    t->add_option("--val-labels", tr.val_labels, "Validation labels")->check(CLI::ExistingFile);
    t->add_option("--ckpt", tr.ckpt, "Checkpoint to fine-tune from")->check(CLI::ExistingFile);
    t->add_option("--epochs", tr.cfg.epochs)->check(CLI::NonNegativeNumber);
    t->add_option("--batch-size", tr.cfg.batch_size)->check(CLI::PositiveNumber);
    t->add_option("--lr", tr.cfg.lr0)->check(CLI::PositiveNumber);
    t->add_option("--decay", tr.cfg.decay)->check(CLI::Range(0.0, 1.0));
    t->add_option("--k-min", tr.cfg.k_min, "Smallest hyper-graph size")->check(CLI::Range(2, 1 << 20));
    t->add_option("--k-max", tr.cfg.k_max, "Largest hyper-graph size (0: 0.8 n)")->check(CLI::NonNegativeNumber);
    t->add_option("--d-h", tr.cfg.hp.d_h)->check(CLI::PositiveNumber);
    t->add_option("--layers", tr.cfg.hp.layers)->check(CLI::PositiveNumber);
    t->add_option("--heads", tr.cfg.hp.heads)->check(CLI::PositiveNumber);
    t->add_option("--r-f", tr.cfg.hp.r_f)->check(CLI::PositiveNumber);
    t->add_option("--r-c", tr.cfg.hp.r_c)->check(CLI::PositiveNumber);
    t->add_option("--d-ff", tr.cfg.hp.d_ff)->check(CLI::PositiveNumber);
    t->add_option("--val-count", tr.cfg.validation_count)->check(CLI::PositiveNumber);
    t->add_option("--val-iters", tr.cfg.validation_iters)->check(CLI::NonNegativeNumber);
    t->add_option("--max-batches", tr.cfg.max_batches, "Batches per epoch (0: all)")->check(CLI::NonNegativeNumber);
    t->add_flag("!--no-augment", tr.cfg.augment_orientation, "Skip the reversed-orientation targets");
    add_common(t, tr.c);
    add_workers(t, tr.c);

    SolveArgs so;
    auto* s = app.add_subcommand("solve", "Run destroy-and-repair search");
    s->add_option("instances", so.input, "Dataset file")->required()->check(CLI::ExistingFile);
    s->add_option("--ckpt", so.ckpt, "Model checkpoint")->check(CLI::ExistingFile);
    s->add_option("--repair", so.repair, "model or exact (TSP, small neighbourhoods)")
        ->check(CLI::IsMember({"model", "exact"}));
    s->add_option("--iters", so.iters, "Search iterations")->check(CLI::NonNegativeNumber);
    s->add_option("--k-min", so.k_min, "Fewest destroyed nodes")->check(CLI::PositiveNumber);
    s->add_option("--k-max", so.k_max, "Most destroyed nodes (0: by problem)")->check(CLI::NonNegativeNumber);
    s->add_option("--mode", so.mode, "greedy or sample rollouts")->check(CLI::IsMember({"greedy", "sample"}));
    s->add_option("--accept", so.acceptance, "greedy or always")->check(CLI::IsMember({"greedy", "always"}));
    s->add_option("--trace", so.trace, "Directory for per-instance traces and snapshots");
    s->add_flag("--validate", so.validate, "Validate every intermediate solution");
    add_common(s, so.c);
    add_workers(s, so.c);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Compare solutions against references");
    e->add_option("solutions", ev.solutions, "Solution file")->required()->check(CLI::ExistingFile);
    e->add_option("--bks", ev.bks, "Best-known objectives (name value per line)")->check(CLI::ExistingFile);
    e->add_option("--labels", ev.labels, "Label file used as reference")->check(CLI::ExistingFile);
    e->add_option("--instances", ev.instances, "Dataset the solutions belong to")->check(CLI::ExistingFile);
    add_common(e, ev.c);

    PlotArgs pl;
    auto* p = app.add_subcommand("plot", "Draw a solution or a search trace as SVG");
    p->add_option("instances", pl.instances, "Dataset file")->required()->check(CLI::ExistingFile);
    p->add_option("solutions", pl.solutions, "Solution file")->check(CLI::ExistingFile);
    p->add_option("--trace", pl.trace, "Snapshot file written by solve --trace")->check(CLI::ExistingFile);
    p->add_option("--snapshots", pl.snapshots, "Panels in a trace plot");
    p->add_option("--name", pl.name, "Instance to draw (default: first solution)");
    add_common(p, pl.c);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& ex) {
        err << "usage error: " << ex.what() << '\n';
        if (auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front()) err << sub->help();
        return kUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        if (name == "gen") {
            Manifest m(name, *sub, gen.c.seed, args);
            cmd_gen(gen, m, out);
            m.write(manifest_path(gen.c.out, false));
        } else if (name == "label") {
            Manifest m(name, *sub, lab.c.seed, args);
            cmd_label(lab, m, out);
            m.write(manifest_path(lab.c.out, false));
        } else if (name == "train") {
            Manifest m(name, *sub, tr.c.seed, args);
            cmd_train(tr, m, out);
            m.write(manifest_path(tr.c.out, true));
        } else if (name == "solve") {
            Manifest m(name, *sub, so.c.seed, args);
            cmd_solve(so, m, out);
            m.write(manifest_path(so.c.out, false));
        } else if (name == "eval") {
            Manifest m(name, *sub, ev.c.seed, args);
            cmd_eval(ev, m, out);
            m.write(manifest_path(ev.c.out, false));
        } else if (name == "plot") {
            Manifest m(name, *sub, pl.c.seed, args);
            cmd_plot(pl, m, out);
            m.write(manifest_path(pl.c.out, false));
        }
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << '\n';
        return kUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kRuntime;
    }
    return kOk;
}

}  // namespace drhg::cli

#include "drhg/instances.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <sstream>

#include "drhg/errors.hpp"
#include "drhg/random.hpp"

namespace drhg {

void Instance::validate() const {
    if (kind == ProblemKind::Tsp) {
        if (coords.size() < 3) {
            throw ValidationError("TSP instance needs at least 3 nodes, got " +
                                  std::to_string(coords.size()));
        }
        if (!demands.empty()) throw ValidationError("TSP instance carries demands");
        return;
    }
    if (coords.size() < 3) {
        throw ValidationError("CVRP instance needs a depot and at least 2 customers");
    }
    if (demands.size() != coords.size()) {
        throw ValidationError("CVRP demand count " + std::to_string(demands.size()) +
                              " does not match node count " + std::to_string(coords.size()));
    }
    if (capacity <= 0) throw ValidationError("CVRP capacity must be positive");
    if (demands[0] != 0) throw ValidationError("depot demand must be 0");
    for (std::size_t i = 1; i < demands.size(); ++i) {
        if (demands[i] < 0) throw ValidationError("negative demand at node " + std::to_string(i));
        if (demands[i] > capacity) {
            throw ValidationError("demand of node " + std::to_string(i) + " exceeds capacity");
        }
    }
}

Instance make_tsp(std::vector<Point> coords, std::string name, DistanceKind dk) {
    Instance inst;
    inst.kind = ProblemKind::Tsp;
    inst.coords = std::move(coords);
    inst.distance_kind = dk;
    inst.name = std::move(name);
    inst.validate();
    return inst;
}

Instance make_cvrp(std::vector<Point> coords, std::vector<int> demands, int capacity,
                   std::string name, DistanceKind dk) {
    Instance inst;
    inst.kind = ProblemKind::Cvrp;
    inst.coords = std::move(coords);
    inst.demands = std::move(demands);
    inst.capacity = capacity;
    inst.distance_kind = dk;
    inst.name = std::move(name);
    inst.validate();
    return inst;
}

double euclidean(Point a, Point b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

double distance(const Instance& inst, int i, int j) {
    const int n = inst.size();
    if (i < 0 || j < 0 || i >= n || j >= n) {
        throw IndexError("node index out of range: (" + std::to_string(i) + ", " +
                         std::to_string(j) + ") for " + std::to_string(n) + " nodes");
    }
    if (i == j) return 0.0;
    const double d = euclidean(inst.coords[i], inst.coords[j]);
    switch (inst.distance_kind) {
        case DistanceKind::ExactEuclidean: return d;
        case DistanceKind::Euc2dRounded: return std::floor(d + 0.5);
        case DistanceKind::Ceil2d: return std::ceil(d);
    }
    return d;
}

std::vector<std::vector<double>> distance_matrix(const Instance& inst) {
    const int n = inst.size();
    std::vector<std::vector<double>> dm(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) dm[i][j] = dm[j][i] = distance(inst, i, j);
    }
    return dm;
}

void validate_tour(const Instance& inst, const Tour& t) {
    const int n = inst.size();
    if (static_cast<int>(t.order.size()) != n) {
        throw ValidationError("tour has " + std::to_string(t.order.size()) + " nodes, instance has " +
                              std::to_string(n));
    }
    std::vector<char> seen(n, 0);
    for (int v : t.order) {
        if (v < 0 || v >= n) throw ValidationError("tour node out of range: " + std::to_string(v));
        if (seen[v]) throw ValidationError("tour visits node " + std::to_string(v) + " twice");
        seen[v] = 1;
    }
}

double tour_length(const Instance& inst, const Tour& t) {
    validate_tour(inst, t);
    const std::size_t n = t.order.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += distance(inst, t.order[i], t.order[(i + 1) % n]);
    return total;
}

void validate_routes(const Instance& inst, const RoutePlan& plan) {
    if (inst.kind != ProblemKind::Cvrp) throw KindError("route plan requires a CVRP instance");
    const int n = inst.size();
    if (n < 2) throw ValidationError("instance has no customers");
    std::vector<char> seen(n, 0);
    for (std::size_t r = 0; r < plan.routes.size(); ++r) {
        const auto& route = plan.routes[r];
        if (route.empty()) throw ValidationError("route " + std::to_string(r) + " is empty");
        long load = 0;
        for (int v : route) {
            if (v <= 0 || v >= n) throw ValidationError("route node out of range: " + std::to_string(v));
            if (seen[v]) throw ValidationError("customer " + std::to_string(v) + " visited twice");
            seen[v] = 1;
            load += inst.demands[v];
        }
        if (load > inst.capacity) {
            throw ValidationError("route " + std::to_string(r) + " load " + std::to_string(load) +
                                  " exceeds capacity " + std::to_string(inst.capacity));
        }
    }
    for (int v = 1; v < n; ++v) {
        if (!seen[v]) throw ValidationError("customer " + std::to_string(v) + " not served");
    }
}

double route_cost(const Instance& inst, const RoutePlan& plan) {
    validate_routes(inst, plan);
    double total = 0.0;
    for (const auto& route : plan.routes) {
        total += distance(inst, 0, route.front());
        for (std::size_t i = 0; i + 1 < route.size(); ++i) total += distance(inst, route[i], route[i + 1]);
        total += distance(inst, route.back(), 0);
    }
    return total;
}

double gap(double objective, double reference) {
    if (!(reference > 0.0)) throw DomainError("gap reference must be positive");
    return (objective - reference) / reference;
}

// --- synthetic --------------------------------------------------------------

int default_capacity(int customers) {
    static constexpr std::pair<int, int> anchors[] = {
        {10, 20}, {20, 30}, {50, 40}, {100, 50}, {200, 80}, {500, 100}, {1000, 250}};
    if (customers <= anchors[0].first) return anchors[0].second;
    for (std::size_t i = 1; i < std::size(anchors); ++i) {
        const auto [n1, c1] = anchors[i];
        if (customers <= n1) {
            const auto [n0, c0] = anchors[i - 1];
            const double t = double(customers - n0) / double(n1 - n0);
            return static_cast<int>(std::lround(c0 + t * (c1 - c0)));
        }
    }
    return anchors[std::size(anchors) - 1].second;
}

Instance gen_uniform(ProblemKind kind, int n, std::uint64_t seed, const DemandConfig& demand_cfg) {
    if (kind == ProblemKind::Tsp && n < 3) throw DomainError("TSP needs n >= 3");
    if (kind == ProblemKind::Cvrp && n < 2) throw DomainError("CVRP needs at least 2 customers");
    Rng rng = make_rng(seed);
    const int nodes = kind == ProblemKind::Cvrp ? n + 1 : n;
    std::vector<Point> coords(nodes);
    for (auto& p : coords) {
        p.x = uniform01(rng);
        p.y = uniform01(rng);
    }
    const std::string name = to_string(kind) + std::to_string(n) + "_s" + std::to_string(seed);
    if (kind == ProblemKind::Tsp) return make_tsp(std::move(coords), name);

    const int cap = demand_cfg.capacity > 0 ? demand_cfg.capacity : default_capacity(n);
    if (demand_cfg.min_demand < 0 || demand_cfg.max_demand < demand_cfg.min_demand ||
        demand_cfg.max_demand > cap) {
        throw DomainError("invalid demand configuration");
    }
    std::vector<int> demands(nodes, 0);
    for (int i = 1; i < nodes; ++i) demands[i] = uniform_int(rng, demand_cfg.min_demand, demand_cfg.max_demand);
    return make_cvrp(std::move(coords), std::move(demands), cap, name);
}

std::vector<Instance> gen_uniform_batch(ProblemKind kind, int n, int count, std::uint64_t seed,
                                        const DemandConfig& demand_cfg) {
    if (count < 0) throw DomainError("negative instance count");
    std::vector<Instance> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        // Per-instance stream so instance i does not depend on the count.
        const std::uint64_t s = make_rng(seed, {static_cast<std::uint64_t>(i)})();
        Instance inst = gen_uniform(kind, n, s, demand_cfg);
        inst.name = to_string(kind) + std::to_string(n) + "_" + std::to_string(seed) + "_" + std::to_string(i);
        out.push_back(std::move(inst));
    }
    return out;
}

// --- TSPLIB / CVRPLIB ---------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t b = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > b) out.push_back(s.substr(b, i - b));
    }
    return out;
}

long parse_long(std::string_view tok, std::size_t line) {
    long v = 0;
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || p != end) throw ParseError("expected integer, got '" + std::string(tok) + "'", line);
    return v;
}

double parse_double(std::string_view tok, std::size_t line) {
    double v = 0;
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || p != end) throw ParseError("expected number, got '" + std::string(tok) + "'", line);
    return v;
}

struct RawVrpFile {
    std::map<std::string, std::string> header;
    std::map<long, Point> coords;
    std::map<long, long> demands;
    std::vector<long> depots;
    bool has_coords = false;
    bool has_demands = false;
    bool has_depots = false;
};

RawVrpFile read_raw(std::string_view text) {
    RawVrpFile raw;
    enum class Section { Header, Coords, Demands, Depots, Skip } section = Section::Header;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        const std::string head = upper(split_ws(line).front());
        if (head == "EOF") break;
        if (head == "NODE_COORD_SECTION") { section = Section::Coords; raw.has_coords = true; continue; }
        if (head == "DEMAND_SECTION") { section = Section::Demands; raw.has_demands = true; continue; }
        if (head == "DEPOT_SECTION") { section = Section::Depots; raw.has_depots = true; continue; }
        if (head.ends_with("_SECTION")) { section = Section::Skip; continue; }

        const auto colon = line.find(':');
        const bool alpha = std::isalpha(static_cast<unsigned char>(line.front()));
        if (alpha && colon != std::string_view::npos) {
            raw.header[upper(trim(line.substr(0, colon)))] = std::string(trim(line.substr(colon + 1)));
            section = Section::Header;
            continue;
        }
        const auto toks = split_ws(line);
        switch (section) {
            case Section::Header:
                throw ParseError("unexpected line '" + std::string(line) + "'", line_no);
            case Section::Coords: {
                if (toks.size() != 3) throw ParseError("coordinate line needs 3 fields", line_no);
                const long id = parse_long(toks[0], line_no);
                if (!raw.coords.emplace(id, Point{parse_double(toks[1], line_no), parse_double(toks[2], line_no)}).second) {
                    throw ParseError("duplicate node id " + std::to_string(id), line_no);
                }
                break;
            }
            case Section::Demands: {
                if (toks.size() != 2) throw ParseError("demand line needs 2 fields", line_no);
                raw.demands[parse_long(toks[0], line_no)] = parse_long(toks[1], line_no);
                break;
            }
            case Section::Depots: {
                for (auto t : toks) {
                    const long id = parse_long(t, line_no);
                    if (id == -1) { section = Section::Skip; break; }
                    raw.depots.push_back(id);
                }
                break;
            }
            case Section::Skip: break;
        }
    }
    return raw;
}

DistanceKind distance_kind_from(const RawVrpFile& raw) {
    const auto it = raw.header.find("EDGE_WEIGHT_TYPE");
    if (it == raw.header.end()) throw ParseError("missing EDGE_WEIGHT_TYPE", 0);
    const std::string t = upper(it->second);
    if (t == "EUC_2D") return DistanceKind::Euc2dRounded;
    if (t == "CEIL_2D") return DistanceKind::Ceil2d;
    if (t == "EXACT_2D") return DistanceKind::ExactEuclidean;  // toolkit extension
    throw UnsupportedFormatError("unsupported EDGE_WEIGHT_TYPE: " + it->second);
}

std::size_t dimension_of(const RawVrpFile& raw) {
    const auto it = raw.header.find("DIMENSION");
    if (it == raw.header.end()) throw ParseError("missing DIMENSION", 0);
    const long d = parse_long(trim(it->second), 0);
    if (d <= 0) throw ParseError("DIMENSION must be positive", 0);
    return static_cast<std::size_t>(d);
}

std::string name_of(const RawVrpFile& raw) {
    const auto it = raw.header.find("NAME");
    return it == raw.header.end() ? std::string{} : it->second;
}

}  // namespace

Instance parse_tsplib(std::string_view text) {
    const RawVrpFile raw = read_raw(text);
    if (auto it = raw.header.find("TYPE"); it != raw.header.end() && upper(it->second) != "TSP") {
        throw UnsupportedFormatError("expected TYPE TSP, got " + it->second);
    }
    const DistanceKind dk = distance_kind_from(raw);
    const std::size_t dim = dimension_of(raw);
    if (!raw.has_coords) throw ParseError("missing NODE_COORD_SECTION", 0);
    if (raw.coords.size() != dim) {
        throw ParseError("NODE_COORD_SECTION has " + std::to_string(raw.coords.size()) +
                         " nodes, DIMENSION is " + std::to_string(dim), 0);
    }
    std::vector<Point> coords;
    coords.reserve(dim);
    for (const auto& [id, p] : raw.coords) coords.push_back(p);
    return make_tsp(std::move(coords), name_of(raw), dk);
}

Instance parse_cvrplib(std::string_view text) {
    const RawVrpFile raw = read_raw(text);
    const DistanceKind dk = distance_kind_from(raw);
    const std::size_t dim = dimension_of(raw);
    if (!raw.has_coords) throw ParseError("missing NODE_COORD_SECTION", 0);
    if (!raw.has_demands) throw ParseError("missing DEMAND_SECTION", 0);
    if (!raw.has_depots) throw ParseError("missing DEPOT_SECTION", 0);
    const auto cap_it = raw.header.find("CAPACITY");
    if (cap_it == raw.header.end()) throw ParseError("missing CAPACITY", 0);
    const long capacity = parse_long(trim(cap_it->second), 0);
    if (raw.depots.size() != 1) throw ParseError("expected exactly one depot", 0);
    if (raw.coords.size() != dim || raw.demands.size() != dim) {
        throw ParseError("section sizes do not match DIMENSION " + std::to_string(dim), 0);
    }
    const long depot = raw.depots.front();
    if (!raw.coords.contains(depot) || !raw.demands.contains(depot)) {
        throw ParseError("depot id " + std::to_string(depot) + " has no coordinates", 0);
    }
    if (raw.demands.at(depot) != 0) throw ValidationError("depot demand must be 0");

    std::vector<Point> coords{raw.coords.at(depot)};
    std::vector<int> demands{0};
    for (const auto& [id, p] : raw.coords) {
        if (id == depot) continue;
        const auto d = raw.demands.find(id);
        if (d == raw.demands.end()) throw ParseError("no demand for node " + std::to_string(id), 0);
        coords.push_back(p);
        demands.push_back(static_cast<int>(d->second));
    }
    return make_cvrp(std::move(coords), std::move(demands), static_cast<int>(capacity), name_of(raw), dk);
}

Instance parse_vrp_file(std::string_view text) {
    const RawVrpFile raw = read_raw(text);
    const auto it = raw.header.find("TYPE");
    if (it != raw.header.end() && upper(it->second) == "CVRP") return parse_cvrplib(text);
    return parse_tsplib(text);
}

Instance load_instance_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_vrp_file(ss.str());
}

std::string write_tsplib(const Instance& inst) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "NAME : " << (inst.name.empty() ? "unnamed" : inst.name) << '\n';
    out << "TYPE : " << (inst.kind == ProblemKind::Tsp ? "TSP" : "CVRP") << '\n';
    out << "DIMENSION : " << inst.size() << '\n';
    out << "EDGE_WEIGHT_TYPE : ";
    switch (inst.distance_kind) {
        case DistanceKind::ExactEuclidean: out << "EXACT_2D\n"; break;
        case DistanceKind::Euc2dRounded: out << "EUC_2D\n"; break;
        case DistanceKind::Ceil2d: out << "CEIL_2D\n"; break;
    }
    if (inst.kind == ProblemKind::Cvrp) out << "CAPACITY : " << inst.capacity << '\n';
    out << "NODE_COORD_SECTION\n";
    for (int i = 0; i < inst.size(); ++i) out << i + 1 << ' ' << inst.coords[i].x << ' ' << inst.coords[i].y << '\n';
    if (inst.kind == ProblemKind::Cvrp) {
        out << "DEMAND_SECTION\n";
        for (int i = 0; i < inst.size(); ++i) out << i + 1 << ' ' << inst.demands[i] << '\n';
        out << "DEPOT_SECTION\n1\n-1\n";
    }
    out << "EOF\n";
    return out.str();
}

// --- JSON-lines ---------------------------------------------------------------

std::string to_string(ProblemKind kind) { return kind == ProblemKind::Tsp ? "tsp" : "cvrp"; }

ProblemKind problem_kind_from_string(std::string_view s) {
    const std::string u = upper(s);
    if (u == "TSP") return ProblemKind::Tsp;
    if (u == "CVRP") return ProblemKind::Cvrp;
    throw KindError("unknown problem kind '" + std::string(s) + "'");
}

nlohmann::json instance_to_json(const Instance& inst) {
    nlohmann::json j;
    j["name"] = inst.name;
    j["kind"] = to_string(inst.kind);
    auto coords = nlohmann::json::array();
    for (const auto& p : inst.coords) coords.push_back({p.x, p.y});
    j["coords"] = std::move(coords);
    if (inst.kind == ProblemKind::Cvrp) {
        j["demands"] = inst.demands;
        j["capacity"] = inst.capacity;
    }
    if (inst.distance_kind == DistanceKind::Euc2dRounded) j["distance"] = "EUC_2D";
    if (inst.distance_kind == DistanceKind::Ceil2d) j["distance"] = "CEIL_2D";
    return j;
}

Instance instance_from_json(const nlohmann::json& j) {
    try {
        const ProblemKind kind = problem_kind_from_string(j.at("kind").get<std::string>());
        std::vector<Point> coords;
        for (const auto& c : j.at("coords")) coords.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        DistanceKind dk = DistanceKind::ExactEuclidean;
        if (j.contains("distance")) {
            const auto d = j.at("distance").get<std::string>();
            if (d == "EUC_2D") dk = DistanceKind::Euc2dRounded;
            else if (d == "CEIL_2D") dk = DistanceKind::Ceil2d;
            else if (d != "EXACT") throw UnsupportedFormatError("unknown distance kind " + d);
        }
        const std::string name = j.value("name", std::string{});
        if (kind == ProblemKind::Tsp) return make_tsp(std::move(coords), name, dk);
        return make_cvrp(std::move(coords), j.at("demands").get<std::vector<int>>(), j.at("capacity").get<int>(),
                         name, dk);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad instance record: ") + e.what(), 0);
    }
}

std::vector<Instance> read_dataset(std::istream& in) {
    std::vector<Instance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(instance_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), line_no);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

std::vector<Instance> read_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<Instance>& instances) {
    for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

void write_dataset_file(const std::string& path, const std::vector<Instance>& instances) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_dataset(out, instances);
}

std::map<std::string, double> read_bks(std::istream& in) {
    std::map<std::string, double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto toks = split_ws(t);
        if (toks.size() != 2) throw ParseError("BKS line needs name and objective", line_no);
        out[std::string(toks[0])] = parse_double(toks[1], line_no);
    }
    return out;
}

std::map<std::string, double> read_bks_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_bks(in);
}

}  // namespace drhg

#pragma once

// Batch front end: YAML run configs in, JSON result documents and CSV side
// files out. Kept header-only so the test and acceptance binaries can drive
// runs in-process.

#include <yaml-cpp/yaml.h>

#include <boost/crc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ballistic_det.hpp"
#include "bolza.hpp"
#include "stochastic_ctrl.hpp"

namespace ballistic::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int exit_ok = 0;
inline constexpr int exit_error = 1;
inline constexpr int exit_uncertified = 2;

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c = {"cost", "transport", "interpolate", "map",    "hopf-lax",
                                               "hjb",  "bolza",     "verify",      "eulerian"};
    return c;
}

// A YAML mapping plus where it came from, so every complaint carries a line.
class Section {
public:
    Section(YAML::Node node, std::string origin, std::string path)
        : node_(std::move(node)), origin_(std::move(origin)), path_(std::move(path)) {}

    const std::string& origin() const { return origin_; }
    bool has(const std::string& key) const { return node_.IsMap() && node_[key].IsDefined() && !node_[key].IsNull(); }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        int line = node_.Mark().line;
        if (node_.IsMap())
            for (auto it = node_.begin(); it != node_.end(); ++it)
                if (it->first.Scalar() == key) line = it->first.Mark().line;
        throw Error(ErrorKind::parse_error, origin_ + ":" + std::to_string(line + 1) + ": " + where(key) + ": " + msg);
    }

    // rejects keys outside `allowed`, pointing at the offending line
    void allow(std::initializer_list<const char*> allowed) const {
        if (!node_.IsMap()) return;
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!ok.count(it->first.Scalar())) {
                std::string names;
                for (const auto& a : ok) names += (names.empty() ? "" : ", ") + a;
                throw Error(ErrorKind::parse_error, origin_ + ":" + std::to_string(it->first.Mark().line + 1) +
                                                        ": unknown key '" + where(it->first.Scalar()) +
                                                        "' (expected one of: " + names + ")");
            }
    }

    double num(const std::string& key) const {
        require(key);
        return convert<double>(key, "a number");
    }
    double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }
    int integer(const std::string& key) const {
        require(key);
        return convert<int>(key, "an integer");
    }
    int integer(const std::string& key, int fallback) const { return has(key) ? integer(key) : fallback; }
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? convert<std::uint64_t>(key, "a non-negative integer") : fallback;
    }
    bool flag(const std::string& key, bool fallback) const { return has(key) ? convert<bool>(key, "true or false") : fallback; }
    std::string str(const std::string& key) const {
        require(key);
        return convert<std::string>(key, "a string");
    }
    std::string str(const std::string& key, const std::string& fallback) const { return has(key) ? str(key) : fallback; }

    // a scalar is read as a one-entry list
    std::vector<double> list(const std::string& key) const {
        require(key);
        const YAML::Node n = node_[key];
        if (n.IsScalar()) return {convert<double>(key, "a number")};
        if (!n.IsSequence()) fail(key, "expected a number or a list of numbers");
        std::vector<double> out;
        for (const auto& e : n) {
            try {
                out.push_back(e.as<double>());
            } catch (const YAML::Exception&) {
                fail(key, "list entry '" + e.Scalar() + "' is not a number");
            }
        }
        if (out.empty()) fail(key, "empty list");
        return out;
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
        return has(key) ? list(key) : fallback;
    }

    std::string choice(const std::string& key, std::initializer_list<const char*> options,
                       std::optional<std::string> fallback = std::nullopt) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            require(key);
        }
        std::string v = str(key);
        for (const char* o : options)
            if (v == o) return v;
        std::string names;
        for (const char* o : options) names += std::string(names.empty() ? "" : ", ") + o;
        fail(key, "'" + v + "' is not one of: " + names);
    }

    Section sub(const std::string& key) const {
        require(key);
        if (!node_[key].IsMap()) fail(key, "expected a block of key: value entries");
        return Section(node_[key], origin_, where(key));
    }
    std::optional<Section> opt_sub(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return sub(key);
    }

private:
    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    void require(const std::string& key) const {
        if (!has(key)) fail(key, "missing required key");
    }
    template <class T>
    T convert(const std::string& key, const char* what) const {
        try {
            return node_[key].as<T>();
        } catch (const YAML::Exception&) {
            fail(key, std::string("expected ") + what);
        }
    }

    YAML::Node node_;
    std::string origin_, path_;
};

struct RunOptions {
    std::string config_path;
    std::string out_dir;  // empty: the config's `output` key, else ./out
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
};

// Parsed, validated run configuration.
struct RunConfig {
    std::string command;
    fs::path config_path, base_dir;
    std::string text;
    YAML::Node root;
    double T = 1.0;
    Sense sense = Sense::min;
    std::uint64_t seed = 0;
    std::optional<double> tol;
    fs::path out_dir;
    std::vector<fs::path> inputs;  // measure files, in config order

    Section top() const { return Section(root, config_path.filename().string(), ""); }
};

inline std::string read_text(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorKind::invalid_input, "cannot read " + p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline RunConfig load_config(const RunOptions& opt) {
    RunConfig cfg;
    cfg.config_path = opt.config_path;
    if (opt.config_path.empty()) throw Error(ErrorKind::invalid_input, "no config given; pass --config <path>");
    if (!fs::exists(cfg.config_path)) throw Error(ErrorKind::invalid_input, "config file not found: " + opt.config_path);
    cfg.base_dir = cfg.config_path.parent_path();
    cfg.text = read_text(cfg.config_path);
    const std::string origin = cfg.config_path.filename().string();
    try {
        cfg.root = YAML::Load(cfg.text);
    } catch (const YAML::ParserException& e) {
        throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!cfg.root.IsDefined() || cfg.root.IsNull())
        throw Error(ErrorKind::invalid_input, origin + ": empty config; expected at least `command: <name>`");
    if (!cfg.root.IsMap()) throw Error(ErrorKind::parse_error, origin + ":1: top level must be a block of key: value entries");
    Section top = cfg.top();
    top.allow({"command", "T", "sense", "seed", "output", "tolerance", "lagrangian", "measures", "cost", "transport",
               "grid", "data", "lattice", "bolza", "map", "eulerian", "verify", "expect"});
    std::vector<const char*> names;
    for (const auto& c : commands()) names.push_back(c.c_str());
    cfg.command = top.str("command");
    if (std::find(commands().begin(), commands().end(), cfg.command) == commands().end()) {
        std::string all;
        for (const auto& c : commands()) all += (all.empty() ? "" : ", ") + c;
        top.fail("command", "unknown command '" + cfg.command + "' (expected one of: " + all + ")");
    }
    cfg.T = top.num("T", 1.0);
    if (!(cfg.T > 0.0)) top.fail("T", "horizon must be positive");
    cfg.sense = top.choice("sense", {"min", "max"}, "min") == "max" ? Sense::max : Sense::min;
    cfg.seed = opt.seed ? *opt.seed : top.u64("seed", 0);
    if (opt.tol) cfg.tol = opt.tol;
    else if (top.has("tolerance")) cfg.tol = top.num("tolerance");
    if (cfg.tol && !(*cfg.tol > 0.0)) throw Error(ErrorKind::invalid_input, "tolerance must be positive");
    cfg.out_dir = !opt.out_dir.empty() ? fs::path(opt.out_dir) : top.has("output") ? cfg.base_dir / top.str("output") : fs::path("out");
    if (auto m = top.opt_sub("measures")) {
        m->allow({"source", "target"});
        for (const char* k : {"source", "target"})
            if (m->has(k)) {
                fs::path p = cfg.base_dir / m->str(k);
                if (!fs::exists(p)) m->fail(k, "measure file not found: " + p.string());
                cfg.inputs.push_back(p);
            }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Block readers.

inline ConvexTerm term_from(const Section& s, const std::string& key, const std::vector<double>& params) {
    std::string kind = s.choice(key, {"zero", "quadratic", "power", "linear"});
    auto need = [&](std::size_t k) {
        if (params.size() != k) s.fail("params", kind + " term takes " + std::to_string(k) + " parameter(s)");
    };
    if (kind == "zero") return ConvexTerm::zero();
    if (kind == "quadratic") return need(1), ConvexTerm::quadratic(params[0]);
    if (kind == "power") return need(1), ConvexTerm::power(params[0]);
    return ConvexTerm::linear(params);
}

inline LagrangianSpec lagrangian_from(const RunConfig& cfg) {
    Section L = cfg.top().sub("lagrangian");
    L.allow({"family", "params", "dim", "potential", "check"});
    const int d = L.integer("dim", 1);
    if (d < 1) L.fail("dim", "dimension must be at least 1");
    std::string fam = L.choice("family", {"quadratic-free", "harmonic", "power-kinetic", "state-potential"});
    auto p = L.list("params", {});
    auto need = [&](std::size_t k) {
        if (p.size() != k) L.fail("params", fam + " takes " + std::to_string(k) + " parameter(s), got " + std::to_string(p.size()));
    };
    try {
        if (fam == "quadratic-free") return need(0), LagrangianSpec::quadratic_free(d);
        if (fam == "harmonic") return need(2), LagrangianSpec::harmonic(p[0], p[1], d);
        if (fam == "power-kinetic") return need(1), LagrangianSpec::power_kinetic(p[0], d);
        return LagrangianSpec::state_potential(term_from(L, "potential", p), d);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::parse_error) throw;
        L.fail("params", e.what());
    }
}

inline std::optional<AssumptionProfile> profile_from(const RunConfig& cfg) {
    Section L = cfg.top().sub("lagrangian");
    std::string c = L.choice("check", {"none", "A0", "A123", "B123"}, "none");
    if (c == "A0") return AssumptionProfile::A0;
    if (c == "A123") return AssumptionProfile::A123;
    if (c == "B123") return AssumptionProfile::B123;
    return std::nullopt;
}

inline DiscreteMeasure measure_from(const RunConfig& cfg, const char* key, SpaceTag want) {
    Section m = cfg.top().sub("measures");
    fs::path p = cfg.base_dir / m.str(key);
    auto mu = from_file(p.string());
    if (mu.tag() != want)
        m.fail(key, std::string("measure in ") + p.filename().string() + " is tagged " + to_string(mu.tag()) + ", expected " +
                        to_string(want));
    return mu;
}

// data: {kind: quadratic|linear|zero, coef, center, slope}
inline std::function<double(const Point&)> data_from(const Section& top, int dim) {
    Section D = top.sub("data");
    D.allow({"kind", "coef", "center", "slope"});
    std::string kind = D.choice("kind", {"zero", "quadratic", "linear"});
    auto vec = [&](const char* key) {
        auto v = D.list(key, std::vector<double>(dim, 0.0));
        if (static_cast<int>(v.size()) != dim) D.fail(key, "expected " + std::to_string(dim) + " entries");
        return v;
    };
    if (kind == "zero") return [](const Point&) { return 0.0; };
    if (kind == "linear") {
        Point s = vec("slope");
        return [s](const Point& x) { return dot(s, x); };
    }
    double c = D.num("coef", 1.0);
    Point m = vec("center");
    return [c, m](const Point& x) { return 0.5 * c * norm2(axpy(-1.0, m, x)); };
}

inline ControlSet controls_from(const Section& lat) {
    ControlSet B{lat.num("b_max"), lat.num("db")};
    try {
        B.validate();
    } catch (const Error& e) {
        lat.fail("b_max", e.what());
    }
    return B;
}

// lattice: {lo, dx, n, K, b_max, db, noise} or {cover: [a, b], K, b_max, db}
inline Lattice lattice_from(const RunConfig& cfg, ControlSet& B) {
    Section s = cfg.top().sub("lattice");
    s.allow({"lo", "dx", "n", "K", "b_max", "db", "noise", "cover"});
    B = controls_from(s);
    const int K = s.integer("K");
    try {
        if (s.has("cover")) {
            auto ab = s.list("cover");
            if (ab.size() != 2 || !(ab[0] <= ab[1])) s.fail("cover", "expected [a, b] with a <= b");
            return Lattice::covering(ab[0], ab[1], cfg.T, K, B);
        }
        Lattice lat{s.num("lo"), s.num("dx"), s.integer("n"), cfg.T, K, s.flag("noise", true)};
        lat.validate(B);
        return lat;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::parse_error) throw;
        s.fail("K", e.what());
    }
}

// ---------------------------------------------------------------------------
// Result documents.

inline json num(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : v > 0 ? "inf" : "-inf";
}

inline json point_json(const Point& p) {
    json a = json::array();
    for (double c : p) a.push_back(num(c));
    return a;
}

class Report {
public:
    explicit Report(fs::path out) : out_(std::move(out)) {}

    void value(const std::string& name, double v) { values_[name] = num(v); }
    void value(const std::string& name, json v) { values_[name] = std::move(v); }
    void gap(const std::string& name, double v) { gaps_[name] = num(v); }
    void note(std::string n) { notes_.push_back(std::move(n)); }

    // `covers` names the values this certificate vouches for; they are flagged
    // in the document when it fails.
    void certify(const std::string& name, bool ok, std::vector<std::string> covers = {}, std::string detail = "") {
        json c = {{"name", name}, {"certified", ok}, {"values", covers}};
        if (!detail.empty()) c["detail"] = detail;
        certs_.push_back(std::move(c));
        if (!ok) {
            flags_.insert(name);
            for (auto& v : covers) flags_.insert(v);
        }
    }

    void file(const std::string& name, const std::string& content) {
        std::ofstream f(out_ / name, std::ios::binary);
        if (!f) throw Error(ErrorKind::invalid_input, "cannot write " + (out_ / name).string());
        f << content;
        files_.push_back(name);
    }

    bool certified() const { return flags_.empty(); }

    json finish(json head) const {
        head["values"] = values_;
        head["gaps"] = gaps_;
        head["certificates"] = certs_;
        head["flags"] = json(std::vector<std::string>(flags_.begin(), flags_.end()));
        head["certified"] = certified();
        head["files"] = files_;
        head["notes"] = notes_;
        return head;
    }

private:
    fs::path out_;
    json values_ = json::object(), gaps_ = json::object(), certs_ = json::array();
    std::set<std::string> flags_;
    std::vector<std::string> files_, notes_;
};

inline std::string digest(const RunConfig& cfg) {
    boost::crc_32_type crc;
    auto feed = [&](const std::string& s) { crc.process_bytes(s.data(), s.size()); };
    feed(cfg.text);
    for (const auto& p : cfg.inputs) feed(read_text(p));
    std::ostringstream o;
    o << "crc32:" << std::hex;
    o.width(8);
    o.fill('0');
    o << crc.checksum();
    return o.str();
}

inline std::string plan_csv(const TransportPlan& p, const DiscreteMeasure& src, const DiscreteMeasure& tgt) {
    std::ostringstream o;
    o.precision(17);
    o << "i,j,source,target,mass\n";
    for (auto [i, j] : p.support(0.0))
        o << i << "," << j << "," << point_str(src.atom(i)) << "," << point_str(tgt.atom(j)) << "," << p.coupling(i, j) << "\n";
    return o.str();
}

inline json plan_json(const TransportPlan& p) {
    json a = json::array();
    for (auto [i, j] : p.support(0.0)) a.push_back({{"i", i}, {"j", j}, {"mass", num(p.coupling(i, j))}});
    return a;
}

inline std::string weights_csv(const Lattice& lat, const std::vector<double>& w, const char* col) {
    std::ostringstream o;
    o.precision(17);
    o << "x," << col << "\n";
    for (int i = 0; i < lat.n; ++i) o << lat.x(i) << "," << w[i] << "\n";
    return o.str();
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// ---------------------------------------------------------------------------
// Commands.

inline void run_cost(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    Section c = cfg.top().sub("cost");
    c.allow({"v", "y", "x", "steps"});
    auto dimmed = [&](const char* key) {
        auto p = c.list(key);
        if (static_cast<int>(p.size()) != L.dim) c.fail(key, "expected " + std::to_string(L.dim) + " entries");
        return p;
    };
    Point x = dimmed("x");
    if (c.has("v") == c.has("y")) c.fail("v", "give exactly one of v (ballistic cost) or y (fixed-end cost)");
    if (c.has("y")) {
        auto r = fixed_end_cost(L, dimmed("y"), x, cfg.T);
        rep.value("kind", json("fixed-end"));
        rep.value("value", r.value.raw());
        rep.value("start_momentum", point_json(r.start_momentum));
        std::ostringstream o;
        o.precision(17);
        o << "k,x\n";
        for (std::size_t k = 0; k < r.path.size(); ++k) o << k << "," << point_str(r.path[k]) << "\n";
        rep.file("path.csv", o.str());
        return;
    }
    Point v = dimmed("v");
    auto r = ballistic_cost(L, v, x, cfg.T);
    rep.value("kind", json("ballistic"));
    rep.value("value", r.value.raw());
    rep.value("y_star", point_json(r.y_star));
    rep.value("end_momentum", point_json(r.end_momentum));
    if (r.value.is_finite() && !r.y_star.empty()) {
        auto H = hamiltonian(L);
        auto tr = hamiltonian_flow(H, {r.y_star, v, 0.0}, cfg.T, c.integer("steps", 200));
        rep.value("flow_landing_error", max_abs_diff(tr.points.back().x, x));
        rep.file("trajectory.csv", trajectory_csv(tr, H));
    }
}

inline void run_transport(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    Section t = cfg.top().has("transport") ? cfg.top().sub("transport") : Section(YAML::Node(YAML::NodeType::Map), "", "transport");
    t.allow({"cost"});
    std::string kind = t.choice("cost", {"ballistic", "fixed-end", "inner-product", "stochastic"}, "ballistic");
    const double tol = cfg.tol.value_or(1e-9);
    rep.value("cost", json(kind));
    if (kind == "stochastic") {
        auto nu0 = measure_from(cfg, "source", SpaceTag::state), nuT = measure_from(cfg, "target", SpaceTag::state);
        ControlSet B;
        Lattice lat = lattice_from(cfg, B);
        StochasticOptions so;
        if (cfg.tol) so.gap_tol = *cfg.tol;
        auto r = mt_cost(L, lat.weights_of(nu0), lat.weights_of(nuT), lat, B, so);
        rep.value("value", r.value);
        rep.value("dual_value", r.dual_value);
        rep.value("law_mismatch", r.law_mismatch);
        rep.value("lp_iterations", json(r.lp_iterations));
        rep.value("lattice", json{{"lo", lat.lo}, {"dx", lat.dx}, {"n", lat.n}, {"K", lat.K}, {"b_max", B.b_max}, {"db", B.db}});
        rep.gap("primal_dual", r.gap);
        rep.certify("lattice duality", r.certified, {"value", "dual_value"}, r.status);
        rep.file("potential.csv", weights_csv(lat, r.potential, "f"));
        return;
    }
    SpaceTag src_tag = kind == "fixed-end" ? SpaceTag::state : SpaceTag::costate;
    auto src = measure_from(cfg, "source", src_tag), tgt = measure_from(cfg, "target", SpaceTag::state);
    CostMatrix C;
    if (kind == "ballistic") C = ballistic_table(BallisticKernel(L, cfg.T), src, tgt).cost;
    else if (kind == "fixed-end") C = fixed_end_matrix(FixedEndKernel(L, cfg.T), src, tgt, "fixed-end c_T");
    else C = inner_product_cost(src, tgt);
    Sense sense = kind == "fixed-end" ? Sense::min : cfg.sense;
    auto p = solve_kantorovich(C, src, tgt, sense);
    rep.value("sense", json(to_string(sense)));
    rep.value("value", p.value);
    rep.value("dual_value", p.dual_value);
    rep.value("plan", plan_json(p));
    rep.value("pivots", json(p.pivots));
    rep.gap("primal_dual", std::abs(p.value - p.dual_value));
    const double dv = dual_feasibility_violation(p, C), sv = slackness_violation(p, C), mv = marginal_violation(p, src, tgt);
    rep.value("dual_feasibility_violation", dv);
    rep.value("slackness_violation", sv);
    rep.value("marginal_violation", mv);
    const double scale = 1.0 + std::abs(p.value);
    rep.certify("kantorovich duality",
                std::abs(p.value - p.dual_value) <= tol * scale && dv <= tol * scale && sv <= tol * scale && mv <= tol,
                {"value", "dual_value", "plan"});
    rep.file("plan.csv", plan_csv(p, src, tgt));
    std::ostringstream pot;
    pot.precision(17);
    pot << "side,index,atom,potential\n";
    for (std::size_t i = 0; i < src.size(); ++i) pot << "source," << i << "," << point_str(src.atom(i)) << "," << p.dual_source[i] << "\n";
    for (std::size_t j = 0; j < tgt.size(); ++j) pot << "target," << j << "," << point_str(tgt.atom(j)) << "," << p.dual_target[j] << "\n";
    rep.file("potentials.csv", pot.str());
}

inline void run_stochastic_interpolate(const RunConfig& cfg, const LagrangianSpec& L, Report& rep) {
    auto mu0 = measure_from(cfg, "source", SpaceTag::costate), nuT = measure_from(cfg, "target", SpaceTag::state);
    ControlSet B;
    Lattice lat = lattice_from(cfg, B);
    StochasticOptions so;
    if (cfg.tol) so.gap_tol = *cfg.tol;
    StochasticBallisticResult r;
    if (cfg.sense == Sense::min) {
        std::vector<double> w;
        try {
            w = lat.weights_of(nuT);
        } catch (const Error&) {
            w = lat.deposit(nuT);
            rep.note("target atoms split linearly onto neighbouring lattice nodes");
        }
        r = ballistic_min_stoch(L, mu0, w, lat, B, so);
    } else {
        r = ballistic_max_stoch(L, mu0, nuT, lat, B, so);
    }
    rep.value("model", json("lattice"));
    rep.value("sense", json(to_string(cfg.sense)));
    rep.value("value", r.value);
    rep.value("certificate", r.certificate);
    rep.value("lower", r.lower);
    rep.value("upper", r.upper);
    rep.value("lp_iterations", json(r.lp_iterations));
    rep.value("lattice", json{{"lo", lat.lo}, {"dx", lat.dx}, {"n", lat.n}, {"K", lat.K}, {"b_max", B.b_max}, {"db", B.db}});
    rep.gap("bracket", r.gap);
    for (const auto& n : r.notes) rep.note(n);
    rep.certify(cfg.sense == Sense::min ? "lattice duality" : "lattice bracket", r.certified,
                {"value", "certificate", "lower", "upper"}, r.status);
    rep.file("interpolant.csv", weights_csv(lat, r.interpolant, "weight"));
    std::ostringstream pot;
    pot.precision(17);
    if (cfg.sense == Sense::min) {
        rep.file("potential.csv", weights_csv(lat, r.potential, "f"));
    } else {
        pot << "x,g\n";
        for (std::size_t j = 0; j < nuT.size(); ++j) pot << nuT.atom(j)[0] << "," << r.potential[j] << "\n";
        rep.file("potential.csv", pot.str());
    }
}

inline void run_interpolate(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    if (cfg.top().has("lattice")) return run_stochastic_interpolate(cfg, L, rep);
    auto mu0 = measure_from(cfg, "source", SpaceTag::costate), nuT = measure_from(cfg, "target", SpaceTag::state);
    const double tol = cfg.tol.value_or(1e-7);
    auto c = cfg.sense == Sense::min ? interpolate_min(L, mu0, nuT, cfg.T, std::nullopt, tol)
                                     : interpolate_max(L, mu0, nuT, cfg.T, tol);
    rep.value("model", json("deterministic"));
    rep.value("sense", json(to_string(cfg.sense)));
    rep.value("direct_value", c.direct_value);
    if (cfg.sense == Sense::min) rep.value("three_marginal_value", c.three_marginal_value);
    rep.value("w_part", c.w_part);
    rep.value("c_part", c.c_part);
    rep.value("multivalued", json(c.multivalued));
    rep.gap("interpolation", c.gap);
    rep.certify("interpolation", c.certified, {"direct_value", "w_part", "c_part"}, c.hint);
    rep.file("interpolant.txt", to_text(c.interpolant));
}

inline void run_map(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    auto mu0 = measure_from(cfg, "source", SpaceTag::costate), nuT = measure_from(cfg, "target", SpaceTag::state);
    int steps = 1000;
    if (auto m = cfg.top().opt_sub("map")) {
        m->allow({"steps"});
        steps = m->integer("steps", steps);
    }
    const double tol = cfg.tol.value_or(1e-3);
    auto r = cfg.sense == Sense::min ? optimal_map_min(L, mu0, nuT, cfg.T, steps) : optimal_map_max(L, mu0, nuT, cfg.T, steps);
    rep.value("sense", json(to_string(cfg.sense)));
    rep.value("transported_cost", r.transported_cost);
    rep.value("lp_value", r.lp_value);
    rep.value("max_landing_error", r.max_landing_error);
    rep.value("single_valued", json(r.single_valued));
    if (cfg.sense == Sense::max) rep.value("inverse_error", r.inverse_error);
    rep.gap("cost", r.cost_error);
    rep.certify("push-forward hits target", r.hits_target, {"max_landing_error"});
    rep.certify("transported cost matches plan", r.cost_error <= tol, {"transported_cost"});
    std::ostringstream o;
    o.precision(17);
    o << "from,to,weight\n";
    for (const auto& a : r.arrows) o << point_str(a.from) << "," << point_str(a.to) << "," << a.weight << "\n";
    rep.file("arrows.csv", o.str());
    rep.file("pushed.txt", to_text(r.pushed));
}

inline void run_hopf_lax(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    Section top = cfg.top();
    Section g = top.sub("grid");
    g.allow({"lo", "hi", "n", "times", "direction"});
    const int n = g.integer("n");
    if (n < 2) g.fail("n", "grid needs at least 2 points per axis");
    const double lo = g.num("lo"), hi = g.num("hi");
    if (!(hi > lo)) g.fail("hi", "need hi > lo");
    std::string dir = g.choice("direction", {"forward", "backward", "dual-backward"}, "forward");
    auto times = g.list("times", {0.0, 0.5 * cfg.T, cfg.T});
    GridSpec grid = GridSpec::uniform(L.dim, lo, hi, n);
    auto f = data_from(top, L.dim);
    SampleKind kind = dir == "forward" ? SampleKind::convex : SampleKind::general;
    auto samples = ConvexFunctionSamples::from_function(grid, f, kind);
    GridField G;
    try {
        if (dir == "forward") G = hopf_lax_forward(L, samples, times, grid);
        else if (dir == "backward") G = hopf_lax_backward(L, samples, cfg.T, times, grid);
        else G = dual_hopf_lax_backward(dual_lagrangian(L), samples, cfg.T, times, grid);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_input) g.fail("times", e.what());
        throw;
    }
    rep.value("equation", json(to_string(G.tag)));
    json slices = json::array();
    for (std::size_t s = 0; s < G.times.size(); ++s) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (const auto& v : G.values[s])
            if (v.is_finite()) mn = std::min(mn, v.raw()), mx = std::max(mx, v.raw());
        slices.push_back({{"t", num(G.times[s])}, {"min", num(mn)}, {"max", num(mx)}});
    }
    // an edge point whose extremizer is on the edge is expected (t = 0 at least);
    // an interior point pulled to the edge means the grid is too small
    std::size_t inner = 0;
    for (const auto& slice : G.boundary_pinned)
        for (std::size_t j = 0; j < slice.size(); ++j) inner += slice[j] && !grid.is_boundary(j);
    rep.value("slices", slices);
    rep.value("boundary_pinned", json(G.pinned_count()));
    rep.value("interior_points_pinned", json(inner));
    rep.certify("extremizers interior to the grid", inner == 0, {"slices"},
                inner ? "interior points have extremizers on the grid boundary; widen [lo, hi]" : "");
    rep.file("field.csv", G.to_csv());
}

inline void run_hjb(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    if (L.dim != 1) throw Error(ErrorKind::unsupported, "lattice control is 1-d");
    ControlSet B;
    Lattice lat = lattice_from(cfg, B);
    auto f = data_from(cfg.top(), 1);
    std::vector<double> fv(lat.n);
    for (int i = 0; i < lat.n; ++i) fv[i] = f({lat.x(i)});
    auto F = hjb_backward(L, fv, lat, B);
    std::vector<double> start;
    if (cfg.top().has("measures") && cfg.top().sub("measures").has("source")) {
        start = lat.weights_of(measure_from(cfg, "source", SpaceTag::state));
    }
    auto P = extract_drift(F, L, start);
    const double tol = cfg.tol.value_or(lat.dx + B.db);
    rep.value("lattice", json{{"lo", lat.lo}, {"dx", lat.dx}, {"n", lat.n}, {"K", lat.K}, {"b_max", B.b_max}, {"db", B.db}});
    rep.value("value_min_t0", *std::min_element(F.values[0].begin(), F.values[0].end()));
    rep.value("value_max_t0", *std::max_element(F.values[0].begin(), F.values[0].end()));
    rep.value("boundary_argmax", json(F.boundary_argmax));
    rep.value("consistency_residual", P.consistency_residual);
    rep.value("checked_nodes", json(P.checked_nodes));
    rep.certify("drift consistency", P.checked_nodes > 0 && P.consistency_residual <= tol, {"consistency_residual"});
    rep.file("value_field.csv", F.to_csv());
    rep.file("policy.csv", P.to_csv());
}

inline EndCost end_cost_from(const Section& s, const char* which) {
    Section e = s.sub(which);
    e.allow({"kind", "coef", "center", "slope", "at"});
    std::string kind = e.choice("kind", {"quadratic", "linear", "pinned"});
    if (kind == "quadratic") return EndCost::quadratic(e.num("coef"), e.list("center"));
    if (kind == "linear") return EndCost::linear(e.list("slope"));
    return EndCost::point(e.list("at"));
}

inline void run_bolza(const RunConfig& cfg, Report& rep) {
    Section b = cfg.top().sub("bolza");
    b.allow({"instance", "N", "start", "end"});
    BolzaInstance I;
    if (b.has("instance")) {
        std::string name = b.str("instance");
        auto reg = bolza_registry();
        auto it = std::find_if(reg.begin(), reg.end(), [&](const BolzaInstance& r) { return r.name == name; });
        if (it == reg.end()) {
            std::string all;
            for (const auto& r : reg) all += (all.empty() ? "" : ", ") + r.name;
            b.fail("instance", "unknown instance '" + name + "' (registry: " + all + ")");
        }
        I = *it;
    } else {
        I.name = "custom";
        I.L = lagrangian_from(cfg);
        I.T = cfg.T;
        I.ell = {"custom", end_cost_from(b, "start"), end_cost_from(b, "end")};
    }
    I.N = b.integer("N", 256);
    const double tol = cfg.tol.value_or(1e-5);
    auto s = solve_bolza(I);
    auto hr = hamiltonian_system_check(s, hamiltonian(I.L));
    rep.value("instance", json(I.name));
    rep.value("N", json(I.N));
    rep.value("primal_value", s.primal_value);
    rep.value("dual_value", s.dual_value);
    rep.value("transversality_residual", s.transversality_residual);
    rep.value("hamiltonian_residual", hr.max());
    rep.gap("duality", s.gap);
    for (const auto& n : s.notes) rep.note(n);
    rep.certify("no duality gap", std::abs(s.gap) <= tol, {"primal_value", "dual_value"});
    rep.file("path.csv", s.to_csv());
}

inline void run_eulerian(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    auto mu0 = measure_from(cfg, "source", SpaceTag::costate), nuT = measure_from(cfg, "target", SpaceTag::state);
    int nx = 64, nt = 64;
    std::optional<std::pair<double, double>> box;
    if (auto e = cfg.top().opt_sub("eulerian")) {
        e->allow({"nx", "nt", "box"});
        nx = e->integer("nx", nx);
        nt = e->integer("nt", nt);
        if (e->has("box")) {
            auto b = e->list("box");
            if (b.size() != 2 || !(b[0] < b[1])) e->fail("box", "expected [lo, hi] with lo < hi");
            box = std::pair{b[0], b[1]};
        }
    }
    const double tol = cfg.tol.value_or(0.05);
    auto r = eulerian_check(L, mu0, nuT, cfg.T, nx, nt, box);
    rep.value("value", r.value);
    rep.value("lp_value", r.lp_value);
    rep.value("kinetic", r.kinetic);
    rep.value("pairing", r.pairing);
    rep.value("newton_steps", json(r.newton_steps));
    rep.value("grid", json{{"lo", r.grid.lo}, {"hi", r.grid.hi}, {"nx", r.grid.nx}, {"nt", r.grid.nt}});
    rep.gap("relative_error", r.relative_error);
    if (!r.hint.empty()) rep.note(r.hint);
    rep.certify("continuity value near plan value", r.converged && r.relative_error <= tol, {"value"});
    std::ostringstream o;
    o.precision(17);
    o << "t,x,rho\n";
    for (std::size_t k = 0; k < r.rho.size(); ++k)
        for (int i = 0; i < r.grid.nx; ++i) o << k * r.grid.dt() << "," << r.grid.center(i) << "," << r.rho[k][i] << "\n";
    rep.file("density.csv", o.str());
}

// Every certificate the modules offer for one Lagrangian and one measure pair.
inline void run_verify(const RunConfig& cfg, Report& rep) {
    auto L = lagrangian_from(cfg);
    auto mu0 = measure_from(cfg, "source", SpaceTag::costate), nuT = measure_from(cfg, "target", SpaceTag::state);
    int draws = 20;
    if (auto v = cfg.top().opt_sub("verify")) {
        v->allow({"draws"});
        draws = v->integer("draws", draws);
    }
    const double tol = cfg.tol.value_or(1e-4);
    std::mt19937_64 rng(cfg.seed);
    if (auto prof = profile_from(cfg)) {
        auto a = check_assumptions(L, *prof);
        std::string failed;
        for (const auto& c : a.clauses)
            if (!c.passed) failed += (failed.empty() ? "" : ", ") + c.name;
        rep.certify("assumptions", a.passed(), {}, failed.empty() ? "" : "failed clauses: " + failed);
    }

    auto cmin = interpolate_min(L, mu0, nuT, cfg.T, std::nullopt, 1e-7);
    rep.value("min_value", cmin.direct_value);
    rep.value("min_three_marginal", cmin.three_marginal_value);
    rep.gap("min_interpolation", cmin.gap);
    rep.certify("min interpolation", cmin.certified, {"min_value", "min_three_marginal"}, cmin.hint);
    FixedEndKernel K(L, cfg.T);
    double worst_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k < draws; ++k) {
        auto nu = random_measure(rng, 1 + k % 5, L.dim, -3.0, 3.0, SpaceTag::state, true);
        worst_min = std::min(worst_min, min_interpolation_bound(K, mu0, nu, nuT) - cmin.direct_value);
    }
    rep.value("min_bound_slack", worst_min);
    rep.certify("min bound holds for random intermediates", worst_min >= -1e-9, {"min_bound_slack"});

    auto cmax = interpolate_max(L, mu0, nuT, cfg.T, tol);
    rep.value("max_value", cmax.direct_value);
    rep.gap("max_interpolation", cmax.gap);
    rep.certify("max interpolation", std::abs(cmax.gap) <= tol, {"max_value"}, cmax.hint);
    FixedEndKernel Kt(dual_lagrangian(L), cfg.T);
    double worst_max = std::numeric_limits<double>::infinity();
    for (int k = 0; k < draws; ++k) {
        auto mu = random_measure(rng, 1 + k % 4, L.dim, -2.0, 2.0, SpaceTag::costate, true);
        worst_max = std::min(worst_max, cmax.direct_value - max_interpolation_bound(Kt, mu0, mu, nuT));
    }
    rep.value("max_bound_slack", worst_max);
    rep.certify("max bound holds for random terminal costates", worst_max >= -tol, {"max_bound_slack"});

    auto m = optimal_map_min(L, mu0, nuT, cfg.T);
    rep.value("map_cost_error", m.cost_error);
    rep.certify("min map hits target", m.hits_target && m.cost_error <= 1e-3, {"map_cost_error"});

    if (!L.table && L.jointly_convex() && L.K.kind == TermKind::quadratic) {
        BolzaInstance I;
        I.name = "verify";
        I.L = L;
        I.T = cfg.T;
        I.ell = BoundaryCost::quadratic(1.0, 1.0, mu0.mean(), nuT.mean());
        auto s = solve_bolza(I);
        rep.value("bolza_primal", s.primal_value);
        rep.gap("bolza_duality", s.gap);
        rep.certify("bolza duality", std::abs(s.gap) <= 1e-5, {"bolza_primal"});
    } else {
        rep.note("bolza duality skipped: needs a jointly convex Lagrangian with quadratic kinetic part");
    }
}

// ---------------------------------------------------------------------------

struct RunOutcome {
    int exit_code = exit_error;
    json result;
    std::string error;
    fs::path out_dir;
};

inline RunOutcome run(const RunOptions& opt) {
    RunOutcome o;
    try {
        RunConfig cfg = load_config(opt);
        o.out_dir = cfg.out_dir;
        fs::create_directories(cfg.out_dir);
        Report rep(cfg.out_dir);
        json head = {{"schema", 1},
                     {"command", cfg.command},
                     {"config", cfg.config_path.filename().string()},
                     {"inputs_digest", digest(cfg)},
                     {"seed", cfg.seed},
                     {"T", cfg.T}};
        if (cfg.tol) head["tolerance"] = *cfg.tol;
        if (cfg.top().has("lagrangian")) head["lagrangian"] = lagrangian_from(cfg).describe();
        try {
            const auto& c = cfg.command;
            if (c == "cost") run_cost(cfg, rep);
            else if (c == "transport") run_transport(cfg, rep);
            else if (c == "interpolate") run_interpolate(cfg, rep);
            else if (c == "map") run_map(cfg, rep);
            else if (c == "hopf-lax") run_hopf_lax(cfg, rep);
            else if (c == "hjb") run_hjb(cfg, rep);
            else if (c == "bolza") run_bolza(cfg, rep);
            else if (c == "verify") run_verify(cfg, rep);
            else run_eulerian(cfg, rep);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::parse_error) throw;
            std::string w = e.what(), k = std::string(to_string(e.kind())) + ": ";
            if (w.rfind(k, 0) == 0) w.erase(0, k.size());
            throw Error(e.kind(), cfg.command + ": " + w);
        }
        o.result = rep.finish(head);
        std::ofstream f(cfg.out_dir / "result.json", std::ios::binary);
        f << o.result.dump(2) << "\n";
        if (!f) throw Error(ErrorKind::invalid_input, "cannot write " + (cfg.out_dir / "result.json").string());
        o.exit_code = rep.certified() ? exit_ok : exit_uncertified;
    } catch (const Error& e) {
        o.error = e.what();
        o.exit_code = exit_error;
    } catch (const std::exception& e) {
        o.error = e.what();
        o.exit_code = exit_error;
    }
    return o;
}

// Expected values a demo config documents under `expect`, as
//   expect: {tol: 1e-6, values: {value: 1.5}}
inline std::vector<std::string> check_expectations(const RunConfig& cfg, const json& result) {
    std::vector<std::string> bad;
    auto e = cfg.top().opt_sub("expect");
    if (!e) return bad;
    e->allow({"tol", "values", "certified"});
    const double tol = e->num("tol", 1e-6);
    if (e->has("certified") && e->flag("certified", true) != result.value("certified", false))
        bad.push_back("certified flag differs from the expected one");
    if (auto v = e->opt_sub("values")) {
        YAML::Node n = cfg.root["expect"]["values"];
        for (auto it = n.begin(); it != n.end(); ++it) {
            std::string key = it->first.Scalar();
            double want = v->num(key);
            const json* got = nullptr;
            for (const char* part : {"values", "gaps"})
                if (result[part].contains(key)) got = &result[part][key];
            if (!got || !got->is_number()) {
                bad.push_back(key + ": not a finite number in the result");
                continue;
            }
            double g = got->get<double>();
            if (std::abs(g - want) > tol * (1.0 + std::abs(want))) {
                std::ostringstream o;
                o.precision(10);
                o << key << ": got " << g << ", expected " << want;
                bad.push_back(o.str());
            }
        }
    }
    return bad;
}

struct DemoLine {
    std::string name, command;
    int exit_code = exit_error;
    std::vector<std::string> problems;
};

// Runs every *.yaml under `demos` (sorted) into out/<stem>/ and writes a
// summary table. Nonzero when any run fails, is uncertified, or misses its
// documented values.
inline int demo_suite(const fs::path& demos, const fs::path& out, std::optional<std::uint64_t> seed, std::ostream& log) {
    if (!fs::is_directory(demos)) {
        log << "demo directory not found: " << demos.string() << "\n";
        return exit_error;
    }
    std::vector<fs::path> configs;
    for (const auto& e : fs::directory_iterator(demos))
        if (e.is_regular_file() && e.path().extension() == ".yaml") configs.push_back(e.path());
    std::sort(configs.begin(), configs.end());
    if (configs.empty()) {
        log << "no demo configs in " << demos.string() << "\n";
        return exit_error;
    }
    fs::create_directories(out);
    std::vector<DemoLine> lines;
    json summary = {{"schema", 1}, {"demos", json::array()}};
    for (const auto& c : configs) {
        DemoLine d;
        d.name = c.stem().string();
        RunOptions ro{c.string(), (out / d.name).string(), seed, std::nullopt};
        auto r = run(ro);
        d.exit_code = r.exit_code;
        if (r.exit_code == exit_error) {
            d.problems.push_back(r.error);
        } else {
            d.command = r.result["command"];
            RunConfig cfg = load_config(ro);
            d.problems = check_expectations(cfg, r.result);
            if (r.exit_code != exit_ok) d.problems.push_back("not certified");
        }
        summary["demos"].push_back({{"name", d.name},
                                    {"command", d.command},
                                    {"exit", d.exit_code},
                                    {"passed", d.problems.empty()},
                                    {"problems", d.problems}});
        lines.push_back(std::move(d));
    }
    bool all = std::all_of(lines.begin(), lines.end(), [](const DemoLine& d) { return d.problems.empty(); });
    summary["passed"] = all;
    std::ofstream(out / "summary.json", std::ios::binary) << summary.dump(2) << "\n";
    std::ostringstream table;
    table << "demo                     command       exit  status\n";
    for (const auto& d : lines) {
        std::string n = d.name, c = d.command;
        n.resize(std::max<std::size_t>(n.size(), 24), ' ');
        c.resize(std::max<std::size_t>(c.size(), 13), ' ');
        table << n << " " << c << " " << d.exit_code << "     " << (d.problems.empty() ? "pass" : "FAIL") << "\n";
        for (const auto& p : d.problems) table << "    " << p << "\n";
    }
    std::ofstream(out / "summary.txt", std::ios::binary) << table.str();
    log << table.str();
    return all ? exit_ok : exit_error;
}

}  // namespace ballistic::cli

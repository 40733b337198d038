#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace ballistic {

enum class SpaceTag { state, costate };

inline const char* to_string(SpaceTag s) { return s == SpaceTag::state ? "state" : "costate"; }

constexpr double kMergeTol = 1e-12;

class DiscreteMeasure {
public:
    DiscreteMeasure() = default;

    DiscreteMeasure(std::vector<Point> atoms, std::vector<double> weights, SpaceTag tag = SpaceTag::state)
        : atoms_(std::move(atoms)), weights_(std::move(weights)), tag_(tag) {
        validate();
    }

    // rescales the weights to total mass one before validating
    static DiscreteMeasure normalized(std::vector<Point> atoms, std::vector<double> weights,
                                      SpaceTag tag = SpaceTag::state) {
        double s = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(s > 0.0)) throw Error(ErrorKind::invalid_input, "measure with zero total mass");
        for (auto& w : weights) w /= s;
        return DiscreteMeasure(std::move(atoms), std::move(weights), tag);
    }

    static DiscreteMeasure dirac(Point x, SpaceTag tag = SpaceTag::state) {
        return DiscreteMeasure({std::move(x)}, {1.0}, tag);
    }

    static DiscreteMeasure from_samples(const std::vector<Point>& samples, SpaceTag tag = SpaceTag::state) {
        if (samples.empty()) throw Error(ErrorKind::invalid_input, "no samples");
        std::vector<double> w(samples.size(), 1.0 / double(samples.size()));
        return merged(samples, w, tag);
    }

    // 1-d convenience
    static DiscreteMeasure on_line(const std::vector<double>& xs, const std::vector<double>& ws,
                                   SpaceTag tag = SpaceTag::state) {
        std::vector<Point> a;
        for (double x : xs) a.push_back({x});
        return normalized(a, ws, tag);
    }

    std::size_t size() const { return atoms_.size(); }
    int dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_[0].size()); }
    const std::vector<Point>& atoms() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }
    const Point& atom(std::size_t i) const { return atoms_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }
    SpaceTag tag() const { return tag_; }
    DiscreteMeasure with_tag(SpaceTag t) const {
        DiscreteMeasure m = *this;
        m.tag_ = t;
        return m;
    }

    double first_moment() const {
        double s = 0.0;
        for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * norm(atoms_[i]);
        return s;
    }

    Point mean() const {
        Point m(dim(), 0.0);
        for (std::size_t i = 0; i < size(); ++i) m = axpy(weights_[i], atoms_[i], m);
        return m;
    }

    // merges atoms closer than kMergeTol (max-norm), keeping first-occurrence order
    static DiscreteMeasure merged(const std::vector<Point>& atoms, const std::vector<double>& weights,
                                  SpaceTag tag) {
        std::vector<Point> a;
        std::vector<double> w;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            bool hit = false;
            for (std::size_t k = 0; k < a.size(); ++k)
                if (max_abs_diff(a[k], atoms[i]) <= kMergeTol) {
                    w[k] += weights[i];
                    hit = true;
                    break;
                }
            if (!hit) {
                a.push_back(atoms[i]);
                w.push_back(weights[i]);
            }
        }
        return DiscreteMeasure(std::move(a), std::move(w), tag);
    }

    // same atoms up to tol, same weights up to wtol, order-insensitive
    bool approx_equal(const DiscreteMeasure& o, double tol, double wtol = 1e-12) const {
        if (dim() != o.dim()) return false;
        std::vector<bool> used(o.size(), false);
        // group by atom clusters so that split atoms on either side compare fairly
        auto clusters = [&](const DiscreteMeasure& m) {
            std::vector<std::pair<Point, double>> c;
            for (std::size_t i = 0; i < m.size(); ++i) {
                bool hit = false;
                for (auto& e : c)
                    if (max_abs_diff(e.first, m.atom(i)) <= tol) {
                        e.second += m.weight(i);
                        hit = true;
                        break;
                    }
                if (!hit) c.push_back({m.atom(i), m.weight(i)});
            }
            return c;
        };
        auto a = clusters(*this), b = clusters(o);
        if (a.size() != b.size()) return false;
        std::vector<bool> u(b.size(), false);
        for (const auto& e : a) {
            bool hit = false;
            for (std::size_t k = 0; k < b.size(); ++k)
                if (!u[k] && max_abs_diff(e.first, b[k].first) <= tol && std::abs(e.second - b[k].second) <= wtol) {
                    u[k] = hit = true;
                    break;
                }
            if (!hit) return false;
        }
        (void)used;
        return true;
    }

    friend bool operator==(const DiscreteMeasure& a, const DiscreteMeasure& b) {
        return a.atoms_ == b.atoms_ && a.weights_ == b.weights_ && a.tag_ == b.tag_;
    }

private:
    void validate() const {
        if (atoms_.empty()) throw Error(ErrorKind::invalid_input, "measure without atoms");
        if (atoms_.size() != weights_.size()) throw Error(ErrorKind::invalid_input, "atom/weight count mismatch");
        const std::size_t d = atoms_[0].size();
        if (d == 0) throw Error(ErrorKind::invalid_input, "zero-dimensional atom");
        double s = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            if (atoms_[i].size() != d) throw Error(ErrorKind::invalid_input, "atoms of mixed dimension");
            for (double c : atoms_[i])
                if (!std::isfinite(c)) throw Error(ErrorKind::invalid_input, "non-finite atom coordinate");
            if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
                throw Error(ErrorKind::invalid_input, "negative or non-finite weight");
            s += weights_[i];
        }
        if (std::abs(s - 1.0) > 1e-12) {
            std::ostringstream os;
            os.precision(17);
            os << "weights sum to " << s << ", expected 1";
            throw Error(ErrorKind::invalid_input, os.str());
        }
    }

    std::vector<Point> atoms_;
    std::vector<double> weights_;
    SpaceTag tag_ = SpaceTag::state;
};

// map returns nullopt where it is undefined
inline DiscreteMeasure push_forward(const DiscreteMeasure& m,
                                    const std::function<std::optional<Point>(const Point&)>& map,
                                    std::optional<SpaceTag> tag = std::nullopt) {
    std::vector<Point> img;
    img.reserve(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        auto y = map(m.atom(i));
        if (!y) throw Error(ErrorKind::invalid_input, "map undefined at atom " + std::to_string(i) + " " + point_str(m.atom(i)));
        img.push_back(std::move(*y));
    }
    return DiscreteMeasure::merged(img, m.weights(), tag.value_or(m.tag()));
}

// Quantile G(t) = inf{z : F(z) >= t} for t in (0,1], as a right-continuous step function
struct QuantileFunction {
    std::vector<double> positions;   // sorted, distinct
    std::vector<double> cumulative;  // F at each position, last one is 1

    double operator()(double t) const {
        if (!(t > 0.0) || t > 1.0 + 1e-15) throw Error(ErrorKind::invalid_input, "quantile argument outside (0,1]");
        for (std::size_t k = 0; k < positions.size(); ++k)
            if (cumulative[k] >= t - 1e-15) return positions[k];
        return positions.back();
    }
};

inline QuantileFunction quantile(const DiscreteMeasure& m) {
    if (m.dim() != 1) throw Error(ErrorKind::invalid_input, "quantile requires d = 1");
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return m.atom(a)[0] < m.atom(b)[0]; });
    QuantileFunction q;
    double c = 0.0;
    for (auto i : idx) {
        c += m.weight(i);
        if (!q.positions.empty() && q.positions.back() == m.atom(i)[0]) q.cumulative.back() = c;
        else {
            q.positions.push_back(m.atom(i)[0]);
            q.cumulative.push_back(c);
        }
    }
    q.cumulative.back() = 1.0;
    return q;
}

inline double first_moment(const DiscreteMeasure& m) { return m.first_moment(); }

// ---------------------------------------------------------------------------
// File format: header "# d=<dim> space=<state|costate>", then "w x1 ... xd".
// Numbers are written with the shortest round-trip representation.

inline std::string format_double(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string to_text(const DiscreteMeasure& m) {
    std::ostringstream os;
    os << "# d=" << m.dim() << " space=" << to_string(m.tag()) << "\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << format_double(m.weight(i));
        for (double c : m.atom(i)) os << " " << format_double(c);
        os << "\n";
    }
    return os.str();
}

inline DiscreteMeasure from_text(const std::string& text, const std::string& origin = "<measure>") {
    std::istringstream is(text);
    std::string line;
    int lineno = 0, dim = -1;
    SpaceTag tag = SpaceTag::state;
    std::vector<Point> atoms;
    std::vector<double> w;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    auto parse_num = [&](const std::string& tok) {
        double v;
        auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("not a number: '" + tok + "'");
        return v;
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (line[0] == '#') {
            if (dim >= 0) continue;
            std::istringstream hs(line.substr(1));
            std::string tok;
            while (hs >> tok) {
                if (tok.rfind("d=", 0) == 0) dim = static_cast<int>(parse_num(tok.substr(2)));
                else if (tok == "space=state") tag = SpaceTag::state;
                else if (tok == "space=costate") tag = SpaceTag::costate;
                else fail("unknown header token '" + tok + "'");
            }
            if (dim <= 0) fail("header must declare d=<dim>");
            continue;
        }
        if (dim < 0) fail("missing header line");
        std::istringstream ls(line);
        std::string tok;
        std::vector<double> nums;
        while (ls >> tok) nums.push_back(parse_num(tok));
        if (static_cast<int>(nums.size()) != dim + 1)
            fail("expected " + std::to_string(dim + 1) + " numbers, got " + std::to_string(nums.size()));
        w.push_back(nums[0]);
        atoms.emplace_back(nums.begin() + 1, nums.end());
    }
    if (atoms.empty()) fail("no atoms");
    try {
        return DiscreteMeasure(std::move(atoms), std::move(w), tag);
    } catch (const Error& e) {
        throw Error(ErrorKind::parse_error, origin + ": " + e.what());
    }
}

inline void to_file(const DiscreteMeasure& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw Error(ErrorKind::invalid_input, "cannot write " + path);
    f << to_text(m);
}

inline DiscreteMeasure from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::invalid_input, "cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_text(ss.str(), path);
}

// equal-weight random measure with atoms uniform in [lo,hi]^d
inline DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n, int d, double lo, double hi,
                                      SpaceTag tag = SpaceTag::state, bool random_weights = false) {
    std::uniform_real_distribution<double> U(lo, hi), W(0.2, 1.0);
    std::vector<Point> a(n, Point(d));
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& c : a[i]) c = U(rng);
        w[i] = random_weights ? W(rng) : 1.0;
    }
    return DiscreteMeasure::normalized(a, w, tag);
}

}  // namespace ballistic

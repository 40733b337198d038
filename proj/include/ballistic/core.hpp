#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ballistic {

enum class ErrorKind {
    invalid_input,
    unsupported,
    unbounded_hamiltonian,
    unbounded_below,
    infeasible,
    solver_failure,
    cfl_violation,
    parse_error,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_input: return "invalid-input";
        case ErrorKind::unsupported: return "unsupported";
        case ErrorKind::unbounded_hamiltonian: return "unbounded-hamiltonian";
        case ErrorKind::unbounded_below: return "unbounded-below";
        case ErrorKind::infeasible: return "infeasible";
        case ErrorKind::solver_failure: return "solver-failure";
        case ErrorKind::cfl_violation: return "cfl-violation";
        case ErrorKind::parse_error: return "parse-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

// Real number extended by +inf and -inf. Infinity is stored as the IEEE value
// but the type refuses NaN and refuses to build inf - inf silently.
class ExtReal {
public:
    constexpr ExtReal() = default;
    ExtReal(double v) : v_(v) {  // NOLINT implicit on purpose
        if (std::isnan(v)) throw Error(ErrorKind::invalid_input, "NaN is not an extended real");
    }
    static ExtReal pos_inf() { return ExtReal(std::numeric_limits<double>::infinity()); }
    static ExtReal neg_inf() { return ExtReal(-std::numeric_limits<double>::infinity()); }

    bool is_finite() const { return std::isfinite(v_); }
    bool is_pos_inf() const { return v_ == std::numeric_limits<double>::infinity(); }
    bool is_neg_inf() const { return v_ == -std::numeric_limits<double>::infinity(); }
    double raw() const { return v_; }
    double value() const {
        if (!is_finite()) throw Error(ErrorKind::invalid_input, "extended real is infinite");
        return v_;
    }

    friend ExtReal operator+(ExtReal a, ExtReal b) {
        if ((a.is_pos_inf() && b.is_neg_inf()) || (a.is_neg_inf() && b.is_pos_inf()))
            throw Error(ErrorKind::invalid_input, "inf - inf in extended arithmetic");
        return ExtReal(a.v_ + b.v_);
    }
    friend ExtReal operator-(ExtReal a) { return ExtReal(-a.v_); }
    friend ExtReal operator-(ExtReal a, ExtReal b) { return a + (-b); }
    friend bool operator<(ExtReal a, ExtReal b) { return a.v_ < b.v_; }
    friend bool operator>(ExtReal a, ExtReal b) { return a.v_ > b.v_; }
    friend bool operator<=(ExtReal a, ExtReal b) { return a.v_ <= b.v_; }
    friend bool operator>=(ExtReal a, ExtReal b) { return a.v_ >= b.v_; }
    friend bool operator==(ExtReal a, ExtReal b) { return a.v_ == b.v_; }

    std::string str() const {
        if (is_pos_inf()) return "+inf";
        if (is_neg_inf()) return "-inf";
        std::ostringstream os;
        os.precision(17);
        os << v_;
        return os.str();
    }

private:
    double v_ = 0.0;
};

using Point = std::vector<double>;

inline double dot(const Point& a, const Point& b) {
    if (a.size() != b.size()) throw Error(ErrorKind::invalid_input, "dimension mismatch in dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Point& a) { return dot(a, a); }
inline double norm(const Point& a) { return std::sqrt(norm2(a)); }

inline Point axpy(double s, const Point& a, const Point& b) {  // s*a + b
    Point r(b);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += s * a[i];
    return r;
}

inline Point scaled(double s, const Point& a) {
    Point r(a);
    for (auto& c : r) c *= s;
    return r;
}

inline double max_abs_diff(const Point& a, const Point& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline std::string point_str(const Point& p) {
    std::ostringstream os;
    os.precision(10);
    os << "(";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ")";
    return os.str();
}

}  // namespace ballistic

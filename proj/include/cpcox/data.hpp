#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpcox/linalg.hpp"

namespace cpcox {

// Observed-time sentinel for latent survival times beyond the study horizon.
inline constexpr double kBeyondHorizon = std::numeric_limits<double>::infinity();

struct NoEventsError : std::runtime_error {
    NoEventsError() : std::runtime_error("dataset contains no events") {}
};
struct EmptyRiskSetError : std::runtime_error {
    explicit EmptyRiskSetError(double t)
        : std::runtime_error("empty risk set at t=" + std::to_string(t)) {}
};
struct NonCategoricalError : std::runtime_error {
    explicit NonCategoricalError(const std::string& what) : std::runtime_error(what) {}
};

// Piecewise-constant caglad covariate path on [0, tau]: values_[0] on
// [0, breaks_[0]], values_[j] on (breaks_[j-1], breaks_[j]], values_[k]
// on (breaks_[k-1], tau]. A constant path has no breakpoints.
class CovariatePath {
public:
    CovariatePath() = default;

    explicit CovariatePath(Vec constant_value)
        : values_{std::move(constant_value)} {}

    CovariatePath(std::vector<double> breakpoints, std::vector<Vec> segment_values)
        : breaks_(std::move(breakpoints)), values_(std::move(segment_values)) {
        if (values_.size() != breaks_.size() + 1)
            throw std::invalid_argument("CovariatePath: need one more segment than breakpoints");
        for (std::size_t i = 0; i + 1 < breaks_.size(); ++i)
            if (!(breaks_[i] < breaks_[i + 1]))
                throw std::invalid_argument("CovariatePath: breakpoints must be strictly increasing");
        for (const Vec& v : values_)
            if (v.size() != values_.front().size())
                throw std::invalid_argument("CovariatePath: inconsistent segment dimension");
    }

    std::size_t dim() const { return values_.empty() ? 0 : values_.front().size(); }
    bool is_constant() const { return breaks_.empty(); }
    const std::vector<double>& breakpoints() const { return breaks_; }
    const std::vector<Vec>& segment_values() const { return values_; }

    // value at t, taken from the segment containing t from the left
    const Vec& at(double t) const {
        if (breaks_.empty()) return values_.front();
        const auto it = std::lower_bound(breaks_.begin(), breaks_.end(), t);
        return values_[static_cast<std::size_t>(it - breaks_.begin())];
    }

    friend bool operator==(const CovariatePath& a, const CovariatePath& b) {
        return a.breaks_ == b.breaks_ && a.values_ == b.values_;
    }

private:
    std::vector<double> breaks_;
    std::vector<Vec> values_;
};

struct Subject {
    double observed_time = 0.0;
    bool event = false;
    CovariatePath covariates;
};

struct Dataset {
    std::vector<Subject> subjects;
    double tau = 0.0;

    std::size_t size() const { return subjects.size(); }
    std::size_t dim() const { return subjects.empty() ? 0 : subjects.front().covariates.dim(); }
};

// theta = (alpha, beta, zeta): coefficients before/after the change point.
struct ChangePointParams {
    Vec alpha;
    Vec beta;
    double zeta = 0.0;

    const Vec& coef_at(double t) const { return t <= zeta ? alpha : beta; }
};

inline std::vector<std::size_t> risk_set(const Dataset& data, double t) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.subjects.size(); ++i)
        if (data.subjects[i].observed_time >= t) idx.push_back(i);
    return idx;
}

inline std::vector<double> event_times(const Dataset& data) {
    std::vector<double> times;
    for (const Subject& s : data.subjects)
        if (s.event) times.push_back(s.observed_time);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return times;
}

inline std::size_t count_events(const Dataset& data) {
    std::size_t k = 0;
    for (const Subject& s : data.subjects) k += s.event ? 1 : 0;
    return k;
}

// ---------------------------------------------------------------------------
// Flat text serialization. Constant-covariate subjects are single rows
//   observed_time,event,z1,...,zp
// piecewise subjects announce their segment count and list one row
//   seg_end,z1,...,zp
// per segment (the last seg_end equals tau). Doubles are written in
// shortest round-trip form so that write/read is bit-exact.

inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("dataset parse: bad number '" + s + "'");
    return v;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline void write_dataset(std::ostream& os, const Dataset& data) {
    os << "# cpcox dataset v1\n";
    os << "tau=" << format_double(data.tau) << " p=" << data.dim() << "\n";
    for (const Subject& s : data.subjects) {
        os << format_double(s.observed_time) << "," << (s.event ? 1 : 0);
        if (s.covariates.is_constant()) {
            for (double z : s.covariates.at(0.0)) os << "," << format_double(z);
            os << "\n";
        } else {
            const auto& breaks = s.covariates.breakpoints();
            const auto& vals = s.covariates.segment_values();
            os << ",path:" << vals.size() << "\n";
            for (std::size_t j = 0; j < vals.size(); ++j) {
                const double end = j < breaks.size() ? breaks[j] : data.tau;
                os << format_double(end);
                for (double z : vals[j]) os << "," << format_double(z);
                os << "\n";
            }
        }
    }
}

inline Dataset read_dataset(std::istream& is) {
    Dataset data;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# cpcox dataset", 0) != 0)
        throw std::runtime_error("dataset parse: missing header");
    if (!std::getline(is, line)) throw std::runtime_error("dataset parse: missing tau line");
    std::size_t p = 0;
    {
        std::istringstream hs(line);
        std::string tok;
        while (hs >> tok) {
            if (tok.rfind("tau=", 0) == 0) data.tau = parse_double(tok.substr(4));
            if (tok.rfind("p=", 0) == 0) p = static_cast<std::size_t>(std::stoul(tok.substr(2)));
        }
    }
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = detail::split_csv(line);
        if (f.size() < 3) throw std::runtime_error("dataset parse: short row");
        Subject s;
        s.observed_time = parse_double(f[0]);
        s.event = f[1] == "1";
        if (f[2].rfind("path:", 0) == 0) {
            const std::size_t nseg = std::stoul(f[2].substr(5));
            std::vector<double> breaks;
            std::vector<Vec> vals;
            for (std::size_t j = 0; j < nseg; ++j) {
                if (!std::getline(is, line)) throw std::runtime_error("dataset parse: truncated path");
                auto g = detail::split_csv(line);
                if (g.size() != p + 1) throw std::runtime_error("dataset parse: bad segment row");
                const double end = parse_double(g[0]);
                if (j + 1 < nseg) breaks.push_back(end);
                Vec z(p);
                for (std::size_t c = 0; c < p; ++c) z[c] = parse_double(g[c + 1]);
                vals.push_back(std::move(z));
            }
            s.covariates = CovariatePath(std::move(breaks), std::move(vals));
        } else {
            if (f.size() != p + 2) throw std::runtime_error("dataset parse: bad row width");
            Vec z(p);
            for (std::size_t c = 0; c < p; ++c) z[c] = parse_double(f[c + 2]);
            s.covariates = CovariatePath(std::move(z));
        }
        data.subjects.push_back(std::move(s));
    }
    return data;
}

inline void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    write_dataset(os, data);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    return read_dataset(is);
}

} // namespace cpcox

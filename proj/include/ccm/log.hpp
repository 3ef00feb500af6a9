#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace ccm {

/// One episode-log record. Levels: "low" (active-view control step),
/// "up" (an upstream view's step), "high" (one high-level transition),
/// "upd_low" / "upd_high" (gradient updates; losses live here).
struct LogRow {
    int seed = 0;
    int episode = 0;
    int t = 0;
    std::string level;
    int cut_id = -1;
    std::vector<double> goal_center;
    std::vector<double> action;
    double reward = std::numeric_limits<double>::quiet_NaN();
    double loss_policy = std::numeric_limits<double>::quiet_NaN();
    double loss_value = std::numeric_limits<double>::quiet_NaN();
    double loss_fcr = std::numeric_limits<double>::quiet_NaN();
};

struct LogSink {
    virtual ~LogSink() = default;
    virtual void row(const LogRow& r) = 0;
};

struct NullSink final : LogSink {
    void row(const LogRow&) override {}
};

struct VectorSink final : LogSink {
    std::vector<LogRow> rows;
    void row(const LogRow& r) override { rows.push_back(r); }
};

/// Shortest-round-trip formatting: parsing the text recovers the exact
/// double, which keeps re-derived reports identical to the originals.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join_values(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += format_double(v[i]);
    }
    return out;
}

}  // namespace ccm

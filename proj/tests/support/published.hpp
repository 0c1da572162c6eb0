#pragma once

// Published test-set results of the thirteen strategies and the printed
// percentage differences against E6, used as fixed reference data.

#include <array>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "sexid/metrics.hpp"

namespace sexid::testing {

struct PublishedRow {
    std::string_view id;
    double t1_acc, t1_prec, t1_rec, t1_f1;
    double t2_acc, t2_prec, t2_rec, t2_f1;
};

inline constexpr std::array<PublishedRow, 13> kPublishedResults{{
    {"M1", 0.761, 0.739, 0.784, 0.761, 0.621, 0.617, 0.621, 0.611},
    {"M2", 0.774, 0.749, 0.803, 0.775, 0.688, 0.677, 0.674, 0.675},
    {"M3", 0.782, 0.773, 0.778, 0.775, 0.676, 0.661, 0.663, 0.658},
    {"M4", 0.732, 0.737, 0.693, 0.715, 0.612, 0.607, 0.597, 0.595},
    {"M5", 0.766, 0.773, 0.730, 0.751, 0.661, 0.648, 0.657, 0.649},
    {"M6", 0.735, 0.739, 0.699, 0.718, 0.639, 0.629, 0.621, 0.624},
    {"M7", 0.753, 0.734, 0.769, 0.751, 0.642, 0.625, 0.627, 0.624},
    {"E1", 0.784, 0.797, 0.744, 0.769, 0.669, 0.683, 0.666, 0.653},
    {"E2", 0.786, 0.777, 0.791, 0.781, 0.686, 0.673, 0.677, 0.674},
    {"E3", 0.784, 0.773, 0.784, 0.779, 0.682, 0.669, 0.674, 0.670},
    {"E4", 0.790, 0.781, 0.787, 0.784, 0.661, 0.673, 0.656, 0.645},
    {"E5", 0.785, 0.767, 0.799, 0.782, 0.701, 0.687, 0.690, 0.687},
    {"E6", 0.789, 0.776, 0.794, 0.785, 0.703, 0.690, 0.692, 0.689},
}};

/// Printed differences: task-1 accuracy, task-1 F1, task-2 accuracy, task-2 F1.
struct PublishedDelta {
    std::string_view id;
    std::array<std::string_view, 4> cells;
};

inline constexpr std::array<PublishedDelta, 5> kPublishedDeltas{{
    {"M1", {"-3.55%", "-3.06%", "-11.66%", "-11.32%"}},
    {"M2", {"-1.90%", "-1.27%", "-2.13%", "-2.03%"}},
    {"M3", {"-0.89%", "-1.27%", "-3.84%", "-4.50%"}},
    {"E4", {"0.13%", "-0.13%", "-5.97%", "-6.39%"}},
    {"E6", {"0.00%", "0.00%", "0.00%", "0.00%"}},
}};

inline ReportSet published_reports(Task task) {
    ReportSet out;
    for (const auto& r : kPublishedResults)
        out[std::string(r.id)] = task == Task::task1 ? MetricsReport::summary(task, r.t1_acc, r.t1_prec, r.t1_rec, r.t1_f1)
                                                     : MetricsReport::summary(task, r.t2_acc, r.t2_prec, r.t2_rec, r.t2_f1);
    return out;
}

/// Renders the delta tables from the published results and compares every
/// printed cell. Returns one description per mismatching cell.
inline std::vector<std::string> published_delta_mismatches() {
    std::vector<std::string> rows;
    for (const auto& d : kPublishedDeltas) rows.emplace_back(d.id);
    std::vector<std::string> problems;
    for (auto task : {Task::task1, Task::task2}) {
        const auto table = render_delta_table(published_reports(task), "E6", task, rows);
        std::istringstream lines(table);
        std::map<std::string, std::vector<std::string>> cells;
        for (std::string line; std::getline(lines, line);) {
            std::istringstream words(line);
            std::vector<std::string> w;
            for (std::string x; words >> x;) w.push_back(x);
            if (w.size() == 5) cells[w[0]] = {w[2], w[4]};
        }
        const std::size_t offset = task == Task::task1 ? 0 : 2;
        for (const auto& d : kPublishedDeltas) {
            const auto it = cells.find(std::string(d.id));
            for (std::size_t c = 0; c < 2; ++c) {
                const auto expected = d.cells[offset + c];
                const auto got = it == cells.end() ? std::string("missing") : it->second[c];
                if (got != expected)
                    problems.push_back(fmt::format("{} {} column {}: expected {}, got {}", to_string(task), d.id, c, expected, got));
            }
        }
    }
    return problems;
}

}  // namespace sexid::testing

#include "onlc/evaluation.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace onlc {

namespace {

constexpr double kMaxGlucose = 600.0;

std::size_t index_of(std::vector<std::string> &names, std::string_view name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it != names.end()) {
        return static_cast<std::size_t>(it - names.begin());
    }
    names.emplace_back(name);
    return names.size() - 1;
}

} // namespace

char to_char(Zone z) { return static_cast<char>('A' + static_cast<int>(z)); }

Zone clarke_zone(const GridPoint &point) {
    const double r = point.reference;
    const double p = point.predicted;
    if (!(r > 0.0 && r <= kMaxGlucose && p > 0.0 && p <= kMaxGlucose)) {
        throw DomainError(fmt::format("glucose pair ({}, {}) outside (0, 600]", r, p));
    }
    if ((r <= 70.0 && p <= 70.0) || std::abs(p - r) <= 0.2 * r) {
        return Zone::A;
    }
    // Inequalities are strict on every edge a less severe zone shares.
    if ((r > 180.0 && p < 70.0) || (r < 70.0 && p > 180.0)) {
        return Zone::E;
    }
    if ((r >= 70.0 && r < 290.0 && p > r + 110.0) ||
        (r >= 130.0 && r <= 180.0 && p < 1.4 * r - 182.0)) {
        return Zone::C;
    }
    if ((r < 70.0 && p >= 70.0 && p <= 180.0) || (r > 240.0 && p >= 70.0 && p < 180.0)) {
        return Zone::D;
    }
    return Zone::B;
}

double ZoneReport::fraction(Zone z) const {
    if (total == 0) {
        throw DomainError("zone report is empty");
    }
    return static_cast<double>(counts[static_cast<std::size_t>(z)]) / static_cast<double>(total);
}

ZoneReport zone_report(std::span<const GridPoint> points) {
    ZoneReport report;
    for (const auto &pt : points) {
        ++report.counts[static_cast<std::size_t>(clarke_zone(pt))];
    }
    report.total = points.size();
    return report;
}

double zone_a_fraction(std::span<const GridPoint> points) {
    if (points.empty()) {
        throw DomainError("zone-A fraction of an empty point set");
    }
    return zone_report(points).zone_a_fraction();
}

nlohmann::json to_json(const ZoneReport &report) {
    nlohmann::json counts = nlohmann::json::object();
    nlohmann::json fractions = nlohmann::json::object();
    for (std::size_t i = 0; i < kZoneCount; ++i) {
        const std::string key(1, to_char(static_cast<Zone>(i)));
        counts[key] = report.counts[i];
        fractions[key] = report.total == 0 ? 0.0 : report.fraction(static_cast<Zone>(i));
    }
    return {{"total", report.total},
            {"counts", std::move(counts)},
            {"fractions", std::move(fractions)},
            {"zone_a_fraction", report.total == 0 ? 0.0 : report.zone_a_fraction()}};
}

void AccuracyTable::set(std::string_view row, std::string_view column, double value) {
    const std::size_t r = index_of(rows, row);
    const std::size_t c = index_of(columns, column);
    cells.resize(rows.size());
    for (auto &line : cells) {
        line.resize(columns.size());
    }
    cells[r][c] = value;
}

nlohmann::json to_json(const AccuracyTable &table) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        nlohmann::json row{{"model", table.rows[r]}};
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const auto &cell = table.cells[r][c];
            row[table.columns[c]] = cell ? nlohmann::json(*cell) : nlohmann::json(nullptr);
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::string render_text(const AccuracyTable &table) {
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"model"});
    grid.front().insert(grid.front().end(), table.columns.begin(), table.columns.end());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::vector<std::string> line{table.rows[r]};
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const auto &cell = table.cells[r][c];
            line.push_back(cell ? fmt::format("{:.2f}%", 100.0 * *cell) : "-");
        }
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> widths(table.columns.size() + 1, 0);
    for (const auto &line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            widths[c] = std::max(widths[c], line[c].size());
        }
    }
    std::string out;
    for (const auto &line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out += c == 0 ? fmt::format("{:<{}}", line[c], widths[c])
                          : fmt::format("  {:>{}}", line[c], widths[c]);
        }
        out += '\n';
    }
    return out;
}

void write_grid_csv(std::ostream &out, std::span<const GridPoint> points) {
    out << "reference,predicted,zone\n";
    for (const auto &pt : points) {
        out << fmt::format("{},{},{}\n", pt.reference, pt.predicted, to_char(clarke_zone(pt)));
    }
}

} // namespace onlc

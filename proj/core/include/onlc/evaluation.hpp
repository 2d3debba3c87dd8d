#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace onlc {

//! Reference and predicted glucose, both in (0, 600] mg/dL.
struct GridPoint {
    double reference = 0.0;
    double predicted = 0.0;
};

enum class Zone : std::uint8_t { A, B, C, D, E };

inline constexpr std::size_t kZoneCount = 5;

char to_char(Zone z);

//! Clarke error grid zone. Points on a shared boundary line take the less
//! severe zone, in the order A, B, D, C, E. Throws DomainError outside the
//! glucose domain.
Zone clarke_zone(const GridPoint &point);

struct ZoneReport {
    std::array<std::size_t, kZoneCount> counts{};
    std::size_t total = 0;

    double fraction(Zone z) const;
    double zone_a_fraction() const { return fraction(Zone::A); }
};

ZoneReport zone_report(std::span<const GridPoint> points);

//! Share of points in zone A. Throws DomainError for an empty input.
double zone_a_fraction(std::span<const GridPoint> points);

nlohmann::json to_json(const ZoneReport &report);

//! Zone-A accuracy laid out with model variants as rows and fine-tuning
//! groups as columns. Missing cells render as "-".
struct AccuracyTable {
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    //! rows x columns, zone-A fraction in [0, 1].
    std::vector<std::vector<std::optional<double>>> cells;

    void set(std::string_view row, std::string_view column, double value);
};

nlohmann::json to_json(const AccuracyTable &table);
//! Aligned plain-text rendering with percentages to two decimals.
std::string render_text(const AccuracyTable &table);

//! Plotting data: header `reference,predicted,zone`, one row per point.
void write_grid_csv(std::ostream &out, std::span<const GridPoint> points);

} // namespace onlc

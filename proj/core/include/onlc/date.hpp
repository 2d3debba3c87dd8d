#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace onlc {

//! A calendar day. Self-monitoring data has daily cadence, so no time of day
//! is carried.
class Date {
  public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_{days} {}
    Date(int year, unsigned month, unsigned day);

    //! Parses an ISO-8601 calendar date (YYYY-MM-DD). Throws DomainError.
    static Date parse(std::string_view iso);

    std::string iso() const;

    constexpr std::chrono::sys_days sys_days() const { return days_; }
    constexpr long long serial() const { return days_.time_since_epoch().count(); }

    constexpr Date operator+(int days) const { return Date{days_ + std::chrono::days{days}}; }
    constexpr Date operator-(int days) const { return Date{days_ - std::chrono::days{days}}; }
    constexpr int operator-(Date other) const {
        return static_cast<int>((days_ - other.days_).count());
    }
    constexpr Date &operator+=(int days) {
        days_ += std::chrono::days{days};
        return *this;
    }

    constexpr auto operator<=>(const Date &) const = default;

  private:
    std::chrono::sys_days days_{};
};

} // namespace onlc

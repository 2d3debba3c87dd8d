#include "onlc/date.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <charconv>

namespace onlc {

Date::Date(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                          std::chrono::day{day}};
    if (!ymd.ok()) {
        throw DomainError(fmt::format("invalid calendar date {}-{}-{}", year, month, day));
    }
    days_ = std::chrono::sys_days{ymd};
}

Date Date::parse(std::string_view iso) {
    auto fail = [&] { return DomainError(fmt::format("invalid ISO date '{}'", iso)); };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
        throw fail();
    }
    auto field = [&](std::size_t pos, std::size_t len) {
        int value = 0;
        const auto *first = iso.data() + pos;
        const auto *last = first + len;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{} || ptr != last) {
            throw fail();
        }
        return value;
    };
    const int y = field(0, 4);
    const int m = field(5, 2);
    const int d = field(8, 2);
    if (m < 1 || d < 1) {
        throw fail();
    }
    return Date{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
}

std::string Date::iso() const {
    const std::chrono::year_month_day ymd{days_};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

} // namespace onlc

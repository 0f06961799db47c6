#include "rlpm/date.hpp"

#include <charconv>
#include <cstdio>

#include "rlpm/error.hpp"

namespace rlpm {

Date::Date(int year, unsigned month, unsigned day) {
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok()) {
    throw Error(ErrorKind::InvalidArgument, "invalid calendar date");
  }
  days_ = std::chrono::sys_days{ymd};
}

std::optional<Date> Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    return std::nullopt;
  }
  auto field = [&](std::size_t pos, std::size_t len, int& out) {
    const char* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc{} && ptr == first + len;
  };
  int y = 0;
  int m = 0;
  int d = 0;
  if (!field(0, 4, y) || !field(5, 2, m) || !field(8, 2, d) || m < 1 || d < 1) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    return std::nullopt;
  }
  return Date(std::chrono::sys_days{ymd});
}

std::string Date::iso() const {
  const std::chrono::year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

bool Date::is_weekend() const {
  const std::chrono::weekday wd{days_};
  return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

}  // namespace rlpm

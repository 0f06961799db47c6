#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace rlpm {

/// Calendar date, day resolution. Parsed from and printed as ISO-8601 `YYYY-MM-DD`.
class Date {
 public:
  constexpr Date() = default;
  explicit constexpr Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  static std::optional<Date> parse(std::string_view text);

  std::chrono::sys_days days() const { return days_; }
  std::string iso() const;
  Date plus_days(int n) const { return Date(days_ + std::chrono::days(n)); }
  bool is_weekend() const;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace rlpm

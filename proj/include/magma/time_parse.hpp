#pragma once

// Relative/absolute date expression parsing. Resolution is always against a
// caller-supplied reference instant ("now"), never the wall clock, so replays
// of historical transcripts resolve the way they did on the day.

#include <chrono>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>

#include "core.hpp"

namespace magma {

// Closed day-granularity window in epoch seconds, UTC.
struct TimeWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool operator==(const TimeWindow&) const = default;
};

namespace detail {

inline std::chrono::sys_days day_of(std::int64_t ts) {
  using namespace std::chrono;
  return floor<days>(sys_seconds{seconds{ts}});
}

inline std::int64_t day_start(std::chrono::sys_days d) {
  using namespace std::chrono;
  return duration_cast<seconds>(d.time_since_epoch()).count();
}

inline TimeWindow day_window(std::chrono::sys_days first, std::chrono::sys_days last) {
  return {day_start(first), day_start(last) + 24 * 3600 - 1};
}

inline TimeWindow day_window(std::chrono::sys_days d) { return day_window(d, d); }

inline std::optional<unsigned> month_number(const std::string& lower) {
  static const char* names[12] = {"january", "february", "march",     "april",   "may",
                                  "june",    "july",     "august",    "september",
                                  "october", "november", "december"};
  for (unsigned i = 0; i < 12; ++i)
    if (lower == names[i]) return i + 1;
  return std::nullopt;
}

inline std::optional<unsigned> weekday_number(const std::string& lower) {
  static const char* names[7] = {"sunday",   "monday", "tuesday", "wednesday",
                                 "thursday", "friday", "saturday"};
  for (unsigned i = 0; i < 7; ++i)
    if (lower == names[i]) return i;  // c_encoding: Sunday = 0
  return std::nullopt;
}

}  // namespace detail

// Scan `text` for the first recognized date expression and resolve it against
// `now`. Recognized forms: ISO dates, "D Month YYYY", "N days ago",
// yesterday/today/tomorrow, last/next <weekday>, "last week", "last month".
// Unrecognized text yields nullopt (callers fall back to other signals).
inline std::optional<TimeWindow> parse_time(const std::string& text, std::int64_t now) {
  using namespace std::chrono;
  using detail::day_window;
  const std::string lower = to_lower(text);
  const sys_days today = detail::day_of(now);

  static const std::regex iso_re(R"((\d{4})-(\d{2})-(\d{2}))");
  std::smatch m;
  if (std::regex_search(lower, m, iso_re)) {
    year_month_day ymd{year{std::stoi(m[1])}, month{unsigned(std::stoul(m[2]))},
                       day{unsigned(std::stoul(m[3]))}};
    if (ymd.ok()) return day_window(sys_days{ymd});
  }

  static const std::regex dmy_re(R"((\d{1,2})(?:st|nd|rd|th)?\s+of\s+([a-z]+)\s+(\d{4}))");
  static const std::regex dmy2_re(R"((\d{1,2})(?:st|nd|rd|th)?\s+([a-z]+)\s+(\d{4}))");
  for (const auto* re : {&dmy_re, &dmy2_re}) {
    if (std::regex_search(lower, m, *re)) {
      if (auto mon = detail::month_number(m[2])) {
        year_month_day ymd{year{std::stoi(m[3])}, month{*mon}, day{unsigned(std::stoul(m[1]))}};
        if (ymd.ok()) return day_window(sys_days{ymd});
      }
    }
  }

  static const std::regex ago_re(R"((\d+)\s+days?\s+ago)");
  if (std::regex_search(lower, m, ago_re)) {
    return day_window(today - days{std::stol(m[1])});
  }

  if (lower.find("yesterday") != std::string::npos) return day_window(today - days{1});
  if (lower.find("tomorrow") != std::string::npos) return day_window(today + days{1});
  if (lower.find("today") != std::string::npos) return day_window(today);

  static const std::regex rel_wd_re(R"((last|next)\s+([a-z]+))");
  auto begin = std::sregex_iterator(lower.begin(), lower.end(), rel_wd_re);
  for (auto it = begin; it != std::sregex_iterator{}; ++it) {
    const std::string dir = (*it)[1];
    const std::string word = (*it)[2];
    if (auto wd = detail::weekday_number(word)) {
      // Strictly before (after) today, 1..7 days away.
      weekday target{*wd};
      weekday cur{today};
      if (dir == "last") {
        unsigned back = (cur.c_encoding() + 7 - target.c_encoding()) % 7;
        if (back == 0) back = 7;
        return day_window(today - days{back});
      }
      unsigned fwd = (target.c_encoding() + 7 - cur.c_encoding()) % 7;
      if (fwd == 0) fwd = 7;
      return day_window(today + days{fwd});
    }
    if (dir == "last" && word == "week") {
      // Previous Monday..Sunday block.
      weekday cur{today};
      unsigned since_monday = (cur.c_encoding() + 6) % 7;  // Monday -> 0
      sys_days this_monday = today - days{since_monday};
      return day_window(this_monday - days{7}, this_monday - days{1});
    }
    if (dir == "last" && word == "month") {
      year_month_day ymd{today};
      year_month ym{ymd.year(), ymd.month()};
      ym -= months{1};
      sys_days first{year_month_day{ym.year(), ym.month(), day{1}}};
      sys_days last{year_month_day_last{ym.year(), month_day_last{ym.month()}}};
      return day_window(first, last);
    }
  }

  return std::nullopt;
}

// "19 October 2023" style rendering of a UTC instant's calendar day.
inline std::string format_d_month_yyyy(std::int64_t ts) {
  using namespace std::chrono;
  static const char* names[12] = {"January", "February", "March",     "April",   "May",
                                  "June",    "July",     "August",    "September",
                                  "October", "November", "December"};
  year_month_day ymd{detail::day_of(ts)};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%u %s %d", unsigned(ymd.day()),
                names[unsigned(ymd.month()) - 1], int(ymd.year()));
  return buf;
}

// Collect raw date-expression substrings (for attribute extraction); the
// same grammar parse_time recognizes, unresolved.
inline std::vector<std::string> scan_date_mentions(const std::string& text) {
  const std::string lower = to_lower(text);
  std::vector<std::string> out;
  auto add_all = [&](const std::regex& re) {
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), re);
         it != std::sregex_iterator{}; ++it)
      out.push_back(it->str());
  };
  static const std::regex any_re(
      R"(\d{4}-\d{2}-\d{2}|\d{1,2}(?:st|nd|rd|th)?\s+(?:of\s+)?(?:january|february|march|april|may|june|july|august|september|october|november|december)\s+\d{4}|\d+\s+days?\s+ago|yesterday|today|tomorrow|(?:last|next)\s+(?:monday|tuesday|wednesday|thursday|friday|saturday|sunday|week|month))");
  add_all(any_re);
  return out;
}

}  // namespace magma

#pragma once

// Interval arithmetic over video time. All spans are closed-open
// [start_ms, end_ms) on integer milliseconds so that set measures are exact.

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace procqa {

using Millis = std::int64_t;

class TimeSpan {
 public:
  // Throws Error(InvalidSpan) unless 0 <= start_ms < end_ms.
  static TimeSpan make(Millis start_ms, Millis end_ms);

  Millis start_ms() const noexcept { return start_; }
  Millis end_ms() const noexcept { return end_; }
  Millis length_ms() const noexcept { return end_ - start_; }
  bool contains(Millis t) const noexcept { return start_ <= t && t < end_; }

  auto operator<=>(const TimeSpan&) const = default;

 private:
  friend class SpanSet;
  TimeSpan(Millis s, Millis e) : start_(s), end_(e) {}
  Millis start_;
  Millis end_;
};

// Exact overlap ratio as an integer fraction |a∩b| / |a∪b|.
struct IouFraction {
  Millis intersection_ms = 0;
  Millis union_ms = 1;

  double value() const {
    return static_cast<double>(intersection_ms) / static_cast<double>(union_ms);
  }
  bool operator==(const IouFraction&) const = default;
};

Millis intersection_ms(const TimeSpan& a, const TimeSpan& b) noexcept;
IouFraction span_iou_fraction(const TimeSpan& a, const TimeSpan& b) noexcept;
double span_iou(const TimeSpan& a, const TimeSpan& b) noexcept;

// Sorted, pairwise disjoint, non-adjacent spans. Only constructible through
// normalize(), so the invariant always holds.
class SpanSet {
 public:
  SpanSet() = default;

  static SpanSet normalize(std::vector<TimeSpan> spans);

  const std::vector<TimeSpan>& spans() const noexcept { return spans_; }
  std::size_t size() const noexcept { return spans_.size(); }
  bool empty() const noexcept { return spans_.empty(); }
  auto begin() const noexcept { return spans_.begin(); }
  auto end() const noexcept { return spans_.end(); }
  const TimeSpan& operator[](std::size_t i) const { return spans_[i]; }

  Millis covered_ms() const noexcept;
  SpanSet clip(const TimeSpan& bounds) const;
  SpanSet unite(const SpanSet& other) const;

  bool operator==(const SpanSet&) const = default;

 private:
  std::vector<TimeSpan> spans_;
};

inline SpanSet spanset_normalize(std::vector<TimeSpan> spans) {
  return SpanSet::normalize(std::move(spans));
}
inline SpanSet spanset_clip(const SpanSet& set, const TimeSpan& bounds) {
  return set.clip(bounds);
}

// Seconds <-> milliseconds at serialization boundaries. Seconds are written
// with at most three decimals, so the round trip is lossless.
double ms_to_seconds(Millis ms);
Millis seconds_to_ms(double seconds);
std::string format_seconds(Millis ms);

nlohmann::json span_to_json(const TimeSpan& span);
TimeSpan span_from_json(const nlohmann::json& j);
nlohmann::json spanset_to_json(const SpanSet& set);
// Accepts any list of spans; the result is normalized.
SpanSet spanset_from_json(const nlohmann::json& j);

std::string to_string(const TimeSpan& span);
std::string to_string(const SpanSet& set);

}  // namespace procqa

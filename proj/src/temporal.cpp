#include "procqa/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "procqa/error.hpp"

namespace procqa {

TimeSpan TimeSpan::make(Millis start_ms, Millis end_ms) {
  if (start_ms < 0) {
    fail(Errc::InvalidSpan, "span start " + std::to_string(start_ms) + " ms is negative");
  }
  if (end_ms <= start_ms) {
    fail(Errc::InvalidSpan, "span end " + std::to_string(end_ms) +
                                " ms is not after start " + std::to_string(start_ms) + " ms");
  }
  return TimeSpan(start_ms, end_ms);
}

Millis intersection_ms(const TimeSpan& a, const TimeSpan& b) noexcept {
  const Millis lo = std::max(a.start_ms(), b.start_ms());
  const Millis hi = std::min(a.end_ms(), b.end_ms());
  return hi > lo ? hi - lo : 0;
}

IouFraction span_iou_fraction(const TimeSpan& a, const TimeSpan& b) noexcept {
  const Millis inter = intersection_ms(a, b);
  return {inter, a.length_ms() + b.length_ms() - inter};
}

double span_iou(const TimeSpan& a, const TimeSpan& b) noexcept {
  return span_iou_fraction(a, b).value();
}

SpanSet SpanSet::normalize(std::vector<TimeSpan> spans) {
  std::sort(spans.begin(), spans.end());
  SpanSet out;
  for (const auto& s : spans) {
    if (!out.spans_.empty() && s.start_ms() <= out.spans_.back().end_ms()) {
      auto& last = out.spans_.back();
      last = TimeSpan(last.start_ms(), std::max(last.end_ms(), s.end_ms()));
    } else {
      out.spans_.push_back(s);
    }
  }
  return out;
}

Millis SpanSet::covered_ms() const noexcept {
  Millis total = 0;
  for (const auto& s : spans_) total += s.length_ms();
  return total;
}

SpanSet SpanSet::clip(const TimeSpan& bounds) const {
  SpanSet out;
  for (const auto& s : spans_) {
    const Millis lo = std::max(s.start_ms(), bounds.start_ms());
    const Millis hi = std::min(s.end_ms(), bounds.end_ms());
    if (hi > lo) out.spans_.push_back(TimeSpan(lo, hi));
  }
  return out;
}

SpanSet SpanSet::unite(const SpanSet& other) const {
  std::vector<TimeSpan> all = spans_;
  all.insert(all.end(), other.spans_.begin(), other.spans_.end());
  return normalize(std::move(all));
}

double ms_to_seconds(Millis ms) { return static_cast<double>(ms) / 1000.0; }

Millis seconds_to_ms(double seconds) {
  if (!std::isfinite(seconds)) fail(Errc::InvalidSpan, "non-finite time value");
  if (std::fabs(seconds) > 9e12) fail(Errc::InvalidSpan, "time value out of range");
  return static_cast<Millis>(std::llround(seconds * 1000.0));
}

std::string format_seconds(Millis ms) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(ms / 1000),
                static_cast<long long>(ms % 1000));
  return buf;
}

nlohmann::json span_to_json(const TimeSpan& span) {
  return nlohmann::json::array({ms_to_seconds(span.start_ms()), ms_to_seconds(span.end_ms())});
}

TimeSpan span_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    fail(Errc::InvalidSpan, "span must be a [start_seconds, end_seconds] pair");
  }
  return TimeSpan::make(seconds_to_ms(j[0].get<double>()), seconds_to_ms(j[1].get<double>()));
}

nlohmann::json spanset_to_json(const SpanSet& set) {
  auto arr = nlohmann::json::array();
  for (const auto& s : set) arr.push_back(span_to_json(s));
  return arr;
}

SpanSet spanset_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(Errc::InvalidSpan, "span list must be an array");
  std::vector<TimeSpan> spans;
  spans.reserve(j.size());
  for (const auto& e : j) spans.push_back(span_from_json(e));
  return SpanSet::normalize(std::move(spans));
}

std::string to_string(const TimeSpan& span) {
  return "[" + format_seconds(span.start_ms()) + "s, " + format_seconds(span.end_ms()) + "s)";
}

std::string to_string(const SpanSet& set) {
  std::string out = "{";
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += ", ";
    out += to_string(set[i]);
  }
  return out + "}";
}

}  // namespace procqa

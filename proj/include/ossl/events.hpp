#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ossl/errors.hpp"
#include "ossl/rng.hpp"
#include "ossl/schema.hpp"

namespace ossl {

enum class EventKind : std::uint8_t { click_negative, click_conversion, view_conversion };

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::click_negative: return "click";
    case EventKind::click_conversion: return "conv_click";
    case EventKind::view_conversion: return "conv_view";
  }
  return "?";
}

inline EventKind parse_kind(std::string_view text) {
  if (text == "click") return EventKind::click_negative;
  if (text == "conv_click") return EventKind::click_conversion;
  if (text == "conv_view") return EventKind::view_conversion;
  throw DataError("unknown event kind '" + std::string(text) + "'");
}

inline bool is_click(EventKind k) { return k != EventKind::view_conversion; }
inline bool is_conversion(EventKind k) { return k != EventKind::click_negative; }

struct Event {
  std::vector<std::uint32_t> values;  // one dictionary index per schema column
  EventKind kind = EventKind::click_negative;
  std::uint32_t interval_id = 0;

  // CVR label. View conversions carry no CVR label and report 0.
  int label() const { return kind == EventKind::click_conversion ? 1 : 0; }

  bool operator==(const Event&) const = default;
};

struct IntervalDataset {
  std::uint32_t interval_id = 0;
  std::vector<Event> events;  // arrival order

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  bool operator==(const IntervalDataset&) const = default;
};

inline void check_conforms(const Schema& schema, const Event& e) {
  require(e.values.size() == schema.size(), "event has wrong column count");
  for (std::size_t i = 0; i < schema.size(); ++i)
    require(e.values[i] < schema[i].cardinality,
            "event value out of range in column '" + schema[i].name + "'");
}

struct LoadedEvents {
  std::vector<IntervalDataset> intervals;  // ascending interval id
  std::size_t oov_count = 0;               // values clamped to the OOV bucket
};

inline LoadedEvents parse_events(std::istream& in, const Schema& schema) {
  std::map<std::uint32_t, IntervalDataset> grouped;
  LoadedEvents out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& why) -> DataError {
      return DataError("events: line " + std::to_string(line_no) + ": " + why);
    };
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw fail("not valid JSON");
    }
    if (!rec.is_object() || !rec.contains("interval") || !rec.contains("kind") ||
        !rec.contains("values"))
      throw fail("expected fields interval, kind, values");
    const auto& iv = rec["interval"];
    const auto& vals = rec["values"];
    if (!iv.is_number_integer() || iv.get<std::int64_t>() < 0 ||
        iv.get<std::int64_t>() > 0xFFFFFFFFll)
      throw fail("interval must be a non-negative integer");
    if (!rec["kind"].is_string()) throw fail("kind must be a string");
    if (!vals.is_array() || vals.size() != schema.size())
      throw fail("values must be an array of " + std::to_string(schema.size()) + " integers");

    Event e;
    e.interval_id = iv.get<std::uint32_t>();
    try {
      e.kind = parse_kind(rec["kind"].get<std::string>());
    } catch (const DataError& err) {
      throw fail(err.what());
    }
    e.values.resize(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!vals[i].is_number_integer() || vals[i].get<std::int64_t>() < 0)
        throw fail("column " + std::to_string(i) + " is not a non-negative integer");
      const auto v = vals[i].get<std::int64_t>();
      if (v >= schema[i].cardinality) {
        e.values[i] = schema[i].oov_index;
        ++out.oov_count;
      } else {
        e.values[i] = static_cast<std::uint32_t>(v);
      }
    }
    auto& bucket = grouped[e.interval_id];
    bucket.interval_id = e.interval_id;
    bucket.events.push_back(std::move(e));
  }
  for (auto& [_, ds] : grouped) out.intervals.push_back(std::move(ds));
  return out;
}

inline LoadedEvents load_events(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("events: cannot open '" + path + "'");
  return parse_events(in, schema);
}

inline void write_event(std::ostream& out, const Event& e) {
  out << "{\"interval\":" << e.interval_id << ",\"kind\":\"" << to_string(e.kind)
      << "\",\"values\":[";
  for (std::size_t i = 0; i < e.values.size(); ++i) out << (i ? "," : "") << e.values[i];
  out << "]}\n";
}

inline void write_events(std::ostream& out, const std::vector<IntervalDataset>& intervals) {
  for (const auto& ds : intervals)
    for (const auto& e : ds.events) write_event(out, e);
}

// Columns drawn i.i.d. uniform over each full dictionary.
inline IntervalDataset make_random_dataset(const Schema& schema, std::size_t length,
                                           std::uint64_t seed,
                                           std::uint32_t interval_id = 0) {
  if (length < 1) throw ConfigError("random dataset length must be >= 1");
  Rng rng(seed, 0x52414E44ull);  // "RAND"
  IntervalDataset ds;
  ds.interval_id = interval_id;
  ds.events.reserve(length);
  for (std::size_t n = 0; n < length; ++n) {
    Event e;
    e.interval_id = interval_id;
    e.values.resize(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i)
      e.values[i] = static_cast<std::uint32_t>(rng.below(schema[i].cardinality));
    ds.events.push_back(std::move(e));
  }
  return ds;
}

}  // namespace ossl

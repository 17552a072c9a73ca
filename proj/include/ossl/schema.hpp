#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ossl/errors.hpp"

namespace ossl {

// user: user and context features. ad: ad features that stay on the
// factorization side only. The two taxonomy levels are the only ad features
// the auto-encoder sees.
enum class ColumnSide { user, ad, taxonomy_top, taxonomy_low };

inline std::string_view to_string(ColumnSide side) {
  switch (side) {
    case ColumnSide::user: return "user";
    case ColumnSide::ad: return "ad";
    case ColumnSide::taxonomy_top: return "taxonomy_top";
    case ColumnSide::taxonomy_low: return "taxonomy_low";
  }
  return "?";
}

inline ColumnSide parse_side(std::string_view text) {
  if (text == "user") return ColumnSide::user;
  if (text == "ad") return ColumnSide::ad;
  if (text == "taxonomy_top") return ColumnSide::taxonomy_top;
  if (text == "taxonomy_low") return ColumnSide::taxonomy_low;
  throw ConfigError("unknown column side '" + std::string(text) + "'");
}

struct ColumnSchema {
  std::string name;
  std::uint32_t cardinality = 0;
  std::uint32_t oov_index = 0;  // bucket for values outside the dictionary
  ColumnSide side = ColumnSide::user;

  bool operator==(const ColumnSchema&) const = default;
};

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 0xCBF29CE484222325ull) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSchema> columns) : columns_(std::move(columns)) {
    validate();
  }

  // Five user columns followed by the two taxonomy levels.
  static Schema default_schema() {
    const std::vector<std::pair<const char*, std::uint32_t>> user = {
        {"geo", 50}, {"device", 20}, {"age_gender", 10}, {"interest", 100}, {"publisher", 30}};
    std::vector<ColumnSchema> cols;
    for (auto [name, n] : user) cols.push_back({name, n, n - 1, ColumnSide::user});
    cols.push_back({"taxonomy_top", 8, 7, ColumnSide::taxonomy_top});
    cols.push_back({"taxonomy_low", 48, 47, ColumnSide::taxonomy_low});
    return Schema(std::move(cols));
  }

  std::size_t size() const { return columns_.size(); }
  const ColumnSchema& operator[](std::size_t i) const { return columns_[i]; }
  const std::vector<ColumnSchema>& columns() const { return columns_; }
  auto begin() const { return columns_.begin(); }
  auto end() const { return columns_.end(); }

  std::size_t taxonomy_top() const { return index_of(ColumnSide::taxonomy_top); }
  std::size_t taxonomy_low() const { return index_of(ColumnSide::taxonomy_low); }

  std::vector<std::size_t> columns_where(auto predicate) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (predicate(columns_[i].side)) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> user_columns() const {
    return columns_where([](ColumnSide s) { return s == ColumnSide::user; });
  }
  std::vector<std::size_t> ad_side_columns() const {
    return columns_where([](ColumnSide s) { return s != ColumnSide::user; });
  }
  // Columns fed to the auto-encoder: everything except plain ad columns.
  std::vector<std::size_t> encoder_columns() const {
    return columns_where([](ColumnSide s) { return s != ColumnSide::ad; });
  }

  std::uint64_t fingerprint() const {
    std::string canon;
    for (const auto& c : columns_) {
      canon += c.name + ':' + std::to_string(c.cardinality) + ':' +
               std::to_string(c.oov_index) + ':' + std::string(to_string(c.side)) + ';';
    }
    return fnv1a64(canon);
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns_) {
      cols.push_back({{"name", c.name},
                      {"cardinality", c.cardinality},
                      {"oov_index", c.oov_index},
                      {"side", to_string(c.side)}});
    }
    return {{"columns", cols}};
  }

  static Schema from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array())
      throw ConfigError("schema: expected an object with a 'columns' array");
    std::vector<ColumnSchema> cols;
    for (const auto& entry : doc["columns"]) {
      for (const auto& [key, _] : entry.items()) {
        if (key != "name" && key != "cardinality" && key != "oov_index" && key != "side")
          throw ConfigError("schema: unknown column key '" + key + "'");
      }
      ColumnSchema c;
      try {
        c.name = entry.at("name").get<std::string>();
        const auto n = entry.at("cardinality").get<std::int64_t>();
        if (n < 2 || n > 0x7FFFFFFF)
          throw ConfigError("schema: column '" + c.name + "' cardinality must be >= 2");
        c.cardinality = static_cast<std::uint32_t>(n);
        c.oov_index = entry.contains("oov_index") ? entry["oov_index"].get<std::uint32_t>()
                                                  : c.cardinality - 1;
        c.side = parse_side(entry.at("side").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("schema: ") + e.what());
      }
      cols.push_back(std::move(c));
    }
    return Schema(std::move(cols));
  }

  static Schema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("schema: cannot open '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("schema: " + std::string(e.what()));
    }
  }

  bool operator==(const Schema&) const = default;

 private:
  std::size_t index_of(ColumnSide side) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].side == side) return i;
    throw ContractViolation("schema has no column with side " + std::string(to_string(side)));
  }

  void validate() const {
    if (columns_.empty()) throw ConfigError("schema: no columns");
    int tops = 0, lows = 0;
    for (const auto& c : columns_) {
      if (c.cardinality < 2)
        throw ConfigError("schema: column '" + c.name + "' cardinality must be >= 2");
      if (c.oov_index >= c.cardinality)
        throw ConfigError("schema: column '" + c.name + "' oov_index out of range");
      tops += c.side == ColumnSide::taxonomy_top;
      lows += c.side == ColumnSide::taxonomy_low;
    }
    if (tops != 1 || lows != 1)
      throw ConfigError("schema: need exactly one taxonomy_top and one taxonomy_low column");
  }

  std::vector<ColumnSchema> columns_;
};

}  // namespace ossl

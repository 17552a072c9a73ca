#pragma once

// Run configuration shared by every CLI command. Keys are dotted names
// ("gen.intervals", "model.rff_rows", ...). A JSON config file may spell them
// flat or nested; later sources override earlier ones:
//   built-in defaults < config file < --set key=value < dedicated flags.
// Unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ossl/errors.hpp"
#include "ossl/generator.hpp"
#include "ossl/schema.hpp"
#include "ossl/trainer.hpp"

namespace ossl {

struct RunConfig {
  std::string schema_path;  // empty: built-in default schema
  std::string data_path;    // empty: generate from the gen.* settings
  GeneratorConfig gen;
  std::uint64_t gen_seed = 7;
  ModelOptions model;
  bool rff_off = false;    // raw code instead of RFF features
  bool code_only = false;  // no factorization latents
  std::string out;

  Schema schema() const { return schema_path.empty() ? Schema::default_schema() : Schema::load(schema_path); }

  // Model options after the feature flags are applied.
  ModelOptions effective_model() const {
    ModelOptions m = model;
    if (rff_off) m.cvr.code_features = CodeFeatureMode::raw;
    if (code_only) m.cvr.use_latents = false;
    return m;
  }

  void validate(const Schema& s) const {
    gen.validate(s);
    model.ae_dims.validate();
    OptimizerState(model.ae_learning_rate, model.ae_momentum).validate();
    CvrOptimizer{model.latent_learning_rate, model.linear_learning_rate}.validate();
    if (model.rff_rows < 1) throw ConfigError("config: model.rff_rows must be >= 1");
    if (!(model.rff_sigma > 0.0)) throw ConfigError("config: model.rff_sigma must be positive");
    if (model.cvr.use_latents && model.cvr.latent_dim < 1)
      throw ConfigError("config: model.latent_dim must be >= 1");
  }
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

namespace detail {

template <typename T>
T json_as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config: bad value for '" + key + "': " + v.dump());
  }
}

inline std::vector<std::size_t> json_sizes(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("config: '" + key + "' must be an array of positive integers");
  std::vector<std::size_t> out;
  for (const auto& x : v) out.push_back(json_as<std::size_t>(x, key));
  return out;
}

}  // namespace detail

#define OSSL_KEY(NAME, HELP, TYPE, FIELD)                                                          \
  ConfigKey {                                                                                      \
    NAME, HELP, [](RunConfig& c, const nlohmann::json& v) { c.FIELD = detail::json_as<TYPE>(v, NAME); }, \
        [](const RunConfig& c) { return nlohmann::json(c.FIELD); }                                 \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      OSSL_KEY("schema", "schema JSON file (default: built-in 7-column schema)", std::string, schema_path),
      OSSL_KEY("data", "event JSONL file (default: generate from gen.*)", std::string, data_path),
      OSSL_KEY("out", "output file or directory", std::string, out),
      OSSL_KEY("gen.seed", "generator seed", std::uint64_t, gen_seed),
      OSSL_KEY("gen.intervals", "number of intervals", std::size_t, gen.intervals),
      OSSL_KEY("gen.events_per_interval", "events per interval", std::size_t, gen.events_per_interval),
      OSSL_KEY("gen.first_interval", "id of the first interval", std::uint32_t, gen.first_interval),
      OSSL_KEY("gen.clusters", "latent clusters", std::size_t, gen.clusters),
      OSSL_KEY("gen.click_conversion_rate", "mean conversion rate of clicks", double, gen.click_conversion_rate),
      OSSL_KEY("gen.view_conversion_share", "share of view-attributed conversions", double,
               gen.view_conversion_share),
      OSSL_KEY("gen.view_shift_tv", "TV shift of the view-conversion cluster prior", double, gen.view_shift_tv),
      OSSL_KEY("gen.drift_rate", "per-interval drift of the cluster prior", double, gen.drift_rate),
      OSSL_KEY("gen.concentration", "mass of a cluster's home value", double, gen.concentration),
      OSSL_KEY("gen.support", "values per cluster and column", std::size_t, gen.support),
      OSSL_KEY("gen.noise", "uniform noise mass per column", double, gen.noise),
      OSSL_KEY("gen.low_support", "taxonomy-low categories per cluster (even)", std::size_t, gen.low_support),
      OSSL_KEY("gen.xor_amplitude", "logit amplitude of the parity interaction", double, gen.xor_amplitude),
      OSSL_KEY("model.seed", "model initialization seed", std::uint64_t, model.seed),
      OSSL_KEY("model.embedding_dim", "auto-encoder embedding dimension d", std::size_t, model.ae_dims.embedding_dim),
      OSSL_KEY("model.code_dim", "code dimension k", std::size_t, model.ae_dims.code_dim),
      ConfigKey{"model.encoder_hidden", "encoder hidden widths, e.g. [512]",
                [](RunConfig& c, const nlohmann::json& v) {
                  c.model.ae_dims.encoder_hidden = detail::json_sizes(v, "model.encoder_hidden");
                },
                [](const RunConfig& c) { return nlohmann::json(c.model.ae_dims.encoder_hidden); }},
      ConfigKey{"model.decoder_hidden", "decoder hidden widths, e.g. [64]",
                [](RunConfig& c, const nlohmann::json& v) {
                  c.model.ae_dims.decoder_hidden = detail::json_sizes(v, "model.decoder_hidden");
                },
                [](const RunConfig& c) { return nlohmann::json(c.model.ae_dims.decoder_hidden); }},
      OSSL_KEY("model.ae_learning_rate", "auto-encoder SGD learning rate", double, model.ae_learning_rate),
      OSSL_KEY("model.ae_momentum", "auto-encoder SGD momentum", double, model.ae_momentum),
      OSSL_KEY("model.latent_dim", "CVR latent dimension r", std::size_t, model.cvr.latent_dim),
      OSSL_KEY("model.latent_learning_rate", "CVR latent learning rate", double, model.latent_learning_rate),
      OSSL_KEY("model.linear_learning_rate", "CVR bias/W/aux learning rate", double, model.linear_learning_rate),
      OSSL_KEY("model.init_scale", "CVR latent init half-width", double, model.cvr.init_scale),
      OSSL_KEY("model.rff_rows", "RFF rows D", std::size_t, model.rff_rows),
      OSSL_KEY("model.rff_sigma", "RFF bandwidth sigma", double, model.rff_sigma),
      OSSL_KEY("model.metrics_seed", "seed of the random reference sets", std::uint64_t,
               model.settings.metrics_seed),
      OSSL_KEY("flags.contaminate", "train the CVR model on view conversions too", bool,
               model.settings.contaminate),
      OSSL_KEY("flags.rff_off", "feed the raw code instead of RFF features", bool, rff_off),
      OSSL_KEY("flags.code_only", "drop the factorization latents", bool, code_only),
      OSSL_KEY("flags.aux_linear", "add per-value indicator weights", bool, model.cvr.aux_linear),
  };
  return keys;
}

#undef OSSL_KEY

inline void set_config_key(RunConfig& c, const std::string& key, const nlohmann::json& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(c, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

// Accepts flat dotted keys or nested objects, e.g. {"gen": {"intervals": 4}}.
inline void apply_config_json(RunConfig& c, const nlohmann::json& doc, const std::string& prefix = "") {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    const bool is_group = value.is_object();
    if (is_group) apply_config_json(c, value, full);
    else set_config_key(c, full, value);
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  apply_config_json(c, doc);
}

// "key=value"; the value is read as JSON when it parses, else as a string.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("config: expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_config_key(c, key, value);
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& k : config_keys()) doc[k.name] = k.get(c);
  return doc;
}

}  // namespace ossl

// Command-line front end: data generation, training, evaluation, auction
// benchmarking and checkpoint inspection.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
// 4 internal invariant violation. Failures print one JSON line to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ossl/auction.hpp"
#include "ossl/checkpoint.hpp"
#include "ossl/events.hpp"
#include "ossl/generator.hpp"
#include "ossl/metrics.hpp"
#include "ossl/run_config.hpp"
#include "ossl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ossl;

namespace {

// Files created by the running command; removed unless the command commits.
class OutputGuard {
 public:
  void track(const fs::path& p) { paths_.push_back(p); }
  void commit() { paths_.clear(); }
  ~OutputGuard() {
    std::error_code ec;
    for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) fs::remove(*it, ec);
  }

 private:
  std::vector<fs::path> paths_;
};

std::ofstream open_output(const fs::path& p, OutputGuard& guard, bool binary = false) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  guard.track(p);
  return out;
}

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::vector<std::string> flags;
  std::string data;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_data = true) {
  cmd->add_option("--config", o.config_file, "JSON config file (keys listed below)");
  cmd->add_option("--set", o.overrides, "override a config key: key=value (repeatable)");
  cmd->add_option("--flags", o.flags, "feature flags: contaminate, rff-off, code-only, aux-linear")
      ->delimiter(',');
  if (with_data) cmd->add_option("--data", o.data, "event JSONL file (same as key 'data')");
  cmd->add_option("--out", o.out, "output file or directory (same as key 'out')");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig c;
  if (!o.config_file.empty()) apply_config_file(c, o.config_file);
  for (const auto& s : o.overrides) apply_override(c, s);
  if (!o.data.empty()) c.data_path = o.data;
  if (!o.out.empty()) c.out = o.out;
  for (const auto& f : o.flags) {
    if (f == "contaminate") c.model.settings.contaminate = true;
    else if (f == "rff-off") c.rff_off = true;
    else if (f == "code-only") c.code_only = true;
    else if (f == "aux-linear") c.model.cvr.aux_linear = true;
    else throw ConfigError("unknown flag '" + f + "'");
  }
  return c;
}

std::vector<IntervalDataset> load_intervals(const RunConfig& c, const Schema& schema) {
  if (c.data_path.empty()) return gen_synthetic(schema, c.gen, c.gen_seed).intervals;
  auto loaded = load_events(c.data_path, schema);
  if (loaded.oov_count > 0)
    std::cerr << "warning: " << loaded.oov_count << " out-of-range values mapped to OOV\n";
  return std::move(loaded.intervals);
}

void require_out(const RunConfig& c, const char* what) {
  if (c.out.empty()) throw ConfigError(std::string("--out is required (") + what + ")");
}

int cmd_gen_data(const CommonOptions& o) {
  const RunConfig c = resolve(o);
  const Schema schema = c.schema();
  c.validate(schema);
  require_out(c, "event JSONL path");
  OutputGuard guard;
  const auto stream = gen_synthetic(schema, c.gen, c.gen_seed);
  auto out = open_output(c.out, guard);
  write_events(out, stream.intervals);
  out.close();
  if (!out) throw DataError("write failed for '" + c.out + "'");
  guard.commit();
  return 0;
}

std::string checkpoint_name(std::int64_t interval) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_%06lld.ckpt", static_cast<long long>(interval));
  return buf;
}

int cmd_train(const CommonOptions& o, const std::string& resume) {
  const RunConfig c = resolve(o);
  const Schema schema = c.schema();
  c.validate(schema);
  require_out(c, "output directory");
  const auto intervals = load_intervals(c, schema);

  Checkpoint state = resume.empty() ? initial_checkpoint(schema, c.effective_model())
                                    : load_checkpoint(resume, schema.fingerprint());
  OutputGuard guard;
  const fs::path dir(c.out);
  fs::create_directories(dir);
  auto cfg_out = open_output(dir / "config.json", guard);
  cfg_out << config_to_json(c).dump(2) << '\n';
  auto metrics = open_output(dir / "metrics.csv", guard);
  auto cvr = open_output(dir / "cvr_eval.csv", guard);
  auto segments = open_output(dir / "segments.csv", guard);
  write_metrics_csv_header(metrics);
  write_cvr_eval_csv_header(cvr);
  write_segment_csv_header(segments);

  train_stream(state, intervals, schema, [&](const Checkpoint& ck, const IntervalSummary& row) {
    const fs::path path = dir / checkpoint_name(ck.interval_id);
    guard.track(path);
    save_checkpoint(ck, path.string());
    write_metrics_csv_row(metrics, row.interval_id, row.metrics);
    write_cvr_eval_csv_row(cvr, row.interval_id, row.cvr_eval);
    write_segment_csv_rows(segments, row.interval_id, row.cvr_eval);
    std::cerr << "interval " << row.interval_id << ": cvr logloss " << row.cvr_eval.logloss;
    if (row.metrics) std::cerr << ", recloss " << row.metrics->recloss << ", gen " << row.metrics->gen;
    std::cerr << '\n';
  });
  for (auto* s : {&cfg_out, &metrics, &cvr, &segments}) {
    s->close();
    if (!*s) throw DataError("write failed in '" + c.out + "'");
  }
  guard.commit();
  return 0;
}

// Writes to --out when given, else stdout.
template <typename F>
int emit(const RunConfig& c, F&& body) {
  if (c.out.empty()) {
    body(std::cout);
    return 0;
  }
  OutputGuard guard;
  auto out = open_output(c.out, guard);
  body(out);
  out.close();
  if (!out) throw DataError("write failed for '" + c.out + "'");
  guard.commit();
  return 0;
}

IntervalDataset conversions_of(const IntervalDataset& ds) {
  IntervalDataset out{ds.interval_id, {}};
  for (const auto& e : ds.events)
    if (is_conversion(e.kind)) out.events.push_back(e);
  return out;
}

int cmd_eval_ae(const CommonOptions& o, const std::string& ckpt_path, const std::string& previous_path) {
  const RunConfig c = resolve(o);
  const Schema schema = c.schema();
  c.validate(schema);
  const Checkpoint ck = load_checkpoint(ckpt_path, schema.fingerprint());
  std::optional<Checkpoint> prev;
  if (!previous_path.empty()) prev = load_checkpoint(previous_path, schema.fingerprint());
  const auto intervals = load_intervals(c, schema);
  return emit(c, [&](std::ostream& out) {
    write_metrics_csv_header(out);
    out.precision(17);
    for (const auto& ds : intervals) {
      const auto conv = conversions_of(ds);
      if (conv.empty()) {
        write_metrics_csv_row(out, ds.interval_id, std::nullopt);
        continue;
      }
      if (prev) {
        write_metrics_csv_row(out, ds.interval_id,
                              interval_metrics(ck.autoencoder, prev->autoencoder, conv, schema,
                                               ck.settings.metrics_seed));
        continue;
      }
      const double rec = eval_recloss(ck.autoencoder, conv);
      const auto random = make_random_dataset(schema, conv.size(),
                                              random_set_seed(ck.settings.metrics_seed, ds.interval_id),
                                              ds.interval_id);
      const double rand = eval_recloss(ck.autoencoder, random);
      out << ds.interval_id << ',' << rec << ',' << rand << ",,," << rec / rand << '\n';
    }
  });
}

int cmd_eval_cvr(const CommonOptions& o, const std::string& ckpt_path) {
  const RunConfig c = resolve(o);
  const Schema schema = c.schema();
  c.validate(schema);
  const Checkpoint ck = load_checkpoint(ckpt_path, schema.fingerprint());
  const auto intervals = load_intervals(c, schema);
  return emit(c, [&](std::ostream& out) {
    write_cvr_eval_csv_header(out);
    for (const auto& ds : intervals)
      write_cvr_eval_csv_row(out, ds.interval_id,
                             cvr_evaluate(ck.cvr, ck.autoencoder, ck.rff, ds, schema.taxonomy_top()));
  });
}

int cmd_bench(const CommonOptions& o, const std::string& ckpt_path, const std::string& scenario_path) {
  const RunConfig c = resolve(o);
  const Schema schema = c.schema();
  c.validate(schema);
  const Checkpoint ck = ckpt_path.empty() ? initial_checkpoint(schema, c.effective_model())
                                          : load_checkpoint(ckpt_path, schema.fingerprint());
  const BenchScenario scenario = scenario_path.empty() ? BenchScenario{} : BenchScenario::load(scenario_path);
  const auto report = latency_bench(schema, ck.cvr, ck.autoencoder, ck.rff, scenario);
  if (!report.identical_rankings) throw ContractViolation("cached and naive rankings differ");
  std::cerr << "speedup " << report.speedup << "x (naive median / cached median)\n";
  return emit(c, [&](std::ostream& out) { write_bench_csv(out, report); });
}

int cmd_inspect(const std::string& ckpt_path) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const auto& ae = ck.autoencoder;
  std::ostringstream s;
  auto widths = [](const Mlp& m) {
    std::string w;
    for (std::size_t l = 0; l < m.layers.size(); ++l) w += std::to_string(m.layers[l].in) + "->";
    return w + std::to_string(m.output_size());
  };
  s << "format_version: " << ck.format_version << '\n'
    << "interval_id: " << ck.interval_id << '\n'
    << "schema_fingerprint: " << std::hex << ck.schema_fingerprint << std::dec << '\n'
    << "columns: " << ae.column_count() << '\n'
    << "embedding_dim: " << ae.embedding_dim << '\n'
    << "code_dim: " << ae.code_dim() << '\n'
    << "encoder_layers: " << widths(ae.encoder) << '\n'
    << "decoder_layers: " << widths(ae.decoder) << '\n'
    << "encoder_parameters: " << ae.encoder_parameter_count() << '\n'
    << "decoder_parameters: " << ae.decoder_parameter_count() << '\n'
    << "ae_skipped_steps: " << ck.ae_optimizer.skipped_steps << '\n'
    << "cvr_latent_dim: " << (ck.cvr.config.use_latents ? ck.cvr.latent_dim() : 0) << '\n'
    << "cvr_code_features: " << to_string(ck.cvr.config.code_features) << '\n'
    << "cvr_feature_dim: " << ck.cvr.feature_dim() << '\n'
    << "rff_rows: " << ck.rff.rows << '\n'
    << "rff_sigma: " << ck.rff.sigma << '\n'
    << "contaminate: " << (ck.settings.contaminate ? "true" : "false") << '\n';
  std::cout << s.str();
  return 0;
}

std::string config_key_help() {
  const RunConfig defaults;
  std::ostringstream s;
  s << "Config keys (JSON file, flat or nested, or --set key=value; flags win):\n";
  for (const auto& k : config_keys())
    s << "  " << k.name << std::string(k.name.size() < 30 ? 30 - k.name.size() : 1, ' ') << k.help
      << " [default: " << k.get(defaults).dump() << "]\n";
  s << "Exit codes: 0 ok, 2 config error, 3 data error, 4 invariant violation.\n";
  return s.str();
}

void fail_line(const char* kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised code features for conversion prediction"};
  app.footer(config_key_help());
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eae_o, ecvr_o, bench_o;
  std::string resume, ckpt, prev_ckpt, scenario;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic event stream (JSONL)");
  add_common(gen, gen_o, false);
  auto* train = app.add_subcommand("train", "train over all intervals; one checkpoint and metrics row each");
  add_common(train, train_o);
  train->add_option("--resume", resume, "continue from this checkpoint");
  auto* eae = app.add_subcommand("eval-ae", "auto-encoder metrics of a checkpoint on a dataset");
  add_common(eae, eae_o);
  eae->add_option("--checkpoint", ckpt, "checkpoint to evaluate")->required();
  eae->add_option("--previous", prev_ckpt, "previous checkpoint, enables gen and diff");
  auto* ecvr = app.add_subcommand("eval-cvr", "CVR logloss, AUC and calibration of a checkpoint");
  add_common(ecvr, ecvr_o);
  ecvr->add_option("--checkpoint", ckpt, "checkpoint to evaluate")->required();
  auto* bench = app.add_subcommand("bench-auction", "cached vs naive auction latency");
  add_common(bench, bench_o, false);
  bench->add_option("--checkpoint", ckpt, "model checkpoint (default: fresh model)");
  bench->add_option("--scenario", scenario, "scenario JSON: catalog_size, category_count, repetitions, warmup, seed");
  auto* inspect = app.add_subcommand("inspect-checkpoint", "print checkpoint metadata");
  inspect->add_option("checkpoint", ckpt, "checkpoint file")->required();
  for (auto* sub : {gen, train, eae, ecvr, bench, inspect}) sub->footer(config_key_help());

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_o);
    if (*train) return cmd_train(train_o, resume);
    if (*eae) return cmd_eval_ae(eae_o, ckpt, prev_ckpt);
    if (*ecvr) return cmd_eval_cvr(ecvr_o, ckpt);
    if (*bench) return cmd_bench(bench_o, ckpt, scenario);
    if (*inspect) return cmd_inspect(ckpt);
  } catch (const ConfigError& e) {
    fail_line("config", e.what());
    return 2;
  } catch (const DataError& e) {
    fail_line("data", e.what());
    return 3;
  } catch (const std::logic_error& e) {
    fail_line("invariant", e.what());
    return 4;
  } catch (const std::exception& e) {
    fail_line("data", e.what());
    return 3;
  }
  return 1;
}

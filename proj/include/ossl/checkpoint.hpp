#pragma once

// Binary checkpoint container. All integers little-endian, doubles as their
// IEEE-754 bit patterns.
//
//   "OSSL"  u32 format_version  u32 section_count
//   section*: 4-byte tag, u64 payload length, payload
//
// Sections, in order: META, AENC, AOPT, CVRM, COPT, RFFT. The byte layout of
// every payload is documented in docs/checkpoint_format.md.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ossl/errors.hpp"
#include "ossl/trainer.hpp"

namespace ossl {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void sizes(std::span<const std::size_t> v) {
    u64(v.size());
    for (auto x : v) u64(x);
  }
  void u32s(std::span<const std::uint32_t> v) {
    u64(v.size());
    for (auto x : v) u32(x);
  }
  void raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t element_size) {
    const std::uint64_t n = u64();
    if (n > (bytes_.size() - pos_) / element_size) throw DataError("checkpoint: truncated array");
    return static_cast<std::size_t>(n);
  }
  std::vector<double> f64s() {
    std::vector<double> v(count(8));
    for (double& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> sizes() {
    std::vector<std::size_t> v(count(8));
    for (auto& x : v) x = static_cast<std::size_t>(u64());
    return v;
  }
  std::vector<std::uint32_t> u32s() {
    std::vector<std::uint32_t> v(count(4));
    for (auto& x : v) x = u32();
    return v;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated data");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

namespace detail {

inline void write_mlp(ByteWriter& w, const Mlp& m) {
  w.u64(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    w.u64(m.layers[l].in);
    w.u64(m.layers[l].out);
    w.u8(static_cast<std::uint8_t>(m.activations[l]));
    w.f64s(m.layers[l].weights);
    w.f64s(m.layers[l].biases);
  }
}

inline Mlp read_mlp(ByteReader& r) {
  Mlp m;
  const std::size_t n = r.count(17);
  for (std::size_t l = 0; l < n; ++l) {
    DenseLayer layer;
    layer.in = r.u64();
    layer.out = r.u64();
    const auto act = r.u8();
    if (act > static_cast<std::uint8_t>(Activation::tanh)) throw DataError("checkpoint: bad activation");
    layer.weights = r.f64s();
    layer.biases = r.f64s();
    if (layer.weights.size() != layer.in * layer.out || layer.biases.size() != layer.out ||
        (l > 0 && m.layers.back().out != layer.in))
      throw DataError("checkpoint: inconsistent layer shapes");
    m.layers.push_back(std::move(layer));
    m.activations.push_back(static_cast<Activation>(act));
  }
  if (m.layers.empty()) throw DataError("checkpoint: empty network");
  return m;
}

inline void write_nested(ByteWriter& w, const std::vector<std::vector<double>>& v) {
  w.u64(v.size());
  for (const auto& x : v) w.f64s(x);
}

inline std::vector<std::vector<double>> read_nested(ByteReader& r) {
  std::vector<std::vector<double>> v(r.count(8));
  for (auto& x : v) x = r.f64s();
  return v;
}

inline std::string section_meta(const Checkpoint& ck) {
  ByteWriter w;
  w.i64(ck.interval_id);
  w.u64(ck.schema_fingerprint);
  w.u8(ck.settings.contaminate);
  w.u8(ck.settings.compute_metrics);
  w.u64(ck.settings.metrics_seed);
  return w.bytes();
}

inline std::string section_autoencoder(const AutoencoderParams& p) {
  ByteWriter w;
  w.sizes(p.columns);
  w.sizes(p.block_sizes);
  w.u64(p.embedding_dim);
  w.i64(p.interval_tag);
  write_nested(w, p.embeddings);
  write_mlp(w, p.encoder);
  write_mlp(w, p.decoder);
  return w.bytes();
}

inline std::string section_ae_optimizer(const OptimizerState& s) {
  ByteWriter w;
  w.f64(s.learning_rate);
  w.f64(s.momentum);
  w.u64(s.skipped_steps);
  write_nested(w, s.velocity);
  return w.bytes();
}

inline std::string section_cvr(const CvrModel& m) {
  ByteWriter w;
  w.u64(m.config.latent_dim);
  w.u8(m.config.use_latents);
  w.u8(m.config.aux_linear);
  w.u8(static_cast<std::uint8_t>(m.config.code_features));
  w.f64(m.config.init_scale);
  w.u32s(m.cardinalities);
  w.u32s(m.oov_index);
  w.sizes(m.user_columns);
  w.sizes(m.ad_columns);
  write_nested(w, m.latents);
  write_nested(w, m.aux_weights);
  w.f64(m.bias);
  w.f64s(m.code_weights);
  return w.bytes();
}

inline std::string section_cvr_optimizer(const CvrOptimizer& o) {
  ByteWriter w;
  w.f64(o.latent_learning_rate);
  w.f64(o.linear_learning_rate);
  w.u64(o.skipped_steps);
  return w.bytes();
}

inline std::string section_rff(const RffTransform& t) {
  ByteWriter w;
  w.u64(t.input_dim);
  w.u64(t.rows);
  w.f64(t.sigma);
  w.u64(t.seed);
  w.f64s(t.projection);
  w.f64s(t.phase);
  return w.bytes();
}

inline void expect_tag(ByteReader& r, std::string_view tag) {
  const auto got = r.raw(4);
  if (got != tag)
    throw DataError("checkpoint: expected section " + std::string(tag) + ", found " + std::string(got));
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const std::pair<const char*, std::string> sections[] = {
      {"META", detail::section_meta(ck)},
      {"AENC", detail::section_autoencoder(ck.autoencoder)},
      {"AOPT", detail::section_ae_optimizer(ck.ae_optimizer)},
      {"CVRM", detail::section_cvr(ck.cvr)},
      {"COPT", detail::section_cvr_optimizer(ck.cvr_optimizer)},
      {"RFFT", detail::section_rff(ck.rff)},
  };
  ByteWriter w;
  w.raw("OSSL");
  w.u32(ck.format_version);
  w.u32(static_cast<std::uint32_t>(std::size(sections)));
  for (const auto& [tag, payload] : sections) {
    w.raw(tag);
    w.u64(payload.size());
    w.raw(payload);
  }
  return w.bytes();
}

// `expected_fingerprint` is checked when non-zero.
inline Checkpoint deserialize_checkpoint(std::string_view bytes,
                                         std::uint64_t expected_fingerprint = 0) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "OSSL") throw DataError("checkpoint: bad magic bytes");
  Checkpoint ck;
  ck.format_version = r.u32();
  if (ck.format_version != kCheckpointFormatVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(ck.format_version) +
                    " (supported: " + std::to_string(kCheckpointFormatVersion) + ")");
  if (r.u32() != 6) throw DataError("checkpoint: unexpected section count");

  auto section = [&](std::string_view tag) {
    detail::expect_tag(r, tag);
    const std::uint64_t n = r.u64();
    return ByteReader(r.raw(static_cast<std::size_t>(n)));
  };
  auto finish = [](ByteReader& s, const char* tag) {
    if (!s.done()) throw DataError(std::string("checkpoint: trailing bytes in section ") + tag);
  };

  {
    auto s = section("META");
    ck.interval_id = s.i64();
    ck.schema_fingerprint = s.u64();
    ck.settings.contaminate = s.u8() != 0;
    ck.settings.compute_metrics = s.u8() != 0;
    ck.settings.metrics_seed = s.u64();
    finish(s, "META");
  }
  if (expected_fingerprint != 0 && ck.schema_fingerprint != expected_fingerprint) {
    std::ostringstream msg;
    msg << "checkpoint: schema fingerprint mismatch (checkpoint " << std::hex
        << ck.schema_fingerprint << ", schema " << expected_fingerprint << ")";
    throw DataError(msg.str());
  }
  {
    auto s = section("AENC");
    auto& p = ck.autoencoder;
    p.columns = s.sizes();
    p.block_sizes = s.sizes();
    p.embedding_dim = s.u64();
    p.interval_tag = s.i64();
    p.embeddings = detail::read_nested(s);
    p.encoder = detail::read_mlp(s);
    p.decoder = detail::read_mlp(s);
    finish(s, "AENC");
    if (p.columns.size() != p.block_sizes.size() || p.embeddings.size() != p.columns.size() ||
        p.encoder.input_size() != p.columns.size() * p.embedding_dim ||
        p.decoder.input_size() != p.encoder.output_size())
      throw DataError("checkpoint: inconsistent auto-encoder shapes");
    std::size_t total = 0;
    for (std::size_t c = 0; c < p.columns.size(); ++c) {
      total += p.block_sizes[c];
      if (p.embeddings[c].size() != p.block_sizes[c] * p.embedding_dim)
        throw DataError("checkpoint: inconsistent embedding table");
    }
    if (p.decoder.output_size() != total) throw DataError("checkpoint: inconsistent decoder output");
  }
  {
    auto s = section("AOPT");
    ck.ae_optimizer.learning_rate = s.f64();
    ck.ae_optimizer.momentum = s.f64();
    ck.ae_optimizer.skipped_steps = s.u64();
    ck.ae_optimizer.velocity = detail::read_nested(s);
    finish(s, "AOPT");
    auto tensors = ck.autoencoder.tensors();
    if (ck.ae_optimizer.velocity.size() != tensors.size())
      throw DataError("checkpoint: optimizer state does not match auto-encoder");
    for (std::size_t t = 0; t < tensors.size(); ++t)
      if (ck.ae_optimizer.velocity[t].size() != tensors[t].size())
        throw DataError("checkpoint: optimizer velocity shape mismatch");
  }
  {
    auto s = section("CVRM");
    auto& m = ck.cvr;
    m.config.latent_dim = s.u64();
    m.config.use_latents = s.u8() != 0;
    m.config.aux_linear = s.u8() != 0;
    const auto mode = s.u8();
    if (mode > static_cast<std::uint8_t>(CodeFeatureMode::none)) throw DataError("checkpoint: bad feature mode");
    m.config.code_features = static_cast<CodeFeatureMode>(mode);
    m.config.init_scale = s.f64();
    m.cardinalities = s.u32s();
    m.oov_index = s.u32s();
    m.user_columns = s.sizes();
    m.ad_columns = s.sizes();
    m.latents = detail::read_nested(s);
    m.aux_weights = detail::read_nested(s);
    m.bias = s.f64();
    m.code_weights = s.f64s();
    finish(s, "CVRM");
    const std::size_t C = m.cardinalities.size();
    if (m.oov_index.size() != C || m.latents.size() != C || m.aux_weights.size() != C)
      throw DataError("checkpoint: inconsistent CVR model column count");
    for (auto c : m.user_columns)
      if (c >= C) throw DataError("checkpoint: bad CVR column index");
    for (auto c : m.ad_columns)
      if (c >= C) throw DataError("checkpoint: bad CVR column index");
    for (std::size_t c = 0; c < C; ++c) {
      if (m.oov_index[c] >= m.cardinalities[c]) throw DataError("checkpoint: bad OOV index");
      if (m.config.use_latents && m.latents[c].size() != m.cardinalities[c] * m.config.latent_dim)
        throw DataError("checkpoint: inconsistent latent table");
      if (!m.aux_weights[c].empty() && m.aux_weights[c].size() != m.cardinalities[c])
        throw DataError("checkpoint: inconsistent aux weights");
    }
  }
  {
    auto s = section("COPT");
    ck.cvr_optimizer.latent_learning_rate = s.f64();
    ck.cvr_optimizer.linear_learning_rate = s.f64();
    ck.cvr_optimizer.skipped_steps = s.u64();
    finish(s, "COPT");
  }
  {
    auto s = section("RFFT");
    auto& t = ck.rff;
    t.input_dim = s.u64();
    t.rows = s.u64();
    t.sigma = s.f64();
    t.seed = s.u64();
    t.projection = s.f64s();
    t.phase = s.f64s();
    finish(s, "RFFT");
    if (t.projection.size() != t.rows * t.input_dim || t.phase.size() != t.rows)
      throw DataError("checkpoint: inconsistent RFF shapes");
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  if (ck.cvr.code_weights.size() !=
      code_feature_dim(ck.cvr.config.code_features, ck.autoencoder.code_dim(), ck.rff.rows))
    throw DataError("checkpoint: code weight length does not match feature mode");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_fingerprint = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes, expected_fingerprint);
}

}  // namespace ossl

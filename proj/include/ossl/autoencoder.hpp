#pragma once

// Tabular auto-encoder: one embedding table per column, concatenated and fed
// through an MLP with a tanh code layer; the decoder MLP emits one logit
// block per column, scored with block log-softmax and the mean per-column
// cross-entropy.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "ossl/errors.hpp"
#include "ossl/events.hpp"
#include "ossl/nn.hpp"
#include "ossl/rng.hpp"
#include "ossl/schema.hpp"

namespace ossl {

struct AutoencoderDims {
  std::size_t embedding_dim = 20;
  std::size_t code_dim = 12;
  std::vector<std::size_t> encoder_hidden{512};
  std::vector<std::size_t> decoder_hidden{64};

  void validate() const {
    if (embedding_dim == 0 || code_dim == 0) throw ConfigError("autoencoder: dims must be positive");
    for (auto h : encoder_hidden)
      if (h == 0) throw ConfigError("autoencoder: zero encoder hidden width");
    for (auto h : decoder_hidden)
      if (h == 0) throw ConfigError("autoencoder: zero decoder hidden width");
  }
  bool operator==(const AutoencoderDims&) const = default;
};

struct CodeVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  operator std::span<const double>() const { return values; }
  bool operator==(const CodeVector&) const = default;
};

struct AutoencoderParams {
  std::vector<std::size_t> columns;      // schema indices the encoder reads
  std::vector<std::size_t> block_sizes;  // dictionary size of each of those columns
  std::size_t embedding_dim = 0;
  std::vector<std::vector<double>> embeddings;  // per column, n_i x d row-major
  Mlp encoder;
  Mlp decoder;
  std::int64_t interval_tag = -1;  // last interval trained on, -1 when fresh

  std::size_t column_count() const { return columns.size(); }
  std::size_t code_dim() const { return encoder.output_size(); }
  std::size_t output_size() const { return decoder.output_size(); }

  // Embedding tables plus encoder MLP.
  std::size_t encoder_parameter_count() const {
    std::size_t n = encoder.parameter_count();
    for (const auto& t : embeddings) n += t.size();
    return n;
  }
  std::size_t decoder_parameter_count() const { return decoder.parameter_count(); }

  // Mean cross-entropy of uniform logits: (1/C) sum ln n_i.
  double uniform_recloss() const {
    double s = 0.0;
    for (auto n : block_sizes) s += std::log(static_cast<double>(n));
    return s / static_cast<double>(block_sizes.size());
  }

  bool same_parameters(const AutoencoderParams& o) const {
    return columns == o.columns && block_sizes == o.block_sizes &&
           embedding_dim == o.embedding_dim && embeddings == o.embeddings &&
           encoder.same_parameters(o.encoder) && decoder.same_parameters(o.decoder) &&
           interval_tag == o.interval_tag;
  }

  // Tensor views: embedding tables, then encoder, then decoder tensors.
  std::vector<std::span<double>> tensors() {
    std::vector<std::span<double>> v;
    for (auto& t : embeddings) v.emplace_back(t);
    for (auto s : parameter_views(encoder.layers)) v.push_back(s);
    for (auto s : parameter_views(decoder.layers)) v.push_back(s);
    return v;
  }
};

inline AutoencoderParams ae_init(const Schema& schema, const AutoencoderDims& dims,
                                 std::uint64_t seed) {
  dims.validate();
  AutoencoderParams p;
  p.columns = schema.encoder_columns();
  for (auto c : p.columns) p.block_sizes.push_back(schema[c].cardinality);
  p.embedding_dim = dims.embedding_dim;

  Rng rng = Rng(seed).split(0x4145);  // "AE"
  Rng emb_rng = rng.split(1);
  for (auto n : p.block_sizes) {
    std::vector<double> table(n * dims.embedding_dim);
    for (double& w : table) w = emb_rng.uniform(-0.05, 0.05);
    p.embeddings.push_back(std::move(table));
  }

  std::size_t total_out = 0;
  for (auto n : p.block_sizes) total_out += n;

  std::vector<std::size_t> enc_sizes{p.columns.size() * dims.embedding_dim};
  enc_sizes.insert(enc_sizes.end(), dims.encoder_hidden.begin(), dims.encoder_hidden.end());
  enc_sizes.push_back(dims.code_dim);
  std::vector<std::size_t> dec_sizes{dims.code_dim};
  dec_sizes.insert(dec_sizes.end(), dims.decoder_hidden.begin(), dims.decoder_hidden.end());
  dec_sizes.push_back(total_out);

  Rng enc_rng = rng.split(2), dec_rng = rng.split(3);
  p.encoder = Mlp::create(enc_sizes, Activation::relu, Activation::tanh, enc_rng);
  p.decoder = Mlp::create(dec_sizes, Activation::relu, Activation::identity, dec_rng);
  return p;
}

// Reusable buffers for one thread of forward/backward work.
struct AeWorkspace {
  std::vector<double> input;
  MlpCache encoder_cache;
  MlpCache decoder_cache;
  std::vector<double> log_probs;
  std::vector<double> upstream;
  std::vector<double> code_grad;
  std::vector<double> input_grad;
  std::vector<double> scratch;
  MlpGradients encoder_grads;
  MlpGradients decoder_grads;
};

inline void gather_embeddings(const AutoencoderParams& p, const Event& e, std::vector<double>& out) {
  const std::size_t d = p.embedding_dim;
  out.resize(p.columns.size() * d);
  for (std::size_t c = 0; c < p.columns.size(); ++c) {
    require(p.columns[c] < e.values.size(), "autoencoder: event has too few columns");
    const std::uint32_t v = e.values[p.columns[c]];
    require(v < p.block_sizes[c], "autoencoder: column value outside the dictionary");
    std::memcpy(&out[c * d], &p.embeddings[c][v * d], d * sizeof(double));
  }
}

inline std::span<const double> ae_encode_into(const AutoencoderParams& p, const Event& e,
                                              AeWorkspace& ws) {
  gather_embeddings(p, e, ws.input);
  return mlp_forward(p.encoder, ws.input, ws.encoder_cache);
}

inline CodeVector ae_encode(const AutoencoderParams& p, const Event& e, AeWorkspace& ws) {
  const auto code = ae_encode_into(p, e, ws);
  return {{code.begin(), code.end()}};
}

inline CodeVector ae_encode(const AutoencoderParams& p, const Event& e) {
  AeWorkspace ws;
  return ae_encode(p, e, ws);
}

// Decodes the cached code and returns the reconstruction loss.
inline double ae_decode_loss(const AutoencoderParams& p, const Event& e, AeWorkspace& ws) {
  const auto logits = mlp_forward(p.decoder, ws.encoder_cache.output(), ws.decoder_cache);
  ws.log_probs.resize(logits.size());
  log_softmax_blocks(logits, p.block_sizes, ws.log_probs);
  double loss = 0.0;
  std::size_t offset = 0;
  for (std::size_t c = 0; c < p.columns.size(); ++c) {
    loss -= ws.log_probs[offset + e.values[p.columns[c]]];
    offset += p.block_sizes[c];
  }
  return loss / static_cast<double>(p.columns.size());
}

inline double ae_recloss(const AutoencoderParams& p, const Event& e, AeWorkspace& ws) {
  ae_encode_into(p, e, ws);
  return ae_decode_loss(p, e, ws);
}

struct AeForward {
  CodeVector code;
  std::vector<double> log_probs;  // block log-softmax outputs
  double recloss = 0.0;
};

inline AeForward ae_forward(const AutoencoderParams& p, const Event& e, AeWorkspace& ws) {
  AeForward out;
  const auto code = ae_encode_into(p, e, ws);
  out.code.values.assign(code.begin(), code.end());
  out.recloss = ae_decode_loss(p, e, ws);
  out.log_probs = ws.log_probs;
  return out;
}

inline AeForward ae_forward(const AutoencoderParams& p, const Event& e) {
  AeWorkspace ws;
  return ae_forward(p, e, ws);
}

struct AeGradients {
  std::vector<std::vector<double>> embedding_rows;  // per column, gradient of the used row
  MlpGradients encoder;
  MlpGradients decoder;
};

// Reconstruction loss and its gradient with respect to every parameter the
// event touches. Leaves the forward caches populated.
inline double ae_gradients(const AutoencoderParams& p, const Event& e, AeWorkspace& ws,
                           AeGradients& g) {
  ae_encode_into(p, e, ws);
  const double loss = ae_decode_loss(p, e, ws);

  const double inv_c = 1.0 / static_cast<double>(p.columns.size());
  ws.upstream.resize(ws.log_probs.size());
  std::size_t offset = 0;
  for (std::size_t c = 0; c < p.columns.size(); ++c) {
    const std::size_t n = p.block_sizes[c];
    for (std::size_t j = 0; j < n; ++j)
      ws.upstream[offset + j] = std::exp(ws.log_probs[offset + j]) * inv_c;
    ws.upstream[offset + e.values[p.columns[c]]] -= inv_c;
    offset += n;
  }

  ws.code_grad.resize(p.code_dim());
  mlp_backward(p.decoder, ws.decoder_cache, ws.upstream, g.decoder, ws.code_grad, ws.scratch);
  ws.input_grad.resize(p.encoder.input_size());
  mlp_backward(p.encoder, ws.encoder_cache, ws.code_grad, g.encoder, ws.input_grad, ws.scratch);

  const std::size_t d = p.embedding_dim;
  g.embedding_rows.resize(p.columns.size());
  for (std::size_t c = 0; c < p.columns.size(); ++c)
    g.embedding_rows[c].assign(ws.input_grad.begin() + static_cast<std::ptrdiff_t>(c * d),
                               ws.input_grad.begin() + static_cast<std::ptrdiff_t>((c + 1) * d));
  return loss;
}

struct AeStepResult {
  double recloss = 0.0;  // loss before the update
  bool applied = false;
};

// One heavy-ball step on the reconstruction loss of `e`. Embedding velocity
// is kept per row and only the rows the event uses move, so untouched rows
// stay bit-identical.
inline AeStepResult ae_train_step(AutoencoderParams& p, const Event& e, OptimizerState& opt,
                                  AeWorkspace& ws, AeGradients& g) {
  AeStepResult r;
  r.recloss = ae_gradients(p, e, ws, g);

  auto tensors = p.tensors();
  if (opt.velocity.empty()) opt.attach(tensors);
  require(opt.velocity.size() == tensors.size(), "ae_train_step: optimizer state shape mismatch");

  bool finite = std::isfinite(r.recloss);
  for (const auto& row : g.embedding_rows) finite = finite && all_finite(row);
  for (const auto& l : g.encoder.layers) finite = finite && all_finite(l.weights) && all_finite(l.biases);
  for (const auto& l : g.decoder.layers) finite = finite && all_finite(l.weights) && all_finite(l.biases);
  if (!finite) {
    ++opt.skipped_steps;
    return r;
  }

  const std::size_t d = p.embedding_dim;
  const std::size_t C = p.columns.size();
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t row = e.values[p.columns[c]];
    momentum_update(std::span<double>(p.embeddings[c]).subspan(row * d, d),
                    std::span<double>(opt.velocity[c]).subspan(row * d, d), g.embedding_rows[c],
                    opt.learning_rate, opt.momentum);
  }
  std::size_t t = C;
  for (auto* pair : {&p.encoder, &p.decoder}) {
    auto& grads = pair == &p.encoder ? g.encoder : g.decoder;
    for (std::size_t l = 0; l < pair->layers.size(); ++l) {
      momentum_update(pair->layers[l].weights, opt.velocity[t++], grads.layers[l].weights,
                      opt.learning_rate, opt.momentum);
      momentum_update(pair->layers[l].biases, opt.velocity[t++], grads.layers[l].biases,
                      opt.learning_rate, opt.momentum);
    }
    ++pair->version;
  }
  r.applied = true;
  return r;
}

inline AeStepResult ae_train_step(AutoencoderParams& p, const Event& e, OptimizerState& opt) {
  AeWorkspace ws;
  AeGradients g;
  return ae_train_step(p, e, opt, ws, g);
}

inline std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t h) {
  return fnv1a64({reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)}, h);
}

inline std::uint64_t parameter_hash(const AutoencoderParams& p) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& t : p.embeddings) h = hash_doubles(t, h);
  for (const Mlp* m : {&p.encoder, &p.decoder})
    for (const auto& l : m->layers) h = hash_doubles(l.biases, hash_doubles(l.weights, h));
  return h;
}

}  // namespace ossl

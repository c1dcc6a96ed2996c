#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffurec/autodiff.hpp"
#include "diffurec/rng.hpp"
#include "diffurec/tensor.hpp"

namespace diffurec {

enum class Backbone { Transformer, Gru };

std::string to_string(Backbone backbone);
Backbone parse_backbone(const std::string& name);

struct ApproximatorConfig {
  int n_items = 0;
  int dim = 128;
  int blocks = 4;
  int heads = 4;
  int max_len = 50;
  double dropout_block = 0.1;
  double dropout_embed = 0.3;
  double layer_norm_eps = 1e-5;
  Backbone backbone = Backbone::Transformer;

  /// Throws ConfigError on non-positive sizes, odd dim, or dim % heads != 0.
  void validate() const;
};

/// How lambda is drawn for each history position.
struct MixConfig {
  /// Mean and variance of the lambda distribution; 0 disables mixing.
  double delta = 0.001;
  /// One lambda per coordinate (true) or a single scalar per position.
  bool per_dimension = true;
};

struct TransformerBlockParams {
  Tensor wq, wk, wv, wo;
  Tensor ln1_gain, ln1_bias;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_gain, ln2_bias;
};

struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
};

/// Learnable state of the approximator. Row 0 of the item table is the
/// padding row and stays zero.
struct ApproximatorParams {
  ApproximatorConfig config;
  Tensor item_embeddings;        // [(n_items + 1) x dim]
  Tensor positional_embeddings;  // [max_len x dim]
  std::vector<TransformerBlockParams> blocks;
  GruParams gru;                 // populated for Backbone::Gru only

  /// Xavier-normal weights, unit layer-norm gains, zero biases.
  static ApproximatorParams init(const ApproximatorConfig& config, Rng& rng);

  /// Every tensor with a stable name, in serialization order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> tensors();

  void zero_grad();
  bool all_finite() const;
  std::size_t parameter_count() const;
};

/// Parameters recorded on a tape.
struct BoundBlock {
  Var wq, wk, wv, wo, ln1_gain, ln1_bias, ff_w1, ff_b1, ff_w2, ff_b2, ln2_gain, ln2_bias;
};
struct BoundGru {
  Var w_update, u_update, b_update, w_reset, u_reset, b_reset, w_cand, u_cand, b_cand;
};
struct BoundApproximator {
  const ApproximatorConfig* config = nullptr;
  Var item_embeddings;
  Var positional_embeddings;
  std::vector<BoundBlock> blocks;
  BoundGru gru;
};

/// Trainable binding: backward accumulates into the parameters' grads.
BoundApproximator bind(Tape& tape, ApproximatorParams& params);
/// Read-only binding for inference.
BoundApproximator bind(Tape& tape, const ApproximatorParams& params);

/// Left-padded batch of item histories; item 0 marks padding.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> items;  // batch * length
  std::vector<std::uint8_t> mask;  // 1 = real item

  /// Keeps the most recent `max_len` items of each history and pads on the
  /// left to the longest one. Throws std::invalid_argument on an empty history.
  static SequenceBatch from(std::span<const std::vector<int>> histories, std::size_t max_len);
};

/// Sinusoidal step encoding: d[2i] = sin(s / 10000^(2i/dim)), d[2i+1] = cos(...).
/// Throws ConfigError for odd dim.
Tensor step_embedding(int s, int dim);

/// lambda ~ N(delta, delta) with shape [batch, len, dim]; zero at padded positions.
Tensor sample_lambda(Rng& rng, std::size_t batch, std::size_t len, std::size_t dim, const MixConfig& mix,
                     std::span<const std::uint8_t> mask);

/// z_i = e_i + lambda_i * (x + d) for one history e_seq [n x dim]. Positions
/// whose mask entry is 0 come out as zero vectors.
Tensor mix(const Tensor& e_seq, const Tensor& x, const Tensor& d, const MixConfig& mix, Rng& rng,
           std::span<const std::uint8_t> mask = {});

/// Batched differentiable mix: e_seq [B x n x dim], x [B x dim], d [B x dim],
/// lambda [B x n x dim] (already zero at padding).
Var mix(Var e_seq, Var x, const Tensor& d, const Tensor& lambda);

/// Post-norm Transformer over z [B x n x dim] with padded keys masked out;
/// returns the last position's final representation [B x dim].
Var transformer_forward(const BoundApproximator& p, Var z, std::span<const std::uint8_t> mask, bool train, Rng* rng);
/// Single-layer GRU over the valid positions; returns the last hidden state.
Var gru_forward(const BoundApproximator& p, Var z, std::span<const std::uint8_t> mask, bool train, Rng* rng);
/// Dispatches on config->backbone.
Var forward(const BoundApproximator& p, Var z, std::span<const std::uint8_t> mask, bool train, Rng* rng);

/// Tensor convenience for eval-mode forward.
Tensor forward(const ApproximatorParams& params, const Tensor& z, std::span<const std::uint8_t> mask);

}  // namespace diffurec

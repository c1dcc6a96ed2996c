#include "diffurec/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffurec/errors.hpp"

namespace diffurec {
namespace {

constexpr double kMaskedScore = -1e9;

Tensor xavier(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return sample_gaussian(rng, Shape{fan_in, fan_out}, 0.0, std);
}

void trainable(Tensor& t) { t.set_requires_grad(true); }

template <class Params, class Fn>
void for_each_named(Params& p, Fn&& fn) {
  fn("item_embeddings", p.item_embeddings);
  fn("positional_embeddings", p.positional_embeddings);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "block" + std::to_string(i) + ".";
    fn(pre + "wq", b.wq);
    fn(pre + "wk", b.wk);
    fn(pre + "wv", b.wv);
    fn(pre + "wo", b.wo);
    fn(pre + "ln1_gain", b.ln1_gain);
    fn(pre + "ln1_bias", b.ln1_bias);
    fn(pre + "ff_w1", b.ff_w1);
    fn(pre + "ff_b1", b.ff_b1);
    fn(pre + "ff_w2", b.ff_w2);
    fn(pre + "ff_b2", b.ff_b2);
    fn(pre + "ln2_gain", b.ln2_gain);
    fn(pre + "ln2_bias", b.ln2_bias);
  }
  if (p.config.backbone == Backbone::Gru) {
    auto& g = p.gru;
    fn("gru.w_update", g.w_update);
    fn("gru.u_update", g.u_update);
    fn("gru.b_update", g.b_update);
    fn("gru.w_reset", g.w_reset);
    fn("gru.u_reset", g.u_reset);
    fn("gru.b_reset", g.b_reset);
    fn("gru.w_cand", g.w_cand);
    fn("gru.u_cand", g.u_cand);
    fn("gru.b_cand", g.b_cand);
  }
}

template <class Params, class BindFn>
BoundApproximator bind_with(Params& params, BindFn&& b) {
  BoundApproximator out;
  out.config = &params.config;
  out.item_embeddings = b(params.item_embeddings);
  out.positional_embeddings = b(params.positional_embeddings);
  for (auto& blk : params.blocks) {
    out.blocks.push_back({b(blk.wq), b(blk.wk), b(blk.wv), b(blk.wo), b(blk.ln1_gain), b(blk.ln1_bias), b(blk.ff_w1),
                          b(blk.ff_b1), b(blk.ff_w2), b(blk.ff_b2), b(blk.ln2_gain), b(blk.ln2_bias)});
  }
  if (params.config.backbone == Backbone::Gru) {
    auto& g = params.gru;
    out.gru = {b(g.w_update), b(g.u_update), b(g.b_update), b(g.w_reset), b(g.u_reset),
               b(g.b_reset),  b(g.w_cand),   b(g.u_cand),   b(g.b_cand)};
  }
  return out;
}

void check_batch(Var z, std::span<const std::uint8_t> mask, int max_len) {
  const Shape& s = z.shape();
  if (s.size() != 3) throw DimensionError("approximator input must be [batch, len, dim], got " + shape_string(s));
  if (mask.size() != s[0] * s[1]) throw DimensionError("padding mask does not match input " + shape_string(s));
  if (s[1] > static_cast<std::size_t>(max_len))
    throw std::invalid_argument("sequence length " + std::to_string(s[1]) + " exceeds max_len " +
                                std::to_string(max_len));
  for (std::size_t b = 0; b < s[0]; ++b) {
    if (!mask[b * s[1] + s[1] - 1])
      throw std::invalid_argument("sequence " + std::to_string(b) + " is all padding (or not left-padded)");
  }
}

}  // namespace

std::string to_string(Backbone backbone) { return backbone == Backbone::Gru ? "gru" : "transformer"; }

Backbone parse_backbone(const std::string& name) {
  if (name == "transformer") return Backbone::Transformer;
  if (name == "gru") return Backbone::Gru;
  throw ConfigError("unknown backbone '" + name + "'");
}

void ApproximatorConfig::validate() const {
  if (n_items < 1) throw ConfigError("n_items must be >= 1");
  if (dim < 2 || dim % 2 != 0) throw ConfigError("dim must be a positive even number");
  if (blocks < 0) throw ConfigError("block count must be >= 0");
  if (heads < 1 || dim % heads != 0) throw ConfigError("dim must be divisible by the head count");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (!(dropout_block >= 0 && dropout_block < 1) || !(dropout_embed >= 0 && dropout_embed < 1))
    throw ConfigError("dropout rates must be in [0, 1)");
}

ApproximatorParams ApproximatorParams::init(const ApproximatorConfig& config, Rng& rng) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.dim);
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  ApproximatorParams p;
  p.config = config;
  p.item_embeddings = sample_gaussian(rng, Shape{static_cast<std::size_t>(config.n_items) + 1, d}, 0.0, emb_std);
  for (std::size_t j = 0; j < d; ++j) p.item_embeddings[j] = 0.0;
  p.positional_embeddings = sample_gaussian(rng, Shape{static_cast<std::size_t>(config.max_len), d}, 0.0, emb_std);
  const int n_blocks = config.backbone == Backbone::Transformer ? config.blocks : 0;
  for (int i = 0; i < n_blocks; ++i) {
    TransformerBlockParams b;
    b.wq = xavier(rng, d, d);
    b.wk = xavier(rng, d, d);
    b.wv = xavier(rng, d, d);
    b.wo = xavier(rng, d, d);
    b.ln1_gain = Tensor(Shape{d}, 1.0);
    b.ln1_bias = Tensor(Shape{d}, 0.0);
    b.ff_w1 = xavier(rng, d, 4 * d);
    b.ff_b1 = Tensor(Shape{4 * d}, 0.0);
    b.ff_w2 = xavier(rng, 4 * d, d);
    b.ff_b2 = Tensor(Shape{d}, 0.0);
    b.ln2_gain = Tensor(Shape{d}, 1.0);
    b.ln2_bias = Tensor(Shape{d}, 0.0);
    p.blocks.push_back(std::move(b));
  }
  if (config.backbone == Backbone::Gru) {
    auto& g = p.gru;
    g.w_update = xavier(rng, d, d);
    g.u_update = xavier(rng, d, d);
    g.b_update = Tensor(Shape{d}, 0.0);
    g.w_reset = xavier(rng, d, d);
    g.u_reset = xavier(rng, d, d);
    g.b_reset = Tensor(Shape{d}, 0.0);
    g.w_cand = xavier(rng, d, d);
    g.u_cand = xavier(rng, d, d);
    g.b_cand = Tensor(Shape{d}, 0.0);
  }
  for (auto* t : p.tensors()) trainable(*t);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> ApproximatorParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for_each_named(*this, [&](std::string name, Tensor& t) { out.emplace_back(std::move(name), &t); });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ApproximatorParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for_each_named(*this, [&](std::string name, const Tensor& t) { out.emplace_back(std::move(name), &t); });
  return out;
}

std::vector<Tensor*> ApproximatorParams::tensors() {
  std::vector<Tensor*> out;
  for_each_named(*this, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

void ApproximatorParams::zero_grad() {
  for (auto* t : tensors()) t->clear_grad();
}

bool ApproximatorParams::all_finite() const {
  for (const auto& [name, t] : named())
    if (!t->all_finite()) return false;
  return true;
}

std::size_t ApproximatorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

BoundApproximator bind(Tape& tape, ApproximatorParams& params) {
  return bind_with(params, [&](Tensor& t) { return tape.param(t); });
}

BoundApproximator bind(Tape& tape, const ApproximatorParams& params) {
  return bind_with(params, [&](const Tensor& t) { return tape.view(t); });
}

SequenceBatch SequenceBatch::from(std::span<const std::vector<int>> histories, std::size_t max_len) {
  if (histories.empty()) throw std::invalid_argument("empty batch");
  SequenceBatch out;
  out.batch = histories.size();
  for (const auto& h : histories) {
    if (h.empty()) throw std::invalid_argument("empty history");
    out.length = std::max(out.length, std::min(h.size(), max_len));
  }
  out.items.assign(out.batch * out.length, 0);
  out.mask.assign(out.batch * out.length, 0);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const auto& h = histories[b];
    const std::size_t keep = std::min(h.size(), max_len);
    const std::size_t offset = out.length - keep;
    for (std::size_t j = 0; j < keep; ++j) {
      const int item = h[h.size() - keep + j];
      if (item <= 0) throw std::invalid_argument("history item indices must be >= 1");
      out.items[b * out.length + offset + j] = item;
      out.mask[b * out.length + offset + j] = 1;
    }
  }
  return out;
}

Tensor step_embedding(int s, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("step embedding needs an even dimension, got " + std::to_string(dim));
  Tensor out(Shape{static_cast<std::size_t>(dim)});
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / dim);
    out[static_cast<std::size_t>(2 * i)] = std::sin(s / freq);
    out[static_cast<std::size_t>(2 * i + 1)] = std::cos(s / freq);
  }
  return out;
}

Tensor sample_lambda(Rng& rng, std::size_t batch, std::size_t len, std::size_t dim, const MixConfig& mix,
                     std::span<const std::uint8_t> mask) {
  if (!(mix.delta >= 0.0)) throw ConfigError("delta must be >= 0");
  Tensor lambda(Shape{batch, len, dim}, 0.0);
  if (mix.delta == 0.0) return lambda;
  const double sd = std::sqrt(mix.delta);
  for (std::size_t p = 0; p < batch * len; ++p) {
    if (!mask.empty() && !mask[p]) continue;
    double* row = lambda.data().data() + p * dim;
    if (mix.per_dimension) {
      for (std::size_t j = 0; j < dim; ++j) row[j] = rng.normal(mix.delta, sd);
    } else {
      std::fill_n(row, dim, rng.normal(mix.delta, sd));
    }
  }
  return lambda;
}

Tensor mix(const Tensor& e_seq, const Tensor& x, const Tensor& d, const MixConfig& cfg, Rng& rng,
           std::span<const std::uint8_t> mask) {
  if (e_seq.rank() != 2 || x.shape() != Shape{e_seq.dim(1)} || d.shape() != x.shape())
    throw DimensionError("mix: e_seq " + shape_string(e_seq.shape()) + ", x " + shape_string(x.shape()) + ", d " +
                         shape_string(d.shape()) + " do not agree");
  const std::size_t n = e_seq.dim(0), dim = e_seq.dim(1);
  if (!mask.empty() && mask.size() != n) throw DimensionError("mix: mask length does not match sequence");
  const Tensor lambda = sample_lambda(rng, 1, n, dim, cfg, mask);
  Tensor out(e_seq.shape(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    for (std::size_t j = 0; j < dim; ++j) out.at(i, j) = e_seq.at(i, j) + lambda[i * dim + j] * (x[j] + d[j]);
  }
  return out;
}

Var mix(Var e_seq, Var x, const Tensor& d, const Tensor& lambda) {
  const Shape& s = e_seq.shape();
  if (s.size() != 3 || x.shape() != Shape{s[0], s[2]} || d.shape() != x.shape() || lambda.shape() != s)
    throw DimensionError("mix: e_seq " + shape_string(s) + ", x " + shape_string(x.shape()) + ", d " +
                         shape_string(d.shape()) + ", lambda " + shape_string(lambda.shape()) + " do not agree");
  Tape& t = *e_seq.tape();
  Var shift = expand(add(x, t.constant(d)), 1, s[1]);
  return add(e_seq, mul(shift, t.constant(lambda)));
}

Var transformer_forward(const BoundApproximator& p, Var z, std::span<const std::uint8_t> mask, bool train, Rng* rng) {
  const ApproximatorConfig& cfg = *p.config;
  check_batch(z, mask, cfg.max_len);
  Tape& t = *z.tape();
  const std::size_t batch = z.shape()[0], n = z.shape()[1], d = z.shape()[2];
  const std::size_t heads = static_cast<std::size_t>(cfg.heads), hd = d / heads;

  // Left padding: the last slot always carries position max_len - 1.
  Var pos = slice_rows(p.positional_embeddings, static_cast<std::size_t>(cfg.max_len) - n,
                       static_cast<std::size_t>(cfg.max_len));
  Var h = add(z, pos);
  h = dropout(h, cfg.dropout_embed, train, rng);

  Tensor score_mask(Shape{batch * heads, n, n}, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t hh = 0; hh < heads; ++hh)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (!mask[b * n + j]) score_mask[((b * heads + hh) * n + i) * n + j] = kMaskedScore;
  Var mask_var = t.constant(std::move(score_mask));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  auto split_heads = [&](Var x) {
    return reshape(permute(reshape(x, Shape{batch, n, heads, hd}), {0, 2, 1, 3}), Shape{batch * heads, n, hd});
  };

  for (const auto& blk : p.blocks) {
    Var q = split_heads(matmul(h, blk.wq));
    Var k = split_heads(matmul(h, blk.wk));
    Var v = split_heads(matmul(h, blk.wv));
    Var scores = add(scale(bmm(q, k, true), inv_sqrt), mask_var);
    Var attn = dropout(softmax(scores, 2), cfg.dropout_block, train, rng);
    Var ctx = bmm(attn, v);
    ctx = reshape(permute(reshape(ctx, Shape{batch, heads, n, hd}), {0, 2, 1, 3}), Shape{batch, n, d});
    Var attn_out = dropout(matmul(ctx, blk.wo), cfg.dropout_block, train, rng);
    h = layer_norm(add(h, attn_out), blk.ln1_gain, blk.ln1_bias, cfg.layer_norm_eps);
    Var ff = add(matmul(relu(add(matmul(h, blk.ff_w1), blk.ff_b1)), blk.ff_w2), blk.ff_b2);
    ff = dropout(ff, cfg.dropout_block, train, rng);
    h = layer_norm(add(h, ff), blk.ln2_gain, blk.ln2_bias, cfg.layer_norm_eps);
  }
  return select(h, 1, n - 1);
}

Var gru_forward(const BoundApproximator& p, Var z, std::span<const std::uint8_t> mask, bool train, Rng* rng) {
  const ApproximatorConfig& cfg = *p.config;
  check_batch(z, mask, cfg.max_len);
  Tape& t = *z.tape();
  const std::size_t batch = z.shape()[0], n = z.shape()[1], d = z.shape()[2];
  const auto& g = p.gru;
  Var x_all = dropout(z, cfg.dropout_embed, train, rng);
  Var h = t.constant(Tensor(Shape{batch, d}, 0.0));
  for (std::size_t step = 0; step < n; ++step) {
    Var x = select(x_all, 1, step);
    Var u = sigmoid(add(add(matmul(x, g.w_update), matmul(h, g.u_update)), g.b_update));
    Var r = sigmoid(add(add(matmul(x, g.w_reset), matmul(h, g.u_reset)), g.b_reset));
    Var c = tanh(add(add(matmul(x, g.w_cand), matmul(mul(r, h), g.u_cand)), g.b_cand));
    // h' = h + u * (c - h)
    Var h_new = add(h, mul(u, sub(c, h)));
    bool all_valid = true, none_valid = true;
    Tensor keep(Shape{batch, d}, 0.0), hold(Shape{batch, d}, 1.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const bool valid = mask[b * n + step] != 0;
      all_valid = all_valid && valid;
      none_valid = none_valid && !valid;
      if (valid)
        for (std::size_t j = 0; j < d; ++j) keep.at(b, j) = 1.0, hold.at(b, j) = 0.0;
    }
    if (all_valid) {
      h = h_new;
    } else if (!none_valid) {
      // Padded rows keep their previous state; valid rows get h_new exactly.
      h = add(mul(h_new, t.constant(std::move(keep))), mul(h, t.constant(std::move(hold))));
    }
  }
  return h;
}

Var forward(const BoundApproximator& p, Var z, std::span<const std::uint8_t> mask, bool train, Rng* rng) {
  return p.config->backbone == Backbone::Gru ? gru_forward(p, z, mask, train, rng)
                                             : transformer_forward(p, z, mask, train, rng);
}

Tensor forward(const ApproximatorParams& params, const Tensor& z, std::span<const std::uint8_t> mask) {
  Tape tape(false);
  auto bound = bind(tape, params);
  return forward(bound, tape.constant(z), mask, false, nullptr).tensor();
}

}  // namespace diffurec

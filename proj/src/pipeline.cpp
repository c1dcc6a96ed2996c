#include "diffurec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "diffurec/errors.hpp"
#include "diffurec/eval.hpp"

namespace diffurec {
namespace {

void check_targets(std::span<const int> targets, std::size_t n_items) {
  for (int t : targets)
    if (t < 1 || static_cast<std::size_t>(t) > n_items)
      throw std::invalid_argument("target item " + std::to_string(t) + " outside [1, " + std::to_string(n_items) +
                                  "]");
}

Tensor step_rows(std::span<const int> steps, std::size_t dim) {
  Tensor out(Shape{steps.size(), dim});
  for (std::size_t b = 0; b < steps.size(); ++b) {
    const Tensor d = step_embedding(steps[b], static_cast<int>(dim));
    std::copy(d.data().begin(), d.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * dim));
  }
  return out;
}

Var lookup_sequence(Var table, const SequenceBatch& batch) {
  const std::size_t d = table.shape()[1];
  return reshape(embedding_lookup(table, batch.items), Shape{batch.batch, batch.length, d});
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
}

struct BatchSlice {
  std::vector<std::vector<int>> histories;
  std::vector<int> targets;
};

BatchSlice gather(std::span<const Example> examples, const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end) {
  BatchSlice out;
  for (std::size_t k = begin; k < end; ++k) {
    out.histories.push_back(examples[order[k]].history);
    out.targets.push_back(examples[order[k]].target);
  }
  return out;
}

void check_examples(std::span<const Example> examples, int n_items) {
  if (examples.empty()) throw std::invalid_argument("training set is empty");
  if (n_items < 1) throw std::invalid_argument("n_items must be >= 1");
  for (const auto& ex : examples) {
    if (ex.history.empty()) throw std::invalid_argument("training example without history");
    check_targets(std::span<const int>(&ex.target, 1), static_cast<std::size_t>(n_items));
  }
}

/// Shared epoch loop: `step` runs one batch and returns its loss.
template <class StepFn>
TrainResult run_epochs(std::span<const Example> examples, int n_items, const TrainConfig& config, Rng& rng,
                       ApproximatorParams& params, const TrainHooks& hooks, StepFn&& step) {
  TrainResult result;
  result.checkpoint = {config, params, n_items, 0};
  Rng order_rng = rng.derive(2);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  std::optional<ValidationScore> best;
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, order_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const auto slice = gather(examples, order, begin, std::min(order.size(), begin + batch_size));
      const double loss = step(slice, epoch, batches);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(batches),
                            epoch, batches, loss);
      total += loss;
      ++batches;
    }
    EpochLog log{epoch, total / static_cast<double>(batches), std::nullopt, std::nullopt};

    bool stop = false;
    const bool validate_now = hooks.validate && config.eval_every > 0 &&
                              (epoch % config.eval_every == 0 || epoch == config.epochs);
    if (validate_now) {
      ModelCheckpoint snapshot{config, params, n_items, epoch};
      const ValidationScore score = hooks.validate(snapshot);
      log.validation_hr10 = score.hr10;
      log.validation_ndcg10 = score.ndcg10;
      if (!best || score.better_than(*best)) {
        best = score;
        result.checkpoint = std::move(snapshot);
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= config.patience) {
        stop = true;
      }
    }
    result.epochs.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
    if (stop) break;
  }
  if (!best) {
    result.checkpoint = {config, params, n_items, static_cast<int>(result.epochs.size())};
    result.best_epoch = result.checkpoint.epoch;
  }
  return result;
}

}  // namespace

Var loss_batch(Var x0_hat, std::span<const int> targets, Var item_embeddings) {
  const Shape& es = item_embeddings.shape();
  if (es.size() != 2 || es[0] < 2) throw DimensionError("item table must be [(N + 1) x d] with N >= 1");
  const Shape& xs = x0_hat.shape();
  if (xs.size() != 2 || xs[1] != es[1] || xs[0] != targets.size())
    throw DimensionError("loss_batch: x0_hat " + shape_string(xs) + " does not match " +
                         std::to_string(targets.size()) + " targets and item table " + shape_string(es));
  const std::size_t n_items = es[0] - 1;
  check_targets(targets, n_items);
  std::vector<int> shifted(targets.begin(), targets.end());
  for (auto& t : shifted) --t;
  return cross_entropy(matmul_nt(x0_hat, slice_rows(item_embeddings, 1, n_items + 1)), shifted);
}

double loss_batch(const Tensor& x0_hat, std::span<const int> targets, const Tensor& item_embeddings) {
  Tape tape(false);
  return loss_batch(tape.view(x0_hat), targets, tape.view(item_embeddings)).item();
}

DiffusionNoise draw_diffusion_noise(const SequenceBatch& batch, int dim, const NoiseSchedule& schedule,
                                    const MixConfig& mix, Rng& rng) {
  DiffusionNoise out;
  const auto d = static_cast<std::size_t>(dim);
  for (std::size_t b = 0; b < batch.batch; ++b) out.steps.push_back(sample_step(schedule.steps(), rng));
  out.eps_x0 = sample_gaussian(rng, Shape{batch.batch, d});
  out.eps_xs = sample_gaussian(rng, Shape{batch.batch, d});
  out.lambda = sample_lambda(rng, batch.batch, batch.length, d, mix, batch.mask);
  return out;
}

Var diffusion_loss(const BoundApproximator& model, const SequenceBatch& batch, std::span<const int> targets,
                   const NoiseSchedule& schedule, const DiffusionNoise& noise, bool train, Rng* rng) {
  Var table = model.item_embeddings;
  const std::size_t d = table.shape()[1];
  if (targets.size() != batch.batch) throw DimensionError("diffusion_loss: one target per sequence required");
  check_targets(targets, table.shape()[0] - 1);

  Var x0 = embed_to_x0(embedding_lookup(table, targets), schedule, noise.eps_x0);
  Var xs = q_sample(x0, noise.steps, schedule, noise.eps_xs);
  Var z = mix(lookup_sequence(table, batch), xs, step_rows(noise.steps, d), noise.lambda);
  Var x0_hat = forward(model, z, batch.mask, train, rng);
  return loss_batch(x0_hat, targets, table);
}

Var sequential_loss(const BoundApproximator& model, Var table, const SequenceBatch& batch,
                    std::span<const int> targets, bool train, Rng* rng) {
  if (targets.size() != batch.batch) throw DimensionError("sequential_loss: one target per sequence required");
  check_targets(targets, table.shape()[0] - 1);
  Var h = forward(model, lookup_sequence(table, batch), batch.mask, train, rng);
  return loss_batch(h, targets, table);
}

TrainResult train(std::span<const Example> examples, int n_items, const TrainConfig& config, Rng& rng,
                  const TrainHooks& hooks) {
  config.validate();
  if (config.mode == TrainMode::AdversarialBaseline) return adversarial_train(examples, n_items, config, rng, hooks);
  check_examples(examples, n_items);

  Rng init_rng = rng.derive(1);
  Rng noise_rng = rng.derive(3);
  auto params = ApproximatorParams::init(config.approximator(n_items), init_rng);
  const auto schedule = NoiseSchedule::build(config.schedule_params());
  const auto mix_cfg = config.mix();
  Adam adam(AdamConfig{config.learning_rate});
  const auto params_list = params.tensors();

  return run_epochs(examples, n_items, config, rng, params, hooks,
                    [&](const BatchSlice& slice, int, std::size_t) {
                      const auto batch = SequenceBatch::from(slice.histories, static_cast<std::size_t>(config.max_len));
                      const auto noise = draw_diffusion_noise(batch, config.dim, schedule, mix_cfg, noise_rng);
                      Tape tape;
                      const auto bound = bind(tape, params);
                      Var loss = diffusion_loss(bound, batch, slice.targets, schedule, noise, true, &noise_rng);
                      const double value = loss.item();
                      if (!std::isfinite(value)) return value;
                      params.zero_grad();
                      tape.backward(loss);
                      adam.step(params_list);
                      params.zero_grad();
                      return value;
                    });
}

TrainResult adversarial_train(std::span<const Example> examples, int n_items, const TrainConfig& config, Rng& rng,
                              const TrainHooks& hooks) {
  config.validate();
  check_examples(examples, n_items);

  Rng init_rng = rng.derive(1);
  Rng dropout_rng = rng.derive(3);
  auto params = ApproximatorParams::init(config.approximator(n_items), init_rng);
  Adam adam(AdamConfig{config.learning_rate});
  const auto params_list = params.tensors();
  Tensor delta(params.item_embeddings.shape(), 0.0);
  std::vector<AdversarialStepLog> steps;

  auto result = run_epochs(
      examples, n_items, config, rng, params, hooks, [&](const BatchSlice& slice, int epoch, std::size_t index) {
        const auto batch = SequenceBatch::from(slice.histories, static_cast<std::size_t>(config.max_len));
        // The perturbed pass replays the clean pass's dropout masks.
        const Rng replay_from = dropout_rng;

        Tape tape;
        const auto bound = bind(tape, params);
        Var base = sequential_loss(bound, bound.item_embeddings, batch, slice.targets, true, &dropout_rng);
        Rng replay = replay_from;
        Var dvar = tape.variable(delta);
        Var perturbed = sequential_loss(bound, add(bound.item_embeddings, dvar), batch, slice.targets, true, &replay);
        Var total = add(base, scale(perturbed, config.gamma));

        AdversarialStepLog log{epoch, index, base.item(), perturbed.item(), total.item(), 0.0, 0.0};
        if (!std::isfinite(log.total_loss)) return log.total_loss;

        params.zero_grad();
        tape.backward(total);

        // Gamma = dL(E + Delta)/dDelta. With gamma > 0 the tape holds gamma * Gamma,
        // which has the same direction; with gamma = 0 it is recomputed.
        std::vector<double> g;
        double g_scale = 1.0;
        if (config.gamma > 0.0) {
          auto gd = dvar.grad();
          g.assign(gd.begin(), gd.end());
          g_scale = config.gamma;
        } else {
          Tape side;
          const auto frozen = bind(side, std::as_const(params));
          Var dv = side.variable(delta);
          Rng replay2 = replay_from;
          Var loss = sequential_loss(frozen, add(frozen.item_embeddings, dv), batch, slice.targets, true, &replay2);
          side.backward(loss);
          auto gd = dv.grad();
          g.assign(gd.begin(), gd.end());
        }
        if (g.empty()) g.assign(delta.size(), 0.0);

        adam.step(params_list);
        params.zero_grad();

        double norm2 = 0.0;
        for (double v : g) norm2 += v * v;
        const double norm = std::sqrt(norm2);
        if (norm > 0.0) {
          for (std::size_t i = 0; i < g.size(); ++i) delta[i] = config.epsilon_adv == 0.0 ? 0.0 : config.epsilon_adv * g[i] / norm;
        }
        double dn2 = 0.0;
        for (double v : delta.data()) dn2 += v * v;
        log.delta_norm = std::sqrt(dn2);
        log.gradient_norm = norm / g_scale;
        steps.push_back(log);
        return log.total_loss;
      });
  result.adversarial_steps = std::move(steps);
  return result;
}

TrainResult train(const SequenceDataset& dataset, const TrainConfig& config, Rng& rng,
                  std::function<void(const EpochLog&)> on_epoch) {
  const auto parts = split(dataset);
  const auto examples = training_examples(parts);
  const int n_items = static_cast<int>(dataset.n_items());
  TrainHooks hooks;
  hooks.on_epoch = std::move(on_epoch);
  if (!parts.validation.empty()) {
    const std::uint64_t seed = mix_seed(config.seed, 0x76616c6964ULL);
    hooks.validate = [&parts, seed](const ModelCheckpoint& ckpt) {
      const auto model = make_recommender(ckpt);
      EvalOptions opts;
      opts.seed = seed;
      opts.cutoffs = {10};
      const auto report = evaluate(*model, parts.validation, opts);
      return ValidationScore{report.hr.at(10), report.ndcg.at(10)};
    };
  }
  return train(examples, n_items, config, rng, hooks);
}

// ---------------------------------------------------------------------------

std::vector<double> item_scores(const Tensor& x0, const Tensor& table) {
  if (table.rank() != 2 || x0.size() != table.dim(1))
    throw DimensionError("item_scores: representation " + shape_string(x0.shape()) + " vs item table " +
                         shape_string(table.shape()));
  const std::size_t n = table.dim(0) - 1, d = table.dim(1);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = table.data().data() + (i + 1) * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x0[j] * row[j];
    scores[i] = s;
  }
  return scores;
}

std::vector<int> rank_items(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a - 1)] > scores[static_cast<std::size_t>(b - 1)];
  });
  return order;
}

std::vector<int> rounding(const Tensor& x0, const Tensor& item_embeddings) {
  return rank_items(item_scores(x0, item_embeddings));
}

std::size_t rank_of(std::span<const double> scores, int target, std::span<const int> excluded) {
  if (target < 1 || static_cast<std::size_t>(target) > scores.size())
    throw std::invalid_argument("rank_of: target " + std::to_string(target) + " outside [1, " +
                                std::to_string(scores.size()) + "]");
  std::vector<char> skip(scores.size() + 1, 0);
  for (int e : excluded)
    if (e >= 1 && static_cast<std::size_t>(e) <= scores.size()) skip[static_cast<std::size_t>(e)] = 1;
  const double st = scores[static_cast<std::size_t>(target - 1)];
  std::size_t rank = 1;
  for (std::size_t i = 1; i <= scores.size(); ++i) {
    if (static_cast<int>(i) == target || skip[i]) continue;
    const double si = scores[i - 1];
    if (si > st || (si == st && static_cast<int>(i) < target)) ++rank;
  }
  return rank;
}

X0Estimator approximator_estimator(std::shared_ptr<const ApproximatorParams> params, const MixConfig& mix_cfg) {
  return [params = std::move(params), mix_cfg](const SequenceBatch& batch, const Tensor& x_s, int s,
                                              std::span<Rng> rngs) {
    const std::size_t B = batch.batch, n = batch.length, d = static_cast<std::size_t>(params->config.dim);
    Tensor lambda(Shape{B, n, d}, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto row_mask = std::span<const std::uint8_t>(batch.mask).subspan(b * n, n);
      const Tensor lb = sample_lambda(rngs[b], 1, n, d, mix_cfg, row_mask);
      std::copy(lb.data().begin(), lb.data().end(), lambda.data().begin() + static_cast<std::ptrdiff_t>(b * n * d));
    }
    std::vector<int> steps(B, s);
    Tape tape(false);
    const auto bound = bind(tape, *params);
    Var z = mix(lookup_sequence(bound.item_embeddings, batch), tape.view(x_s), step_rows(steps, d), lambda);
    return forward(bound, z, batch.mask, false, nullptr).tensor();
  };
}

Tensor reverse_diffusion(const SequenceBatch& batch, int dim, const NoiseSchedule& schedule,
                         const X0Estimator& estimator, std::span<Rng> rngs, ReverseNoise noise) {
  if (rngs.size() != batch.batch) throw DimensionError("reverse_diffusion: one random stream per sequence required");
  const std::size_t B = batch.batch, d = static_cast<std::size_t>(dim);
  Tensor x(Shape{B, d});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d; ++j) x.at(b, j) = rngs[b].normal();
  for (int s = schedule.steps(); s >= 1; --s) {
    Tensor x0_hat = estimator(batch, x, s, rngs);
    if (x0_hat.shape() != x.shape())
      throw DimensionError("x0 estimator returned " + shape_string(x0_hat.shape()) + ", expected " +
                           shape_string(x.shape()));
    if (s == 1) return x0_hat;
    Tensor eps(Shape{B, d});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < d; ++j) eps.at(b, j) = rngs[b].normal();
    x = reverse_step(x, x0_hat, s, schedule, eps, noise);
  }
  return x;
}

Scored Recommender::score(const std::vector<int>& history, Rng& rng) const {
  auto out = score_batch(std::span<const std::vector<int>>(&history, 1), std::span<Rng>(&rng, 1));
  return std::move(out.front());
}

DiffuRecModel::DiffuRecModel(ApproximatorParams params, const TrainConfig& config, int steps)
    : params_(std::make_shared<const ApproximatorParams>(std::move(params))),
      table_(params_->item_embeddings),
      schedule_(NoiseSchedule::build([&] {
        auto p = config.schedule_params();
        if (steps > 0) p.steps = steps;
        return p;
      }())),
      estimator_(approximator_estimator(params_, config.mix())),
      max_len_(params_->config.max_len),
      noise_(config.reverse_noise()) {}

DiffuRecModel::DiffuRecModel(Tensor item_embeddings, NoiseSchedule schedule, X0Estimator estimator, int max_len,
                             ReverseNoise noise)
    : table_(std::move(item_embeddings)),
      schedule_(std::move(schedule)),
      estimator_(std::move(estimator)),
      max_len_(max_len),
      noise_(noise) {}

std::vector<Scored> DiffuRecModel::score_batch(std::span<const std::vector<int>> histories,
                                               std::span<Rng> rngs) const {
  const auto batch = SequenceBatch::from(histories, static_cast<std::size_t>(max_len_));
  const Tensor x0 = reverse_diffusion(batch, static_cast<int>(table_.dim(1)), schedule_, estimator_, rngs, noise_);
  std::vector<Scored> out;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    Tensor row = x0.row(b);
    out.push_back({item_scores(row, table_), std::move(row)});
  }
  return out;
}

SequentialModel::SequentialModel(ApproximatorParams params) : params_(std::move(params)) {}

std::vector<Scored> SequentialModel::score_batch(std::span<const std::vector<int>> histories,
                                                 std::span<Rng>) const {
  const auto batch = SequenceBatch::from(histories, static_cast<std::size_t>(params_.config.max_len));
  Tape tape(false);
  const auto bound = bind(tape, params_);
  const Tensor h = forward(bound, lookup_sequence(bound.item_embeddings, batch), batch.mask, false, nullptr).tensor();
  std::vector<Scored> out;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    Tensor row = h.row(b);
    out.push_back({item_scores(row, params_.item_embeddings), std::move(row)});
  }
  return out;
}

std::unique_ptr<Recommender> make_recommender(const ModelCheckpoint& checkpoint, int steps) {
  if (checkpoint.config.mode == TrainMode::AdversarialBaseline)
    return std::make_unique<SequentialModel>(checkpoint.params);
  return std::make_unique<DiffuRecModel>(checkpoint.params, checkpoint.config, steps);
}

std::vector<int> infer(const Recommender& model, const std::vector<int>& sequence, Rng& rng) {
  if (sequence.empty()) throw std::invalid_argument("infer: empty sequence");
  return rank_items(model.score(sequence, rng).scores);
}

std::vector<int> infer(const ModelCheckpoint& checkpoint, const std::vector<int>& sequence, int steps, Rng& rng) {
  return infer(*make_recommender(checkpoint, steps), sequence, rng);
}

}  // namespace diffurec

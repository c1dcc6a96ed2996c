#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "diffurec/adam.hpp"
#include "diffurec/approximator.hpp"
#include "diffurec/checkpoint.hpp"
#include "diffurec/config.hpp"
#include "diffurec/data.hpp"
#include "diffurec/diffusion.hpp"
#include "diffurec/schedule.hpp"

namespace diffurec {

// ---------------------------------------------------------------------------
// Loss

/// Mean over the batch of -log softmax(x0_hat[b] . E[1..N])[target_b].
/// Targets are 1-based item indices; the padding row never enters the
/// denominator. Throws std::invalid_argument on an index outside [1, N].
Var loss_batch(Var x0_hat, std::span<const int> targets, Var item_embeddings);
double loss_batch(const Tensor& x0_hat, std::span<const int> targets, const Tensor& item_embeddings);

/// Everything drawn at random for one diffusion training batch.
struct DiffusionNoise {
  std::vector<int> steps;  // s_b in [1, t]
  Tensor eps_x0;           // [B x d], embedding -> x_0
  Tensor eps_xs;           // [B x d], x_0 -> x_s
  Tensor lambda;           // [B x n x d]
};

DiffusionNoise draw_diffusion_noise(const SequenceBatch& batch, int dim, const NoiseSchedule& schedule,
                                    const MixConfig& mix, Rng& rng);

/// Training objective for one batch: corrupt the target embeddings to a
/// random step, mix them into the history, reconstruct x0_hat and score it
/// against every item. `rng` drives dropout when `train` is set.
Var diffusion_loss(const BoundApproximator& model, const SequenceBatch& batch, std::span<const int> targets,
                   const NoiseSchedule& schedule, const DiffusionNoise& noise, bool train, Rng* rng);

/// Plain next-item objective (no diffusion) over an item table `table`,
/// which may be a perturbed copy of the model's own.
Var sequential_loss(const BoundApproximator& model, Var table, const SequenceBatch& batch,
                    std::span<const int> targets, bool train, Rng* rng);

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> validation_hr10;
  std::optional<double> validation_ndcg10;
};

struct AdversarialStepLog {
  int epoch = 0;
  std::size_t batch = 0;
  double base_loss = 0.0;
  double perturbed_loss = 0.0;
  double total_loss = 0.0;
  double delta_norm = 0.0;  // after the update
  double gradient_norm = 0.0;
};

/// Validation outcome used for early stopping; compared by HR@10 then NDCG@10.
struct ValidationScore {
  double hr10 = 0.0;
  double ndcg10 = 0.0;
  bool better_than(const ValidationScore& other) const {
    return hr10 > other.hr10 || (hr10 == other.hr10 && ndcg10 > other.ndcg10);
  }
};

struct TrainHooks {
  /// Called every eval_every epochs; empty disables early stopping.
  std::function<ValidationScore(const ModelCheckpoint&)> validate;
  /// Per-epoch progress callback.
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  ModelCheckpoint checkpoint;  // best validated state, or the last epoch
  std::vector<EpochLog> epochs;
  std::vector<AdversarialStepLog> adversarial_steps;
  int best_epoch = 0;
};

/// Trains on explicit (history -> target) examples. Dispatches on
/// config.mode. Throws std::invalid_argument when `examples` is empty and
/// TrainingError when a batch loss is not finite.
TrainResult train(std::span<const Example> examples, int n_items, const TrainConfig& config, Rng& rng,
                  const TrainHooks& hooks = {});

/// Splits the dataset, trains on the training prefixes and early-stops on
/// validation HR@10.
TrainResult train(const SequenceDataset& dataset, const TrainConfig& config, Rng& rng,
                  std::function<void(const EpochLog&)> on_epoch = {});

/// Non-diffusion Transformer trained with an adversarial perturbation Delta
/// of the item table: L(E) + gamma * L(E + Delta), Delta <- eps * G / |G|.
TrainResult adversarial_train(std::span<const Example> examples, int n_items, const TrainConfig& config, Rng& rng,
                              const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Inference

/// Scores x0 . e_i for items 1..N (element i - 1 is item i).
std::vector<double> item_scores(const Tensor& x0, const Tensor& item_embeddings);
/// Item indices (1-based) by descending score, ties by ascending index.
std::vector<int> rank_items(std::span<const double> scores);
/// Full ranking of a representation against the item table.
std::vector<int> rounding(const Tensor& x0, const Tensor& item_embeddings);
/// 1-based rank of `target` under rank_items ordering; items in `excluded`
/// (other than the target) are skipped.
std::size_t rank_of(std::span<const double> scores, int target, std::span<const int> excluded = {});

/// Produces x0_hat [B x d] for a batch at step s given x_s [B x d].
/// rngs[b] belongs to sequence b.
using X0Estimator =
    std::function<Tensor(const SequenceBatch& batch, const Tensor& x_s, int s, std::span<Rng> rngs)>;

/// The approximator as an estimator: draws lambda per sequence, mixes and
/// runs an eval-mode forward pass.
X0Estimator approximator_estimator(std::shared_ptr<const ApproximatorParams> params, const MixConfig& mix);

/// Reverse chain for a batch: x_t ~ N(0, I), then x_{s-1} from x0_hat at
/// each step down to s = 1. Returns x_0 [B x d]. Row b depends only on
/// histories[b] and rngs[b].
Tensor reverse_diffusion(const SequenceBatch& batch, int dim, const NoiseSchedule& schedule,
                         const X0Estimator& estimator, std::span<Rng> rngs,
                         ReverseNoise noise = ReverseNoise::Literal);

struct Scored {
  std::vector<double> scores;  // element i - 1 is item i
  Tensor representation;       // reversed x_0 or last hidden state; empty if none
};

class Recommender {
 public:
  virtual ~Recommender() = default;
  virtual int n_items() const = 0;
  /// Scores each history; rngs[b] is consumed by histories[b] alone, so a
  /// history's scores do not depend on what else is in the batch.
  virtual std::vector<Scored> score_batch(std::span<const std::vector<int>> histories, std::span<Rng> rngs) const = 0;
  Scored score(const std::vector<int>& history, Rng& rng) const;
};

/// Diffusion recommender: reverse chain plus rounding.
class DiffuRecModel : public Recommender {
 public:
  /// steps <= 0 uses the trained horizon.
  DiffuRecModel(ApproximatorParams params, const TrainConfig& config, int steps = 0);
  /// Custom estimator over a fixed item table (oracle tests).
  DiffuRecModel(Tensor item_embeddings, NoiseSchedule schedule, X0Estimator estimator, int max_len,
                ReverseNoise noise = ReverseNoise::Literal);

  int n_items() const override { return static_cast<int>(table_.dim(0)) - 1; }
  std::vector<Scored> score_batch(std::span<const std::vector<int>> histories, std::span<Rng> rngs) const override;
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  std::shared_ptr<const ApproximatorParams> params_;
  Tensor table_;
  NoiseSchedule schedule_;
  X0Estimator estimator_;
  int max_len_;
  ReverseNoise noise_;
};

/// Deterministic next-item Transformer (adversarial-baseline checkpoints).
class SequentialModel : public Recommender {
 public:
  explicit SequentialModel(ApproximatorParams params);
  int n_items() const override { return params_.config.n_items; }
  std::vector<Scored> score_batch(std::span<const std::vector<int>> histories, std::span<Rng> rngs) const override;

 private:
  ApproximatorParams params_;
};

/// Builds the recommender a checkpoint describes. steps <= 0 keeps the trained horizon.
std::unique_ptr<Recommender> make_recommender(const ModelCheckpoint& checkpoint, int steps = 0);

/// Full ranking for one history.
std::vector<int> infer(const Recommender& model, const std::vector<int>& sequence, Rng& rng);
std::vector<int> infer(const ModelCheckpoint& checkpoint, const std::vector<int>& sequence, int steps, Rng& rng);

}  // namespace diffurec

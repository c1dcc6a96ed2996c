#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffurec/data.hpp"
#include "diffurec/pipeline.hpp"

namespace diffurec {

struct MetricPair {
  double hr = 0.0;
  double ndcg = 0.0;
};

/// hr = [rank <= K], ndcg = 1 / log2(rank + 1) when rank <= K, else 0.
/// Throws std::invalid_argument for rank < 1 or K < 1.
MetricPair metric_single(std::size_t rank, int k);

inline const std::vector<int> kDefaultCutoffs = {5, 10, 20};

struct EvalReport {
  std::string label = "all";
  std::map<int, double> hr;
  std::map<int, double> ndcg;
  std::size_t n_evaluated = 0;
  double seconds = 0.0;

  bool empty() const noexcept { return n_evaluated == 0; }
};

/// Rank of one evaluated target.
struct Outcome {
  std::size_t index = 0;  // position in the evaluated split
  std::size_t rank = 0;
  std::size_t history_length = 0;
  int target = 0;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  /// Drop items of the user's own history (other than the target) from the candidates.
  bool mask_history = false;
  std::size_t batch_size = 64;
  /// Worker threads; 0 picks std::thread::hardware_concurrency().
  unsigned threads = 1;
  std::vector<int> cutoffs = kDefaultCutoffs;
};

/// Ranks every target over the full vocabulary. Example i is scored with
/// its own stream Rng(mix_seed(seed, i)), so results do not depend on
/// batching or thread count. Throws std::invalid_argument on an empty split.
std::vector<Outcome> rank_targets(const Recommender& model, std::span<const Example> examples,
                                  const EvalOptions& options);

/// Means of the per-target metrics (an empty input gives an empty report).
EvalReport summarize(std::span<const Outcome> outcomes, const std::vector<int>& cutoffs = kDefaultCutoffs,
                     std::string label = "all");

EvalReport evaluate(const Recommender& model, std::span<const Example> examples, const EvalOptions& options);

/// Top 20% of items by training frequency (at least one item); ties at the
/// boundary go to the smaller index.
std::vector<int> head_items(std::span<const std::size_t> frequencies, double fraction = 0.2);

struct HeadTailReport {
  EvalReport head;
  EvalReport tail;
  std::vector<int> head_items;
};

/// `frequencies` is indexed by item (slot 0 unused), as from item_frequencies().
HeadTailReport head_tail_report(std::span<const Outcome> outcomes, std::span<const std::size_t> frequencies,
                                const std::vector<int>& cutoffs = kDefaultCutoffs);

struct LengthBucketReport {
  std::vector<EvalReport> buckets;     // short -> long
  std::vector<std::size_t> boundaries;  // inclusive upper bounds of the first four buckets
  std::optional<std::string> warning;  // set when fewer than 5 outcomes forced a single bucket
};

/// Nearest-rank percentile (p in (0, 100]) of `values`.
std::size_t percentile(std::vector<std::size_t> values, double p);

/// Five buckets split at the 20/40/60/80th percentiles of history length;
/// bucket k holds lengths in (b_{k-1}, b_k].
LengthBucketReport length_bucket_report(std::span<const Outcome> outcomes,
                                        const std::vector<int>& cutoffs = kDefaultCutoffs);

struct UncertaintyProbe {
  int n_reverses = 0;
  int k = 0;
  std::size_t unique_item_count = 0;
  std::vector<std::vector<int>> top_k;  // one list per reverse
  std::vector<Tensor> representations;  // reversed x_0 per reverse (may be empty)
};

/// Reverses one history n times with seeds base_seed .. base_seed + n - 1
/// and counts the distinct items in the union of the top-K lists.
UncertaintyProbe uncertainty_probe(const Recommender& model, const std::vector<int>& history, int n_reverses, int k,
                                   std::uint64_t base_seed);

/// Items by descending frequency, ties by ascending index.
std::vector<int> popularity_ranking(std::span<const std::size_t> frequencies);

/// Static popularity ranking as a recommender.
class PopularityModel : public Recommender {
 public:
  explicit PopularityModel(std::vector<std::size_t> frequencies);
  int n_items() const override { return static_cast<int>(frequencies_.size()) - 1; }
  std::vector<Scored> score_batch(std::span<const std::vector<int>> histories, std::span<Rng> rngs) const override;

 private:
  std::vector<std::size_t> frequencies_;
};

/// CSV rows `metric,K,value,bucket` (with header).
std::string report_csv(const std::vector<EvalReport>& reports);
/// Aligned human-readable table.
std::string report_table(const std::vector<EvalReport>& reports);
/// Checks 0 <= ndcg@K <= hr@K <= 1 and nesting of hr across cutoffs.
bool report_consistent(const EvalReport& report);

/// Probe output: one row per reverse with its top-K list and x_0 coordinates.
std::string probe_csv(const UncertaintyProbe& probe);

}  // namespace diffurec

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "diffurec/rng.hpp"

namespace diffurec {

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

/// Reads `user<TAB>item<TAB>timestamp` lines; blank lines are skipped.
/// Throws ParseError with the 1-based line number on malformed input.
std::vector<InteractionRecord> parse_interactions(std::istream& in);
std::vector<InteractionRecord> ingest(const std::string& path);

/// Chronological item-index sequences, one per user. Item indices are
/// 1-based; 0 is reserved for padding.
struct SequenceDataset {
  std::vector<std::vector<int>> sequences;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;  // item_ids[i - 1] is the original id of index i
  int max_len = 50;
  /// Interaction count after filtering, before truncation to max_len.
  std::size_t actions_before_truncation = 0;

  std::size_t n_items() const noexcept { return item_ids.size(); }
  std::size_t n_actions() const;
  double average_length() const;
};

struct PreprocessOptions {
  int min_count = 5;
  int max_len = 50;
  /// Repeat the item/user filter until nothing changes instead of a single pass.
  bool kcore_iterate = false;
};

/// Filters unpopular items then inactive users, orders each user's
/// interactions by timestamp (stable), assigns item indices by first
/// appearance, and keeps the most recent max_len items per user.
/// Throws PreprocessError when no sequence survives.
SequenceDataset preprocess(const std::vector<InteractionRecord>& records, const PreprocessOptions& options = {});

/// One prediction target with the history preceding it.
struct Example {
  std::size_t user = 0;
  std::vector<int> history;
  int target = 0;
};

/// Leave-one-out split: the last item is the test target, the one before it
/// the validation target, and the remaining prefix is training data.
struct DatasetSplit {
  std::vector<std::vector<int>> train;  // prefixes i_1 .. i_{n-2}
  std::vector<Example> validation;      // i_1 .. i_{n-2} -> i_{n-1}
  std::vector<Example> test;            // i_1 .. i_{n-1} -> i_n
  std::size_t excluded = 0;             // sequences shorter than 3
};

DatasetSplit split(const SequenceDataset& dataset);

/// Supervision pairs from the training prefixes: every prefix with at least
/// two items contributes (prefix without its last item -> last item).
std::vector<Example> training_examples(const DatasetSplit& split);

/// Per-item occurrence counts over the training prefixes, indexed by item (slot 0 unused).
std::vector<std::size_t> item_frequencies(const DatasetSplit& split, std::size_t n_items);

enum class SynthKind { Cyclic, Markov };
SynthKind parse_synth_kind(const std::string& name);

/// Markov chain over items 1..n: each row sends probability 0.8 to one
/// dominant successor and spreads the rest uniformly over the other items.
class MarkovSource {
 public:
  static constexpr double kDominantProbability = 0.8;

  MarkovSource(int n_items, std::uint64_t seed);

  int n_items() const noexcept { return n_items_; }
  int dominant(int item) const { return dominant_.at(static_cast<std::size_t>(item)); }
  double probability(int from, int to) const;
  int next(int current, Rng& rng) const;

 private:
  int n_items_;
  std::vector<int> dominant_;  // index 0 unused
};

/// Synthetic datasets with known structure. Cyclic: uniform start, then
/// (current mod n_items) + 1. Markov: walks through a MarkovSource.
/// Throws std::invalid_argument for n_items < 2, seq_len < 3 or n_users < 1.
SequenceDataset synth(SynthKind kind, int n_users, int n_items, int seq_len, std::uint64_t seed);
std::vector<int> cyclic_sequence(int start, int n_items, int seq_len);

/// Writes `sequences.txt` (space-separated indices, one user per line) and
/// `items.tsv` (index<TAB>original id) under `dir`.
void write_dataset(const SequenceDataset& dataset, const std::string& dir);
SequenceDataset read_dataset(const std::string& dir, int max_len = 50);

}  // namespace diffurec

#include "diffurec/data.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <cctype>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "diffurec/errors.hpp"

namespace diffurec {

namespace {

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::vector<InteractionRecord> parse_interactions(std::istream& in) {
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw ParseError("expected 3 tab-separated fields, found " + std::to_string(fields.size()), line_no);
    if (fields[0].empty() || fields[1].empty()) throw ParseError("empty user or item id", line_no);

    const std::string& ts = fields[2];
    std::int64_t timestamp = 0;
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), timestamp);
    if (ec != std::errc() || ptr != ts.data() + ts.size() || ts.empty())
      throw ParseError("timestamp '" + ts + "' is not an integer", line_no);
    if (timestamp < 0) throw ParseError("negative timestamp " + ts, line_no);
    records.push_back({fields[0], fields[1], timestamp});
  }
  return records;
}

std::vector<InteractionRecord> ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_interactions(in);
}

std::size_t SequenceDataset::n_actions() const {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size();
  return total;
}

double SequenceDataset::average_length() const {
  if (sequences.empty()) return 0.0;
  return static_cast<double>(n_actions()) / static_cast<double>(sequences.size());
}

SequenceDataset preprocess(const std::vector<InteractionRecord>& records, const PreprocessOptions& options) {
  if (options.min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  if (options.max_len < 1) throw std::invalid_argument("max_len must be >= 1");

  std::vector<char> keep(records.size(), 1);
  for (;;) {
    bool changed = false;
    std::unordered_map<std::string, int> item_count;
    for (std::size_t r = 0; r < records.size(); ++r)
      if (keep[r]) ++item_count[records[r].item_id];
    for (std::size_t r = 0; r < records.size(); ++r)
      if (keep[r] && item_count[records[r].item_id] < options.min_count) keep[r] = 0, changed = true;

    std::unordered_map<std::string, int> user_count;
    for (std::size_t r = 0; r < records.size(); ++r)
      if (keep[r]) ++user_count[records[r].user_id];
    for (std::size_t r = 0; r < records.size(); ++r)
      if (keep[r] && user_count[records[r].user_id] < options.min_count) keep[r] = 0, changed = true;

    if (!options.kcore_iterate || !changed) break;
  }

  // Group surviving records per user in first-appearance order.
  std::unordered_map<std::string, std::size_t> user_slot;
  std::vector<std::string> users;
  std::vector<std::vector<std::size_t>> per_user;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (!keep[r]) continue;
    auto [it, inserted] = user_slot.emplace(records[r].user_id, users.size());
    if (inserted) {
      users.push_back(records[r].user_id);
      per_user.emplace_back();
    }
    per_user[it->second].push_back(r);
  }
  if (users.empty()) throw PreprocessError("no sequence survives filtering with min_count " +
                                           std::to_string(options.min_count));

  SequenceDataset out;
  out.max_len = options.max_len;
  out.user_ids = users;
  std::unordered_map<std::string, int> item_index;
  for (auto& rows : per_user) {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
    std::vector<int> seq;
    seq.reserve(rows.size());
    for (std::size_t r : rows) {
      auto [it, inserted] = item_index.emplace(records[r].item_id, static_cast<int>(out.item_ids.size()) + 1);
      if (inserted) out.item_ids.push_back(records[r].item_id);
      seq.push_back(it->second);
    }
    out.actions_before_truncation += seq.size();
    if (seq.size() > static_cast<std::size_t>(options.max_len))
      seq.erase(seq.begin(), seq.end() - options.max_len);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

DatasetSplit split(const SequenceDataset& dataset) {
  DatasetSplit out;
  for (std::size_t u = 0; u < dataset.sequences.size(); ++u) {
    const auto& seq = dataset.sequences[u];
    if (seq.size() < 3) {
      ++out.excluded;
      continue;
    }
    const std::size_t n = seq.size();
    std::vector<int> train(seq.begin(), seq.end() - 2);
    out.validation.push_back({u, train, seq[n - 2]});
    out.test.push_back({u, std::vector<int>(seq.begin(), seq.end() - 1), seq[n - 1]});
    out.train.push_back(std::move(train));
  }
  return out;
}

std::vector<Example> training_examples(const DatasetSplit& split) {
  std::vector<Example> out;
  for (std::size_t k = 0; k < split.train.size(); ++k) {
    const auto& prefix = split.train[k];
    if (prefix.size() < 2) continue;
    out.push_back({split.test[k].user, std::vector<int>(prefix.begin(), prefix.end() - 1), prefix.back()});
  }
  return out;
}

std::vector<std::size_t> item_frequencies(const DatasetSplit& split, std::size_t n_items) {
  std::vector<std::size_t> freq(n_items + 1, 0);
  for (const auto& prefix : split.train)
    for (int item : prefix)
      if (item >= 1 && static_cast<std::size_t>(item) <= n_items) ++freq[static_cast<std::size_t>(item)];
  return freq;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "cyclic") return SynthKind::Cyclic;
  if (name == "markov") return SynthKind::Markov;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected cyclic or markov)");
}

MarkovSource::MarkovSource(int n_items, std::uint64_t seed) : n_items_(n_items), dominant_(n_items + 1, 0) {
  if (n_items < 2) throw std::invalid_argument("MarkovSource needs at least 2 items");
  Rng rng(mix_seed(seed, 0x6d61726b6f76ULL));
  for (int i = 1; i <= n_items; ++i) {
    // Dominant successor is any item other than i itself.
    auto j = static_cast<int>(rng.uniform_int(1, n_items - 1));
    dominant_[static_cast<std::size_t>(i)] = j >= i ? j + 1 : j;
  }
}

double MarkovSource::probability(int from, int to) const {
  if (from < 1 || from > n_items_ || to < 1 || to > n_items_) throw std::out_of_range("item out of range");
  if (to == dominant(from)) return kDominantProbability;
  return (1.0 - kDominantProbability) / (n_items_ - 1);
}

int MarkovSource::next(int current, Rng& rng) const {
  const int dom = dominant(current);
  if (rng.uniform() < kDominantProbability) return dom;
  // Uniform over the remaining n - 1 items.
  auto j = static_cast<int>(rng.uniform_int(1, n_items_ - 1));
  return j >= dom ? j + 1 : j;
}

std::vector<int> cyclic_sequence(int start, int n_items, int seq_len) {
  if (n_items < 1 || start < 1 || start > n_items) throw std::invalid_argument("cyclic start out of range");
  std::vector<int> seq;
  seq.reserve(static_cast<std::size_t>(std::max(seq_len, 0)));
  int cur = start;
  for (int k = 0; k < seq_len; ++k) {
    seq.push_back(cur);
    cur = cur % n_items + 1;
  }
  return seq;
}

SequenceDataset synth(SynthKind kind, int n_users, int n_items, int seq_len, std::uint64_t seed) {
  if (n_users < 1) throw std::invalid_argument("synth: n_users must be >= 1");
  if (n_items < 2) throw std::invalid_argument("synth: n_items must be >= 2");
  if (seq_len < 3) throw std::invalid_argument("synth: seq_len must be >= 3");

  SequenceDataset out;
  out.max_len = std::max(seq_len, 50);
  for (int i = 1; i <= n_items; ++i) out.item_ids.push_back(std::to_string(i));
  Rng rng(seed);
  std::optional<MarkovSource> source;
  if (kind == SynthKind::Markov) source.emplace(n_items, seed);
  for (int u = 0; u < n_users; ++u) {
    const auto start = static_cast<int>(rng.uniform_int(1, n_items));
    if (kind == SynthKind::Cyclic) {
      out.sequences.push_back(cyclic_sequence(start, n_items, seq_len));
    } else {
      std::vector<int> seq{start};
      while (static_cast<int>(seq.size()) < seq_len) seq.push_back(source->next(seq.back(), rng));
      out.sequences.push_back(std::move(seq));
    }
    out.user_ids.push_back("u" + std::to_string(u + 1));
  }
  out.actions_before_truncation = out.n_actions();
  return out;
}

void write_dataset(const SequenceDataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream seqs(fs::path(dir) / "sequences.txt");
  std::ofstream items(fs::path(dir) / "items.tsv");
  if (!seqs || !items) throw std::runtime_error("cannot write dataset under " + dir);
  for (const auto& seq : dataset.sequences) {
    for (std::size_t k = 0; k < seq.size(); ++k) seqs << (k ? " " : "") << seq[k];
    seqs << '\n';
  }
  for (std::size_t i = 0; i < dataset.item_ids.size(); ++i) items << (i + 1) << '\t' << dataset.item_ids[i] << '\n';
  if (!seqs || !items) throw std::runtime_error("write failed under " + dir);
}

SequenceDataset read_dataset(const std::string& dir, int max_len) {
  namespace fs = std::filesystem;
  SequenceDataset out;
  out.max_len = max_len;

  std::ifstream items(fs::path(dir) / "items.tsv");
  if (!items) throw std::runtime_error("cannot open " + (fs::path(dir) / "items.tsv").string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(items, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("items.tsv: expected index<TAB>id", line_no);
    int index = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + tab, index);
    if (ec != std::errc() || ptr != line.data() + tab || index != static_cast<int>(out.item_ids.size()) + 1)
      throw ParseError("items.tsv: indices must be 1, 2, 3, ...", line_no);
    out.item_ids.push_back(line.substr(tab + 1));
  }

  std::ifstream seqs(fs::path(dir) / "sequences.txt");
  if (!seqs) throw std::runtime_error("cannot open " + (fs::path(dir) / "sequences.txt").string());
  line_no = 0;
  const auto n = static_cast<long>(out.item_ids.size());
  while (std::getline(seqs, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    std::istringstream fields(line);
    std::vector<int> seq;
    std::string tok;
    while (fields >> tok) {
      long v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 1 || v > n)
        throw ParseError("sequences.txt: bad item index '" + tok + "'", line_no);
      seq.push_back(static_cast<int>(v));
    }
    out.actions_before_truncation += seq.size();
    if (seq.size() > static_cast<std::size_t>(max_len)) seq.erase(seq.begin(), seq.end() - max_len);
    out.sequences.push_back(std::move(seq));
    out.user_ids.push_back("u" + std::to_string(out.sequences.size()));
  }
  return out;
}

}  // namespace diffurec

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "diffurec/data.hpp"
#include "diffurec/errors.hpp"

using namespace diffurec;

namespace {

std::vector<InteractionRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("diffurec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Up to `per_user` random interactions per user over `pool` items, with
/// random timestamps.
std::vector<InteractionRecord> random_log(Rng& rng, int users, int per_user, int pool) {
  std::vector<InteractionRecord> out;
  for (int u = 0; u < users; ++u) {
    const int len = static_cast<int>(rng.uniform_int(1, per_user));
    for (int k = 0; k < len; ++k)
      out.push_back({"u" + std::to_string(u), "i" + std::to_string(rng.uniform_int(1, pool)),
                     static_cast<std::int64_t>(rng.uniform_int(0, 1000))});
  }
  return out;
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("tab-separated triple") {
    const auto r = parse("u1\ti9\t100\n");
    REQUIRE(r.size() == 1);
    CHECK(r[0].user_id == "u1");
    CHECK(r[0].item_id == "i9");
    CHECK(r[0].timestamp == 100);
  }

  TEST_CASE("comma-separated line is a parse error on line 1") {
    try {
      parse("u1,i9,100\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
    }
  }

  TEST_CASE("empty input gives no records; blank lines and CRLF are tolerated") {
    CHECK(parse("").empty());
    const auto r = parse("\nu1\ti1\t5\r\n\n\nu2\ti2\t6\n");
    CHECK(r.size() == 2);
    CHECK(r[0].timestamp == 5);
  }

  TEST_CASE("bad timestamps report their line") {
    for (const char* bad : {"u\ti\t1.5", "u\ti\tabc", "u\ti\t-3", "u\ti\t", "\ti\t3", "u\ti\t3\textra"}) {
      try {
        parse(std::string("u0\ti0\t1\n") + bad + "\n");
        FAIL("expected ParseError for " << bad);
      } catch (const ParseError& e) {
        CHECK(e.line() == 2);
      }
    }
  }

  TEST_CASE("ingest reads from a file and reports a missing one") {
    const auto dir = temp_dir("ingest");
    {
      std::ofstream out(dir / "log.tsv");
      out << "a\tx\t3\nb\ty\t4\n";
    }
    CHECK(ingest((dir / "log.tsv").string()).size() == 2);
    CHECK_THROWS(ingest((dir / "missing.tsv").string()));
  }
}

TEST_SUITE("preprocess") {
  TEST_CASE("user with four interactions is removed at min_count 5") {
    std::vector<InteractionRecord> recs;
    for (int k = 0; k < 5; ++k) {
      recs.push_back({"keep", "i" + std::to_string(k), k});
      recs.push_back({"other", "i" + std::to_string(k), k});
    }
    for (int k = 0; k < 4; ++k) recs.push_back({"short", "i" + std::to_string(k), k});
    // Three more users so every item clears the threshold on its own.
    for (int k = 0; k < 5; ++k)
      for (int extra = 0; extra < 3; ++extra) recs.push_back({"pad" + std::to_string(extra), "i" + std::to_string(k), k});
    const auto ds = preprocess(recs, {5, 50, false});
    CHECK(std::find(ds.user_ids.begin(), ds.user_ids.end(), "short") == ds.user_ids.end());
    CHECK(std::find(ds.user_ids.begin(), ds.user_ids.end(), "keep") != ds.user_ids.end());
  }

  TEST_CASE("max_len 3 keeps the last three items") {
    std::vector<InteractionRecord> recs;
    for (int k = 0; k < 5; ++k) recs.push_back({"u", "i" + std::to_string(k), 10 - k});  // reverse time order
    const auto ds = preprocess(recs, {1, 3, false});
    REQUIRE(ds.sequences.size() == 1);
    // Chronological order is i4, i3, i2, i1, i0; the last three are i2, i1, i0.
    std::vector<std::string> ids;
    for (int idx : ds.sequences[0]) ids.push_back(ds.item_ids[static_cast<std::size_t>(idx - 1)]);
    CHECK(ids == std::vector<std::string>{"i2", "i1", "i0"});
    CHECK(ds.actions_before_truncation == 5);
    CHECK(ds.n_actions() == 3);
  }

  TEST_CASE("timestamp ties keep file order; indices follow first appearance") {
    const auto recs = parse("u\tb\t5\nu\ta\t5\nu\tc\t1\n");
    const auto ds = preprocess(recs, {1, 50, false});
    REQUIRE(ds.sequences.size() == 1);
    CHECK(ds.item_ids == std::vector<std::string>{"c", "b", "a"});
    CHECK(ds.sequences[0] == std::vector<int>{1, 2, 3});
  }

  TEST_CASE("nothing surviving is a preprocessing error; min_count must be positive") {
    const auto recs = parse("u\ta\t1\nu\tb\t2\n");
    CHECK_THROWS_AS(preprocess(recs, {5, 50, false}), PreprocessError);
    CHECK_THROWS_AS(preprocess(recs, {0, 50, false}), std::invalid_argument);
  }

  TEST_CASE("filtering soundness and index density on random logs") {
    for (bool iterate : {false, true}) {
      Rng rng(iterate ? 2 : 1);
      const auto recs = random_log(rng, 400, 20, 60);
      const auto ds = preprocess(recs, {5, 8, iterate});
      std::map<std::string, int> item_count;
      for (const auto& r : recs) ++item_count[r.item_id];
      std::set<std::string> kept_items(ds.item_ids.begin(), ds.item_ids.end());
      CHECK(kept_items.size() == ds.item_ids.size());
      std::map<std::string, int> user_count;
      for (const auto& r : recs)
        if (kept_items.count(r.item_id)) ++user_count[r.user_id];
      for (const auto& item : ds.item_ids) CHECK(item_count[item] >= 5);
      for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
        if (!iterate) CHECK(user_count[ds.user_ids[u]] >= 5);
        CHECK(ds.sequences[u].size() <= 8);
        for (int idx : ds.sequences[u]) {
          REQUIRE(idx >= 1);
          REQUIRE(static_cast<std::size_t>(idx) <= ds.n_items());
        }
      }
      // Distinct ids, so index -> id is a bijection.
      std::set<std::string> ids(ds.item_ids.begin(), ds.item_ids.end());
      CHECK(ids.size() == ds.n_items());
    }
  }

  TEST_CASE("iterated k-core leaves every survivor with min_count occurrences") {
    Rng rng(3);
    const auto recs = random_log(rng, 300, 12, 80);
    const auto ds = preprocess(recs, {5, 1000, true});
    std::map<int, int> item_hits;
    for (const auto& s : ds.sequences) {
      CHECK(s.size() >= 5);
      for (int i : s) ++item_hits[i];
    }
    for (const auto& [item, hits] : item_hits) CHECK(hits >= 5);
  }
}

TEST_SUITE("split") {
  TEST_CASE("leave-one-out on [a,b,c,d,e], [a,b,c] and [a,b]") {
    SequenceDataset ds;
    ds.sequences = {{1, 2, 3, 4, 5}, {1, 2, 3}, {1, 2}};
    ds.item_ids = {"a", "b", "c", "d", "e"};
    const auto sp = split(ds);
    CHECK(sp.excluded == 1);
    REQUIRE(sp.train.size() == 2);
    CHECK(sp.train[0] == std::vector<int>{1, 2, 3});
    CHECK(sp.validation[0].history == std::vector<int>{1, 2, 3});
    CHECK(sp.validation[0].target == 4);
    CHECK(sp.test[0].history == std::vector<int>{1, 2, 3, 4});
    CHECK(sp.test[0].target == 5);
    CHECK(sp.train[1] == std::vector<int>{1});
    CHECK(sp.validation[1].history == std::vector<int>{1});
    CHECK(sp.validation[1].target == 2);
    CHECK(sp.test[1].history == std::vector<int>{1, 2});
    CHECK(sp.test[1].target == 3);
  }

  TEST_CASE("training supervision never reaches the validation or test positions") {
    const auto ds = synth(SynthKind::Markov, 50, 30, 12, 4);
    const auto sp = split(ds);
    const auto ex = training_examples(sp);
    CHECK(ex.size() == 50);
    for (const auto& e : ex) {
      const auto& seq = ds.sequences[e.user];
      // Position of the supervised target is len(history); validation and
      // test targets sit at len - 2 and len - 1.
      CHECK(e.history.size() < seq.size() - 2);
      CHECK(e.target == seq[e.history.size()]);
    }
    const auto freq = item_frequencies(sp, ds.n_items());
    CHECK(freq.size() == ds.n_items() + 1);
    std::size_t total = 0;
    for (auto f : freq) total += f;
    CHECK(total == 50 * 10);
  }
}

TEST_SUITE("synth") {
  TEST_CASE("cyclic sequences") {
    CHECK(cyclic_sequence(7, 50, 4) == std::vector<int>{7, 8, 9, 10});
    CHECK(cyclic_sequence(50, 50, 3) == std::vector<int>{50, 1, 2});
    const auto ds = synth(SynthKind::Cyclic, 20, 50, 6, 1);
    CHECK(ds.sequences.size() == 20);
    CHECK(ds.n_items() == 50);
    for (const auto& s : ds.sequences) {
      CHECK(s.size() == 6);
      for (std::size_t k = 1; k < s.size(); ++k) CHECK(s[k] == s[k - 1] % 50 + 1);
    }
  }

  TEST_CASE("markov dominant successor frequency over 1e5 transitions") {
    const MarkovSource src(20, 9);
    Rng rng(10);
    const int from = 7, dom = src.dominant(from);
    CHECK(dom != from);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += src.next(from, rng) == dom;
    CHECK(std::abs(static_cast<double>(hits) / n - 0.8) < 0.01);
    double row = 0;
    for (int to = 1; to <= 20; ++to) row += src.probability(from, to);
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(src.probability(from, dom) == doctest::Approx(0.8).epsilon(1e-12));
  }

  TEST_CASE("same arguments give the same dataset; different seeds differ") {
    for (auto kind : {SynthKind::Cyclic, SynthKind::Markov}) {
      const auto a = synth(kind, 30, 15, 8, 5), b = synth(kind, 30, 15, 8, 5), c = synth(kind, 30, 15, 8, 6);
      CHECK(a.sequences == b.sequences);
      CHECK(a.sequences != c.sequences);
    }
  }

  TEST_CASE("invalid sizes are argument errors") {
    CHECK_THROWS_AS(synth(SynthKind::Cyclic, 10, 1, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(synth(SynthKind::Markov, 10, 5, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(synth(SynthKind::Markov, 0, 5, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(parse_synth_kind("zipf"), ConfigError);
  }
}

TEST_SUITE("dataset files") {
  TEST_CASE("write then read round-trips") {
    const auto dir = temp_dir("roundtrip");
    const auto ds = synth(SynthKind::Markov, 12, 9, 7, 3);
    write_dataset(ds, dir.string());
    CHECK(std::filesystem::exists(dir / "sequences.txt"));
    CHECK(std::filesystem::exists(dir / "items.tsv"));
    const auto back = read_dataset(dir.string(), ds.max_len);
    CHECK(back.sequences == ds.sequences);
    CHECK(back.item_ids == ds.item_ids);
    std::ifstream vocab(dir / "items.tsv");
    std::string first;
    std::getline(vocab, first);
    CHECK(first == "1\t" + ds.item_ids[0]);
  }

  TEST_CASE("out-of-range indices are rejected") {
    const auto dir = temp_dir("bad_index");
    {
      std::ofstream(dir / "items.tsv") << "1\ta\n2\tb\n";
      std::ofstream(dir / "sequences.txt") << "1 2 3\n";
    }
    CHECK_THROWS(read_dataset(dir.string()));
  }
}

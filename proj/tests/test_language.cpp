#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "minimt/language.hpp"
#include "minimt/rng.hpp"

using namespace minimt;

TEST_CASE("build_universe: disjoint ranges, determinism, preconditions") {
  Universe u = Universe::build(3, 50, 7);
  CHECK(u.n_languages() == 3);
  std::set<TokenId> seen;
  for (const auto& l : u.languages()) {
    CHECK(l.v_content() == 50);
    for (TokenId t = l.surface_offset(); t < l.surface_offset() + 50; ++t)
      CHECK(seen.insert(t).second);  // pairwise disjoint
  }

  Universe u2 = Universe::build(3, 50, 7);
  CHECK(u == u2);
  Universe u3 = Universe::build(3, 50, 8);
  CHECK_FALSE(u == u3);

  CHECK_THROWS_AS(Universe::build(2, 50, 7), ValidationError);
  CHECK_THROWS_AS(Universe::build(5, 1, 7), ValidationError);
}

TEST_CASE("render: identity permutation and explicit swap") {
  CipherLanguage ident({"en", 0}, {0, 1, 2}, 100, false);
  PivotSentence p{{0, 1, 2}};
  CHECK(ident.render(p) == std::vector<TokenId>{100, 101, 102});

  CipherLanguage swapped({"x1", 1}, {1, 0}, 0, false);
  PivotSentence q{{0, 1}};
  CHECK(swapped.render(q) == std::vector<TokenId>{1, 0});

  CHECK_THROWS_AS(ident.render(PivotSentence{{3}}), ValidationError);
}

TEST_CASE("render/parse round-trip, with and without reordering") {
  for (bool reorder : {false, true}) {
    Universe u = Universe::build(5, 64, 11, 16, reorder);
    Rng rng(99);
    for (int it = 0; it < 200; ++it) {
      const auto& lang = u.at(static_cast<int>(rng.next_below(5)));
      PivotSentence p;
      int len = static_cast<int>(rng.next_range(1, 16));
      for (int i = 0; i < len; ++i)
        p.tokens.push_back(static_cast<TokenId>(rng.next_below(64)));
      auto s = lang.render(p);
      CHECK(lang.parse(s) == p);
      if (!reorder) CHECK(s.size() == p.tokens.size());
    }
  }
}

TEST_CASE("oracle_translate: identity, inversion, pivot-chain equivalence") {
  Universe u = Universe::build(5, 64, 3);
  const auto& x1 = u.by_code("x1");
  const auto& x2 = u.by_code("x2");
  const auto& en = u.pivot();

  Rng rng(5);
  for (int it = 0; it < 1000; ++it) {
    PivotSentence p;
    int len = static_cast<int>(rng.next_range(1, 16));
    for (int i = 0; i < len; ++i)
      p.tokens.push_back(static_cast<TokenId>(rng.next_below(64)));
    auto s = x1.render(p);

    CHECK(oracle_translate(s, x1, x1) == s);
    CHECK(oracle_translate(oracle_translate(s, x1, x2), x2, x1) == s);
    // X -> en -> Y chain equals the direct X -> Y oracle.
    auto via_pivot = oracle_translate(oracle_translate(s, x1, en), en, x2);
    CHECK(via_pivot == oracle_translate(s, x1, x2));
  }

  CHECK_THROWS_AS(oracle_translate(std::vector<TokenId>{9999}, x1, x2),
                  ValidationError);
}

TEST_CASE("exact language identification by token membership") {
  Universe u = Universe::build(4, 32, 21);
  CHECK(u.language_index_of(0) == 0);
  CHECK(u.language_index_of(32) == 1);
  CHECK(u.language_index_of(4 * 32 - 1) == 3);
  CHECK_FALSE(u.language_index_of(4 * 32).has_value());
  CHECK_FALSE(u.language_index_of(-1).has_value());
}

TEST_CASE("sample_pivot: uniform when s=0, determinism") {
  Universe u = Universe::build(3, 10, 17);
  PivotSampleSpec spec;
  spec.length = LengthDist::uniform(4, 12);
  spec.zipf_s = 0.0;
  spec.count = 20000;
  spec.seed = 123;
  auto corpus = sample_pivot(u, spec);
  REQUIRE(corpus.size() == 20000);

  std::map<TokenId, int64_t> freq;
  int64_t total = 0;
  for (const auto& p : corpus)
    for (TokenId t : p.tokens) {
      ++freq[t];
      ++total;
    }
  double expect = static_cast<double>(total) / 10.0;
  for (const auto& [tok, n] : freq) {
    CHECK(tok >= 0);
    CHECK(tok < 10);
    CHECK(std::abs(static_cast<double>(n) - expect) / expect < 0.05);
  }

  auto corpus2 = sample_pivot(u, spec);
  CHECK(corpus == corpus2);
}

TEST_CASE("sample_pivot: zipf rank-frequency ratio matches the analytic pmf") {
  // With exponent s, p(rank1)/p(rank2) = 2^s analytically; the empirical
  // ratio from the sampler must agree within 10%.
  Universe u = Universe::build(3, 50, 29);
  PivotSampleSpec spec;
  spec.length = LengthDist::uniform(4, 12);
  spec.zipf_s = 1.2;
  spec.count = 100000;
  spec.seed = 31;
  auto corpus = sample_pivot(u, spec);

  std::vector<int64_t> freq(50, 0);
  for (const auto& p : corpus)
    for (TokenId t : p.tokens) ++freq[static_cast<size_t>(t)];
  // Rank 1 and 2 are tokens 0 and 1 by construction.
  double ratio = static_cast<double>(freq[0]) / static_cast<double>(freq[1]);
  double expect = std::pow(2.0, 1.2);
  CHECK(std::abs(ratio - expect) / expect < 0.10);

  // Cross-check the full empirical distribution against the analytic pmf.
  double harm = 0;
  for (int k = 1; k <= 50; ++k) harm += std::pow(k, -1.2);
  int64_t total = 0;
  for (auto n : freq) total += n;
  for (int k = 0; k < 50; ++k) {
    double expected_p = std::pow(k + 1, -1.2) / harm;
    double got_p = static_cast<double>(freq[static_cast<size_t>(k)]) /
                   static_cast<double>(total);
    CHECK(std::abs(got_p - expected_p) < 0.15 * expected_p + 2e-4);
  }
}

TEST_CASE("sample_pivot: lengths clipped to [1, max_len]") {
  Universe u = Universe::build(3, 16, 1, 6);
  PivotSampleSpec spec;
  spec.length = LengthDist::uniform(1, 30);
  spec.count = 500;
  spec.seed = 77;
  for (const auto& p : sample_pivot(u, spec)) {
    CHECK(p.tokens.size() >= 1);
    CHECK(p.tokens.size() <= 6);
  }
}

TEST_CASE("direction sets") {
  Universe u = Universe::build(3, 8, 2);
  auto all = all_directions(u);
  CHECK(all.size() == 6);  // 3 * 2 ordered pairs
  CHECK(english_centric_directions(u).size() == 4);
  CHECK(direct_directions(u).size() == 2);

  Universe u5 = Universe::build(5, 8, 2);
  CHECK(english_centric_directions(u5).size() == 8);
  CHECK(direct_directions(u5).size() == 12);
}

TEST_CASE("make_corpus: split disjointness and direction restriction") {
  Universe u = Universe::build(4, 32, 5);
  CorpusSpec spec;
  spec.train_directions = english_centric_directions(u);
  spec.eval_directions = all_directions(u);
  spec.pairs_per_direction = 50;
  spec.dev_per_direction = 6;
  spec.test_per_direction = 9;
  spec.sample.length = LengthDist::uniform(3, 10);
  spec.seed = 91;
  CorpusBundle c = make_corpus(u, spec);

  CHECK(c.train.size() == 6 * 50);
  CHECK(c.dev.size() == 12 * 6);
  CHECK(c.test.size() == 12 * 9);

  // Train contains only English-centric pairs.
  for (const auto& p : c.train)
    CHECK((p.src_lang == "en" || p.tgt_lang == "en"));

  // Pivot-sentence sets of the three splits are pairwise disjoint.
  auto pivots = [&](const std::vector<SentencePair>& pairs) {
    std::set<std::vector<TokenId>> out;
    for (const auto& p : pairs)
      out.insert(u.by_code(p.src_lang).parse(p.src).tokens);
    return out;
  };
  auto tr = pivots(c.train), dv = pivots(c.dev), ts = pivots(c.test);
  for (const auto& p : dv) CHECK(tr.count(p) == 0);
  for (const auto& p : ts) {
    CHECK(tr.count(p) == 0);
    CHECK(dv.count(p) == 0);
  }

  // Pair contents are consistent with the oracle.
  for (const auto& p : c.dev) {
    auto want =
        oracle_translate(p.src, u.by_code(p.src_lang), u.by_code(p.tgt_lang));
    CHECK(p.tgt == want);
  }

  // Determinism.
  CorpusBundle c2 = make_corpus(u, spec);
  CHECK(c.train == c2.train);
  CHECK(c.dev == c2.dev);
  CHECK(c.test == c2.test);
}

TEST_CASE("make_corpus: all-direction universe has all labels") {
  Universe u = Universe::build(3, 32, 5);
  auto dirs = all_directions(u);
  CorpusBundle c = make_corpus(u, dirs, 10, 3);
  std::set<std::string> labels;
  for (const auto& p : c.train) labels.insert(p.direction().label());
  CHECK(labels.size() == 6);
  CHECK_THROWS_AS(
      make_corpus(u, std::vector<Direction>{{"en", "zz"}}, 10, 3),
      ValidationError);
}

TEST_CASE("universe json round-trip") {
  Universe u = Universe::build(5, 64, 42, 16, true);
  Universe v = Universe::from_json(u.to_json());
  CHECK(u == v);
}

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "minimt/corpus.hpp"
#include "minimt/rng.hpp"

using namespace minimt;
namespace fs = std::filesystem;

namespace {

Universe test_universe() { return Universe::build(4, 32, 77); }

SentencePair make_pair(const Universe& u, const std::string& s,
                       const std::string& t, int src_len, int tgt_len,
                       uint64_t seed) {
  Rng rng(seed);
  PivotSentence ps, pt;
  for (int i = 0; i < src_len; ++i)
    ps.tokens.push_back(static_cast<TokenId>(rng.next_below(32)));
  pt.tokens = ps.tokens;
  pt.tokens.resize(static_cast<size_t>(tgt_len),
                   static_cast<TokenId>(rng.next_below(32)));
  while (static_cast<int>(pt.tokens.size()) < tgt_len)
    pt.tokens.push_back(static_cast<TokenId>(rng.next_below(32)));
  return {s, t, u.by_code(s).render(ps), u.by_code(t).render(pt)};
}

fs::path temp_file(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("minimt_test_" + name);
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("filter rules: length boundary, ratio boundary, lid, malformed") {
  Universe u = test_universe();
  auto lid = membership_predicate(u);
  FilterConfig cfg;
  cfg.max_words = 250;
  cfg.max_ratio = 3.0;
  cfg.lid_enabled = true;

  SentencePair too_long = make_pair(u, "en", "x1", 251, 10, 1);
  CHECK(classify_pair(too_long, cfg, &lid) == FilterReason::Length);

  SentencePair at_limit = make_pair(u, "en", "x1", 250, 250, 2);
  CHECK(classify_pair(at_limit, cfg, &lid) == FilterReason::Keep);

  // Ratio of exactly 3 is kept; "exceeding 3" means strictly greater.
  SentencePair ratio3 = make_pair(u, "en", "x1", 9, 3, 3);
  CHECK(classify_pair(ratio3, cfg, &lid) == FilterReason::Keep);
  SentencePair ratio4 = make_pair(u, "en", "x1", 12, 3, 4);
  CHECK(classify_pair(ratio4, cfg, &lid) == FilterReason::Ratio);
  SentencePair inv_ratio = make_pair(u, "en", "x1", 3, 13, 5);
  CHECK(classify_pair(inv_ratio, cfg, &lid) == FilterReason::Ratio);

  // One token from the wrong language's range trips the detector.
  SentencePair bad_lid = make_pair(u, "en", "x1", 8, 8, 6);
  bad_lid.src[3] = u.by_code("x2").surface_offset();
  CHECK(classify_pair(bad_lid, cfg, &lid) == FilterReason::Lid);

  SentencePair empty_side = make_pair(u, "en", "x1", 4, 4, 7);
  empty_side.tgt.clear();
  CHECK(classify_pair(empty_side, cfg, &lid) == FilterReason::Malformed);

  cfg.lid_enabled = false;
  CHECK(classify_pair(bad_lid, cfg, &lid) == FilterReason::Keep);
}

TEST_CASE("filter_corpus: exact tallies, conservation, idempotence, order") {
  Universe u = test_universe();
  auto lid = membership_predicate(u);
  FilterConfig cfg;
  cfg.max_words = 20;
  cfg.max_ratio = 3.0;

  std::vector<SentencePair> corpus;
  for (int i = 0; i < 100; ++i)
    corpus.push_back(make_pair(u, "en", "x1", 8, 8, 100 + i));
  for (int i = 0; i < 7; ++i)
    corpus.push_back(make_pair(u, "en", "x2", 21, 8, 200 + i));
  for (int i = 0; i < 5; ++i)
    corpus.push_back(make_pair(u, "x1", "x2", 16, 4, 300 + i));
  for (int i = 0; i < 3; ++i) {
    auto p = make_pair(u, "en", "x3", 6, 6, 400 + i);
    p.tgt[0] = u.by_code("x1").surface_offset() + 5;
    corpus.push_back(p);
  }
  for (int i = 0; i < 2; ++i) {
    auto p = make_pair(u, "en", "x1", 4, 4, 500 + i);
    p.src.clear();
    corpus.push_back(p);
  }

  FilterTally tally;
  auto kept = filter_corpus(corpus, cfg, lid, &tally);
  CHECK(tally.kept == 100);
  CHECK(tally.length == 7);
  CHECK(tally.ratio == 5);
  CHECK(tally.lid == 3);
  CHECK(tally.malformed == 2);
  CHECK(tally.total() == corpus.size());
  CHECK(kept.size() + tally.rejected() == corpus.size());

  // Idempotence.
  FilterTally tally2;
  auto kept2 = filter_corpus(kept, cfg, lid, &tally2);
  CHECK(kept2 == kept);
  CHECK(tally2.rejected() == 0);

  // Order-insensitive membership.
  std::vector<SentencePair> shuffled = corpus;
  Rng rng(9);
  rng.shuffle(shuffled.data(), shuffled.size());
  auto kept3 = filter_corpus(shuffled, cfg, lid, nullptr);
  auto key = [](const SentencePair& p) {
    return std::make_tuple(p.src_lang, p.tgt_lang, p.src, p.tgt);
  };
  std::multiset<decltype(key(kept[0]))> a, b;
  for (const auto& p : kept) a.insert(key(p));
  for (const auto& p : kept3) b.insert(key(p));
  CHECK(a == b);
}

TEST_CASE("mix_for_direct_ft: min rule, reproducible sample, paper-scale count") {
  Universe u = Universe::build(7, 32, 13);  // 6 non-pivot -> 12 E-centric dirs
  std::vector<SentencePair> ec, direct;
  auto dirs = english_centric_directions(u);
  REQUIRE(dirs.size() == 12);
  // One direction has fewer pairs than the cap.
  for (int i = 0; i < 7; ++i)
    ec.push_back(make_pair(u, dirs[0].src, dirs[0].tgt, 5, 5, 1000 + i));
  for (size_t d = 1; d < dirs.size(); ++d)
    for (int i = 0; i < 100; ++i)
      ec.push_back(make_pair(u, dirs[d].src, dirs[d].tgt, 5, 5,
                             2000 + 100 * d + i));
  for (int i = 0; i < 405; ++i)
    direct.push_back(make_pair(u, "x1", "x2", 5, 5, 90000 + i));

  MixSpec spec;
  spec.cap_per_direction = 10;
  auto mixed = mix_for_direct_ft(ec, direct, spec, 5);
  // 11 directions contribute the cap, the short one contributes all 7;
  // with the paper-scale analogue 12 x cap + |direct| when all are full.
  CHECK(mixed.size() == 11 * 10 + 7 + 405);

  std::map<std::string, int> per_dir;
  for (const auto& p : mixed)
    if (p.src_lang == "en" || p.tgt_lang == "en")
      ++per_dir[p.direction().label()];
  CHECK(per_dir[dirs[0].label()] == 7);
  for (size_t d = 1; d < dirs.size(); ++d) CHECK(per_dir[dirs[d].label()] == 10);

  auto mixed2 = mix_for_direct_ft(ec, direct, spec, 5);
  CHECK(mixed == mixed2);
  auto mixed3 = mix_for_direct_ft(ec, direct, spec, 6);
  CHECK(mixed != mixed3);
}

TEST_CASE("dedup_against") {
  Universe u = test_universe();
  std::vector<SentencePair> train, holdout;
  for (int i = 0; i < 20; ++i)
    train.push_back(make_pair(u, "en", "x1", 6, 6, 600 + i));

  // train vs itself -> empty.
  std::vector<std::span<const SentencePair>> hs{train};
  CHECK(dedup_against(train, hs).empty());

  // Disjoint holdout -> unchanged.
  for (int i = 0; i < 5; ++i)
    holdout.push_back(make_pair(u, "en", "x1", 6, 6, 700 + i));
  std::vector<std::span<const SentencePair>> hs2{holdout};
  CHECK(dedup_against(train, hs2) == train);

  // One injected overlap -> size - 1.
  holdout.push_back(train[3]);
  std::vector<std::span<const SentencePair>> hs3{holdout};
  CHECK(dedup_against(train, hs3).size() == train.size() - 1);
}

TEST_CASE("corpus tsv round-trip and parse errors") {
  Universe u = test_universe();
  std::vector<SentencePair> corpus;
  for (int i = 0; i < 10000; ++i)
    corpus.push_back(make_pair(u, i % 2 ? "en" : "x2", i % 2 ? "x1" : "en",
                               1 + i % 12, 1 + (i * 7) % 12, 800 + i));
  fs::path p = temp_file("roundtrip.tsv");
  write_corpus(corpus, p);
  CHECK(read_corpus(p) == corpus);
  fs::remove(p);

  fs::path empty = temp_file("empty.tsv");
  { std::ofstream out(empty); }
  CHECK(read_corpus(empty).empty());
  fs::remove(empty);

  fs::path bad = temp_file("bad.tsv");
  {
    std::ofstream out(bad);
    out << "en\tx1\t1 2 3\t4 5\n";
    out << "en\tx1\t1 2 3\n";  // 3 fields
  }
  try {
    read_corpus(bad);
    CHECK(false);
  } catch (const RuntimeFailure& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  fs::remove(bad);

  fs::path missing = temp_file("missing.tsv");
  CHECK_THROWS_AS(read_corpus(missing), RuntimeFailure);
}

TEST_CASE("filter_file streams and tallies") {
  Universe u = test_universe();
  auto lid = membership_predicate(u);
  std::vector<SentencePair> corpus;
  for (int i = 0; i < 50; ++i)
    corpus.push_back(make_pair(u, "en", "x1", 6, 6, 900 + i));
  corpus.push_back(make_pair(u, "en", "x1", 15, 3, 999));  // ratio 5

  fs::path in = temp_file("filter_in.tsv");
  fs::path out = temp_file("filter_out.tsv");
  write_corpus(corpus, in);
  FilterConfig cfg;
  auto tally = filter_file(in, out, cfg, lid);
  CHECK(tally.kept == 50);
  CHECK(tally.ratio == 1);
  CHECK(read_corpus(out).size() == 50);
  fs::remove(in);
  fs::remove(out);
}

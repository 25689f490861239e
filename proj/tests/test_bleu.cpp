#include <doctest.h>

#include <cmath>
#include <map>

#include "minimt/eval/bleu.hpp"
#include "minimt/rng.hpp"

using namespace minimt;
using namespace minimt::mt_eval;

namespace {

using Sent = std::vector<TokenId>;
using Corpus = std::vector<Sent>;

// Independent reference implementation used as the oracle for property
// tests: n-gram counting via explicit vector keys, long-double arithmetic,
// written directly from the definition rather than sharing any code with
// the implementation under test.
double reference_bleu(const Corpus& hyps, const Corpus& refs) {
  long double match[5] = {0, 0, 0, 0, 0};
  long double total[5] = {0, 0, 0, 0, 0};
  long double hyp_len = 0, ref_len = 0;
  for (size_t s = 0; s < hyps.size(); ++s) {
    const Sent& h = hyps[s];
    const Sent& r = refs[s];
    hyp_len += static_cast<long double>(h.size());
    ref_len += static_cast<long double>(r.size());
    for (int n = 1; n <= 4; ++n) {
      std::map<std::vector<TokenId>, long long> hc, rc;
      for (size_t i = 0; i + static_cast<size_t>(n) <= h.size(); ++i)
        ++hc[std::vector<TokenId>(h.begin() + static_cast<long>(i),
                                  h.begin() + static_cast<long>(i) + n)];
      for (size_t i = 0; i + static_cast<size_t>(n) <= r.size(); ++i)
        ++rc[std::vector<TokenId>(r.begin() + static_cast<long>(i),
                                  r.begin() + static_cast<long>(i) + n)];
      for (const auto& [g, c] : hc) {
        total[n] += static_cast<long double>(c);
        auto it = rc.find(g);
        if (it != rc.end())
          match[n] += static_cast<long double>(std::min(c, it->second));
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  long double smooth = 1.0, logp = 0.0;
  int eff = 0;
  for (int n = 1; n <= 4; ++n) {
    if (total[n] == 0) break;
    ++eff;
    long double p = match[n] > 0 ? match[n] / total[n]
                                 : (smooth *= 2.0, 1.0L / (smooth * total[n]));
    logp += std::log(p);
  }
  if (eff == 0) return 0.0;
  long double bp = hyp_len >= ref_len ? 1.0L : std::exp(1.0L - ref_len / hyp_len);
  return static_cast<double>(100.0L * bp * std::exp(logp / eff));
}

}  // namespace

TEST_CASE("corpus_bleu frozen fixtures (hand-computed, 4 decimals)") {
  struct Fixture {
    const char* name;
    Corpus hyps, refs;
    double expected;
  };
  // identity: all precisions 1, BP 1.
  // bp_e_minus_025: precisions 4/4,3/3,2/2,1/1; BP = exp(1 - 5/4) = e^-0.25.
  // longer_hyp: 4/5 * 3/4 * 2/3 * 1/2 = 0.2, BLEU = 100 * 0.2^(1/4).
  // short_eff3: no 4-grams exist, effective order 3, perfect match.
  // smoothed4: p4 = 1/(2*1); 100 * (3/4 * 2/3 * 1/2 * 1/2)^(1/4).
  // smoothed234: p2 = 1/(2*3), p3 = 1/(4*2), p4 = 1/(8*1) with p1 = 1/4.
  // clipping: "1" clipped to 2/4, "1 1" to 1/3, p3 = 1/(2*2), p4 = 1/(4*1).
  // empty_hyp: zero-length hypothesis scores 0.
  // single_token: effective order 1, p1 = 1, BP = exp(1-3) = e^-2.
  // multi_sentence / all_wrong / half_corpus: aggregated corpus cases.
  const std::vector<Fixture> fixtures = {
      {"identity", {{1, 2, 3, 4, 5}}, {{1, 2, 3, 4, 5}}, 100.0000},
      {"bp_e_minus_025", {{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}, 77.8801},
      {"longer_hyp", {{1, 2, 3, 4, 5}}, {{1, 2, 3, 4}}, 66.8740},
      {"short_eff3", {{1, 2, 3}}, {{1, 2, 3}}, 100.0000},
      {"smoothed4", {{1, 2, 3, 9}}, {{1, 2, 3, 4}}, 59.4604},
      {"smoothed234", {{1, 7, 8, 9}}, {{1, 2, 3, 4}}, 15.9736},
      {"clipping", {{1, 1, 1, 1}}, {{1, 1}}, 31.9472},
      {"empty_hyp", {{}}, {{1, 2}}, 0.0000},
      {"single_token", {{1}}, {{1, 2, 3}}, 13.5335},
      {"multi_sentence",
       {{1, 2, 3, 4, 5}, {6, 7, 8}, {9, 9, 1, 2}},
       {{1, 2, 3, 4, 6}, {6, 7, 8}, {9, 1, 2, 5}},
       61.6049},
      {"all_wrong", {{5, 6, 7, 8}}, {{1, 2, 3, 4}}, 7.9868},
      {"half_corpus",
       {{1, 2, 3, 4}, {5, 6, 7, 8}},
       {{1, 2, 3, 4}, {1, 2, 3, 4}},
       50.0000},
  };
  for (const auto& f : fixtures) {
    INFO("fixture ", f.name);
    double got = corpus_bleu(f.hyps, f.refs);
    CHECK(std::abs(got - f.expected) < 5e-5);
    CHECK(std::abs(got - reference_bleu(f.hyps, f.refs)) < 1e-9);
  }
  CHECK(std::abs(corpus_bleu({{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}) -
                 100.0 * std::exp(-0.25)) < 1e-9);
}

TEST_CASE("corpus_bleu input validation") {
  CHECK_THROWS_AS(corpus_bleu({{1}}, {{1}, {2}}), ValidationError);
  CHECK_THROWS_AS(corpus_bleu({}, {}), ValidationError);
  CHECK_THROWS_AS(corpus_bleu({{1}}, {{}}), ValidationError);
}

TEST_CASE("corpus_bleu agrees with the reference on random corpora") {
  Rng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    Corpus hyps, refs;
    int n = 1 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < n; ++i) {
      int rl = 1 + static_cast<int>(rng.next_below(12));
      Sent ref;
      for (int k = 0; k < rl; ++k)
        ref.push_back(static_cast<TokenId>(rng.next_below(8)));
      Sent hyp = ref;
      int hl = static_cast<int>(rng.next_below(14));
      hyp.resize(static_cast<size_t>(hl));
      for (auto& t : hyp)
        if (rng.next_unit() < 0.3) t = static_cast<TokenId>(rng.next_below(8));
      refs.push_back(ref);
      hyps.push_back(hyp);
    }
    double got = corpus_bleu(hyps, refs);
    double want = reference_bleu(hyps, refs);
    CHECK(std::abs(got - want) < 1e-9);
  }
}

TEST_CASE("corpus permutation invariance") {
  Rng rng(77);
  Corpus hyps, refs;
  for (int i = 0; i < 25; ++i) {
    Sent ref, hyp;
    int rl = 2 + static_cast<int>(rng.next_below(10));
    for (int k = 0; k < rl; ++k)
      ref.push_back(static_cast<TokenId>(rng.next_below(6)));
    hyp = ref;
    if (rng.next_unit() < 0.5) hyp.push_back(static_cast<TokenId>(rng.next_below(6)));
    refs.push_back(ref);
    hyps.push_back(hyp);
  }
  double base = corpus_bleu(hyps, refs);
  std::vector<size_t> order(hyps.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(order.data(), order.size());
    Corpus h2, r2;
    for (size_t i : order) {
      h2.push_back(hyps[i]);
      r2.push_back(refs[i]);
    }
    CHECK(corpus_bleu(h2, r2) == base);
  }
}

TEST_CASE("perfect-match injection never lowers BLEU when BP stays 1") {
  Rng rng(88);
  for (int trial = 0; trial < 30; ++trial) {
    Corpus hyps, refs;
    int n = 1 + static_cast<int>(rng.next_below(10));
    for (int i = 0; i < n; ++i) {
      Sent ref;
      int rl = 2 + static_cast<int>(rng.next_below(8));
      for (int k = 0; k < rl; ++k)
        ref.push_back(static_cast<TokenId>(rng.next_below(6)));
      // Hypothesis at least as long as the reference keeps BP = 1.
      Sent hyp = ref;
      hyp.push_back(static_cast<TokenId>(rng.next_below(6)));
      for (auto& t : hyp)
        if (rng.next_unit() < 0.4) t = static_cast<TokenId>(rng.next_below(6));
      refs.push_back(ref);
      hyps.push_back(hyp);
    }
    double before = corpus_bleu(hyps, refs);
    Sent perfect;
    for (int k = 0; k < 6; ++k)
      perfect.push_back(static_cast<TokenId>(rng.next_below(6)));
    hyps.push_back(perfect);
    refs.push_back(perfect);
    double after = corpus_bleu(hyps, refs);
    CHECK(after >= before - 1e-9);
  }
}

TEST_CASE("sentence_bleu smoothing never divides by zero") {
  CHECK(sentence_bleu(Sent{1}, Sent{1, 2, 3, 4, 5}) > 0.0);
  CHECK(sentence_bleu(Sent{9, 9, 9, 9}, Sent{1, 2, 3, 4}) > 0.0);
  CHECK(sentence_bleu(Sent{}, Sent{1, 2}) == 0.0);
}

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "minimt/language.hpp"

namespace minimt::mt_eval {

// Per-sentence sufficient statistics for corpus BLEU-4. Additive, so corpus
// scores over any resample are a sum of per-sentence stats plus one closed
// form, which is what makes bootstrap resampling cheap.
struct BleuStats {
  std::array<int64_t, 4> match{};  // clipped n-gram matches, n = 1..4
  std::array<int64_t, 4> total{};  // hypothesis n-gram counts
  int64_t hyp_len = 0;
  int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int i = 0; i < 4; ++i) {
      match[static_cast<size_t>(i)] += o.match[static_cast<size_t>(i)];
      total[static_cast<size_t>(i)] += o.total[static_cast<size_t>(i)];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

BleuStats bleu_sentence_stats(std::span<const TokenId> hyp,
                              std::span<const TokenId> ref);

// Corpus BLEU-4 in [0, 100]: geometric mean of modified n-gram precisions
// over the effective order (orders with a nonzero denominator), exponential
// smoothing 1/(2^k * total_n) for orders with zero matches, brevity penalty
// exp(1 - ref/hyp) when the hypothesis side is shorter.
double bleu_from_stats(const BleuStats& stats);

double corpus_bleu(const std::vector<std::vector<TokenId>>& hyps,
                   const std::vector<std::vector<TokenId>>& refs);

double sentence_bleu(std::span<const TokenId> hyp, std::span<const TokenId> ref);

}  // namespace minimt::mt_eval

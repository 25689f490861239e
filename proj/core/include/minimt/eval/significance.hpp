#pragma once

#include <cstdint>
#include <vector>

#include "minimt/eval/bleu.hpp"

namespace minimt::mt_eval {

enum class Winner { A, B, Tie };

struct SignificanceResult {
  Winner win = Winner::Tie;
  double p_value = 1.0;    // two-sided, from the bootstrap win fraction
  double bleu_a = 0;       // full-corpus scores
  double bleu_b = 0;
  double t_p_value = 1.0;  // paired t-test over sentence BLEU, cross-check
  int resamples = 0;
};

// Paired bootstrap over sentences: resample indices with replacement,
// compare corpus BLEU of both systems per resample. Ties in a resample
// count half toward each side, so identical systems yield p = 1. A winner
// is declared at p < 0.05.
SignificanceResult paired_bootstrap(
    const std::vector<std::vector<TokenId>>& hyps_a,
    const std::vector<std::vector<TokenId>>& hyps_b,
    const std::vector<std::vector<TokenId>>& refs, int resamples = 1000,
    uint64_t seed = 0);

// Two-sided paired t-test p-value over per-sentence score differences.
double paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace minimt::mt_eval

#include "minimt/eval/bleu.hpp"

#include <cmath>
#include <map>

namespace minimt::mt_eval {

namespace {

using Gram = std::array<TokenId, 4>;

void count_ngrams(std::span<const TokenId> seq, int n,
                  std::map<Gram, int64_t>& out) {
  Gram g{-1, -1, -1, -1};
  for (size_t i = 0; i + static_cast<size_t>(n) <= seq.size(); ++i) {
    for (int k = 0; k < n; ++k)
      g[static_cast<size_t>(k)] = seq[i + static_cast<size_t>(k)];
    ++out[g];
  }
}

}  // namespace

BleuStats bleu_sentence_stats(std::span<const TokenId> hyp,
                              std::span<const TokenId> ref) {
  BleuStats s;
  s.hyp_len = static_cast<int64_t>(hyp.size());
  s.ref_len = static_cast<int64_t>(ref.size());
  for (int n = 1; n <= 4; ++n) {
    auto& match = s.match[static_cast<size_t>(n - 1)];
    auto& total = s.total[static_cast<size_t>(n - 1)];
    if (hyp.size() + 1 > static_cast<size_t>(n))
      total = static_cast<int64_t>(hyp.size()) - n + 1;
    if (total == 0) continue;
    std::map<Gram, int64_t> hc, rc;
    count_ngrams(hyp, n, hc);
    count_ngrams(ref, n, rc);
    for (const auto& [g, c] : hc) {
      auto it = rc.find(g);
      if (it != rc.end()) match += std::min(c, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& stats) {
  if (stats.hyp_len == 0) return 0.0;
  double smooth = 1.0;
  double log_p = 0.0;
  int effective_order = 0;
  for (int n = 0; n < 4; ++n) {
    int64_t total = stats.total[static_cast<size_t>(n)];
    if (total == 0) break;
    ++effective_order;
    int64_t match = stats.match[static_cast<size_t>(n)];
    double p;
    if (match == 0) {
      smooth *= 2.0;
      p = 1.0 / (smooth * static_cast<double>(total));
    } else {
      p = static_cast<double>(match) / static_cast<double>(total);
    }
    log_p += std::log(p);
  }
  if (effective_order == 0) return 0.0;
  double bp = 1.0;
  if (stats.hyp_len < stats.ref_len)
    bp = std::exp(1.0 - static_cast<double>(stats.ref_len) /
                            static_cast<double>(stats.hyp_len));
  return 100.0 * bp * std::exp(log_p / effective_order);
}

double corpus_bleu(const std::vector<std::vector<TokenId>>& hyps,
                   const std::vector<std::vector<TokenId>>& refs) {
  if (hyps.size() != refs.size())
    throw ValidationError("corpus_bleu: " + std::to_string(hyps.size()) +
                          " hypotheses vs " + std::to_string(refs.size()) +
                          " references");
  if (hyps.empty())
    throw ValidationError("corpus_bleu: empty corpus");
  BleuStats agg;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty())
      throw ValidationError("corpus_bleu: empty reference at index " +
                            std::to_string(i));
    agg += bleu_sentence_stats(hyps[i], refs[i]);
  }
  return bleu_from_stats(agg);
}

double sentence_bleu(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  return bleu_from_stats(bleu_sentence_stats(hyp, ref));
}

}  // namespace minimt::mt_eval

#pragma once

#include <span>
#include <vector>

#include "minimt/model/transformer.hpp"
#include "minimt/vocab.hpp"

namespace minimt::mt_eval {

struct Hypothesis {
  Direction direction;
  std::vector<TokenId> output;     // surface ids, already stripped
  std::vector<TokenId> reference;  // surface ids
};

struct DecodeOptions {
  int beam_width = 1;         // 1 = greedy
  double length_alpha = 1.0;  // normalized score = logprob / len^alpha
  int max_len = 0;            // 0: max_positions - 1
  int n_threads = 1;
};

// Autoregressive decoding from the scheme's start token until EOS or
// max_len. Greedy runs all sentences in lockstep against a shared encoder
// pass; beam search runs per sentence. Ties in candidate scores break toward
// the lower token id, so beam(1) reproduces greedy token for token.
std::vector<Hypothesis> generate(const model::Transformer<float>& model,
                                 const Vocabulary& vocab,
                                 std::span<const SentencePair> pairs,
                                 TokenScheme scheme,
                                 const DecodeOptions& opts = {});

// Per-sentence decode score under the same length normalization the beam
// uses; exposed for search-dominance checks.
struct ScoredOutput {
  std::vector<TokenId> raw;  // vocab-id sequence including EOS if produced
  double score = 0;          // sum logprob / len^alpha
};

ScoredOutput decode_one(const model::Transformer<float>& model,
                        const Vocabulary& vocab, const SentencePair& pair,
                        TokenScheme scheme, int beam_width, double length_alpha,
                        int max_len = 0);

}  // namespace minimt::mt_eval

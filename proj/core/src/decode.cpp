#include "minimt/eval/decode.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace minimt::mt_eval {

using model::Mat;
using model::Transformer;

namespace {

std::vector<TokenId> encoder_stream(const SentencePair& pair, TokenScheme scheme,
                                    const Vocabulary& vocab) {
  TaggedExample ex = apply_scheme(pair, scheme, vocab);
  return ex.encoder_ids;
}

// Stable row log-softmax; returns log-probabilities.
Eigen::RowVectorXf log_softmax_row(const Eigen::RowVectorXf& logits) {
  float m = logits.maxCoeff();
  float lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

int argmax_row(const Eigen::RowVectorXf& row) {
  int best = 0;
  float v = row(0);
  for (int j = 1; j < row.cols(); ++j)
    if (row(j) > v) {
      v = row(j);
      best = j;
    }
  return best;
}

struct Beam {
  std::vector<TokenId> ids;  // decoder prefix including start token
  double logp = 0;
  bool done = false;
  int produced() const { return static_cast<int>(ids.size()) - 1; }
};

double normalized(double logp, int len, double alpha) {
  return logp / std::pow(static_cast<double>(std::max(len, 1)), alpha);
}

ScoredOutput beam_decode_single(const Transformer<float>& model,
                                const typename Transformer<float>::Memory& mem,
                                TokenId start, int width, double alpha,
                                int max_len) {
  std::vector<Beam> live{{std::vector<TokenId>{start}, 0.0, false}};
  std::vector<Beam> finished;
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<std::vector<TokenId>> prefixes;
    std::vector<int> index(live.size(), 0);
    prefixes.reserve(live.size());
    for (const auto& b : live) prefixes.push_back(b.ids);
    Mat<float> logits = model.decode_last_logits(mem, prefixes, index);

    struct Cand {
      size_t parent;
      TokenId tok;
      double logp;
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < live.size(); ++i) {
      Eigen::RowVectorXf lp = log_softmax_row(logits.row(static_cast<int>(i)));
      // Keep the top `width` continuations of each beam.
      std::vector<int> order(static_cast<size_t>(lp.cols()));
      for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
      std::partial_sort(order.begin(),
                        order.begin() + std::min<size_t>(order.size(),
                                                         static_cast<size_t>(width)),
                        order.end(), [&](int a, int b) {
                          if (lp(a) != lp(b)) return lp(a) > lp(b);
                          return a < b;
                        });
      for (int k = 0; k < width && k < lp.cols(); ++k) {
        int tok = order[static_cast<size_t>(k)];
        cands.push_back({i, static_cast<TokenId>(tok),
                         live[i].logp + static_cast<double>(lp(tok))});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.tok < b.tok;
    });

    std::vector<Beam> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= width) break;
      Beam nb = live[c.parent];
      nb.ids.push_back(c.tok);
      nb.logp = c.logp;
      if (c.tok == Vocabulary::kEos || nb.produced() >= max_len) {
        nb.done = true;
        finished.push_back(nb);
      } else {
        next.push_back(nb);
      }
    }
    live = std::move(next);
  }
  for (auto& b : live) finished.push_back(b);

  const Beam* best = nullptr;
  double best_score = -1e300;
  for (const auto& b : finished) {
    double s = normalized(b.logp, b.produced(), alpha);
    if (!best || s > best_score) {
      best = &b;
      best_score = s;
    }
  }
  ScoredOutput out;
  if (best) {
    out.raw.assign(best->ids.begin() + 1, best->ids.end());
    out.score = best_score;
  }
  return out;
}

}  // namespace

ScoredOutput decode_one(const Transformer<float>& model, const Vocabulary& vocab,
                        const SentencePair& pair, TokenScheme scheme,
                        int beam_width, double length_alpha, int max_len) {
  if (beam_width < 1) throw ValidationError("beam width must be >= 1");
  if (max_len <= 0) max_len = model.config().max_positions - 1;
  auto mem = model.encode({encoder_stream(pair, scheme, vocab)});
  TokenId start = decode_start_token(scheme, pair.tgt_lang, vocab);
  return beam_decode_single(model, mem, start, beam_width, length_alpha,
                            max_len);
}

std::vector<Hypothesis> generate(const Transformer<float>& model,
                                 const Vocabulary& vocab,
                                 std::span<const SentencePair> pairs,
                                 TokenScheme scheme, const DecodeOptions& opts) {
  if (opts.beam_width < 1) throw ValidationError("beam width must be >= 1");
  int max_len =
      opts.max_len > 0 ? opts.max_len : model.config().max_positions - 1;
  std::vector<Hypothesis> out(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    out[i].direction = pairs[i].direction();
    out[i].reference = pairs[i].tgt;
  }
  if (pairs.empty()) return out;

  if (opts.beam_width == 1) {
    // Lockstep greedy over the whole set, one shared encoder pass.
    std::vector<std::vector<TokenId>> enc;
    enc.reserve(pairs.size());
    for (const auto& p : pairs) enc.push_back(encoder_stream(p, scheme, vocab));
    auto mem = model.encode(enc);

    std::vector<std::vector<TokenId>> prefix(pairs.size());
    std::vector<bool> done(pairs.size(), false);
    for (size_t i = 0; i < pairs.size(); ++i)
      prefix[i] = {decode_start_token(scheme, pairs[i].tgt_lang, vocab)};

    for (int step = 0; step < max_len; ++step) {
      std::vector<std::vector<TokenId>> active_prefix;
      std::vector<int> active_index;
      for (size_t i = 0; i < pairs.size(); ++i)
        if (!done[i]) {
          active_prefix.push_back(prefix[i]);
          active_index.push_back(static_cast<int>(i));
        }
      if (active_prefix.empty()) break;
      Mat<float> logits =
          model.decode_last_logits(mem, active_prefix, active_index);
      for (size_t k = 0; k < active_index.size(); ++k) {
        size_t i = static_cast<size_t>(active_index[k]);
        int tok = argmax_row(logits.row(static_cast<int>(k)));
        prefix[i].push_back(static_cast<TokenId>(tok));
        if (tok == Vocabulary::kEos) done[i] = true;
      }
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
      std::span<const TokenId> raw(prefix[i].data() + 1, prefix[i].size() - 1);
      out[i].output = strip_output(raw, vocab);
    }
    return out;
  }

  // Beam search, parallel across sentences.
  int n_threads = std::max(1, opts.n_threads);
  auto worker = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      auto scored = decode_one(model, vocab, pairs[i], scheme, opts.beam_width,
                               opts.length_alpha, max_len);
      out[i].output = strip_output(scored.raw, vocab);
    }
  };
  if (n_threads == 1 || pairs.size() < 2) {
    worker(0, pairs.size());
  } else {
    std::vector<std::thread> threads;
    size_t chunk = (pairs.size() + static_cast<size_t>(n_threads) - 1) /
                   static_cast<size_t>(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      size_t b = static_cast<size_t>(t) * chunk;
      size_t e = std::min(pairs.size(), b + chunk);
      if (b >= e) break;
      threads.emplace_back(worker, b, e);
    }
    for (auto& th : threads) th.join();
  }
  return out;
}

}  // namespace minimt::mt_eval

#pragma once

#include <vector>

#include "minimt/model/parameters.hpp"
#include "minimt/vocab.hpp"

namespace minimt::model {

struct Batch {
  std::vector<TaggedExample> items;
  // Global index of items[0] within the full training batch; keys dropout
  // draws so a thread-sliced batch replays the same masks as its position in
  // the parent batch.
  int64_t item_base = 0;
};

// Pre-layer-norm transformer encoder-decoder over a shared vocabulary, with
// exact handwritten gradients. Sequences are processed as one packed row
// matrix per batch (position-wise ops are single GEMMs); attention runs on
// per-sequence row blocks. PAD tokens are masked out of attention keys and
// carry no loss.
template <typename T>
class Transformer {
 public:
  struct Dropout {
    T rate = T(0);
    uint64_t seed = 0;
    uint64_t step = 0;
    bool on() const { return rate > T(0); }
  };

  struct LossStats {
    double loss_sum = 0;  // summed label-smoothed NLL over non-pad targets
    int64_t tokens = 0;
  };

  // Cached encoder state for autoregressive decoding; cross-attention key and
  // value projections are precomputed once per sequence.
  struct Memory {
    Mat<T> rows;
    std::vector<int> offset;
    std::vector<TokenId> ids;
    std::vector<Mat<T>> cross_k, cross_v;  // one per decoder layer
    int n_seqs() const { return static_cast<int>(offset.size()) - 1; }
  };

  Transformer(ModelConfig cfg, uint64_t init_seed);
  Transformer(ModelConfig cfg, Parameters<T> params);

  const ModelConfig& config() const { return cfg_; }
  const Parameters<T>& params() const { return params_; }
  Parameters<T>& params() { return params_; }

  // Per-item logits, shape (len(decoder_input) x V) each.
  std::vector<Mat<T>> forward(const Batch& b, const Dropout& drop = {}) const;

  // Fused forward + label-smoothed loss + full backward. Gradients of the
  // *summed* loss (times loss_scale) accumulate into `grads`, which must be
  // shaped for this config. Throws if every target position is PAD, or if a
  // non-finite gradient appears (naming the parameter).
  LossStats backward(const Batch& b, const Dropout& drop, T label_smoothing,
                     T loss_scale, Parameters<T>& grads) const;

  Memory encode(const std::vector<std::vector<TokenId>>& enc_ids) const;

  // One row of last-position logits per prefix; index[i] selects the memory
  // sequence prefix i decodes against (beams share one entry).
  Mat<T> decode_last_logits(const Memory& mem,
                            const std::vector<std::vector<TokenId>>& prefixes,
                            const std::vector<int>& index) const;

  struct Impl;  // internal machinery, defined in the .cpp

 private:
  ModelConfig cfg_;
  Parameters<T> params_;
  Mat<T> pos_;  // sinusoidal position table, max_positions x d
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace minimt::model

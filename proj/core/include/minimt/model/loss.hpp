#pragma once

#include <cmath>
#include <span>

#include "minimt/model/parameters.hpp"
#include "minimt/vocab.hpp"

namespace minimt::model {

template <typename T>
struct LossOut {
  double value = 0;   // mean label-smoothed NLL over non-pad targets
  int64_t tokens = 0;
  Mat<T> dlogits;     // gradient of the mean loss
};

// Label-smoothed cross entropy against q = (1-eps)*onehot + eps/V. PAD
// targets carry no loss and no gradient; eps = 0 is plain cross entropy.
template <typename T>
LossOut<T> label_smoothed_loss(const Mat<T>& logits,
                               std::span<const TokenId> targets, T eps,
                               bool want_grad = true) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    throw ValidationError("loss: logits rows and target count differ");
  const auto v = static_cast<int>(logits.cols());
  LossOut<T> out;
  if (want_grad) out.dlogits = Mat<T>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    TokenId y = targets[static_cast<size_t>(r)];
    if (y == Vocabulary::kPad) continue;
    if (y < 0 || y >= v)
      throw ValidationError("loss: target id " + std::to_string(y) +
                            " out of range");
    auto row = logits.row(r);
    T m = row.maxCoeff();
    T lse = m + std::log((row.array() - m).exp().sum());
    out.value += static_cast<double>(-(T(1) - eps) * (row(y) - lse) -
                                     (eps / T(v)) * (row.sum() - T(v) * lse));
    out.tokens += 1;
    if (want_grad) {
      auto drow = out.dlogits.row(r);
      drow = (row.array() - lse).exp() - eps / T(v);
      drow(y) -= T(1) - eps;
    }
  }
  if (out.tokens == 0)
    throw ValidationError("loss: every target position is PAD");
  out.value /= static_cast<double>(out.tokens);
  if (want_grad) out.dlogits /= T(out.tokens);
  return out;
}

}  // namespace minimt::model

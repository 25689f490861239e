#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "minimt/common.hpp"

namespace minimt::model {

// Deep-encoder / shallow-decoder by default, 2:1 as in the reference setup.
struct ModelConfig {
  int d_model = 128;
  int d_ff = 512;
  int n_heads = 4;
  int n_enc_layers = 4;
  int n_dec_layers = 2;
  int vocab_size = 0;
  int max_positions = 32;
  float dropout = 0.1f;
  float label_smoothing = 0.1f;
  bool tie_embeddings = true;

  void validate() const;

  // Name of the first differing field, if any.
  std::optional<std::string> field_diff(const ModelConfig& o) const;
  bool operator==(const ModelConfig& o) const { return !field_diff(o); }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

}  // namespace minimt::model

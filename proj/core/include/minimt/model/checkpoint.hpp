#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "minimt/model/optimizer.hpp"
#include "minimt/model/parameters.hpp"

namespace minimt::model {

struct Provenance {
  std::string scheme = "T-E";
  std::string data_digest;
  std::string vocab_digest;
  std::string parent;
  std::string note;
  // Steps accumulated by ancestor phases; cumulative step = base + step.
  int64_t cumulative_base = 0;
};

struct TrainSeeds {
  uint64_t data_seed = 0;
  uint64_t dropout_seed = 0;
};

struct Checkpoint {
  ModelConfig config;
  OptimizerConfig opt;
  Parameters<float> params;
  Parameters<float> m, v;  // optimizer moments
  int64_t step = 0;
  TrainSeeds seeds;
  Provenance provenance;

  int64_t cumulative_step() const { return provenance.cumulative_base + step; }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws RuntimeFailure on version mismatch or truncation; a stored-digest
// mismatch only warns on stderr (set *digest_ok when provided).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           bool* digest_ok = nullptr);

// Starts a new training phase: parameters are kept bit-exactly, optimizer
// moments and the step counter are cleared, seeds are re-derived, and the
// phase's steps roll into cumulative_base.
Checkpoint reset_nonparameter_state(Checkpoint ckpt, uint64_t new_seed);

}  // namespace minimt::model

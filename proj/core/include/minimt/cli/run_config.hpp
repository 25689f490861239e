#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "minimt/corpus.hpp"
#include "minimt/model/config.hpp"
#include "minimt/train/plan.hpp"

namespace minimt::cli {

// One file drives a whole run; every artifact is a pure function of this
// struct. Unknown JSON keys are rejected so typos fail loudly.
struct RunConfig {
  uint64_t seed = 7;
  std::filesystem::path out_dir = "out";

  struct UniverseCfg {
    int n_languages = 5;
    int v_content = 64;
    int max_len = 16;
    bool reorder = false;
  } universe;

  struct CorpusCfg {
    double zipf_s = 1.0;
    int len_lo = 3;
    int len_hi = 10;
    int train_pairs_per_direction = 3000;
    int direct_pairs_per_direction = 1500;
    int dev_per_direction = 8;
    int test_per_direction = 12;
    int noise_pairs_per_kind = 8;  // injected length/ratio/lid violations
    int leak_pairs = 4;            // dev/test pairs planted in raw train
  } corpus;

  FilterConfig filter;

  model::ModelConfig model;  // vocab_size 0 = derive from the universe

  struct TrainingCfg {
    int64_t base_steps = 1400;
    int64_t resume_steps = 1200;
    int64_t direct_steps = 600;
    int64_t domain_steps = 250;
    int64_t eval_every = 100;
    int batch_size = 32;
    double mid_fraction = 0.44;
    train::PhaseHyper pretrain{3e-3, 300};
    train::PhaseHyper finetune{2e-3, 100};
    train::PhaseHyper domain{1e-3, 50};
    std::string selection_metric = "dev_bleu_all";
    int n_threads = 0;  // 0 = hardware
    int beam_width = 4;
    double length_alpha = 1.0;
    int compare_resamples = 1000;
  } training;

  struct MixCfg {
    size_t cap_per_direction = 800;
  } mix;

  struct DomainCfg {
    int n_domains = 3;
    int train_pairs_per_direction = 800;
    int dev_per_direction = 8;
    int test_per_direction = 12;
  } domain;

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);

  // Missing file and empty path both mean "defaults".
  static RunConfig load(const std::optional<std::filesystem::path>& path,
                        const std::optional<std::string>& out_override);

  // A scaled-down derivative used for the self-contained determinism stage.
  RunConfig tiny_variant() const;
};

}  // namespace minimt::cli

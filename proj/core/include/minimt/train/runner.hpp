#pragma once

#include <filesystem>
#include <functional>

#include "minimt/corpus.hpp"
#include "minimt/model/checkpoint.hpp"
#include "minimt/model/transformer.hpp"
#include "minimt/train/plan.hpp"

namespace minimt::train {

struct RunPlanResult {
  model::Checkpoint best;
  TrainingCurve curve;
  int64_t best_step = 0;        // cumulative
  int64_t best_phase_step = 0;  // within this run
  double best_metric = 0;
  std::filesystem::path plan_dir;
  std::filesystem::path best_path, final_path, mid_path;
};

// Executes experiment plans against one universe/vocabulary. Checkpoints and
// curves land under <out_dir>/plans/<plan name>/. Training is deterministic
// for a fixed plan, seed and thread count: batches and dropout are drawn by
// counter hashes keyed on the absolute step, so a resumed run replays the
// exact trajectory of an uninterrupted one.
class Runner {
 public:
  using LogFn = std::function<void(const std::string& jsonl)>;

  Runner(const Universe& universe, const Vocabulary& vocab,
         model::ModelConfig model_cfg, std::filesystem::path out_dir,
         int n_threads = 0, LogFn log = nullptr);

  RunPlanResult run_plan(const ExperimentPlan& plan);

  std::filesystem::path plan_dir(const std::string& name) const;
  std::filesystem::path checkpoint_path(const std::string& plan,
                                        const std::string& which) const;

  const Universe& universe() const { return universe_; }
  const Vocabulary& vocab() const { return vocab_; }
  const model::ModelConfig& model_config() const { return model_cfg_; }
  int n_threads() const { return n_threads_; }

 private:
  model::Checkpoint resolve_init(const ExperimentPlan& plan) const;

  Universe universe_;
  Vocabulary vocab_;
  model::ModelConfig model_cfg_;
  std::filesystem::path out_dir_;
  std::string world_digest_;  // universe + vocabulary identity
  int n_threads_;
  LogFn log_;
};

}  // namespace minimt::train

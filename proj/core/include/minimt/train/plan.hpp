#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "minimt/vocab.hpp"

namespace minimt::train {

struct InitSpec {
  enum class Kind { Fresh, Resume };
  Kind kind = Kind::Fresh;
  std::string parent;          // plan name to resume from
  std::string which = "final";  // "mid" | "final" | "best"
  bool reset_nonparameter = true;

  static InitSpec fresh() { return {}; }
  static InitSpec resume(std::string parent, std::string which,
                         bool reset = true) {
    InitSpec s;
    s.kind = Kind::Resume;
    s.parent = std::move(parent);
    s.which = std::move(which);
    s.reset_nonparameter = reset;
    return s;
  }
};

struct PhaseHyper {
  double peak_lr = 3e-3;
  int64_t warmup = 200;
};

struct DevSetRef {
  std::string label;
  std::filesystem::path path;
};

struct ExperimentPlan {
  std::string name;
  TokenScheme scheme = TokenScheme::TE;
  InitSpec init;
  std::filesystem::path train_corpus;
  std::vector<DevSetRef> dev_sets;
  int64_t total_steps = 0;
  int64_t eval_every = 100;
  int batch_size = 32;
  PhaseHyper hyper;
  std::string selection_metric = "dev_bleu_all";  // or dev_bleu_ex / dev_bleu_xy
  double mid_fraction = 0.44;  // parent-relative step for resume experiments
  uint64_t seed = 1;
};

// One evaluation point on one dev set. `step` is cumulative across phases
// (what the figures plot); phase_step counts within this run.
struct CurveRow {
  int64_t step = 0;
  int64_t phase_step = 0;
  std::string devset;
  double bleu = 0;
  double off_target = 0;
  double loss = 0;
};

using TrainingCurve = std::vector<CurveRow>;

std::string curve_to_csv(const TrainingCurve& curve);

// Everything build_plan_matrix needs: budgets, hyperparameters and corpus
// locations. Domain entries expand to one plan per (domain, direction, base).
struct PlanMatrixConfig {
  int64_t base_steps = 1200;
  int64_t resume_steps = 1200;
  int64_t direct_steps = 500;
  int64_t domain_steps = 250;
  int64_t eval_every = 100;
  int batch_size = 32;
  double mid_fraction = 0.44;
  PhaseHyper pretrain, finetune, domain;
  std::string selection_metric = "dev_bleu_all";
  uint64_t seed = 1;

  std::filesystem::path train_ex;
  std::filesystem::path train_mixed;
  std::vector<DevSetRef> dev_sets;  // registered on every non-domain plan

  struct DomainRef {
    std::string name;
    Direction dir;
    std::filesystem::path train;
    DevSetRef dev;
  };
  std::vector<DomainRef> domains;
};

// The experiment matrix: B (T-E from scratch), the STT/ST/TT from-scratch
// ablations, P (B mid-checkpoint resumed under ST-T), D (B final + mixed
// direct data under T-E), P-D (P mid-checkpoint + mixed direct data), DP
// (B final + mixed direct data under ST-T), and per-(domain, direction)
// finetunes from both the B and P final checkpoints.
std::vector<ExperimentPlan> build_plan_matrix(const PlanMatrixConfig& cfg);

const ExperimentPlan& plan_by_name(const std::vector<ExperimentPlan>& plans,
                                   const std::string& name);

}  // namespace minimt::train

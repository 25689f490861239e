#pragma once

#include <map>

#include "minimt/cli/run_config.hpp"
#include "minimt/eval/report.hpp"
#include "minimt/train/runner.hpp"

namespace minimt::cli {

struct OutPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path universe() const { return root / "universe.json"; }
  std::filesystem::path vocab() const { return root / "vocab.json"; }
  std::filesystem::path corpora() const { return root / "corpora"; }
  std::filesystem::path corpus(const std::string& name) const {
    return corpora() / (name + ".tsv");
  }
  std::filesystem::path tally(const std::string& name) const {
    return corpora() / ("filter_tally_" + name + ".json");
  }
  std::filesystem::path domain_dir(const std::string& domain,
                                   const std::string& dir_label) const {
    return corpora() / "domains" / domain / dir_label;
  }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path plans() const { return root / "plans"; }
  std::filesystem::path gen_summary() const { return root / "gen_summary.json"; }
};

struct World {
  Universe universe;
  Vocabulary vocab;
  model::ModelConfig model_cfg;
};

// Loads universe/vocab written by gen; throws RuntimeFailure naming the
// missing prerequisite file.
World load_world(const RunConfig& cfg);

void run_gen(const RunConfig& cfg);

FilterTally run_filter(const RunConfig& cfg, const std::filesystem::path& in,
                       const std::filesystem::path& out,
                       const std::optional<std::filesystem::path>& tally_out);

train::PlanMatrixConfig matrix_config(const RunConfig& cfg);

train::RunPlanResult run_train(const RunConfig& cfg,
                               const std::string& plan_name);

// `system` is "oracle", a plan name (its best checkpoint), or a checkpoint
// path. `devset` is dev_ex / dev_xy / test_ex / test_xy, a domain set like
// dom-d1-x1-x2-test, or a corpus file path.
mt_eval::EvalReport run_eval(const RunConfig& cfg, const std::string& system,
                             const std::string& devset, int beam_width = 0);

mt_eval::ComparisonReport run_compare(const RunConfig& cfg,
                                      const std::string& system_a,
                                      const std::string& system_b,
                                      const std::string& devset);

struct PlanSummary {
  train::TrainingCurve curve;
  int64_t best_step = 0;
  int64_t best_phase_step = 0;
  double best_metric = 0;
};

struct ReproOutcome {
  bool all_pass = false;
  std::map<std::string, PlanSummary> plans;
  std::filesystem::path report_path;
  std::filesystem::path metrics_path;
};

// The whole experiment: gen, filter, the B/STT/ST/TT from-scratch quartet,
// P, D, P-D, DP, the domain matrix, figure CSVs, report tables, and (when
// with_criteria) the acceptance-criteria report with one printed pass/fail
// line per criterion.
ReproOutcome run_repro(const RunConfig& cfg, bool with_criteria = true);

// Combined digest of the run's metric files (reports/*.json,
// plans/*/curve.csv), path-sorted.
uint64_t metrics_digest(const std::filesystem::path& out_root);

// Beam hypotheses of one stored checkpoint on the given pairs; the scheme
// comes from the checkpoint's provenance.
std::vector<mt_eval::Hypothesis> checkpoint_hypotheses(
    const RunConfig& cfg, const World& w, const std::filesystem::path& ckpt,
    std::span<const SentencePair> pairs, int beam_width = 0);

}  // namespace minimt::cli

#pragma once

#include "minimt/cli/pipeline.hpp"

namespace minimt::cli {

// Numbers behind the report tables, kept for the criteria stage.
struct TableData {
  // Per-scheme dev-set numbers at the best checkpoint (greedy, from the
  // training curves). Keyed by plan name (B, STT, ST, TT, P, ...).
  struct DevPoint {
    double ex_bleu = 0, xy_bleu = 0;
    double ex_off = 0, xy_off = 0, both_off = 0;
    int64_t step = 0;
  };
  std::map<std::string, DevPoint> dev_best;
  std::map<std::string, DevPoint> dev_final;

  // Test-set numbers at the best checkpoint (beam). Keyed by plan name.
  struct TestPoint {
    double direct_bleu = 0, ex_bleu = 0, x2e_bleu = 0, e2x_bleu = 0;
    int64_t best_at = 0;
  };
  std::map<std::string, TestPoint> table2;

  struct DomainCell {
    std::string domain;
    std::string dir;
    double zero_shot_b = 0, zero_shot_p = 0;
    double finetuned_b = 0, finetuned_p = 0;
  };
  std::vector<DomainCell> table5;
};

// Writes table1 (off-target), table2 (finetuning BLEU), table3 (significance
// win counts) and table5 (domain grid) under <out>/reports, evaluating each
// plan's best checkpoint: greedy dev numbers come from the curves, test and
// domain numbers from beam decoding.
TableData write_report_tables(const RunConfig& cfg, const World& w,
                              const ReproOutcome& outcome);

// Evaluates the ten acceptance criteria, printing one pass/fail line each,
// writing reports/metrics.json, reports/acceptance_report.json and
// reports/runtime.json. Returns true iff every criterion passed.
bool evaluate_criteria(const RunConfig& cfg, const World& w,
                       const ReproOutcome& outcome, const TableData& tables);

}  // namespace minimt::cli

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "minimt/eval/decode.hpp"
#include "minimt/eval/significance.hpp"

namespace minimt::mt_eval {

// Language detector over surface ids: majority vote by range membership,
// ties toward the lower language index, empty input undecidable.
using LanguageDetector =
    std::function<std::optional<std::string>(std::span<const TokenId>)>;

LanguageDetector majority_detector(const Universe& u);

std::optional<int> detect_language(const Universe& u,
                                   std::span<const TokenId> tokens);

// Fraction of hypotheses whose detected language differs from the declared
// target; empty hypotheses count as off-target.
double off_target_rate(std::span<const Hypothesis> hyps,
                       const LanguageDetector& detector);

struct DirectionScore {
  Direction dir;
  double bleu = 0;
  double off_target = 0;
  int count = 0;
};

struct GroupScore {
  double bleu = 0;        // unweighted mean over member directions
  double off_target = 0;  // pooled over samples
  int directions = 0;
  int samples = 0;
};

// Group keys: "x2e", "e2x", "ex" (both English-centric), "x2y", "all".
struct EvalReport {
  std::string system;
  std::string devset;
  int64_t step = -1;
  std::vector<DirectionScore> directions;
  std::map<std::string, GroupScore> groups;

  double group_bleu(const std::string& key) const;
  double group_off_target(const std::string& key) const;
};

EvalReport build_eval_report(const Universe& u, std::span<const Hypothesis> hyps,
                             const std::string& system_name,
                             const std::string& devset, int64_t step);

std::string report_to_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

// Pairwise comparison of systems against a designated baseline on identical
// inputs: per-direction bootstrap significance plus win tallies per group.
struct DirectionComparison {
  Direction dir;
  SignificanceResult sig;
};

struct ComparisonReport {
  std::string system_a;  // challenger
  std::string system_b;  // baseline
  std::vector<DirectionComparison> directions;
  std::map<std::string, int> wins_a;  // per group key
  std::map<std::string, int> wins_b;
  std::map<std::string, int> ties;
};

ComparisonReport compare_systems(const Universe& u,
                                 std::span<const Hypothesis> hyps_a,
                                 std::span<const Hypothesis> hyps_b,
                                 const std::string& name_a,
                                 const std::string& name_b, int resamples,
                                 uint64_t seed);

std::string comparison_to_json(const ComparisonReport& r);
std::string comparison_table(const ComparisonReport& r);

}  // namespace minimt::mt_eval

#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minimt/language.hpp"

namespace minimt {

struct FilterConfig {
  int max_words = 250;
  double max_ratio = 3.0;
  bool lid_enabled = true;

  void validate() const {
    if (max_words < 1) throw ValidationError("filter.max_words must be >= 1");
    if (max_ratio < 1.0) throw ValidationError("filter.max_ratio must be >= 1.0");
  }
};

// Language-membership predicate for filtering: does this token sequence
// belong entirely to the declared language? Strict by design, the synthetic
// alphabets are disjoint so a single foreign token is decisive.
using LidPredicate =
    std::function<bool(const std::string& code, std::span<const TokenId>)>;

LidPredicate membership_predicate(const Universe& u);

enum class FilterReason { Keep, Malformed, Length, Ratio, Lid };

// Rejection reasons are checked in a fixed order (malformed, length, ratio,
// lid) so tallies are deterministic.
FilterReason classify_pair(const SentencePair& p, const FilterConfig& cfg,
                           const LidPredicate* lid);

struct FilterTally {
  size_t kept = 0;
  size_t malformed = 0;
  size_t length = 0;
  size_t ratio = 0;
  size_t lid = 0;

  size_t rejected() const { return malformed + length + ratio + lid; }
  size_t total() const { return kept + rejected(); }
  void count(FilterReason r);
  std::string to_json() const;
};

std::vector<SentencePair> filter_corpus(std::span<const SentencePair> pairs,
                                        const FilterConfig& cfg,
                                        const LidPredicate& lid,
                                        FilterTally* tally = nullptr);

struct MixSpec {
  size_t cap_per_direction = 1;
};

// Direct-finetuning mixture: every direct pair, plus up to cap_per_direction
// pairs sampled without replacement from each English-centric direction,
// shuffled deterministically.
std::vector<SentencePair> mix_for_direct_ft(
    std::span<const SentencePair> english_centric,
    std::span<const SentencePair> direct, const MixSpec& spec, uint64_t seed);

// Removes from `train` any pair whose (src, tgt) surface strings occur in a
// holdout set.
std::vector<SentencePair> dedup_against(
    std::span<const SentencePair> train,
    std::span<const std::span<const SentencePair>> holdouts);

// --- TSV corpus files -------------------------------------------------------
// Line format: src_lang TAB tgt_lang TAB src ids (space separated) TAB tgt ids.

void write_corpus(std::span<const SentencePair> pairs,
                  const std::filesystem::path& path);

class CorpusWriter {
 public:
  explicit CorpusWriter(const std::filesystem::path& path);
  ~CorpusWriter();
  CorpusWriter(const CorpusWriter&) = delete;
  CorpusWriter& operator=(const CorpusWriter&) = delete;
  void write(const SentencePair& p);

 private:
  FILE* f_ = nullptr;
  std::filesystem::path path_;
};

class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);
  ~CorpusReader();
  CorpusReader(const CorpusReader&) = delete;
  CorpusReader& operator=(const CorpusReader&) = delete;

  // Next pair, or nullopt at end of file. Throws RuntimeFailure carrying the
  // 1-based line number on malformed lines.
  std::optional<SentencePair> next();
  size_t line() const { return line_; }

 private:
  FILE* f_ = nullptr;
  std::filesystem::path path_;
  size_t line_ = 0;
};

std::vector<SentencePair> read_corpus(const std::filesystem::path& path);

// Streaming file-to-file filter used by the CLI.
FilterTally filter_file(const std::filesystem::path& in,
                        const std::filesystem::path& out,
                        const FilterConfig& cfg, const LidPredicate& lid);

}  // namespace minimt

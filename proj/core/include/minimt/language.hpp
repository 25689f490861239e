#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minimt/common.hpp"

namespace minimt {

// Surface-token id or pivot content index, depending on context.
using TokenId = int32_t;

struct LanguageId {
  std::string code;
  int index = 0;
};

struct PivotSentence {
  std::vector<TokenId> tokens;

  bool operator==(const PivotSentence& o) const { return tokens == o.tokens; }
};

// One synthetic language: a bijection from pivot content indices onto a
// private surface-id range, surface = offset + permutation[pivot]. When the
// reorder rule is on, adjacent positions are additionally swapped with a
// per-language parity so word order differs between languages; the swap is
// an involution, so parsing stays exact.
class CipherLanguage {
 public:
  CipherLanguage(LanguageId lang, std::vector<TokenId> permutation,
                 TokenId surface_offset, bool reorder);

  const LanguageId& lang() const { return lang_; }
  const std::string& code() const { return lang_.code; }
  int index() const { return lang_.index; }
  TokenId surface_offset() const { return offset_; }
  int v_content() const { return static_cast<int>(perm_.size()); }
  bool reorder() const { return reorder_; }
  const std::vector<TokenId>& permutation() const { return perm_; }

  bool contains(TokenId surface) const {
    return surface >= offset_ && surface < offset_ + v_content();
  }

  std::vector<TokenId> render(const PivotSentence& p) const;
  PivotSentence parse(std::span<const TokenId> surface) const;

 private:
  LanguageId lang_;
  std::vector<TokenId> perm_;
  std::vector<TokenId> inv_perm_;
  TokenId offset_ = 0;
  bool reorder_ = false;
};

// The multilingual universe: one pivot language ("en", index 0) plus N-1
// cipher languages with pairwise disjoint surface ranges. Language of any
// surface token is decidable exactly from its range.
class Universe {
 public:
  static Universe build(int n_languages, int v_content, uint64_t seed,
                        int max_len = 16, bool reorder = false);

  const std::vector<CipherLanguage>& languages() const { return langs_; }
  int n_languages() const { return static_cast<int>(langs_.size()); }
  const CipherLanguage& pivot() const { return langs_.front(); }
  const CipherLanguage& at(int index) const { return langs_.at(index); }
  const CipherLanguage* find(const std::string& code) const;
  const CipherLanguage& by_code(const std::string& code) const;

  int v_content() const { return v_content_; }
  int max_len() const { return max_len_; }
  uint64_t seed() const { return seed_; }
  int surface_vocab_size() const { return n_languages() * v_content_; }

  // Exact language identification by surface-range membership.
  std::optional<int> language_index_of(TokenId surface) const;

  std::string to_json() const;
  static Universe from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Universe load(const std::filesystem::path& path);

  bool operator==(const Universe& o) const;

 private:
  Universe() = default;
  std::vector<CipherLanguage> langs_;
  int v_content_ = 0;
  int max_len_ = 0;
  uint64_t seed_ = 0;
};

// Ground-truth translation: parse in `from`, re-render in `to`. This is the
// unique correct reference for every direction, including X<->Y.
std::vector<TokenId> oracle_translate(std::span<const TokenId> s,
                                      const CipherLanguage& from,
                                      const CipherLanguage& to);

struct LengthDist {
  enum class Kind { Uniform, Poisson, Fixed };
  Kind kind = Kind::Uniform;
  int lo = 3;
  int hi = 10;
  double mean = 8.0;
  int fixed = 8;

  static LengthDist uniform(int lo, int hi) {
    LengthDist d;
    d.kind = Kind::Uniform;
    d.lo = lo;
    d.hi = hi;
    return d;
  }
  static LengthDist poisson(double mean) {
    LengthDist d;
    d.kind = Kind::Poisson;
    d.mean = mean;
    return d;
  }
  static LengthDist fixed_len(int n) {
    LengthDist d;
    d.kind = Kind::Fixed;
    d.fixed = n;
    return d;
  }
};

struct PivotSampleSpec {
  LengthDist length;
  double zipf_s = 1.0;  // 0 = uniform token frequencies
  int support_lo = 0;   // token support [lo, hi); hi <= 0 means v_content
  int support_hi = 0;
  int count = 0;
  uint64_t seed = 0;
};

std::vector<PivotSentence> sample_pivot(const Universe& u,
                                        const PivotSampleSpec& spec);

struct Direction {
  std::string src;
  std::string tgt;

  bool operator==(const Direction& o) const {
    return src == o.src && tgt == o.tgt;
  }
  bool operator<(const Direction& o) const {
    return src != o.src ? src < o.src : tgt < o.tgt;
  }
  std::string label() const { return src + "-" + tgt; }
};

std::vector<Direction> english_centric_directions(const Universe& u);
std::vector<Direction> direct_directions(const Universe& u);
std::vector<Direction> all_directions(const Universe& u);

struct SentencePair {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;

  Direction direction() const { return {src_lang, tgt_lang}; }
  bool operator==(const SentencePair& o) const {
    return src_lang == o.src_lang && tgt_lang == o.tgt_lang && src == o.src &&
           tgt == o.tgt;
  }
};

struct CorpusSpec {
  std::vector<Direction> train_directions;
  std::vector<Direction> eval_directions;  // dev/test rendered for these
  int pairs_per_direction = 0;
  int dev_per_direction = 8;
  int test_per_direction = 16;
  PivotSampleSpec sample;  // count ignored; seed ignored (CorpusSpec::seed wins)
  uint64_t seed = 0;
};

struct CorpusBundle {
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
  std::vector<SentencePair> test;
};

// Builds train/dev/test with pairwise-disjoint pivot sentences. Dev and test
// are multi-parallel: the same pivot sentences rendered for every eval
// direction, so per-direction scores are comparable.
CorpusBundle make_corpus(const Universe& u, const CorpusSpec& spec);

// Convenience overload: train and eval over the same direction set.
CorpusBundle make_corpus(const Universe& u, std::span<const Direction> directions,
                         int pairs_per_direction, uint64_t seed);

}  // namespace minimt

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "minimt/language.hpp"

namespace minimt {

// Placement of language-control tokens around the model's input streams.
//   TE : encoder prefix [TGT_t],        decoder starts with BOS
//   STT: encoder prefix [SRC_s, TGT_t], decoder starts with TGT_t
//   ST : encoder prefix [SRC_s],        decoder starts with TGT_t
//   TT : encoder prefix [TGT_t],        decoder starts with TGT_t
enum class TokenScheme { TE, STT, ST, TT };

std::string scheme_name(TokenScheme s);              // "T-E", "ST-T", "S-T", "T-T"
TokenScheme scheme_from_name(const std::string& s);  // throws ValidationError

// Id layout: specials first, then one SRC_ and one TGT_ control token per
// language in a contiguous low block, then surface tokens. Surface ids are
// therefore stable across schemes, which is what lets a checkpoint trained
// under one scheme be resumed under another without resizing anything.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;

  static Vocabulary build(const Universe& u);

  int size() const { return static_cast<int>(tokens_.size()); }
  int n_languages() const { return n_languages_; }
  int surface_base() const { return surface_base_; }

  TokenId src_token(const std::string& code) const;
  TokenId tgt_token(const std::string& code) const;

  TokenId surface_to_vocab(TokenId surface) const;
  std::optional<TokenId> vocab_to_surface(TokenId id) const;

  bool is_special(TokenId id) const { return id >= 0 && id < 4; }
  bool is_control(TokenId id) const { return id >= 4 && id < surface_base_; }
  bool is_surface(TokenId id) const {
    return id >= surface_base_ && id < size();
  }

  const std::string& token_string(TokenId id) const;
  std::optional<TokenId> id_of(const std::string& token) const;

  uint64_t digest() const;
  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  Vocabulary() = default;
  std::vector<std::string> tokens_;
  std::vector<std::string> lang_codes_;  // universe order
  int n_languages_ = 0;
  int surface_base_ = 0;
};

// Integer-id triple ready for the model. decoder_input and target are the
// same length: target is the decoder input shifted left with EOS appended,
// and never contains control tokens or BOS.
struct TaggedExample {
  std::vector<TokenId> encoder_ids;
  std::vector<TokenId> decoder_input_ids;
  std::vector<TokenId> target_ids;
};

TokenId decode_start_token(TokenScheme scheme, const std::string& tgt_code,
                           const Vocabulary& vocab);

TaggedExample apply_scheme(const SentencePair& pair, TokenScheme scheme,
                           const Vocabulary& vocab);

// Cleans generated output: truncates at the first EOS, drops specials and
// control tokens, maps what remains back to universe surface ids. Tolerates
// arbitrary garbage.
std::vector<TokenId> strip_output(std::span<const TokenId> ids,
                                  const Vocabulary& vocab);

}  // namespace minimt

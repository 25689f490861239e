#include "minimt/vocab.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace minimt {

using json = nlohmann::ordered_json;

std::string scheme_name(TokenScheme s) {
  switch (s) {
    case TokenScheme::TE: return "T-E";
    case TokenScheme::STT: return "ST-T";
    case TokenScheme::ST: return "S-T";
    case TokenScheme::TT: return "T-T";
  }
  return "?";
}

TokenScheme scheme_from_name(const std::string& s) {
  if (s == "T-E") return TokenScheme::TE;
  if (s == "ST-T") return TokenScheme::STT;
  if (s == "S-T") return TokenScheme::ST;
  if (s == "T-T") return TokenScheme::TT;
  throw ValidationError("unknown token scheme '" + s +
                        "' (expected one of T-E, ST-T, S-T, T-T)");
}

Vocabulary Vocabulary::build(const Universe& u) {
  Vocabulary v;
  v.n_languages_ = u.n_languages();
  v.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& l : u.languages()) {
    v.lang_codes_.push_back(l.code());
    v.tokens_.push_back("<src:" + l.code() + ">");
    v.tokens_.push_back("<tgt:" + l.code() + ">");
  }
  v.surface_base_ = static_cast<int>(v.tokens_.size());
  for (const auto& l : u.languages())
    for (int k = 0; k < u.v_content(); ++k)
      v.tokens_.push_back(l.code() + ":" + std::to_string(k));
  return v;
}

namespace {

[[noreturn]] void unknown_language(const std::string& code) {
  throw ValidationError("language '" + code + "' has no control tokens");
}

}  // namespace

TokenId Vocabulary::src_token(const std::string& code) const {
  for (size_t i = 0; i < lang_codes_.size(); ++i)
    if (lang_codes_[i] == code) return static_cast<TokenId>(4 + 2 * i);
  unknown_language(code);
}

TokenId Vocabulary::tgt_token(const std::string& code) const {
  for (size_t i = 0; i < lang_codes_.size(); ++i)
    if (lang_codes_[i] == code) return static_cast<TokenId>(5 + 2 * i);
  unknown_language(code);
}

TokenId Vocabulary::surface_to_vocab(TokenId surface) const {
  int n_surface = size() - surface_base_;
  if (surface < 0 || surface >= n_surface)
    throw ValidationError("surface token " + std::to_string(surface) +
                          " outside universe surface space");
  return surface_base_ + surface;
}

std::optional<TokenId> Vocabulary::vocab_to_surface(TokenId id) const {
  if (!is_surface(id)) return std::nullopt;
  return id - surface_base_;
}

const std::string& Vocabulary::token_string(TokenId id) const {
  if (id < 0 || id >= size())
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::optional<TokenId> Vocabulary::id_of(const std::string& token) const {
  for (size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<TokenId>(i);
  return std::nullopt;
}

uint64_t Vocabulary::digest() const {
  uint64_t h = kFnvBasis;
  const char sep = '\x1f';
  for (const auto& t : tokens_) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64(&sep, 1, h);
  }
  return h;
}

std::string Vocabulary::to_json() const {
  json j;
  j["version"] = 1;
  j["n_languages"] = n_languages_;
  j["surface_base"] = surface_base_;
  j["languages"] = lang_codes_;
  j["tokens"] = tokens_;
  return j.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw RuntimeFailure("vocabulary file: unsupported version");
  Vocabulary v;
  v.n_languages_ = j["n_languages"].get<int>();
  v.surface_base_ = j["surface_base"].get<int>();
  v.lang_codes_ = j["languages"].get<std::vector<std::string>>();
  v.tokens_ = j["tokens"].get<std::vector<std::string>>();
  if (v.surface_base_ != 4 + 2 * v.n_languages_ ||
      static_cast<int>(v.tokens_.size()) < v.surface_base_)
    throw RuntimeFailure("vocabulary file: inconsistent layout");
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write vocabulary to " + path.string());
  out << to_json() << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open vocabulary file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(ss.str());
  } catch (const json::exception& e) {
    throw RuntimeFailure("malformed vocabulary file " + path.string() + ": " +
                         e.what());
  }
}

TokenId decode_start_token(TokenScheme scheme, const std::string& tgt_code,
                           const Vocabulary& vocab) {
  if (scheme == TokenScheme::TE) return Vocabulary::kBos;
  return vocab.tgt_token(tgt_code);
}

TaggedExample apply_scheme(const SentencePair& pair, TokenScheme scheme,
                           const Vocabulary& vocab) {
  TaggedExample ex;
  // Encoder prefix per scheme; SRC before TGT when both are present.
  switch (scheme) {
    case TokenScheme::TE:
    case TokenScheme::TT:
      ex.encoder_ids.push_back(vocab.tgt_token(pair.tgt_lang));
      break;
    case TokenScheme::STT:
      ex.encoder_ids.push_back(vocab.src_token(pair.src_lang));
      ex.encoder_ids.push_back(vocab.tgt_token(pair.tgt_lang));
      break;
    case TokenScheme::ST:
      ex.encoder_ids.push_back(vocab.src_token(pair.src_lang));
      break;
  }
  for (TokenId t : pair.src) ex.encoder_ids.push_back(vocab.surface_to_vocab(t));
  ex.encoder_ids.push_back(Vocabulary::kEos);

  ex.decoder_input_ids.push_back(decode_start_token(scheme, pair.tgt_lang, vocab));
  for (TokenId t : pair.tgt)
    ex.decoder_input_ids.push_back(vocab.surface_to_vocab(t));
  for (TokenId t : pair.tgt) ex.target_ids.push_back(vocab.surface_to_vocab(t));
  ex.target_ids.push_back(Vocabulary::kEos);
  return ex;
}

std::vector<TokenId> strip_output(std::span<const TokenId> ids,
                                  const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kEos) break;
    if (auto s = vocab.vocab_to_surface(id)) out.push_back(*s);
  }
  return out;
}

}  // namespace minimt

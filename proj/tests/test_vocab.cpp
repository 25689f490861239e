#include <doctest.h>

#include <set>

#include "minimt/vocab.hpp"

using namespace minimt;

namespace {

struct Fixture {
  Universe u = Universe::build(5, 64, 7);
  Vocabulary vocab = Vocabulary::build(u);
  SentencePair pair;

  Fixture() {
    PivotSentence p{{3, 17, 0}};
    pair = {"x1", "x2", u.by_code("x1").render(p), u.by_code("x2").render(p)};
  }
};

}  // namespace

TEST_CASE("vocabulary layout: dense ids, control block, surface mapping") {
  Fixture f;
  CHECK(f.vocab.size() == 4 + 2 * 5 + 5 * 64);
  CHECK(f.vocab.surface_base() == 14);
  CHECK(f.vocab.token_string(Vocabulary::kPad) == "<pad>");
  CHECK(f.vocab.token_string(f.vocab.src_token("en")) == "<src:en>");
  CHECK(f.vocab.token_string(f.vocab.tgt_token("x3")) == "<tgt:x3>");
  CHECK(f.vocab.is_control(f.vocab.src_token("x1")));
  CHECK_FALSE(f.vocab.is_control(Vocabulary::kEos));

  // Every language has exactly one SRC_ and one TGT_ token, all ids unique.
  std::set<TokenId> ids;
  for (const auto& l : f.u.languages()) {
    CHECK(ids.insert(f.vocab.src_token(l.code())).second);
    CHECK(ids.insert(f.vocab.tgt_token(l.code())).second);
  }

  // Surface ids round-trip through the vocab block.
  for (TokenId s : {0, 63, 64, 5 * 64 - 1}) {
    TokenId v = f.vocab.surface_to_vocab(s);
    CHECK(f.vocab.is_surface(v));
    CHECK(f.vocab.vocab_to_surface(v) == s);
  }
  CHECK_THROWS_AS(f.vocab.surface_to_vocab(5 * 64), ValidationError);
  CHECK_THROWS_AS(f.vocab.src_token("zz"), ValidationError);
}

TEST_CASE("scheme names round-trip") {
  for (auto s : {TokenScheme::TE, TokenScheme::STT, TokenScheme::ST,
                 TokenScheme::TT})
    CHECK(scheme_from_name(scheme_name(s)) == s);
  CHECK(scheme_name(TokenScheme::STT) == "ST-T");
  CHECK_THROWS_AS(scheme_from_name("TE"), ValidationError);
}

TEST_CASE("decode_start_token per scheme") {
  Fixture f;
  CHECK(decode_start_token(TokenScheme::TE, "x2", f.vocab) == Vocabulary::kBos);
  CHECK(decode_start_token(TokenScheme::STT, "x2", f.vocab) ==
        f.vocab.tgt_token("x2"));
  CHECK(decode_start_token(TokenScheme::ST, "x2", f.vocab) ==
        f.vocab.tgt_token("x2"));
  CHECK(decode_start_token(TokenScheme::TT, "x2", f.vocab) ==
        f.vocab.tgt_token("x2"));
  CHECK_THROWS_AS(decode_start_token(TokenScheme::STT, "zz", f.vocab),
                  ValidationError);
}

TEST_CASE("apply_scheme: exact streams for each scheme") {
  Fixture f;
  auto sv = [&](TokenId s) { return f.vocab.surface_to_vocab(s); };
  std::vector<TokenId> src_v, tgt_v;
  for (TokenId t : f.pair.src) src_v.push_back(sv(t));
  for (TokenId t : f.pair.tgt) tgt_v.push_back(sv(t));

  auto te = apply_scheme(f.pair, TokenScheme::TE, f.vocab);
  std::vector<TokenId> want_enc{f.vocab.tgt_token("x2")};
  want_enc.insert(want_enc.end(), src_v.begin(), src_v.end());
  want_enc.push_back(Vocabulary::kEos);
  CHECK(te.encoder_ids == want_enc);
  CHECK(te.decoder_input_ids.front() == Vocabulary::kBos);

  auto stt = apply_scheme(f.pair, TokenScheme::STT, f.vocab);
  std::vector<TokenId> want_stt{f.vocab.src_token("x1"), f.vocab.tgt_token("x2")};
  want_stt.insert(want_stt.end(), src_v.begin(), src_v.end());
  want_stt.push_back(Vocabulary::kEos);
  CHECK(stt.encoder_ids == want_stt);
  CHECK(stt.decoder_input_ids.front() == f.vocab.tgt_token("x2"));

  auto st = apply_scheme(f.pair, TokenScheme::ST, f.vocab);
  CHECK(st.encoder_ids.front() == f.vocab.src_token("x1"));
  CHECK(st.decoder_input_ids.front() == f.vocab.tgt_token("x2"));

  auto tt = apply_scheme(f.pair, TokenScheme::TT, f.vocab);
  // Structural relations between schemes.
  CHECK(tt.encoder_ids == te.encoder_ids);
  std::vector<TokenId> st_plus = st.encoder_ids;
  st_plus.insert(st_plus.begin() + 1, f.vocab.tgt_token("x2"));
  CHECK(st_plus == stt.encoder_ids);

  for (const auto& ex : {te, stt, st, tt}) {
    CHECK(ex.decoder_input_ids.size() == ex.target_ids.size());
    // Targets: surface ids then EOS, never control tokens or BOS.
    CHECK(ex.target_ids.back() == Vocabulary::kEos);
    for (size_t i = 0; i + 1 < ex.target_ids.size(); ++i) {
      CHECK(f.vocab.is_surface(ex.target_ids[i]));
      CHECK(ex.target_ids[i] != Vocabulary::kBos);
    }
    CHECK(ex.decoder_input_ids.size() == f.pair.tgt.size() + 1);
    // Tail of decoder input is the target surface ids.
    for (size_t i = 0; i < f.pair.tgt.size(); ++i)
      CHECK(ex.decoder_input_ids[i + 1] == tgt_v[i]);
    // Stripping the model-side framing recovers the original pair ids.
    CHECK(strip_output(ex.target_ids, f.vocab) == f.pair.tgt);
    std::vector<TokenId> enc_body(ex.encoder_ids.begin(), ex.encoder_ids.end());
    CHECK(strip_output(enc_body, f.vocab) == f.pair.src);
  }
}

TEST_CASE("apply_scheme rejects unknown language") {
  Fixture f;
  SentencePair bad = f.pair;
  bad.tgt_lang = "zz";
  CHECK_THROWS_AS(apply_scheme(bad, TokenScheme::TE, f.vocab), ValidationError);
}

TEST_CASE("strip_output garbage tolerance") {
  Fixture f;
  TokenId s101 = f.vocab.surface_to_vocab(101);
  TokenId s102 = f.vocab.surface_to_vocab(102);
  TokenId s55 = f.vocab.surface_to_vocab(55);

  std::vector<TokenId> with_eos{f.vocab.tgt_token("x2"), s101, s102,
                                Vocabulary::kEos, s55};
  CHECK(strip_output(with_eos, f.vocab) == std::vector<TokenId>{101, 102});

  CHECK(strip_output(std::vector<TokenId>{Vocabulary::kEos}, f.vocab).empty());

  std::vector<TokenId> pure{s101, s55};
  CHECK(strip_output(pure, f.vocab) == std::vector<TokenId>{101, 55});

  std::vector<TokenId> junk{Vocabulary::kPad, Vocabulary::kBos,
                            f.vocab.src_token("en"), s55, Vocabulary::kUnk};
  CHECK(strip_output(junk, f.vocab) == std::vector<TokenId>{55});
}

TEST_CASE("vocabulary json round-trip and digest stability") {
  Fixture f;
  Vocabulary v2 = Vocabulary::from_json(f.vocab.to_json());
  CHECK(v2.size() == f.vocab.size());
  CHECK(v2.digest() == f.vocab.digest());
  CHECK(v2.tgt_token("x4") == f.vocab.tgt_token("x4"));

  Vocabulary other = Vocabulary::build(Universe::build(4, 64, 7));
  CHECK(other.digest() != f.vocab.digest());
}

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "minimt/model/checkpoint.hpp"
#include "minimt/model/transformer.hpp"
#include "minimt/rng.hpp"

using namespace minimt;
using namespace minimt::model;
namespace fs = std::filesystem;

namespace {

ModelConfig cfg_for_test() {
  ModelConfig c;
  c.d_model = 16;
  c.d_ff = 32;
  c.n_heads = 2;
  c.n_enc_layers = 2;
  c.n_dec_layers = 1;
  c.vocab_size = 20;
  c.max_positions = 8;
  return c;
}

Checkpoint make_ckpt(const ModelConfig& c) {
  Checkpoint ck;
  ck.config = c;
  ck.params = Parameters<float>::random_init(c, 13);
  ck.m = Parameters<float>::random_init(c, 14);
  ck.v = Parameters<float>::random_init(c, 15);
  ck.v.for_each([](const std::string&, Mat<float>& m) {
    m = m.cwiseProduct(m);
  });
  ck.step = 321;
  ck.seeds = {111, 222};
  ck.provenance.scheme = "ST-T";
  ck.provenance.data_digest = "abc";
  ck.provenance.vocab_digest = "def";
  ck.provenance.parent = "B";
  ck.provenance.cumulative_base = 1000;
  return ck;
}

Batch probe_batch(const ModelConfig& c) {
  Batch b;
  TaggedExample ex;
  ex.encoder_ids = {5, 6, 7, Vocabulary::kEos};
  ex.decoder_input_ids = {Vocabulary::kBos, 8, 9};
  ex.target_ids = {8, 9, Vocabulary::kEos};
  b.items.push_back(ex);
  (void)c;
  return b;
}

fs::path tmp(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("minimt_ckpt_" + name);
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("save/load round-trip reproduces forward bit-exactly") {
  ModelConfig c = cfg_for_test();
  Checkpoint ck = make_ckpt(c);
  fs::path p = tmp("roundtrip.ckpt");
  save_checkpoint(ck, p);

  bool digest_ok = false;
  Checkpoint got = load_checkpoint(p, &digest_ok);
  CHECK(digest_ok);
  CHECK(got.step == 321);
  CHECK(got.seeds.data_seed == 111);
  CHECK(got.provenance.scheme == "ST-T");
  CHECK(got.provenance.cumulative_base == 1000);
  CHECK(got.cumulative_step() == 1321);
  CHECK(got.params.digest() == ck.params.digest());
  CHECK(got.m.digest() == ck.m.digest());
  CHECK(got.v.digest() == ck.v.digest());

  Transformer<float> before(c, ck.params);
  Transformer<float> after(c, got.params);
  Batch probe = probe_batch(c);
  auto l1 = before.forward(probe);
  auto l2 = after.forward(probe);
  CHECK(l1[0] == l2[0]);
  fs::remove(p);
}

TEST_CASE("truncated checkpoint gives a structured error") {
  ModelConfig c = cfg_for_test();
  Checkpoint ck = make_ckpt(c);
  fs::path p = tmp("trunc.ckpt");
  save_checkpoint(ck, p);
  auto size = fs::file_size(p);
  fs::resize_file(p, size / 2);
  CHECK_THROWS_AS(load_checkpoint(p), RuntimeFailure);
  fs::remove(p);

  fs::path garbage = tmp("garbage.ckpt");
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(garbage), RuntimeFailure);
  fs::remove(garbage);
}

TEST_CASE("config mismatch detection names the differing field") {
  ModelConfig a = cfg_for_test();
  ModelConfig b = a;
  b.n_enc_layers = 3;
  auto diff = a.field_diff(b);
  REQUIRE(diff.has_value());
  CHECK(*diff == "n_enc_layers");
  CHECK_FALSE(a.field_diff(a).has_value());
}

TEST_CASE("reset_nonparameter_state keeps params, clears the rest") {
  ModelConfig c = cfg_for_test();
  Checkpoint ck = make_ckpt(c);
  uint64_t params_before = ck.params.digest();
  Checkpoint reset = reset_nonparameter_state(ck, 999);
  CHECK(reset.params.digest() == params_before);
  CHECK(reset.step == 0);
  CHECK(reset.provenance.cumulative_base == 1000 + 321);
  CHECK(reset.m.digest() == Parameters<float>::shaped(c).digest());
  CHECK(reset.v.digest() == Parameters<float>::shaped(c).digest());
  CHECK(reset.seeds.data_seed != ck.seeds.data_seed);

  Checkpoint reset2 = reset_nonparameter_state(make_ckpt(c), 999);
  CHECK(reset2.seeds.data_seed == reset.seeds.data_seed);
}

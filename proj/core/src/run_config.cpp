#include "minimt/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace minimt::cli {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw ValidationError("config." + field + ": " + why);
  };
  if (out_dir.empty()) bad("out_dir", "must not be empty");
  if (universe.n_languages < 3)
    bad("universe.n_languages",
        "need >= 3 so zero-shot direct translation exists");
  if (universe.v_content < 2) bad("universe.v_content", "must be >= 2");
  if (universe.max_len < 1) bad("universe.max_len", "must be >= 1");
  if (corpus.len_lo < 1 || corpus.len_hi < corpus.len_lo)
    bad("corpus.len_lo/len_hi", "need 1 <= len_lo <= len_hi");
  if (corpus.len_hi > universe.max_len)
    bad("corpus.len_hi", "exceeds universe.max_len");
  if (corpus.zipf_s < 0) bad("corpus.zipf_s", "must be >= 0");
  if (corpus.train_pairs_per_direction < 1)
    bad("corpus.train_pairs_per_direction", "must be >= 1");
  if (corpus.direct_pairs_per_direction < 1)
    bad("corpus.direct_pairs_per_direction", "must be >= 1");
  if (corpus.dev_per_direction < 1) bad("corpus.dev_per_direction", "must be >= 1");
  if (corpus.test_per_direction < 1)
    bad("corpus.test_per_direction", "must be >= 1");
  if (corpus.noise_pairs_per_kind < 0)
    bad("corpus.noise_pairs_per_kind", "must be >= 0");
  if (corpus.leak_pairs < 0) bad("corpus.leak_pairs", "must be >= 0");
  filter.validate();
  // Model vocab size is derived; validate the rest on a filled copy.
  model::ModelConfig mc = model;
  if (mc.vocab_size == 0)
    mc.vocab_size =
        4 + 2 * universe.n_languages + universe.n_languages * universe.v_content;
  mc.validate();
  int needed = 2 + universe.max_len + 1;
  if (mc.max_positions < needed)
    bad("model.max_positions", "must cover prefix + max_len + EOS = " +
                                   std::to_string(needed));
  if (training.base_steps < 0 || training.resume_steps < 0 ||
      training.direct_steps < 0 || training.domain_steps < 0)
    bad("training.*_steps", "must be >= 0");
  if (training.eval_every < 1) bad("training.eval_every", "must be >= 1");
  if (training.batch_size < 1) bad("training.batch_size", "must be >= 1");
  if (training.mid_fraction <= 0 || training.mid_fraction >= 1)
    bad("training.mid_fraction", "must be in (0, 1)");
  if (training.beam_width < 1) bad("training.beam_width", "must be >= 1");
  if (training.compare_resamples < 100)
    bad("training.compare_resamples", "must be >= 100");
  for (const auto& [name, h] :
       {std::pair<const char*, const train::PhaseHyper*>{"pretrain",
                                                         &training.pretrain},
        {"finetune", &training.finetune},
        {"domain", &training.domain}}) {
    if (h->peak_lr <= 0)
      bad(std::string("training.") + name + ".peak_lr", "must be > 0");
    if (h->warmup < 1)
      bad(std::string("training.") + name + ".warmup", "must be >= 1");
  }
  if (mix.cap_per_direction < 1) bad("mix.cap_per_direction", "must be >= 1");
  if (domain.n_domains < 1 || domain.n_domains > universe.v_content / 2)
    bad("domain.n_domains", "must be in [1, v_content/2]");
  if (domain.train_pairs_per_direction < 1)
    bad("domain.train_pairs_per_direction", "must be >= 1");
  if (universe.n_languages < 3 && domain.n_domains > 0)
    bad("domain", "domain adaptation needs two non-pivot languages");
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ValidationError("config: unknown field '" + where + key + "'");
}

template <typename T>
void opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir.string();
  j["universe"] = {{"n_languages", universe.n_languages},
                   {"v_content", universe.v_content},
                   {"max_len", universe.max_len},
                   {"reorder", universe.reorder}};
  j["corpus"] = {{"zipf_s", corpus.zipf_s},
                 {"len_lo", corpus.len_lo},
                 {"len_hi", corpus.len_hi},
                 {"train_pairs_per_direction", corpus.train_pairs_per_direction},
                 {"direct_pairs_per_direction", corpus.direct_pairs_per_direction},
                 {"dev_per_direction", corpus.dev_per_direction},
                 {"test_per_direction", corpus.test_per_direction},
                 {"noise_pairs_per_kind", corpus.noise_pairs_per_kind},
                 {"leak_pairs", corpus.leak_pairs}};
  j["filter"] = {{"max_words", filter.max_words},
                 {"max_ratio", filter.max_ratio},
                 {"lid_enabled", filter.lid_enabled}};
  j["model"] = json::parse(model.to_json());
  j["training"] = {{"base_steps", training.base_steps},
                   {"resume_steps", training.resume_steps},
                   {"direct_steps", training.direct_steps},
                   {"domain_steps", training.domain_steps},
                   {"eval_every", training.eval_every},
                   {"batch_size", training.batch_size},
                   {"mid_fraction", training.mid_fraction},
                   {"pretrain", {{"peak_lr", training.pretrain.peak_lr},
                                 {"warmup", training.pretrain.warmup}}},
                   {"finetune", {{"peak_lr", training.finetune.peak_lr},
                                 {"warmup", training.finetune.warmup}}},
                   {"domain", {{"peak_lr", training.domain.peak_lr},
                               {"warmup", training.domain.warmup}}},
                   {"selection_metric", training.selection_metric},
                   {"n_threads", training.n_threads},
                   {"beam_width", training.beam_width},
                   {"length_alpha", training.length_alpha},
                   {"compare_resamples", training.compare_resamples}};
  j["mix"] = {{"cap_per_direction", mix.cap_per_direction}};
  j["domain"] = {{"n_domains", domain.n_domains},
                 {"train_pairs_per_direction", domain.train_pairs_per_direction},
                 {"dev_per_direction", domain.dev_per_direction},
                 {"test_per_direction", domain.test_per_direction}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    check_keys(j, {"seed", "out_dir", "universe", "corpus", "filter", "model",
                   "training", "mix", "domain"},
               "");
    opt(j, "seed", c.seed);
    std::string out;
    opt(j, "out_dir", out);
    if (!out.empty()) c.out_dir = out;
    if (j.contains("universe")) {
      const auto& u = j["universe"];
      check_keys(u, {"n_languages", "v_content", "max_len", "reorder"},
                 "universe.");
      opt(u, "n_languages", c.universe.n_languages);
      opt(u, "v_content", c.universe.v_content);
      opt(u, "max_len", c.universe.max_len);
      opt(u, "reorder", c.universe.reorder);
    }
    if (j.contains("corpus")) {
      const auto& k = j["corpus"];
      check_keys(k,
                 {"zipf_s", "len_lo", "len_hi", "train_pairs_per_direction",
                  "direct_pairs_per_direction", "dev_per_direction",
                  "test_per_direction", "noise_pairs_per_kind", "leak_pairs"},
                 "corpus.");
      opt(k, "zipf_s", c.corpus.zipf_s);
      opt(k, "len_lo", c.corpus.len_lo);
      opt(k, "len_hi", c.corpus.len_hi);
      opt(k, "train_pairs_per_direction", c.corpus.train_pairs_per_direction);
      opt(k, "direct_pairs_per_direction", c.corpus.direct_pairs_per_direction);
      opt(k, "dev_per_direction", c.corpus.dev_per_direction);
      opt(k, "test_per_direction", c.corpus.test_per_direction);
      opt(k, "noise_pairs_per_kind", c.corpus.noise_pairs_per_kind);
      opt(k, "leak_pairs", c.corpus.leak_pairs);
    }
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      check_keys(f, {"max_words", "max_ratio", "lid_enabled"}, "filter.");
      opt(f, "max_words", c.filter.max_words);
      opt(f, "max_ratio", c.filter.max_ratio);
      opt(f, "lid_enabled", c.filter.lid_enabled);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      check_keys(m,
                 {"d_model", "d_ff", "n_heads", "n_enc_layers", "n_dec_layers",
                  "vocab_size", "max_positions", "dropout", "label_smoothing",
                  "tie_embeddings"},
                 "model.");
      opt(m, "d_model", c.model.d_model);
      opt(m, "d_ff", c.model.d_ff);
      opt(m, "n_heads", c.model.n_heads);
      opt(m, "n_enc_layers", c.model.n_enc_layers);
      opt(m, "n_dec_layers", c.model.n_dec_layers);
      opt(m, "vocab_size", c.model.vocab_size);
      opt(m, "max_positions", c.model.max_positions);
      opt(m, "dropout", c.model.dropout);
      opt(m, "label_smoothing", c.model.label_smoothing);
      opt(m, "tie_embeddings", c.model.tie_embeddings);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      check_keys(t,
                 {"base_steps", "resume_steps", "direct_steps", "domain_steps",
                  "eval_every", "batch_size", "mid_fraction", "pretrain",
                  "finetune", "domain", "selection_metric", "n_threads",
                  "beam_width", "length_alpha", "compare_resamples"},
                 "training.");
      opt(t, "base_steps", c.training.base_steps);
      opt(t, "resume_steps", c.training.resume_steps);
      opt(t, "direct_steps", c.training.direct_steps);
      opt(t, "domain_steps", c.training.domain_steps);
      opt(t, "eval_every", c.training.eval_every);
      opt(t, "batch_size", c.training.batch_size);
      opt(t, "mid_fraction", c.training.mid_fraction);
      for (const auto& [name, h] :
           {std::pair<const char*, train::PhaseHyper*>{"pretrain",
                                                       &c.training.pretrain},
            {"finetune", &c.training.finetune},
            {"domain", &c.training.domain}}) {
        if (t.contains(name)) {
          check_keys(t[name], {"peak_lr", "warmup"},
                     std::string("training.") + name + ".");
          opt(t[name], "peak_lr", h->peak_lr);
          opt(t[name], "warmup", h->warmup);
        }
      }
      opt(t, "selection_metric", c.training.selection_metric);
      opt(t, "n_threads", c.training.n_threads);
      opt(t, "beam_width", c.training.beam_width);
      opt(t, "length_alpha", c.training.length_alpha);
      opt(t, "compare_resamples", c.training.compare_resamples);
    }
    if (j.contains("mix")) {
      check_keys(j["mix"], {"cap_per_direction"}, "mix.");
      opt(j["mix"], "cap_per_direction", c.mix.cap_per_direction);
    }
    if (j.contains("domain")) {
      const auto& d = j["domain"];
      check_keys(d,
                 {"n_domains", "train_pairs_per_direction", "dev_per_direction",
                  "test_per_direction"},
                 "domain.");
      opt(d, "n_domains", c.domain.n_domains);
      opt(d, "train_pairs_per_direction", c.domain.train_pairs_per_direction);
      opt(d, "dev_per_direction", c.domain.dev_per_direction);
      opt(d, "test_per_direction", c.domain.test_per_direction);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad field type: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& path,
                          const std::optional<std::string>& out_override) {
  RunConfig c;
  if (path) {
    std::ifstream in(*path, std::ios::binary);
    if (!in)
      throw ValidationError("cannot open config file " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    c = from_json(ss.str());
  }
  if (out_override && !out_override->empty()) c.out_dir = *out_override;
  c.validate();
  return c;
}

RunConfig RunConfig::tiny_variant() const {
  RunConfig t = *this;
  t.corpus.train_pairs_per_direction =
      std::min(t.corpus.train_pairs_per_direction, 150);
  t.corpus.direct_pairs_per_direction =
      std::min(t.corpus.direct_pairs_per_direction, 100);
  t.corpus.dev_per_direction = std::min(t.corpus.dev_per_direction, 3);
  t.corpus.test_per_direction = std::min(t.corpus.test_per_direction, 3);
  t.training.base_steps = std::min<int64_t>(t.training.base_steps, 20);
  t.training.resume_steps = std::min<int64_t>(t.training.resume_steps, 16);
  t.training.direct_steps = std::min<int64_t>(t.training.direct_steps, 10);
  t.training.domain_steps = std::min<int64_t>(t.training.domain_steps, 6);
  t.training.eval_every = std::min<int64_t>(t.training.eval_every, 10);
  t.training.batch_size = std::min(t.training.batch_size, 8);
  t.training.compare_resamples = 200;
  t.domain.train_pairs_per_direction =
      std::min(t.domain.train_pairs_per_direction, 80);
  t.domain.dev_per_direction = std::min(t.domain.dev_per_direction, 3);
  t.domain.test_per_direction = std::min(t.domain.test_per_direction, 3);
  return t;
}

}  // namespace minimt::cli

#include "minimt/cli/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "minimt/cli/criteria.hpp"
#include "minimt/eval/decode.hpp"
#include "minimt/rng.hpp"

namespace minimt::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

void log_jsonl(const std::string& line) {
  fprintf(stderr, "%s\n", line.c_str());
}

PivotSampleSpec sample_spec(const RunConfig& cfg, int support_lo = 0,
                            int support_hi = 0) {
  PivotSampleSpec s;
  s.length = LengthDist::uniform(cfg.corpus.len_lo, cfg.corpus.len_hi);
  s.zipf_s = cfg.corpus.zipf_s;
  s.support_lo = support_lo;
  s.support_hi = support_hi;
  return s;
}

bool is_english_centric(const Universe& u, const SentencePair& p) {
  const std::string& en = u.pivot().code();
  return p.src_lang == en || p.tgt_lang == en;
}

std::string domain_name(int k) { return "d" + std::to_string(k + 1); }

std::vector<Direction> domain_directions(const Universe& u) {
  return {{u.at(1).code(), u.at(2).code()}, {u.at(2).code(), u.at(1).code()}};
}

// Deliberately invalid pairs exercising each filter rule, plus dev/test
// leaks that the dedup stage must catch.
std::vector<SentencePair> make_noise(const Universe& u,
                                     std::span<const SentencePair> clean,
                                     int per_kind, const FilterConfig& filter,
                                     uint64_t seed) {
  std::vector<SentencePair> noise;
  if (clean.empty() || per_kind == 0) return noise;
  Rng rng(counter_hash(seed, 0x401e));
  auto pick = [&]() -> const SentencePair& {
    return clean[rng.next_below(clean.size())];
  };
  for (int i = 0; i < per_kind; ++i) {
    SentencePair p = pick();
    const auto& lang = u.by_code(p.src_lang);
    p.src.assign(static_cast<size_t>(filter.max_words + 1), 0);
    for (auto& t : p.src)
      t = lang.surface_offset() +
          static_cast<TokenId>(rng.next_below(
              static_cast<uint64_t>(u.v_content())));
    noise.push_back(std::move(p));
  }
  for (int i = 0; i < per_kind; ++i) {
    SentencePair p = pick();
    while (p.src.size() < 4) p.src.push_back(p.src.back());
    p.tgt.resize(1);
    noise.push_back(std::move(p));
  }
  for (int i = 0; i < per_kind; ++i) {
    SentencePair p = pick();
    int other = 1 + static_cast<int>(rng.next_below(
                        static_cast<uint64_t>(u.n_languages() - 1)));
    if (u.at(other).code() == p.src_lang) other = 0;
    p.src[0] = u.at(other).surface_offset();
    noise.push_back(std::move(p));
  }
  return noise;
}

struct CleanupOutcome {
  FilterTally tally;
  size_t deduped = 0;
  size_t final_size = 0;
};

// raw -> filter -> dedup-against-holdouts -> final, all on disk.
CleanupOutcome cleanup_corpus(const RunConfig& cfg, const Universe& u,
                              const fs::path& raw, const fs::path& final_path,
                              std::span<const std::span<const SentencePair>>
                                  holdouts) {
  CleanupOutcome out;
  auto lid = membership_predicate(u);
  auto filtered_tmp = final_path;
  filtered_tmp += ".filtered";
  out.tally = filter_file(raw, filtered_tmp, cfg.filter, lid);
  auto filtered = read_corpus(filtered_tmp);
  auto kept = dedup_against(filtered, holdouts);
  out.deduped = filtered.size() - kept.size();
  out.final_size = kept.size();
  write_corpus(kept, final_path);
  fs::remove(filtered_tmp);
  return out;
}

}  // namespace

World load_world(const RunConfig& cfg) {
  OutPaths paths{cfg.out_dir};
  for (const auto& p : {paths.universe(), paths.vocab()})
    if (!fs::exists(p))
      throw RuntimeFailure("missing prerequisite file: " + p.string() +
                           " (run `minimt gen` first)");
  World w{Universe::load(paths.universe()), Vocabulary::load(paths.vocab()),
          cfg.model};
  if (w.model_cfg.vocab_size == 0) w.model_cfg.vocab_size = w.vocab.size();
  w.model_cfg.validate();
  return w;
}

void run_gen(const RunConfig& cfg) {
  cfg.validate();
  OutPaths paths{cfg.out_dir};
  std::error_code ec;
  fs::create_directories(paths.corpora(), ec);
  if (ec)
    throw RuntimeFailure("cannot create output directory " +
                         paths.corpora().string() + ": " + ec.message());
  fs::create_directories(paths.reports());
  fs::create_directories(paths.plans());

  Universe u = Universe::build(cfg.universe.n_languages, cfg.universe.v_content,
                               counter_hash(cfg.seed, 0xa11),
                               cfg.universe.max_len, cfg.universe.reorder);
  u.save(paths.universe());
  Vocabulary vocab = Vocabulary::build(u);
  vocab.save(paths.vocab());
  write_text(paths.config(), cfg.to_json() + "\n");

  json summary;
  summary["universe"] = {{"n_languages", u.n_languages()},
                         {"v_content", u.v_content()},
                         {"vocab_size", vocab.size()}};

  // Main corpora. The direct corpus reuses the same seed, so both calls
  // partition the identical unique-pivot pool and dev/test stay disjoint
  // from every train split.
  CorpusSpec spec;
  spec.train_directions = english_centric_directions(u);
  spec.eval_directions = all_directions(u);
  spec.pairs_per_direction = cfg.corpus.train_pairs_per_direction;
  spec.dev_per_direction = cfg.corpus.dev_per_direction;
  spec.test_per_direction = cfg.corpus.test_per_direction;
  spec.sample = sample_spec(cfg);
  spec.seed = counter_hash(cfg.seed, 0xc0de);
  CorpusBundle ex = make_corpus(u, spec);

  CorpusSpec direct_spec = spec;
  direct_spec.train_directions = direct_directions(u);
  direct_spec.eval_directions.clear();
  direct_spec.pairs_per_direction = cfg.corpus.direct_pairs_per_direction;
  CorpusBundle xy = make_corpus(u, direct_spec);

  auto split_write = [&](const std::vector<SentencePair>& pairs,
                         const std::string& base) {
    std::vector<SentencePair> ex_part, xy_part;
    for (const auto& p : pairs)
      (is_english_centric(u, p) ? ex_part : xy_part).push_back(p);
    write_corpus(ex_part, paths.corpus(base + "_ex"));
    write_corpus(xy_part, paths.corpus(base + "_xy"));
    return std::pair<size_t, size_t>{ex_part.size(), xy_part.size()};
  };
  auto [dev_ex_n, dev_xy_n] = split_write(ex.dev, "dev");
  auto [test_ex_n, test_xy_n] = split_write(ex.test, "test");
  summary["dev"] = {{"ex", dev_ex_n}, {"xy", dev_xy_n}};
  summary["test"] = {{"ex", test_ex_n}, {"xy", test_xy_n}};

  std::vector<std::span<const SentencePair>> holdouts{ex.dev, ex.test};

  auto build_raw = [&](std::vector<SentencePair> train, bool english,
                       const std::string& name, uint64_t salt) {
    auto noise = make_noise(u, train, cfg.corpus.noise_pairs_per_kind,
                            cfg.filter, counter_hash(cfg.seed, salt));
    train.insert(train.end(), noise.begin(), noise.end());
    // Plant holdout leaks that only the dedup stage can remove.
    int planted = 0;
    for (const auto& p : ex.dev) {
      if (planted >= cfg.corpus.leak_pairs) break;
      if (is_english_centric(u, p) == english) {
        train.push_back(p);
        ++planted;
      }
    }
    Rng rng(counter_hash(cfg.seed, salt, 0x5481));
    rng.shuffle(train.data(), train.size());
    write_corpus(train, paths.corpus(name));
    return planted;
  };

  int leaks_ex = build_raw(ex.train, true, "raw_train_ex", 0xae1);
  int leaks_xy = build_raw(xy.train, false, "raw_train_xy", 0xae2);

  auto ex_clean = cleanup_corpus(cfg, u, paths.corpus("raw_train_ex"),
                                 paths.corpus("train_ex"), holdouts);
  write_text(paths.tally("ex"), ex_clean.tally.to_json() + "\n");
  auto xy_clean = cleanup_corpus(cfg, u, paths.corpus("raw_train_xy"),
                                 paths.corpus("train_xy"), holdouts);
  write_text(paths.tally("xy"), xy_clean.tally.to_json() + "\n");
  summary["train_ex"] = {{"raw", ex_clean.tally.total()},
                         {"kept", ex_clean.tally.kept},
                         {"deduped", ex_clean.deduped},
                         {"leaks_planted", leaks_ex},
                         {"final", ex_clean.final_size}};
  summary["train_xy"] = {{"raw", xy_clean.tally.total()},
                         {"kept", xy_clean.tally.kept},
                         {"deduped", xy_clean.deduped},
                         {"leaks_planted", leaks_xy},
                         {"final", xy_clean.final_size}};

  // Capped English-centric mixture plus all direct data.
  auto train_ex_final = read_corpus(paths.corpus("train_ex"));
  auto train_xy_final = read_corpus(paths.corpus("train_xy"));
  MixSpec mix{cfg.mix.cap_per_direction};
  auto mixed = mix_for_direct_ft(train_ex_final, train_xy_final, mix,
                                 counter_hash(cfg.seed, 0x313));
  write_corpus(mixed, paths.corpus("train_mixed"));
  summary["train_mixed"] = {{"size", mixed.size()},
                            {"cap_per_direction", cfg.mix.cap_per_direction}};

  // Synthetic domains: disjoint pivot-token supports, one corpus per domain
  // over both non-pivot directions, split per direction on disk.
  json domains = json::array();
  for (int k = 0; k < cfg.domain.n_domains; ++k) {
    int lo = k * u.v_content() / cfg.domain.n_domains;
    int hi = (k + 1) * u.v_content() / cfg.domain.n_domains;
    CorpusSpec dspec;
    dspec.train_directions = domain_directions(u);
    dspec.eval_directions = dspec.train_directions;
    dspec.pairs_per_direction = cfg.domain.train_pairs_per_direction;
    dspec.dev_per_direction = cfg.domain.dev_per_direction;
    dspec.test_per_direction = cfg.domain.test_per_direction;
    dspec.sample = sample_spec(cfg, lo, hi);
    dspec.seed = counter_hash(cfg.seed, 0xd0, static_cast<uint64_t>(k));
    CorpusBundle dom = make_corpus(u, dspec);
    std::vector<std::span<const SentencePair>> dom_holdouts{dom.dev, dom.test};
    auto train = dedup_against(dom.train, dom_holdouts);
    size_t removed = dom.train.size() - train.size();

    for (const auto& dir : dspec.train_directions) {
      fs::path dim = paths.domain_dir(domain_name(k), dir.label());
      fs::create_directories(dim);
      auto by_dir = [&](const std::vector<SentencePair>& v) {
        std::vector<SentencePair> out;
        for (const auto& p : v)
          if (p.direction() == dir) out.push_back(p);
        return out;
      };
      write_corpus(by_dir(train), dim / "train.tsv");
      write_corpus(by_dir(dom.dev), dim / "dev.tsv");
      write_corpus(by_dir(dom.test), dim / "test.tsv");
    }
    domains.push_back({{"name", domain_name(k)},
                       {"support", {lo, hi}},
                       {"train", train.size()},
                       {"dedup_removed", removed}});
  }
  summary["domains"] = domains;
  write_text(paths.gen_summary(), summary.dump(2) + "\n");
}

FilterTally run_filter(const RunConfig& cfg, const fs::path& in,
                       const fs::path& out,
                       const std::optional<fs::path>& tally_out) {
  World w = load_world(cfg);
  auto lid = membership_predicate(w.universe);
  FilterTally tally = filter_file(in, out, cfg.filter, lid);
  if (tally_out) write_text(*tally_out, tally.to_json() + "\n");
  return tally;
}

train::PlanMatrixConfig matrix_config(const RunConfig& cfg) {
  OutPaths paths{cfg.out_dir};
  train::PlanMatrixConfig m;
  m.base_steps = cfg.training.base_steps;
  m.resume_steps = cfg.training.resume_steps;
  m.direct_steps = cfg.training.direct_steps;
  m.domain_steps = cfg.training.domain_steps;
  m.eval_every = cfg.training.eval_every;
  m.batch_size = cfg.training.batch_size;
  m.mid_fraction = cfg.training.mid_fraction;
  m.pretrain = cfg.training.pretrain;
  m.finetune = cfg.training.finetune;
  m.domain = cfg.training.domain;
  m.selection_metric = cfg.training.selection_metric;
  m.seed = cfg.seed;
  m.train_ex = paths.corpus("train_ex");
  m.train_mixed = paths.corpus("train_mixed");
  m.dev_sets = {{"dev_ex", paths.corpus("dev_ex")},
                {"dev_xy", paths.corpus("dev_xy")}};
  // Domain refs depend only on the config, not on generated files.
  for (int k = 0; k < cfg.domain.n_domains; ++k) {
    for (int d = 0; d < 2; ++d) {
      std::string x1 = "x1", x2 = "x2";
      Direction dir = d == 0 ? Direction{x1, x2} : Direction{x2, x1};
      fs::path dim = paths.domain_dir(domain_name(k), dir.label());
      train::PlanMatrixConfig::DomainRef ref;
      ref.name = domain_name(k);
      ref.dir = dir;
      ref.train = dim / "train.tsv";
      ref.dev = {"dev_dom", dim / "dev.tsv"};
      m.domains.push_back(ref);
    }
  }
  return m;
}

train::RunPlanResult run_train(const RunConfig& cfg,
                               const std::string& plan_name) {
  World w = load_world(cfg);
  auto plans = train::build_plan_matrix(matrix_config(cfg));
  const auto& plan = train::plan_by_name(plans, plan_name);
  if (!fs::exists(plan.train_corpus))
    throw RuntimeFailure("missing prerequisite file: " +
                         plan.train_corpus.string() + " (run `minimt gen`)");
  train::Runner runner(w.universe, w.vocab, w.model_cfg, cfg.out_dir,
                       cfg.training.n_threads, log_jsonl);
  return runner.run_plan(plan);
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  return out;
}

fs::path resolve_devset(const RunConfig& cfg, const std::string& devset) {
  OutPaths paths{cfg.out_dir};
  for (const char* name : {"dev_ex", "dev_xy", "test_ex", "test_xy"})
    if (devset == name) return paths.corpus(name);
  // dom-<name>-<src>-<tgt>-<split>
  if (devset.rfind("dom-", 0) == 0) {
    auto rest = devset.substr(4);
    auto parts = std::vector<std::string>{};
    size_t pos = 0;
    while (true) {
      size_t dash = rest.find('-', pos);
      if (dash == std::string::npos) {
        parts.push_back(rest.substr(pos));
        break;
      }
      parts.push_back(rest.substr(pos, dash - pos));
      pos = dash + 1;
    }
    if (parts.size() == 4)
      return paths.domain_dir(parts[0], parts[1] + "-" + parts[2]) /
             (parts[3] + ".tsv");
  }
  if (fs::exists(devset)) return devset;
  throw ValidationError(
      "unknown devset '" + devset +
      "' (expected dev_ex, dev_xy, test_ex, test_xy, dom-<d>-<src>-<tgt>-"
      "<split>, or a corpus path)");
}

struct SystemHyps {
  std::string tag;
  std::vector<mt_eval::Hypothesis> hyps;
  int64_t step = -1;
};

SystemHyps system_hypotheses(const RunConfig& cfg, const World& w,
                             const std::string& system,
                             std::span<const SentencePair> pairs,
                             int beam_width) {
  SystemHyps out;
  if (system == "oracle") {
    out.tag = "oracle";
    for (const auto& p : pairs) {
      mt_eval::Hypothesis h;
      h.direction = p.direction();
      h.reference = p.tgt;
      h.output = oracle_translate(p.src, w.universe.by_code(p.src_lang),
                                  w.universe.by_code(p.tgt_lang));
      out.hyps.push_back(std::move(h));
    }
    return out;
  }
  OutPaths paths{cfg.out_dir};
  fs::path ckpt_path;
  if (fs::exists(paths.plans() / system / "best.ckpt")) {
    ckpt_path = paths.plans() / system / "best.ckpt";
    out.tag = system;
  } else if (fs::exists(system)) {
    ckpt_path = system;
    out.tag = sanitize(fs::path(system).stem().string());
  } else {
    throw RuntimeFailure("missing prerequisite file: no plan or checkpoint '" +
                         system + "'");
  }
  model::Checkpoint ck = model::load_checkpoint(ckpt_path);
  if (auto field = ck.config.field_diff(w.model_cfg))
    throw ValidationError("checkpoint " + ckpt_path.string() +
                          " has a different model config (field " + *field +
                          ")");
  out.step = ck.cumulative_step();
  model::Transformer<float> model(ck.config, std::move(ck.params));
  mt_eval::DecodeOptions opts;
  opts.beam_width = beam_width > 0 ? beam_width : cfg.training.beam_width;
  opts.length_alpha = cfg.training.length_alpha;
  opts.n_threads = cfg.training.n_threads > 0 ? cfg.training.n_threads : 2;
  out.hyps = mt_eval::generate(model, w.vocab, pairs,
                               scheme_from_name(ck.provenance.scheme), opts);
  return out;
}

}  // namespace

std::vector<mt_eval::Hypothesis> checkpoint_hypotheses(
    const RunConfig& cfg, const World& w, const fs::path& ckpt,
    std::span<const SentencePair> pairs, int beam_width) {
  return system_hypotheses(cfg, w, ckpt.string(), pairs, beam_width).hyps;
}

mt_eval::EvalReport run_eval(const RunConfig& cfg, const std::string& system,
                             const std::string& devset, int beam_width) {
  World w = load_world(cfg);
  auto pairs = read_corpus(resolve_devset(cfg, devset));
  auto sys = system_hypotheses(cfg, w, system, pairs, beam_width);
  auto rep = mt_eval::build_eval_report(w.universe, sys.hyps, sys.tag, devset,
                                        sys.step);
  OutPaths paths{cfg.out_dir};
  fs::create_directories(paths.reports());
  auto base = paths.reports() / ("eval_" + sanitize(sys.tag) + "_" +
                                 sanitize(devset));
  write_text(base.string() + ".json", mt_eval::report_to_json(rep) + "\n");
  write_text(base.string() + ".txt", mt_eval::report_table(rep));
  return rep;
}

mt_eval::ComparisonReport run_compare(const RunConfig& cfg,
                                      const std::string& system_a,
                                      const std::string& system_b,
                                      const std::string& devset) {
  World w = load_world(cfg);
  auto pairs = read_corpus(resolve_devset(cfg, devset));
  auto a = system_hypotheses(cfg, w, system_a, pairs, 0);
  auto b = system_hypotheses(cfg, w, system_b, pairs, 0);
  auto rep = mt_eval::compare_systems(w.universe, a.hyps, b.hyps, a.tag, b.tag,
                                      cfg.training.compare_resamples,
                                      counter_hash(cfg.seed, 0xc0ba));
  OutPaths paths{cfg.out_dir};
  fs::create_directories(paths.reports());
  auto base = paths.reports() / ("compare_" + sanitize(a.tag) + "_vs_" +
                                 sanitize(b.tag) + "_" + sanitize(devset));
  write_text(base.string() + ".json", mt_eval::comparison_to_json(rep) + "\n");
  write_text(base.string() + ".txt", mt_eval::comparison_table(rep));
  return rep;
}

uint64_t metrics_digest(const fs::path& out_root) {
  std::vector<fs::path> files;
  OutPaths paths{out_root};
  if (fs::exists(paths.reports()))
    for (const auto& e : fs::recursive_directory_iterator(paths.reports()))
      if (e.is_regular_file() && e.path().extension() == ".json" &&
          e.path().filename() != "runtime.json")
        files.push_back(e.path());
  if (fs::exists(paths.plans()))
    for (const auto& e : fs::recursive_directory_iterator(paths.plans()))
      if (e.is_regular_file() && e.path().filename() == "curve.csv")
        files.push_back(e.path());
  std::sort(files.begin(), files.end());
  uint64_t h = kFnvBasis;
  for (const auto& f : files) {
    std::string rel = fs::relative(f, out_root).generic_string();
    h = fnv1a64(rel.data(), rel.size(), h);
    h = counter_hash(h, file_digest(f));
  }
  return h;
}

ReproOutcome run_repro(const RunConfig& cfg, bool with_criteria) {
  ReproOutcome outcome;
  OutPaths paths{cfg.out_dir};

  auto stage = [&](const std::string& name, auto&& fn) {
    fprintf(stderr, "{\"event\":\"stage\",\"name\":\"%s\"}\n", name.c_str());
    try {
      fn();
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw RuntimeFailure("stage " + name + " failed: " + e.what());
    }
  };

  stage("gen", [&] { run_gen(cfg); });

  World w = load_world(cfg);
  auto plans = train::build_plan_matrix(matrix_config(cfg));
  train::Runner runner(w.universe, w.vocab, w.model_cfg, cfg.out_dir,
                       cfg.training.n_threads, log_jsonl);

  std::vector<std::string> order{"B", "STT", "ST", "TT", "P", "D", "P-D", "DP"};
  for (const auto& p : plans)
    if (p.name.rfind("dom-", 0) == 0) order.push_back(p.name);
  for (const auto& name : order) {
    stage("train-" + name, [&] {
      auto res = runner.run_plan(train::plan_by_name(plans, name));
      outcome.plans[name] = {res.curve, res.best_step, res.best_phase_step,
                             res.best_metric};
    });
  }

  stage("figures", [&] {
    auto figure = [&](const std::string& file,
                      const std::vector<std::string>& names) {
      std::string csv = "plan,scheme,step,devset,metric,value\n";
      char buf[192];
      for (const auto& name : names) {
        const auto& plan = train::plan_by_name(plans, name);
        for (const auto& r : outcome.plans.at(name).curve) {
          auto row = [&](const char* metric, double v) {
            snprintf(buf, sizeof(buf), "%s,%s,%lld,%s,%s,%.6f\n", name.c_str(),
                     scheme_name(plan.scheme).c_str(),
                     static_cast<long long>(r.step), r.devset.c_str(), metric,
                     v);
            csv += buf;
          };
          row("bleu", r.bleu);
          row("off_target", r.off_target);
          row("loss", r.loss);
        }
      }
      write_text(paths.reports() / file, csv);
    };
    figure("fig2_from_scratch.csv", {"B", "STT", "ST", "TT"});
    figure("fig3_resume.csv", {"B", "P"});
    figure("fig4_direct.csv", {"P", "D", "P-D", "DP"});
  });

  TableData tables;
  stage("tables", [&] { tables = write_report_tables(cfg, w, outcome); });

  if (with_criteria) {
    bool pass = false;
    stage("criteria",
          [&] { pass = evaluate_criteria(cfg, w, outcome, tables); });
    outcome.all_pass = pass;
    outcome.report_path = paths.reports() / "acceptance_report.json";
    outcome.metrics_path = paths.reports() / "metrics.json";
  } else {
    outcome.all_pass = true;
  }
  return outcome;
}

}  // namespace minimt::cli

#include "minimt/cli/criteria.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "minimt/eval/significance.hpp"
#include "minimt/model/gradcheck.hpp"
#include "minimt/rng.hpp"

namespace minimt::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

TableData::DevPoint dev_point(const train::TrainingCurve& curve, int64_t step) {
  TableData::DevPoint p;
  p.step = step;
  int64_t ex_n = 0, xy_n = 0;
  for (const auto& r : curve) {
    if (r.step != step) continue;
    if (r.devset == "dev_ex") {
      p.ex_bleu = r.bleu;
      p.ex_off = r.off_target;
      ex_n = 1;
    } else if (r.devset == "dev_xy") {
      p.xy_bleu = r.bleu;
      p.xy_off = r.off_target;
      xy_n = 1;
    }
  }
  if (ex_n + xy_n > 0) p.both_off = (p.ex_off + p.xy_off) / (ex_n + xy_n);
  return p;
}

int64_t final_step(const train::TrainingCurve& curve) {
  int64_t s = 0;
  for (const auto& r : curve) s = std::max(s, r.step);
  return s;
}

}  // namespace

TableData write_report_tables(const RunConfig& cfg, const World& w,
                              const ReproOutcome& outcome) {
  TableData t;
  OutPaths paths{cfg.out_dir};

  // Dev-side numbers straight off the curves (greedy decoding).
  for (const auto& [name, summary] : outcome.plans) {
    t.dev_best[name] = dev_point(summary.curve, summary.best_step);
    t.dev_final[name] = dev_point(summary.curve, final_step(summary.curve));
  }

  // Table 1 analogue: off-target percentages per scheme on the dev sets.
  {
    json rows = json::object();
    for (const auto& [plan, scheme] :
         {std::pair<const char*, const char*>{"B", "T-E"},
          {"STT", "ST-T"},
          {"ST", "S-T"},
          {"TT", "T-T"}}) {
      if (!t.dev_best.count(plan)) continue;
      const auto& p = t.dev_best.at(plan);
      rows[scheme] = {{"step", p.step},
                      {"ex", p.ex_off},
                      {"xy", p.xy_off},
                      {"both", p.both_off}};
    }
    json j;
    j["measured_at"] = "best checkpoint per scheme, greedy decoding, dev sets";
    j["rows"] = rows;
    write_text(paths.reports() / "table1_offtarget.json", j.dump(2) + "\n");
  }

  // Table 2 analogue: beam evaluation of the finetuning family on test.
  auto test_pairs = read_corpus(paths.corpus("test_ex"));
  {
    auto xy = read_corpus(paths.corpus("test_xy"));
    test_pairs.insert(test_pairs.end(), xy.begin(), xy.end());
  }
  std::map<std::string, std::vector<mt_eval::Hypothesis>> test_hyps;
  for (const char* name : {"B", "P", "P-D", "D", "DP"}) {
    if (!outcome.plans.count(name)) continue;
    auto hyps = checkpoint_hypotheses(
        cfg, w, paths.plans() / name / "best.ckpt", test_pairs,
        cfg.training.beam_width);
    auto rep = mt_eval::build_eval_report(w.universe, hyps, name, "test",
                                          outcome.plans.at(name).best_step);
    TableData::TestPoint tp;
    tp.direct_bleu = rep.group_bleu("x2y");
    tp.ex_bleu = rep.group_bleu("ex");
    tp.x2e_bleu = rep.group_bleu("x2e");
    tp.e2x_bleu = rep.group_bleu("e2x");
    tp.best_at = outcome.plans.at(name).best_step;
    t.table2[name] = tp;
    test_hyps[name] = std::move(hyps);
  }
  {
    json rows = json::object();
    for (const char* name : {"B", "P", "P-D", "D", "DP"}) {
      if (!t.table2.count(name)) continue;
      const auto& tp = t.table2.at(name);
      rows[name] = {{"direct", tp.direct_bleu},
                    {"english_centric", tp.ex_bleu},
                    {"x2e", tp.x2e_bleu},
                    {"e2x", tp.e2x_bleu},
                    {"best_at", tp.best_at}};
    }
    json j;
    j["decoding"] = {{"mode", "beam"},
                     {"width", cfg.training.beam_width},
                     {"length_alpha", cfg.training.length_alpha}};
    j["rows"] = rows;
    write_text(paths.reports() / "table2_bleu.json", j.dump(2) + "\n");
  }

  // Table 3 analogue: per-direction bootstrap wins, challenger vs baseline.
  {
    json j;
    auto block = [&](const std::string& a, const std::string& b) {
      auto rep = mt_eval::compare_systems(
          w.universe, test_hyps.at(a), test_hyps.at(b), a, b,
          cfg.training.compare_resamples, counter_hash(cfg.seed, 0x7ab3));
      json out;
      out["a"] = a;
      out["b"] = b;
      out["wins"] = json::object();
      for (const auto& [key, n] : rep.wins_a)
        out["wins"][key] = {{"a", n},
                            {"b", rep.wins_b.at(key)},
                            {"tie", rep.ties.at(key)}};
      json dirs = json::object();
      for (const auto& dc : rep.directions)
        dirs[dc.dir.label()] = {{"winner", dc.sig.win == mt_eval::Winner::A
                                               ? "A"
                                               : dc.sig.win == mt_eval::Winner::B
                                                     ? "B"
                                                     : "tie"},
                                {"p_value", dc.sig.p_value},
                                {"t_p_value", dc.sig.t_p_value}};
      out["directions"] = dirs;
      return out;
    };
    if (test_hyps.count("P") && test_hyps.count("B"))
      j["zero_shot"] = block("P", "B");
    if (test_hyps.count("P-D") && test_hyps.count("D"))
      j["with_direct"] = block("P-D", "D");
    write_text(paths.reports() / "table3_significance.json", j.dump(2) + "\n");
  }

  // Table 5 analogue: domain adaptation grid.
  {
    json rows = json::array();
    for (int k = 0; k < cfg.domain.n_domains; ++k) {
      std::string dom = "d" + std::to_string(k + 1);
      for (int d = 0; d < 2; ++d) {
        Direction dir = d == 0 ? Direction{"x1", "x2"} : Direction{"x2", "x1"};
        fs::path test_path =
            paths.domain_dir(dom, dir.label()) / "test.tsv";
        if (!fs::exists(test_path)) continue;
        auto pairs = read_corpus(test_path);
        auto bleu_of = [&](const fs::path& ckpt) {
          auto hyps = checkpoint_hypotheses(cfg, w, ckpt, pairs,
                                            cfg.training.beam_width);
          std::vector<std::vector<TokenId>> h, r;
          for (const auto& hy : hyps) {
            h.push_back(hy.output);
            r.push_back(hy.reference);
          }
          return mt_eval::corpus_bleu(h, r);
        };
        TableData::DomainCell cell;
        cell.domain = dom;
        cell.dir = dir.label();
        cell.zero_shot_b = bleu_of(paths.plans() / "B" / "final.ckpt");
        cell.zero_shot_p = bleu_of(paths.plans() / "P" / "final.ckpt");
        std::string ft_b = "dom-" + dom + "-" + dir.label() + "-B";
        std::string ft_p = "dom-" + dom + "-" + dir.label() + "-P";
        cell.finetuned_b = bleu_of(paths.plans() / ft_b / "best.ckpt");
        cell.finetuned_p = bleu_of(paths.plans() / ft_p / "best.ckpt");
        t.table5.push_back(cell);
        rows.push_back(
            {{"domain", dom},
             {"direction", dir.label()},
             {"zero_shot", {{"B", cell.zero_shot_b}, {"P", cell.zero_shot_p}}},
             {"finetuned", {{"B", cell.finetuned_b}, {"P", cell.finetuned_p}}},
             {"delta_zero_shot", cell.zero_shot_p - cell.zero_shot_b},
             {"delta_finetuned", cell.finetuned_p - cell.finetuned_b}});
      }
    }
    json j;
    j["rows"] = rows;
    write_text(paths.reports() / "table5_domain.json", j.dump(2) + "\n");
  }
  return t;
}

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  json values;
};

// ---- C1: gradients vs central finite differences --------------------------

Criterion criterion_gradients() {
  Criterion c{1, "gradient-check"};
  auto t0 = std::chrono::steady_clock::now();
  using namespace minimt::model;

  struct Cfg {
    int d_model, d_ff, heads, enc, dec, vocab;
    bool tied;
  };
  const Cfg cfgs[] = {{8, 16, 2, 1, 1, 24, true},
                      {12, 24, 3, 2, 1, 30, true},
                      {16, 32, 4, 2, 2, 40, false}};
  double worst = 0;
  std::string worst_param;
  size_t total = 0;
  uint64_t seed = 1001;
  json per_config = json::array();
  for (const auto& k : cfgs) {
    ModelConfig mc;
    mc.d_model = k.d_model;
    mc.d_ff = k.d_ff;
    mc.n_heads = k.heads;
    mc.n_enc_layers = k.enc;
    mc.n_dec_layers = k.dec;
    mc.vocab_size = k.vocab;
    mc.max_positions = 8;
    mc.dropout = 0.0f;
    mc.label_smoothing = 0.1f;
    Batch b;
    Rng rng(seed);
    for (int i = 0; i < 2; ++i) {
      TaggedExample ex;
      int el = 2 + static_cast<int>(rng.next_below(4));
      int dl = 2 + static_cast<int>(rng.next_below(4));
      for (int j = 0; j < el; ++j)
        ex.encoder_ids.push_back(static_cast<TokenId>(
            4 + rng.next_below(static_cast<uint64_t>(k.vocab - 4))));
      ex.encoder_ids.push_back(Vocabulary::kEos);
      ex.decoder_input_ids.push_back(Vocabulary::kBos);
      for (int j = 1; j < dl; ++j)
        ex.decoder_input_ids.push_back(static_cast<TokenId>(
            4 + rng.next_below(static_cast<uint64_t>(k.vocab - 4))));
      for (size_t j = 1; j < ex.decoder_input_ids.size(); ++j)
        ex.target_ids.push_back(ex.decoder_input_ids[j]);
      ex.target_ids.push_back(Vocabulary::kEos);
      b.items.push_back(ex);
    }
    auto rep = gradient_check(mc, b, seed * 7 + 3);
    per_config.push_back({{"d_model", k.d_model},
                          {"params", rep.n_params},
                          {"max_rel_err", rep.max_rel_err},
                          {"worst", rep.worst_param}});
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      worst_param = rep.worst_param;
    }
    total += rep.n_params;
    ++seed;
  }
  double secs = seconds_since(t0);
  c.pass = worst <= 1e-4 && secs < 60.0;
  char buf[160];
  snprintf(buf, sizeof(buf), "max_rel_err=%.3g over %zu coords, %.1fs", worst,
           total, secs);
  c.detail = buf;
  c.values = {{"max_rel_err", worst},
              {"worst_param", worst_param},
              {"coords", total},
              {"configs", per_config},
              {"seconds", secs}};
  return c;
}

// ---- C2: BLEU fixtures ------------------------------------------------------

Criterion criterion_bleu_fixtures() {
  Criterion c{2, "bleu-oracle-equivalence"};
  using Corpus = std::vector<std::vector<TokenId>>;
  struct Fixture {
    const char* name;
    Corpus hyps, refs;
    double expected;
  };
  const std::vector<Fixture> fixtures = {
      {"identity", {{1, 2, 3, 4, 5}}, {{1, 2, 3, 4, 5}}, 100.0000},
      {"bp_e_minus_025", {{1, 2, 3, 4}}, {{1, 2, 3, 4, 5}}, 77.8801},
      {"longer_hyp", {{1, 2, 3, 4, 5}}, {{1, 2, 3, 4}}, 66.8740},
      {"short_eff3", {{1, 2, 3}}, {{1, 2, 3}}, 100.0000},
      {"smoothed4", {{1, 2, 3, 9}}, {{1, 2, 3, 4}}, 59.4604},
      {"smoothed234", {{1, 7, 8, 9}}, {{1, 2, 3, 4}}, 15.9736},
      {"clipping", {{1, 1, 1, 1}}, {{1, 1}}, 31.9472},
      {"empty_hyp", {{}}, {{1, 2}}, 0.0000},
      {"single_token", {{1}}, {{1, 2, 3}}, 13.5335},
      {"multi_sentence",
       {{1, 2, 3, 4, 5}, {6, 7, 8}, {9, 9, 1, 2}},
       {{1, 2, 3, 4, 6}, {6, 7, 8}, {9, 1, 2, 5}},
       61.6049},
      {"all_wrong", {{5, 6, 7, 8}}, {{1, 2, 3, 4}}, 7.9868},
      {"half_corpus",
       {{1, 2, 3, 4}, {5, 6, 7, 8}},
       {{1, 2, 3, 4}, {1, 2, 3, 4}},
       50.0000},
  };
  double max_diff = 0;
  std::string worst;
  for (const auto& f : fixtures) {
    double got = mt_eval::corpus_bleu(f.hyps, f.refs);
    double diff = std::abs(got - f.expected);
    if (diff > max_diff) {
      max_diff = diff;
      worst = f.name;
    }
  }
  c.pass = max_diff <= 5e-5;
  char buf[128];
  snprintf(buf, sizeof(buf), "%zu fixtures, max |diff|=%.2g", fixtures.size(),
           max_diff);
  c.detail = buf;
  c.values = {{"fixtures", fixtures.size()},
              {"max_abs_diff", max_diff},
              {"worst", worst}};
  return c;
}

// ---- C3: zero-shot scheme ordering -----------------------------------------

Criterion criterion_scheme_ordering(const TableData& t) {
  Criterion c{3, "zero-shot-scheme-ordering"};
  for (const char* p : {"B", "STT", "ST", "TT"})
    if (!t.dev_best.count(p)) {
      c.detail = "missing plan " + std::string(p);
      return c;
    }
  const auto& te = t.dev_best.at("B");
  const auto& stt = t.dev_best.at("STT");
  const auto& st = t.dev_best.at("ST");
  const auto& tt = t.dev_best.at("TT");

  bool off_ok = stt.xy_off <= 0.5 * te.xy_off;
  bool bleu_ok = stt.xy_bleu > te.xy_bleu;
  bool st_worst = st.xy_bleu <= te.xy_bleu && st.xy_bleu <= stt.xy_bleu &&
                  st.xy_bleu <= tt.xy_bleu;
  double ex_min = std::min({te.ex_bleu, stt.ex_bleu, st.ex_bleu, tt.ex_bleu});
  double ex_max = std::max({te.ex_bleu, stt.ex_bleu, st.ex_bleu, tt.ex_bleu});
  bool ex_close = (ex_max - ex_min) <= 2.0;
  c.pass = off_ok && bleu_ok && st_worst && ex_close;
  char buf[256];
  snprintf(buf, sizeof(buf),
           "off(ST-T)=%.3f vs 0.5*off(T-E)=%.3f | xy BLEU ST-T %.2f > T-E "
           "%.2f | S-T %.2f worst | ex spread %.2f <= 2.0",
           stt.xy_off, 0.5 * te.xy_off, stt.xy_bleu, te.xy_bleu, st.xy_bleu,
           ex_max - ex_min);
  c.detail = buf;
  c.values = {{"off_target_xy",
               {{"T-E", te.xy_off},
                {"ST-T", stt.xy_off},
                {"S-T", st.xy_off},
                {"T-T", tt.xy_off}}},
              {"xy_bleu",
               {{"T-E", te.xy_bleu},
                {"ST-T", stt.xy_bleu},
                {"S-T", st.xy_bleu},
                {"T-T", tt.xy_bleu}}},
              {"ex_bleu",
               {{"T-E", te.ex_bleu},
                {"ST-T", stt.ex_bleu},
                {"S-T", st.ex_bleu},
                {"T-T", tt.ex_bleu}}},
              {"ex_spread", ex_max - ex_min},
              {"checks",
               {{"off_target_halved", off_ok},
                {"stt_beats_te_xy", bleu_ok},
                {"st_worst_xy", st_worst},
                {"ex_within_2", ex_close}}}};
  return c;
}

// ---- C4: resume recovery ----------------------------------------------------

Criterion criterion_resume(const RunConfig& cfg, const ReproOutcome& outcome,
                           const TableData& t) {
  Criterion c{4, "resume-recovery"};
  if (!outcome.plans.count("B") || !outcome.plans.count("P")) {
    c.detail = "missing plan B or P";
    return c;
  }
  double b_best_ex = t.dev_best.at("B").ex_bleu;
  int64_t budget = cfg.training.base_steps / 4;
  double recovered = -1;
  for (const auto& r : outcome.plans.at("P").curve) {
    if (r.devset != "dev_ex" || r.phase_step > budget) continue;
    recovered = std::max(recovered, r.bleu);
  }
  bool regain = recovered >= 0.95 * b_best_ex;
  double p_final_xy = t.dev_final.at("P").xy_bleu;
  double b_final_xy = t.dev_final.at("B").xy_bleu;
  bool xy_gain = p_final_xy > b_final_xy;
  c.pass = regain && xy_gain;
  char buf[224];
  snprintf(buf, sizeof(buf),
           "ex within %lld steps: %.2f vs 95%% of B best %.2f | final xy P "
           "%.2f > B %.2f",
           static_cast<long long>(budget), recovered, 0.95 * b_best_ex,
           p_final_xy, b_final_xy);
  c.detail = buf;
  c.values = {{"budget_steps", budget},
              {"p_ex_within_budget", recovered},
              {"b_best_ex", b_best_ex},
              {"p_final_xy", p_final_xy},
              {"b_final_xy", b_final_xy},
              {"checks", {{"regain", regain}, {"xy_gain", xy_gain}}}};
  return c;
}

// ---- C5: direct-data finetuning ordering ------------------------------------

Criterion criterion_direct_ft(const TableData& t) {
  Criterion c{5, "direct-finetune-ordering"};
  for (const char* p : {"B", "P", "P-D", "D", "DP"})
    if (!t.table2.count(p)) {
      c.detail = "missing plan " + std::string(p);
      return c;
    }
  const auto& b = t.table2.at("B");
  const auto& p = t.table2.at("P");
  const auto& pd = t.table2.at("P-D");
  const auto& d = t.table2.at("D");
  const auto& dp = t.table2.at("DP");

  bool pd_best = pd.direct_bleu >= d.direct_bleu &&
                 pd.direct_bleu >= dp.direct_bleu;
  // "Wide margin" over zero-shot pinned at +10 BLEU.
  const double margin = 10.0;
  double ft_min =
      std::min({pd.direct_bleu, d.direct_bleu, dp.direct_bleu});
  bool beats_zero_shot = ft_min >= b.direct_bleu + margin;
  double others_ex =
      std::max({b.ex_bleu, pd.ex_bleu, d.ex_bleu, dp.ex_bleu});
  bool p_best_ex = p.ex_bleu >= others_ex;
  c.pass = pd_best && beats_zero_shot && p_best_ex;
  char buf[256];
  snprintf(buf, sizeof(buf),
           "xy: P-D %.2f >= D %.2f, DP %.2f | min ft %.2f >= B %.2f + %.0f | "
           "ex: P %.2f >= %.2f",
           pd.direct_bleu, d.direct_bleu, dp.direct_bleu, ft_min, b.direct_bleu,
           margin, p.ex_bleu, others_ex);
  c.detail = buf;
  c.values = {{"xy_bleu",
               {{"B", b.direct_bleu},
                {"P", p.direct_bleu},
                {"P-D", pd.direct_bleu},
                {"D", d.direct_bleu},
                {"DP", dp.direct_bleu}}},
              {"ex_bleu",
               {{"B", b.ex_bleu},
                {"P", p.ex_bleu},
                {"P-D", pd.ex_bleu},
                {"D", d.ex_bleu},
                {"DP", dp.ex_bleu}}},
              {"margin", margin},
              {"checks",
               {{"pd_best_xy", pd_best},
                {"ft_beats_zero_shot", beats_zero_shot},
                {"p_best_ex", p_best_ex}}}};
  return c;
}

// ---- C6: off-target exactness -----------------------------------------------

Criterion criterion_offtarget_exact(const RunConfig& cfg, const World& w) {
  Criterion c{6, "off-target-exactness"};
  OutPaths paths{cfg.out_dir};
  auto pairs = read_corpus(paths.corpus("test_xy"));
  auto detector = mt_eval::majority_detector(w.universe);

  std::vector<mt_eval::Hypothesis> oracle, wrong;
  for (const auto& p : pairs) {
    mt_eval::Hypothesis h;
    h.direction = p.direction();
    h.reference = p.tgt;
    h.output = oracle_translate(p.src, w.universe.by_code(p.src_lang),
                                w.universe.by_code(p.tgt_lang));
    oracle.push_back(h);
    mt_eval::Hypothesis g = h;
    for (const auto& lang : w.universe.languages())
      if (lang.code() != p.tgt_lang) {
        g.output = oracle_translate(p.src, w.universe.by_code(p.src_lang), lang);
        break;
      }
    wrong.push_back(g);
  }
  double r0 = mt_eval::off_target_rate(oracle, detector);
  double r1 = mt_eval::off_target_rate(wrong, detector);
  c.pass = r0 == 0.0 && r1 == 1.0;
  char buf[96];
  snprintf(buf, sizeof(buf), "oracle rate=%g, wrong-language rate=%g", r0, r1);
  c.detail = buf;
  c.values = {{"oracle_rate", r0}, {"wrong_language_rate", r1},
              {"samples", pairs.size()}};
  return c;
}

// ---- C7: significance calibration -------------------------------------------

Criterion criterion_calibration() {
  Criterion c{7, "significance-calibration"};
  auto t0 = std::chrono::steady_clock::now();
  Rng master(0x5eed);
  const int trials = 200;
  int winners = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(master.next_u64());
    std::vector<std::vector<TokenId>> refs, a, b;
    for (int i = 0; i < 80; ++i) {
      std::vector<TokenId> s;
      int len = 5 + static_cast<int>(rng.next_below(8));
      for (int k = 0; k < len; ++k)
        s.push_back(static_cast<TokenId>(rng.next_below(12)));
      refs.push_back(s);
      auto corrupt = [&](std::vector<TokenId> x) {
        for (auto& tok : x)
          if (rng.next_unit() < 0.25)
            tok = static_cast<TokenId>(rng.next_below(12));
        return x;
      };
      a.push_back(corrupt(s));
      b.push_back(corrupt(s));
    }
    auto res = mt_eval::paired_bootstrap(a, b, refs, 1000, master.next_u64());
    if (res.win != mt_eval::Winner::Tie) ++winners;
  }
  double secs = seconds_since(t0);
  c.pass = winners <= 14 && secs < 300.0;  // 7% of 200, runtime < 5 min
  char buf[128];
  snprintf(buf, sizeof(buf), "%d/%d trials declared a winner (%.1f%%), %.1fs",
           winners, trials, 100.0 * winners / trials, secs);
  c.detail = buf;
  c.values = {{"trials", trials}, {"winners", winners}, {"seconds", secs}};
  return c;
}

// ---- C8: filtering exactness --------------------------------------------------

Criterion criterion_filter_exact(const World& w) {
  Criterion c{8, "filtering-exactness"};
  const Universe& u = w.universe;
  auto lid = membership_predicate(u);
  FilterConfig fcfg;
  fcfg.max_words = 20;
  fcfg.max_ratio = 3.0;

  Rng rng(0xf117e4);
  auto mk = [&](const std::string& s, const std::string& t, int sl, int tl) {
    PivotSentence ps;
    for (int i = 0; i < sl; ++i)
      ps.tokens.push_back(
          static_cast<TokenId>(rng.next_below(
              static_cast<uint64_t>(u.v_content()))));
    PivotSentence pt;
    for (int i = 0; i < tl; ++i)
      pt.tokens.push_back(
          static_cast<TokenId>(rng.next_below(
              static_cast<uint64_t>(u.v_content()))));
    return SentencePair{s, t, u.by_code(s).render(ps), u.by_code(t).render(pt)};
  };
  std::vector<SentencePair> corpus;
  for (int i = 0; i < 100; ++i) corpus.push_back(mk("en", "x1", 8, 8));
  for (int i = 0; i < 7; ++i) corpus.push_back(mk("en", "x1", 21, 8));
  for (int i = 0; i < 5; ++i) corpus.push_back(mk("en", "x1", 16, 4));
  for (int i = 0; i < 3; ++i) {
    auto p = mk("en", "x2", 6, 6);
    p.tgt[0] = u.by_code("x1").surface_offset();
    corpus.push_back(p);
  }
  for (int i = 0; i < 2; ++i) {
    auto p = mk("en", "x1", 4, 4);
    p.src.clear();
    corpus.push_back(p);
  }
  FilterTally tally;
  auto kept = filter_corpus(corpus, fcfg, lid, &tally);
  bool exact = tally.kept == 100 && tally.length == 7 && tally.ratio == 5 &&
               tally.lid == 3 && tally.malformed == 2;
  bool conserved = tally.kept + tally.rejected() == corpus.size();
  FilterTally tally2;
  auto kept2 = filter_corpus(kept, fcfg, lid, &tally2);
  bool idempotent = kept2 == kept && tally2.rejected() == 0;
  c.pass = exact && conserved && idempotent;
  char buf[160];
  snprintf(buf, sizeof(buf),
           "tallies kept=%zu len=%zu ratio=%zu lid=%zu malformed=%zu, "
           "idempotent=%d",
           tally.kept, tally.length, tally.ratio, tally.lid, tally.malformed,
           idempotent ? 1 : 0);
  c.detail = buf;
  c.values = {{"kept", tally.kept},
              {"length", tally.length},
              {"ratio", tally.ratio},
              {"lid", tally.lid},
              {"malformed", tally.malformed},
              {"idempotent", idempotent}};
  return c;
}

// ---- C9: domain finetuning --------------------------------------------------

Criterion criterion_domain(const TableData& t) {
  Criterion c{9, "domain-finetune-advantage"};
  int wins = 0;
  json cells = json::array();
  for (const auto& cell : t.table5) {
    bool win = cell.finetuned_p >= cell.finetuned_b;
    wins += win ? 1 : 0;
    cells.push_back({{"domain", cell.domain},
                     {"direction", cell.dir},
                     {"finetuned_b", cell.finetuned_b},
                     {"finetuned_p", cell.finetuned_p},
                     {"win", win}});
  }
  int total = static_cast<int>(t.table5.size());
  c.pass = total >= 6 && wins >= 4;
  char buf[96];
  snprintf(buf, sizeof(buf), "ST-T base >= T-E base in %d of %d cells", wins,
           total);
  c.detail = buf;
  c.values = {{"wins", wins}, {"cells", total}, {"grid", cells}};
  return c;
}

// ---- C10: determinism ----------------------------------------------------------

Criterion criterion_determinism(const RunConfig& cfg) {
  Criterion c{10, "repro-determinism"};
  RunConfig tiny = cfg.tiny_variant();
  OutPaths paths{cfg.out_dir};
  fs::path det = paths.root / "determinism";
  std::error_code ec;
  fs::remove_all(det, ec);

  uint64_t digests[2] = {0, 0};
  for (int i = 0; i < 2; ++i) {
    RunConfig run = tiny;
    run.out_dir = det / (i == 0 ? "a" : "b");
    run_repro(run, /*with_criteria=*/false);
    digests[i] = metrics_digest(run.out_dir);
  }
  c.pass = digests[0] == digests[1];
  c.detail = "digest a=" + to_hex(digests[0]) + " b=" + to_hex(digests[1]);
  c.values = {{"digest_a", to_hex(digests[0])},
              {"digest_b", to_hex(digests[1])},
              {"equal", c.pass}};
  return c;
}

}  // namespace

bool evaluate_criteria(const RunConfig& cfg, const World& w,
                       const ReproOutcome& outcome, const TableData& tables) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<Criterion> cs;
  cs.push_back(criterion_gradients());
  cs.push_back(criterion_bleu_fixtures());
  cs.push_back(criterion_scheme_ordering(tables));
  cs.push_back(criterion_resume(cfg, outcome, tables));
  cs.push_back(criterion_direct_ft(tables));
  cs.push_back(criterion_offtarget_exact(cfg, w));
  cs.push_back(criterion_calibration());
  cs.push_back(criterion_filter_exact(w));
  cs.push_back(criterion_domain(tables));
  cs.push_back(criterion_determinism(cfg));

  bool all = true;
  json report;
  report["criteria"] = json::array();
  json metrics;
  for (const auto& c : cs) {
    all = all && c.pass;
    printf("[%s] %d %s: %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
           c.detail.c_str());
    fflush(stdout);
    report["criteria"].push_back({{"id", c.id},
                                  {"name", c.name},
                                  {"pass", c.pass},
                                  {"detail", c.detail}});
    metrics[std::to_string(c.id) + "_" + c.name] = c.values;
  }
  report["all_pass"] = all;

  OutPaths paths{cfg.out_dir};
  write_text(paths.reports() / "acceptance_report.json", report.dump(2) + "\n");
  write_text(paths.reports() / "metrics.json", metrics.dump(2) + "\n");
  json runtime;
  runtime["criteria_seconds"] = seconds_since(t0);
  write_text(paths.reports() / "runtime.json", runtime.dump(2) + "\n");
  return all;
}

}  // namespace minimt::cli

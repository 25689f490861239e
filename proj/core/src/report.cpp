#include "minimt/eval/report.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace minimt::mt_eval {

using json = nlohmann::ordered_json;

std::optional<int> detect_language(const Universe& u,
                                   std::span<const TokenId> tokens) {
  if (tokens.empty()) return std::nullopt;
  std::vector<int> votes(static_cast<size_t>(u.n_languages()), 0);
  for (TokenId t : tokens)
    if (auto idx = u.language_index_of(t)) ++votes[static_cast<size_t>(*idx)];
  int best = -1, best_votes = 0;
  for (int i = 0; i < u.n_languages(); ++i)
    if (votes[static_cast<size_t>(i)] > best_votes) {
      best_votes = votes[static_cast<size_t>(i)];
      best = i;
    }
  if (best < 0) return std::nullopt;
  return best;
}

LanguageDetector majority_detector(const Universe& u) {
  Universe copy = u;
  return [copy](std::span<const TokenId> tokens) -> std::optional<std::string> {
    auto idx = detect_language(copy, tokens);
    if (!idx) return std::nullopt;
    return copy.at(*idx).code();
  };
}

double off_target_rate(std::span<const Hypothesis> hyps,
                       const LanguageDetector& detector) {
  if (hyps.empty()) return 0.0;
  size_t off = 0;
  for (const auto& h : hyps) {
    auto detected = detector(h.output);
    if (!detected || *detected != h.direction.tgt) ++off;
  }
  return static_cast<double>(off) / static_cast<double>(hyps.size());
}

double EvalReport::group_bleu(const std::string& key) const {
  auto it = groups.find(key);
  return it == groups.end() ? 0.0 : it->second.bleu;
}

double EvalReport::group_off_target(const std::string& key) const {
  auto it = groups.find(key);
  return it == groups.end() ? 0.0 : it->second.off_target;
}

namespace {

std::string group_of(const Universe& u, const Direction& d) {
  const std::string& en = u.pivot().code();
  if (d.tgt == en) return "x2e";
  if (d.src == en) return "e2x";
  return "x2y";
}

}  // namespace

EvalReport build_eval_report(const Universe& u, std::span<const Hypothesis> hyps,
                             const std::string& system_name,
                             const std::string& devset, int64_t step) {
  EvalReport rep;
  rep.system = system_name;
  rep.devset = devset;
  rep.step = step;

  std::map<Direction, std::vector<const Hypothesis*>> by_dir;
  for (const auto& h : hyps) by_dir[h.direction].push_back(&h);

  auto detector = majority_detector(u);
  std::map<std::string, std::vector<const DirectionScore*>> group_members;
  std::map<std::string, std::pair<int64_t, int64_t>> group_off;  // off, total

  for (const auto& [dir, members] : by_dir) {
    DirectionScore ds;
    ds.dir = dir;
    ds.count = static_cast<int>(members.size());
    std::vector<std::vector<TokenId>> h, r;
    std::vector<Hypothesis> flat;
    for (const auto* p : members) {
      h.push_back(p->output);
      r.push_back(p->reference);
      flat.push_back(*p);
    }
    ds.bleu = corpus_bleu(h, r);
    ds.off_target = off_target_rate(flat, detector);
    rep.directions.push_back(ds);
  }
  std::sort(rep.directions.begin(), rep.directions.end(),
            [](const DirectionScore& a, const DirectionScore& b) {
              return a.dir < b.dir;
            });

  auto add_group = [&](const std::string& key, const DirectionScore& ds) {
    group_members[key].push_back(&ds);
    auto& [off, total] = group_off[key];
    off += static_cast<int64_t>(
        std::llround(ds.off_target * static_cast<double>(ds.count)));
    total += ds.count;
  };
  for (const auto& ds : rep.directions) {
    std::string g = group_of(u, ds.dir);
    add_group(g, ds);
    if (g == "x2e" || g == "e2x") add_group("ex", ds);
    add_group("all", ds);
  }
  for (const auto& [key, members] : group_members) {
    GroupScore gs;
    gs.directions = static_cast<int>(members.size());
    for (const auto* ds : members) {
      gs.bleu += ds->bleu;
      gs.samples += ds->count;
    }
    gs.bleu /= static_cast<double>(members.size());
    auto [off, total] = group_off[key];
    gs.off_target =
        total > 0 ? static_cast<double>(off) / static_cast<double>(total) : 0.0;
    rep.groups[key] = gs;
  }
  return rep;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["system"] = r.system;
  j["devset"] = r.devset;
  j["step"] = r.step;
  j["directions"] = json::object();
  for (const auto& ds : r.directions) {
    j["directions"][ds.dir.label()] = {{"bleu", ds.bleu},
                                       {"off_target", ds.off_target},
                                       {"count", ds.count}};
  }
  j["groups"] = json::object();
  for (const auto& [key, gs] : r.groups) {
    j["groups"][key] = {{"bleu", gs.bleu},
                        {"off_target", gs.off_target},
                        {"directions", gs.directions},
                        {"samples", gs.samples}};
  }
  return j.dump(2);
}

std::string report_table(const EvalReport& r) {
  std::string out;
  char buf[160];
  snprintf(buf, sizeof(buf), "system %s  devset %s  step %lld\n",
           r.system.c_str(), r.devset.c_str(),
           static_cast<long long>(r.step));
  out += buf;
  snprintf(buf, sizeof(buf), "%-10s %10s %12s %8s\n", "direction", "BLEU",
           "off-target", "n");
  out += buf;
  for (const auto& ds : r.directions) {
    snprintf(buf, sizeof(buf), "%-10s %10.2f %11.1f%% %8d\n",
             ds.dir.label().c_str(), ds.bleu, 100.0 * ds.off_target, ds.count);
    out += buf;
  }
  for (const char* key : {"x2e", "e2x", "ex", "x2y", "all"}) {
    auto it = r.groups.find(key);
    if (it == r.groups.end()) continue;
    snprintf(buf, sizeof(buf), "%-10s %10.2f %11.1f%% %8d\n", key,
             it->second.bleu, 100.0 * it->second.off_target,
             it->second.samples);
    out += buf;
  }
  return out;
}

ComparisonReport compare_systems(const Universe& u,
                                 std::span<const Hypothesis> hyps_a,
                                 std::span<const Hypothesis> hyps_b,
                                 const std::string& name_a,
                                 const std::string& name_b, int resamples,
                                 uint64_t seed) {
  if (hyps_a.size() != hyps_b.size())
    throw ValidationError("compare_systems: systems differ in sample count");
  ComparisonReport rep;
  rep.system_a = name_a;
  rep.system_b = name_b;

  std::map<Direction, std::vector<size_t>> by_dir;
  for (size_t i = 0; i < hyps_a.size(); ++i) {
    if (!(hyps_a[i].direction == hyps_b[i].direction) ||
        hyps_a[i].reference != hyps_b[i].reference)
      throw ValidationError(
          "compare_systems: systems were not evaluated on identical inputs");
    by_dir[hyps_a[i].direction].push_back(i);
  }

  for (const char* key : {"x2e", "e2x", "ex", "x2y", "all"}) {
    rep.wins_a[key] = 0;
    rep.wins_b[key] = 0;
    rep.ties[key] = 0;
  }
  for (const auto& [dir, idx] : by_dir) {
    std::vector<std::vector<TokenId>> a, b, refs;
    for (size_t i : idx) {
      a.push_back(hyps_a[i].output);
      b.push_back(hyps_b[i].output);
      refs.push_back(hyps_a[i].reference);
    }
    DirectionComparison dc;
    dc.dir = dir;
    dc.sig = paired_bootstrap(a, b, refs, resamples,
                              counter_hash(seed, fnv1a64(dir.label())));
    rep.directions.push_back(dc);

    std::string g = group_of(u, dir);
    auto tally = [&](const std::string& key) {
      if (dc.sig.win == Winner::A)
        ++rep.wins_a[key];
      else if (dc.sig.win == Winner::B)
        ++rep.wins_b[key];
      else
        ++rep.ties[key];
    };
    tally(g);
    if (g == "x2e" || g == "e2x") tally("ex");
    tally("all");
  }
  return rep;
}

std::string comparison_to_json(const ComparisonReport& r) {
  json j;
  j["system_a"] = r.system_a;
  j["system_b"] = r.system_b;
  j["directions"] = json::object();
  for (const auto& dc : r.directions) {
    const char* win = dc.sig.win == Winner::A   ? "A"
                      : dc.sig.win == Winner::B ? "B"
                                                : "tie";
    j["directions"][dc.dir.label()] = {{"winner", win},
                                       {"p_value", dc.sig.p_value},
                                       {"t_p_value", dc.sig.t_p_value},
                                       {"bleu_a", dc.sig.bleu_a},
                                       {"bleu_b", dc.sig.bleu_b},
                                       {"resamples", dc.sig.resamples}};
  }
  j["wins"] = json::object();
  for (const auto& [key, n] : r.wins_a)
    j["wins"][key] = {{"a", n},
                      {"b", r.wins_b.at(key)},
                      {"tie", r.ties.at(key)}};
  return j.dump(2);
}

std::string comparison_table(const ComparisonReport& r) {
  std::string out;
  char buf[200];
  snprintf(buf, sizeof(buf), "A = %s vs B = %s (win at p < 0.05)\n",
           r.system_a.c_str(), r.system_b.c_str());
  out += buf;
  snprintf(buf, sizeof(buf), "%-10s %10s %10s %8s %10s %12s\n", "direction",
           "BLEU(A)", "BLEU(B)", "winner", "p", "t-test p");
  out += buf;
  for (const auto& dc : r.directions) {
    const char* win = dc.sig.win == Winner::A   ? "A"
                      : dc.sig.win == Winner::B ? "B"
                                                : "tie";
    snprintf(buf, sizeof(buf), "%-10s %10.2f %10.2f %8s %10.4f %12.4f\n",
             dc.dir.label().c_str(), dc.sig.bleu_a, dc.sig.bleu_b, win,
             dc.sig.p_value, dc.sig.t_p_value);
    out += buf;
  }
  for (const char* key : {"x2e", "e2x", "x2y", "all"}) {
    auto it = r.wins_a.find(key);
    if (it == r.wins_a.end()) continue;
    snprintf(buf, sizeof(buf), "group %-5s wins A=%d B=%d ties=%d\n", key,
             it->second, r.wins_b.at(key), r.ties.at(key));
    out += buf;
  }
  return out;
}

}  // namespace minimt::mt_eval

#include "minimt/train/plan.hpp"

#include <cstdio>

#include "minimt/rng.hpp"

namespace minimt::train {

std::string curve_to_csv(const TrainingCurve& curve) {
  std::string out = "step,devset,metric,value\n";
  char buf[128];
  auto row = [&](int64_t step, const std::string& devset, const char* metric,
                 double value) {
    snprintf(buf, sizeof(buf), "%lld,%s,%s,%.6f\n",
             static_cast<long long>(step), devset.c_str(), metric, value);
    out += buf;
  };
  for (const auto& r : curve) {
    row(r.step, r.devset, "bleu", r.bleu);
    row(r.step, r.devset, "off_target", r.off_target);
    row(r.step, r.devset, "loss", r.loss);
  }
  return out;
}

std::vector<ExperimentPlan> build_plan_matrix(const PlanMatrixConfig& cfg) {
  std::vector<ExperimentPlan> plans;

  auto base = [&](const std::string& name, TokenScheme scheme) {
    ExperimentPlan p;
    p.name = name;
    p.scheme = scheme;
    p.train_corpus = cfg.train_ex;
    p.dev_sets = cfg.dev_sets;
    p.total_steps = cfg.base_steps;
    p.eval_every = cfg.eval_every;
    p.batch_size = cfg.batch_size;
    p.hyper = cfg.pretrain;
    p.selection_metric = cfg.selection_metric;
    p.mid_fraction = cfg.mid_fraction;
    p.seed = counter_hash(cfg.seed, fnv1a64(name));
    return p;
  };

  // From-scratch scheme comparison on English-centric data.
  plans.push_back(base("B", TokenScheme::TE));
  plans.push_back(base("STT", TokenScheme::STT));
  plans.push_back(base("ST", TokenScheme::ST));
  plans.push_back(base("TT", TokenScheme::TT));

  // P: continue the baseline from its mid checkpoint with the new tokens,
  // still English-centric data only.
  {
    ExperimentPlan p = base("P", TokenScheme::STT);
    p.init = InitSpec::resume("B", "mid");
    p.total_steps = cfg.resume_steps;
    p.hyper = cfg.finetune;
    plans.push_back(p);
  }
  // Direct-data finetuning family, mixed corpus.
  {
    ExperimentPlan p = base("D", TokenScheme::TE);
    p.init = InitSpec::resume("B", "final");
    p.train_corpus = cfg.train_mixed;
    p.total_steps = cfg.direct_steps;
    p.hyper = cfg.finetune;
    plans.push_back(p);
  }
  {
    ExperimentPlan p = base("P-D", TokenScheme::STT);
    p.init = InitSpec::resume("P", "mid");
    p.train_corpus = cfg.train_mixed;
    p.total_steps = cfg.direct_steps;
    p.hyper = cfg.finetune;
    plans.push_back(p);
  }
  {
    ExperimentPlan p = base("DP", TokenScheme::STT);
    p.init = InitSpec::resume("B", "final");
    p.train_corpus = cfg.train_mixed;
    p.total_steps = cfg.direct_steps;
    p.hyper = cfg.finetune;
    plans.push_back(p);
  }

  // Domain adaptation: one finetune per (domain, direction, base checkpoint).
  for (const auto& d : cfg.domains) {
    for (const char* from : {"B", "P"}) {
      ExperimentPlan p;
      p.name = "dom-" + d.name + "-" + d.dir.label() + "-" + from;
      p.scheme = std::string(from) == "B" ? TokenScheme::TE : TokenScheme::STT;
      p.init = InitSpec::resume(from, "final");
      p.train_corpus = d.train;
      p.dev_sets = {d.dev};
      p.total_steps = cfg.domain_steps;
      p.eval_every = cfg.eval_every;
      p.batch_size = cfg.batch_size;
      p.hyper = cfg.domain;
      p.selection_metric = "dev_bleu_all";
      p.mid_fraction = cfg.mid_fraction;
      p.seed = counter_hash(cfg.seed, fnv1a64(p.name));
      plans.push_back(p);
    }
  }
  return plans;
}

const ExperimentPlan& plan_by_name(const std::vector<ExperimentPlan>& plans,
                                   const std::string& name) {
  for (const auto& p : plans)
    if (p.name == name) return p;
  std::string known;
  for (const auto& p : plans) known += (known.empty() ? "" : ", ") + p.name;
  throw ValidationError("unknown plan '" + name + "' (available: " + known + ")");
}

}  // namespace minimt::train

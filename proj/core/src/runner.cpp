#include "minimt/train/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "minimt/eval/decode.hpp"
#include "minimt/eval/report.hpp"
#include "minimt/model/loss.hpp"
#include "minimt/model/optimizer.hpp"

namespace minimt::train {

using model::Checkpoint;
using model::ModelConfig;
using model::Parameters;
using model::Transformer;
using json = nlohmann::ordered_json;

namespace {

struct DevSet {
  std::string label;
  std::vector<SentencePair> pairs;
};

double metric_from_reports(const std::string& metric,
                           const mt_eval::EvalReport& combined) {
  if (metric == "dev_bleu_all") return combined.group_bleu("all");
  if (metric == "dev_bleu_ex") return combined.group_bleu("ex");
  if (metric == "dev_bleu_xy") return combined.group_bleu("x2y");
  throw ValidationError("unknown selection metric '" + metric + "'");
}

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Runner::Runner(const Universe& universe, const Vocabulary& vocab,
               ModelConfig model_cfg, std::filesystem::path out_dir,
               int n_threads, LogFn log)
    : universe_(universe),
      vocab_(vocab),
      model_cfg_(model_cfg),
      out_dir_(std::move(out_dir)),
      n_threads_(n_threads),
      log_(std::move(log)) {
  world_digest_ = to_hex(counter_hash(vocab_.digest(), fnv1a64(universe_.to_json())));
  if (n_threads_ <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n_threads_ = static_cast<int>(hw == 0 ? 1 : std::min(hw, 8u));
  }
  if (model_cfg_.vocab_size == 0) model_cfg_.vocab_size = vocab_.size();
  model_cfg_.validate();
  if (model_cfg_.vocab_size != vocab_.size())
    throw ValidationError("model.vocab_size does not match the vocabulary");
}

std::filesystem::path Runner::plan_dir(const std::string& name) const {
  return out_dir_ / "plans" / name;
}

std::filesystem::path Runner::checkpoint_path(const std::string& plan,
                                              const std::string& which) const {
  return plan_dir(plan) / (which + ".ckpt");
}

Checkpoint Runner::resolve_init(const ExperimentPlan& plan) const {
  if (plan.init.kind == InitSpec::Kind::Fresh) {
    Checkpoint ck;
    ck.config = model_cfg_;
    ck.params =
        Parameters<float>::random_init(model_cfg_, counter_hash(plan.seed, 0x1f1));
    ck.m = Parameters<float>::shaped(model_cfg_);
    ck.v = Parameters<float>::shaped(model_cfg_);
    ck.seeds.data_seed = counter_hash(plan.seed, 0xda7a);
    ck.seeds.dropout_seed = counter_hash(plan.seed, 0xd409);
    ck.provenance.vocab_digest = world_digest_;
    return ck;
  }
  auto path = checkpoint_path(plan.init.parent, plan.init.which);
  if (!std::filesystem::exists(path))
    throw RuntimeFailure("missing prerequisite checkpoint: " + path.string() +
                         " (run plan '" + plan.init.parent + "' first)");
  Checkpoint ck = model::load_checkpoint(path);
  if (auto field = ck.config.field_diff(model_cfg_))
    throw ValidationError("checkpoint " + path.string() +
                          " was built with a different model config (field " +
                          *field + ")");
  if (ck.provenance.vocab_digest != world_digest_)
    throw ValidationError(
        "vocabulary mismatch between checkpoint and plan: schemes share one "
        "vocabulary, so this checkpoint belongs to a different universe");
  ck.provenance.parent = plan.init.parent + "/" + plan.init.which;
  if (plan.init.reset_nonparameter)
    ck = model::reset_nonparameter_state(std::move(ck), plan.seed);
  return ck;
}

RunPlanResult Runner::run_plan(const ExperimentPlan& plan) {
  if (plan.total_steps < 0) throw ValidationError("total_steps must be >= 0");
  if (plan.batch_size < 1) throw ValidationError("batch_size must be >= 1");

  auto train_pairs = read_corpus(plan.train_corpus);
  if (plan.total_steps > 0 && train_pairs.empty())
    throw ValidationError("training corpus " + plan.train_corpus.string() +
                          " is empty");
  std::vector<DevSet> dev_sets;
  for (const auto& ref : plan.dev_sets)
    dev_sets.push_back({ref.label, read_corpus(ref.path)});

  Checkpoint start = resolve_init(plan);
  start.provenance.scheme = scheme_name(plan.scheme);
  start.provenance.data_digest = to_hex(file_digest(plan.train_corpus));
  start.opt.peak_lr = plan.hyper.peak_lr;
  start.opt.warmup = plan.hyper.warmup;

  Transformer<float> model(model_cfg_, start.params);
  model::RAdam<float> opt(start.opt, model_cfg_);
  opt.set_state(start.m, start.v, start.step);

  const int64_t start_step = start.step;
  const int64_t mid_phase_step =
      std::llround(plan.mid_fraction * static_cast<double>(plan.total_steps));
  const auto dir = plan_dir(plan.name);
  std::filesystem::create_directories(dir);

  auto snapshot = [&](int64_t step) {
    Checkpoint ck;
    ck.config = model_cfg_;
    ck.opt = opt.config();
    ck.params = model.params();
    ck.m = opt.first_moment();
    ck.v = opt.second_moment();
    ck.step = step;
    ck.seeds = start.seeds;
    ck.provenance = start.provenance;
    return ck;
  };

  auto emit = [&](json j) {
    if (!log_) return;
    j["ts"] = now_ms();
    log_(j.dump());
  };

  RunPlanResult result;
  result.plan_dir = dir;
  result.mid_path = dir / "mid.ckpt";
  result.best_path = dir / "best.ckpt";
  result.final_path = dir / "final.ckpt";

  bool have_best = false;
  Checkpoint best;

  auto evaluate = [&](int64_t phase_step, int64_t abs_step) {
    std::vector<mt_eval::Hypothesis> all_hyps;
    for (const auto& ds : dev_sets) {
      mt_eval::DecodeOptions opts;
      opts.beam_width = 1;  // greedy during training, beam in final reports
      auto hyps = mt_eval::generate(model, vocab_, ds.pairs, plan.scheme, opts);

      double dev_loss = 0;
      int64_t dev_tokens = 0;
      for (size_t ofs = 0; ofs < ds.pairs.size(); ofs += 64) {
        model::Batch b;
        for (size_t i = ofs; i < std::min(ds.pairs.size(), ofs + 64); ++i)
          b.items.push_back(apply_scheme(ds.pairs[i], plan.scheme, vocab_));
        auto logits = model.forward(b);
        for (size_t i = 0; i < b.items.size(); ++i) {
          auto lo = model::label_smoothed_loss<float>(
              logits[i], b.items[i].target_ids, model_cfg_.label_smoothing,
              false);
          dev_loss += lo.value * static_cast<double>(lo.tokens);
          dev_tokens += lo.tokens;
        }
      }

      auto rep = mt_eval::build_eval_report(universe_, hyps, plan.name,
                                            ds.label, abs_step);
      CurveRow row;
      row.step = abs_step;
      row.phase_step = phase_step;
      row.devset = ds.label;
      row.bleu = rep.group_bleu("all");
      row.off_target = rep.group_off_target("all");
      row.loss = dev_tokens > 0 ? dev_loss / static_cast<double>(dev_tokens) : 0;
      result.curve.push_back(row);
      all_hyps.insert(all_hyps.end(), hyps.begin(), hyps.end());
      emit({{"event", "eval"},
            {"plan", plan.name},
            {"step", abs_step},
            {"devset", ds.label},
            {"bleu", row.bleu},
            {"off_target", row.off_target},
            {"loss", row.loss}});
    }
    if (all_hyps.empty()) return;
    auto combined = mt_eval::build_eval_report(universe_, all_hyps, plan.name,
                                               "combined", abs_step);
    double metric = metric_from_reports(plan.selection_metric, combined);
    if (!have_best || metric > result.best_metric) {
      have_best = true;
      best = snapshot(start_step + phase_step);
      result.best_metric = metric;
      result.best_step = best.cumulative_step();
      result.best_phase_step = phase_step;
    }
  };

  if (plan.total_steps == 0) {
    // Degenerate plan: hand back the initial state, no evaluations.
    best = snapshot(start_step);
    model::save_checkpoint(best, result.final_path);
    model::save_checkpoint(best, result.best_path);
    result.best = best;
    return result;
  }

  if (mid_phase_step == 0) model::save_checkpoint(snapshot(start_step),
                                                  result.mid_path);

  const size_t n_train = train_pairs.size();
  double loss_accum = 0;
  int64_t token_accum = 0;
  const int threads =
      std::max(1, std::min<int>(n_threads_, plan.batch_size));

  for (int64_t phase_step = 1; phase_step <= plan.total_steps; ++phase_step) {
    const int64_t abs_step = start_step + phase_step;

    std::vector<TaggedExample> items(static_cast<size_t>(plan.batch_size));
    for (int j = 0; j < plan.batch_size; ++j) {
      size_t idx = static_cast<size_t>(
          counter_hash(start.seeds.data_seed, static_cast<uint64_t>(abs_step),
                       static_cast<uint64_t>(j)) %
          n_train);
      items[static_cast<size_t>(j)] =
          apply_scheme(train_pairs[idx], plan.scheme, vocab_);
    }

    Transformer<float>::Dropout drop{model_cfg_.dropout,
                                     start.seeds.dropout_seed,
                                     static_cast<uint64_t>(abs_step)};
    std::vector<Parameters<float>> grads;
    std::vector<Transformer<float>::LossStats> stats(
        static_cast<size_t>(threads));
    grads.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t)
      grads.push_back(Parameters<float>::shaped(model_cfg_));

    const int per = (plan.batch_size + threads - 1) / threads;
    auto work = [&](int t) {
      int b0 = t * per;
      int b1 = std::min(plan.batch_size, b0 + per);
      if (b0 >= b1) return;
      model::Batch sub;
      sub.items.assign(items.begin() + b0, items.begin() + b1);
      sub.item_base = b0;
      stats[static_cast<size_t>(t)] =
          model.backward(sub, drop, model_cfg_.label_smoothing, 1.0f,
                         grads[static_cast<size_t>(t)]);
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 1; t < threads; ++t) pool.emplace_back(work, t);
      work(0);
      for (auto& th : pool) th.join();
    }
    int64_t tokens = 0;
    double loss_sum = 0;
    for (int t = 0; t < threads; ++t) {
      tokens += stats[static_cast<size_t>(t)].tokens;
      loss_sum += stats[static_cast<size_t>(t)].loss_sum;
      if (t > 0) grads[0].add_scaled(grads[static_cast<size_t>(t)], 1.0f);
    }
    grads[0].scale(1.0f / static_cast<float>(tokens));
    opt.apply(model.params(), grads[0]);

    loss_accum += loss_sum;
    token_accum += tokens;
    if (phase_step % 50 == 0 || phase_step == plan.total_steps) {
      emit({{"event", "step"},
            {"plan", plan.name},
            {"step", abs_step},
            {"loss", loss_accum / static_cast<double>(token_accum)},
            {"lr", opt.current_lr()}});
      loss_accum = 0;
      token_accum = 0;
    }

    if (phase_step == mid_phase_step)
      model::save_checkpoint(snapshot(abs_step), result.mid_path);
    if (plan.eval_every > 0 && (phase_step % plan.eval_every == 0 ||
                                phase_step == plan.total_steps))
      evaluate(phase_step, start.provenance.cumulative_base + abs_step);
  }

  Checkpoint final_ck = snapshot(start_step + plan.total_steps);
  model::save_checkpoint(final_ck, result.final_path);
  if (!have_best) best = final_ck;
  model::save_checkpoint(best, result.best_path);
  {
    std::ofstream csv(dir / "curve.csv", std::ios::binary);
    csv << curve_to_csv(result.curve);
  }
  result.best = std::move(best);
  return result;
}

}  // namespace minimt::train

#include <cstdio>
#include <optional>

#include <CLI11.hpp>

#include "minimt/cli/pipeline.hpp"
#include "minimt/eval/report.hpp"

using namespace minimt;

namespace {

int dispatch(int argc, char** argv) {
  CLI::App app{
      "minimt: a desk-scale multilingual translation lab on synthetic cipher "
      "languages, for comparing language-token schemes"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_override;
  bool verbose = false;
  app.add_option("-c,--config", config_path,
                 "JSON run configuration (defaults apply when omitted)");
  app.add_option("--out", out_override, "output directory override")
      ->envname("MINIMT_OUT");
  app.add_flag("-v,--verbose", verbose, "chatty logging");

  auto load_cfg = [&]() {
    std::optional<std::filesystem::path> p;
    if (!config_path.empty()) p = config_path;
    std::optional<std::string> o;
    if (!out_override.empty()) o = out_override;
    return cli::RunConfig::load(p, o);
  };

  auto* gen = app.add_subcommand(
      "gen", "generate universe, vocabulary and corpora");

  auto* filter = app.add_subcommand("filter", "filter a corpus file");
  std::string filter_in, filter_out, filter_tally;
  filter->add_option("--in", filter_in, "input TSV")->required();
  filter->add_option("--out", filter_out, "output TSV")->required();
  filter->add_option("--tally", filter_tally, "write rejection tally JSON");

  auto* train = app.add_subcommand("train", "train one experiment plan");
  std::string plan_name;
  train->add_option("plan", plan_name, "plan name, e.g. B, STT, P, D, P-D, DP")
      ->required();

  auto* eval = app.add_subcommand("eval", "evaluate a system on a dev set");
  std::string eval_system, eval_devset;
  int eval_beam = 0;
  eval->add_option("system", eval_system,
                   "plan name, checkpoint path, or 'oracle'")
      ->required();
  eval->add_option("devset", eval_devset,
                   "dev_ex | dev_xy | test_ex | test_xy | dom-<d>-<src>-<tgt>-"
                   "<split> | path")
      ->required();
  eval->add_option("--beam", eval_beam, "beam width (default from config)");

  auto* compare =
      app.add_subcommand("compare", "paired bootstrap comparison of two systems");
  std::string cmp_a, cmp_b, cmp_devset;
  compare->add_option("system_a", cmp_a)->required();
  compare->add_option("system_b", cmp_b)->required();
  compare->add_option("devset", cmp_devset)->required();

  auto* repro = app.add_subcommand(
      "repro", "full pipeline: gen, train matrix, reports, acceptance criteria");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    auto cfg = load_cfg();
    cli::run_gen(cfg);
    printf("generated universe + corpora under %s\n", cfg.out_dir.c_str());
    return 0;
  }
  if (filter->parsed()) {
    auto cfg = load_cfg();
    std::optional<std::filesystem::path> tally;
    if (!filter_tally.empty()) tally = filter_tally;
    auto t = cli::run_filter(cfg, filter_in, filter_out, tally);
    printf("%s\n", t.to_json().c_str());
    return 0;
  }
  if (train->parsed()) {
    auto cfg = load_cfg();
    auto res = cli::run_train(cfg, plan_name);
    printf("plan %s: best step %lld (metric %.3f), checkpoints in %s\n",
           plan_name.c_str(), static_cast<long long>(res.best_step),
           res.best_metric, res.plan_dir.string().c_str());
    return 0;
  }
  if (eval->parsed()) {
    auto cfg = load_cfg();
    auto rep = cli::run_eval(cfg, eval_system, eval_devset, eval_beam);
    printf("%s", mt_eval::report_table(rep).c_str());
    return 0;
  }
  if (compare->parsed()) {
    auto cfg = load_cfg();
    auto rep = cli::run_compare(cfg, cmp_a, cmp_b, cmp_devset);
    printf("%s", mt_eval::comparison_table(rep).c_str());
    return 0;
  }
  if (repro->parsed()) {
    auto cfg = load_cfg();
    auto outcome = cli::run_repro(cfg);
    printf("acceptance report: %s\n", outcome.report_path.string().c_str());
    return outcome.all_pass ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ValidationError& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

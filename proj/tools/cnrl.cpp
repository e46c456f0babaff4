// Command-line front end for training, evaluating and comparing concept networks.

#include "cnrl/env/benchmark.hpp"
#include "cnrl/harness.hpp"
#include "cnrl/topology_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::vector<std::string> budgets;  // id=transitions
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-s,--seed", o.seed, "master seed");
  cmd->add_option("-o,--output-dir", o.output_dir, "output directory");
  cmd->add_option("-b,--budget", o.budgets, "per-concept budget override, id=transitions");
}

cnrl::ExperimentConfig load(const Overrides& o) {
  cnrl::ExperimentConfig cfg = cnrl::load_experiment_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  for (const auto& b : o.budgets) {
    const auto eq = b.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("budget override needs id=transitions: " + b);
    const std::string id = b.substr(0, eq);
    auto it = cfg.concepts.find(id);
    if (it == cfg.concepts.end()) throw std::invalid_argument("budget override for unconfigured concept " + id);
    it->second.budget = std::stol(b.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void print_record(const cnrl::ConceptRecord& r) {
  std::printf("%s (%s): train_transitions=%ld eval_transitions=%ld selector_decisions=%ld success=%.3f%s%s\n",
              r.id.c_str(), r.learner.c_str(), r.env_transitions, r.eval_transitions, r.selector_decisions,
              r.final_success_rate, r.checkpoint.empty() ? "" : " checkpoint=", r.checkpoint.c_str());
}

void print_run(const cnrl::RunRecord& r) {
  for (const auto& c : r.concepts) print_record(c);
  std::printf("train_transitions=%ld eval_transitions=%ld env_transitions=%ld selector_decisions=%ld\n",
              r.train_transitions, r.eval_transitions, r.env_transitions, r.selector_decisions);
  if (r.final_eval) {
    std::printf("final eval: %d/%d successes, mean return %.6g\n", r.final_eval->successes, r.final_eval->episodes,
                r.final_eval->mean_return);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept network training and evaluation"};
  app.require_subcommand(1);

  Overrides concept_opts, selector_opts, all_opts, eval_opts;
  std::string concept_id, selector_id;

  auto* train_concept = app.add_subcommand("train-concept", "train one concept with its descendants frozen");
  add_common(train_concept, concept_opts);
  train_concept->add_option("concept", concept_id, "concept id")->required();

  auto* train_selector = app.add_subcommand("train-selector", "train one selector with its descendants frozen");
  add_common(train_selector, selector_opts);
  train_selector->add_option("selector", selector_id, "selector id")->required();

  auto* train_all = app.add_subcommand("train-all", "train every concept leaves first, then evaluate");
  add_common(train_all, all_opts);

  auto* eval = app.add_subcommand("eval", "greedy evaluation from checkpoints");
  add_common(eval, eval_opts);
  int eval_episodes = 500;
  std::uint64_t eval_seed = 1'000'000;
  std::string trace_out;
  eval->add_option("-n,--episodes", eval_episodes, "episodes")->check(CLI::PositiveNumber);
  eval->add_option("--eval-seed", eval_seed, "seed of the first evaluation episode");
  eval->add_option("--trace", trace_out, "write the first episode as a trace CSV");

  auto* compare = app.add_subcommand("compare", "flat vs nested vs monolithic selector comparison");
  cnrl::CompareConfig cmp;
  compare->add_option("-s,--seed", cmp.seed, "master seed");
  compare->add_option("-o,--output-dir", cmp.output_dir, "output directory");
  compare->add_option("--hierarchy-budget", cmp.hierarchy_budget, "root selector transitions");
  compare->add_option("--grasp-budget", cmp.grasp_budget, "nested grasp selector transitions");
  compare->add_option("--monolith-budget", cmp.monolith_budget, "monolithic learner transitions");
  compare->add_option("--monolith-speed", cmp.monolith_speed, "primitive translation speed (m/s)");
  compare->add_option("--updates-per-decision", cmp.q.updates_per_decision, "hierarchy gradient steps per decision");
  compare->add_option("--monolith-updates-per-decision", cmp.monolith_updates_per_decision,
                      "monolith gradient steps per decision");

  auto* replay = app.add_subcommand("replay-trace", "re-simulate a trace CSV and report the largest feature gap");
  std::string trace_in, task_name = "full", replay_config;
  std::uint64_t replay_seed = 0;
  double tolerance = 1e-9;
  replay->add_option("trace", trace_in, "trace CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--seed", replay_seed, "reset seed the trace was recorded with")->required();
  replay->add_option("--task", task_name, "task the trace was recorded in");
  replay->add_option("--tolerance", tolerance, "largest acceptable feature difference");
  replay->add_option("-c,--config", replay_config, "experiment config supplying the environment parameters")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train_concept || *train_selector) {
      const bool selector = static_cast<bool>(*train_selector);
      const auto cfg = load(selector ? selector_opts : concept_opts);
      const std::string& id = selector ? selector_id : concept_id;
      const cnrl::ConceptNetwork net = cnrl::load_config_network(cfg);
      if (!net.find(cnrl::ConceptId(id))) throw std::invalid_argument("unknown concept " + id);
      const bool is_selector = net.node(cnrl::ConceptId(id)).kind == cnrl::ConceptKind::Selector;
      if (selector != is_selector) {
        throw std::invalid_argument(id + (is_selector ? " is a selector; use train-selector"
                                                      : " is not a selector; use train-concept"));
      }
      print_record(cnrl::train_concept(cfg, id));
    } else if (*train_all) {
      print_run(cnrl::train_all(load(all_opts)).record);
    } else if (*eval) {
      const auto cfg = load(eval_opts);
      const cnrl::TrainedSystem system = cnrl::load_system(cfg);
      const auto stats = cnrl::evaluate_system(system, cfg.env, cfg.task, eval_episodes, eval_seed);
      std::printf("episodes=%d successes=%d success_rate=%.4f mean_return=%.6g transitions=%ld decisions=%ld\n",
                  stats.episodes, stats.successes, stats.success_rate, stats.mean_return, stats.transitions,
                  stats.selector_decisions);
      if (!trace_out.empty()) {
        cnrl::GraspStackEnv env(cfg.env, cfg.task);
        env.reset(eval_seed);
        cnrl::RunOptions opts;
        opts.mode = cnrl::RunMode::Eval;
        opts.seed = eval_seed;
        opts.step_cap = env.episode_cap();
        const auto trace = cnrl::run_episode(system.net, system.bindings, env, opts);
        cnrl::write_text_file(trace_out, cnrl::trace_csv(trace, *cnrl::grasp_stack_schema()));
      }
    } else if (*compare) {
      const auto report = cnrl::compare_hierarchies(cmp);
      std::fputs(cnrl::comparison_summary(report).c_str(), stdout);
    } else if (*replay) {
      const cnrl::GraspStackConfig env_cfg =
          replay_config.empty() ? cnrl::GraspStackConfig{} : cnrl::load_experiment_config(replay_config).env;
      const double gap = cnrl::replay_trace_csv(cnrl::read_text_file(trace_in), env_cfg,
                                                cnrl::task_from_string(task_name), replay_seed);
      std::printf("max_feature_difference=%.3g\n", gap);
      if (gap > tolerance) return 1;
    }
  } catch (const cnrl::BudgetExhausted& e) {
    std::fprintf(stderr, "budget exhausted: %s\n", e.what());
    print_run(e.partial());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

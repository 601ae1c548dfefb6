#include "tppo/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "tppo/checkpoint.hpp"
#include "tppo/config.hpp"
#include "tppo/harness.hpp"
#include "tppo/kl_oracle.hpp"

namespace fs = std::filesystem;

namespace tppo {
namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  std::vector<std::string> overrides;
};

PipelineConfig resolve_config(const GlobalOptions& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) cfg.set_seed(*g.seed);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::map<std::string, std::string> echo_of(const PipelineConfig& cfg, const std::string& command) {
  auto kv = cfg.to_kv();
  kv["command"] = command;
  return kv;
}

fs::path out_dir(const GlobalOptions& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

PreparedData load_or_generate(const PipelineConfig& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return prepare_data(cfg);
  const fs::path dir(data_dir);
  return {load_dataset(dir / "train.jsonl"), load_dataset(dir / "eval.jsonl"),
          make_vocabulary(cfg)};
}

void write_manifest(const fs::path& path, const std::map<std::string, std::string>& echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : echo) out << k << " = " << v << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Token-level PPO for query generation: data, reward model, policy training, "
               "evaluation and ablations",
               "tppo"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Run seed (overrides the config file)");
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic annotated corpus");

  auto* annotate = app.add_subcommand("annotate", "Re-annotate a JSONL dataset");
  std::string ann_in, ann_out;
  annotate->add_option("--input", ann_in, "Input JSONL")->required()->check(CLI::ExistingFile);
  annotate->add_option("--output", ann_out, "Output JSONL")->required();

  auto* train_rm = app.add_subcommand("train-rm", "Train the token reward model");
  std::string rm_data;
  train_rm->add_option("--data", rm_data, "Directory with train.jsonl and eval.jsonl");

  auto* train_ppo = app.add_subcommand("train-ppo", "Pretrain and fine-tune the policy");
  std::string ppo_data, ppo_rm, ppo_init, ppo_mode;
  train_ppo->add_option("--data", ppo_data, "Directory with train.jsonl and eval.jsonl");
  train_ppo->add_option("--rm", ppo_rm, "Reward model checkpoint")->check(CLI::ExistingFile);
  train_ppo->add_option("--init", ppo_init, "Starting policy checkpoint")->check(CLI::ExistingFile);
  train_ppo->add_option("--mode", ppo_mode, "Reward mode")->check(CLI::IsMember({"token", "sentence"}));

  auto* eval = app.add_subcommand("eval", "Score a policy with the synthetic judge");
  std::string ev_policy, ev_baseline, ev_data;
  eval->add_option("--policy", ev_policy, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--baseline", ev_baseline, "Baseline policy for win/tie/lose")
      ->check(CLI::ExistingFile);
  eval->add_option("--data", ev_data, "Directory with eval.jsonl");

  auto* ablate = app.add_subcommand("ablate", "Sweep lambda_local or alpha across seeds");
  std::string ab_param, ab_values, ab_seeds = "0,1,2,3,4";
  ablate->add_option("--param", ab_param, "Swept parameter")
      ->required()
      ->check(CLI::IsMember({"lambda_local", "alpha"}));
  ablate->add_option("--values", ab_values, "Comma-separated values")->required();
  ablate->add_option("--seeds", ab_seeds, "Comma-separated seeds")->capture_default_str();

  auto* lemma = app.add_subcommand("verify-lemma", "Check the closed-form KL-regularized optimum");
  std::size_t lemma_trials = 100, lemma_perturb = 10000;
  lemma->add_option("--trials", lemma_trials, "Random instances")->capture_default_str();
  lemma->add_option("--perturbations", lemma_perturb, "Perturbations per instance")
      ->capture_default_str();

  auto* plot = app.add_subcommand("plot-data", "Merge curve CSVs into long format");
  std::vector<std::string> plot_inputs, plot_columns;
  plot->add_option("--inputs", plot_inputs, "Curve CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--columns", plot_columns, "Series to extract");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<const char*> argv{"tppo"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    const PipelineConfig cfg = resolve_config(g);
    const fs::path dir = out_dir(g);

    if (gen->parsed()) {
      const auto data = prepare_data(cfg);
      store_dataset(dir / "train.jsonl", data.train);
      store_dataset(dir / "eval.jsonl", data.eval);
      write_manifest(dir / "manifest.txt", echo_of(cfg, "gen-data"));
      std::cout << "wrote " << data.train.size() << " train and " << data.eval.size()
                << " eval episodes to " << dir.string() << '\n';
    } else if (annotate->parsed()) {
      std::size_t skipped = 0;
      const auto recs = reannotate(load_dataset(ann_in), cfg.corpus.annotator, &skipped);
      store_dataset(ann_out, recs);
      std::cout << "annotated " << recs.size() << " episodes, skipped " << skipped << '\n';
    } else if (train_rm->parsed()) {
      const auto data = load_or_generate(cfg, rm_data);
      const auto res = run_train_rm(cfg, data);
      const auto echo = echo_of(cfg, "train-rm");
      save_reward_model(dir / "reward_model.json", res.params, echo);
      write_rm_curve(dir / "rm_curve.csv", res, echo);
      std::cout << "eval total loss " << format_double(res.eval_total) << ", auc "
                << (res.eval_auc ? format_double(*res.eval_auc) : std::string("n/a"))
                << ", accuracy " << format_double(res.eval_accuracy) << '\n';
    } else if (train_ppo->parsed()) {
      PipelineConfig run = cfg;
      if (!ppo_mode.empty()) run.ppo.reward_mode = reward_mode_from_string(ppo_mode);
      const auto echo = echo_of(run, "train-ppo");
      const auto data = load_or_generate(run, ppo_data);
      RMParams rm = ppo_rm.empty() ? run_train_rm(run, data).params : load_reward_model(ppo_rm);
      PolicyParams start;
      if (ppo_init.empty()) {
        start = run_pretrain(run, data);
        save_policy(dir / "sft_policy.json", start, echo);
      } else {
        start = load_policy(ppo_init);
      }
      const auto snapshot = [&](int it, const PolicyParams& p) {
        fs::create_directories(dir / "checkpoints");
        char name[32];
        std::snprintf(name, sizeof name, "policy_iter_%05d.json", it);
        save_policy(dir / "checkpoints" / name, p, echo);
      };
      const auto res = run_train_ppo(run, data, rm, start, snapshot);
      save_policy(dir / "policy.json", res.policy, echo);
      write_ppo_curve(dir / "ppo_curve.csv", res, echo);
      if (res.early_stopped) {
        std::cerr << "training stopped early: " << res.diagnostic << '\n';
        return 1;
      }
      const auto& last = res.curve.back();
      std::cout << "final mean reward " << format_double(last.mean_reward) << ", relevance "
                << format_double(last.relevance) << ", mean length "
                << format_double(last.mean_len) << '\n';
    } else if (eval->parsed()) {
      const auto data = load_or_generate(cfg, ev_data);
      const auto echo = echo_of(cfg, "eval");
      const auto main = evaluate_policy(load_policy(ev_policy), data.eval, data.vocab, cfg, cfg.seed);
      {
        CsvWriter w(dir / "eval_samples.csv", echo,
                    {"id", "length", "token_aggregate", "direct_sentence"});
        for (const auto& s : main.samples)
          w.row({s.id, std::to_string(s.response.size()), std::to_string(s.score_token_aggregate),
                 std::to_string(s.score_direct)});
      }
      CsvWriter w(dir / "eval_summary.csv", echo, {"metric", "value"});
      w.row({"relevance_token_aggregate", format_double(main.relevance_token_aggregate)});
      w.row({"relevance_direct", format_double(main.relevance_direct)});
      w.row({"judge_agreement", format_double(main.judge_agreement)});
      w.row({"mean_length", format_double(main.mean_length)});
      std::cout << "relevance " << format_double(main.relevance_token_aggregate) << " (direct "
                << format_double(main.relevance_direct) << ")\n";
      if (!ev_baseline.empty()) {
        const auto base =
            evaluate_policy(load_policy(ev_baseline), data.eval, data.vocab, cfg, cfg.seed);
        for (const auto rule : {JudgeRule::token_aggregate, JudgeRule::direct_sentence}) {
          std::vector<int> a, b;
          for (std::size_t i = 0; i < main.samples.size(); ++i) {
            const bool agg = rule == JudgeRule::token_aggregate;
            a.push_back(agg ? main.samples[i].score_token_aggregate : main.samples[i].score_direct);
            b.push_back(agg ? base.samples[i].score_token_aggregate : base.samples[i].score_direct);
          }
          const auto wtl = win_tie_lose(a, b);
          const std::string name(to_string(rule));
          w.row({"win_" + name, format_double(wtl.win)});
          w.row({"tie_" + name, format_double(wtl.tie)});
          w.row({"lose_" + name, format_double(wtl.lose)});
          std::cout << name << " win/tie/lose " << format_double(wtl.win) << '/'
                    << format_double(wtl.tie) << '/' << format_double(wtl.lose) << '\n';
        }
      }
    } else if (ablate->parsed()) {
      AblationSpec spec;
      spec.parameter = ab_param;
      for (const auto& v : split_list(ab_values)) spec.values.push_back(std::stod(v));
      for (const auto& s : split_list(ab_seeds)) spec.seeds.push_back(std::stoull(s));
      spec.output = dir / ("ablation_" + ab_param + ".csv");
      const auto rows = run_ablation(spec, cfg);
      write_ablation(spec.output, rows, echo_of(cfg, "ablate"));
      std::size_t failed = 0;
      for (const auto& r : rows) failed += !r.ok;
      std::cout << "wrote " << rows.size() << " rows (" << failed << " failed) to "
                << spec.output.string() << '\n';
    } else if (lemma->parsed()) {
      const auto rep = verify_lemma1(cfg.seed, lemma_trials, lemma_perturb);
      write_lemma1_report(dir / "lemma1_report.csv", rep, echo_of(cfg, "verify-lemma"));
      std::cout << rep.violations() << " violations in " << rep.trials.size() << " trials\n";
      if (!rep.passed()) return 1;
    } else if (plot->parsed()) {
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      const auto n = emit_plot_data(inputs, dir / "plot_data.csv", plot_columns);
      std::cout << "wrote " << n << " points to " << (dir / "plot_data.csv").string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "tppo: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace tppo

// Command-line front end: run experiments, evaluate checkpoints, draw loss
// landscapes and measure flatness forgetting from exported artifacts.

#include "arcil/attacks.hpp"
#include "arcil/checkpoint.hpp"
#include "arcil/error.hpp"
#include "arcil/metrics.hpp"
#include "arcil/runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <regex>

namespace fs = std::filesystem;
using namespace arcil;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// Files named <stem><k><suffix>, ordered by k.
std::vector<std::string> numbered_files(const std::string& dir, const std::string& stem, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir + "' is not a directory");
  const std::regex pattern(stem + "([0-9]+)" + std::regex_replace(suffix, std::regex(R"(\.)"), R"(\.)"));
  std::vector<std::pair<std::size_t, std::string>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoul(m[1].str()), e.path().string());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (found[i].first != i + 1) throw ConfigError("'" + dir + "' is missing " + stem + std::to_string(i + 1) + suffix);
    out.push_back(found[i].second);
  }
  if (out.empty()) throw ConfigError("no " + stem + "<k>" + suffix + " files in '" + dir + "'");
  return out;
}

void print_summary(const RunReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["status"] = r.status;
  j["tasks_completed"] = r.tasks_completed;
  j["final_robust_mean"] = round_sig6(r.final_robust_mean());
  j["final_clean_mean"] = round_sig6(r.final_clean_mean());
  j["r_bwt"] = r.r_bwt ? nlohmann::ordered_json(round_sig6(*r.r_bwt)) : nlohmann::ordered_json(nullptr);
  if (r.flatness) {
    j["gf"] = round_sig6(r.flatness->gf);
    j["hf"] = r.flatness->hf ? nlohmann::ordered_json(round_sig6(*r.flatness->hf)) : nlohmann::ordered_json(nullptr);
  }
  std::cout << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially robust class-incremental learning laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  bool grid = false;
  auto* run = app.add_subcommand("run", "Train and evaluate a full task sequence");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_flag("--grid", grid, "Enumerate alpha, beta over {0, 0.5, 1, 2, 4}");

  std::string checkpoint, dataset, attack_name = "pgd20", epsilon = "8/255";
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Clean and robust accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required();
  eval->add_option("--dataset", dataset, "CSV dataset")->required();
  eval->add_option("--attack", attack_name, "pgd20 or aa-proxy")->check(CLI::IsMember({"pgd20", "aa-proxy"}));
  eval->add_option("--epsilon", epsilon, "L-inf radius, e.g. 8/255");
  eval->add_option("--seed", seed, "Attack seed");

  std::size_t index = 0, grid_n = 11;
  double extent = 0.1;
  std::string output;
  auto* land = app.add_subcommand("landscape", "Loss over the adversarial/random plane at one example");
  land->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required();
  land->add_option("--dataset", dataset, "CSV dataset")->required();
  land->add_option("--index", index, "Row of the dataset")->required();
  land->add_option("--extent", extent, "Half-width of the grid")->required();
  land->add_option("--n", grid_n, "Points per axis")->required();
  land->add_option("--epsilon", epsilon, "Radius of the attack defining the first axis");
  land->add_option("--seed", seed, "Seed for the random axis and the attack");
  land->add_option("--output", output, "CSV destination (stdout when omitted)");

  std::string ckpt_dir, data_dir, scalar = "ce";
  std::size_t subsample = 64;
  bool full = false;
  auto* flat = app.add_subcommand("flatness", "Gradient and Hessian forgetting across per-task checkpoints");
  flat->add_option("--checkpoints", ckpt_dir, "Directory of task_<k>.ckpt")->required();
  flat->add_option("--datasets", data_dir, "Directory of test_task_<k>.csv")->required();
  flat->add_option("--scalar", scalar, "ce or max-logit")->check(CLI::IsMember({"ce", "max-logit"}));
  flat->add_option("--subsample", subsample, "Examples per task");
  flat->add_flag("--full", full, "Use every test example");
  flat->add_option("--seed", seed, "Subsample seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      if (grid) {
        for (const auto& c : grid_configs(cfg, {0.0, 0.5, 1.0, 2.0, 4.0})) print_summary(run_experiment(c));
      } else {
        print_summary(run_experiment(cfg));
      }
    } else if (*eval) {
      const Network net = load_checkpoint(checkpoint);
      const Dataset data = load_csv_dataset(dataset);
      const double eps = parse_real_literal(epsilon);
      const AttackConfig attack = parse_eval_attack(attack_name) == EvalAttack::kPgd20 ? pgd20_config(eps, seed)
                                                                                      : aa_proxy_config(eps, seed);
      nlohmann::ordered_json j;
      j["examples"] = data.size();
      j["clean_acc"] = round_sig6(accuracy(net, data));
      j["robust_acc"] = round_sig6(robust_accuracy(net, data, attack));
      j["attack"] = attack_name;
      std::cout << j.dump() << "\n";
    } else if (*land) {
      const Network net = load_checkpoint(checkpoint);
      const Dataset data = load_csv_dataset(dataset);
      if (index >= data.size()) throw ConfigError("index " + std::to_string(index) + " outside the dataset");
      const Tensor x = data.inputs.gather_rows(std::span<const std::size_t>(&index, 1));
      const LandscapeGrid g =
          landscape_grid(net, x, data.labels[index], pgd20_config(parse_real_literal(epsilon), seed), extent, grid_n, seed);
      if (output.empty()) {
        std::cout << landscape_csv_text(g);
      } else {
        save_landscape_csv(g, output);
      }
    } else if (*flat) {
      const auto ckpts = numbered_files(ckpt_dir, "task_", ".ckpt");
      const auto sets = numbered_files(data_dir, "test_task_", ".csv");
      if (ckpts.size() != sets.size()) throw ConfigError("checkpoint and dataset counts differ");
      std::vector<Network> models;
      std::vector<Dataset> data;
      for (std::size_t i = 0; i < ckpts.size(); ++i) {
        models.push_back(load_checkpoint(ckpts[i]));
        data.push_back(load_csv_dataset(sets[i]));
      }
      std::vector<const Network*> ptrs;
      for (const auto& m : models) ptrs.push_back(&m);
      FlatnessOptions opts;
      opts.scalar = parse_scalar_def(scalar);
      opts.subsample = subsample;
      opts.full_testset = full;
      opts.seed = seed;
      const FlatnessReport r = flatness_forgetting(ptrs, data, opts);
      nlohmann::ordered_json j;
      j["scalar"] = scalar;
      j["gf"] = round_sig6(r.gf);
      j["hf"] = r.hf ? nlohmann::ordered_json(round_sig6(*r.hf)) : nlohmann::ordered_json(nullptr);
      if (!r.hf_note.empty()) j["hf_note"] = r.hf_note;
      std::cout << j.dump() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}

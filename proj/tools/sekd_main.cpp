// sekd: data generation, teacher training, distillation, evaluation and
// sweeps driven by a JSON experiment config.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sekd/error.hpp"
#include "sekd/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", c.out, "run directory")->required();
  cmd->add_option("--seed", c.seed, "run only this seed");
}

sekd::exp::ExperimentConfig load(const Common &c) {
  sekd::exp::ExperimentConfig config = sekd::exp::load_config(c.config);
  if (c.seed) {
    config.seeds = {*c.seed};
  }
  return config;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Token-adaptive knowledge distillation experiments"};
  app.require_subcommand(1);
  Common common;

  auto *gen = app.add_subcommand("gen-data", "write the train/valid/test corpus files");
  auto *teacher = app.add_subcommand("train-teacher", "train teacher models (one per seed)");
  auto *distill = app.add_subcommand("distill", "train students with each listed strategy");
  auto *evaluate = app.add_subcommand("evaluate", "score teachers and students on the test split");
  auto *sweep = app.add_subcommand("sweep", "run the configured sweep grid");
  for (auto *cmd : {gen, teacher, distill, evaluate, sweep}) {
    add_common(cmd, common);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const sekd::exp::ExperimentConfig config = load(common);
    if (gen->parsed()) {
      sekd::exp::cmd_gen_data(config, common.out);
    } else if (teacher->parsed()) {
      sekd::exp::cmd_train_teacher(config, common.out);
    } else if (distill->parsed()) {
      sekd::exp::cmd_distill(config, common.out);
    } else if (evaluate->parsed()) {
      const auto rows = sekd::exp::cmd_evaluate(config, common.out);
      std::printf("%s\n%s", sekd::exp::kScoresCsvHeader,
                  sekd::exp::scores_csv(rows, "row").c_str());
    } else if (sweep->parsed()) {
      const auto result = sekd::exp::cmd_sweep(config, common.out);
      std::printf("%s\n%s%s", sekd::exp::kScoresCsvHeader,
                  sekd::exp::scores_csv(result.cells, "cell").c_str(),
                  sekd::exp::scores_csv(result.medians, "median").c_str());
    }
  } catch (const sekd::TrainingFailure &e) {
    std::fprintf(stderr, "sekd: training failed at step %ld: %s\n", e.step(), e.what());
    return 3;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "sekd: %s\n", e.what());
    return 2;
  }
  return 0;
}

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sekd/error.hpp"
#include "sekd/experiment.hpp"

using namespace sekd;
using namespace sekd::exp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string &name) {
  auto dir = fs::temp_directory_path() / ("sekd_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct RunOutput {
  int status = 0;
  std::string text;
};

// Runs the CLI with stderr folded into the captured output.
RunOutput run_cli(const std::string &args) {
  const std::string cmd = std::string(SEKD_CLI_PATH) + " " + args + " 2>&1";
  RunOutput r;
  FILE *pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) {
    r.text += buf.data();
  }
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path write_config(const fs::path &dir, const json &j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

// A task and models small enough for a sweep to finish in seconds.
json tiny_config() {
  const json tiny_model = {{"d_model", 16}, {"n_layers", 1}, {"n_heads", 2}, {"d_ff", 32}};
  json teacher = tiny_model;
  teacher["preset"] = "teacher";
  json student = tiny_model;
  student["preset"] = "student";
  student["d_model"] = 8;
  return {{"name", "tiny"},
          {"task", {{"train_size", 64}, {"valid_size", 8}, {"test_size", 8}, {"max_len", 6}}},
          {"teacher", teacher},
          {"student", student},
          {"train", {{"epochs", 1}, {"batch_size", 32}, {"eval_every", 2}}},
          {"seeds", {0, 1}}};
}

std::size_t count_prefix(const std::string &text, const std::string &prefix) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

} // namespace

TEST_CASE("empty config yields the documented defaults") {
  const ExperimentConfig c = parse_config(json::object());
  CHECK(c.task.train_size == 10000);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.warmup_ratio == 0.03);
  CHECK(c.distill.strategy == kd::Strategy::self_evolution);
  CHECK(c.distill.lambda == 0.5);
  CHECK(c.distill.beta == 0.5);
  CHECK(c.distill.gamma == 0.4);
  CHECK(c.seeds == std::vector<std::uint64_t>{0});
  CHECK(c.strategies.size() == 7);
  CHECK_FALSE(c.sweep.has_value());
}

TEST_CASE("canonical JSON round-trips with a stable fingerprint") {
  json j = tiny_config();
  j["distill"] = {{"gamma", "inf"}, {"selection", "topk"}, {"k_percent", 30}};
  j["sweep"] = {{"param", "gamma"}, {"values", {0.1, "inf"}}};
  const ExperimentConfig a = parse_config(j);
  CHECK(a.distill.gamma == kd::kInfinity);
  const ExperimentConfig b = parse_config(a.to_json());
  CHECK(a.to_json() == b.to_json());
  CHECK(a.fingerprint() == b.fingerprint());
  j["train"]["lr"] = 2e-3;
  CHECK(parse_config(j).fingerprint() != a.fingerprint());
}

TEST_CASE("shipped presets parse") {
  std::size_t n = 0;
  for (const auto &e : fs::directory_iterator(SEKD_CONFIG_DIR)) {
    INFO(e.path().string());
    CHECK_NOTHROW(load_config(e.path()));
    ++n;
  }
  CHECK(n == 8);
  const ExperimentConfig gamma = load_config(fs::path(SEKD_CONFIG_DIR) / "fig2a_gamma.json");
  REQUIRE(gamma.sweep.has_value());
  CHECK(gamma.sweep->values.size() == 10);
  const ExperimentConfig lam =
      load_config(fs::path(SEKD_CONFIG_DIR) / "fig5_skew_teacher_lambda.json");
  CHECK(lam.distill.strategy == kd::Strategy::skew_teacher);
}

TEST_CASE("invalid fields are named in the error") {
  auto message = [](const json &j) {
    try {
      parse_config(j);
    } catch (const InvalidInput &e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message({{"trian", json::object()}}).find("trian") != std::string::npos);
  CHECK(message({{"train", {{"epoch", 3}}}}).find("train.epoch") != std::string::npos);
  CHECK(message({{"distill", {{"gamma", -1}}}}).find("gamma") != std::string::npos);
  CHECK(message({{"distill", {{"lambda", 2}}}}).find("lambda") != std::string::npos);
  CHECK(message({{"distill", {{"strategy", "sideways"}}}}).find("strategy") != std::string::npos);
  CHECK(message({{"train", {{"lr_decay", "cosine"}}}}).find("lr_decay") != std::string::npos);
  CHECK(message({{"seeds", json::array()}}).find("seeds") != std::string::npos);
  CHECK(message({{"train", {{"epochs", "three"}}}}).find("epochs") != std::string::npos);
  CHECK(message({{"sweep", {{"param", "k_percent"}, {"values", {10, 150}}}}})
            .find("sweep.values[1]") != std::string::npos);
  CHECK(message({{"sweep", {{"param", "depth"}, {"values", {1}}}}}).find("sweep") !=
        std::string::npos);
  CHECK(message({{"teacher", "huge"}}).find("teacher") != std::string::npos);
}

TEST_CASE("sweep values map onto the distillation config") {
  kd::DistillConfig d;
  SweepAxis gamma{"gamma", {0.2, "inf"}};
  CHECK(apply_sweep_value(gamma, 0, d, "self_evolution") == "self_evolution");
  CHECK(d.gamma == 0.2);
  CHECK(d.selection == kd::Selection::threshold);
  apply_sweep_value(gamma, 1, d, "self_evolution");
  CHECK(d.gamma == kd::kInfinity);
  CHECK(gamma.label(1) == "inf");

  SweepAxis topk{"k_percent", {40}};
  apply_sweep_value(topk, 0, d, "self_evolution");
  CHECK(d.selection == kd::Selection::topk);
  CHECK(d.k_percent == 40.0);

  SweepAxis range{"beta_range", {"0.9:0.1"}};
  apply_sweep_value(range, 0, d, "self_evolution");
  CHECK(d.beta_schedule == kd::BetaSchedule::linear);
  CHECK(d.beta_begin == 0.9);
  CHECK(d.beta_end == 0.1);

  SweepAxis beta{"beta", {0.3}};
  apply_sweep_value(beta, 0, d, "self_evolution");
  CHECK(d.beta_schedule == kd::BetaSchedule::constant);
  CHECK(d.beta == 0.3);

  SweepAxis strategies{"strategy", {"sft", "noevo"}};
  CHECK(apply_sweep_value(strategies, 0, d, "self_evolution") == "sft");
  CHECK(apply_sweep_value(strategies, 1, d, "self_evolution") == "noevo");
}

TEST_CASE("medians reconstruct from the per-seed cells") {
  const SweepAxis axis{"gamma", {0.1, 0.2}};
  std::vector<StudentScores> cells;
  const double bleus[2][3] = {{5.0, 1.0, 3.0}, {2.0, 8.0, 4.0}};
  for (int v = 0; v < 2; ++v) {
    for (int s = 0; s < 3; ++s) {
      StudentScores r;
      r.model = "self_evolution";
      r.sweep_value = axis.label(static_cast<std::size_t>(v));
      r.seed = static_cast<std::uint64_t>(s);
      r.bleu = bleus[v][s];
      r.token_accuracy = 0.1 * (s + 1);
      cells.push_back(r);
    }
  }
  auto medians = aggregate_medians(cells, axis);
  REQUIRE(medians.size() == 2);
  CHECK(medians[0].bleu == 3.0);
  CHECK(medians[1].bleu == 4.0);
  CHECK(medians[0].token_accuracy == doctest::Approx(0.2));

  cells.erase(cells.begin() + 2); // value 0.1 now has seeds {0, 1}
  medians = aggregate_medians(cells, axis);
  CHECK(medians[0].bleu == 3.0); // mean of 1 and 5
}

TEST_CASE("sweep worker count comes from the environment") {
  ::unsetenv(kWorkersEnv);
  CHECK(sweep_workers() == 1);
  ::setenv(kWorkersEnv, "3", 1);
  CHECK(sweep_workers() == 3);
  ::setenv(kWorkersEnv, "zero", 1);
  CHECK_THROWS_AS(sweep_workers(), InvalidInput);
  ::unsetenv(kWorkersEnv);
}

TEST_CASE("scores CSV rows") {
  StudentScores r;
  r.model = "forward";
  r.seed = 2;
  r.bleu = 12.5;
  const std::string csv = scores_csv({r, r}, "row");
  CHECK(count_prefix(csv, "row,forward,,2,") == 2);
  const auto first = csv.substr(0, csv.find('\n'));
  CHECK(std::count(first.begin(), first.end(), ',') ==
        std::count(kScoresCsvHeader, kScoresCsvHeader + std::strlen(kScoresCsvHeader), ','));
}

TEST_CASE("cli: gen-data is byte-identical across runs") {
  const fs::path dir = fresh("gen");
  const fs::path cfg = write_config(dir, tiny_config());
  REQUIRE(run_cli("gen-data --config " + cfg.string() + " --out " + (dir / "a").string()).status == 0);
  REQUIRE(run_cli("gen-data --config " + cfg.string() + " --out " + (dir / "b").string()).status == 0);
  for (const char *f : {"train.txt", "valid.txt", "test.txt"}) {
    const auto a = slurp(dir / "a" / "data" / f);
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(dir / "b" / "data" / f));
  }
}

TEST_CASE("cli: failures exit nonzero with a diagnostic") {
  const fs::path dir = fresh("fail");
  json j = tiny_config();
  j["distill"] = {{"gamma", -0.5}};
  const fs::path cfg = write_config(dir, j);
  const RunOutput bad = run_cli("distill --config " + cfg.string() + " --out " + dir.string());
  CHECK(bad.status != 0);
  CHECK(bad.text.find("gamma") != std::string::npos);

  const RunOutput missing =
      run_cli("distill --config " + (dir / "nope.json").string() + " --out " + dir.string());
  CHECK(missing.status != 0);
  CHECK(missing.text.find("nope.json") != std::string::npos);

  const fs::path ok = write_config(dir, tiny_config());
  const RunOutput no_teacher =
      run_cli("distill --config " + ok.string() + " --out " + (dir / "empty").string());
  CHECK(no_teacher.status != 0);
  CHECK(no_teacher.text.find("teacher") != std::string::npos);

  CHECK(run_cli("distill --out " + dir.string()).status != 0);
}

TEST_CASE("cli: full pipeline and a two-seed sweep") {
  const fs::path dir = fresh("pipeline");
  json j = tiny_config();
  j["sweep"] = {{"param", "gamma"}, {"values", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}}};
  const fs::path cfg = write_config(dir, j);
  const std::string common = " --config " + cfg.string() + " --out " + (dir / "run").string();

  REQUIRE(run_cli("gen-data" + common).status == 0);
  REQUIRE(run_cli("train-teacher" + common).status == 0);
  REQUIRE(run_cli("distill" + common).status == 0);
  const RunOutput eval = run_cli("evaluate" + common);
  REQUIRE(eval.status == 0);
  // A teacher row plus seven strategy rows per seed.
  CHECK(count_prefix(eval.text, "row,") == 16);
  CHECK(count_prefix(eval.text, "row,teacher,") == 2);
  const json summary = json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(summary.contains("config_fingerprint"));

  ::setenv(kWorkersEnv, "2", 1);
  const RunOutput sweep = run_cli("sweep" + common);
  ::unsetenv(kWorkersEnv);
  REQUIRE(sweep.status == 0);
  CHECK(count_prefix(sweep.text, "cell,") == 18);
  CHECK(count_prefix(sweep.text, "median,") == 9);
  CHECK(slurp(dir / "run" / "sweep.csv") == sweep.text);

  // Serial execution gives the same bytes.
  const RunOutput serial = run_cli("sweep" + common);
  CHECK(serial.text == sweep.text);

  const RunOutput one_seed = run_cli("sweep" + common + " --seed 1");
  CHECK(count_prefix(one_seed.text, "cell,") == 9);
}

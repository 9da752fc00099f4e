#include "sekd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "sekd/checkpoint.hpp"
#include "sekd/error.hpp"
#include "sekd/eval_metrics.hpp"

namespace sekd::exp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Rejects keys outside `allowed`; `where` prefixes error messages.
void check_keys(const json &j, const std::string &where, std::initializer_list<const char *> allowed) {
  if (!j.is_object()) {
    throw InvalidInput(where + ": expected an object");
  }
  for (const auto &item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char *k) { return item.key() == k; });
    if (!known) {
      throw InvalidInput((where.empty() ? "" : where + ".") + item.key() + ": unknown key");
    }
  }
}

std::string field(const std::string &where, const char *key) {
  return where.empty() ? key : where + "." + key;
}

template <typename T>
void read_into(const json &j, const std::string &where, const char *key, T &out) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return;
  }
  const std::string name = field(where, key);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) {
      throw InvalidInput(name + ": expected a string");
    }
    out = it->template get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) {
      throw InvalidInput(name + ": expected a number");
    }
    out = it->template get<T>();
  } else {
    if (!it->is_number_integer()) {
      throw InvalidInput(name + ": expected an integer");
    }
    if constexpr (std::is_unsigned_v<T>) {
      if (it->template get<long long>() < 0) {
        throw InvalidInput(name + ": must be non-negative");
      }
    }
    out = it->template get<T>();
  }
}

double parse_gamma(const json &v, const std::string &name) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
    throw InvalidInput(name + ": expected a number or \"inf\" (got \"" + s + "\")");
  }
  if (!v.is_number()) {
    throw InvalidInput(name + ": expected a number or \"inf\"");
  }
  return v.get<double>();
}

json gamma_json(double g) { return std::isinf(g) ? json("inf") : json(g); }

task::TaskSpec parse_task(const json &j) {
  check_keys(j, "task",
             {"vocab_size", "zipf_exponent", "min_len", "max_len", "train_size", "valid_size",
              "test_size", "seed", "mapping_seed"});
  task::TaskSpec t;
  read_into(j, "task", "vocab_size", t.vocab_size);
  read_into(j, "task", "zipf_exponent", t.zipf_exponent);
  read_into(j, "task", "min_len", t.min_len);
  read_into(j, "task", "max_len", t.max_len);
  read_into(j, "task", "train_size", t.train_size);
  read_into(j, "task", "valid_size", t.valid_size);
  read_into(j, "task", "test_size", t.test_size);
  read_into(j, "task", "seed", t.seed);
  read_into(j, "task", "mapping_seed", t.mapping_seed);
  try {
    t.validate();
  } catch (const InvalidInput &e) {
    throw InvalidInput(std::string("task: ") + e.what());
  }
  return t;
}

json task_json(const task::TaskSpec &t) {
  return {{"vocab_size", t.vocab_size}, {"zipf_exponent", t.zipf_exponent},
          {"min_len", t.min_len},       {"max_len", t.max_len},
          {"train_size", t.train_size}, {"valid_size", t.valid_size},
          {"test_size", t.test_size},   {"seed", t.seed},
          {"mapping_seed", t.mapping_seed}};
}

ModelSpec parse_model(const json &j, const std::string &where) {
  if (j.is_string()) {
    return {j.get<std::string>(), json::object()};
  }
  check_keys(j, where, {"preset", "d_model", "n_layers", "n_heads", "d_ff"});
  ModelSpec m{where == "teacher" ? "teacher" : "student", json::object()};
  read_into(j, where, "preset", m.preset);
  for (const char *k : {"d_model", "n_layers", "n_heads", "d_ff"}) {
    if (j.contains(k)) {
      if (!j.at(k).is_number_integer()) {
        throw InvalidInput(field(where, k) + ": expected an integer");
      }
      m.overrides[k] = j.at(k);
    }
  }
  return m;
}

json model_json(const ModelSpec &m) {
  json j = m.overrides;
  j["preset"] = m.preset;
  return j;
}

train::TrainConfig parse_train(const json &j) {
  check_keys(j, "train",
             {"epochs", "batch_size", "lr", "warmup_ratio", "lr_decay", "eval_every",
              "checkpoint_policy"});
  train::TrainConfig c;
  read_into(j, "train", "epochs", c.epochs);
  read_into(j, "train", "batch_size", c.batch_size);
  read_into(j, "train", "lr", c.lr);
  read_into(j, "train", "warmup_ratio", c.warmup_ratio);
  read_into(j, "train", "eval_every", c.eval_every);
  std::string policy(train::to_string(c.checkpoint_policy));
  read_into(j, "train", "checkpoint_policy", policy);
  std::string decay(to_string(c.lr_decay));
  read_into(j, "train", "lr_decay", decay);
  try {
    c.checkpoint_policy = train::parse_checkpoint_policy(policy);
    c.lr_decay = parse_lr_decay(decay);
    c.validate();
  } catch (const InvalidInput &e) {
    throw InvalidInput(std::string("train: ") + e.what());
  }
  return c;
}

json train_json(const train::TrainConfig &c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup_ratio", c.warmup_ratio},
          {"lr_decay", std::string(to_string(c.lr_decay))},
          {"eval_every", c.eval_every},
          {"checkpoint_policy", std::string(train::to_string(c.checkpoint_policy))}};
}

kd::DistillConfig parse_distill(const json &j) {
  check_keys(j, "distill",
             {"strategy", "lambda", "beta", "skew_teacher_beta", "gamma", "selection", "k_percent", "beta_begin",
              "beta_end", "beta_schedule"});
  kd::DistillConfig c;
  try {
    if (j.contains("strategy")) {
      c.strategy = kd::parse_strategy(j.at("strategy").get<std::string>());
    }
    if (j.contains("selection")) {
      c.selection = kd::parse_selection(j.at("selection").get<std::string>());
    }
    if (j.contains("beta_schedule")) {
      c.beta_schedule = kd::parse_beta_schedule(j.at("beta_schedule").get<std::string>());
    }
  } catch (const json::exception &) {
    throw InvalidInput("distill: strategy, selection and beta_schedule must be strings");
  }
  read_into(j, "distill", "lambda", c.lambda);
  read_into(j, "distill", "beta", c.beta);
  read_into(j, "distill", "skew_teacher_beta", c.skew_teacher_beta);
  if (j.contains("gamma")) {
    c.gamma = parse_gamma(j.at("gamma"), "distill.gamma");
  }
  read_into(j, "distill", "k_percent", c.k_percent);
  read_into(j, "distill", "beta_begin", c.beta_begin);
  read_into(j, "distill", "beta_end", c.beta_end);
  try {
    c.validate();
  } catch (const InvalidInput &e) {
    throw InvalidInput(std::string("distill.") + e.what());
  }
  return c;
}

json distill_json(const kd::DistillConfig &c) {
  return {{"strategy", std::string(kd::to_string(c.strategy))},
          {"lambda", c.lambda},
          {"beta", c.beta},
          {"skew_teacher_beta", c.skew_teacher_beta},
          {"gamma", gamma_json(c.gamma)},
          {"selection", std::string(kd::to_string(c.selection))},
          {"k_percent", c.k_percent},
          {"beta_begin", c.beta_begin},
          {"beta_end", c.beta_end},
          {"beta_schedule", std::string(kd::to_string(c.beta_schedule))}};
}

void check_strategy_name(const std::string &s, const std::string &where) {
  if (s == kSftStrategy) {
    return;
  }
  try {
    kd::parse_strategy(s);
  } catch (const InvalidInput &) {
    throw InvalidInput(where + ": unknown strategy '" + s + "'");
  }
}

std::pair<double, double> parse_beta_range(const json &v, const std::string &where) {
  if (!v.is_string()) {
    throw InvalidInput(where + ": beta_range values are strings \"begin:end\"");
  }
  const auto s = v.get<std::string>();
  const auto colon = s.find(':');
  if (colon == std::string::npos) {
    throw InvalidInput(where + ": beta_range value '" + s + "' is not \"begin:end\"");
  }
  try {
    std::size_t used_b = 0;
    std::size_t used_e = 0;
    const std::string b = s.substr(0, colon);
    const std::string e = s.substr(colon + 1);
    const double begin = std::stod(b, &used_b);
    const double end = std::stod(e, &used_e);
    if (used_b != b.size() || used_e != e.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return {begin, end};
  } catch (const std::logic_error &) {
    throw InvalidInput(where + ": beta_range value '" + s + "' is not \"begin:end\"");
  }
}

SweepAxis parse_sweep(const json &j) {
  check_keys(j, "sweep", {"param", "values"});
  SweepAxis axis;
  if (!j.contains("param") || !j.at("param").is_string()) {
    throw InvalidInput("sweep.param: required string");
  }
  axis.param = j.at("param").get<std::string>();
  static const std::set<std::string> params{"gamma",  "k_percent", "beta",
                                            "lambda", "strategy",  "beta_range"};
  if (!params.contains(axis.param)) {
    throw InvalidInput("sweep.param: unknown sweep parameter '" + axis.param + "'");
  }
  if (!j.contains("values") || !j.at("values").is_array() || j.at("values").empty()) {
    throw InvalidInput("sweep.values: required non-empty list");
  }
  for (const auto &v : j.at("values")) {
    axis.values.push_back(v);
  }
  return axis;
}

fs::path teacher_root(const ExperimentConfig &c, const fs::path &out) {
  return c.teacher_dir.empty() ? out / "teacher" : fs::path(c.teacher_dir) / "teacher";
}

fs::path seed_dir(const fs::path &base, std::uint64_t seed) {
  return base / ("seed_" + std::to_string(seed));
}

void write_text(const fs::path &path, const std::string &text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw IoError("cannot write " + path.string());
  }
  f << text;
  if (!f) {
    throw IoError("failed writing " + path.string());
  }
}

task::Corpus load_corpus(const ExperimentConfig &c) {
  if (c.data_dir.empty()) {
    return task::generate_corpus(c.task);
  }
  const fs::path dir(c.data_dir);
  task::Corpus corpus;
  corpus.spec = c.task;
  corpus.train = task::read_split(dir / "train.txt", &c.task);
  corpus.valid = task::read_split(dir / "valid.txt", &c.task);
  corpus.test = task::read_split(dir / "test.txt", &c.task);
  return corpus;
}

ModelParams<float> load_model(const fs::path &dir, const char *what) {
  if (!fs::exists(dir / kManifestFile)) {
    throw IoError(std::string("missing ") + what + " checkpoint: " + dir.string());
  }
  return load_checkpoint<float>(dir);
}

json run_metadata(const ExperimentConfig &c, const std::string &role,
                  const std::string &strategy, std::uint64_t seed,
                  const train::TrainResult &r) {
  return {{"role", role},
          {"strategy", strategy},
          {"seed", seed},
          {"selected_step", r.selected_step},
          {"experiment", c.name},
          {"config_fingerprint", hex16(c.fingerprint())}};
}

// Trains one student and writes its checkpoint and metrics under `dir`.
train::TrainResult train_student(const ExperimentConfig &c, const task::Corpus &corpus,
                                 const ModelParams<float> &teacher, const std::string &strategy,
                                 const kd::DistillConfig &distill, std::uint64_t seed,
                                 const fs::path &dir) {
  train::TrainConfig tc = c.train;
  tc.seed = seed;
  const ModelConfig mc = c.student.resolve(c.task, seed);
  train::TrainResult r;
  if (strategy == kSftStrategy) {
    r = train::train_sft(mc, corpus, tc);
  } else {
    kd::DistillConfig dc = distill;
    dc.strategy = kd::parse_strategy(strategy);
    r = train::distill(mc, teacher, corpus, tc, dc);
  }
  save_checkpoint(r.params, dir / "checkpoint", run_metadata(c, "student", strategy, seed, r));
  write_text(dir / "metrics.csv", r.metrics.to_csv());
  return r;
}

StudentScores score(const ModelParams<float> &params, const task::Corpus &corpus,
                    const eval::Corpus &teacher_hyps) {
  const eval::Corpus hyps =
      eval::generate(params, corpus.test, eval::default_max_new(corpus.spec));
  const train::EvalResult e = train::evaluate_outputs(hyps, corpus.test);
  StudentScores s;
  s.bleu = e.bleu;
  s.token_accuracy = e.token_accuracy;
  s.seq_exact_match = e.seq_exact_match;
  s.teacher_agreement = eval::corpus_bleu(hyps, teacher_hyps);
  s.params_fingerprint = params_fingerprint(params);
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json scores_json(const StudentScores &s) {
  return {{"model", s.model},
          {"sweep_value", s.sweep_value},
          {"seed", s.seed},
          {"bleu", s.bleu},
          {"token_accuracy", s.token_accuracy},
          {"seq_exact_match", s.seq_exact_match},
          {"teacher_agreement", s.teacher_agreement},
          {"final_hard_fraction", s.final_hard_fraction},
          {"params_fingerprint", hex16(s.params_fingerprint)}};
}

// Runs `fn(i)` for i in [0, n) on up to `workers` threads; rethrows the
// first failure by index.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (count == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < count; ++t) {
      threads.emplace_back(work);
    }
    for (auto &t : threads) {
      t.join();
    }
  }
  for (auto &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

} // namespace

ModelConfig ModelSpec::resolve(const task::TaskSpec &task, std::uint64_t seed) const {
  ModelConfig c = ModelConfig::preset(preset, task.vocab_size, task.longest_sequence());
  if (overrides.contains("d_model")) {
    c.d_model = overrides.at("d_model").get<int>();
  }
  if (overrides.contains("n_layers")) {
    c.n_layers = overrides.at("n_layers").get<int>();
  }
  if (overrides.contains("n_heads")) {
    c.n_heads = overrides.at("n_heads").get<int>();
  }
  if (overrides.contains("d_ff")) {
    c.d_ff = overrides.at("d_ff").get<int>();
  }
  c.seed = seed;
  c.validate();
  return c;
}

std::string SweepAxis::label(std::size_t i) const {
  const json &v = values.at(i);
  if (v.is_string()) {
    return v.get<std::string>();
  }
  std::ostringstream os;
  os << v.get<double>();
  return os.str();
}

json ExperimentConfig::to_json() const {
  json j = {{"name", name},
            {"task", task_json(task)},
            {"teacher", model_json(teacher)},
            {"student", model_json(student)},
            {"train", train_json(train)},
            {"distill", distill_json(distill)},
            {"strategies", strategies},
            {"seeds", seeds},
            {"teacher_dir", teacher_dir},
            {"data_dir", data_dir}};
  if (sweep) {
    j["sweep"] = {{"param", sweep->param}, {"values", sweep->values}};
  }
  return j;
}

std::uint64_t ExperimentConfig::fingerprint() const { return fnv1a(to_json().dump()); }

ExperimentConfig parse_config(const json &j) {
  check_keys(j, "", {"name", "task", "teacher", "student", "train", "distill", "strategies",
                     "sweep", "seeds", "teacher_dir", "data_dir"});
  ExperimentConfig c;
  read_into(j, "", "name", c.name);
  if (j.contains("task")) {
    c.task = parse_task(j.at("task"));
  }
  if (j.contains("teacher")) {
    c.teacher = parse_model(j.at("teacher"), "teacher");
  }
  if (j.contains("student")) {
    c.student = parse_model(j.at("student"), "student");
  }
  for (const auto *m : {&c.teacher, &c.student}) {
    try {
      m->resolve(c.task, 0);
    } catch (const InvalidInput &e) {
      throw InvalidInput(std::string(m == &c.teacher ? "teacher: " : "student: ") + e.what());
    }
  }
  if (j.contains("train")) {
    c.train = parse_train(j.at("train"));
  }
  if (j.contains("distill")) {
    c.distill = parse_distill(j.at("distill"));
  }
  if (j.contains("strategies")) {
    const json &s = j.at("strategies");
    if (!s.is_array() || s.empty()) {
      throw InvalidInput("strategies: expected a non-empty list");
    }
    c.strategies.clear();
    for (const auto &v : s) {
      if (!v.is_string()) {
        throw InvalidInput("strategies: expected strategy names");
      }
      check_strategy_name(v.get<std::string>(), "strategies");
      c.strategies.push_back(v.get<std::string>());
    }
  }
  if (j.contains("seeds")) {
    const json &s = j.at("seeds");
    if (!s.is_array() || s.empty()) {
      throw InvalidInput("seeds: expected a non-empty list");
    }
    c.seeds.clear();
    for (const auto &v : s) {
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw InvalidInput("seeds: expected non-negative integers");
      }
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  read_into(j, "", "teacher_dir", c.teacher_dir);
  read_into(j, "", "data_dir", c.data_dir);
  if (j.contains("sweep")) {
    c.sweep = parse_sweep(j.at("sweep"));
    for (std::size_t i = 0; i < c.sweep->values.size(); ++i) {
      kd::DistillConfig probe = c.distill;
      apply_sweep_value(*c.sweep, i, probe, std::string(kd::to_string(c.distill.strategy)));
    }
  }
  return c;
}

ExperimentConfig load_config(const fs::path &path) {
  std::ifstream f(path);
  if (!f) {
    throw IoError("cannot read config file " + path.string());
  }
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error &e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

std::string apply_sweep_value(const SweepAxis &axis, std::size_t index,
                              kd::DistillConfig &distill, const std::string &base_strategy) {
  const json &v = axis.values.at(index);
  const std::string where = "sweep.values[" + std::to_string(index) + "]";
  std::string strategy = base_strategy;
  auto number = [&]() {
    if (!v.is_number()) {
      throw InvalidInput(where + ": " + axis.param + " expects a number");
    }
    return v.get<double>();
  };
  if (axis.param == "gamma") {
    distill.gamma = parse_gamma(v, where);
    distill.selection = kd::Selection::threshold;
  } else if (axis.param == "k_percent") {
    distill.k_percent = number();
    distill.selection = kd::Selection::topk;
  } else if (axis.param == "beta") {
    distill.beta = number();
    distill.beta_schedule = kd::BetaSchedule::constant;
  } else if (axis.param == "lambda") {
    distill.lambda = number();
  } else if (axis.param == "beta_range") {
    const auto [b, e] = parse_beta_range(v, where);
    distill.beta_begin = b;
    distill.beta_end = e;
    distill.beta_schedule = kd::BetaSchedule::linear;
  } else if (axis.param == "strategy") {
    if (!v.is_string()) {
      throw InvalidInput(where + ": strategy expects a name");
    }
    strategy = v.get<std::string>();
    check_strategy_name(strategy, where);
  }
  try {
    distill.validate();
  } catch (const InvalidInput &e) {
    throw InvalidInput(where + ": " + e.what());
  }
  return strategy;
}

unsigned sweep_workers() {
  const char *env = std::getenv(kWorkersEnv);
  if (env == nullptr || *env == '\0') {
    return 1;
  }
  char *end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    throw InvalidInput(std::string(kWorkersEnv) + " must be a positive integer");
  }
  return static_cast<unsigned>(n);
}

std::vector<StudentScores> aggregate_medians(const std::vector<StudentScores> &cells,
                                             const SweepAxis &axis) {
  std::vector<StudentScores> out;
  for (std::size_t i = 0; i < axis.values.size(); ++i) {
    const std::string label = axis.label(i);
    std::vector<double> bleu, acc, exact, agree, hard;
    std::string model;
    for (const auto &c : cells) {
      if (c.sweep_value == label) {
        model = c.model;
        bleu.push_back(c.bleu);
        acc.push_back(c.token_accuracy);
        exact.push_back(c.seq_exact_match);
        agree.push_back(c.teacher_agreement);
        hard.push_back(c.final_hard_fraction);
      }
    }
    if (bleu.empty()) {
      continue;
    }
    StudentScores m;
    m.model = model;
    m.sweep_value = label;
    m.bleu = median(bleu);
    m.token_accuracy = median(acc);
    m.seq_exact_match = median(exact);
    m.teacher_agreement = median(agree);
    m.final_hard_fraction = median(hard);
    out.push_back(m);
  }
  return out;
}

std::string scores_csv(const std::vector<StudentScores> &rows, const std::string &kind) {
  std::string out;
  for (const auto &r : rows) {
    out += kind + "," + r.model + "," + r.sweep_value + "," + std::to_string(r.seed) + "," +
           fmt(r.bleu) + "," + fmt(r.token_accuracy) + "," + fmt(r.seq_exact_match) + "," +
           fmt(r.teacher_agreement) + "," + fmt(r.final_hard_fraction) + "," +
           hex16(r.params_fingerprint) + "\n";
  }
  return out;
}

void cmd_gen_data(const ExperimentConfig &config, const fs::path &out) {
  const task::Corpus corpus = task::generate_corpus(config.task);
  for (const task::Split *s : {&corpus.train, &corpus.valid, &corpus.test}) {
    fs::create_directories(out / "data");
    task::write_split(*s, config.task, out / "data" / (s->name + ".txt"));
  }
}

void cmd_train_teacher(const ExperimentConfig &config, const fs::path &out) {
  const task::Corpus corpus = load_corpus(config);
  for (std::uint64_t seed : config.seeds) {
    train::TrainConfig tc = config.train;
    tc.seed = seed;
    const train::TrainResult r =
        train::train_sft(config.teacher.resolve(config.task, seed), corpus, tc);
    const fs::path dir = seed_dir(out / "teacher", seed);
    save_checkpoint(r.params, dir / "checkpoint",
                    run_metadata(config, "teacher", kSftStrategy, seed, r));
    write_text(dir / "metrics.csv", r.metrics.to_csv());
  }
}

void cmd_distill(const ExperimentConfig &config, const fs::path &out) {
  const task::Corpus corpus = load_corpus(config);
  for (std::uint64_t seed : config.seeds) {
    const ModelParams<float> teacher =
        load_model(seed_dir(teacher_root(config, out), seed) / "checkpoint", "teacher");
    for (const std::string &strategy : config.strategies) {
      train_student(config, corpus, teacher, strategy, config.distill, seed,
                    seed_dir(out / "students" / strategy, seed));
    }
  }
}

std::vector<StudentScores> cmd_evaluate(const ExperimentConfig &config, const fs::path &out) {
  const task::Corpus corpus = load_corpus(config);
  const std::size_t max_new = eval::default_max_new(config.task);
  std::vector<StudentScores> rows;
  json records = json::array();
  for (std::uint64_t seed : config.seeds) {
    const ModelParams<float> teacher =
        load_model(seed_dir(teacher_root(config, out), seed) / "checkpoint", "teacher");
    const eval::Corpus teacher_hyps = eval::generate(teacher, corpus.test, max_new);
    StudentScores t = score(teacher, corpus, teacher_hyps);
    t.model = "teacher";
    t.seed = seed;
    rows.push_back(t);
    records.push_back(scores_json(t));
    for (const std::string &strategy : config.strategies) {
      const ModelParams<float> student = load_model(
          seed_dir(out / "students" / strategy, seed) / "checkpoint", "student");
      StudentScores s = score(student, corpus, teacher_hyps);
      s.model = strategy;
      s.seed = seed;
      const train::EvalResult kl = train::evaluate(student, corpus.test, config.task, &teacher);
      rows.push_back(s);
      json rec = scores_json(s);
      rec["mean_token_kl_to_teacher"] = *kl.mean_token_kl_to_teacher;
      records.push_back(rec);
    }
  }
  json medians = json::array();
  std::vector<std::string> models{"teacher"};
  models.insert(models.end(), config.strategies.begin(), config.strategies.end());
  for (const auto &m : models) {
    std::vector<double> bleu, agree;
    for (const auto &r : rows) {
      if (r.model == m) {
        bleu.push_back(r.bleu);
        agree.push_back(r.teacher_agreement);
      }
    }
    medians.push_back({{"model", m}, {"bleu", median(bleu)},
                       {"teacher_agreement", median(agree)}});
  }
  const json summary = {{"experiment", config.name},
                        {"config_fingerprint", hex16(config.fingerprint())},
                        {"corpus_fingerprint", hex16(config.task.fingerprint())},
                        {"config", config.to_json()},
                        {"rows", records},
                        {"medians", medians}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_text(out / "summary.csv", std::string(kScoresCsvHeader) + "\n" + scores_csv(rows, "row"));
  return rows;
}

SweepResult cmd_sweep(const ExperimentConfig &config, const fs::path &out) {
  if (!config.sweep) {
    throw InvalidInput("sweep: config has no sweep section");
  }
  const SweepAxis &axis = *config.sweep;
  const task::Corpus corpus = load_corpus(config);
  const std::size_t max_new = eval::default_max_new(config.task);
  const unsigned workers = sweep_workers();

  // Teachers: reuse from teacher_dir when given, otherwise train any missing
  // ones into this run directory.
  std::vector<ModelParams<float>> teachers(config.seeds.size());
  std::vector<eval::Corpus> teacher_hyps(config.seeds.size());
  parallel_for(config.seeds.size(), workers, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    const fs::path dir = seed_dir(teacher_root(config, out), seed);
    if (config.teacher_dir.empty() && !fs::exists(dir / "checkpoint" / kManifestFile)) {
      train::TrainConfig tc = config.train;
      tc.seed = seed;
      const train::TrainResult r =
          train::train_sft(config.teacher.resolve(config.task, seed), corpus, tc);
      save_checkpoint(r.params, dir / "checkpoint",
                      run_metadata(config, "teacher", kSftStrategy, seed, r));
      write_text(dir / "metrics.csv", r.metrics.to_csv());
    }
    teachers[i] = load_model(dir / "checkpoint", "teacher");
    teacher_hyps[i] = eval::generate(teachers[i], corpus.test, max_new);
  });

  const std::string base(kd::to_string(config.distill.strategy));
  const std::size_t n_seeds = config.seeds.size();
  SweepResult result;
  result.cells.resize(axis.values.size() * n_seeds);
  parallel_for(result.cells.size(), workers, [&](std::size_t cell) {
    const std::size_t vi = cell / n_seeds;
    const std::size_t si = cell % n_seeds;
    kd::DistillConfig dc = config.distill;
    const std::string strategy = apply_sweep_value(axis, vi, dc, base);
    const std::string label = axis.label(vi);
    const fs::path dir =
        seed_dir(out / "sweep" / (axis.param + "=" + label), config.seeds[si]);
    const train::TrainResult r =
        train_student(config, corpus, teachers[si], strategy, dc, config.seeds[si], dir);
    StudentScores s = score(r.params, corpus, teacher_hyps[si]);
    s.model = strategy;
    s.sweep_value = label;
    s.seed = config.seeds[si];
    s.final_hard_fraction = r.metrics.steps.back().hard_fraction;
    result.cells[cell] = s;
  });
  result.medians = aggregate_medians(result.cells, axis);

  json cells = json::array();
  for (const auto &c : result.cells) {
    cells.push_back(scores_json(c));
  }
  json medians = json::array();
  for (const auto &m : result.medians) {
    medians.push_back(scores_json(m));
  }
  const json summary = {{"experiment", config.name},
                        {"config_fingerprint", hex16(config.fingerprint())},
                        {"corpus_fingerprint", hex16(config.task.fingerprint())},
                        {"param", axis.param},
                        {"config", config.to_json()},
                        {"cells", cells},
                        {"medians", medians}};
  write_text(out / "sweep.json", summary.dump(2) + "\n");
  write_text(out / "sweep.csv", std::string(kScoresCsvHeader) + "\n" +
                                    scores_csv(result.cells, "cell") +
                                    scores_csv(result.medians, "median"));
  return result;
}

} // namespace sekd::exp

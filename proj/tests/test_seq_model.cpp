#include <doctest.h>

#include <cmath>
#include <random>

#include "sekd/error.hpp"
#include "sekd/seq_model.hpp"

using namespace sekd;

namespace {

ModelConfig tiny(int d, int layers, int heads, int vocab, int max_len) {
  return {vocab, d, layers, heads, 2 * d, max_len, 7};
}

// Larger-than-init random weights so every nonlinearity is exercised.
template <typename T>
void randomize(ModelParams<T> &p, std::uint64_t seed, double scale) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto *t : p.tensors()) {
    for (auto &v : t->data) {
      v = static_cast<T>(v + n(gen));
    }
  }
}

RowMat<double> random_grad(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RowMat<double> g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    g.data()[i] = n(gen);
  }
  return g;
}

double weighted(const ModelParams<double> &p, const TokenBatch &b, const RowMat<double> &g) {
  return (forward(p, b).array() * g.array()).sum();
}

// Compares every analytic parameter gradient against central differences.
void check_gradients(ModelParams<double> params, const TokenBatch &batch, std::uint64_t seed) {
  const RowMat<double> logits = forward(params, batch);
  const RowMat<double> g = random_grad(logits.rows(), logits.cols(), seed);
  const ModelParams<double> grads = backward(params, batch, g);
  const auto names = params.names();
  auto tensors = params.tensors();
  const auto grad_tensors = grads.tensors();
  const double h = 1e-6;
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t k = 0; k < tensors[t]->data.size(); ++k) {
      double &v = tensors[t]->data[k];
      const double saved = v;
      v = saved + h;
      const double up = weighted(params, batch, g);
      v = saved - h;
      const double down = weighted(params, batch, g);
      v = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad_tensors[t]->data[k];
      const double err =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      if (err > worst) {
        worst = err;
        worst_name = names[t] + "[" + std::to_string(k) + "]";
      }
    }
  }
  INFO("worst entry " << worst_name);
  CHECK(worst < 1e-3);
}

} // namespace

TEST_CASE("init is deterministic per seed") {
  const ModelConfig c = tiny(8, 2, 2, 11, 6);
  CHECK(init_params<float>(c) == init_params<float>(c));
  ModelConfig other = c;
  other.seed = 8;
  CHECK_FALSE(init_params<float>(c) == init_params<float>(other));

  const auto p = init_params<double>(c);
  CHECK(p.lnf_gain.data == AlignedVec<double>(8, 1.0));
  CHECK(p.layers[1].ff_out_bias.data == AlignedVec<double>(8, 0.0));
  double sq = 0.0;
  for (double v : p.tok_emb.data) {
    sq += v * v;
  }
  CHECK(std::sqrt(sq / static_cast<double>(p.tok_emb.size())) == doctest::Approx(0.02).epsilon(0.3));
}

TEST_CASE("parameter names and shapes") {
  const auto p = ModelParams<float>::zeros(tiny(4, 1, 2, 5, 4));
  const auto names = p.names();
  CHECK(names.size() == p.tensors().size());
  CHECK(names.front() == "tok_emb");
  CHECK(names.back() == "head.weight");
  CHECK(p.head.shape == std::vector<std::size_t>{4, 5});
  CHECK(p.layers[0].qkv_weight.shape == std::vector<std::size_t>{4, 12});
  CHECK(p.parameter_count() > 0);
}

TEST_CASE("config validation") {
  ModelConfig c = tiny(6, 1, 4, 5, 4);
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c.n_heads = 3;
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(ModelConfig::preset("huge", 128, 36), InvalidInput);
  const auto t = ModelConfig::preset("teacher", 128, 36);
  CHECK(t.d_model == 128);
  CHECK(t.n_layers == 4);
  CHECK(ModelConfig::preset("large_teacher", 128, 36).d_model == 192);
  CHECK(ModelConfig::preset("large_teacher", 128, 36).n_layers == 6);
  CHECK(ModelConfig::preset("student", 128, 36).d_ff == 256);
}

TEST_CASE("zeroed output projection gives all-zero logits") {
  auto p = init_params<double>(tiny(8, 1, 2, 5, 6));
  std::fill(p.head.data.begin(), p.head.data.end(), 0.0);
  const RowMat<double> logits = forward(p, make_batch({{1, 2, 3}, {4}}));
  CHECK(logits.rows() == 6);
  CHECK(logits.cols() == 5);
  CHECK(logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is causal") {
  auto p = init_params<float>(tiny(8, 2, 2, 9, 8));
  randomize(p, 3, 0.3);
  const std::vector<int> base{1, 4, 7, 2, 5, 8, 3};
  const RowMat<float> ref = forward(p, make_batch({base}));
  for (std::size_t j = 0; j < base.size(); ++j) {
    auto changed = base;
    changed[j] = (changed[j] + 1) % 9;
    const RowMat<float> out = forward(p, make_batch({changed}));
    for (std::size_t i = 0; i < j; ++i) {
      CHECK(out.row(static_cast<Eigen::Index>(i)) == ref.row(static_cast<Eigen::Index>(i)));
    }
    CHECK(out.row(static_cast<Eigen::Index>(j)) != ref.row(static_cast<Eigen::Index>(j)));
  }
}

TEST_CASE("padding does not change earlier logits of a shorter row") {
  auto p = init_params<double>(tiny(8, 1, 2, 7, 8));
  randomize(p, 5, 0.3);
  const RowMat<double> alone = forward(p, make_batch({{1, 2, 3}}));
  const RowMat<double> padded = forward(p, make_batch({{1, 2, 3}, {4, 5, 6, 1, 2}}));
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK((alone.row(i) - padded.row(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("tiny model logits are finite and reproducible") {
  const auto p = init_params<float>(tiny(8, 1, 2, 5, 6));
  const TokenBatch b = make_batch({{0, 1, 2, 3, 4}});
  const RowMat<float> a = forward(p, b);
  CHECK(a.allFinite());
  CHECK(a == forward(p, b));
}

TEST_CASE("length and token range are checked") {
  const auto p = init_params<float>(tiny(4, 1, 1, 5, 3));
  CHECK_THROWS_AS(forward(p, make_batch({{1, 2, 3, 4}})), InvalidInput);
  CHECK_THROWS_AS(forward(p, make_batch({{1, 9}})), InvalidInput);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  auto p = init_params<double>(tiny(4, 1, 2, 5, 4));
  randomize(p, 1, 0.5);
  const TokenBatch b = make_batch({{1, 2, 3}});
  const ModelParams<double> g = backward(p, b, RowMat<double>(RowMat<double>::Zero(3, 5)));
  for (const auto *t : g.tensors()) {
    for (double v : t->data) {
      CHECK(v == 0.0);
    }
  }
}

TEST_CASE("backward rejects mismatched upstream gradient") {
  const auto p = init_params<double>(tiny(4, 1, 2, 5, 4));
  CHECK_THROWS_AS(backward(p, make_batch({{1, 2, 3}}), RowMat<double>(RowMat<double>::Zero(2, 5))),
                  InvalidInput);
}

TEST_CASE("parameter gradients match finite differences: d=4, L=1, V=3, seq 3") {
  auto p = init_params<double>(tiny(4, 1, 2, 3, 3));
  randomize(p, 11, 0.5);
  check_gradients(p, make_batch({{0, 2, 1}}), 21);
}

TEST_CASE("parameter gradients match finite differences: padded batch, two layers") {
  auto p = init_params<double>(tiny(6, 2, 3, 5, 5));
  randomize(p, 12, 0.4);
  check_gradients(p, make_batch({{1, 4, 2, 3}, {0, 3}, {2, 2, 4, 1}}), 22);
}

TEST_CASE("float and double forward agree") {
  auto p = init_params<double>(tiny(8, 2, 2, 9, 8));
  randomize(p, 2, 0.2);
  const TokenBatch b = make_batch({{1, 4, 7, 2}, {5, 8}});
  const RowMat<double> d = forward(p, b);
  const RowMat<float> f = forward(cast_params<float>(p), b);
  CHECK((d - f.cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("greedy decoding") {
  auto p = init_params<float>(tiny(8, 1, 2, 6, 10));
  randomize(p, 9, 0.4);
  const std::vector<std::vector<int>> prompts{{1, 2}, {1, 5, 4, 2}};

  SUBCASE("deterministic and prompt-preserving") {
    const auto a = decode_greedy(p, prompts, 4, 3);
    CHECK(a == decode_greedy(p, prompts, 4, 3));
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      REQUIRE(a[i].size() >= prompts[i].size());
      CHECK(std::equal(prompts[i].begin(), prompts[i].end(), a[i].begin()));
      CHECK(a[i].size() <= prompts[i].size() + 4);
    }
  }
  SUBCASE("max_new = 0 returns the prompt") {
    CHECK(decode_greedy(p, prompts, 0, 3) == prompts);
  }
  SUBCASE("EOS-peaked model produces an empty continuation") {
    std::fill(p.lnf_gain.data.begin(), p.lnf_gain.data.end(), 0.0f);
    std::fill(p.lnf_bias.data.begin(), p.lnf_bias.data.end(), 1.0f);
    std::fill(p.head.data.begin(), p.head.data.end(), 0.0f);
    for (int r = 0; r < 8; ++r) {
      p.head.data[static_cast<std::size_t>(r * 6 + 3)] = 1.0f;
    }
    CHECK(decode_greedy(p, prompts, 5, 3) == prompts);
  }
  SUBCASE("argmax ties go to the lowest index") {
    std::fill(p.head.data.begin(), p.head.data.end(), 0.0f);
    const auto out = decode_greedy(p, {{1}}, 3, 5);
    CHECK(out == std::vector<std::vector<int>>{{1, 0, 0, 0}});
  }
}

TEST_CASE("fingerprint tracks parameter bytes") {
  auto p = init_params<float>(tiny(4, 1, 2, 5, 4));
  const auto h = params_fingerprint(p);
  CHECK(h == params_fingerprint(init_params<float>(tiny(4, 1, 2, 5, 4))));
  p.layers[0].out_bias.data[1] = 1e-7f;
  CHECK(h != params_fingerprint(p));
}

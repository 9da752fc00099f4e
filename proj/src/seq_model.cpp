#include "sekd/seq_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "sekd/error.hpp"
#include "sekd/rng.hpp"

namespace sekd {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

using Index = Eigen::Index;

template <typename T>
void layer_norm(const RowMat<T> &x, const Tensor<T> &gain, const Tensor<T> &bias,
                RowMat<T> &y, RowVec<T> &mean, RowVec<T> &rstd) {
  const Index rows = x.rows();
  const Index d = x.cols();
  y.resize(rows, d);
  mean.resize(rows);
  rstd.resize(rows);
  const auto g = gain.vec();
  const auto b = bias.vec();
  for (Index r = 0; r < rows; ++r) {
    const auto xr = x.row(r);
    const T mu = xr.mean();
    const T var = (xr.array() - mu).square().mean();
    const T rs = T(1) / std::sqrt(var + T(kLayerNormEps));
    mean[r] = mu;
    rstd[r] = rs;
    y.row(r) = ((xr.array() - mu) * rs * g.array() + b.array()).matrix();
  }
}

/// Accumulates gain/bias gradients and returns dL/dx.
template <typename T>
RowMat<T> layer_norm_backward(const RowMat<T> &x, const RowVec<T> &mean,
                              const RowVec<T> &rstd, const Tensor<T> &gain,
                              const RowMat<T> &dy, Tensor<T> &dgain, Tensor<T> &dbias) {
  const Index rows = x.rows();
  const Index d = x.cols();
  RowMat<T> dx(rows, d);
  const auto g = gain.vec();
  auto dg = dgain.vec();
  auto db = dbias.vec();
  RowVec<T> xhat(d);
  RowVec<T> dxhat(d);
  for (Index r = 0; r < rows; ++r) {
    xhat = ((x.row(r).array() - mean[r]) * rstd[r]).matrix();
    dg.array() += dy.row(r).array() * xhat.array();
    db += dy.row(r);
    dxhat = (dy.row(r).array() * g.array()).matrix();
    const T m1 = dxhat.mean();
    const T m2 = (dxhat.array() * xhat.array()).mean();
    dx.row(r) = ((dxhat.array() - m1 - xhat.array() * m2) * rstd[r]).matrix();
  }
  return dx;
}

/// tanh-approximated GELU. Stores the tanh term for the backward pass.
template <typename T>
void gelu(const RowMat<T> &u, RowMat<T> &act, RowMat<T> &tanh_term) {
  const auto ua = u.array();
  tanh_term = (T(kGeluC) * (ua + T(kGeluA) * ua.cube())).tanh().matrix();
  act = (T(0.5) * ua * (T(1) + tanh_term.array())).matrix();
}

template <typename T>
void gelu_backward(const RowMat<T> &u, const RowMat<T> &tanh_term, RowMat<T> &grad) {
  const auto ua = u.array();
  const auto t = tanh_term.array();
  grad.array() *= T(0.5) * (T(1) + t) +
                  T(0.5) * ua * (T(1) - t.square()) * T(kGeluC) *
                      (T(1) + T(3 * kGeluA) * ua.square());
}

template <typename T>
void add_bias(RowMat<T> &m, const Tensor<T> &bias) {
  m.rowwise() += bias.vec();
}

template <typename T>
void col_sum_into(const RowMat<T> &m, Tensor<T> &out) {
  out.vec() += m.colwise().sum();
}

/// Causal multi-head attention over qkv (rows x 3d). Writes the concatenated
/// head outputs into `attn` and the attention weights into `probs`.
template <typename T>
void attention_forward(const RowMat<T> &qkv, std::size_t batch, std::size_t length,
                       int n_heads, RowMat<T> &attn, AlignedVec<T> &probs) {
  const Index d = qkv.cols() / 3;
  const Index hd = d / n_heads;
  const Index len = static_cast<Index>(length);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  attn.setZero(qkv.rows(), d);
  probs.assign(batch * static_cast<std::size_t>(n_heads) * length * length, T(0));
  RowMat<T> scores(len, len);
  for (std::size_t b = 0; b < batch; ++b) {
    const Index r0 = static_cast<Index>(b) * len;
    for (int h = 0; h < n_heads; ++h) {
      const auto q = qkv.block(r0, h * hd, len, hd);
      const auto k = qkv.block(r0, d + h * hd, len, hd);
      const auto v = qkv.block(r0, 2 * d + h * hd, len, hd);
      scores.noalias() = q.lazyProduct(k.transpose()) * scale;
      Eigen::Map<RowMat<T>> p(probs.data() + (b * n_heads + h) * length * length, len, len);
      for (Index i = 0; i < len; ++i) {
        const T m = scores.row(i).head(i + 1).maxCoeff();
        T sum = T(0);
        for (Index j = 0; j <= i; ++j) {
          const T e = std::exp(scores(i, j) - m);
          p(i, j) = e;
          sum += e;
        }
        p.row(i).head(i + 1) /= sum;
      }
      attn.block(r0, h * hd, len, hd).noalias() = p.lazyProduct(v);
    }
  }
}

template <typename T>
RowMat<T> attention_backward(const RowMat<T> &qkv, const AlignedVec<T> &probs,
                             std::size_t batch, std::size_t length, int n_heads,
                             const RowMat<T> &dattn) {
  const Index d = qkv.cols() / 3;
  const Index hd = d / n_heads;
  const Index len = static_cast<Index>(length);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  RowMat<T> dqkv = RowMat<T>::Zero(qkv.rows(), qkv.cols());
  RowMat<T> dp(len, len);
  RowMat<T> ds(len, len);
  for (std::size_t b = 0; b < batch; ++b) {
    const Index r0 = static_cast<Index>(b) * len;
    for (int h = 0; h < n_heads; ++h) {
      const auto q = qkv.block(r0, h * hd, len, hd);
      const auto k = qkv.block(r0, d + h * hd, len, hd);
      const auto v = qkv.block(r0, 2 * d + h * hd, len, hd);
      const auto dout = dattn.block(r0, h * hd, len, hd);
      Eigen::Map<const RowMat<T>> p(probs.data() + (b * n_heads + h) * length * length, len,
                                    len);
      dp.noalias() = dout * v.transpose();
      dqkv.block(r0, 2 * d + h * hd, len, hd).noalias() += p.transpose() * dout;
      for (Index i = 0; i < len; ++i) {
        const T dot = (dp.row(i).head(i + 1).array() * p.row(i).head(i + 1).array()).sum();
        for (Index j = 0; j < len; ++j) {
          ds(i, j) = j <= i ? p(i, j) * (dp(i, j) - dot) * scale : T(0);
        }
      }
      dqkv.block(r0, h * hd, len, hd).noalias() += ds * k;
      dqkv.block(r0, d + h * hd, len, hd).noalias() += ds.transpose() * q;
    }
  }
  return dqkv;
}

template <typename T>
void fill_normal(Tensor<T> &t, std::mt19937_64 &gen) {
  for (T &v : t.data) {
    v = static_cast<T>(kInitStd * rng::normal(gen));
  }
}

void check_tokens(const ModelConfig &config, const TokenBatch &tokens) {
  if (tokens.length > static_cast<std::size_t>(config.max_seq_len)) {
    throw InvalidInput("sequence length " + std::to_string(tokens.length) +
                       " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  if (tokens.token_ids.size() != tokens.batch * tokens.length) {
    throw InvalidInput("token batch shape mismatch");
  }
  for (int id : tokens.token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw InvalidInput("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

} // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char *name) {
    if (v <= 0) {
      throw InvalidInput(std::string(name) + " must be positive");
    }
  };
  positive(vocab_size, "vocab_size");
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_ff, "d_ff");
  positive(max_seq_len, "max_seq_len");
  if (vocab_size < 2) {
    throw InvalidInput("vocab_size must be at least 2");
  }
  if (d_model % n_heads != 0) {
    throw InvalidInput("d_model must be divisible by n_heads");
  }
}

ModelConfig ModelConfig::teacher_preset(int vocab_size, int max_seq_len) {
  return {vocab_size, 128, 4, 4, 512, max_seq_len, 0};
}

ModelConfig ModelConfig::student_preset(int vocab_size, int max_seq_len) {
  return {vocab_size, 64, 2, 2, 256, max_seq_len, 0};
}

ModelConfig ModelConfig::large_teacher_preset(int vocab_size, int max_seq_len) {
  return {vocab_size, 192, 6, 4, 768, max_seq_len, 0};
}

ModelConfig ModelConfig::preset(const std::string &name, int vocab_size, int max_seq_len) {
  if (name == "teacher") {
    return teacher_preset(vocab_size, max_seq_len);
  }
  if (name == "student") {
    return student_preset(vocab_size, max_seq_len);
  }
  if (name == "large_teacher") {
    return large_teacher_preset(vocab_size, max_seq_len);
  }
  throw InvalidInput("preset: unknown model preset '" + name + "'");
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig &config) {
  config.validate();
  const auto v = static_cast<std::size_t>(config.vocab_size);
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto f = static_cast<std::size_t>(config.d_ff);
  ModelParams p;
  p.config = config;
  p.tok_emb = Tensor<T>({v, d});
  p.pos_emb = Tensor<T>({static_cast<std::size_t>(config.max_seq_len), d});
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto &l : p.layers) {
    l.ln1_gain = Tensor<T>({d});
    l.ln1_bias = Tensor<T>({d});
    l.qkv_weight = Tensor<T>({d, 3 * d});
    l.qkv_bias = Tensor<T>({3 * d});
    l.out_weight = Tensor<T>({d, d});
    l.out_bias = Tensor<T>({d});
    l.ln2_gain = Tensor<T>({d});
    l.ln2_bias = Tensor<T>({d});
    l.ff_in_weight = Tensor<T>({d, f});
    l.ff_in_bias = Tensor<T>({f});
    l.ff_out_weight = Tensor<T>({f, d});
    l.ff_out_bias = Tensor<T>({d});
  }
  p.lnf_gain = Tensor<T>({d});
  p.lnf_bias = Tensor<T>({d});
  p.head = Tensor<T>({d, v});
  return p;
}

template <typename T>
std::vector<std::string> ModelParams<T>::names() const {
  std::vector<std::string> out{"tok_emb", "pos_emb"};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string pre = "layers." + std::to_string(i) + ".";
    for (const char *n : {"ln1.gain", "ln1.bias", "attn.qkv.weight", "attn.qkv.bias",
                          "attn.out.weight", "attn.out.bias", "ln2.gain", "ln2.bias",
                          "mlp.in.weight", "mlp.in.bias", "mlp.out.weight", "mlp.out.bias"}) {
      out.push_back(pre + n);
    }
  }
  out.insert(out.end(), {"ln_f.gain", "ln_f.bias", "head.weight"});
  return out;
}

template <typename T>
std::vector<Tensor<T> *> ModelParams<T>::tensors() {
  std::vector<Tensor<T> *> out{&tok_emb, &pos_emb};
  for (auto &l : layers) {
    out.insert(out.end(), {&l.ln1_gain, &l.ln1_bias, &l.qkv_weight, &l.qkv_bias,
                           &l.out_weight, &l.out_bias, &l.ln2_gain, &l.ln2_bias,
                           &l.ff_in_weight, &l.ff_in_bias, &l.ff_out_weight,
                           &l.ff_out_bias});
  }
  out.insert(out.end(), {&lnf_gain, &lnf_bias, &head});
  return out;
}

template <typename T>
std::vector<const Tensor<T> *> ModelParams<T>::tensors() const {
  auto mut = const_cast<ModelParams *>(this)->tensors();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto *t : tensors()) {
    n += t->size();
  }
  return n;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
  for (const auto *t : tensors()) {
    for (T v : t->data) {
      if (!std::isfinite(v)) {
        return false;
      }
    }
  }
  return true;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig &config) {
  ModelParams<T> p = ModelParams<T>::zeros(config);
  std::mt19937_64 gen(rng::derive(config.seed, 0x1d1e));
  fill_normal(p.tok_emb, gen);
  fill_normal(p.pos_emb, gen);
  for (auto &l : p.layers) {
    std::fill(l.ln1_gain.data.begin(), l.ln1_gain.data.end(), T(1));
    std::fill(l.ln2_gain.data.begin(), l.ln2_gain.data.end(), T(1));
    fill_normal(l.qkv_weight, gen);
    fill_normal(l.out_weight, gen);
    fill_normal(l.ff_in_weight, gen);
    fill_normal(l.ff_out_weight, gen);
  }
  std::fill(p.lnf_gain.data.begin(), p.lnf_gain.data.end(), T(1));
  fill_normal(p.head, gen);
  return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From> &params) {
  ModelParams<To> out = ModelParams<To>::zeros(params.config);
  const auto src = params.tensors();
  const auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::transform(src[i]->data.begin(), src[i]->data.end(), dst[i]->data.begin(),
                   [](From v) { return static_cast<To>(v); });
  }
  return out;
}

template <typename T>
RowMat<T> forward(const ModelParams<T> &params, const TokenBatch &tokens,
                  ForwardCache<T> *cache) {
  const ModelConfig &cfg = params.config;
  check_tokens(cfg, tokens);
  const std::size_t batch = tokens.batch;
  const std::size_t length = tokens.length;
  const Index rows = static_cast<Index>(batch * length);
  const Index d = cfg.d_model;

  RowMat<T> x(rows, d);
  const auto tok = params.tok_emb.mat();
  const auto pos = params.pos_emb.mat();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < length; ++i) {
      const Index r = static_cast<Index>(b * length + i);
      x.row(r) = tok.row(tokens.token(b, i)) + pos.row(static_cast<Index>(i));
    }
  }

  if (cache != nullptr) {
    cache->batch = batch;
    cache->length = length;
    cache->ids = tokens.token_ids;
    cache->layers.assign(params.layers.size(), {});
  }

  LayerCache<T> scratch;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const LayerParams<T> &lp = params.layers[li];
    LayerCache<T> &lc = cache != nullptr ? cache->layers[li] : scratch;
    lc.x_in = std::move(x);
    layer_norm(lc.x_in, lp.ln1_gain, lp.ln1_bias, lc.h1, lc.ln1_mean, lc.ln1_rstd);
    lc.qkv.noalias() = lc.h1 * lp.qkv_weight.mat();
    add_bias(lc.qkv, lp.qkv_bias);
    attention_forward(lc.qkv, batch, length, cfg.n_heads, lc.attn, lc.probs);
    lc.x_mid = lc.x_in;
    lc.x_mid.noalias() += lc.attn * lp.out_weight.mat();
    add_bias(lc.x_mid, lp.out_bias);
    layer_norm(lc.x_mid, lp.ln2_gain, lp.ln2_bias, lc.h2, lc.ln2_mean, lc.ln2_rstd);
    lc.ff_pre.noalias() = lc.h2 * lp.ff_in_weight.mat();
    add_bias(lc.ff_pre, lp.ff_in_bias);
    gelu(lc.ff_pre, lc.ff_act, lc.ff_tanh);
    x = lc.x_mid;
    x.noalias() += lc.ff_act * lp.ff_out_weight.mat();
    add_bias(x, lp.ff_out_bias);
  }

  RowMat<T> hf;
  RowVec<T> mean;
  RowVec<T> rstd;
  layer_norm(x, params.lnf_gain, params.lnf_bias, hf, mean, rstd);
  RowMat<T> logits = hf * params.head.mat();
  if (cache != nullptr) {
    cache->x_final = std::move(x);
    cache->hf = std::move(hf);
    cache->lnf_mean = std::move(mean);
    cache->lnf_rstd = std::move(rstd);
  }
  return logits;
}

template <typename T>
ModelParams<T> backward(const ModelParams<T> &params, const ForwardCache<T> &cache,
                        const RowMat<T> &grad_logits) {
  const ModelConfig &cfg = params.config;
  const Index rows = static_cast<Index>(cache.batch * cache.length);
  if (grad_logits.rows() != rows || grad_logits.cols() != cfg.vocab_size) {
    throw InvalidInput("grad_logits shape does not match forward output");
  }
  ModelParams<T> g = ModelParams<T>::zeros(cfg);

  g.head.mat().noalias() = cache.hf.transpose() * grad_logits;
  RowMat<T> dhf = grad_logits * params.head.mat().transpose();
  RowMat<T> dx = layer_norm_backward(cache.x_final, cache.lnf_mean, cache.lnf_rstd,
                                     params.lnf_gain, dhf, g.lnf_gain, g.lnf_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams<T> &lp = params.layers[li];
    const LayerCache<T> &lc = cache.layers[li];
    LayerParams<T> &lg = g.layers[li];

    // MLP residual branch.
    lg.ff_out_weight.mat().noalias() += lc.ff_act.transpose() * dx;
    col_sum_into(dx, lg.ff_out_bias);
    RowMat<T> dpre = dx * lp.ff_out_weight.mat().transpose();
    gelu_backward(lc.ff_pre, lc.ff_tanh, dpre);
    lg.ff_in_weight.mat().noalias() += lc.h2.transpose() * dpre;
    col_sum_into(dpre, lg.ff_in_bias);
    RowMat<T> dh2 = dpre * lp.ff_in_weight.mat().transpose();
    dx += layer_norm_backward(lc.x_mid, lc.ln2_mean, lc.ln2_rstd, lp.ln2_gain, dh2,
                              lg.ln2_gain, lg.ln2_bias);

    // Attention residual branch.
    lg.out_weight.mat().noalias() += lc.attn.transpose() * dx;
    col_sum_into(dx, lg.out_bias);
    RowMat<T> dattn = dx * lp.out_weight.mat().transpose();
    RowMat<T> dqkv = attention_backward(lc.qkv, lc.probs, cache.batch, cache.length,
                                        cfg.n_heads, dattn);
    lg.qkv_weight.mat().noalias() += lc.h1.transpose() * dqkv;
    col_sum_into(dqkv, lg.qkv_bias);
    RowMat<T> dh1 = dqkv * lp.qkv_weight.mat().transpose();
    dx += layer_norm_backward(lc.x_in, lc.ln1_mean, lc.ln1_rstd, lp.ln1_gain, dh1,
                              lg.ln1_gain, lg.ln1_bias);
  }

  auto dtok = g.tok_emb.mat();
  auto dpos = g.pos_emb.mat();
  for (std::size_t b = 0; b < cache.batch; ++b) {
    for (std::size_t i = 0; i < cache.length; ++i) {
      const Index r = static_cast<Index>(b * cache.length + i);
      dtok.row(cache.ids[static_cast<std::size_t>(r)]) += dx.row(r);
      dpos.row(static_cast<Index>(i)) += dx.row(r);
    }
  }
  return g;
}

template <typename T>
ModelParams<T> backward(const ModelParams<T> &params, const TokenBatch &tokens,
                        const RowMat<T> &grad_logits) {
  ForwardCache<T> cache;
  forward(params, tokens, &cache);
  return backward(params, cache, grad_logits);
}

TokenBatch make_batch(const std::vector<std::vector<int>> &sequences, int pad_id) {
  TokenBatch out;
  out.batch = sequences.size();
  for (const auto &s : sequences) {
    out.length = std::max(out.length, s.size());
  }
  out.token_ids.assign(out.batch * out.length, pad_id);
  out.loss_mask.assign(out.batch * out.length, 0);
  for (std::size_t b = 0; b < out.batch; ++b) {
    std::copy(sequences[b].begin(), sequences[b].end(),
              out.token_ids.begin() + static_cast<std::ptrdiff_t>(b * out.length));
    out.lengths.push_back(sequences[b].size());
    out.example_index.push_back(b);
  }
  return out;
}

template <typename T>
std::vector<std::vector<int>> decode_greedy(const ModelParams<T> &params,
                                            const std::vector<std::vector<int>> &prompts,
                                            std::size_t max_new, int eos_id) {
  constexpr std::size_t kChunk = 128;
  const auto max_len = static_cast<std::size_t>(params.config.max_seq_len);
  for (const auto &p : prompts) {
    if (p.empty() || p.size() > max_len) {
      throw InvalidInput("prompt must be non-empty and fit in max_seq_len");
    }
  }
  std::vector<std::vector<int>> out(prompts);

  // Group prompts of similar length so padded recomputation stays cheap.
  std::vector<std::size_t> order(prompts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return prompts[a].size() < prompts[b].size();
  });

  for (std::size_t start = 0; start < order.size(); start += kChunk) {
    const std::size_t stop = std::min(order.size(), start + kChunk);
    std::vector<std::size_t> active(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop));
    for (std::size_t step = 0; step < max_new && !active.empty(); ++step) {
      std::vector<std::vector<int>> seqs;
      seqs.reserve(active.size());
      for (std::size_t idx : active) {
        seqs.push_back(out[idx]);
      }
      const TokenBatch batch = make_batch(seqs);
      const RowMat<T> logits = forward(params, batch);
      std::vector<std::size_t> still;
      for (std::size_t b = 0; b < active.size(); ++b) {
        const std::size_t idx = active[b];
        const Index r = static_cast<Index>(b * batch.length + out[idx].size() - 1);
        Index best = 0;
        logits.row(r).maxCoeff(&best); // first maximum wins
        const int token = static_cast<int>(best);
        if (token == eos_id) {
          continue;
        }
        out[idx].push_back(token);
        if (out[idx].size() < max_len) {
          still.push_back(idx);
        }
      }
      active = std::move(still);
    }
  }
  return out;
}

template <typename T>
std::uint64_t params_fingerprint(const ModelParams<T> &params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto *t : params.tensors()) {
    const auto *bytes = reinterpret_cast<const unsigned char *>(t->data.data());
    for (std::size_t i = 0; i < t->data.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

#define SEKD_INSTANTIATE(T)                                                                \
  template struct ModelParams<T>;                                                          \
  template ModelParams<T> init_params<T>(const ModelConfig &);                             \
  template RowMat<T> forward<T>(const ModelParams<T> &, const TokenBatch &,                \
                                ForwardCache<T> *);                                        \
  template ModelParams<T> backward<T>(const ModelParams<T> &, const ForwardCache<T> &,     \
                                      const RowMat<T> &);                                  \
  template ModelParams<T> backward<T>(const ModelParams<T> &, const TokenBatch &,          \
                                      const RowMat<T> &);                                  \
  template std::vector<std::vector<int>> decode_greedy<T>(                                 \
      const ModelParams<T> &, const std::vector<std::vector<int>> &, std::size_t, int);    \
  template std::uint64_t params_fingerprint<T>(const ModelParams<T> &);

SEKD_INSTANTIATE(float)
SEKD_INSTANTIATE(double)
#undef SEKD_INSTANTIATE

template ModelParams<double> cast_params<double, float>(const ModelParams<float> &);
template ModelParams<float> cast_params<float, double>(const ModelParams<double> &);
template ModelParams<float> cast_params<float, float>(const ModelParams<float> &);
template ModelParams<double> cast_params<double, double>(const ModelParams<double> &);

} // namespace sekd

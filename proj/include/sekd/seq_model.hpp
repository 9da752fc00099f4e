#pragma once

// Decoder-only transformer with explicit forward and backward passes.
//
// Pre-normalization blocks (LayerNorm -> causal multi-head attention ->
// residual, LayerNorm -> GELU MLP -> residual), learned positional
// embeddings, final LayerNorm and an untied output projection without bias.
// Instantiated for float (training) and double (gradient checks).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sekd/tensor.hpp"
#include "sekd/token_batch.hpp"

namespace sekd {

struct ModelConfig {
  int vocab_size = 128;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 256;
  int max_seq_len = 36;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig &) const = default;

  static ModelConfig teacher_preset(int vocab_size, int max_seq_len);
  static ModelConfig student_preset(int vocab_size, int max_seq_len);
  static ModelConfig large_teacher_preset(int vocab_size, int max_seq_len);
  /// "teacher", "student" or "large_teacher".
  static ModelConfig preset(const std::string &name, int vocab_size, int max_seq_len);
};

template <typename T>
struct LayerParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> qkv_weight, qkv_bias; // d x 3d
  Tensor<T> out_weight, out_bias; // d x d
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> ff_in_weight, ff_in_bias;   // d x d_ff
  Tensor<T> ff_out_weight, ff_out_bias; // d_ff x d

  bool operator==(const LayerParams &) const = default;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> tok_emb; // V x d
  Tensor<T> pos_emb; // max_seq_len x d
  std::vector<LayerParams<T>> layers;
  Tensor<T> lnf_gain, lnf_bias;
  Tensor<T> head; // d x V

  /// Zero-filled parameters with the shapes implied by `config`.
  static ModelParams zeros(const ModelConfig &config);

  /// Parameter names in a fixed structural order, aligned with tensors().
  std::vector<std::string> names() const;
  std::vector<Tensor<T> *> tensors();
  std::vector<const Tensor<T> *> tensors() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const ModelParams &) const = default;
};

/// Deterministic initialization: weights ~ N(0, 0.02), gains 1, biases 0.
template <typename T>
ModelParams<T> init_params(const ModelConfig &config);

/// Converts parameters between precisions.
template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From> &params);

template <typename T>
struct LayerCache {
  RowMat<T> x_in, h1, qkv, attn, x_mid, h2, ff_pre, ff_act, ff_tanh;
  RowVec<T> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
  AlignedVec<T> probs; // batch x heads x L x L attention weights
};

/// Activations retained by forward() for backward().
template <typename T>
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> ids;
  std::vector<LayerCache<T>> layers;
  RowMat<T> x_final, hf;
  RowVec<T> lnf_mean, lnf_rstd;
};

/// Logits for every position, shape (batch * length) x V, row b * length + i.
/// Fills `cache` when non-null.
template <typename T>
RowMat<T> forward(const ModelParams<T> &params, const TokenBatch &tokens,
                  ForwardCache<T> *cache = nullptr);

/// Gradients of sum(logits .* grad_logits) w.r.t. every parameter.
template <typename T>
ModelParams<T> backward(const ModelParams<T> &params, const ForwardCache<T> &cache,
                        const RowMat<T> &grad_logits);

/// Convenience overload that recomputes the forward pass.
template <typename T>
ModelParams<T> backward(const ModelParams<T> &params, const TokenBatch &tokens,
                        const RowMat<T> &grad_logits);

/// Wraps id sequences into a right-padded TokenBatch (mask all false).
TokenBatch make_batch(const std::vector<std::vector<int>> &sequences, int pad_id = 0);

/// Greedy decoding (beam size 1). Returns prompt followed by generated tokens;
/// generation stops at `eos_id` (not included) or after `max_new` tokens or at
/// max_seq_len. Argmax ties resolve to the lowest index.
template <typename T>
std::vector<std::vector<int>> decode_greedy(const ModelParams<T> &params,
                                            const std::vector<std::vector<int>> &prompts,
                                            std::size_t max_new, int eos_id);

/// FNV-1a hash over the raw parameter bytes in name order.
template <typename T>
std::uint64_t params_fingerprint(const ModelParams<T> &params);

} // namespace sekd

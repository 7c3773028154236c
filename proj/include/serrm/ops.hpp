#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "serrm/autodiff.hpp"
#include "serrm/tensor.hpp"

namespace serrm {

enum class AttentionAxis { position, symbol };
enum class RopeMode { none, rope1d, rope2d };

std::string to_string(RopeMode mode);
RopeMode parse_rope_mode(const std::string& s);

struct RopeSpec {
  RopeMode mode = RopeMode::none;
  double base = 10000.0;
  // Row length of the underlying grid; rope2d only.
  int grid_width = 0;
};

inline constexpr double kRmsNormEps = 1e-6;

// Elementwise primitives, mostly useful for composing test losses.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sum(const Var<T>& a);

// x[..., Din] * w[Din, Dout]. No bias.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w);

template <typename T>
Var<T> rms_norm(const Var<T>& x, const Var<T>& gain, double eps = kRmsNormEps);

// Splits the last axis into halves (a, b) and returns silu(a) * b.
template <typename T>
Var<T> silu_gate(const Var<T>& h);

// Hidden width F for feature width D: 8D/3 rounded up to a multiple of 8.
int swiglu_hidden(int width);

template <typename T>
Var<T> swiglu(const Var<T>& x, const Var<T>& w_in, const Var<T>& w_out);

template <typename T>
struct AttentionParams {
  Var<T> qkv;  // [D, 3D], columns ordered query | key | value
  Var<T> out;  // [D, D]
  int num_heads = 1;
};

// Multi-head softmax attention core over one axis of a [B, I, K, 3D] (or
// [I, K, 3D]) projection. Returns the concatenated head outputs [.., D]
// before the output projection.
template <typename T>
Var<T> attention_core(const Var<T>& qkv, AttentionAxis axis, int num_heads, const RopeSpec& rope);

// Full self-attention sublayer along `axis` of h [B, I, K, D] (or [I, K, D]).
template <typename T>
Var<T> attention_along_axis(const Var<T>& h, AttentionAxis axis, const AttentionParams<T>& params,
                            const RopeSpec& rope);

// Rotary encodings on a [heads, I, head_dim] tensor.
template <typename T>
Tensor<T> apply_rope2d(const Tensor<T>& x, int grid_width, double base = 10000.0);
template <typename T>
Tensor<T> apply_rope1d(const Tensor<T>& x, double base = 10000.0);

// logit(.., i, k) = w . y(.., i, k, :) + b for y [.., I, K, D].
template <typename T>
Var<T> decode_logits(const Var<T>& y, const Var<T>& w, const Var<T>& b);

// Vanilla output head: y [.., I, 1, D] -> [.., I, Kout] via w [D, Kout] and b [Kout].
template <typename T>
Var<T> linear_head(const Var<T>& y, const Var<T>& w, const Var<T>& b);

// Mean over unmasked rows of -log softmax(logits)[target]. logits is
// [.., K]; targets and mask hold one entry per row. mask[r] != 0 includes the row.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& targets,
                             const std::vector<std::uint8_t>& mask);

// Row-wise softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax_last_axis(const Tensor<T>& logits);

}  // namespace serrm

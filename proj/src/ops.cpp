#include "serrm/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace serrm {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
int last_dim(const Tensor<T>& t) {
  require(t.rank() >= 1, "expected a tensor of rank >= 1");
  return t.dim(-1);
}

template <typename T>
void accumulate(Node<T>& target, const T* src) {
  if (!target.requires_grad) return;
  Tensor<T>& g = target.ensure_grad();
  T* dst = g.data();
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

// Angle tables for rotary encodings: cos/sin per (sequence index, pair).
template <typename T>
struct RopeTable {
  int pairs = 0;
  std::vector<T> cos;
  std::vector<T> sin;
};

template <typename T>
RopeTable<T> make_rope_table(const RopeSpec& rope, int length, int head_dim) {
  RopeTable<T> table;
  table.pairs = head_dim / 2;
  table.cos.assign(static_cast<std::size_t>(length) * table.pairs, T(1));
  table.sin.assign(static_cast<std::size_t>(length) * table.pairs, T(0));
  if (rope.mode == RopeMode::none) return table;
  require(head_dim % 2 == 0, "rotary encodings need an even head_dim");
  if (rope.mode == RopeMode::rope2d) {
    require(head_dim % 4 == 0, "rope2d needs head_dim divisible by 4, got " + std::to_string(head_dim));
    require(rope.grid_width > 0, "rope2d needs a positive grid_width");
  }
  for (int p = 0; p < length; ++p) {
    for (int j = 0; j < table.pairs; ++j) {
      double angle = 0.0;
      if (rope.mode == RopeMode::rope1d) {
        angle = p * std::pow(rope.base, -2.0 * j / head_dim);
      } else {
        const int half = head_dim / 2;
        const int quarter = head_dim / 4;
        const int row = p / rope.grid_width;
        const int col = p % rope.grid_width;
        const int jj = j < quarter ? j : j - quarter;
        const double freq = std::pow(rope.base, -2.0 * jj / half);
        angle = (j < quarter ? row : col) * freq;
      }
      table.cos[static_cast<std::size_t>(p) * table.pairs + j] = static_cast<T>(std::cos(angle));
      table.sin[static_cast<std::size_t>(p) * table.pairs + j] = static_cast<T>(std::sin(angle));
    }
  }
  return table;
}

// Rotates interleaved pairs (x[2j], x[2j+1]) by the tabulated angles of
// sequence index p; inverse rotates by the negated angles.
template <typename T>
void rotate_pairs(T* x, const RopeTable<T>& table, int p, bool inverse) {
  const T* c = table.cos.data() + static_cast<std::size_t>(p) * table.pairs;
  const T* s = table.sin.data() + static_cast<std::size_t>(p) * table.pairs;
  for (int j = 0; j < table.pairs; ++j) {
    const T x0 = x[2 * j];
    const T x1 = x[2 * j + 1];
    const T sn = inverse ? -s[j] : s[j];
    x[2 * j] = x0 * c[j] - x1 * sn;
    x[2 * j + 1] = x0 * sn + x1 * c[j];
  }
}

// [B, I, K, C] or [I, K, C] viewed as (batch, positions, symbols, channels).
struct AxisLayout {
  int batch = 1;
  int positions = 1;
  int symbols = 1;
  int channels = 1;
};

template <typename T>
AxisLayout axis_layout(const Tensor<T>& t, const char* op) {
  AxisLayout l;
  if (t.rank() == 4) {
    l = {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  } else if (t.rank() == 3) {
    l = {1, t.dim(0), t.dim(1), t.dim(2)};
  } else {
    throw std::invalid_argument(std::string(op) + ": expected [B,I,K,C] or [I,K,C], got " + shape_str(t.shape()));
  }
  return l;
}

template <typename T>
Tensor<T> rope_heads(const Tensor<T>& x, const RopeSpec& rope) {
  require(x.rank() == 3, "rotary input must be [heads, I, head_dim], got " + shape_str(x.shape()));
  const int heads = x.dim(0);
  const int n = x.dim(1);
  const int hd = x.dim(2);
  if (rope.mode == RopeMode::rope2d) {
    require(hd % 4 == 0, "rope2d needs head_dim divisible by 4, got " + std::to_string(hd));
  }
  require(hd % 2 == 0, "rotary encodings need an even head_dim");
  const RopeTable<T> table = make_rope_table<T>(rope, n, hd);
  Tensor<T> out = x;
  for (int h = 0; h < heads; ++h) {
    for (int p = 0; p < n; ++p) {
      rotate_pairs(out.data() + (static_cast<std::size_t>(h) * n + p) * hd, table, p, false);
    }
  }
  return out;
}

}  // namespace

std::string to_string(RopeMode mode) {
  switch (mode) {
    case RopeMode::none:
      return "none";
    case RopeMode::rope1d:
      return "rope1d";
    case RopeMode::rope2d:
      return "rope2d";
  }
  return "none";
}

RopeMode parse_rope_mode(const std::string& s) {
  if (s == "none") return RopeMode::none;
  if (s == "rope1d") return RopeMode::rope1d;
  if (s == "rope2d") return RopeMode::rope2d;
  throw std::invalid_argument("unknown rope mode '" + s + "'");
}

int swiglu_hidden(int width) {
  require(width >= 1, "swiglu width must be positive");
  const int raw = (8 * width + 2) / 3;  // ceil(8D/3)
  return ((raw + 7) / 8) * 8;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor<T> out = a->value;
  const T* pb = b->value.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad.data());
    accumulate(*self.inputs[1], self.grad.data());
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& x = *self.inputs[0];
    Node<T>& y = *self.inputs[1];
    const std::size_t n = self.grad.size();
    if (x.requires_grad) {
      Tensor<T>& g = x.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      Tensor<T>& g = y.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a->value.values()) total += v;
  return make_result<T>(Tensor<T>(Shape{}, std::vector<T>{total}), {a}, [](Node<T>& self) {
    Node<T>& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor<T>& g = x.ensure_grad();
    const T s = self.grad[0];
    for (auto& v : g.values()) v += s;
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w) {
  require(w->value.rank() == 2, "linear: weight must be rank 2, got " + shape_str(w->value.shape()));
  const int din = w->value.dim(0);
  const int dout = w->value.dim(1);
  require(last_dim(x->value) == din, "linear: input " + shape_str(x->value.shape()) + " does not match weight " +
                                         shape_str(w->value.shape()));
  const int rows = static_cast<int>(x->value.size() / static_cast<std::size_t>(din));
  Shape shape = x->value.shape();
  shape.back() = dout;
  auto out = Tensor<T>::uninitialized(shape);
  MatMap<T>(out.data(), rows, dout).noalias() =
      ConstMatMap<T>(x->value.data(), rows, din) * ConstMatMap<T>(w->value.data(), din, dout);
  return make_result<T>(std::move(out), {x, w}, [rows, din, dout](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    Node<T>& wn = *self.inputs[1];
    ConstMatMap<T> dy(self.grad.data(), rows, dout);
    if (xn.requires_grad) {
      MatMap<T>(xn.ensure_grad().data(), rows, din).noalias() +=
          dy * ConstMatMap<T>(wn.value.data(), din, dout).transpose();
    }
    if (wn.requires_grad) {
      MatMap<T>(wn.ensure_grad().data(), din, dout).noalias() +=
          ConstMatMap<T>(xn.value.data(), rows, din).transpose() * dy;
    }
  });
}

template <typename T>
Var<T> rms_norm(const Var<T>& x, const Var<T>& gain, double eps) {
  require(gain->value.rank() == 1, "rms_norm: gain must be a vector");
  const int d = gain->value.dim(0);
  require(d >= 1 && last_dim(x->value) == d, "rms_norm: trailing axis of " + shape_str(x->value.shape()) +
                                                 " does not match gain length " + std::to_string(d));
  const std::size_t rows = x->value.size() / static_cast<std::size_t>(d);
  auto out = Tensor<T>::uninitialized(x->value.shape());
  std::vector<T> inv(rows);
  const T* px = x->value.data();
  const T* g = gain->value.data();
  T* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T ms = 0;
    for (int j = 0; j < d; ++j) ms += xr[j] * xr[j];
    ms /= static_cast<T>(d);
    const T ir = T(1) / std::sqrt(ms + static_cast<T>(eps));
    inv[r] = ir;
    for (int j = 0; j < d; ++j) po[r * d + j] = xr[j] * ir * g[j];
  }
  return make_result<T>(std::move(out), {x, gain}, [rows, d, inv = std::move(inv)](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    Node<T>& gn = *self.inputs[1];
    const T* px = xn.value.data();
    const T* g = gn.value.data();
    const T* dy = self.grad.data();
    T* dx = xn.requires_grad ? xn.ensure_grad().data() : nullptr;
    T* dg = gn.requires_grad ? gn.ensure_grad().data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = px + r * d;
      const T* dyr = dy + r * d;
      const T ir = inv[r];
      if (dg) {
        for (int j = 0; j < d; ++j) dg[j] += dyr[j] * xr[j] * ir;
      }
      if (dx) {
        T dot = 0;
        for (int j = 0; j < d; ++j) dot += dyr[j] * g[j] * xr[j];
        const T coef = ir * ir * ir * dot / static_cast<T>(d);
        for (int j = 0; j < d; ++j) dx[r * d + j] += ir * g[j] * dyr[j] - xr[j] * coef;
      }
    }
  });
}

template <typename T>
Var<T> silu_gate(const Var<T>& h) {
  const int two_f = last_dim(h->value);
  require(two_f % 2 == 0, "silu_gate: last axis must be even");
  const int f = two_f / 2;
  const std::size_t rows = h->value.size() / static_cast<std::size_t>(two_f);
  Shape shape = h->value.shape();
  shape.back() = f;
  auto out = Tensor<T>::uninitialized(shape);
  using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  const auto r_ = static_cast<Eigen::Index>(rows);
  const T* ph = h->value.data();
  Eigen::Map<const Arr, 0, Stride> a(ph, r_, f, Stride(two_f));
  Eigen::Map<const Arr, 0, Stride> b(ph + f, r_, f, Stride(two_f));
  Eigen::Map<Arr>(out.data(), r_, f) = a * (T(1) + (-a).exp()).inverse() * b;
  return make_result<T>(std::move(out), {h}, [r_, f, two_f](Node<T>& self) {
    Node<T>& hn = *self.inputs[0];
    if (!hn.requires_grad) return;
    T* dh = hn.ensure_grad().data();
    const T* ph = hn.value.data();
    Eigen::Map<const Arr, 0, Stride> a(ph, r_, f, Stride(two_f));
    Eigen::Map<const Arr, 0, Stride> b(ph + f, r_, f, Stride(two_f));
    Eigen::Map<const Arr> dy(self.grad.data(), r_, f);
    Eigen::Map<Arr, 0, Stride> da(dh, r_, f, Stride(two_f));
    Eigen::Map<Arr, 0, Stride> db(dh + f, r_, f, Stride(two_f));
    const Arr sig = (T(1) + (-a).exp()).inverse();
    da += dy * b * sig * (T(1) + a * (T(1) - sig));
    db += dy * a * sig;
  });
}

template <typename T>
Var<T> swiglu(const Var<T>& x, const Var<T>& w_in, const Var<T>& w_out) {
  require(w_in->value.rank() == 2 && w_out->value.rank() == 2, "swiglu: weights must be rank 2");
  const int d = last_dim(x->value);
  require(w_in->value.dim(0) == d && w_in->value.dim(1) % 2 == 0, "swiglu: w_in must be [D, 2F]");
  const int f = w_in->value.dim(1) / 2;
  require(w_out->value.dim(0) == f && w_out->value.dim(1) == d, "swiglu: w_out must be [F, D]");
  return linear(silu_gate(linear(x, w_in)), w_out);
}

template <typename T>
Var<T> attention_core(const Var<T>& qkv, AttentionAxis axis, int num_heads, const RopeSpec& rope) {
  const AxisLayout l = axis_layout(qkv->value, "attention");
  require(num_heads >= 1, "attention: num_heads must be positive");
  require(l.channels % 3 == 0, "attention: projection width must be 3D");
  const int d = l.channels / 3;
  require(d % num_heads == 0, "attention: D=" + std::to_string(d) + " not divisible by " +
                                  std::to_string(num_heads) + " heads");
  if (axis == AttentionAxis::symbol && rope.mode != RopeMode::none) {
    throw std::invalid_argument("attention: rotary encodings are not allowed along the symbol axis");
  }
  const int hd = d / num_heads;
  const bool positional = axis == AttentionAxis::position;
  const int n = positional ? l.positions : l.symbols;
  const int seqs = positional ? l.batch * l.symbols : l.batch * l.positions;
  const int stride = positional ? l.symbols : 1;  // token stride along the sequence
  const bool use_rope = positional && rope.mode != RopeMode::none;
  RopeTable<T> table;
  if (use_rope) table = make_rope_table<T>(rope, n, hd);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  auto seq_base = [=](int s) -> std::size_t {
    if (positional) {
      const int b = s / l.symbols;
      const int k = s % l.symbols;
      return static_cast<std::size_t>(b) * l.positions * l.symbols + k;
    }
    return static_cast<std::size_t>(s) * l.symbols;
  };

  Shape out_shape = qkv->value.shape();
  out_shape.back() = d;
  auto out = Tensor<T>::uninitialized(out_shape);
  std::vector<T> probs(static_cast<std::size_t>(seqs) * num_heads * n * n);

  RowMat<T> q(n, hd), k(n, hd), v(n, hd), scores(n, n);
  const T* src = qkv->value.data();
  const int c3 = 3 * d;
  for (int s = 0; s < seqs; ++s) {
    const std::size_t base = seq_base(s);
    for (int h = 0; h < num_heads; ++h) {
      for (int j = 0; j < n; ++j) {
        const T* tok = src + (base + static_cast<std::size_t>(j) * stride) * c3 + h * hd;
        std::copy(tok, tok + hd, &q(j, 0));
        std::copy(tok + d, tok + d + hd, &k(j, 0));
        std::copy(tok + 2 * d, tok + 2 * d + hd, &v(j, 0));
        if (use_rope) {
          rotate_pairs(&q(j, 0), table, j, false);
          rotate_pairs(&k(j, 0), table, j, false);
        }
      }
      scores.noalias() = (q * k.transpose()) * scale;
      scores.colwise() -= scores.rowwise().maxCoeff();
      scores = scores.array().exp().matrix();
      scores.array().colwise() /= scores.rowwise().sum().array();
      std::copy(scores.data(), scores.data() + static_cast<std::size_t>(n) * n,
                probs.data() + (static_cast<std::size_t>(s) * num_heads + h) * n * n);
      for (int j = 0; j < n; ++j) {
        T* o = out.data() + (base + static_cast<std::size_t>(j) * stride) * d + h * hd;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(o, hd).noalias() = scores.row(j) * v;
      }
    }
  }

  auto backward = [=, probs = std::move(probs), table = std::move(table)](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dsrc = in.ensure_grad().data();
    const T* src = in.value.data();
    RowMat<T> q(n, hd), k(n, hd), v(n, hd), dout(n, hd), dp(n, n), ds(n, n), dq(n, hd), dk(n, hd), dv(n, hd);
    for (int s = 0; s < seqs; ++s) {
      const std::size_t base = seq_base(s);
      for (int h = 0; h < num_heads; ++h) {
        for (int j = 0; j < n; ++j) {
          const std::size_t tok_index = base + static_cast<std::size_t>(j) * stride;
          const T* tok = src + tok_index * c3 + h * hd;
          std::copy(tok, tok + hd, &q(j, 0));
          std::copy(tok + d, tok + d + hd, &k(j, 0));
          std::copy(tok + 2 * d, tok + 2 * d + hd, &v(j, 0));
          if (use_rope) {
            rotate_pairs(&q(j, 0), table, j, false);
            rotate_pairs(&k(j, 0), table, j, false);
          }
          const T* g = self.grad.data() + tok_index * d + h * hd;
          std::copy(g, g + hd, &dout(j, 0));
        }
        ConstMatMap<T> p(probs.data() + (static_cast<std::size_t>(s) * num_heads + h) * n * n, n, n);
        dp.noalias() = dout * v.transpose();
        dv.noalias() = p.transpose() * dout;
        for (int r = 0; r < n; ++r) {
          const T dot = p.row(r).dot(dp.row(r));
          for (int c = 0; c < n; ++c) ds(r, c) = p(r, c) * (dp(r, c) - dot);
        }
        dq.noalias() = (ds * k) * scale;
        dk.noalias() = (ds.transpose() * q) * scale;
        for (int j = 0; j < n; ++j) {
          if (use_rope) {
            rotate_pairs(&dq(j, 0), table, j, true);
            rotate_pairs(&dk(j, 0), table, j, true);
          }
          T* g = dsrc + (base + static_cast<std::size_t>(j) * stride) * c3 + h * hd;
          for (int e = 0; e < hd; ++e) {
            g[e] += dq(j, e);
            g[d + e] += dk(j, e);
            g[2 * d + e] += dv(j, e);
          }
        }
      }
    }
  };
  return make_result<T>(std::move(out), {qkv}, std::move(backward));
}

template <typename T>
Var<T> attention_along_axis(const Var<T>& h, AttentionAxis axis, const AttentionParams<T>& params,
                            const RopeSpec& rope) {
  const int d = last_dim(h->value);
  require(params.qkv->value.shape() == Shape({d, 3 * d}), "attention: qkv projection must be [D, 3D]");
  require(params.out->value.shape() == Shape({d, d}), "attention: output projection must be [D, D]");
  return linear(attention_core(linear(h, params.qkv), axis, params.num_heads, rope), params.out);
}

template <typename T>
Tensor<T> apply_rope2d(const Tensor<T>& x, int grid_width, double base) {
  return rope_heads(x, RopeSpec{RopeMode::rope2d, base, grid_width});
}

template <typename T>
Tensor<T> apply_rope1d(const Tensor<T>& x, double base) {
  return rope_heads(x, RopeSpec{RopeMode::rope1d, base, 0});
}

template <typename T>
Var<T> decode_logits(const Var<T>& y, const Var<T>& w, const Var<T>& b) {
  const int d = last_dim(y->value);
  require(y->value.rank() >= 2, "decode_logits: y must have a feature axis");
  require(w->value.shape() == Shape({d}), "decode_logits: w must have length D=" + std::to_string(d));
  require(b->value.size() == 1, "decode_logits: b must be a scalar");
  Shape shape(y->value.shape().begin(), y->value.shape().end() - 1);
  const std::size_t rows = y->value.size() / static_cast<std::size_t>(d);
  auto out = Tensor<T>::uninitialized(shape);
  MatMap<T>(out.data(), static_cast<Eigen::Index>(rows), 1).noalias() =
      ConstMatMap<T>(y->value.data(), static_cast<Eigen::Index>(rows), d) * ConstMatMap<T>(w->value.data(), d, 1);
  const T bias = b->value[0];
  for (auto& v : out.values()) v += bias;
  return make_result<T>(std::move(out), {y, w, b}, [rows, d](Node<T>& self) {
    Node<T>& yn = *self.inputs[0];
    Node<T>& wn = *self.inputs[1];
    Node<T>& bn = *self.inputs[2];
    const auto r = static_cast<Eigen::Index>(rows);
    ConstMatMap<T> dl(self.grad.data(), r, 1);
    if (yn.requires_grad) {
      MatMap<T>(yn.ensure_grad().data(), r, d).noalias() += dl * ConstMatMap<T>(wn.value.data(), d, 1).transpose();
    }
    if (wn.requires_grad) {
      MatMap<T>(wn.ensure_grad().data(), d, 1).noalias() += ConstMatMap<T>(yn.value.data(), r, d).transpose() * dl;
    }
    if (bn.requires_grad) {
      T total = 0;
      for (T v : self.grad.values()) total += v;
      bn.ensure_grad()[0] += total;
    }
  });
}

template <typename T>
Var<T> linear_head(const Var<T>& y, const Var<T>& w, const Var<T>& b) {
  require(y->value.rank() >= 2 && y->value.dim(-2) == 1, "linear_head: expected [.., I, 1, D], got " +
                                                             shape_str(y->value.shape()));
  require(w->value.rank() == 2 && b->value.rank() == 1 && b->value.dim(0) == w->value.dim(1),
          "linear_head: expected w [D, K] and b [K]");
  const int kout = w->value.dim(1);
  Var<T> proj = linear(y, w);
  Shape shape(y->value.shape().begin(), y->value.shape().end() - 2);
  shape.push_back(kout);
  const std::size_t rows = proj->value.size() / static_cast<std::size_t>(kout);
  Tensor<T> out = proj->value.reshaped(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < kout; ++c) out[r * kout + c] += b->value[c];
  }
  return make_result<T>(std::move(out), {proj, b}, [rows, kout](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad.data());
    Node<T>& bn = *self.inputs[1];
    if (!bn.requires_grad) return;
    Tensor<T>& g = bn.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (int c = 0; c < kout; ++c) g[c] += self.grad[r * kout + c];
    }
  });
}

template <typename T>
Tensor<T> softmax_last_axis(const Tensor<T>& logits) {
  const int k = last_dim(logits);
  const std::size_t rows = logits.size() / static_cast<std::size_t>(k);
  auto out = Tensor<T>::uninitialized(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = logits.data() + r * k;
    T* o = out.data() + r * k;
    const T m = *std::max_element(x, x + k);
    T z = 0;
    for (int c = 0; c < k; ++c) {
      o[c] = std::exp(x[c] - m);
      z += o[c];
    }
    for (int c = 0; c < k; ++c) o[c] /= z;
  }
  return out;
}

template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& targets,
                             const std::vector<std::uint8_t>& mask) {
  const int k = last_dim(logits->value);
  const std::size_t rows = logits->value.size() / static_cast<std::size_t>(k);
  require(targets.size() == rows, "cross_entropy: expected " + std::to_string(rows) + " targets, got " +
                                      std::to_string(targets.size()));
  require(mask.empty() || mask.size() == rows, "cross_entropy: mask length mismatch");
  Tensor<T> probs = softmax_last_axis(logits->value);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask.empty() && mask[r] == 0) continue;
    const int t = targets[r];
    if (t < 0 || t >= k) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                                  std::to_string(k) + ")");
    }
    const T* x = logits->value.data() + r * k;
    const T m = *std::max_element(x, x + k);
    T z = 0;
    for (int c = 0; c < k; ++c) z += std::exp(x[c] - m);
    total += static_cast<double>(std::log(z) - (x[t] - m));
    ++count;
  }
  require(count > 0, "cross_entropy: every position is masked");
  Tensor<T> out(Shape{}, std::vector<T>{static_cast<T>(total / static_cast<double>(count))});
  return make_result<T>(std::move(out), {logits},
                        [k, rows, count, targets, mask, probs = std::move(probs)](Node<T>& self) {
                          Node<T>& ln = *self.inputs[0];
                          if (!ln.requires_grad) return;
                          T* g = ln.ensure_grad().data();
                          const T scale = self.grad[0] / static_cast<T>(count);
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (!mask.empty() && mask[r] == 0) continue;
                            for (int c = 0; c < k; ++c) {
                              const T onehot = c == targets[r] ? T(1) : T(0);
                              g[r * k + c] += scale * (probs[r * k + c] - onehot);
                            }
                          }
                        });
}

#define SERRM_INSTANTIATE_OPS(T)                                                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> sum(const Var<T>&);                                                                      \
  template Var<T> linear(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> rms_norm(const Var<T>&, const Var<T>&, double);                                          \
  template Var<T> silu_gate(const Var<T>&);                                                                \
  template Var<T> swiglu(const Var<T>&, const Var<T>&, const Var<T>&);                                     \
  template Var<T> attention_core(const Var<T>&, AttentionAxis, int, const RopeSpec&);                      \
  template Var<T> attention_along_axis(const Var<T>&, AttentionAxis, const AttentionParams<T>&,            \
                                       const RopeSpec&);                                                   \
  template Tensor<T> apply_rope2d(const Tensor<T>&, int, double);                                          \
  template Tensor<T> apply_rope1d(const Tensor<T>&, double);                                               \
  template Var<T> decode_logits(const Var<T>&, const Var<T>&, const Var<T>&);                              \
  template Var<T> linear_head(const Var<T>&, const Var<T>&, const Var<T>&);                                \
  template Var<T> softmax_cross_entropy(const Var<T>&, const std::vector<int>&,                            \
                                        const std::vector<std::uint8_t>&);                                 \
  template Tensor<T> softmax_last_axis(const Tensor<T>&);

SERRM_INSTANTIATE_OPS(float)
SERRM_INSTANTIATE_OPS(double)

#undef SERRM_INSTANTIATE_OPS

}  // namespace serrm

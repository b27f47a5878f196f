#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "satfuse/error.hpp"
#include "satfuse/nn/tensor.hpp"
#include "satfuse/rng.hpp"

namespace satfuse::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

enum class Mode { Train, Infer };
enum class Padding { Valid, Same };

/// Batch parallelism for the convolution kernels. With `ordered`, weight and
/// bias gradients are summed sample by sample in index order, so results do
/// not depend on `threads`; otherwise each worker keeps its own partial sum.
struct Exec {
  int threads = 1;
  bool ordered = true;
};

/// A learnable tensor and its gradient, addressed by a stable name.
template <typename T>
struct Param {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

// ===========================================================================
// Convolution (NHWC, stride 1, cross-correlation)
// ===========================================================================

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout, out_h, out_w, pad_top, pad_left;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernels, Padding padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cin = input.dim(3);
  g.kh = kernels.dim(0);
  g.kw = kernels.dim(1);
  g.cout = kernels.dim(3);
  require(kernels.dim(2) == g.cin, ErrorKind::Argument,
          "conv2d: kernel expects " + std::to_string(kernels.dim(2)) + " input channels, input has " +
              std::to_string(g.cin));
  if (padding == Padding::Valid) {
    require(g.kh <= g.h && g.kw <= g.w, ErrorKind::Argument, "conv2d: kernel larger than input");
    g.out_h = g.h - g.kh + 1;
    g.out_w = g.w - g.kw + 1;
  } else {
    g.out_h = g.h;
    g.out_w = g.w;
    g.pad_top = (g.kh - 1) / 2;
    g.pad_left = (g.kw - 1) / 2;
  }
  return g;
}

namespace detail {

/// Row r = output pixel, column (ky*kw + kx)*cin + ci.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t k = g.kh * g.kw * g.cin;
  for (std::size_t oy = 0; oy < g.out_h; ++oy)
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* row = col + (oy * g.out_w + ox) * k;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
          T* dst = row + (ky * g.kw + kx) * g.cin;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) || ix >= static_cast<std::ptrdiff_t>(g.w)) {
            std::fill(dst, dst + g.cin, T{0});
          } else {
            const T* src = x + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
            std::copy(src, src + g.cin, dst);
          }
        }
      }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t k = g.kh * g.kw * g.cin;
  for (std::size_t oy = 0; oy < g.out_h; ++oy)
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* row = col + (oy * g.out_w + ox) * k;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const T* src = row + (ky * g.kw + kx) * g.cin;
          T* dst = dx + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
          for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
}

/// Runs work(worker, begin, end) over contiguous blocks of [0, n).
template <typename F>
void parallel_blocks(std::size_t n, int threads, F&& work) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    work(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  const std::size_t block = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block, end = std::min(n, begin + block);
    if (begin < end) pool.emplace_back([&work, w, begin, end] { work(w, begin, end); });
  }
  for (auto& t : pool) t.join();
}

inline std::size_t worker_count(std::size_t n, int threads) {
  return std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(n, 1));
}

}  // namespace detail

/// input N x H x W x Cin, kernels kh x kw x Cin x Cout, bias Cout.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                         Padding padding = Padding::Valid, Exec exec = {}) {
  const auto g = conv_geometry(input, kernels, padding);
  require(bias.size() == g.cout, ErrorKind::Argument, "conv2d: bias length does not match output channels");
  const std::size_t k = g.kh * g.kw * g.cin;
  const std::size_t pixels = g.out_h * g.out_w;
  Tensor<T> out({g.n, g.out_h, g.out_w, g.cout});
  ConstMatrixMap<T> wmat(kernels.data(), k, g.cout);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), g.cout);
  detail::parallel_blocks(g.n, exec.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    AlignedVector<T> col(pixels * k);
    for (std::size_t s = begin; s < end; ++s) {
      detail::im2col(input.data() + s * g.h * g.w * g.cin, g, col.data());
      MatrixMap<T> y(out.data() + s * pixels * g.cout, pixels, g.cout);
      y.noalias() = ConstMatrixMap<T>(col.data(), pixels, k) * wmat;
      y.rowwise() += b;
    }
  });
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& upstream, const Tensor<T>& input, const Tensor<T>& kernels,
                             Padding padding = Padding::Valid, Exec exec = {}) {
  const auto g = conv_geometry(input, kernels, padding);
  require(upstream.shape() == Shape{g.n, g.out_h, g.out_w, g.cout}, ErrorKind::Argument,
          "conv2d_backward: upstream gradient shape " + shape_string(upstream.shape()) + " does not match forward");
  const std::size_t k = g.kh * g.kw * g.cin;
  const std::size_t pixels = g.out_h * g.out_w;
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), Tensor<T>({g.cout})};
  ConstMatrixMap<T> wmat(kernels.data(), k, g.cout);
  // Ordered: one partial per sample. Unordered: one partial per worker.
  const std::size_t slots = exec.ordered ? g.n : detail::worker_count(g.n, exec.threads);
  AlignedVector<T> part_w(slots * k * g.cout, T{0}), part_b(slots * g.cout, T{0});
  detail::parallel_blocks(g.n, exec.threads, [&](std::size_t worker, std::size_t begin, std::size_t end) {
    AlignedVector<T> col(pixels * k), dcol(pixels * k);
    for (std::size_t s = begin; s < end; ++s) {
      const std::size_t slot = exec.ordered ? s : worker;
      detail::im2col(input.data() + s * g.h * g.w * g.cin, g, col.data());
      ConstMatrixMap<T> dy(upstream.data() + s * pixels * g.cout, pixels, g.cout);
      MatrixMap<T> pw(part_w.data() + slot * k * g.cout, k, g.cout);
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> pb(part_b.data() + slot * g.cout, g.cout);
      if (exec.ordered) {
        pw.noalias() = ConstMatrixMap<T>(col.data(), pixels, k).transpose() * dy;
        pb = dy.colwise().sum();
      } else {
        pw.noalias() += ConstMatrixMap<T>(col.data(), pixels, k).transpose() * dy;
        pb += dy.colwise().sum();
      }
      MatrixMap<T>(dcol.data(), pixels, k).noalias() = dy * wmat.transpose();
      detail::col2im_add(dcol.data(), g, grads.input.data() + s * g.h * g.w * g.cin);
    }
  });
  T* dw = grads.kernels.data();
  T* db = grads.bias.data();
  for (std::size_t s = 0; s < slots; ++s) {
    for (std::size_t i = 0; i < k * g.cout; ++i) dw[i] += part_w[s * k * g.cout + i];
    for (std::size_t i = 0; i < g.cout; ++i) db[i] += part_b[s * g.cout + i];
  }
  return grads;
}

// ===========================================================================
// Dense
// ===========================================================================

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  require_rank(x, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = weights.dim(1);
  require(weights.dim(0) == din, ErrorKind::Argument,
          "dense: input width " + std::to_string(din) + " does not match weights " + shape_string(weights.shape()));
  require(bias.size() == dout, ErrorKind::Argument, "dense: bias length does not match output width");
  Tensor<T> y({n, dout});
  MatrixMap<T> ym(y.data(), n, dout);
  ym.noalias() = ConstMatrixMap<T>(x.data(), n, din) * ConstMatrixMap<T>(weights.data(), din, dout);
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), dout);
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& upstream, const Tensor<T>& x, const Tensor<T>& weights) {
  const std::size_t n = x.dim(0), din = x.dim(1), dout = weights.dim(1);
  require(upstream.shape() == Shape{n, dout}, ErrorKind::Argument, "dense_backward: upstream shape mismatch");
  DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weights.shape()), Tensor<T>({dout})};
  ConstMatrixMap<T> dy(upstream.data(), n, dout);
  MatrixMap<T>(g.weights.data(), din, dout).noalias() = ConstMatrixMap<T>(x.data(), n, din).transpose() * dy;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.data(), dout) = dy.colwise().sum();
  MatrixMap<T>(g.input.data(), n, din).noalias() = dy * ConstMatrixMap<T>(weights.data(), din, dout).transpose();
  return g;
}

// ===========================================================================
// Elementwise / routing layers
// ===========================================================================

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* __restrict src = x.data();
  T* __restrict dst = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = std::max(src[i], T{0});
  return y;
}

/// Subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& upstream, const Tensor<T>& x) {
  require(upstream.shape() == x.shape(), ErrorKind::Argument, "relu_backward: shape mismatch");
  Tensor<T> dx(x.shape());
  const T* __restrict up = upstream.data();
  const T* __restrict in = x.data();
  T* __restrict dst = dx.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = in[i] > T{0} ? up[i] : T{0};
  return dx;
}

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major window order.
template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& x) {
  require_rank(x, 4, "maxpool input");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::Argument,
          "maxpool2: spatial dims must be even, got " + shape_string(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{Tensor<T>({n, oh, ow, c}), std::vector<std::uint32_t>(n * oh * ow * c)};
  std::size_t o = 0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = ((s * h + 2 * oy) * w + 2 * ox) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((s * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          r.output[o] = x[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& upstream, const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape) {
  require(upstream.size() == argmax.size(), ErrorKind::Argument, "maxpool2_backward: cache does not match gradient");
  Tensor<T> dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += upstream[o];
  return dx;
}

/// Inverted dropout. In training mode each unit is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); `mask` receives that factor
/// per unit. Inference mode and rate 0 are exact identities.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng, std::vector<T>* mask = nullptr) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::Argument, "dropout rate must lie in [0,1)");
  if (mode == Mode::Infer || rate == 0.0) {
    if (mask) mask->assign(x.size(), T{1});
    return x;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> y(x.shape());
  std::vector<T> local;
  std::vector<T>& m = mask ? *mask : local;
  m.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.uniform() < rate ? T{0} : scale;
    y[i] = x[i] * m[i];
  }
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& upstream, const std::vector<T>& mask) {
  require(upstream.size() == mask.size(), ErrorKind::Argument, "dropout_backward: mask does not match gradient");
  Tensor<T> dx(upstream.shape());
  const T* __restrict up = upstream.data();
  const T* __restrict m = mask.data();
  T* __restrict dst = dx.data();
  for (std::size_t i = 0; i < mask.size(); ++i) dst[i] = up[i] * m[i];
  return dx;
}

// ===========================================================================
// Batch normalization over the feature axis of an N x D batch
// ===========================================================================

template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta, running_mean, running_var;
  Tensor<T> grad_gamma, grad_beta;
  double momentum = 0.99;
  double epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t d, double momentum_ = 0.99, double epsilon_ = 1e-5)
      : gamma({d}, T{1}),
        beta({d}, T{0}),
        running_mean({d}, T{0}),
        running_var({d}, T{1}),
        grad_gamma({d}),
        grad_beta({d}),
        momentum(momentum_),
        epsilon(epsilon_) {}
};

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};

/// Training mode normalizes with the (biased) batch statistics and folds them
/// into the running averages; inference mode uses the running statistics only.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& st, Mode mode, BatchNormCache<T>* cache = nullptr) {
  require_rank(x, 2, "batchnorm input");
  const std::size_t n = x.dim(0), d = x.dim(1);
  require(st.gamma.size() == d, ErrorKind::Argument, "batchnorm: feature width does not match state");
  Tensor<T> y(x.shape());
  if (mode == Mode::Infer) {
    for (std::size_t j = 0; j < d; ++j) {
      const T inv = T{1} / std::sqrt(st.running_var[j] + static_cast<T>(st.epsilon));
      for (std::size_t i = 0; i < n; ++i)
        y[i * d + j] = st.gamma[j] * (x[i * d + j] - st.running_mean[j]) * inv + st.beta[j];
    }
    return y;
  }
  require(n >= 2, ErrorKind::Argument, "batchnorm: training mode needs a batch of at least 2");
  BatchNormCache<T> local;
  BatchNormCache<T>& c = cache ? *cache : local;
  c.x_hat = Tensor<T>(x.shape());
  c.inv_std.assign(d, T{0});
  const T mom = static_cast<T>(st.momentum);
  for (std::size_t j = 0; j < d; ++j) {
    T mean{0};
    for (std::size_t i = 0; i < n; ++i) mean += x[i * d + j];
    mean /= static_cast<T>(n);
    T var{0};
    for (std::size_t i = 0; i < n; ++i) var += (x[i * d + j] - mean) * (x[i * d + j] - mean);
    var /= static_cast<T>(n);
    const T inv = T{1} / std::sqrt(var + static_cast<T>(st.epsilon));
    c.inv_std[j] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const T xh = (x[i * d + j] - mean) * inv;
      c.x_hat[i * d + j] = xh;
      y[i * d + j] = st.gamma[j] * xh + st.beta[j];
    }
    st.running_mean[j] = mom * st.running_mean[j] + (T{1} - mom) * mean;
    st.running_var[j] = mom * st.running_var[j] + (T{1} - mom) * var;
  }
  return y;
}

/// Writes d(gamma), d(beta) into the state and returns dx.
template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& upstream, BatchNormState<T>& st, const BatchNormCache<T>& c) {
  const std::size_t n = upstream.dim(0), d = upstream.dim(1);
  require(c.x_hat.shape() == upstream.shape(), ErrorKind::Argument, "batchnorm_backward: cache does not match gradient");
  Tensor<T> dx(upstream.shape());
  for (std::size_t j = 0; j < d; ++j) {
    T sum_dy{0}, sum_dy_xh{0};
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += upstream[i * d + j];
      sum_dy_xh += upstream[i * d + j] * c.x_hat[i * d + j];
    }
    st.grad_beta[j] = sum_dy;
    st.grad_gamma[j] = sum_dy_xh;
    const T k = st.gamma[j] * c.inv_std[j] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      dx[i * d + j] = k * (static_cast<T>(n) * upstream[i * d + j] - sum_dy - c.x_hat[i * d + j] * sum_dy_xh);
  }
  return dx;
}

// ===========================================================================
// Fusion
// ===========================================================================

/// [a | b] along the feature axis.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "concat lhs");
  require_rank(b, 2, "concat rhs");
  require(a.dim(0) == b.dim(0), ErrorKind::Argument, "concat: batch sizes differ");
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor<T> out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * da, da, out.data() + i * (da + db));
    std::copy_n(b.data() + i * db, db, out.data() + i * (da + db) + da);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& upstream, std::size_t da) {
  require_rank(upstream, 2, "concat gradient");
  const std::size_t n = upstream.dim(0), total = upstream.dim(1);
  require(da <= total, ErrorKind::Argument, "concat_backward: split point beyond width");
  const std::size_t db = total - da;
  Tensor<T> ga({n, da}), gb({n, db});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(upstream.data() + i * total, da, ga.data() + i * da);
    std::copy_n(upstream.data() + i * total + da, db, gb.data() + i * db);
  }
  return {std::move(ga), std::move(gb)};
}

// ===========================================================================
// Softmax cross-entropy
// ===========================================================================

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits, 2, "softmax input");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.data() + i * k;
    const T mx = *std::max_element(z, z + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) sum += (p[i * k + j] = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] /= sum;
  }
  return p;
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d logits
};

/// Mean over the batch of -log softmax(logits)[label]; gradient (softmax - onehot) / N.
template <typename T>
LossResult<T> softmax_ce(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_ce logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require(k >= 2, ErrorKind::Argument, "softmax_ce needs at least two classes");
  require(labels.size() == n, ErrorKind::Argument, "softmax_ce: label count does not match batch");
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < k, ErrorKind::Argument,
            "softmax_ce: label " + std::to_string(labels[i]) + " out of range");
    const T* z = logits.data() + i * k;
    const T mx = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    const double log_sum = std::log(sum);
    r.loss -= static_cast<double>(z[labels[i]] - mx) - log_sum;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(z[j] - mx) - log_sum);
      r.grad[i * k + j] = static_cast<T>((p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0)) / n);
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace satfuse::nn

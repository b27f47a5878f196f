#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "satfuse/config.hpp"
#include "satfuse/csv.hpp"
#include "satfuse/dataset.hpp"
#include "satfuse/error.hpp"
#include "satfuse/eval.hpp"
#include "satfuse/features.hpp"
#include "satfuse/io.hpp"
#include "satfuse/nn/adadelta.hpp"
#include "satfuse/nn/layers.hpp"
#include "satfuse/nn/tensor.hpp"
#include "satfuse/rng.hpp"

namespace satfuse::model {

using nn::Mode;
using nn::Padding;
using nn::Shape;
using nn::Tensor;

// ===========================================================================
// Configuration
// ===========================================================================

struct ModelConfig {
  int input_height = kPatchSize;
  int input_width = kPatchSize;
  int input_channels = kChannels;
  std::vector<int> conv_maps{32, 64};
  int kernel = 3;
  int pool = 2;
  Padding padding = Padding::Valid;
  double dropout_after_pool = 0.25;
  int fused_feature_width = 22;  // 0 disables fusion
  std::vector<int> dense_widths{32, 128};
  bool batchnorm = true;  // after the first dense layer
  double dropout_before_final = 0.2;
  int num_classes = 4;
  int batch_size = 128;
  int epochs = 20;
  std::uint64_t seed = 1;
  bool reproducible = true;  // batch-order gradient sums, independent of threads
  int threads = 1;           // batch-parallel convolution workers
  double adadelta_rho = 0.95;
  double adadelta_epsilon = 1e-6;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
    if (input_height <= 0 || input_width <= 0 || input_channels <= 0) fail("input dimensions must be positive");
    if (conv_maps.empty()) fail("conv_maps must list at least one layer");
    for (int m : conv_maps)
      if (m <= 0) fail("conv_maps entries must be positive");
    if (kernel <= 0) fail("kernel must be positive");
    if (pool != 2) fail("only 2x2 pooling is supported");
    if (dropout_after_pool < 0.0 || dropout_after_pool >= 1.0) fail("dropout_after_pool must lie in [0,1)");
    if (dropout_before_final < 0.0 || dropout_before_final >= 1.0) fail("dropout_before_final must lie in [0,1)");
    if (fused_feature_width < 0) fail("fused_feature_width must be >= 0");
    for (int w : dense_widths)
      if (w <= 0) fail("dense_widths entries must be positive");
    if (batchnorm && dense_widths.empty()) fail("batchnorm requires at least one hidden dense layer");
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (batch_size < 2) fail("batch_size must be >= 2");
    if (epochs < 0) fail("epochs must be >= 0");
    if (threads < 1) fail("threads must be >= 1");
    if (adadelta_rho <= 0.0 || adadelta_rho >= 1.0) fail("adadelta_rho must lie in (0,1)");
    if (adadelta_epsilon <= 0.0) fail("adadelta_epsilon must be positive");
    if (bn_momentum < 0.0 || bn_momentum >= 1.0) fail("bn_momentum must lie in [0,1)");
    if (bn_epsilon <= 0.0) fail("bn_epsilon must be positive");
    const auto [h, w] = conv_output_hw();
    if (h <= 0 || w <= 0) fail("input too small for the convolution stack");
    if (h % 2 || w % 2) fail("feature map before pooling must have even dimensions");
  }

  std::pair<int, int> conv_output_hw() const {
    int h = input_height, w = input_width;
    if (padding == Padding::Valid) {
      h -= static_cast<int>(conv_maps.size()) * (kernel - 1);
      w -= static_cast<int>(conv_maps.size()) * (kernel - 1);
    }
    return {h, w};
  }

  std::size_t bottleneck_width() const {
    const auto [h, w] = conv_output_hw();
    return static_cast<std::size_t>(h / 2) * static_cast<std::size_t>(w / 2) * static_cast<std::size_t>(conv_maps.back());
  }
  std::size_t fused_width() const { return bottleneck_width() + static_cast<std::size_t>(fused_feature_width); }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"input_height",     "input_width",    "input_channels", "conv_maps",
                                         "kernel",           "pool",           "padding",        "dropout_after_pool",
                                         "fused_feature_width", "dense_widths", "batchnorm",     "dropout_before_final",
                                         "num_classes",      "batch_size",     "epochs",         "seed",
                                         "reproducible",     "threads",        "adadelta_rho",   "adadelta_epsilon",
                                         "bn_momentum",      "bn_epsilon"};
    return k;
  }

  /// Overrides fields present in `kv`; unknown keys are rejected.
  void apply(const KeyValueConfig& kv) {
    kv.reject_unknown(keys());
    auto num = [&](const char* key, auto& field) {
      if (!kv.has(key)) return;
      using F = std::remove_reference_t<decltype(field)>;
      if constexpr (std::is_floating_point_v<F>) {
        try {
          field = io::parse_real(kv.get(key));
        } catch (const Error&) {
          throw Error(ErrorKind::Config, std::string(key) + ": not a number: '" + kv.get(key) + "'");
        }
      } else {
        field = static_cast<F>(parse_integer(kv.get(key), key));
      }
    };
    num("input_height", input_height);
    num("input_width", input_width);
    num("input_channels", input_channels);
    if (kv.has("conv_maps")) conv_maps = parse_int_list(kv.get("conv_maps"), "conv_maps");
    num("kernel", kernel);
    num("pool", pool);
    if (kv.has("padding")) {
      const auto& p = kv.get("padding");
      if (p == "valid")
        padding = Padding::Valid;
      else if (p == "same")
        padding = Padding::Same;
      else
        throw Error(ErrorKind::Config, "padding must be 'valid' or 'same'");
    }
    num("dropout_after_pool", dropout_after_pool);
    num("fused_feature_width", fused_feature_width);
    if (kv.has("dense_widths")) dense_widths = parse_int_list(kv.get("dense_widths"), "dense_widths");
    if (kv.has("batchnorm")) batchnorm = parse_bool(kv.get("batchnorm"), "batchnorm");
    num("dropout_before_final", dropout_before_final);
    num("num_classes", num_classes);
    num("batch_size", batch_size);
    num("epochs", epochs);
    num("seed", seed);
    if (kv.has("reproducible")) reproducible = parse_bool(kv.get("reproducible"), "reproducible");
    num("threads", threads);
    num("adadelta_rho", adadelta_rho);
    num("adadelta_epsilon", adadelta_epsilon);
    num("bn_momentum", bn_momentum);
    num("bn_epsilon", bn_epsilon);
  }

  KeyValueConfig to_kv() const {
    auto list = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    KeyValueConfig kv;
    kv.set("input_height", std::to_string(input_height));
    kv.set("input_width", std::to_string(input_width));
    kv.set("input_channels", std::to_string(input_channels));
    kv.set("conv_maps", list(conv_maps));
    kv.set("kernel", std::to_string(kernel));
    kv.set("pool", std::to_string(pool));
    kv.set("padding", padding == Padding::Valid ? "valid" : "same");
    kv.set("dropout_after_pool", io::format_real(dropout_after_pool));
    kv.set("fused_feature_width", std::to_string(fused_feature_width));
    kv.set("dense_widths", list(dense_widths));
    kv.set("batchnorm", batchnorm ? "true" : "false");
    kv.set("dropout_before_final", io::format_real(dropout_before_final));
    kv.set("num_classes", std::to_string(num_classes));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("epochs", std::to_string(epochs));
    kv.set("seed", std::to_string(seed));
    kv.set("reproducible", reproducible ? "true" : "false");
    kv.set("threads", std::to_string(threads));
    kv.set("adadelta_rho", io::format_real(adadelta_rho));
    kv.set("adadelta_epsilon", io::format_real(adadelta_epsilon));
    kv.set("bn_momentum", io::format_real(bn_momentum));
    kv.set("bn_epsilon", io::format_real(bn_epsilon));
    return kv;
  }
};

// ===========================================================================
// Network
//
// conv(32)-ReLU-conv(64)-ReLU-maxpool(2x2)-dropout(0.25)-flatten
//   -concat(handcrafted)-dense(32)-batchnorm-ReLU-dense(128)-ReLU
//   -dropout(0.2)-dense(K)  [softmax applied by the loss / predict]
// ===========================================================================

template <typename T>
struct Affine {
  Tensor<T> weights, bias, grad_weights, grad_bias;
};

template <typename T>
class FusionNet {
 public:
  explicit FusionNet(const ModelConfig& config) : config_(config) {
    config_.validate();
    Rng init(config_.seed);
    auto glorot = [&init](Tensor<T>& t, double fan_in, double fan_out) {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.values()) v = static_cast<T>(init.uniform(-limit, limit));
    };
    const auto k = static_cast<std::size_t>(config_.kernel);
    std::size_t cin = static_cast<std::size_t>(config_.input_channels);
    for (int maps : config_.conv_maps) {
      const auto cout = static_cast<std::size_t>(maps);
      Affine<T> c{Tensor<T>({k, k, cin, cout}), Tensor<T>({cout}), Tensor<T>({k, k, cin, cout}), Tensor<T>({cout})};
      glorot(c.weights, static_cast<double>(k * k * cin), static_cast<double>(k * k * cout));
      convs_.push_back(std::move(c));
      cin = cout;
    }
    std::size_t din = config_.fused_width();
    for (int width : config_.dense_widths) {
      const auto dout = static_cast<std::size_t>(width);
      dense_.push_back(make_dense(din, dout, glorot));
      din = dout;
    }
    out_ = make_dense(din, static_cast<std::size_t>(config_.num_classes), glorot);
    if (config_.batchnorm)
      bn_ = nn::BatchNormState<T>(static_cast<std::size_t>(config_.dense_widths.front()), config_.bn_momentum,
                                  config_.bn_epsilon);
  }

  const ModelConfig& config() const { return config_; }

  /// Learnable parameters in a fixed order with stable names.
  std::vector<nn::Param<T>> params() {
    std::vector<nn::Param<T>> p;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      p.push_back({"conv" + std::to_string(i) + ".kernel", &convs_[i].weights, &convs_[i].grad_weights});
      p.push_back({"conv" + std::to_string(i) + ".bias", &convs_[i].bias, &convs_[i].grad_bias});
    }
    for (std::size_t i = 0; i < dense_.size(); ++i) {
      p.push_back({"dense" + std::to_string(i) + ".weights", &dense_[i].weights, &dense_[i].grad_weights});
      p.push_back({"dense" + std::to_string(i) + ".bias", &dense_[i].bias, &dense_[i].grad_bias});
      if (i == 0 && config_.batchnorm) {
        p.push_back({"bn0.gamma", &bn_.gamma, &bn_.grad_gamma});
        p.push_back({"bn0.beta", &bn_.beta, &bn_.grad_beta});
      }
    }
    p.push_back({"out.weights", &out_.weights, &out_.grad_weights});
    p.push_back({"out.bias", &out_.bias, &out_.grad_bias});
    return p;
  }

  /// Non-learned state that still has to survive a checkpoint.
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
    if (!config_.batchnorm) return {};
    return {{"bn0.running_mean", &bn_.running_mean}, {"bn0.running_var", &bn_.running_var}};
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.value->size();
    return n;
  }

  /// images N x H x W x C (unit-scaled), features N x fused_feature_width
  /// (ignored when fusion is off). Returns logits N x K.
  Tensor<T> forward(const Tensor<T>& images, const Tensor<T>& features, Mode mode, Rng& rng) {
    nn::require_rank(images, 4, "model input");
    require(images.dim(1) == static_cast<std::size_t>(config_.input_height) &&
                images.dim(2) == static_cast<std::size_t>(config_.input_width) &&
                images.dim(3) == static_cast<std::size_t>(config_.input_channels),
            ErrorKind::Argument, "model input shape " + nn::shape_string(images.shape()) + " does not match config");
    const std::size_t n = images.dim(0);
    Cache& c = cache_;
    c = Cache{};
    c.mode = mode;

    Tensor<T> x = images;
    for (auto& conv : convs_) {
      c.conv_in.push_back(std::move(x));
      c.conv_pre.push_back(nn::conv2d_forward(c.conv_in.back(), conv.weights, conv.bias, config_.padding, exec()));
      x = nn::relu(c.conv_pre.back());
    }
    c.pool_in_shape = x.shape();
    auto pooled = nn::maxpool2_forward(x);
    c.argmax = std::move(pooled.argmax);
    c.pool_out_shape = pooled.output.shape();
    x = nn::dropout(pooled.output, config_.dropout_after_pool, mode, rng, &c.drop_pool);
    Tensor<T> h = std::move(x).reshaped({n, config_.bottleneck_width()});

    if (config_.fused_feature_width > 0) {
      require(features.rank() == 2 && features.dim(0) == n &&
                  features.dim(1) == static_cast<std::size_t>(config_.fused_feature_width),
              ErrorKind::Argument,
              "handcrafted features " + nn::shape_string(features.shape()) + " do not match batch of " +
                  std::to_string(n) + " x " + std::to_string(config_.fused_feature_width));
      h = nn::concat(h, features);
    }

    for (std::size_t i = 0; i < dense_.size(); ++i) {
      c.dense_in.push_back(std::move(h));
      Tensor<T> z = nn::dense_forward(c.dense_in.back(), dense_[i].weights, dense_[i].bias);
      if (i == 0 && config_.batchnorm) z = nn::batchnorm_forward(z, bn_, mode, &c.bn);
      c.dense_pre.push_back(std::move(z));
      h = nn::relu(c.dense_pre.back());
    }
    c.out_in = nn::dropout(h, config_.dropout_before_final, mode, rng, &c.drop_final);
    return nn::dense_forward(c.out_in, out_.weights, out_.bias);
  }

  /// Piecewise-linear region of the last forward pass: the sign of every ReLU
  /// input and every max-pool winner.
  std::vector<std::uint32_t> activation_pattern() const {
    std::vector<std::uint32_t> p(cache_.argmax.begin(), cache_.argmax.end());
    for (const auto* group : {&cache_.conv_pre, &cache_.dense_pre})
      for (const auto& t : *group)
        for (T v : t.values()) p.push_back(v > T{0});
    return p;
  }

  /// Back-propagates d loss / d logits from the last forward call; fills every
  /// parameter gradient and returns d loss / d features (empty when fusion is off).
  Tensor<T> backward(const Tensor<T>& grad_logits) {
    Cache& c = cache_;
    require(!c.conv_in.empty(), ErrorKind::Contract, "backward called before forward");
    const std::size_t n = grad_logits.dim(0);

    auto g = nn::dense_backward(grad_logits, c.out_in, out_.weights);
    out_.grad_weights = std::move(g.weights);
    out_.grad_bias = std::move(g.bias);
    Tensor<T> dh = nn::dropout_backward(g.input, c.drop_final);

    for (std::size_t i = dense_.size(); i-- > 0;) {
      dh = nn::relu_backward(dh, c.dense_pre[i]);
      if (i == 0 && config_.batchnorm) dh = nn::batchnorm_backward(dh, bn_, c.bn);
      auto dg = nn::dense_backward(dh, c.dense_in[i], dense_[i].weights);
      dense_[i].grad_weights = std::move(dg.weights);
      dense_[i].grad_bias = std::move(dg.bias);
      dh = std::move(dg.input);
    }

    Tensor<T> dfeatures;
    Tensor<T> dflat;
    if (config_.fused_feature_width > 0) {
      auto [a, b] = nn::concat_backward(dh, config_.bottleneck_width());
      dflat = std::move(a);
      dfeatures = std::move(b);
    } else {
      dflat = std::move(dh);
    }
    Tensor<T> dpool = nn::dropout_backward(std::move(dflat).reshaped(c.pool_out_shape), c.drop_pool);
    Tensor<T> dx = nn::maxpool2_backward(dpool, c.argmax, c.pool_in_shape);

    for (std::size_t i = convs_.size(); i-- > 0;) {
      dx = nn::relu_backward(dx, c.conv_pre[i]);
      auto cg = nn::conv2d_backward(dx, c.conv_in[i], convs_[i].weights, config_.padding, exec());
      convs_[i].grad_weights = std::move(cg.kernels);
      convs_[i].grad_bias = std::move(cg.bias);
      if (i > 0) dx = std::move(cg.input);
    }
    (void)n;
    return dfeatures;
  }

 private:
  nn::Exec exec() const { return {config_.threads, config_.reproducible}; }

  struct Cache {
    Mode mode = Mode::Infer;
    std::vector<Tensor<T>> conv_in, conv_pre, dense_in, dense_pre;
    Shape pool_in_shape, pool_out_shape;
    std::vector<std::uint32_t> argmax;
    std::vector<T> drop_pool, drop_final;
    nn::BatchNormCache<T> bn;
    Tensor<T> out_in;
  };

  template <typename Init>
  static Affine<T> make_dense(std::size_t din, std::size_t dout, Init& glorot) {
    Affine<T> d{Tensor<T>({din, dout}), Tensor<T>({dout}), Tensor<T>({din, dout}), Tensor<T>({dout})};
    glorot(d.weights, static_cast<double>(din), static_cast<double>(dout));
    return d;
  }

  ModelConfig config_;
  std::vector<Affine<T>> convs_;
  std::vector<Affine<T>> dense_;
  Affine<T> out_;
  nn::BatchNormState<T> bn_;
  Cache cache_;
};

// ===========================================================================
// Batching helpers
// ===========================================================================

template <typename T>
Tensor<T> image_batch(const LabeledSet& set, std::span<const std::size_t> indices) {
  const auto per = set.patch_bytes();
  Tensor<T> out({indices.size(), static_cast<std::size_t>(set.height()), static_cast<std::size_t>(set.width()),
                 static_cast<std::size_t>(set.channels())});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto px = set.patch(indices[b]).pixels;
    for (std::size_t i = 0; i < per; ++i) out[b * per + i] = static_cast<T>(px[i] / 255.0);
  }
  return out;
}

template <typename T>
Tensor<T> feature_batch(std::span<const std::vector<double>> rows, std::span<const std::size_t> indices,
                        std::size_t width) {
  Tensor<T> out({indices.size(), width});
  if (width == 0) return out;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& r = rows[indices[b]];
    require(r.size() == width, ErrorKind::Argument, "feature row width mismatch");
    for (std::size_t j = 0; j < width; ++j) out[b * width + j] = static_cast<T>(r[j]);
  }
  return out;
}

// ===========================================================================
// Checkpoint
//
//   'SFCK' | u32 version | string config | string feature names (comma list)
//   | u32 tensor count | per tensor: string name, u8 scalar bytes (4|8),
//     u32 rank, u64 dims[rank], raw little-endian values
//
// Strings are u32 length + bytes. Tensors: model parameters (params()
// order), buffers, "scaler.shift"/"scaler.scale" (f64), then Adadelta
// accumulators "<param>.acc_grad_sq" / "<param>.acc_update_sq".
// ===========================================================================

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct TrainedModel {
  FusionNet<T> net;
  std::vector<std::string> feature_names;
  features::FeatureScaler scaler;
  nn::AdadeltaState<T> optimizer;

  explicit TrainedModel(const ModelConfig& cfg) : net(cfg), optimizer(cfg.adadelta_rho, cfg.adadelta_epsilon) {}
};

namespace detail {

template <typename S>
void put_tensor(io::ByteWriter& w, const std::string& name, const Tensor<S>& t) {
  w.put_string(name);
  w.put(static_cast<std::uint8_t>(sizeof(S)));
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
  for (auto v : t.values()) w.put(v);
}

struct RawTensor {
  std::string name;
  std::uint8_t scalar_bytes = 0;
  Shape shape;
  std::span<const std::uint8_t> payload;

  template <typename S>
  Tensor<S> as() const {
    require(scalar_bytes == sizeof(S), ErrorKind::Version, "checkpoint tensor '" + name + "' has unexpected precision");
    Tensor<S> t(shape);
    std::memcpy(t.data(), payload.data(), payload.size());
    return t;
  }
};

inline RawTensor get_tensor(io::ByteReader& r) {
  RawTensor t;
  t.name = r.get_string();
  t.scalar_bytes = r.get<std::uint8_t>();
  require(t.scalar_bytes == 4 || t.scalar_bytes == 8, ErrorKind::Format, "checkpoint tensor has bad scalar size");
  const auto rank = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
  t.payload = r.get_bytes(nn::shape_size(t.shape) * t.scalar_bytes);
  return t;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + items[i];
  return s;
}

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(TrainedModel<T>& m) {
  io::ByteWriter w;
  for (char ch : {'S', 'F', 'C', 'K'}) w.put(static_cast<std::uint8_t>(ch));
  w.put(kCheckpointVersion);
  w.put_string(m.net.config().to_kv().to_string());
  w.put_string(detail::join(m.feature_names));

  auto params = m.net.params();
  auto buffers = m.net.buffers();
  const bool has_opt = !m.optimizer.acc_grad_sq.empty();
  const std::size_t count = params.size() + buffers.size() + 2 + (has_opt ? 2 * params.size() : 0);
  w.put(static_cast<std::uint32_t>(count));
  for (const auto& p : params) detail::put_tensor(w, p.name, *p.value);
  for (const auto& [name, t] : buffers) detail::put_tensor(w, name, *t);
  detail::put_tensor(w, "scaler.shift", Tensor<double>({m.scaler.shift.size()}, m.scaler.shift));
  detail::put_tensor(w, "scaler.scale", Tensor<double>({m.scaler.scale.size()}, m.scaler.scale));
  if (has_opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      detail::put_tensor(w, params[i].name + ".acc_grad_sq", m.optimizer.acc_grad_sq[i]);
      detail::put_tensor(w, params[i].name + ".acc_update_sq", m.optimizer.acc_update_sq[i]);
    }
  }
  return w.take();
}

template <typename T>
TrainedModel<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 8 && bytes[0] == 'S' && bytes[1] == 'F' && bytes[2] == 'C' && bytes[3] == 'K',
          ErrorKind::Format, "not a satfuse checkpoint");
  io::ByteReader r(bytes.subspan(4));
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorKind::Version,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  ModelConfig cfg;
  cfg.apply(KeyValueConfig::parse(r.get_string()));
  TrainedModel<T> m(cfg);
  const auto names = r.get_string();
  if (!names.empty()) m.feature_names = csv::split_line(names);

  std::map<std::string, detail::RawTensor> tensors;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto t = detail::get_tensor(r);
    tensors.emplace(t.name, std::move(t));
  }
  require(r.remaining() == 0, ErrorKind::Length, "trailing bytes after checkpoint tensors");

  auto take = [&](const std::string& name) -> const detail::RawTensor& {
    auto it = tensors.find(name);
    require(it != tensors.end(), ErrorKind::Version, "checkpoint lacks tensor '" + name + "'");
    return it->second;
  };
  auto load_into = [&](const std::string& name, Tensor<T>& dst) {
    auto t = take(name).template as<T>();
    require(t.shape() == dst.shape(), ErrorKind::Version,
            "checkpoint tensor '" + name + "' has shape " + nn::shape_string(t.shape()) + ", model expects " +
                nn::shape_string(dst.shape()));
    dst = std::move(t);
  };
  auto params = m.net.params();
  for (auto& p : params) load_into(p.name, *p.value);
  for (auto& [name, t] : m.net.buffers()) load_into(name, *t);
  const auto shift = take("scaler.shift").template as<double>();
  const auto scale = take("scaler.scale").template as<double>();
  m.scaler.shift.assign(shift.values().begin(), shift.values().end());
  m.scaler.scale.assign(scale.values().begin(), scale.values().end());
  if (tensors.contains(params.front().name + ".acc_grad_sq")) {
    m.optimizer.init(params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      load_into(params[i].name + ".acc_grad_sq", m.optimizer.acc_grad_sq[i]);
      load_into(params[i].name + ".acc_update_sq", m.optimizer.acc_update_sq[i]);
    }
  }
  return m;
}

template <typename T>
void save_checkpoint(TrainedModel<T>& m, const std::filesystem::path& path) {
  io::atomic_write(path, encode_checkpoint(m));
}

template <typename T>
TrainedModel<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(io::read_file(path));
}

// ===========================================================================
// Training and prediction
// ===========================================================================

struct EpochMetrics {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  double wall_seconds = 0.0;
  KeyValueConfig config;
};

/// Class probabilities (N x K) in inference mode, in batches of `batch_size`.
template <typename T>
Tensor<T> predict_proba(TrainedModel<T>& m, const LabeledSet& set, std::span<const std::vector<double>> scaled_features) {
  const auto& cfg = m.net.config();
  const auto width = static_cast<std::size_t>(cfg.fused_feature_width);
  if (width > 0)
    require(scaled_features.size() == set.size(), ErrorKind::Argument, "feature rows do not match patch count");
  const auto k = static_cast<std::size_t>(cfg.num_classes);
  Tensor<T> probs({set.size(), k});
  Rng unused(0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += bs) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + bs); ++i) idx.push_back(i);
    auto feats = width > 0 ? feature_batch<T>(scaled_features, idx, width) : Tensor<T>({idx.size(), 0});
    auto p = nn::softmax(m.net.forward(image_batch<T>(set, idx), feats, Mode::Infer, unused));
    std::copy_n(p.data(), p.size(), probs.data() + start * k);
  }
  return probs;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = probs.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

inline std::vector<int> labels_of(const LabeledSet& set) { return {set.labels().begin(), set.labels().end()}; }

inline std::vector<std::vector<double>> scale_rows(const features::FeatureScaler& scaler,
                                                   std::span<const std::vector<double>> rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(scaler.apply(r));
  return out;
}

using EpochCallback = std::function<void(int epoch, const EpochMetrics&)>;

/// Mini-batch Adadelta on softmax cross-entropy. The feature scaler is fitted
/// on `train_features` only and stored with the model. A trailing batch of a
/// single patch is skipped (batch normalization needs two samples).
template <typename T>
TrainReport train(TrainedModel<T>& m, const LabeledSet& train_set, std::span<const std::vector<double>> train_features,
                  const std::vector<std::string>& feature_names, const LabeledSet& test_set,
                  std::span<const std::vector<double>> test_features, const EpochCallback& on_epoch = {}) {
  const auto& cfg = m.net.config();
  const auto width = static_cast<std::size_t>(cfg.fused_feature_width);
  require(train_set.num_classes() == cfg.num_classes, ErrorKind::Argument,
          "training set has " + std::to_string(train_set.num_classes()) + " classes, model expects " +
              std::to_string(cfg.num_classes));
  require(train_set.size() >= 2, ErrorKind::Argument, "need at least two training patches");
  std::vector<std::vector<double>> train_scaled, test_scaled;
  if (width > 0) {
    require(train_features.size() == train_set.size(), ErrorKind::Argument,
            "training feature rows do not match patch count");
    require(test_features.size() == test_set.size(), ErrorKind::Argument, "test feature rows do not match patch count");
    require(feature_names.size() == width, ErrorKind::Argument,
            "model fuses " + std::to_string(width) + " features, got " + std::to_string(feature_names.size()));
    m.scaler = features::FeatureScaler::fit(train_features);
    m.feature_names = feature_names;
    train_scaled = scale_rows(m.scaler, train_features);
    test_scaled = scale_rows(m.scaler, test_features);
  } else {
    m.scaler = {};
    m.feature_names.clear();
  }

  TrainReport report;
  report.config = cfg.to_kv();
  const auto start = std::chrono::steady_clock::now();
  Rng shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  Rng dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  auto params = m.net.params();
  const auto labels = labels_of(train_set);
  const auto test_labels = labels_of(test_set);
  std::vector<std::size_t> order(train_set.size());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    std::vector<int> batch_labels;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      std::span<const std::size_t> idx(order.data() + b, std::min(bs, order.size() - b));
      if (idx.size() < 2) continue;
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(labels[i]);
      auto feats = width > 0 ? feature_batch<T>(train_scaled, idx, width) : Tensor<T>({idx.size(), 0});
      auto logits = m.net.forward(image_batch<T>(train_set, idx), feats, Mode::Train, dropout_rng);
      auto loss = nn::softmax_ce(logits, batch_labels);
      m.net.backward(loss.grad);
      nn::adadelta_step<T>(params, m.optimizer);
      loss_sum += loss.loss * static_cast<double>(idx.size());
      seen += idx.size();
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == batch_labels[i];
    }
    EpochMetrics em;
    em.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    em.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    if (!test_set.empty())
      em.test_accuracy = eval::accuracy(argmax_rows(predict_proba(m, test_set, test_scaled)), test_labels);
    report.epochs.push_back(em);
    if (on_epoch) on_epoch(epoch, em);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace satfuse::model

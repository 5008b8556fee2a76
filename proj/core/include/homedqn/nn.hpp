#pragma once

// Convolution / fully-connected / rectifier stack with backpropagation,
// RMSprop, finite-difference verification and weight persistence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace homedqn {

struct ConvSpec {
  int filters = 0;
  int field = 0;
  int pad = 0;
  int stride = 1;
};

/// Output size of a feature map: channels x side x side (fc layers: side 1).
struct FeatureShape {
  int channels = 0;
  int side = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(side) *
           static_cast<std::size_t>(side);
  }
  bool operator==(const FeatureShape&) const = default;
};

struct NetworkSpec {
  std::string name;
  int input_side = 0;
  int input_channels = 1;
  std::vector<ConvSpec> convs;
  std::vector<int> fc;

  /// 1x256x256 -> 16x64x64 -> 32x21x21 -> 64x10x10 -> 64x8x8 -> 4096 -> 512 -> 33.
  static NetworkSpec full();
  /// 1x64x64 -> 8x16x16 -> 16x7x7 -> 32x5x5 -> 800 -> 128 -> 33.
  static NetworkSpec desk();
  static NetworkSpec by_name(std::string_view name);

  /// Output shape of every layer, in order. Throws on an invalid chain.
  std::vector<FeatureShape> shapes() const;
};

enum class LayerKind : std::uint8_t { conv = 0, fc = 1 };

template <class T>
struct Layer {
  LayerKind kind = LayerKind::fc;
  int out_ch = 0;  // filters, or fc width
  int in_ch = 0;   // input channels, or fc input width
  int field = 1;
  int pad = 0;
  int stride = 1;
  int in_side = 1;
  int out_side = 1;
  std::vector<T> weights;  // conv: [filter][in_ch][y][x]; fc: [out][in]
  std::vector<T> biases;

  std::size_t in_size() const {
    return static_cast<std::size_t>(in_ch) * static_cast<std::size_t>(in_side) *
           static_cast<std::size_t>(in_side);
  }
  std::size_t out_size() const {
    return static_cast<std::size_t>(out_ch) * static_cast<std::size_t>(out_side) *
           static_cast<std::size_t>(out_side);
  }
  int fan_in() const { return in_ch * field * field; }
  int fan_out() const { return out_ch * field * field; }
  /// Serialized dimension list: conv (filters, in_ch, field, pad, stride,
  /// in_side); fc (out, in).
  std::vector<std::uint32_t> dims() const;
};

template <class T>
struct Gradients {
  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> biases;

  void zero();
};

template <class T>
class Network {
 public:
  /// Zero-initialized parameters.
  explicit Network(const NetworkSpec& spec);
  explicit Network(std::vector<Layer<T>> layers);

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void init_glorot(std::uint64_t seed);

  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  std::size_t input_size() const { return layers_.front().in_size(); }
  int input_side() const { return layers_.front().in_side; }
  std::size_t output_size() const { return layers_.back().out_size(); }
  std::size_t parameter_count() const;
  std::vector<FeatureShape> shapes() const;

  /// Runs `batch` inputs laid out back to back and keeps every activation
  /// for backward(). Returns batch x output_size values.
  std::span<const T> forward(std::span<const T> inputs, int batch);

  /// Accumulates into `grads` the parameter gradient of
  /// sum_b <d_out[b], output[b]> for the batch of the last forward().
  void backward(std::span<const T> d_out, Gradients<T>& grads);

  /// Post-rectifier output of `layer` for batch item `item` of the last forward().
  std::span<const T> activation(std::size_t layer, int item = 0) const;
  std::size_t last_conv_layer() const;
  std::size_t penultimate_layer() const { return layers_.size() - 2; }

  Gradients<T> make_gradients() const;

  template <class U>
  Network<U> cast() const {
    std::vector<Layer<U>> out;
    for (const auto& l : layers_) {
      Layer<U> c{l.kind, l.out_ch, l.in_ch, l.field, l.pad, l.stride, l.in_side, l.out_side,
                 {l.weights.begin(), l.weights.end()}, {l.biases.begin(), l.biases.end()}};
      out.push_back(std::move(c));
    }
    return Network<U>(std::move(out));
  }

  bool same_parameters(const Network& other) const;

 private:
  void check_finite(std::size_t layer) const;

  std::vector<Layer<T>> layers_;
  int batch_ = 0;
  std::vector<T> input_;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<T>> cols_;
  std::vector<T> delta_;
  std::vector<T> delta_next_;
  std::vector<T> dcol_;
};

struct RmsPropConfig {
  double learning_rate = 2.5e-4;
  double decay = 0.95;
  double epsilon = 1e-6;
};

template <class T>
class RmsProp {
 public:
  RmsProp(const Network<T>& net, RmsPropConfig cfg);

  /// acc = rho*acc + (1-rho)*g^2; p += lr*g/sqrt(acc+eps). The gradient is an
  /// ascent direction. Throws if a parameter becomes non-finite.
  void step(Network<T>& net, const Gradients<T>& grads);

  const RmsPropConfig& config() const { return cfg_; }
  const Gradients<T>& accumulators() const { return acc_; }

 private:
  RmsPropConfig cfg_;
  Gradients<T> acc_;
};

inline constexpr char kWeightsMagic[4] = {'A', 'Q', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

std::string serialize_weights(const Network<float>& net);
Network<float> deserialize_weights(std::string_view bytes);
void save_weights(const Network<float>& net, const std::filesystem::path& path);
Network<float> load_weights(const std::filesystem::path& path);

struct FiniteDiffOptions {
  std::uint64_t seed = 0;
  double h = 1e-3;
  double tolerance = 1e-3;
  /// Parameters checked per weight or bias tensor; 0 checks every one.
  std::size_t per_tensor = 48;
  bool zero_input = false;
  bool zero_weights = false;
  /// Negates the largest-magnitude backprop weight gradient of this layer.
  std::optional<std::size_t> mutate_layer;
};

struct LayerCheck {
  std::size_t layer = 0;
  std::size_t checked = 0;
  /// Parameters whose perturbation flips a rectifier (non-differentiable point).
  std::size_t skipped = 0;
  double max_rel_error = 0;
};

struct FiniteDiffReport {
  std::vector<LayerCheck> layers;
  double max_rel_error = 0;
  bool passed = false;
};

/// Compares backprop against central differences for L = sum_a c_a Q_a(x)
/// with random c and input x, in double precision.
FiniteDiffReport finite_diff_check(const NetworkSpec& spec, const FiniteDiffOptions& opt = {});

}  // namespace homedqn

#include "homedqn/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "homedqn/common.hpp"

namespace homedqn {

namespace {

// C[m][n] += sum_k A[m][k] * B[k][n]
template <class T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int m = 0; m < M; ++m) {
    T* c = C + static_cast<std::size_t>(m) * N;
    const T* a = A + static_cast<std::size_t>(m) * K;
    for (int k = 0; k < K; ++k) {
      const T av = a[k];
      if (av == T(0)) continue;
      const T* b = B + static_cast<std::size_t>(k) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[m][n] += sum_k A[m][k] * B[n][k]
template <class T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int m = 0; m < M; ++m) {
    const T* a = A + static_cast<std::size_t>(m) * K;
    T* c = C + static_cast<std::size_t>(m) * N;
    for (int n = 0; n < N; ++n) {
      const T* b = B + static_cast<std::size_t>(n) * K;
      T s = 0;
      for (int k = 0; k < K; ++k) s += a[k] * b[k];
      c[n] += s;
    }
  }
}

// C[m][n] += sum_k A[k][m] * B[k][n]
template <class T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int k = 0; k < K; ++k) {
    const T* a = A + static_cast<std::size_t>(k) * M;
    const T* b = B + static_cast<std::size_t>(k) * N;
    for (int m = 0; m < M; ++m) {
      const T av = a[m];
      if (av == T(0)) continue;
      T* c = C + static_cast<std::size_t>(m) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

template <class T>
void im2col(const Layer<T>& l, const T* in, T* col) {
  const int f = l.field;
  const int P = l.out_side * l.out_side;
  for (int c = 0; c < l.in_ch; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * l.in_side * l.in_side;
    for (int ky = 0; ky < f; ++ky) {
      for (int kx = 0; kx < f; ++kx) {
        T* row = col + static_cast<std::size_t>((c * f + ky) * f + kx) * P;
        for (int oy = 0; oy < l.out_side; ++oy) {
          const int iy = oy * l.stride + ky - l.pad;
          T* dst = row + oy * l.out_side;
          if (iy < 0 || iy >= l.in_side) {
            std::fill(dst, dst + l.out_side, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * l.in_side;
          for (int ox = 0; ox < l.out_side; ++ox) {
            const int ix = ox * l.stride + kx - l.pad;
            dst[ox] = (ix < 0 || ix >= l.in_side) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const Layer<T>& l, const T* col, T* in) {
  const int f = l.field;
  const int P = l.out_side * l.out_side;
  for (int c = 0; c < l.in_ch; ++c) {
    T* plane = in + static_cast<std::size_t>(c) * l.in_side * l.in_side;
    for (int ky = 0; ky < f; ++ky) {
      for (int kx = 0; kx < f; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * f + ky) * f + kx) * P;
        for (int oy = 0; oy < l.out_side; ++oy) {
          const int iy = oy * l.stride + ky - l.pad;
          if (iy < 0 || iy >= l.in_side) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * l.in_side;
          const T* src = row + oy * l.out_side;
          for (int ox = 0; ox < l.out_side; ++ox) {
            const int ix = ox * l.stride + kx - l.pad;
            if (ix >= 0 && ix < l.in_side) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
std::vector<Layer<T>> build_layers(const NetworkSpec& spec) {
  const auto shapes = spec.shapes();
  std::vector<Layer<T>> layers;
  FeatureShape in{spec.input_channels, spec.input_side};
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Layer<T> l;
    if (i < spec.convs.size()) {
      const auto& c = spec.convs[i];
      l.kind = LayerKind::conv;
      l.out_ch = c.filters;
      l.in_ch = in.channels;
      l.field = c.field;
      l.pad = c.pad;
      l.stride = c.stride;
      l.in_side = in.side;
      l.out_side = shapes[i].side;
    } else {
      l.kind = LayerKind::fc;
      l.out_ch = shapes[i].channels;
      l.in_ch = static_cast<int>(in.size());
    }
    l.weights.assign(static_cast<std::size_t>(l.out_ch) * l.fan_in(), T(0));
    l.biases.assign(static_cast<std::size_t>(l.out_ch), T(0));
    layers.push_back(std::move(l));
    in = shapes[i];
  }
  return layers;
}

template <class T>
void validate_layers(const std::vector<Layer<T>>& layers) {
  if (layers.empty()) throw Error("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto where = "layer " + std::to_string(i);
    if (l.out_ch < 1 || l.in_ch < 1) throw Error(where + ": empty layer");
    if (l.kind == LayerKind::conv) {
      if (l.field < 1 || l.stride < 1 || l.pad < 0 || l.in_side < 1) {
        throw Error(where + ": invalid convolution parameters");
      }
      const int span = l.in_side + 2 * l.pad - l.field;
      if (span < 0 || l.out_side != span / l.stride + 1) {
        throw Error(where + ": convolution output side inconsistent");
      }
      if (i > 0 && layers[i - 1].kind == LayerKind::fc) {
        throw Error(where + ": convolution after a fully connected layer");
      }
    } else if (l.field != 1 || l.in_side != 1 || l.out_side != 1) {
      throw Error(where + ": fully connected layer with spatial extent");
    }
    if (i > 0 && layers[i - 1].out_size() != l.in_size()) {
      throw Error(where + ": input size " + std::to_string(l.in_size()) +
                  " does not match previous output " + std::to_string(layers[i - 1].out_size()));
    }
    if (l.weights.size() != static_cast<std::size_t>(l.out_ch) * l.fan_in() ||
        l.biases.size() != static_cast<std::size_t>(l.out_ch)) {
      throw Error(where + ": parameter count does not match dimensions");
    }
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  std::uint32_t u32(std::string_view what) {
    if (bytes.size() - pos < 4) throw Error("weights file truncated while reading " + std::string(what));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint8_t u8(std::string_view what) {
    if (pos >= bytes.size()) throw Error("weights file truncated while reading " + std::string(what));
    return static_cast<std::uint8_t>(bytes[pos++]);
  }
  void floats(std::vector<float>& out, std::string_view what) {
    for (auto& v : out) {
      v = std::bit_cast<float>(u32(what));
      if (!std::isfinite(v)) throw Error("weights file holds a non-finite value in " + std::string(what));
    }
  }
};

}  // namespace

NetworkSpec NetworkSpec::full() {
  return {"full", 256, 1, {{16, 8, 2, 4}, {32, 4, 0, 3}, {64, 3, 0, 2}, {64, 3, 0, 1}}, {512, 33}};
}

NetworkSpec NetworkSpec::desk() {
  return {"desk", 64, 1, {{8, 8, 2, 4}, {16, 4, 0, 2}, {32, 3, 0, 1}}, {128, 33}};
}

NetworkSpec NetworkSpec::by_name(std::string_view name) {
  if (name == "full") return full();
  if (name == "desk") return desk();
  throw Error("unknown network profile '" + std::string(name) + "'");
}

std::vector<FeatureShape> NetworkSpec::shapes() const {
  if (input_side < 1 || input_channels < 1) throw Error("network input must be non-empty");
  if (convs.empty() && fc.empty()) throw Error("network has no layers");
  std::vector<FeatureShape> out;
  FeatureShape cur{input_channels, input_side};
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& c = convs[i];
    if (c.filters < 1 || c.field < 1 || c.stride < 1 || c.pad < 0) {
      throw Error("conv layer " + std::to_string(i) + ": invalid parameters");
    }
    const int span = cur.side + 2 * c.pad - c.field;
    if (span < 0) {
      throw Error("conv layer " + std::to_string(i) + ": field larger than padded input");
    }
    cur = {c.filters, span / c.stride + 1};
    out.push_back(cur);
  }
  for (int width : fc) {
    if (width < 1) throw Error("fully connected width must be positive");
    cur = {width, 1};
    out.push_back(cur);
  }
  return out;
}

template <class T>
std::vector<std::uint32_t> Layer<T>::dims() const {
  if (kind == LayerKind::conv) {
    return {static_cast<std::uint32_t>(out_ch), static_cast<std::uint32_t>(in_ch),
            static_cast<std::uint32_t>(field),  static_cast<std::uint32_t>(pad),
            static_cast<std::uint32_t>(stride), static_cast<std::uint32_t>(in_side)};
  }
  return {static_cast<std::uint32_t>(out_ch), static_cast<std::uint32_t>(in_ch)};
}

template <class T>
void Gradients<T>::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), T(0));
  for (auto& b : biases) std::fill(b.begin(), b.end(), T(0));
}

template <class T>
Network<T>::Network(const NetworkSpec& spec) : Network(build_layers<T>(spec)) {}

template <class T>
Network<T>::Network(std::vector<Layer<T>> layers) : layers_(std::move(layers)) {
  validate_layers(layers_);
  acts_.resize(layers_.size());
  cols_.resize(layers_.size());
}

template <class T>
void Network<T>::init_glorot(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.fan_in() + l.fan_out()));
    for (auto& w : l.weights) w = static_cast<T>(rng.uniform(-limit, limit));
    std::fill(l.biases.begin(), l.biases.end(), T(0));
  }
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
  return n;
}

template <class T>
std::vector<FeatureShape> Network<T>::shapes() const {
  std::vector<FeatureShape> out;
  for (const auto& l : layers_) out.push_back({l.out_ch, l.out_side});
  return out;
}

template <class T>
std::size_t Network<T>::last_conv_layer() const {
  std::size_t idx = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::conv) idx = i;
  }
  if (idx == layers_.size()) throw Error("network has no convolution layer");
  return idx;
}

template <class T>
Gradients<T> Network<T>::make_gradients() const {
  Gradients<T> g;
  for (const auto& l : layers_) {
    g.weights.emplace_back(l.weights.size(), T(0));
    g.biases.emplace_back(l.biases.size(), T(0));
  }
  return g;
}

template <class T>
void Network<T>::check_finite(std::size_t layer) const {
  const auto& a = acts_[layer];
  const auto it = std::find_if(a.begin(), a.end(), [](T v) { return !std::isfinite(v); });
  if (it != a.end()) {
    throw Error("non-finite activation in layer " + std::to_string(layer) + " at offset " +
                std::to_string(it - a.begin()));
  }
}

template <class T>
std::span<const T> Network<T>::forward(std::span<const T> inputs, int batch) {
  if (batch < 1 || inputs.size() != input_size() * static_cast<std::size_t>(batch)) {
    throw Error("network input has " + std::to_string(inputs.size()) + " values, expected " +
                std::to_string(input_size()) + " x " + std::to_string(batch));
  }
  batch_ = batch;
  input_.assign(inputs.begin(), inputs.end());
  const T* in = input_.data();
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const bool last = li + 1 == layers_.size();
    auto& out = acts_[li];
    out.resize(l.out_size() * batch);
    const std::size_t in_sz = l.in_size();
    const std::size_t out_sz = l.out_size();
    if (l.kind == LayerKind::conv) {
      const int P = l.out_side * l.out_side;
      const int K = l.fan_in();
      cols_[li].resize(static_cast<std::size_t>(K) * P * batch);
      for (int b = 0; b < batch; ++b) {
        T* col = cols_[li].data() + static_cast<std::size_t>(K) * P * b;
        T* o = out.data() + out_sz * b;
        im2col(l, in + in_sz * b, col);
        for (int f = 0; f < l.out_ch; ++f) std::fill(o + f * P, o + (f + 1) * P, l.biases[f]);
        gemm_nn(l.out_ch, P, K, l.weights.data(), col, o);
      }
    } else {
      for (int b = 0; b < batch; ++b) {
        T* o = out.data() + out_sz * b;
        std::copy(l.biases.begin(), l.biases.end(), o);
        gemm_nt(1, l.out_ch, l.in_ch, in + in_sz * b, l.weights.data(), o);
      }
    }
    if (!last) {
      for (auto& v : out) v = v > T(0) ? v : T(0);
    }
    check_finite(li);
    in = out.data();
  }
  return acts_.back();
}

template <class T>
void Network<T>::backward(std::span<const T> d_out, Gradients<T>& grads) {
  if (batch_ == 0) throw Error("backward() requires a preceding forward()");
  if (d_out.size() != output_size() * static_cast<std::size_t>(batch_)) {
    throw Error("output gradient has wrong size");
  }
  delta_.assign(d_out.begin(), d_out.end());
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const std::size_t in_sz = l.in_size();
    const std::size_t out_sz = l.out_size();
    if (li + 1 != layers_.size()) {
      const auto& a = acts_[li];
      for (std::size_t i = 0; i < delta_.size(); ++i) {
        if (!(a[i] > T(0))) delta_[i] = T(0);
      }
    }
    const T* x = li == 0 ? input_.data() : acts_[li - 1].data();
    auto& gw = grads.weights[li];
    auto& gb = grads.biases[li];
    const bool need_input_grad = li > 0;
    if (need_input_grad) delta_next_.assign(in_sz * batch_, T(0));
    if (l.kind == LayerKind::conv) {
      const int P = l.out_side * l.out_side;
      const int K = l.fan_in();
      dcol_.resize(static_cast<std::size_t>(K) * P);
      for (int b = 0; b < batch_; ++b) {
        const T* d = delta_.data() + out_sz * b;
        const T* col = cols_[li].data() + static_cast<std::size_t>(K) * P * b;
        for (int f = 0; f < l.out_ch; ++f) {
          T s = 0;
          for (int p = 0; p < P; ++p) s += d[f * P + p];
          gb[f] += s;
        }
        gemm_nt(l.out_ch, K, P, d, col, gw.data());
        if (need_input_grad) {
          std::fill(dcol_.begin(), dcol_.end(), T(0));
          gemm_tn(K, P, l.out_ch, l.weights.data(), d, dcol_.data());
          col2im(l, dcol_.data(), delta_next_.data() + in_sz * b);
        }
      }
    } else {
      for (int b = 0; b < batch_; ++b) {
        const T* d = delta_.data() + out_sz * b;
        const T* xb = x + in_sz * b;
        T* dx = need_input_grad ? delta_next_.data() + in_sz * b : nullptr;
        for (int o = 0; o < l.out_ch; ++o) {
          const T g = d[o];
          if (g == T(0)) continue;
          gb[o] += g;
          T* w_row = gw.data() + static_cast<std::size_t>(o) * l.in_ch;
          for (int i = 0; i < l.in_ch; ++i) w_row[i] += g * xb[i];
          if (dx) {
            const T* w = l.weights.data() + static_cast<std::size_t>(o) * l.in_ch;
            for (int i = 0; i < l.in_ch; ++i) dx[i] += g * w[i];
          }
        }
      }
    }
    if (need_input_grad) delta_.swap(delta_next_);
  }
}

template <class T>
std::span<const T> Network<T>::activation(std::size_t layer, int item) const {
  if (layer >= layers_.size() || item < 0 || item >= batch_) {
    throw Error("activation() outside the last forward batch");
  }
  const auto sz = layers_[layer].out_size();
  return std::span<const T>(acts_[layer]).subspan(sz * static_cast<std::size_t>(item), sz);
}

template <class T>
bool Network<T>::same_parameters(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.dims() != b.dims() || a.kind != b.kind) return false;
    if (a.weights.size() != b.weights.size() ||
        std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(T)) != 0 ||
        std::memcmp(a.biases.data(), b.biases.data(), a.biases.size() * sizeof(T)) != 0) {
      return false;
    }
  }
  return true;
}

template <class T>
RmsProp<T>::RmsProp(const Network<T>& net, RmsPropConfig cfg) : cfg_(cfg), acc_(net.make_gradients()) {
  if (!(cfg_.learning_rate > 0) || !(cfg_.decay >= 0 && cfg_.decay < 1) || !(cfg_.epsilon >= 0)) {
    throw Error("RMSprop needs learning_rate > 0, decay in [0, 1) and epsilon >= 0");
  }
}

template <class T>
void RmsProp<T>::step(Network<T>& net, const Gradients<T>& grads) {
  const T rho = static_cast<T>(cfg_.decay);
  const T one_minus_rho = static_cast<T>(1.0 - cfg_.decay);
  const T lr = static_cast<T>(cfg_.learning_rate);
  const T eps = static_cast<T>(cfg_.epsilon);
  auto update = [&](std::vector<T>& params, const std::vector<T>& g, std::vector<T>& acc) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const T gi = g[i];
      acc[i] = rho * acc[i] + one_minus_rho * gi * gi;
      if (gi == T(0)) continue;
      params[i] += lr * gi / std::sqrt(acc[i] + eps);
      if (!std::isfinite(params[i])) throw Error("RMSprop produced a non-finite parameter");
    }
  };
  auto& layers = net.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    update(layers[li].weights, grads.weights[li], acc_.weights[li]);
    update(layers[li].biases, grads.biases[li], acc_.biases[li]);
  }
}

std::string serialize_weights(const Network<float>& net) {
  std::string out(kWeightsMagic, 4);
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    out.push_back(static_cast<char>(l.kind));
    const auto dims = l.dims();
    put_u32(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_u32(out, d);
    for (float w : l.weights) put_u32(out, std::bit_cast<std::uint32_t>(w));
    for (float b : l.biases) put_u32(out, std::bit_cast<std::uint32_t>(b));
  }
  return out;
}

Network<float> deserialize_weights(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kWeightsMagic, 4)) {
    throw Error("not a weights file (bad magic)");
  }
  Reader r{bytes, 4};
  const auto version = r.u32("version");
  if (version != kWeightsVersion) {
    throw Error("unsupported weights version " + std::to_string(version));
  }
  const auto count = r.u32("layer count");
  if (count == 0 || count > 64) throw Error("implausible layer count " + std::to_string(count));
  std::vector<Layer<float>> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto where = "layer " + std::to_string(i);
    const auto kind = r.u8("layer kind");
    if (kind > 1) throw Error(where + ": unknown kind " + std::to_string(kind));
    const auto ndims = r.u32("dimension count");
    Layer<float> l;
    l.kind = static_cast<LayerKind>(kind);
    if (ndims != (l.kind == LayerKind::conv ? 6u : 2u)) {
      throw Error(where + ": wrong dimension count " + std::to_string(ndims));
    }
    std::vector<std::uint32_t> dims(ndims);
    for (auto& d : dims) {
      d = r.u32("dimensions");
      if (d > (1u << 24)) throw Error(where + ": implausible dimension " + std::to_string(d));
    }
    l.out_ch = static_cast<int>(dims[0]);
    l.in_ch = static_cast<int>(dims[1]);
    if (l.kind == LayerKind::conv) {
      l.field = static_cast<int>(dims[2]);
      l.pad = static_cast<int>(dims[3]);
      l.stride = static_cast<int>(dims[4]);
      l.in_side = static_cast<int>(dims[5]);
      if (l.stride < 1) throw Error(where + ": zero stride");
      const int span = l.in_side + 2 * l.pad - l.field;
      if (span < 0) throw Error(where + ": field larger than padded input");
      l.out_side = span / l.stride + 1;
    }
    const auto nweights = static_cast<std::size_t>(l.out_ch) * static_cast<std::size_t>(l.fan_in());
    if (nweights * 4 > bytes.size()) throw Error("weights file truncated in " + where);
    l.weights.resize(nweights);
    l.biases.resize(static_cast<std::size_t>(l.out_ch));
    r.floats(l.weights, where + " weights");
    r.floats(l.biases, where + " biases");
    layers.push_back(std::move(l));
  }
  if (r.pos != bytes.size()) throw Error("weights file has trailing bytes");
  return Network<float>(std::move(layers));
}

void save_weights(const Network<float>& net, const std::filesystem::path& path) {
  write_file(path, serialize_weights(net));
}

Network<float> load_weights(const std::filesystem::path& path) {
  try {
    return deserialize_weights(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

namespace {

struct Probe {
  Network<double>& net;
  const std::vector<double>& input;
  const std::vector<double>& coeff;

  double loss() {
    const auto out = net.forward(input, 1);
    double s = 0;
    for (std::size_t a = 0; a < out.size(); ++a) s += coeff[a] * out[a];
    return s;
  }
  std::vector<std::vector<bool>> pattern() const {
    std::vector<std::vector<bool>> p;
    for (std::size_t li = 0; li + 1 < net.layers().size(); ++li) {
      const auto a = net.activation(li);
      std::vector<bool> on(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) on[i] = a[i] > 0;
      p.push_back(std::move(on));
    }
    return p;
  }
};

std::vector<std::size_t> pick(std::size_t n, std::size_t k, Rng& rng,
                              std::optional<std::size_t> must) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (k != 0 && k < n) {
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(k);
    if (must && std::find(idx.begin(), idx.end(), *must) == idx.end()) idx.back() = *must;
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

FiniteDiffReport finite_diff_check(const NetworkSpec& spec, const FiniteDiffOptions& opt) {
  Rng rng(opt.seed);
  Network<double> net(spec);
  if (!opt.zero_weights) {
    net.init_glorot(mix_seed(opt.seed, 1));
    // Non-zero biases exercise the bias gradients and move units off zero.
    for (auto& l : net.layers()) {
      for (auto& b : l.biases) b = rng.uniform(-0.1, 0.1);
    }
  }
  std::vector<double> input(net.input_size(), 0.0);
  if (!opt.zero_input) {
    for (auto& v : input) v = rng.uniform();
  }
  std::vector<double> coeff(net.output_size());
  for (auto& c : coeff) c = rng.uniform(-1, 1);

  Probe probe{net, input, coeff};
  probe.loss();
  const auto base_pattern = probe.pattern();
  auto grads = net.make_gradients();
  net.backward(coeff, grads);

  std::optional<std::size_t> mutated;
  if (opt.mutate_layer) {
    if (*opt.mutate_layer >= net.layers().size()) throw Error("mutate_layer out of range");
    auto& g = grads.weights[*opt.mutate_layer];
    const auto it = std::max_element(g.begin(), g.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
    *it = -*it;
    mutated = static_cast<std::size_t>(it - g.begin());
  }

  FiniteDiffReport report;
  auto compare = [&](LayerCheck& lc, std::vector<double>& params, const std::vector<double>& g,
                     std::optional<std::size_t> must) {
    for (std::size_t i : pick(params.size(), opt.per_tensor, rng, must)) {
      const double saved = params[i];
      params[i] = saved + opt.h;
      const double up = probe.loss();
      const bool up_same = probe.pattern() == base_pattern;
      params[i] = saved - opt.h;
      const double down = probe.loss();
      const bool down_same = probe.pattern() == base_pattern;
      params[i] = saved;
      if (!up_same || !down_same) {
        ++lc.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opt.h);
      const double denom = std::max({std::abs(numeric), std::abs(g[i]), 1e-7});
      lc.max_rel_error = std::max(lc.max_rel_error, std::abs(numeric - g[i]) / denom);
      ++lc.checked;
    }
  };
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    LayerCheck lc;
    lc.layer = li;
    auto& l = net.layers()[li];
    compare(lc, l.weights, grads.weights[li],
            opt.mutate_layer == li ? mutated : std::optional<std::size_t>());
    compare(lc, l.biases, grads.biases[li], std::nullopt);
    report.max_rel_error = std::max(report.max_rel_error, lc.max_rel_error);
    report.layers.push_back(lc);
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

template struct Layer<float>;
template struct Layer<double>;
template struct Gradients<float>;
template struct Gradients<double>;
template class Network<float>;
template class Network<double>;
template class RmsProp<float>;
template class RmsProp<double>;

}  // namespace homedqn

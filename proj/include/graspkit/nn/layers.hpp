#pragma once

// Minimal CPU layers with hand-written backward passes. Activations are NCHW
// tensors; every layer caches what its backward pass needs during forward(),
// so backward() must follow the matching forward() call.

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "graspkit/error.hpp"
#include "graspkit/tensor.hpp"

namespace graspkit::nn {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  std::size_t numel() const { return value.size(); }
  void zero_grad() { grad.fill(T{}); }
};

struct FeatureShape {
  std::size_t c = 0, h = 0, w = 0;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

inline std::string to_string(const FeatureShape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  // Accumulates parameter gradients and returns dL/dx (empty when
  // input_grad is false).
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual FeatureShape output_shape(FeatureShape in) const = 0;
  virtual std::string describe() const = 0;
  virtual void reset_parameters(std::mt19937_64&) {}

  bool input_grad = true;
};

// ---------------------------------------------------------------------------
// im2col geometry shared by convolution and transposed convolution.

struct ConvGeometry {
  int channels, height, width;
  int kernel, stride, pad, dilation;

  int out_h() const { return (height + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1; }
  int out_w() const { return (width + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1; }
  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h() * out_w(); }
};

template <class T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.channels; ++c)
    for (int ki = 0; ki < g.kernel; ++ki)
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ki * g.dilation;
          if (iy < 0 || iy >= g.height) {
            std::fill(row + y * ow, row + (y + 1) * ow, T{});
            continue;
          }
          const T* src = img + (c * g.height + iy) * g.width;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kj * g.dilation;
            row[y * ow + x] = (ix >= 0 && ix < g.width) ? src[ix] : T{};
          }
        }
      }
}

template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.channels; ++c)
    for (int ki = 0; ki < g.kernel; ++ki)
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ki * g.dilation;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = img + (c * g.height + iy) * g.width;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kj * g.dilation;
            if (ix >= 0 && ix < g.width) dst[ix] += row[y * ow + x];
          }
        }
      }
}

inline void check_rank4(const Shape& s, std::size_t channels, const std::string& who) {
  if (s.size() != 4 || s[1] != channels)
    throw config_error(who + ": expected Nx" + std::to_string(channels) + "xHxW input, got " + shape_string(s));
}

// ---------------------------------------------------------------------------

template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in, int out, int kernel, int stride = 1, int pad = 0, int dilation = 1,
         double init_scale = std::sqrt(6.0))
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad), dil_(dilation), init_scale_(init_scale),
        weight_(name + ".weight", {std::size_t(out), std::size_t(in), std::size_t(kernel), std::size_t(kernel)}),
        bias_(name + ".bias", {std::size_t(out)}) {
    if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0 || pad < 0 || dilation <= 0)
      throw config_error("conv " + name + ": invalid hyperparameters");
  }

  FeatureShape output_shape(FeatureShape s) const override {
    const ConvGeometry g = geometry(s);
    if (s.c != std::size_t(in_) || g.out_h() <= 0 || g.out_w() <= 0)
      throw config_error(describe() + ": cannot apply to " + to_string(s));
    return {std::size_t(out_), std::size_t(g.out_h()), std::size_t(g.out_w())};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_rank4(x.shape(), std::size_t(in_), describe());
    input_ = x;
    const auto os = output_shape({x.dim(1), x.dim(2), x.dim(3)});
    const ConvGeometry g = geometry({x.dim(1), x.dim(2), x.dim(3)});
    const std::size_t n = x.dim(0), in_sz = x.size() / n, P = std::size_t(g.cols());
    Tensor<T> y({n, os.c, os.h, os.w});
    ConstMatrixMap<T> W(weight_.value.data(), out_, g.rows());
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.value.data(), out_);
    std::vector<T> cols(pointwise() ? 0 : std::size_t(g.rows()) * P);
    for (std::size_t s = 0; s < n; ++s) {
      const T* src = x.data() + s * in_sz;
      if (!pointwise()) im2col(src, g, cols.data());
      ConstMatrixMap<T> C(pointwise() ? src : cols.data(), g.rows(), Eigen::Index(P));
      MatrixMap<T> Y(y.data() + s * out_ * P, out_, Eigen::Index(P));
      Y.noalias() = W * C;
      Y.colwise() += b;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const Tensor<T>& x = input_;
    const ConvGeometry g = geometry({x.dim(1), x.dim(2), x.dim(3)});
    const std::size_t n = x.dim(0), in_sz = x.size() / n, P = std::size_t(g.cols());
    Tensor<T> gx;
    if (this->input_grad) gx = Tensor<T>(x.shape());
    ConstMatrixMap<T> W(weight_.value.data(), out_, g.rows());
    MatrixMap<T> dW(weight_.grad.data(), out_, g.rows());
    std::vector<T> cols(std::size_t(g.rows()) * P);
    const bool need_w = !weight_.frozen;
    for (std::size_t s = 0; s < n; ++s) {
      ConstMatrixMap<T> GY(gy.data() + s * out_ * P, out_, Eigen::Index(P));
      const T* src = x.data() + s * in_sz;
      if (need_w) {
        if (pointwise()) {
          dW.noalias() += GY * ConstMatrixMap<T>(src, g.rows(), Eigen::Index(P)).transpose();
        } else {
          im2col(src, g, cols.data());
          dW.noalias() += GY * ConstMatrixMap<T>(cols.data(), g.rows(), Eigen::Index(P)).transpose();
        }
      }
      // Plain loop: Eigen's vectorized reductions peel by pointer alignment,
      // which would make the summation order (and the result) run-dependent.
      if (!bias_.frozen)
        for (int c = 0; c < out_; ++c) {
          const T* row = gy.data() + (s * std::size_t(out_) + std::size_t(c)) * P;
          T acc{};
          for (std::size_t i = 0; i < P; ++i) acc += row[i];
          bias_.grad[std::size_t(c)] += acc;
        }
      if (this->input_grad) {
        if (pointwise()) {
          MatrixMap<T>(gx.data() + s * in_sz, g.rows(), Eigen::Index(P)).noalias() = W.transpose() * GY;
        } else {
          MatrixMap<T>(cols.data(), g.rows(), Eigen::Index(P)).noalias() = W.transpose() * GY;
          col2im(cols.data(), g, gx.data() + s * in_sz);
        }
      }
    }
    return gx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  void reset_parameters(std::mt19937_64& rng) override {
    const double bound = init_scale_ / std::sqrt(double(in_ * k_ * k_));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : weight_.value.storage()) w = T(u(rng));
    bias_.value.fill(T{});
  }

  std::string describe() const override {
    std::ostringstream os;
    os << (dil_ > 1 ? "dilated-conv " : "conv ") << weight_.name.substr(0, weight_.name.size() - 7) << " " << in_
       << "->" << out_ << " k" << k_ << " s" << stride_ << " p" << pad_;
    if (dil_ > 1) os << " d" << dil_;
    return os.str();
  }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }
  ConvGeometry geometry(FeatureShape s) const {
    return {int(s.c), int(s.h), int(s.w), k_, stride_, pad_, dil_};
  }

  int in_, out_, k_, stride_, pad_, dil_;
  double init_scale_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Weight layout (in, out, k, k), output size (H-1)s - 2p + d(k-1) + op + 1.

template <class T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int in, int out, int kernel, int stride = 1, int pad = 0,
                  int output_pad = 0, int dilation = 1, double init_scale = std::sqrt(6.0))
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad), opad_(output_pad), dil_(dilation),
        init_scale_(init_scale),
        weight_(name + ".weight", {std::size_t(in), std::size_t(out), std::size_t(kernel), std::size_t(kernel)}),
        bias_(name + ".bias", {std::size_t(out)}) {
    if (in <= 0 || out <= 0 || kernel <= 0 || stride <= 0 || pad < 0 || dilation <= 0 || output_pad < 0 ||
        output_pad >= std::max(stride, dilation))
      throw config_error("transposed-conv " + name + ": invalid hyperparameters");
  }

  FeatureShape output_shape(FeatureShape s) const override {
    const long oh = (long(s.h) - 1) * stride_ - 2 * pad_ + dil_ * (k_ - 1) + opad_ + 1;
    const long ow = (long(s.w) - 1) * stride_ - 2 * pad_ + dil_ * (k_ - 1) + opad_ + 1;
    if (s.c != std::size_t(in_) || oh <= 0 || ow <= 0)
      throw config_error(describe() + ": cannot apply to " + to_string(s));
    return {std::size_t(out_), std::size_t(oh), std::size_t(ow)};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_rank4(x.shape(), std::size_t(in_), describe());
    input_ = x;
    const auto os = output_shape({x.dim(1), x.dim(2), x.dim(3)});
    const ConvGeometry g = geometry(os);
    const std::size_t n = x.dim(0), P = x.dim(2) * x.dim(3), out_sz = os.c * os.h * os.w;
    Tensor<T> y({n, os.c, os.h, os.w});
    ConstMatrixMap<T> W(weight_.value.data(), in_, g.rows());
    std::vector<T> cols(std::size_t(g.rows()) * P);
    for (std::size_t s = 0; s < n; ++s) {
      ConstMatrixMap<T> X(x.data() + s * in_ * P, in_, Eigen::Index(P));
      MatrixMap<T>(cols.data(), g.rows(), Eigen::Index(P)).noalias() = W.transpose() * X;
      T* dst = y.data() + s * out_sz;
      col2im(cols.data(), g, dst);
      for (int c = 0; c < out_; ++c) {
        const T bc = bias_.value[std::size_t(c)];
        for (std::size_t i = 0; i < os.h * os.w; ++i) dst[c * os.h * os.w + i] += bc;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const Tensor<T>& x = input_;
    const FeatureShape os{gy.dim(1), gy.dim(2), gy.dim(3)};
    const ConvGeometry g = geometry(os);
    const std::size_t n = x.dim(0), P = x.dim(2) * x.dim(3), out_sz = os.c * os.h * os.w;
    Tensor<T> gx;
    if (this->input_grad) gx = Tensor<T>(x.shape());
    ConstMatrixMap<T> W(weight_.value.data(), in_, g.rows());
    MatrixMap<T> dW(weight_.grad.data(), in_, g.rows());
    std::vector<T> cols(std::size_t(g.rows()) * P);
    for (std::size_t s = 0; s < n; ++s) {
      const T* gys = gy.data() + s * out_sz;
      im2col(gys, g, cols.data());
      ConstMatrixMap<T> C(cols.data(), g.rows(), Eigen::Index(P));
      if (!weight_.frozen) dW.noalias() += ConstMatrixMap<T>(x.data() + s * in_ * P, in_, Eigen::Index(P)) * C.transpose();
      if (!bias_.frozen)
        for (int c = 0; c < out_; ++c) {
          T acc{};
          for (std::size_t i = 0; i < os.h * os.w; ++i) acc += gys[c * os.h * os.w + i];
          bias_.grad[std::size_t(c)] += acc;
        }
      if (this->input_grad) MatrixMap<T>(gx.data() + s * in_ * P, in_, Eigen::Index(P)).noalias() = W * C;
    }
    return gx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  void reset_parameters(std::mt19937_64& rng) override {
    const double fan_in = double(in_ * k_ * k_) / double(stride_ * stride_);
    const double bound = init_scale_ / std::sqrt(fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : weight_.value.storage()) w = T(u(rng));
    bias_.value.fill(T{});
  }

  std::string describe() const override {
    std::ostringstream os;
    os << "transposed-conv " << weight_.name.substr(0, weight_.name.size() - 7) << " " << in_ << "->" << out_ << " k"
       << k_ << " s" << stride_ << " p" << pad_ << " op" << opad_;
    return os.str();
  }

 private:
  // Convolution geometry from the output grid back onto the input grid.
  ConvGeometry geometry(FeatureShape out) const {
    return {int(out.c), int(out.h), int(out.w), k_, stride_, pad_, dil_};
  }

  int in_, out_, k_, stride_, pad_, opad_, dil_;
  double init_scale_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <class T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = x;
    for (auto& v : y.storage()) v = v > T{} ? v : T{};
    output_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(output_[i] > T{})) gx[i] = T{};
    return gx;
  }
  FeatureShape output_shape(FeatureShape s) const override { return s; }
  std::string describe() const override { return "relu"; }

 private:
  Tensor<T> output_;
};

// 2x2 max pooling, stride 2 (floor).
template <class T>
class MaxPool2d final : public Layer<T> {
 public:
  FeatureShape output_shape(FeatureShape s) const override {
    if (s.h < 2 || s.w < 2) throw config_error("maxpool: input " + to_string(s) + " too small");
    return {s.c, s.h / 2, s.w / 2};
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
    Tensor<T> y({n, c, oh, ow});
    argmax_.assign(y.size(), 0);
    for (std::size_t p = 0; p < n * c; ++p)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t best = (p * h + 2 * i) * w + 2 * j;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
              const std::size_t idx = (p * h + 2 * i + a) * w + 2 * j + b;
              if (x[idx] > x[best]) best = idx;
            }
          const std::size_t o = (p * oh + i) * ow + j;
          y[o] = x[best];
          argmax_[o] = best;
        }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(in_shape_);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax_[o]] += gy[o];
    return gx;
  }
  std::string describe() const override { return "maxpool 2x2"; }

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// x2 bilinear upsampling with aligned corners.
template <class T>
class UpsampleBilinear2d final : public Layer<T> {
 public:
  FeatureShape output_shape(FeatureShape s) const override { return {s.c, 2 * s.h, 2 * s.w}; }

  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto ry = taps(h), rx = taps(w);
    Tensor<T> y({n, c, 2 * h, 2 * w});
    for (std::size_t p = 0; p < n * c; ++p) {
      const T* src = x.data() + p * h * w;
      T* dst = y.data() + p * 4 * h * w;
      for (std::size_t i = 0; i < 2 * h; ++i)
        for (std::size_t j = 0; j < 2 * w; ++j) {
          const auto& ty = ry[i];
          const auto& tx = rx[j];
          const T top = (1 - tx.f) * src[ty.i0 * w + tx.i0] + tx.f * src[ty.i0 * w + tx.i1];
          const T bot = (1 - tx.f) * src[ty.i1 * w + tx.i0] + tx.f * src[ty.i1 * w + tx.i1];
          dst[i * 2 * w + j] = (1 - ty.f) * top + ty.f * bot;
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(in_shape_);
    const std::size_t n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const auto ry = taps(h), rx = taps(w);
    for (std::size_t p = 0; p < n * c; ++p) {
      const T* g = gy.data() + p * 4 * h * w;
      T* dst = gx.data() + p * h * w;
      for (std::size_t i = 0; i < 2 * h; ++i)
        for (std::size_t j = 0; j < 2 * w; ++j) {
          const auto& ty = ry[i];
          const auto& tx = rx[j];
          const T v = g[i * 2 * w + j];
          dst[ty.i0 * w + tx.i0] += (1 - ty.f) * (1 - tx.f) * v;
          dst[ty.i0 * w + tx.i1] += (1 - ty.f) * tx.f * v;
          dst[ty.i1 * w + tx.i0] += ty.f * (1 - tx.f) * v;
          dst[ty.i1 * w + tx.i1] += ty.f * tx.f * v;
        }
    }
    return gx;
  }

  std::string describe() const override { return "upsample bilinear x2"; }

 private:
  struct Tap {
    std::size_t i0, i1;
    T f;
  };
  static std::vector<Tap> taps(std::size_t n) {
    std::vector<Tap> out(2 * n);
    const double scale = n > 1 ? double(n - 1) / double(2 * n - 1) : 0.0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double src = double(i) * scale;
      const std::size_t i0 = std::min(std::size_t(std::floor(src)), n - 1);
      const std::size_t i1 = std::min(i0 + 1, n - 1);
      out[i] = {i0, i1, T(src - double(i0))};
    }
    return out;
  }

  Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <class T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  // Skips the (often expensive) input-gradient of the first layer.
  void set_input_grad(bool on) {
    if (!layers_.empty()) layers_.front()->input_grad = on;
  }

  FeatureShape output_shape(FeatureShape s) const {
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  // Per-layer shape trace, one line per layer.
  std::string shape_trace(FeatureShape s) const {
    std::ostringstream os;
    os << "input " << to_string(s) << '\n';
    for (const auto& l : layers_) {
      try {
        s = l->output_shape(s);
        os << l->describe() << " -> " << to_string(s) << '\n';
      } catch (const config_error&) {
        os << l->describe() << " -> invalid\n";
        break;
      }
    }
    return os.str();
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }

  void reset_parameters(std::mt19937_64& rng) {
    for (auto& l : layers_) l->reset_parameters(rng);
  }

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// x + conv1x1(relu(conv3x3(relu(x)))).
template <class T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(const std::string& name, int channels, int hidden) : channels_(channels) {
    body_.template add<ReLU<T>>();
    body_.template add<Conv2d<T>>(name + ".conv3", channels, hidden, 3, 1, 1);
    body_.template add<ReLU<T>>();
    body_.template add<Conv2d<T>>(name + ".conv1", hidden, channels, 1, 1, 0, 1, 1.0);
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = body_.forward(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = body_.backward(gy);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    return gx;
  }
  std::vector<Parameter<T>*> parameters() override { return body_.parameters(); }
  FeatureShape output_shape(FeatureShape s) const override {
    if (s.c != std::size_t(channels_)) throw config_error("residual block: channel mismatch");
    return s;
  }
  std::string describe() const override { return "residual " + std::to_string(channels_); }
  void reset_parameters(std::mt19937_64& rng) override { body_.reset_parameters(rng); }

 private:
  int channels_;
  Sequential<T> body_;
};

template <class T>
std::size_t trainable_count(const std::vector<Parameter<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params)
    if (!p->frozen) n += p->numel();
  return n;
}

}  // namespace graspkit::nn

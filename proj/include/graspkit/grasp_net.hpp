#pragma once

// Generative grasp networks. A GraspNet maps an image batch to four
// per-pixel maps (Q, cos 2phi, sin 2phi, W / 150); Q passes through a
// sigmoid. RGGCNN2 prefixes the head with a frozen VQ-VAE encoder and
// codebook and a freshly initialized decoder.

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/grasp_maps.hpp"
#include "graspkit/hash.hpp"
#include "graspkit/network_config.hpp"
#include "graspkit/nn/archive.hpp"
#include "graspkit/nn/layers.hpp"
#include "graspkit/vqvae.hpp"

namespace graspkit {

inline constexpr std::size_t kMapChannels = 4;  // Q, cos 2phi, sin 2phi, W / 150

template <class T = float>
class GraspNet {
 public:
  GraspNet(const NetworkConfig& cfg, const std::string& prefix = "head") : cfg_(cfg) {
    int ch = cfg.input_channels;
    if (ch <= 0) throw config_error("network '" + cfg.name + "': input_channels must be > 0");
    int idx = 0;
    for (const auto& l : cfg.layers) {
      const std::string name = prefix + ".l" + std::to_string(idx++);
      if (l.kind == "conv" || l.kind == "dilated-conv") {
        body_.template add<nn::Conv2d<T>>(name, ch, l.filters, l.kernel, l.stride, l.padding, l.dilation);
        ch = l.filters;
      } else if (l.kind == "transposed-conv") {
        body_.template add<nn::ConvTranspose2d<T>>(name, ch, l.filters, l.kernel, l.stride, l.padding,
                                                   l.output_padding, l.dilation);
        ch = l.filters;
      } else if (l.kind == "maxpool") {
        body_.template add<nn::MaxPool2d<T>>();
      } else if (l.kind == "upsample") {
        body_.template add<nn::UpsampleBilinear2d<T>>();
      }
      if (l.relu) body_.template add<nn::ReLU<T>>();
    }
    body_.template add<nn::Conv2d<T>>(prefix + ".out", ch, int(kMapChannels), cfg.head_kernel, 1, cfg.head_padding,
                                      1, 1.0);
    if (cfg.probe_size) check_shape_preserving(cfg.probe_size, cfg.probe_size);
  }

  GraspNet(const NetworkConfig& cfg, std::mt19937_64& rng, const std::string& prefix = "head")
      : GraspNet(cfg, prefix) {
    body_.reset_parameters(rng);
  }

  const NetworkConfig& config() const { return cfg_; }

  // Throws config_error with the per-layer shape trace when an HxW input
  // does not come back as HxW.
  void check_shape_preserving(std::size_t h, std::size_t w) const {
    const nn::FeatureShape in{std::size_t(cfg_.input_channels), h, w};
    bool ok = true;
    try {
      const auto out = body_.output_shape(in);
      ok = out.h == h && out.w == w;
    } catch (const config_error&) {
      ok = false;
    }
    if (!ok)
      throw config_error("network '" + cfg_.name + "' is not shape-preserving for " + std::to_string(h) + "x" +
                         std::to_string(w) + " input:\n" + body_.shape_trace(in));
  }

  // {N, 4, H, W}: sigmoid(Q), cos 2phi, sin 2phi, W / 150.
  Tensor<T> forward(const Tensor<T>& x) {
    const Tensor<T> b = as_batch(x);
    if (b.dim(1) != std::size_t(cfg_.input_channels))
      throw config_error("network '" + cfg_.name + "': expected " + std::to_string(cfg_.input_channels) +
                         " input channels, got " + shape_string(b.shape()));
    check_shape_preserving(b.dim(2), b.dim(3));
    Tensor<T> y = body_.forward(b);
    const std::size_t plane = y.dim(2) * y.dim(3);
    for (std::size_t n = 0; n < y.dim(0); ++n) {
      T* q = y.data() + n * kMapChannels * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = T(1) / (T(1) + std::exp(-q[i]));
    }
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad) {
    Tensor<T> g = grad;
    const std::size_t plane = g.dim(2) * g.dim(3);
    for (std::size_t n = 0; n < g.dim(0); ++n) {
      T* gq = g.data() + n * kMapChannels * plane;
      const T* q = output_.data() + n * kMapChannels * plane;
      for (std::size_t i = 0; i < plane; ++i) gq[i] *= q[i] * (T(1) - q[i]);
    }
    return body_.backward(g);
  }

  void set_input_grad(bool on) { body_.set_input_grad(on); }
  std::vector<nn::Parameter<T>*> parameters() { return body_.parameters(); }
  std::string shape_trace(std::size_t h, std::size_t w) const {
    return body_.shape_trace({std::size_t(cfg_.input_channels), h, w});
  }

 private:
  NetworkConfig cfg_;
  nn::Sequential<T> body_;
  Tensor<T> output_;
};

template <class T>
std::size_t param_count(GraspNet<T>& net) {
  return nn::trainable_count(net.parameters());
}

// Unpacks sample n of a network output into pixel-unit maps; the angle pair
// is scaled back into the unit disc when it leaves it.
inline GraspMaps maps_from_output(const Tensor<float>& y, std::size_t n = 0) {
  const std::size_t h = y.dim(2), w = y.dim(3);
  GraspMaps m(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      m.quality(i, j) = y(n, 0, i, j);
      float c = y(n, 1, i, j), s = y(n, 2, i, j);
      const float r = std::hypot(c, s);
      if (r > 1.0f) {
        c /= r;
        s /= r;
      }
      m.cos2(i, j) = c;
      m.sin2(i, j) = s;
      m.width(i, j) = std::max(0.0f, y(n, 3, i, j)) * float(kWidthScale);
    }
  return m;
}

// Target maps packed into the network output layout (W normalized by 150).
inline Tensor<float> pack_targets(const std::vector<const TargetMaps*>& targets) {
  const std::size_t h = targets.front()->rows(), w = targets.front()->cols();
  Tensor<float> out({targets.size(), kMapChannels, h, w});
  for (std::size_t n = 0; n < targets.size(); ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        out(n, 0, i, j) = targets[n]->quality(i, j);
        out(n, 1, i, j) = targets[n]->cos2(i, j);
        out(n, 2, i, j) = targets[n]->sin2(i, j);
        out(n, 3, i, j) = float(targets[n]->width(i, j) / kWidthScale);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Models usable for prediction and training.

class GraspModel {
 public:
  virtual ~GraspModel() = default;
  virtual std::string kind() const = 0;
  // Image batch -> {N, 4, H, W}.
  virtual Tensor<float> forward(const Tensor<float>& images) = 0;
  virtual std::vector<nn::Parameter<float>*> parameters() = 0;
  virtual nn::WeightArchive to_archive() = 0;
  std::size_t param_count() { return nn::trainable_count(parameters()); }
};

// Bare GGCNN/GGCNN2 on raw images.
class DirectGraspModel final : public GraspModel {
 public:
  DirectGraspModel(const NetworkConfig& cfg, std::mt19937_64& rng) : net_(cfg, rng) { net_.set_input_grad(false); }
  explicit DirectGraspModel(const NetworkConfig& cfg) : net_(cfg) { net_.set_input_grad(false); }

  std::string kind() const override { return "direct"; }
  Tensor<float> forward(const Tensor<float>& images) override { return net_.forward(images); }
  void backward(const Tensor<float>& grad) { net_.backward(grad); }
  std::vector<nn::Parameter<float>*> parameters() override { return net_.parameters(); }
  GraspNet<float>& net() { return net_; }

  nn::WeightArchive to_archive() override {
    nn::WeightArchive a;
    a.meta = {{"kind", "direct"}, {"network", net_.config().source}};
    a.add_all(parameters());
    return a;
  }

 private:
  GraspNet<float> net_;
};

// Encoder -> quantizer -> decoder -> GGCNN2 head.
class AssembledModel final : public GraspModel {
 public:
  // Copies encoder and codebook from a phase-one archive and freezes them;
  // the decoder and the head get fresh weights from `rng`.
  static AssembledModel assemble(const nn::WeightArchive& vqvae, const NetworkConfig& head_cfg, std::mt19937_64& rng) {
    if (!vqvae.meta.contains("vq")) throw format_error("weight archive has no VQ-VAE configuration");
    const VQConfig vq = vq_config_from_json(vqvae.meta.at("vq"));
    AssembledModel m(vq, head_cfg);
    vqvae.restore(m.encoder_params());
    m.decoder_.reset_parameters(rng);
    // Head initialized after the decoder so the draw order is fixed.
    GraspNet<float> fresh(head_cfg, rng);
    auto src = fresh.parameters();
    auto dst = m.head_.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    return m;
  }

  static AssembledModel from_archive(const nn::WeightArchive& a) {
    if (a.meta.value("kind", "") != "rggcnn2") throw format_error("weight archive does not hold an RGGCNN2 model");
    AssembledModel m(vq_config_from_json(a.meta.at("vq")), parse_network_config(a.meta.at("network").get<std::string>()));
    std::vector<nn::Parameter<float>*> all = m.encoder_params();
    for (auto* p : m.trainable_params()) all.push_back(p);
    a.restore(all);
    return m;
  }

  std::string kind() const override { return "rggcnn2"; }
  const VQConfig& vq_config() const { return vq_; }
  const NetworkConfig& head_config() const { return head_.config(); }

  // Frozen part: images -> quantized latents. No gradients.
  Tensor<float> latents(const Tensor<float>& images) {
    const Tensor<float> x = as_batch(images);
    if (x.dim(1) != std::size_t(vq_.in_channels))
      throw config_error("rggcnn2: expected " + std::to_string(vq_.in_channels) + " channels, got " +
                         shape_string(x.shape()));
    check_latent_divisible(x.dim(2), x.dim(3));
    const Tensor<float> z_e = encoder_.forward(x);
    return quantize(z_e, codebook_.value).z_q;
  }

  Tensor<float> forward_latent(const Tensor<float>& z_q) { return head_.forward(decoder_.forward(z_q)); }
  Tensor<float> forward(const Tensor<float>& images) override { return forward_latent(latents(images)); }

  // Gradients for decoder and head only.
  void backward(const Tensor<float>& grad) { decoder_.backward(head_.backward(grad)); }

  std::vector<nn::Parameter<float>*> encoder_params() {
    auto v = encoder_.parameters();
    v.push_back(&codebook_);
    return v;
  }
  std::vector<nn::Parameter<float>*> trainable_params() {
    auto v = decoder_.parameters();
    for (auto* p : head_.parameters()) v.push_back(p);
    return v;
  }
  std::vector<nn::Parameter<float>*> decoder_params() { return decoder_.parameters(); }
  std::vector<nn::Parameter<float>*> head_params() { return head_.parameters(); }

  std::vector<nn::Parameter<float>*> parameters() override {
    auto v = encoder_params();
    for (auto* p : trainable_params()) v.push_back(p);
    return v;
  }

  // Content hashes of the frozen arrays.
  std::string encoder_checksum() { return params_checksum(encoder_.parameters()); }
  std::string codebook_checksum() { return params_checksum({&codebook_}); }

  nn::WeightArchive to_archive() override {
    nn::WeightArchive a;
    a.meta = {{"kind", "rggcnn2"}, {"vq", to_json(vq_)}, {"network", head_.config().source}};
    a.add_all(parameters());
    return a;
  }

 private:
  AssembledModel(const VQConfig& vq, const NetworkConfig& head_cfg)
      : vq_(vq), encoder_(build_encoder<float>(vq)), codebook_("codebook.embeddings", {vq.codebook_size, vq.embedding_dim}),
        decoder_(build_decoder<float>(vq, head_cfg.input_channels)), head_(head_cfg) {
    for (auto* p : encoder_params()) p->frozen = true;
    encoder_.set_input_grad(false);
  }

  static std::string params_checksum(const std::vector<nn::Parameter<float>*>& ps) {
    std::string bytes;
    for (const auto* p : ps)
      bytes.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(float));
    return sha1_hex(bytes);
  }

  VQConfig vq_;
  nn::Sequential<float> encoder_;
  nn::Parameter<float> codebook_;
  nn::Sequential<float> decoder_;
  GraspNet<float> head_;
};

// Rebuilds whichever model an archive holds.
inline std::unique_ptr<GraspModel> load_grasp_model(const nn::WeightArchive& a) {
  const std::string kind = a.meta.value("kind", "");
  if (kind == "rggcnn2") return std::make_unique<AssembledModel>(AssembledModel::from_archive(a));
  if (kind == "direct") {
    auto m = std::make_unique<DirectGraspModel>(parse_network_config(a.meta.at("network").get<std::string>()));
    a.restore(m->parameters());
    return m;
  }
  throw format_error("weight archive kind '" + kind + "' is not a grasp model");
}

// Per-pixel maps for one CHW image.
inline GraspMaps predict_maps(GraspModel* model, const Image& image) {
  if (!model) throw state_error("predict_maps: no model loaded");
  if (image.rank() != 3) throw config_error("predict_maps: expected a CHW image");
  return maps_from_output(model->forward(image), 0);
}

}  // namespace graspkit

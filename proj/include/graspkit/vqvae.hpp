#pragma once

// Convolutional VQ-VAE: encoder (two stride-2 convolutions + residual
// blocks, x4 downsampling) -> vector quantizer -> mirrored decoder with
// transposed convolutions.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graspkit/image_io.hpp"
#include "graspkit/nn/archive.hpp"
#include "graspkit/nn/layers.hpp"
#include "graspkit/nn/optim.hpp"
#include "graspkit/vq.hpp"

namespace graspkit {

inline constexpr std::size_t kLatentStride = 4;

struct VQConfig {
  std::size_t codebook_size = 128;  // K
  std::size_t embedding_dim = 64;   // D
  int in_channels = 3;
  int hidden = 32;
  int res_hidden = 16;
  int residual_blocks = 2;
  double beta = 0.25;

  void validate() const {
    if (codebook_size < 2) throw config_error("vq: codebook_size must be >= 2");
    if (embedding_dim < 1) throw config_error("vq: embedding_dim must be >= 1");
    if (in_channels < 1 || hidden < 2 || res_hidden < 1 || residual_blocks < 0)
      throw config_error("vq: invalid layer widths");
    check_beta(beta);
  }
};

inline nlohmann::json to_json(const VQConfig& c) {
  return {{"codebook_size", c.codebook_size}, {"embedding_dim", c.embedding_dim}, {"in_channels", c.in_channels},
          {"hidden", c.hidden},               {"res_hidden", c.res_hidden},       {"residual_blocks", c.residual_blocks},
          {"beta", c.beta}};
}

inline VQConfig vq_config_from_json(const nlohmann::json& j) {
  VQConfig c;
  c.codebook_size = j.value("codebook_size", c.codebook_size);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.hidden = j.value("hidden", c.hidden);
  c.res_hidden = j.value("res_hidden", c.res_hidden);
  c.residual_blocks = j.value("residual_blocks", c.residual_blocks);
  c.beta = j.value("beta", c.beta);
  c.validate();
  return c;
}

template <class T>
nn::Sequential<T> build_encoder(const VQConfig& c) {
  nn::Sequential<T> s;
  const int h2 = c.hidden / 2;
  s.template add<nn::Conv2d<T>>("encoder.down0", c.in_channels, h2, 4, 2, 1);
  s.template add<nn::ReLU<T>>();
  s.template add<nn::Conv2d<T>>("encoder.down1", h2, c.hidden, 4, 2, 1);
  s.template add<nn::ReLU<T>>();
  s.template add<nn::Conv2d<T>>("encoder.conv", c.hidden, c.hidden, 3, 1, 1);
  for (int i = 0; i < c.residual_blocks; ++i)
    s.template add<nn::ResidualBlock<T>>("encoder.res" + std::to_string(i), c.hidden, c.res_hidden);
  s.template add<nn::ReLU<T>>();
  s.template add<nn::Conv2d<T>>("encoder.proj", c.hidden, int(c.embedding_dim), 1, 1, 0, 1, 1.0);
  return s;
}

template <class T>
nn::Sequential<T> build_decoder(const VQConfig& c, int out_channels) {
  nn::Sequential<T> s;
  const int h2 = c.hidden / 2;
  s.template add<nn::Conv2d<T>>("decoder.conv", int(c.embedding_dim), c.hidden, 3, 1, 1);
  for (int i = 0; i < c.residual_blocks; ++i)
    s.template add<nn::ResidualBlock<T>>("decoder.res" + std::to_string(i), c.hidden, c.res_hidden);
  s.template add<nn::ReLU<T>>();
  s.template add<nn::ConvTranspose2d<T>>("decoder.up0", c.hidden, h2, 4, 2, 1);
  s.template add<nn::ReLU<T>>();
  s.template add<nn::ConvTranspose2d<T>>("decoder.up1", h2, out_channels, 4, 2, 1, 0, 1, 1.0);
  return s;
}

inline void check_latent_divisible(std::size_t h, std::size_t w) {
  if (h % kLatentStride || w % kLatentStride || h == 0 || w == 0)
    throw config_error("image " + std::to_string(h) + "x" + std::to_string(w) +
                       ": height and width must be positive multiples of " + std::to_string(kLatentStride));
}

// Adds a batch axis to a single CHW image.
template <class T>
Tensor<T> as_batch(const Tensor<T>& x) {
  if (x.rank() == 4) return x;
  if (x.rank() != 3) throw config_error("expected CHW image or NCHW batch, got " + shape_string(x.shape()));
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return x.reshaped(s);
}

struct LossTerms {
  bool recon = true;
  bool dict = true;
  bool commit = true;
};

template <class T = float>
class VQVAE {
 public:
  struct Pass {
    Tensor<T> z_e;
    Quantized<T> q;
    Tensor<T> recon;
  };

  VQVAE(const VQConfig& cfg, std::mt19937_64& rng)
      : cfg_(validated(cfg)), encoder_(build_encoder<T>(cfg)), decoder_(build_decoder<T>(cfg, cfg.in_channels)),
        codebook_("codebook.embeddings", {cfg.codebook_size, cfg.embedding_dim}) {
    encoder_.reset_parameters(rng);
    codebook_.value = Codebook<T>::uniform(cfg.codebook_size, cfg.embedding_dim, rng).embeddings();
    decoder_.reset_parameters(rng);
    encoder_.set_input_grad(false);
  }

  const VQConfig& config() const { return cfg_; }
  nn::Sequential<T>& encoder() { return encoder_; }
  nn::Sequential<T>& decoder() { return decoder_; }
  nn::Parameter<T>& codebook() { return codebook_; }
  const Tensor<T>& embeddings() const { return codebook_.value; }

  Tensor<T> encode(const Tensor<T>& images) {
    const Tensor<T> x = as_batch(images);
    if (x.dim(1) != std::size_t(cfg_.in_channels))
      throw config_error("encode: expected " + std::to_string(cfg_.in_channels) + " channels, got " +
                         shape_string(x.shape()));
    check_latent_divisible(x.dim(2), x.dim(3));
    return encoder_.forward(x);
  }

  Quantized<T> quantize(const Tensor<T>& z_e) const { return graspkit::quantize(z_e, codebook_.value); }

  Tensor<T> decode(const Tensor<T>& z_q) {
    const Tensor<T> z = as_batch(z_q);
    if (z.dim(1) != cfg_.embedding_dim)
      throw config_error("decode: expected latent with D=" + std::to_string(cfg_.embedding_dim) + ", got " +
                         shape_string(z.shape()));
    return decoder_.forward(z);
  }

  Pass forward(const Tensor<T>& images) {
    Pass p;
    p.z_e = encode(images);
    p.q = quantize(p.z_e);
    p.recon = decode(p.q.z_q);
    return p;
  }

  VQLossBreakdown<T> loss(const Tensor<T>& images, const Pass& p) const {
    return vq_loss(as_batch(images), p.recon, p.z_e, p.q, codebook_.value, cfg_.beta);
  }

  // Accumulates gradients of the selected loss terms. The reconstruction
  // gradient reaches the encoder through the straight-through copy
  // dL/dz_e = dL/dz_q; the dictionary term only touches selected codebook
  // rows; the commitment term only touches the encoder.
  void backward(const Tensor<T>& images, const Pass& p, LossTerms terms = {}) {
    Tensor<T> g_ze(p.z_e.shape());
    if (terms.recon) {
      const Tensor<T> g_zq = decoder_.backward(reconstruction_grad(as_batch(images), p.recon));
      for (std::size_t i = 0; i < g_ze.size(); ++i) g_ze[i] += g_zq[i];
    }
    if (terms.commit) {
      const Tensor<T> g = commitment_grad(p.z_e, p.q, cfg_.beta);
      for (std::size_t i = 0; i < g_ze.size(); ++i) g_ze[i] += g[i];
    }
    if (terms.recon || terms.commit) encoder_.backward(g_ze);
    if (terms.dict && !codebook_.frozen) {
      const Tensor<T> g = dictionary_grad(p.z_e, p.q.indices, codebook_.value);
      for (std::size_t i = 0; i < g.size(); ++i) codebook_.grad[i] += g[i];
    }
  }

  std::vector<nn::Parameter<T>*> encoder_parameters() {
    auto v = encoder_.parameters();
    v.push_back(&codebook_);
    return v;
  }

  std::vector<nn::Parameter<T>*> parameters() {
    auto v = encoder_parameters();
    for (auto* p : decoder_.parameters()) v.push_back(p);
    return v;
  }

  nn::WeightArchive to_archive() {
    nn::WeightArchive a;
    a.meta = {{"kind", "vqvae"}, {"vq", to_json(cfg_)}};
    a.add_all(parameters());
    return a;
  }

  static VQVAE from_archive(const nn::WeightArchive& a) {
    if (a.meta.value("kind", "") != "vqvae" && !a.meta.contains("vq"))
      throw format_error("weight archive does not hold a VQ-VAE");
    std::mt19937_64 rng(0);
    VQVAE m(vq_config_from_json(a.meta.at("vq")), rng);
    a.restore(m.parameters());
    return m;
  }

 private:
  static const VQConfig& validated(const VQConfig& c) {
    c.validate();
    return c;
  }

  VQConfig cfg_;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> decoder_;
  nn::Parameter<T> codebook_;
};

// ---------------------------------------------------------------------------

struct PhaseConfig {
  int epochs = 10;
  int batch = 8;
  double lr = 1e-3;
  long max_steps = 0;  // 0 = no cap
};

inline nlohmann::json to_json(const PhaseConfig& p) {
  return {{"epochs", p.epochs}, {"batch", p.batch}, {"lr", p.lr}, {"max_steps", p.max_steps}};
}

inline PhaseConfig phase_config_from_json(const nlohmann::json& j, PhaseConfig d = {}) {
  d.epochs = j.value("epochs", d.epochs);
  d.batch = j.value("batch", d.batch);
  d.lr = j.value("lr", d.lr);
  d.max_steps = j.value("max_steps", d.max_steps);
  return d;
}

struct VQEpochLog {
  int epoch = 0;
  long steps = 0;
  double recon = 0, dict = 0, commit = 0, total = 0;
  std::size_t codes_used = 0;
};

inline nlohmann::json to_json(const VQEpochLog& e) {
  return {{"epoch", e.epoch}, {"steps", e.steps},   {"recon", e.recon}, {"dict", e.dict},
          {"commit", e.commit}, {"total", e.total}, {"codes_used", e.codes_used}};
}

struct VQTrainResult {
  VQVAE<float> model;
  std::vector<VQEpochLog> log;
  long steps = 0;
};

// Builds mini-batches in a seeded order; the last batch may be short.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += std::size_t(batch))
    out.emplace_back(idx.begin() + std::ptrdiff_t(i), idx.begin() + std::ptrdiff_t(std::min(n, i + std::size_t(batch))));
  return out;
}

template <class T>
Tensor<T> gather_batch(const std::vector<Tensor<T>>& items, const std::vector<std::size_t>& idx) {
  std::vector<const Tensor<T>*> ptrs;
  for (auto i : idx) ptrs.push_back(&items[i]);
  return stack<T>(std::span<const Tensor<T>* const>(ptrs));
}

// Phase one: unsupervised VQ-VAE training on every image.
inline VQTrainResult train_vqvae(const std::vector<Image>& images, const VQConfig& cfg, const PhaseConfig& phase,
                                 std::mt19937_64& rng,
                                 const std::function<void(const VQEpochLog&)>& on_epoch = {}) {
  if (images.empty()) throw config_error("train_vqvae: no images");
  if (phase.epochs < 0 || phase.batch < 1) throw config_error("train_vqvae: bad epochs/batch");
  VQTrainResult r{VQVAE<float>(cfg, rng), {}, 0};
  nn::Adam<float> opt(r.model.parameters(), phase.lr);
  for (int e = 0; e < phase.epochs; ++e) {
    if (phase.max_steps && r.steps >= phase.max_steps) break;
    VQEpochLog log;
    log.epoch = e;
    std::vector<bool> used(cfg.codebook_size, false);
    std::size_t seen = 0;
    for (const auto& b : epoch_batches(images.size(), phase.batch, rng)) {
      if (phase.max_steps && r.steps >= phase.max_steps) break;
      const Tensor<float> x = gather_batch(images, b);
      opt.zero_grad();
      auto pass = r.model.forward(x);
      const auto l = r.model.loss(x, pass);
      if (!std::isfinite(l.total))
        throw numeric_error("train_vqvae: loss diverged (NaN/Inf) at epoch " + std::to_string(e) + ", step " +
                            std::to_string(r.steps));
      r.model.backward(x, pass);
      opt.step();
      ++r.steps;
      const double wgt = double(b.size());
      log.recon += wgt * l.recon_term;
      log.dict += wgt * l.dict_term;
      log.commit += wgt * l.commit_term;
      log.total += wgt * l.total;
      seen += b.size();
      for (auto k : pass.q.indices) used[std::size_t(k)] = true;
    }
    if (!seen) break;
    log.recon /= double(seen);
    log.dict /= double(seen);
    log.commit /= double(seen);
    log.total /= double(seen);
    log.steps = r.steps;
    log.codes_used = std::size_t(std::count(used.begin(), used.end(), true));
    r.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return r;
}

// Mean reconstruction error of a trained model over a set of images.
inline double reconstruction_mse(VQVAE<float>& m, const std::vector<Image>& images, int batch = 8) {
  double acc = 0;
  for (std::size_t i = 0; i < images.size(); i += std::size_t(batch)) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(images.size(), i + std::size_t(batch)); ++k) idx.push_back(k);
    const auto x = gather_batch(images, idx);
    const auto p = m.forward(x);
    acc += double(reconstruction_term(x, p.recon)) * double(idx.size());
  }
  return acc / double(images.size());
}

}  // namespace graspkit

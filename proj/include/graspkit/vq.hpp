#pragma once

// Vector quantization: nearest-embedding lookup and the three-term VQ
// objective
//
//   L = recon + ||sg[z_e] - e||^2 + beta * ||z_e - sg[e]||^2
//
// where recon is the fixed-variance Gaussian negative log-likelihood, i.e.
// the mean squared reconstruction error. Latents are NxDxhxw tensors; a
// "cell" is one (n, i, j) position.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "graspkit/error.hpp"
#include "graspkit/tensor.hpp"

namespace graspkit {

template <class T>
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(Tensor<T> embeddings) : e_(std::move(embeddings)) {
    if (e_.rank() != 2) throw config_error("codebook: embeddings must be KxD");
    if (e_.dim(0) < 2) throw config_error("codebook: K must be >= 2");
    if (e_.dim(1) < 1) throw config_error("codebook: D must be >= 1");
    if (!e_.all_finite()) throw numeric_error("codebook: non-finite embedding");
  }

  // Uniform in [-1/K, 1/K].
  static Codebook uniform(std::size_t k, std::size_t d, std::mt19937_64& rng) {
    Tensor<T> e({k, d});
    std::uniform_real_distribution<double> u(-1.0 / double(k), 1.0 / double(k));
    for (auto& v : e.storage()) v = T(u(rng));
    return Codebook(std::move(e));
  }

  std::size_t size() const { return e_.dim(0); }
  std::size_t dim() const { return e_.dim(1); }
  const Tensor<T>& embeddings() const { return e_; }
  Tensor<T>& embeddings() { return e_; }
  const T* row(std::size_t k) const { return e_.data() + k * dim(); }

 private:
  Tensor<T> e_;
};

template <class T>
struct Quantized {
  Tensor<T> z_q;                      // same shape as z_e
  std::vector<std::int32_t> indices;  // per cell, (n, i, j) row-major
  std::size_t h = 0, w = 0;

  std::int32_t index(std::size_t n, std::size_t i, std::size_t j) const { return indices[(n * h + i) * w + j]; }
};

// Nearest embedding by squared Euclidean distance, smallest k on ties.
template <class T>
Quantized<T> quantize(const Tensor<T>& z_e, const Tensor<T>& embeddings) {
  if (z_e.rank() != 4 || z_e.dim(1) != embeddings.dim(1))
    throw config_error("quantize: latent " + shape_string(z_e.shape()) + " does not match codebook " +
                       shape_string(embeddings.shape()));
  const std::size_t n = z_e.dim(0), d = z_e.dim(1), h = z_e.dim(2), w = z_e.dim(3), k = embeddings.dim(0);
  const std::size_t hw = h * w;
  Quantized<T> out{Tensor<T>(z_e.shape()), std::vector<std::int32_t>(n * hw), h, w};
  std::vector<T> cell(d);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < hw; ++p) {
      const T* base = z_e.data() + s * d * hw + p;
      for (std::size_t c = 0; c < d; ++c) {
        cell[c] = base[c * hw];
        if (!std::isfinite(cell[c])) throw numeric_error("quantize: NaN/Inf in encoder output");
      }
      std::size_t best = 0;
      T best_d = std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < k; ++e) {
        const T* row = embeddings.data() + e * d;
        T dist{};
        for (std::size_t c = 0; c < d; ++c) {
          const T diff = cell[c] - row[c];
          dist += diff * diff;
        }
        if (dist < best_d) {
          best_d = dist;
          best = e;
        }
      }
      out.indices[s * hw + p] = std::int32_t(best);
      T* dst = out.z_q.data() + s * d * hw + p;
      const T* row = embeddings.data() + best * d;
      for (std::size_t c = 0; c < d; ++c) dst[c * hw] = row[c];
    }
  return out;
}

template <class T>
Quantized<T> quantize(const Tensor<T>& z_e, const Codebook<T>& cb) {
  return quantize(z_e, cb.embeddings());
}

template <class T>
struct VQLossBreakdown {
  T recon_term{};
  T dict_term{};
  T commit_term{};
  T beta{};
  T total{};
};

inline void check_beta(double beta) {
  if (!(beta > 0.0)) throw config_error("vq loss: beta must be > 0");
}

// Mean over all elements of (recon - image)^2.
template <class T>
T reconstruction_term(const Tensor<T>& image, const Tensor<T>& recon) {
  if (image.shape() != recon.shape())
    throw config_error("vq loss: image " + shape_string(image.shape()) + " vs reconstruction " +
                       shape_string(recon.shape()));
  T acc{};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const T d = recon[i] - image[i];
    acc += d * d;
  }
  return acc / T(image.size());
}

// Mean over cells of ||z_e - e_sel||^2 for a fixed selection. As a value this
// is both the dictionary and the commitment term; they differ only in which
// side the stop-gradient blocks.
template <class T>
T latent_term(const Tensor<T>& z_e, const std::vector<std::int32_t>& indices, const Tensor<T>& embeddings) {
  const std::size_t n = z_e.dim(0), d = z_e.dim(1), hw = z_e.dim(2) * z_e.dim(3);
  if (indices.size() != n * hw) throw config_error("vq loss: index count mismatch");
  T acc{};
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < hw; ++p) {
      const T* row = embeddings.data() + std::size_t(indices[s * hw + p]) * d;
      const T* base = z_e.data() + s * d * hw + p;
      for (std::size_t c = 0; c < d; ++c) {
        const T diff = base[c * hw] - row[c];
        acc += diff * diff;
      }
    }
  return acc / T(n * hw);
}

template <class T>
VQLossBreakdown<T> vq_loss(const Tensor<T>& image, const Tensor<T>& recon, const Tensor<T>& z_e,
                           const Quantized<T>& q, const Tensor<T>& embeddings, double beta) {
  check_beta(beta);
  VQLossBreakdown<T> out;
  out.recon_term = reconstruction_term(image, recon);
  out.dict_term = latent_term(z_e, q.indices, embeddings);
  out.commit_term = out.dict_term;
  out.beta = T(beta);
  out.total = out.recon_term + out.dict_term + out.beta * out.commit_term;
  return out;
}

// d recon / d recon_output.
template <class T>
Tensor<T> reconstruction_grad(const Tensor<T>& image, const Tensor<T>& recon) {
  Tensor<T> g(recon.shape());
  const T scale = T(2) / T(image.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (recon[i] - image[i]);
  return g;
}

// d dict_term / d embeddings: only selected rows are non-zero.
template <class T>
Tensor<T> dictionary_grad(const Tensor<T>& z_e, const std::vector<std::int32_t>& indices,
                          const Tensor<T>& embeddings) {
  const std::size_t n = z_e.dim(0), d = z_e.dim(1), hw = z_e.dim(2) * z_e.dim(3);
  Tensor<T> g(embeddings.shape());
  const T scale = T(2) / T(n * hw);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t k = std::size_t(indices[s * hw + p]);
      const T* row = embeddings.data() + k * d;
      const T* base = z_e.data() + s * d * hw + p;
      T* gr = g.data() + k * d;
      for (std::size_t c = 0; c < d; ++c) gr[c] += scale * (row[c] - base[c * hw]);
    }
  return g;
}

// d (beta * commit_term) / d z_e.
template <class T>
Tensor<T> commitment_grad(const Tensor<T>& z_e, const Quantized<T>& q, double beta) {
  check_beta(beta);
  const std::size_t cells = z_e.dim(0) * z_e.dim(2) * z_e.dim(3);
  Tensor<T> g(z_e.shape());
  const T scale = T(2.0 * beta) / T(cells);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (z_e[i] - q.z_q[i]);
  return g;
}

}  // namespace graspkit

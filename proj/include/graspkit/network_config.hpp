#pragma once

// Layer-table configs for the grasp networks. Plain text, one section per
// layer in order:
//
//   [network]           name, input_channels, probe_size
//   [conv] / [dilated-conv] / [transposed-conv]
//                       filters, kernel, stride, padding, dilation,
//                       output_padding, activation = relu | linear
//   [maxpool]           2x2, stride 2
//   [upsample]          bilinear x2
//   [heads]             kernel, padding (four 1-channel output maps)
//   [vqvae]             optional; codebook_size, embedding_dim, hidden, ...
//
// '#' starts a comment.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "graspkit/error.hpp"
#include "graspkit/vqvae.hpp"

namespace graspkit {

struct LayerSpec {
  std::string kind;  // conv, dilated-conv, transposed-conv, maxpool, upsample
  int filters = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int output_padding = 0;
  bool relu = true;
};

struct NetworkConfig {
  std::string name = "network";
  int input_channels = 3;
  std::size_t probe_size = 0;  // input side used to verify shape preservation at build
  std::vector<LayerSpec> layers;
  int head_kernel = 1;
  int head_padding = 0;
  std::optional<VQConfig> vq;
  std::string source;  // original text, stored in weight archives
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int to_int(const std::string& key, const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("network config line " + std::to_string(line) + ": '" + key + "' expects an integer, got '" +
                       v + "'");
  }
}

}  // namespace detail

inline NetworkConfig parse_network_config(const std::string& text) {
  NetworkConfig cfg;
  cfg.source = text;
  std::istringstream in(text);
  std::string raw, section;
  std::map<std::string, std::string> vq_keys;
  bool have_heads = false, have_vq = false;
  int lineno = 0;
  LayerSpec* cur = nullptr;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = detail::trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw config_error("network config line " + std::to_string(lineno) + ": bad section");
      section = line.substr(1, line.size() - 2);
      cur = nullptr;
      if (section == "conv" || section == "dilated-conv" || section == "transposed-conv" || section == "maxpool" ||
          section == "upsample") {
        cfg.layers.push_back(LayerSpec{section});
        cur = &cfg.layers.back();
        if (section == "maxpool" || section == "upsample") cur->relu = false;
      } else if (section == "heads") {
        have_heads = true;
      } else if (section == "vqvae") {
        have_vq = true;
      } else if (section != "network") {
        throw config_error("network config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("network config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
    if (section == "network") {
      if (key == "name") cfg.name = val;
      else if (key == "input_channels") cfg.input_channels = detail::to_int(key, val, lineno);
      else if (key == "probe_size") cfg.probe_size = std::size_t(detail::to_int(key, val, lineno));
      else throw config_error("network config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } else if (section == "heads") {
      if (key == "kernel") cfg.head_kernel = detail::to_int(key, val, lineno);
      else if (key == "padding") cfg.head_padding = detail::to_int(key, val, lineno);
      else throw config_error("network config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } else if (section == "vqvae") {
      vq_keys[key] = val;
    } else if (cur) {
      if (key == "activation") {
        if (val != "relu" && val != "linear")
          throw config_error("network config line " + std::to_string(lineno) + ": activation must be relu|linear");
        cur->relu = val == "relu";
        continue;
      }
      const int v = detail::to_int(key, val, lineno);
      if (key == "filters") cur->filters = v;
      else if (key == "kernel") cur->kernel = v;
      else if (key == "stride") cur->stride = v;
      else if (key == "padding") cur->padding = v;
      else if (key == "dilation") cur->dilation = v;
      else if (key == "output_padding") cur->output_padding = v;
      else throw config_error("network config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } else {
      throw config_error("network config line " + std::to_string(lineno) + ": key outside a section");
    }
  }
  if (!have_heads) throw config_error("network config '" + cfg.name + "': missing [heads] section");
  for (const auto& l : cfg.layers) {
    const bool conv = l.kind == "conv" || l.kind == "dilated-conv" || l.kind == "transposed-conv";
    if (conv && l.filters <= 0) throw config_error("network config '" + cfg.name + "': " + l.kind + " needs filters");
    if (l.kind == "dilated-conv" && l.dilation < 2)
      throw config_error("network config '" + cfg.name + "': dilated-conv needs dilation >= 2");
  }
  if (have_vq) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : vq_keys) {
      if (k == "beta") j[k] = std::stod(v);
      else j[k] = detail::to_int(k, v, 0);
    }
    cfg.vq = vq_config_from_json(j);
  }
  return cfg;
}

inline NetworkConfig load_network_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open network config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_network_config(ss.str());
}

// ---------------------------------------------------------------------------
// Reference layer tables, identical to configs/*.cfg in the repository.

inline constexpr const char* kGgcnnConfig = R"(# GGCNN: strided convolutions down, transposed convolutions up.
[network]
name = ggcnn
input_channels = 3
probe_size = 300

[conv]
filters = 32
kernel = 9
stride = 3
padding = 3

[conv]
filters = 16
kernel = 5
stride = 2
padding = 2

[conv]
filters = 8
kernel = 3
stride = 2
padding = 1

[transposed-conv]
filters = 8
kernel = 3
stride = 2
padding = 1
output_padding = 1

[transposed-conv]
filters = 16
kernel = 5
stride = 2
padding = 2
output_padding = 1

[transposed-conv]
filters = 32
kernel = 9
stride = 3
padding = 3
output_padding = 1

[heads]
kernel = 2
padding = 0
)";

inline constexpr const char* kGgcnn2Config = R"(# GGCNN2: convolutions with max pooling, a dilated block, bilinear upsampling.
[network]
name = ggcnn2
input_channels = 3
probe_size = 300

[conv]
filters = 16
kernel = 11
padding = 5

[conv]
filters = 16
kernel = 5
padding = 2

[maxpool]

[conv]
filters = 16
kernel = 5
padding = 2

[conv]
filters = 16
kernel = 5
padding = 2

[maxpool]

[dilated-conv]
filters = 32
kernel = 5
dilation = 2
padding = 4

[dilated-conv]
filters = 32
kernel = 5
dilation = 4
padding = 8

[upsample]

[conv]
filters = 16
kernel = 3
padding = 1

[upsample]

[conv]
filters = 16
kernel = 3
padding = 1

[heads]
kernel = 1
)";

inline constexpr const char* kRggcnn2Config = R"(# RGGCNN2: frozen VQ-VAE encoder and codebook, reinitialized decoder,
# GGCNN2 layers on the decoder output.
[network]
name = rggcnn2
input_channels = 3
probe_size = 64

[vqvae]
codebook_size = 128
embedding_dim = 64
hidden = 32
res_hidden = 16
residual_blocks = 2
beta = 0.25

[conv]
filters = 16
kernel = 11
padding = 5

[conv]
filters = 16
kernel = 5
padding = 2

[maxpool]

[conv]
filters = 16
kernel = 5
padding = 2

[conv]
filters = 16
kernel = 5
padding = 2

[maxpool]

[dilated-conv]
filters = 32
kernel = 5
dilation = 2
padding = 4

[dilated-conv]
filters = 32
kernel = 5
dilation = 4
padding = 8

[upsample]

[conv]
filters = 16
kernel = 3
padding = 1

[upsample]

[conv]
filters = 16
kernel = 3
padding = 1

[heads]
kernel = 1
)";

inline NetworkConfig reference_ggcnn() { return parse_network_config(kGgcnnConfig); }
inline NetworkConfig reference_ggcnn2() { return parse_network_config(kGgcnn2Config); }
inline NetworkConfig reference_rggcnn2() { return parse_network_config(kRggcnn2Config); }

}  // namespace graspkit

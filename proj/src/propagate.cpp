#include "piid/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "piid/io.hpp"
#include "piid/parallel.hpp"
#include "piid/weights.hpp"

#include <json.hpp>

namespace piid::propagate {

namespace {

void apply_activation(const Activation& act, Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = act(m(i, j));
}

void check_finite(const Vector& h, int layer) {
  if (!h.allFinite())
    throw std::runtime_error("non-finite preactivation at layer " + std::to_string(layer));
}

void check_finite(const Matrix& h, int layer) {
  if (!h.allFinite())
    throw std::runtime_error("non-finite preactivation at layer " + std::to_string(layer));
}

// Unfold channels x pixels feature maps into the k^2*C x pixels matrix whose
// product with the matricized filter bank is the "same"-padded convolution.
Matrix unfold(const Matrix& z, int rows, int cols, int k) {
  const int c = static_cast<int>(z.rows());
  const int half = k / 2;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(k) * k * c, rows * cols);
  for (int r = 0; r < rows; ++r)
    for (int col = 0; col < cols; ++col) {
      const int px = r * cols + col;
      for (int dr = -half; dr <= half; ++dr) {
        const int sr = r + dr;
        if (sr < 0 || sr >= rows) continue;
        for (int dc = -half; dc <= half; ++dc) {
          const int sc = col + dc;
          if (sc < 0 || sc >= cols) continue;
          const int offset = (dr + half) * k + (dc + half);
          const int spx = sr * cols + sc;
          for (int j = 0; j < c; ++j) out(j * k * k + offset, px) = z(j, spx);
        }
      }
    }
  return out;
}

}  // namespace

void NetworkConfig::validate() const {
  const auto& dims = arch == Arch::Fcn ? widths : channels;
  if (dims.size() < 3)
    throw std::invalid_argument("network needs at least depth 1 (three width entries)");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("layer widths must be positive");
  if (layer_specs.size() != dims.size() - 1)
    throw std::invalid_argument("expected one sampler spec per weight layer");
  if (layer_specs.front().family != Family::IidGaussian)
    throw std::invalid_argument("the first layer must be iid Gaussian");
  for (const auto& s : layer_specs) s.validate();
  if (sigma_b2 < 0.0) throw std::invalid_argument("sigma_b2 must be nonnegative");
  if (arch == Arch::Cnn) {
    if (image_rows < 1 || image_cols < 1)
      throw std::invalid_argument("image dimensions must be positive");
    if (filter_size <= 0 || filter_size % 2 == 0)
      throw std::invalid_argument("filter side k must be odd");
  }
  if (!activation.fn) throw std::invalid_argument("activation is unset");
}

NetworkConfig NetworkConfig::fcn(const std::vector<int>& widths, const Activation& act,
                                 double sigma_b2, const SamplerSpec& family) {
  NetworkConfig c;
  c.arch = Arch::Fcn;
  c.widths = widths;
  c.activation = act;
  c.sigma_b2 = sigma_b2;
  SamplerSpec first = SamplerSpec::iid_gaussian(family.sigma_w2);
  c.layer_specs.assign(widths.size() - 1, family);
  c.layer_specs.front() = first;
  c.validate();
  return c;
}

NetworkConfig NetworkConfig::cnn(const std::vector<int>& channels, int k, int image_rows,
                                 int image_cols, const Activation& act, double sigma_b2,
                                 const SamplerSpec& family) {
  NetworkConfig c;
  c.arch = Arch::Cnn;
  c.channels = channels;
  c.filter_size = k;
  c.image_rows = image_rows;
  c.image_cols = image_cols;
  c.activation = act;
  c.sigma_b2 = sigma_b2;
  SamplerSpec first = SamplerSpec::iid_gaussian(family.sigma_w2);
  c.layer_specs.assign(channels.size() - 1, family);
  c.layer_specs.front() = first;
  c.validate();
  return c;
}

std::string Probe::id(Arch arch) const {
  std::ostringstream ss;
  ss << "l" << layer << (arch == Arch::Fcn ? "_n" : "_c") << unit;
  if (arch == Arch::Cnn) ss << "_p" << pixel_row << "x" << pixel_col;
  ss << "_x" << input;
  return ss.str();
}

std::vector<Vector> forward_fcn(const NetworkConfig& config,
                                const std::vector<FcnLayerDraw>& layers, const Vector& x) {
  if (x.size() != config.widths.front())
    throw std::invalid_argument("input dimension does not match N_0");
  std::vector<Vector> h;
  h.reserve(layers.size());
  Vector z = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.cols() != z.size() || layer.bias.size() != layer.weights.rows())
      throw std::invalid_argument("weight shape mismatch at layer " + std::to_string(l + 1));
    Vector pre = layer.weights.entries * z + layer.bias;
    check_finite(pre, static_cast<int>(l) + 1);
    h.push_back(pre);
    if (l + 1 < layers.size()) {
      z.resize(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) z(i) = config.activation(pre(i));
    }
  }
  return h;
}

std::vector<Matrix> forward_cnn(const NetworkConfig& config,
                                const std::vector<CnnLayerDraw>& layers, const Image& x) {
  if (x.channels != config.channels.front() || x.rows != config.image_rows ||
      x.cols != config.image_cols)
    throw std::invalid_argument("input image shape does not match the config");
  const int k = config.filter_size;
  std::vector<Matrix> h;
  h.reserve(layers.size());
  Matrix z = x.data;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.filters.matricized.cols() != static_cast<Eigen::Index>(k) * k * z.rows())
      throw std::invalid_argument("filter shape mismatch at layer " + std::to_string(l + 1));
    Matrix pre = layer.filters.matricized * unfold(z, x.rows, x.cols, k);
    pre.colwise() += layer.bias;
    check_finite(pre, static_cast<int>(l) + 1);
    h.push_back(pre);
    if (l + 1 < layers.size()) {
      z = h.back();
      apply_activation(config.activation, z);
    }
  }
  return h;
}

std::vector<FcnLayerDraw> draw_fcn_layers(const NetworkConfig& config, const RngSeed& seed,
                                          int upto) {
  std::vector<FcnLayerDraw> layers;
  layers.reserve(static_cast<std::size_t>(upto));
  for (int l = 1; l <= upto; ++l) {
    const int m = config.widths[static_cast<std::size_t>(l)];
    const int n = config.widths[static_cast<std::size_t>(l) - 1];
    const RngSeed ls = seed.child(static_cast<std::uint64_t>(l));
    layers.push_back(
        {weights::sample_matrix(m, n, config.layer_specs[static_cast<std::size_t>(l) - 1],
                                ls.child(0)),
         weights::sample_bias(m, config.sigma_b2, ls.child(1))});
  }
  return layers;
}

std::vector<CnnLayerDraw> draw_cnn_layers(const NetworkConfig& config, const RngSeed& seed,
                                          int upto) {
  std::vector<CnnLayerDraw> layers;
  layers.reserve(static_cast<std::size_t>(upto));
  for (int l = 1; l <= upto; ++l) {
    const int c_out = config.channels[static_cast<std::size_t>(l)];
    const int c_in = config.channels[static_cast<std::size_t>(l) - 1];
    const RngSeed ls = seed.child(static_cast<std::uint64_t>(l));
    layers.push_back({weights::sample_conv(c_out, c_in, config.filter_size,
                                           config.layer_specs[static_cast<std::size_t>(l) - 1],
                                           ls.child(0)),
                      weights::sample_bias(c_out, config.sigma_b2, ls.child(1))});
  }
  return layers;
}

namespace {

int max_probe_layer(const std::vector<Probe>& probes) {
  int m = 1;
  for (const auto& p : probes) m = std::max(m, p.layer);
  return m;
}

void check_probes(const NetworkConfig& config, const std::vector<Probe>& probes,
                  std::size_t n_inputs) {
  const auto& dims = config.arch == Arch::Fcn ? config.widths : config.channels;
  for (const auto& p : probes) {
    if (p.layer < 1 || p.layer > config.depth() + 1)
      throw std::invalid_argument("probe layer out of range");
    if (p.unit < 0 || p.unit >= dims[static_cast<std::size_t>(p.layer)])
      throw std::invalid_argument("probe unit out of range");
    if (p.input < 0 || p.input >= static_cast<int>(n_inputs))
      throw std::invalid_argument("probe input index out of range");
    if (config.arch == Arch::Cnn &&
        (p.pixel_row < 0 || p.pixel_row >= config.image_rows || p.pixel_col < 0 ||
         p.pixel_col >= config.image_cols))
      throw std::invalid_argument("probe pixel out of range");
  }
}

template <typename InputT, typename DrawFn, typename ForwardFn, typename ExtractFn>
EnsembleTable run_ensemble_impl(const NetworkConfig& config,
                                const std::vector<InputT>& inputs,
                                const std::vector<Probe>& probes, int trials,
                                const RngSeed& seed, DrawFn&& draw, ForwardFn&& forward,
                                ExtractFn&& extract) {
  config.validate();
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (probes.empty()) throw std::invalid_argument("no probes given");
  check_probes(config, probes, inputs.size());
  const int upto = max_probe_layer(probes);

  // Inputs actually referenced, forward passes run only for those.
  std::vector<int> used;
  for (const auto& p : probes)
    if (std::find(used.begin(), used.end(), p.input) == used.end()) used.push_back(p.input);

  EnsembleTable table;
  table.trials = trials;
  table.arch = config.arch;
  table.probes = probes;
  table.samples.resize(trials, static_cast<Eigen::Index>(probes.size()));
  table.config_digest = config_digest(config);
  table.seed = seed;

  parallel_for(trials, [&](std::int64_t t) {
    const auto layers = draw(config, seed.child(static_cast<std::uint64_t>(t)), upto);
    std::vector<decltype(forward(config, layers, inputs.front()))> runs(inputs.size());
    for (int idx : used)
      runs[static_cast<std::size_t>(idx)] =
          forward(config, layers, inputs[static_cast<std::size_t>(idx)]);
    for (std::size_t p = 0; p < probes.size(); ++p)
      table.samples(t, static_cast<Eigen::Index>(p)) =
          extract(runs[static_cast<std::size_t>(probes[p].input)], probes[p]);
  });
  return table;
}

}  // namespace

EnsembleTable run_ensemble(const NetworkConfig& config, const std::vector<Vector>& inputs,
                           const std::vector<Probe>& probes, int trials,
                           const RngSeed& seed) {
  if (config.arch != Arch::Fcn)
    throw std::invalid_argument("vector inputs require an FCN config");
  return run_ensemble_impl(
      config, inputs, probes, trials, seed, draw_fcn_layers, forward_fcn,
      [](const std::vector<Vector>& h, const Probe& p) {
        return h[static_cast<std::size_t>(p.layer) - 1](p.unit);
      });
}

EnsembleTable run_ensemble(const NetworkConfig& config, const std::vector<Image>& inputs,
                           const std::vector<Probe>& probes, int trials,
                           const RngSeed& seed) {
  if (config.arch != Arch::Cnn)
    throw std::invalid_argument("image inputs require a CNN config");
  const int cols = config.image_cols;
  return run_ensemble_impl(
      config, inputs, probes, trials, seed, draw_cnn_layers, forward_cnn,
      [cols](const std::vector<Matrix>& h, const Probe& p) {
        return h[static_cast<std::size_t>(p.layer) - 1](p.unit,
                                                        p.pixel_row * cols + p.pixel_col);
      });
}

std::string config_digest(const NetworkConfig& config) {
  std::ostringstream ss;
  ss << (config.arch == Arch::Fcn ? "fcn" : "cnn");
  for (int w : config.widths) ss << ' ' << w;
  for (int c : config.channels) ss << ' ' << c;
  ss << " k" << config.filter_size << ' ' << config.image_rows << 'x' << config.image_cols
     << ' ' << config.activation.name << " b" << io::g17(config.sigma_b2);
  for (const auto& s : config.layer_specs) {
    ss << ' ' << family_name(s.family) << ':' << io::g17(s.sigma_w2);
    if (s.family == Family::IidDropout) ss << ":p" << io::g17(s.dropout_p);
    if (s.family == Family::LowRank)
      ss << ":r" << (s.rank > 0 ? std::to_string(s.rank) : io::g17(s.rank_fraction));
    if (s.family == Family::BlockSparse)
      ss << ":b" << (s.block > 0 ? std::to_string(s.block) : io::g17(s.block_fraction));
  }
  // FNV-1a over the canonical description.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : ss.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void export_ensemble(const EnsembleTable& t, const std::string& csv_path,
                     const std::string& sidecar_path) {
  io::CsvWriter csv(csv_path);
  csv.row({"trial", "probe_id", "value"});
  for (int trial = 0; trial < t.trials; ++trial)
    for (std::size_t p = 0; p < t.probes.size(); ++p)
      csv.row({std::to_string(trial), t.probes[p].id(t.arch),
               io::g17(t.samples(trial, static_cast<Eigen::Index>(p)))});
  csv.close();

  nlohmann::ordered_json sidecar;
  sidecar["schema_version"] = 1;
  sidecar["config_digest"] = t.config_digest;
  sidecar["arch"] = t.arch == Arch::Fcn ? "fcn" : "cnn";
  sidecar["trials"] = t.trials;
  sidecar["seed"] = t.seed.seed;
  nlohmann::ordered_json probes = nlohmann::ordered_json::array();
  for (const auto& p : t.probes) {
    nlohmann::ordered_json j;
    j["id"] = p.id(t.arch);
    j["layer"] = p.layer;
    j["unit"] = p.unit;
    if (t.arch == Arch::Cnn) {
      j["pixel_row"] = p.pixel_row;
      j["pixel_col"] = p.pixel_col;
    }
    j["input"] = p.input;
    probes.push_back(j);
  }
  sidecar["probes"] = probes;
  io::write_text(sidecar_path, sidecar.dump(2) + "\n");
}

}  // namespace piid::propagate

// Workbench CLI: sample weight ensembles, check the distribution conditions,
// compute limiting kernels, simulate finite-width networks, compare the two,
// and run the criticality / posterior analyses on top.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>

#include "piid/analysis.hpp"
#include "piid/io.hpp"
#include "piid/kernel.hpp"
#include "piid/parallel.hpp"
#include "piid/propagate.hpp"
#include "piid/regime.hpp"
#include "piid/stats.hpp"
#include "piid/weights.hpp"

#ifndef PIID_PRESET_DIR
#define PIID_PRESET_DIR ""
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace piid;

namespace {

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(const std::string& k, const std::string& msg)
      : std::runtime_error(msg), key(k) {}
};

// ---------------------------------------------------------------- config ---

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(path + "." + key, "unknown key");
}

const json& require(const json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "missing required key");
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

template <typename T>
T get_req(const json& j, const std::string& path, const std::string& key) {
  const json& v = require(j, path, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

SamplerSpec parse_spec(const json& j, const std::string& path) {
  check_keys(j, path,
             {"family", "sigma_w2", "sigma_b2", "p", "rank", "rank_fraction", "block",
              "block_fraction", "base_dist"});
  SamplerSpec s;
  try {
    s.family = family_from_name(get_req<std::string>(j, path, "family"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ".family", e.what());
  }
  s.sigma_w2 = get_or<double>(j, path, "sigma_w2", 1.0);
  s.sigma_b2 = get_or<double>(j, path, "sigma_b2", 0.0);
  s.dropout_p = get_or<double>(j, path, "p", 0.5);
  s.rank = get_or<int>(j, path, "rank", 0);
  s.rank_fraction = get_or<double>(j, path, "rank_fraction", 0.5);
  s.block = get_or<int>(j, path, "block", 0);
  s.block_fraction = get_or<double>(j, path, "block_fraction", 0.2);
  const std::string bd = get_or<std::string>(j, path, "base_dist", "gaussian");
  if (bd == "gaussian")
    s.base_dist = BaseDist::Gaussian;
  else if (bd == "uniform")
    s.base_dist = BaseDist::Uniform;
  else
    throw ConfigError(path + ".base_dist", "expected 'gaussian' or 'uniform'");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return s;
}

Activation parse_activation(const json& j, const std::string& path, const std::string& key) {
  const std::string name = get_req<std::string>(j, path, key);
  try {
    return Activation::from_name(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + "." + key, e.what());
  }
}

// Deterministic input synthesis: unit-sphere vectors or standard-normal images.
std::vector<Vector> make_sphere_inputs(int dim, int count, const RngSeed& seed) {
  std::vector<Vector> out;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Vector x(dim);
    do {
      for (int d = 0; d < dim; ++d) x(d) = rng.normal();
    } while (x.norm() == 0.0);
    out.push_back(x / x.norm());
  }
  return out;
}

std::vector<Image> make_synthetic_images(int channels, int rows, int cols, int count,
                                         const RngSeed& seed) {
  std::vector<Image> out;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Image im(channels, rows, cols);
    for (Eigen::Index j = 0; j < im.data.cols(); ++j)
      for (Eigen::Index c = 0; c < im.data.rows(); ++c) im.data(c, j) = rng.normal();
    out.push_back(std::move(im));
  }
  return out;
}

struct Inputs {
  std::vector<Vector> vectors;
  std::vector<Image> images;
};

Inputs parse_inputs(const json& j, const std::string& path, const RngSeed& seed) {
  check_keys(j, path,
             {"kind", "dim", "count", "vectors", "channels", "rows", "cols"});
  Inputs in;
  const std::string kind = get_req<std::string>(j, path, "kind");
  if (kind == "sphere") {
    in.vectors = make_sphere_inputs(get_req<int>(j, path, "dim"),
                                    get_or<int>(j, path, "count", 1), seed);
  } else if (kind == "explicit") {
    for (const auto& v : require(j, path, "vectors")) {
      Vector x(v.size());
      for (std::size_t d = 0; d < v.size(); ++d) x(static_cast<Eigen::Index>(d)) = v.at(d);
      in.vectors.push_back(x);
    }
    if (in.vectors.empty()) throw ConfigError(path + ".vectors", "empty input list");
  } else if (kind == "images") {
    in.images = make_synthetic_images(
        get_or<int>(j, path, "channels", 1), get_req<int>(j, path, "rows"),
        get_req<int>(j, path, "cols"), get_or<int>(j, path, "count", 1), seed);
  } else {
    throw ConfigError(path + ".kind", "expected 'sphere', 'explicit' or 'images'");
  }
  return in;
}

struct NetworkBlock {
  propagate::Arch arch = propagate::Arch::Fcn;
  int depth = 1;
  int input_dim = 1;  // N_0 or C_0
  int filter_size = 3;
  int image_rows = 0, image_cols = 0;
  Activation act = Activation::tanh();
  double sigma_b2 = 0.0;
};

NetworkBlock parse_network(const json& j, const std::string& path) {
  check_keys(j, path,
             {"arch", "depth", "input_dim", "k", "image_rows", "image_cols", "activation",
              "sigma_b2"});
  NetworkBlock n;
  const std::string arch = get_or<std::string>(j, path, "arch", "fcn");
  if (arch == "fcn")
    n.arch = propagate::Arch::Fcn;
  else if (arch == "cnn")
    n.arch = propagate::Arch::Cnn;
  else
    throw ConfigError(path + ".arch", "expected 'fcn' or 'cnn'");
  n.depth = get_req<int>(j, path, "depth");
  n.input_dim = get_req<int>(j, path, "input_dim");
  n.act = parse_activation(j, path, "activation");
  n.sigma_b2 = get_or<double>(j, path, "sigma_b2", 0.0);
  if (n.arch == propagate::Arch::Cnn) {
    n.filter_size = get_or<int>(j, path, "k", 3);
    n.image_rows = get_req<int>(j, path, "image_rows");
    n.image_cols = get_req<int>(j, path, "image_cols");
  }
  return n;
}

propagate::NetworkConfig build_config(const NetworkBlock& n, int width,
                                      const SamplerSpec& family) {
  std::vector<int> dims(static_cast<std::size_t>(n.depth) + 2, width);
  dims.front() = n.input_dim;
  if (n.arch == propagate::Arch::Fcn)
    return propagate::NetworkConfig::fcn(dims, n.act, n.sigma_b2, family);
  return propagate::NetworkConfig::cnn(dims, n.filter_size, n.image_rows, n.image_cols, n.act,
                                       n.sigma_b2, family);
}

// ------------------------------------------------------------------ misc ---

struct GlobalArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> trials;
  std::optional<int> threads;
};

json load_config(const GlobalArgs& args, const std::string& command) {
  std::string text;
  if (!args.config_path.empty()) {
    text = io::read_text(args.config_path);
  } else if (!args.preset.empty()) {
    std::vector<fs::path> candidates;
    if (const char* env = std::getenv("PIID_PRESETS")) candidates.emplace_back(env);
    candidates.emplace_back("presets");
    if (std::string(PIID_PRESET_DIR).size()) candidates.emplace_back(PIID_PRESET_DIR);
    bool found = false;
    for (const auto& dir : candidates) {
      const fs::path p = dir / (args.preset + ".json");
      if (fs::exists(p)) {
        text = io::read_text(p.string());
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("preset", "preset '" + args.preset + "' not found");
  } else {
    throw ConfigError("config", "one of --config or --preset is required");
  }
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("parse error: ") + e.what());
  }
  const std::string cmd = get_or<std::string>(j, "", "command", command);
  if (cmd != command && command != "run")
    throw ConfigError("command",
                      "config is for command '" + cmd + "', invoked as '" + command + "'");
  // CLI overrides.
  if (args.seed) j["seed"] = *args.seed;
  if (args.out) j["out"] = *args.out;
  if (args.trials) j["trials"] = *args.trials;
  if (args.threads) j["threads"] = *args.threads;
  return j;
}

fs::path ensure_out(const json& j) {
  const fs::path out = get_or<std::string>(j, "", "out", "out");
  fs::create_directories(out);
  return out;
}

RngSeed root_seed(const json& j) {
  return RngSeed(get_or<std::uint64_t>(j, "", "seed", 0));
}

void apply_threads(const json& j) {
  set_max_threads(get_or<int>(j, "", "threads", 0));
}

std::string spec_slug(const SamplerSpec& s) { return family_name(s.family); }

ordered_json spec_to_json(const SamplerSpec& s) {
  ordered_json j;
  j["family"] = family_name(s.family);
  j["sigma_w2"] = s.sigma_w2;
  if (s.family == Family::IidDropout) j["p"] = s.dropout_p;
  if (s.family == Family::LowRank) {
    if (s.rank > 0)
      j["rank"] = s.rank;
    else
      j["rank_fraction"] = s.rank_fraction;
    j["base_dist"] = s.base_dist == BaseDist::Gaussian ? "gaussian" : "uniform";
  }
  if (s.family == Family::BlockSparse) {
    if (s.block > 0)
      j["block"] = s.block;
    else
      j["block_fraction"] = s.block_fraction;
    j["base_dist"] = s.base_dist == BaseDist::Gaussian ? "gaussian" : "uniform";
  }
  return j;
}

// --------------------------------------------------------------- commands ---

int cmd_sample(const json& cfg) {
  check_keys(cfg, "", {"command", "seed", "out", "threads", "trials", "matrices", "conv"});
  const fs::path out = ensure_out(cfg);
  const RngSeed seed = root_seed(cfg);
  apply_threads(cfg);

  int item = 0;
  for (const auto& m : get_or<json>(cfg, "", "matrices", json::array())) {
    const std::string path = "matrices[" + std::to_string(item) + "]";
    check_keys(m, path,
               {"name", "family", "m", "n", "sigma_w2", "p", "rank", "rank_fraction", "block",
                "block_fraction", "base_dist", "export"});
    json spec_json = m;
    spec_json.erase("name");
    spec_json.erase("m");
    spec_json.erase("n");
    spec_json.erase("export");
    const SamplerSpec spec = parse_spec(spec_json, path);
    const int rows = get_req<int>(m, path, "m");
    const int cols = get_req<int>(m, path, "n");
    const std::string name = get_or<std::string>(m, path, "name",
                                                 spec_slug(spec) + "_" + std::to_string(item));
    const WeightMatrix w =
        weights::sample_matrix(rows, cols, spec, seed.child(100).child(item));

    const std::string mode = get_or<std::string>(m, path, "export", "mask");
    if (mode != "mask" && mode != "dense" && mode != "both")
      throw ConfigError(path + ".export", "expected 'mask', 'dense' or 'both'");
    if (mode == "mask" || mode == "both")
      weights::export_mask(w, (out / (name + "_mask.csv")).string());
    if (mode == "dense" || mode == "both") {
      io::CsvWriter csv((out / (name + "_dense.csv")).string());
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index jj = 0; jj < w.cols(); ++jj) row.push_back(io::g17(w.entries(i, jj)));
        csv.row(row);
      }
      csv.close();
    }
    ordered_json meta;
    meta["schema_version"] = 1;
    meta["name"] = name;
    meta["m"] = rows;
    meta["n"] = cols;
    meta["spec"] = spec_to_json(spec);
    meta["seed"] = seed.seed;
    meta["nonzeros"] = (w.entries.array() != 0.0).count();
    io::write_text((out / (name + "_meta.json")).string(), meta.dump(2) + "\n");
    ++item;
  }

  int citem = 0;
  for (const auto& m : get_or<json>(cfg, "", "conv", json::array())) {
    const std::string path = "conv[" + std::to_string(citem) + "]";
    check_keys(m, path, {"name", "c_out", "c_in", "k", "rescale_to"});
    const int c_out = get_req<int>(m, path, "c_out");
    const int c_in = get_req<int>(m, path, "c_in");
    const int k = get_req<int>(m, path, "k");
    const double rescale = get_or<double>(m, path, "rescale_to", 0.0);
    const std::string name =
        get_or<std::string>(m, path, "name", "orthogonal_conv_" + std::to_string(citem));
    const ConvFilterBank bank =
        weights::sample_orthogonal_conv(c_out, c_in, k, seed.child(200).child(citem), rescale);
    io::CsvWriter csv((out / (name + "_matricized.csv")).string());
    for (Eigen::Index i = 0; i < bank.matricized.rows(); ++i) {
      std::vector<std::string> row;
      for (Eigen::Index jj = 0; jj < bank.matricized.cols(); ++jj)
        row.push_back(io::g17(bank.matricized(i, jj)));
      csv.row(row);
    }
    csv.close();
    ordered_json meta;
    meta["schema_version"] = 1;
    meta["name"] = name;
    meta["c_out"] = c_out;
    meta["c_in"] = c_in;
    meta["k"] = k;
    meta["implied_sigma_w2"] = bank.implied_sigma_w2;
    io::write_text((out / (name + "_meta.json")).string(), meta.dump(2) + "\n");
    ++citem;
  }
  return 0;
}

int cmd_check(const json& cfg) {
  check_keys(cfg, "",
             {"command", "seed", "out", "threads", "trials", "n_list", "families", "controls",
              "classify", "conv"});
  const fs::path out = ensure_out(cfg);
  const RngSeed seed = root_seed(cfg);
  apply_threads(cfg);

  regime::Budget budget;
  budget.trials = get_or<int>(cfg, "", "trials", 20000);
  if (cfg.contains("n_list")) budget.n_list = cfg.at("n_list").get<std::vector<int>>();
  const bool do_classify = get_or<bool>(cfg, "", "classify", true);

  int idx = 0;
  for (const auto& f : get_or<json>(cfg, "", "families", json::array())) {
    const std::string path = "families[" + std::to_string(idx) + "]";
    const SamplerSpec spec = parse_spec(f, path);
    const std::string slug = spec_slug(spec);
    const RngSeed fam_seed = seed.child(300).child(idx);
    const regime::MomentCurve curve = regime::condition_iii_curve(
        spec, regime::ProjectionFamily::ones(), budget.n_list, budget.trials,
        fam_seed.child(3));
    regime::export_curve(curve, (out / ("curve_" + slug + ".csv")).string());
    if (do_classify) {
      const regime::RegimeReport rep = regime::classify(spec, budget, fam_seed);
      io::write_text((out / ("check_" + slug + ".json")).string(), rep.to_json());
    }
    ++idx;
  }

  int cidx = 0;
  for (const auto& name : get_or<json>(cfg, "", "controls", json::array())) {
    const std::string ctl = name.get<std::string>();
    regime::RowSource src;
    if (ctl == "identical_coordinates")
      src = regime::identical_coordinates_control();
    else if (ctl == "autoregressive")
      src = regime::autoregressive_control();
    else
      throw ConfigError("controls[" + std::to_string(cidx) + "]", "unknown control");
    const regime::MomentCurve curve =
        regime::condition_iii_curve(src, regime::ProjectionFamily::ones(), budget.n_list,
                                    budget.trials, seed.child(400).child(cidx));
    regime::export_curve(curve, (out / ("curve_" + ctl + ".csv")).string());
    ++cidx;
  }

  int vidx = 0;
  for (const auto& f : get_or<json>(cfg, "", "conv", json::array())) {
    const std::string path = "conv[" + std::to_string(vidx) + "]";
    json spec_json = f;
    const int k = get_or<int>(f, path, "k", 3);
    std::vector<int> n_list = budget.n_list;
    if (f.contains("n_list")) n_list = f.at("n_list").get<std::vector<int>>();
    spec_json.erase("k");
    spec_json.erase("n_list");
    const SamplerSpec spec = parse_spec(spec_json, path);
    regime::Budget conv_budget = budget;
    conv_budget.n_list = n_list;
    const regime::RegimeReport rep =
        regime::classify_conv(spec, k, conv_budget, seed.child(500).child(vidx));
    io::write_text((out / ("check_conv_" + spec_slug(spec) + ".json")).string(),
                   rep.to_json());
    ++vidx;
  }
  return 0;
}

// Kernel computation shared by `kernel` and `compare`.
struct KernelArtifacts {
  std::vector<kernel::KernelTable> fcn;
  std::vector<kernel::ConvKernelTable> cnn;
};

KernelArtifacts compute_kernels(const NetworkBlock& net, double sigma_w2, const Inputs& in) {
  KernelArtifacts art;
  if (net.arch == propagate::Arch::Fcn) {
    art.fcn = kernel::kernel_fcn(in.vectors, net.depth, net.sigma_b2, sigma_w2, net.act);
  } else {
    art.cnn =
        kernel::kernel_cnn(in.images, net.depth, net.sigma_b2, sigma_w2, net.filter_size,
                           net.act);
  }
  return art;
}

int cmd_kernel_impl(const json& cfg) {
  check_keys(cfg, "",
             {"command", "seed", "out", "threads", "trials", "network", "sigma_w2", "inputs"});
  const fs::path out = ensure_out(cfg);
  const RngSeed seed = root_seed(cfg);
  apply_threads(cfg);
  const NetworkBlock net = parse_network(require(cfg, "", "network"), "network");
  const double sigma_w2 = get_req<double>(cfg, "", "sigma_w2");
  const Inputs in = parse_inputs(require(cfg, "", "inputs"), "inputs", seed.child(7));
  const KernelArtifacts art = compute_kernels(net, sigma_w2, in);
  if (net.arch == propagate::Arch::Fcn) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < in.vectors.size(); ++i) labels.push_back("x" + std::to_string(i));
    for (const auto& t : art.fcn)
      kernel::export_table(t, labels,
                           (out / ("kernel_l" + std::to_string(t.layer) + ".csv")).string());
  } else {
    for (const auto& t : art.cnn)
      kernel::export_conv_table(
          t, (out / ("conv_kernel_l" + std::to_string(t.layer) + ".csv")).string());
  }
  return 0;
}

struct ProbeBlock {
  int layer = 1;
  int unit = 0;
  int unit_b = 1;
  int pixel_row = 0, pixel_col = 0;
  int input = 0, input_b = -1;  // input_b >= 0 selects the two-input joint probe
};

ProbeBlock parse_probe(const json& j, const std::string& path) {
  check_keys(j, path, {"layer", "unit", "unit_b", "pixel", "input", "input_b"});
  ProbeBlock p;
  p.layer = get_req<int>(j, path, "layer");
  p.unit = get_or<int>(j, path, "unit", 0);
  p.unit_b = get_or<int>(j, path, "unit_b", p.unit + 1);
  p.input = get_or<int>(j, path, "input", 0);
  p.input_b = get_or<int>(j, path, "input_b", -1);
  if (j.contains("pixel")) {
    const auto px = j.at("pixel").get<std::vector<int>>();
    if (px.size() != 2) throw ConfigError(path + ".pixel", "expected [row, col]");
    p.pixel_row = px[0];
    p.pixel_col = px[1];
  }
  return p;
}

int cmd_simulate(const json& cfg) {
  check_keys(cfg, "",
             {"command", "seed", "out", "threads", "trials", "network", "width", "family",
              "inputs", "probes"});
  const fs::path out = ensure_out(cfg);
  const RngSeed seed = root_seed(cfg);
  apply_threads(cfg);
  const NetworkBlock net = parse_network(require(cfg, "", "network"), "network");
  const int width = get_req<int>(cfg, "", "width");
  const SamplerSpec family = parse_spec(require(cfg, "", "family"), "family");
  const Inputs in = parse_inputs(require(cfg, "", "inputs"), "inputs", seed.child(7));
  const int trials = get_or<int>(cfg, "", "trials",
                                 net.arch == propagate::Arch::Fcn ? 10000 : 1000);

  std::vector<propagate::Probe> probes;
  int pidx = 0;
  for (const auto& pj : require(cfg, "", "probes")) {
    const ProbeBlock b = parse_probe(pj, "probes[" + std::to_string(pidx) + "]");
    probes.push_back({b.layer, b.unit, b.pixel_row, b.pixel_col, b.input});
    ++pidx;
  }
  const propagate::NetworkConfig config = build_config(net, width, family);
  const propagate::EnsembleTable table =
      net.arch == propagate::Arch::Fcn
          ? propagate::run_ensemble(config, in.vectors, probes, trials, seed.child(8))
          : propagate::run_ensemble(config, in.images, probes, trials, seed.child(8));
  propagate::export_ensemble(table, (out / "ensemble.csv").string(),
                             (out / "ensemble_meta.json").string());
  return 0;
}

ordered_json fit_to_json(const stats::GaussFitReport& r) {
  ordered_json j;
  j["sample_count"] = r.sample_count;
  if (r.target_cov.size() > 0) {
    j["target_cov"] = {{r.target_cov(0, 0), r.target_cov(0, 1)},
                       {r.target_cov(1, 0), r.target_cov(1, 1)}};
    j["empirical_cov"] = {{r.empirical_cov(0, 0), r.empirical_cov(0, 1)},
                          {r.empirical_cov(1, 0), r.empirical_cov(1, 1)}};
    j["cov_rel_error"] = r.cov_rel_error;
    j["component_ks"] = r.component_ks;
  } else {
    j["target_variance"] = r.target_variance;
    j["empirical_variance"] = r.empirical_cov(0, 0);
    j["wasserstein1"] = r.wasserstein1;
  }
  j["ks"] = r.ks;
  j["ks_critical_5"] = r.ks_critical_5;
  j["ks_critical_1"] = r.ks_critical_1;
  j["level"] = r.level;
  j["pass"] = r.pass;
  return j;
}

int cmd_compare(const json& cfg) {
  check_keys(cfg, "",
             {"command", "seed", "out", "threads", "trials", "network", "widths", "families",
              "inputs", "probe", "analyses"});
  const fs::path out = ensure_out(cfg);
  const RngSeed seed = root_seed(cfg);
  apply_threads(cfg);
  const NetworkBlock net = parse_network(require(cfg, "", "network"), "network");
  const auto widths = get_req<std::vector<int>>(cfg, "", "widths");
  const Inputs in = parse_inputs(require(cfg, "", "inputs"), "inputs", seed.child(7));
  const ProbeBlock probe = parse_probe(require(cfg, "", "probe"), "probe");
  const int trials = get_or<int>(cfg, "", "trials",
                                 net.arch == propagate::Arch::Fcn ? 10000 : 1000);
  std::set<std::string> analyses;
  for (const auto& a : get_or<json>(cfg, "", "analyses",
                                    json::array({"ks", "histogram"})))
    analyses.insert(a.get<std::string>());
  for (const auto& a : analyses)
    if (a != "ks" && a != "wasserstein" && a != "histogram" && a != "qq" && a != "joint" &&
        a != "independence")
      throw ConfigError("analyses", "unknown analysis '" + a + "'");

  std::vector<SamplerSpec> families;
  int fidx = 0;
  for (const auto& f : require(cfg, "", "families")) {
    families.push_back(parse_spec(f, "families[" + std::to_string(fidx) + "]"));
    ++fidx;
  }

  const bool joint_two_inputs = probe.input_b >= 0;
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    const SamplerSpec& family = families[fi];
    // The limiting kernel for this family's scale.
    double var_a = 0.0, var_b = 0.0, cov_ab = 0.0;
    KernelArtifacts art = compute_kernels(net, family.sigma_w2, in);
    if (net.arch == propagate::Arch::Fcn) {
      const Matrix& k = art.fcn[static_cast<std::size_t>(probe.layer) - 1].values;
      const int ia = probe.input, ib = joint_two_inputs ? probe.input_b : probe.input;
      var_a = k(ia, ia);
      var_b = k(ib, ib);
      cov_ab = joint_two_inputs ? k(ia, ib) : 0.0;
    } else {
      const auto& t = art.cnn[static_cast<std::size_t>(probe.layer) - 1];
      const int ia = probe.input, ib = joint_two_inputs ? probe.input_b : probe.input;
      var_a = t.assembled(ia, ia, probe.pixel_row, probe.pixel_col, probe.pixel_row,
                          probe.pixel_col);
      var_b = t.assembled(ib, ib, probe.pixel_row, probe.pixel_col, probe.pixel_row,
                          probe.pixel_col);
      cov_ab = joint_two_inputs ? t.assembled(ia, ib, probe.pixel_row, probe.pixel_col,
                                              probe.pixel_row, probe.pixel_col)
                                : 0.0;
    }

    for (int width : widths) {
      const std::string slug = spec_slug(family) + "_w" + std::to_string(width);
      const propagate::NetworkConfig config = build_config(net, width, family);
      std::vector<propagate::Probe> probes;
      probes.push_back({probe.layer, probe.unit, probe.pixel_row, probe.pixel_col,
                        probe.input});
      if (joint_two_inputs)
        probes.push_back({probe.layer, probe.unit, probe.pixel_row, probe.pixel_col,
                          probe.input_b});
      else if (analyses.count("independence") || analyses.count("joint"))
        probes.push_back({probe.layer, probe.unit_b, probe.pixel_row, probe.pixel_col,
                          probe.input});

      const RngSeed run_seed = seed.child(900).child(fi).child(static_cast<std::uint64_t>(width));
      const propagate::EnsembleTable table =
          net.arch == propagate::Arch::Fcn
              ? propagate::run_ensemble(config, in.vectors, probes, trials, run_seed)
              : propagate::run_ensemble(config, in.images, probes, trials, run_seed);
      const Vector a = table.samples.col(0);

      ordered_json report;
      report["schema_version"] = 1;
      report["family"] = spec_to_json(family);
      report["width"] = width;
      report["trials"] = trials;
      report["probe_id"] = probes.front().id(table.arch);
      report["target_variance"] = var_a;

      if (analyses.count("ks") || analyses.count("wasserstein"))
        report["gauss_fit"] = fit_to_json(stats::ks_to_gaussian(a, var_a));
      if (analyses.count("histogram"))
        stats::export_histogram(a, 61, (out / ("hist_" + slug + ".csv")).string());
      if (analyses.count("qq"))
        stats::export_qq(stats::qq_points(a, var_a), (out / ("qq_" + slug + ".csv")).string());
      if (probes.size() > 1) {
        const Vector b = table.samples.col(1);
        if (analyses.count("joint")) {
          Matrix target(2, 2);
          target << var_a, cov_ab, cov_ab, var_b;
          report["joint_fit"] = fit_to_json(stats::joint_gauss_fit(a, b, target));
        }
        if (analyses.count("independence")) {
          const stats::IndependenceReport ir = stats::independence_check(a, b);
          report["independence"] = {{"correlation", ir.correlation},
                                    {"threshold", ir.threshold},
                                    {"pass", ir.pass}};
        }
      }
      io::write_text((out / ("report_" + slug + ".json")).string(), report.dump(2) + "\n");
    }
  }
  return 0;
}

int cmd_eoc(const json& cfg) {
  check_keys(cfg, "",
             {"command", "seed", "out", "threads", "trials", "activation", "sigma_b2_grid",
              "tol"});
  const fs::path out = ensure_out(cfg);
  apply_threads(cfg);
  const Activation act = parse_activation(cfg, "", "activation");
  const auto grid = get_req<std::vector<double>>(cfg, "", "sigma_b2_grid");
  const double tol = get_or<double>(cfg, "", "tol", 1e-6);
  const auto curve = analysis::eoc_solve(act, grid, tol);
  analysis::export_eoc(curve, (out / ("eoc_" + act.name + ".csv")).string());
  ordered_json j;
  j["schema_version"] = 1;
  j["activation"] = act.name;
  j["assumption"] =
      "dense criticality equations applied after the entry-variance normalization "
      "E[W_ij^2] = sigma_w2/n; family structure enters only through sigma_w2";
  ordered_json pts = ordered_json::array();
  for (const auto& p : curve)
    pts.push_back({{"sigma_b2", p.sigma_b2},
                   {"sigma_w2", p.sigma_w2},
                   {"q_star", p.q_star},
                   {"chi1", p.chi1}});
  j["points"] = pts;
  io::write_text((out / ("eoc_" + act.name + ".json")).string(), j.dump(2) + "\n");
  return 0;
}

int cmd_posterior(const json& cfg) {
  check_keys(cfg, "",
             {"command", "seed", "out", "threads", "trials", "depth", "sigma_b2", "sigma_w2",
              "activation", "noise_variance", "train", "test"});
  const fs::path out = ensure_out(cfg);
  const RngSeed seed = root_seed(cfg);
  apply_threads(cfg);
  const int depth = get_req<int>(cfg, "", "depth");
  const double sigma_b2 = get_or<double>(cfg, "", "sigma_b2", 0.0);
  const double sigma_w2 = get_req<double>(cfg, "", "sigma_w2");
  const Activation act = parse_activation(cfg, "", "activation");
  const double noise = get_or<double>(cfg, "", "noise_variance", 0.0);

  auto parse_points = [&](const json& j, const std::string& path, bool with_targets,
                          std::vector<Vector>* xs, Vector* ys) {
    check_keys(j, path, {"kind", "count", "range", "inputs", "targets", "target"});
    const std::string kind = get_req<std::string>(j, path, "kind");
    if (kind == "grid_1d" || kind == "synthetic_1d") {
      const int count = get_req<int>(j, path, "count");
      const auto range = get_req<std::vector<double>>(j, path, "range");
      if (range.size() != 2) throw ConfigError(path + ".range", "expected [lo, hi]");
      if (ys) ys->resize(count);
      const std::string target = get_or<std::string>(j, path, "target", "sin2x");
      for (int i = 0; i < count; ++i) {
        const double x =
            count == 1 ? range[0]
                       : range[0] + (range[1] - range[0]) * i / static_cast<double>(count - 1);
        xs->push_back(Vector::Constant(1, x));
        if (with_targets && ys) {
          if (target == "sin2x")
            (*ys)(i) = std::sin(2.0 * x);
          else if (target == "abs")
            (*ys)(i) = std::abs(x);
          else
            throw ConfigError(path + ".target", "expected 'sin2x' or 'abs'");
        }
      }
    } else if (kind == "explicit") {
      for (const auto& v : require(j, path, "inputs")) {
        Vector x(v.size());
        for (std::size_t d = 0; d < v.size(); ++d) x(static_cast<Eigen::Index>(d)) = v.at(d);
        xs->push_back(x);
      }
      if (with_targets) {
        const auto t = get_req<std::vector<double>>(j, path, "targets");
        ys->resize(static_cast<Eigen::Index>(t.size()));
        for (std::size_t i = 0; i < t.size(); ++i) (*ys)(static_cast<Eigen::Index>(i)) = t[i];
      }
    } else {
      throw ConfigError(path + ".kind", "expected 'grid_1d', 'synthetic_1d' or 'explicit'");
    }
  };
  (void)seed;

  std::vector<Vector> train_x, test_x;
  Vector train_y;
  parse_points(require(cfg, "", "train"), "train", true, &train_x, &train_y);
  parse_points(require(cfg, "", "test"), "test", false, &test_x, nullptr);

  const analysis::PosteriorResult res =
      analysis::nngp_regress(train_x, train_y, test_x, depth, sigma_b2, sigma_w2, act, noise);

  io::CsvWriter csv((out / "posterior.csv").string());
  csv.row({"x", "mean", "variance"});
  for (Eigen::Index i = 0; i < res.mean.size(); ++i)
    csv.row({io::g17(test_x[static_cast<std::size_t>(i)](0)), io::g17(res.mean(i)),
             io::g17(res.variance(i))});
  csv.close();

  ordered_json j;
  j["schema_version"] = 1;
  j["depth"] = depth;
  j["sigma_b2"] = sigma_b2;
  j["sigma_w2"] = sigma_w2;
  j["activation"] = act.name;
  j["noise_variance"] = noise;
  j["jitter"] = res.jitter;
  j["log_marginal_likelihood"] = res.log_marginal_likelihood;
  io::write_text((out / "posterior.json").string(), j.dump(2) + "\n");
  return 0;
}

int dispatch(const std::string& command, const json& cfg) {
  if (command == "sample") return cmd_sample(cfg);
  if (command == "check") return cmd_check(cfg);
  if (command == "kernel") return cmd_kernel_impl(cfg);
  if (command == "simulate") return cmd_simulate(cfg);
  if (command == "compare") return cmd_compare(cfg);
  if (command == "eoc") return cmd_eoc(cfg);
  if (command == "posterior") return cmd_posterior(cfg);
  throw ConfigError("command", "unknown command '" + command + "'");
}

void print_error(const std::string& type, const std::string& message,
                 const std::string& key = "") {
  ordered_json e;
  e["error"]["type"] = type;
  e["error"]["message"] = message;
  if (!key.empty()) e["error"]["key"] = key;
  std::cerr << e.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-iid weight ensembles and their Gaussian-process limits"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::vector<CLI::App*> subs;
  for (const std::string name :
       {"sample", "check", "kernel", "simulate", "compare", "eoc", "posterior", "run"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "config file (JSON, comments allowed)");
    sub->add_option("--preset", args.preset, "named preset from the presets directory");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out, "override the output directory");
    sub->add_option("--trials", args.trials, "override the trial count");
    sub->add_option("--threads", args.threads, "worker thread cap (0 = hardware)");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json cfg = load_config(args, command);
    const std::string effective =
        command == "run" ? get_req<std::string>(cfg, "", "command") : command;
    return dispatch(effective, cfg);
  } catch (const ConfigError& e) {
    print_error("config", e.what(), e.key);
    return 2;
  } catch (const std::invalid_argument& e) {
    print_error("config", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
}

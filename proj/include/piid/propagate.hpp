#ifndef PIID_PROPAGATE_HPP
#define PIID_PROPAGATE_HPP

#include <optional>
#include <string>
#include <vector>

#include "piid/activation.hpp"
#include "piid/types.hpp"

namespace piid::propagate {

enum class Arch { Fcn, Cnn };

// A finite-width network draw recipe. For an FCN, widths holds N_0..N_{L+1};
// for a CNN, channels holds C_0..C_{L+1} with square k filters over
// image_rows x image_cols inputs ("same" zero padding, stride 1).
// layer_specs[l-1] describes the weights of layer l; the first layer is
// always iid Gaussian.
struct NetworkConfig {
  Arch arch = Arch::Fcn;
  std::vector<int> widths;
  std::vector<int> channels;
  int filter_size = 3;
  int image_rows = 0;
  int image_cols = 0;
  Activation activation = Activation::tanh();
  double sigma_b2 = 0.0;
  std::vector<SamplerSpec> layer_specs;

  [[nodiscard]] int depth() const {
    const auto& dims = arch == Arch::Fcn ? widths : channels;
    return static_cast<int>(dims.size()) - 2;
  }
  void validate() const;

  // All hidden and output layers drawn from `family`, first layer iid
  // Gaussian at the same sigma_w2 (the regime's first-layer convention).
  static NetworkConfig fcn(const std::vector<int>& widths, const Activation& act,
                           double sigma_b2, const SamplerSpec& family);
  static NetworkConfig cnn(const std::vector<int>& channels, int k, int image_rows,
                           int image_cols, const Activation& act, double sigma_b2,
                           const SamplerSpec& family);
};

// One probed scalar: preactivation h at (layer, unit) for one input. For
// CNNs the unit is (channel, pixel).
struct Probe {
  int layer = 1;
  int unit = 0;       // neuron (FCN) or channel (CNN)
  int pixel_row = 0;  // CNN only
  int pixel_col = 0;
  int input = 0;

  [[nodiscard]] std::string id(Arch arch) const;
};

struct FcnLayerDraw {
  WeightMatrix weights;
  Vector bias;
};

struct CnnLayerDraw {
  ConvFilterBank filters;
  Vector bias;
};

// Exact forward recursions; return the preactivations h^(l) for every layer
// (FCN: vector per layer; CNN: channels x pixels matrix per layer). A
// non-finite value is reported with its layer index.
std::vector<Vector> forward_fcn(const NetworkConfig& config,
                                const std::vector<FcnLayerDraw>& layers, const Vector& x);
std::vector<Matrix> forward_cnn(const NetworkConfig& config,
                                const std::vector<CnnLayerDraw>& layers, const Image& x);

// Fresh weights for one trial, layers 1..upto (derived sub-streams per layer).
std::vector<FcnLayerDraw> draw_fcn_layers(const NetworkConfig& config, const RngSeed& seed,
                                          int upto);
std::vector<CnnLayerDraw> draw_cnn_layers(const NetworkConfig& config, const RngSeed& seed,
                                          int upto);

// Monte-Carlo ensemble over independent initializations: row t holds the
// probed preactivations of trial t. Trials run in parallel on derived seeds;
// assembly is by trial index, so the table is deterministic in (config, seed).
struct EnsembleTable {
  int trials = 0;
  Arch arch = Arch::Fcn;
  std::vector<Probe> probes;
  Matrix samples;  // trials x probes
  std::string config_digest;
  RngSeed seed;
};

EnsembleTable run_ensemble(const NetworkConfig& config, const std::vector<Vector>& inputs,
                           const std::vector<Probe>& probes, int trials,
                           const RngSeed& seed);
EnsembleTable run_ensemble(const NetworkConfig& config, const std::vector<Image>& inputs,
                           const std::vector<Probe>& probes, int trials,
                           const RngSeed& seed);

// CSV `trial,probe_id,value` plus a JSON sidecar with config digest and probe
// metadata.
void export_ensemble(const EnsembleTable& t, const std::string& csv_path,
                     const std::string& sidecar_path);

std::string config_digest(const NetworkConfig& config);

}  // namespace piid::propagate

#endif

#pragma once

#include "mdet/kv_config.hpp"
#include "mdet/ops.hpp"
#include "mdet/parameters.hpp"
#include "mdet/system.hpp"

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace mdet {

class VocabularyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  Index embed_dim = 32;
  Index n_layers = 3;
  Index n_heads = 4;
  Index ffn_multiplier = 4;
  Index n_rbf = 16;
  /// Fourier kernels K'; half go to each angle, each with sin and cos.
  Index n_fourier = 16;
  Index atom_vocab = 55;
  Index spin_vocab = 5;
  /// Charge q maps to table row q + charge_vocab / 2.
  Index charge_vocab = 5;
  bool layer_norm_affine = true;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;

  static ModelConfig toy() { return {}; }
  /// Pretraining-scale architecture (embedding 192, 12 layers, 12 heads, 128 kernels).
  static ModelConfig paper();

  static const std::set<std::string>& keys();
  /// Reads model keys from `cfg`, starting from `base`. Unknown keys are ignored here.
  static ModelConfig from_kv(const KeyValueConfig& cfg, ModelConfig base);
  static ModelConfig from_kv(const KeyValueConfig& cfg);
  KeyValueConfig to_kv() const;
};

/// Azimuthal and polar Fourier frequencies for K' kernels.
std::vector<double> azimuth_frequencies(Index n_fourier);
std::vector<double> polar_frequencies(Index n_fourier);

/// Creates every parameter of the network with its initial value.
///
/// Linear weights are fan-in scaled uniform, biases zero, embedding tables
/// N(0, 1/D), RBF centres U(0, 7) and widths U(0, 3) floored at 0.1, distance
/// scale 1 and shift 0, layer-norm gain 1 and offset 0.
ParameterStore init_parameters(const ModelConfig& cfg, std::uint64_t seed);

/// Edge-transformer force field evaluated at precision S.
///
/// Every call builds a fresh tape, so one instance can serve concurrent
/// evaluations on different systems as long as the parameter store is not
/// being written.
template <typename S>
class MdEt {
 public:
  struct Options {
    bool params_require_grad = false;
    bool positions_require_grad = false;
  };

  /// Tape and handles for one forward evaluation.
  struct Forward {
    Tape<S> tape;
    Var<S> positions;
    Var<S> edges;   // embedded edge tensor [N, N, D]
    Var<S> output;  // final edge tensor [N, N, D]
    Var<S> forces;  // [N, 3]
    std::vector<Var<S>> params;  // aligned with ParameterStore order
  };

  MdEt(ModelConfig cfg, const ParameterStore& params);

  const ModelConfig& config() const { return cfg_; }
  const ParameterStore& parameters() const { return *store_; }

  std::unique_ptr<Forward> forward(const MolecularSystem& system, Options options) const;
  std::unique_ptr<Forward> forward(const MolecularSystem& system) const { return forward(system, Options{}); }

  /// Direct force prediction in eV/Å, no net-force or torque removal.
  Forces predict_forces(const MolecularSystem& system) const;

  /// ∂f_a/∂x_b for flattened index a = 3·atom + axis, via 3N reverse passes.
  Eigen::MatrixXd position_jacobian(const MolecularSystem& system) const;

  // Building blocks; `fw` supplies the tape and bound parameters.
  Var<S> embed(Forward& fw, const MolecularSystem& system) const;
  Var<S> tria_attention(Forward& fw, Var<S> x, Index layer) const;
  Var<S> et_layer(Forward& fw, Var<S> x, Index layer) const;
  Var<S> force_head(Forward& fw, Var<S> x) const;

  /// Adds the gradients of the last backward pass to `out` (64-bit).
  void accumulate_gradients(const Forward& fw, GradientBuffer& out) const;

 private:
  Var<S> param(const Forward& fw, const std::string& path) const;
  Var<S> mlp(Forward& fw, Var<S> x, const std::string& prefix) const;
  Var<S> norm(Forward& fw, Var<S> x, const std::string& prefix) const;

  ModelConfig cfg_;
  const ParameterStore* store_;
  std::unordered_map<std::string, std::size_t> slot_;
  std::vector<S> omega_phi_;
  std::vector<S> omega_theta_;
};

/// (1/N) Σ_i ‖pred_i − target_i‖₂ on the tape of `pred`.
template <typename S>
Var<S> force_loss(Var<S> pred, Var<S> target);

/// Same loss on plain arrays.
double force_loss(const Forces& pred, const Forces& target);

}  // namespace mdet

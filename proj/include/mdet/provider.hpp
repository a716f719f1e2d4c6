#pragma once

#include "mdet/model.hpp"
#include "mdet/system.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>

namespace mdet {

/// Forces (eV/Å) and, when the provider has one, the potential energy (eV).
struct Evaluation {
  Forces forces;
  std::optional<double> energy;
};

/// Anything that maps a configuration to forces: a trained network or an
/// analytic oracle. Implementations must be safe to call concurrently.
class ForceProvider {
 public:
  virtual ~ForceProvider() = default;

  virtual Evaluation evaluate(const MolecularSystem& system) const = 0;
  Forces forces(const MolecularSystem& system) const { return evaluate(system).forces; }

  /// ∂f_a/∂x_b (a, b flattened as 3·atom + axis) computed exactly, if the
  /// provider supports it.
  virtual std::optional<Eigen::MatrixXd> exact_jacobian(const MolecularSystem&) const { return std::nullopt; }

  virtual std::string name() const = 0;
};

/// Wraps an edge-transformer network evaluated at precision S. Jacobians use reverse mode.
template <typename S>
class ModelProvider final : public ForceProvider {
 public:
  ModelProvider(ModelConfig cfg, const ParameterStore& params) : model_(cfg, params) {}

  Evaluation evaluate(const MolecularSystem& system) const override { return {model_.predict_forces(system), {}}; }
  std::optional<Eigen::MatrixXd> exact_jacobian(const MolecularSystem& system) const override {
    return model_.position_jacobian(system);
  }
  std::string name() const override { return sizeof(S) == 4 ? "model/fp32" : "model/fp64"; }

  const MdEt<S>& model() const { return model_; }

 private:
  MdEt<S> model_;
};

}  // namespace mdet

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aelab/matrix.hpp"
#include "aelab/network.hpp"
#include "aelab/tape.hpp"

namespace aelab {

enum class BaseRisk { ULS, ULSDenoising };
enum class PenaltyKind { Contractive, OrthoContractive, NormalizedOrtho };

std::string base_risk_name(BaseRisk b);
BaseRisk base_risk_from_name(const std::string& name);
std::string penalty_kind_name(PenaltyKind k);
PenaltyKind penalty_kind_from_name(const std::string& name);

/// Penalty weight as a function of the training iteration.
struct Schedule {
  enum class Kind { Constant, LinearRamp };
  Kind kind = Kind::Constant;
  double from = 0.0;
  double to = 0.0;
  std::size_t over = 0;

  static Schedule constant(double v) { return {Kind::Constant, v, v, 0}; }
  static Schedule linear_ramp(double from, double to, std::size_t over) {
    return {Kind::LinearRamp, from, to, over};
  }
  double at(std::size_t iteration) const;
};

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::OrthoContractive;
  double weight = 0.0;
  bool scheduled = false;
  Schedule schedule;

  double weight_at(std::size_t iteration) const {
    return scheduled ? schedule.at(iteration) : weight;
  }
};

struct RiskSpec {
  BaseRisk base = BaseRisk::ULS;
  double noise_sigma = 0.0;    // corruption scale for the denoising base
  double epsilon_floor = 1e-8;  // residual floor in the normalized penalty
  std::vector<PenaltySpec> penalties;
};

/// Per-batch metrics; penalty values are unweighted.
struct BatchStats {
  double base_risk = 0.0;  // ½ mean ||g(λ(x)) - x||²
  double rmse = 0.0;       // sqrt(mean ||r||² / input_dim)
  std::vector<double> penalty_values;
};

// Batch reductions sum per-point terms in sorted order, so every value
// below is exactly invariant to a permutation of the batch columns.

/// ½ mean ||g(λ(x)) - x||² over the batch columns.
double uls_risk(const PointModel& model, const Matrix& batch);

/// mean ||J_λ(x)||²_F: encoder Jacobian Frobenius norm (contractive).
double contractive_penalty(const PointModel& model, const Matrix& batch);

/// mean ||J_g(λ(x))^T r||² with r = g(λ(x)) - x: the residual component
/// seen by the decoder tangents; zero exactly at pointwise orthogonality.
double ortho_contractive_penalty(const PointModel& model, const Matrix& batch);

/// mean ||J_g^T r||² / max(||r||², eps): scale-free variant that stays
/// active as the residual shrinks.
double normalized_ortho_penalty(const PointModel& model, const Matrix& batch,
                                double eps = 1e-8);

/// Additive Gaussian corruption, deterministic per (seed, index): the
/// same batch index always sees the same noise draw.
Matrix denoise_corrupt(const Matrix& batch, double sigma, std::uint64_t seed,
                       std::uint64_t index);

/// mean <dg/dz(λ(x)), g_b(λ(x)) - x>² with g_b the binned conditional
/// expectation of the batch and dg/dz central differences of its bin
/// means (one-sided at the extreme nonempty bins).  Requires a 1-D
/// latent and at least 3 nonempty bins.
double cem_orthogonality_risk(const PointModel& model, const Matrix& batch,
                              std::size_t n_bins = 32);

struct ObjectiveValue {
  double total = 0.0;
  BatchStats stats;
};

/// Base risk plus scheduled penalties.  `inputs` feed the encoder,
/// `targets` the residual; they differ only under denoising corruption.
ObjectiveValue total_objective(const PointModel& model, const Matrix& inputs,
                               const Matrix& targets, const RiskSpec& spec,
                               std::size_t iteration);
ObjectiveValue total_objective(const PointModel& model, const Matrix& batch,
                               const RiskSpec& spec, std::size_t iteration);

/// Tape recording of the same objective for gradient-based training.
/// Matches the value path to roundoff (the tape reduces in batch index
/// order rather than sorted order).
struct ObjectiveNodes {
  NodeId total = kNoNode;
  NodeId base = kNoNode;
  std::vector<NodeId> penalties;  // unweighted scalar nodes
  std::vector<double> weights;    // effective weights at the build iteration
};

ObjectiveNodes build_total_objective(Tape& tape, const Net& net, NodeId inputs,
                                     NodeId targets, const RiskSpec& spec,
                                     std::size_t iteration);

}  // namespace aelab

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aelab/data.hpp"
#include "aelab/network.hpp"

namespace aelab {

/// Histogram estimator of the conditional expectation E[X | lambda(X)]
/// over a 1-D latent: equal-width bins spanning the empirical latent
/// range, each carrying the mean of the inputs that land in it.
struct BinnedDecoder {
  double lo = 0.0, hi = 0.0;
  std::vector<double> centers;
  std::vector<std::vector<double>> means;  // empty vector for empty bins
  std::vector<std::size_t> counts;

  std::size_t n_bins() const { return counts.size(); }
  double width() const {
    return (hi - lo) / static_cast<double>(n_bins());
  }
  std::size_t bin_of(double z) const;
  std::size_t nonempty() const;
};

/// Bins the batch by model latent value.  Requires a 1-D latent and at
/// least one point; a (numerically) constant latent has no usable range
/// and raises DegenerateLatentError.
BinnedDecoder build_binned_decoder(const PointModel& model,
                                   const Matrix& points, std::size_t n_bins);

/// Mean over nonempty bins of ||decode(bin center) - bin mean||: how far
/// the decoder sits from the conditional expectation of the data it
/// encodes.  Small value = self-consistent in the principal-curve sense.
double self_consistency_residual(const PointModel& model, const Dataset& ds,
                                 std::size_t n_bins = 32);

/// Mean over points of ||J_g^T r|| / (||r||·||J_g||_F + eps), a
/// scale-free residual/tangent alignment measure in [0, 1]: 0 when
/// residuals are orthogonal to the decoded manifold (the pointwise
/// critical-point condition), 1 when fully aligned.
double orthogonality_defect(const PointModel& model, const Dataset& ds,
                            double eps = 1e-12);

/// Idealized 1-D landscape with the decoder Jacobian perfectly
/// anti-correlated with the residual: J(t) = 1-t, r(t) = t over t in
/// [0,1].  t=1 is the principal-manifold solution, t=0 the identity.
struct PenaltyShapeTable {
  std::vector<double> t;
  std::vector<double> residual_sq;       // t^2
  std::vector<double> ortho;             // t^2 (1-t)^2
  std::vector<double> normalized;        // (1-t)^2
  std::vector<double> total_ortho;       // t^2 + alpha t^2 (1-t)^2
  std::vector<double> total_normalized;  // t^2 + alpha (1-t)^2
  double alpha = 0.0;
};

PenaltyShapeTable penalty_shapes(double alpha, std::size_t n_samples);

/// CSV emission (meta line, header, rows) for the shape table.
std::string penalty_shapes_csv(const PenaltyShapeTable& table);

}  // namespace aelab

#include "aelab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aelab/errors.hpp"

namespace aelab {

std::size_t BinnedDecoder::bin_of(double z) const {
  const double w = width();
  auto idx = static_cast<long long>(std::floor((z - lo) / w));
  idx = std::max(0LL, std::min(idx, static_cast<long long>(n_bins()) - 1));
  return static_cast<std::size_t>(idx);
}

std::size_t BinnedDecoder::nonempty() const {
  std::size_t k = 0;
  for (std::size_t c : counts) k += c > 0 ? 1 : 0;
  return k;
}

BinnedDecoder build_binned_decoder(const PointModel& model,
                                   const Matrix& points, std::size_t n_bins) {
  if (points.cols() == 0) throw EmptyBatchError("binned decoder: empty batch");
  if (n_bins == 0) throw ConfigError("binned decoder: n_bins must be positive");
  if (model.latent_dim() != 1)
    throw ShapeError("binned decoder: requires a 1-D latent");

  const std::size_t n = points.cols();
  std::vector<double> lambda(n);
  for (std::size_t i = 0; i < n; ++i)
    lambda[i] = model.encode(points.col(i))[0];

  auto [mn, mx] = std::minmax_element(lambda.begin(), lambda.end());
  BinnedDecoder bd;
  bd.lo = *mn;
  bd.hi = *mx;
  const double span = bd.hi - bd.lo;
  if (!(span > 1e-12 * std::max(1.0, std::abs(bd.lo))))
    throw DegenerateLatentError("binned decoder: latent is constant");

  bd.centers.resize(n_bins);
  bd.means.assign(n_bins, {});
  bd.counts.assign(n_bins, 0);
  const double w = span / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b)
    bd.centers[b] = bd.lo + w * (static_cast<double>(b) + 0.5);

  const std::size_t d = points.rows();
  std::vector<std::vector<double>> sums(n_bins, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = bd.bin_of(lambda[i]);
    bd.counts[b] += 1;
    for (std::size_t r = 0; r < d; ++r) sums[b][r] += points(r, i);
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bd.counts[b] == 0) continue;
    bd.means[b] = std::move(sums[b]);
    for (double& v : bd.means[b]) v /= static_cast<double>(bd.counts[b]);
  }
  if (bd.nonempty() <= 1)
    throw DegenerateLatentError("binned decoder: all points in one bin");
  return bd;
}

double self_consistency_residual(const PointModel& model, const Dataset& ds,
                                 std::size_t n_bins) {
  const BinnedDecoder bd = build_binned_decoder(model, ds.points, n_bins);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < bd.n_bins(); ++b) {
    if (bd.counts[b] == 0) continue;
    const double zc[1] = {bd.centers[b]};
    const std::vector<double> g = model.decode(zc);
    double sq = 0.0;
    for (std::size_t r = 0; r < g.size(); ++r) {
      const double diff = g[r] - bd.means[b][r];
      sq += diff * diff;
    }
    total += std::sqrt(sq);
    used += 1;
  }
  return total / static_cast<double>(used);
}

double orthogonality_defect(const PointModel& model, const Dataset& ds,
                            double eps) {
  const Matrix& pts = ds.points;
  if (pts.cols() == 0) throw EmptyBatchError("orthogonality defect: empty batch");
  const std::size_t k = model.latent_dim();
  const std::size_t d = model.input_dim();

  double total = 0.0;
  std::vector<double> dir(k, 0.0);
  for (std::size_t i = 0; i < pts.cols(); ++i) {
    const std::vector<double> x = pts.col(i);
    const std::vector<double> z = model.encode(x);
    const std::vector<double> g = model.decode(z);

    std::vector<double> r(d);
    double r_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      r[j] = g[j] - x[j];
      r_sq += r[j] * r[j];
    }

    double fro_sq = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::fill(dir.begin(), dir.end(), 0.0);
      dir[c] = 1.0;
      const std::vector<double> col = model.decode_jvp(z, dir);
      for (double v : col) fro_sq += v * v;
    }

    const std::vector<double> jt_r = model.decode_vjp(z, r);
    double num_sq = 0.0;
    for (double v : jt_r) num_sq += v * v;

    total += std::sqrt(num_sq) /
             (std::sqrt(r_sq) * std::sqrt(fro_sq) + eps);
  }
  return total / static_cast<double>(pts.cols());
}

PenaltyShapeTable penalty_shapes(double alpha, std::size_t n_samples) {
  if (n_samples < 2)
    throw ConfigError("penalty shapes: need at least 2 samples");
  if (!(alpha >= 0.0))
    throw ConfigError("penalty shapes: alpha must be nonnegative");
  PenaltyShapeTable tab;
  tab.alpha = alpha;
  tab.t.resize(n_samples);
  tab.residual_sq.resize(n_samples);
  tab.ortho.resize(n_samples);
  tab.normalized.resize(n_samples);
  tab.total_ortho.resize(n_samples);
  tab.total_normalized.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t =
        static_cast<double>(i) / static_cast<double>(n_samples - 1);
    const double res = t * t;
    const double om = (1.0 - t) * (1.0 - t);
    tab.t[i] = t;
    tab.residual_sq[i] = res;
    tab.ortho[i] = res * om;
    tab.normalized[i] = om;
    tab.total_ortho[i] = res + alpha * res * om;
    tab.total_normalized[i] = res + alpha * om;
  }
  return tab;
}

std::string penalty_shapes_csv(const PenaltyShapeTable& table) {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "# meta: alpha=%.17g\n", table.alpha);
  out += buf;
  out += "t,residual_sq,ortho,normalized,total_ortho,total_normalized\n";
  for (std::size_t i = 0; i < table.t.size(); ++i) {
    const double row[6] = {table.t[i],          table.residual_sq[i],
                           table.ortho[i],      table.normalized[i],
                           table.total_ortho[i], table.total_normalized[i]};
    for (int j = 0; j < 6; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
      out += buf;
      out += j < 5 ? ',' : '\n';
    }
  }
  return out;
}

}  // namespace aelab

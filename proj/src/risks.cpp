#include "aelab/risks.hpp"

#include <algorithm>
#include <cmath>

#include "aelab/diagnostics.hpp"
#include "aelab/errors.hpp"
#include "aelab/prng.hpp"

namespace aelab {

namespace {

// Canonical reduction: summing in sorted order makes every batch value
// exactly invariant to a permutation of the columns.
double sorted_mean(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += v;
  return s / static_cast<double>(terms.size());
}

void check_batch(const PointModel& model, const Matrix& batch,
                 const char* what) {
  if (batch.cols() == 0) throw EmptyBatchError(std::string(what) + ": empty batch");
  if (batch.rows() != model.input_dim())
    throw ShapeError(std::string(what) + ": batch rows do not match model input");
}

std::vector<double> sq_residual_terms(const PointModel& model,
                                      const Matrix& inputs,
                                      const Matrix& targets) {
  std::vector<double> terms(inputs.cols());
  for (std::size_t i = 0; i < inputs.cols(); ++i) {
    const std::vector<double> z = model.encode(inputs.col(i));
    const std::vector<double> g = model.decode(z);
    double sq = 0.0;
    for (std::size_t r = 0; r < g.size(); ++r) {
      const double diff = g[r] - targets(r, i);
      sq += diff * diff;
    }
    terms[i] = sq;
  }
  return terms;
}

double uls_value(const PointModel& model, const Matrix& inputs,
                 const Matrix& targets) {
  std::vector<double> terms = sq_residual_terms(model, inputs, targets);
  return 0.5 * sorted_mean(terms);
}

std::vector<double> ortho_terms(const PointModel& model, const Matrix& inputs,
                                const Matrix& targets, bool normalized,
                                double eps) {
  std::vector<double> terms(inputs.cols());
  for (std::size_t i = 0; i < inputs.cols(); ++i) {
    const std::vector<double> x = inputs.col(i);
    const std::vector<double> z = model.encode(x);
    const std::vector<double> g = model.decode(z);
    std::vector<double> r(g.size());
    double r_sq = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      r[j] = g[j] - targets(j, i);
      r_sq += r[j] * r[j];
    }
    const std::vector<double> jt_r = model.decode_vjp(z, r);
    double num = 0.0;
    for (double v : jt_r) num += v * v;
    terms[i] = normalized ? num / std::max(r_sq, eps) : num;
  }
  return terms;
}

}  // namespace

std::string base_risk_name(BaseRisk b) {
  return b == BaseRisk::ULS ? "uls" : "uls_denoising";
}

BaseRisk base_risk_from_name(const std::string& name) {
  if (name == "uls") return BaseRisk::ULS;
  if (name == "uls_denoising") return BaseRisk::ULSDenoising;
  throw ConfigError("unknown base risk: " + name);
}

std::string penalty_kind_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::Contractive: return "contractive";
    case PenaltyKind::OrthoContractive: return "ortho_contractive";
    case PenaltyKind::NormalizedOrtho: return "normalized_ortho";
  }
  throw ConfigError("unknown penalty kind");
}

PenaltyKind penalty_kind_from_name(const std::string& name) {
  if (name == "contractive") return PenaltyKind::Contractive;
  if (name == "ortho_contractive") return PenaltyKind::OrthoContractive;
  if (name == "normalized_ortho") return PenaltyKind::NormalizedOrtho;
  throw ConfigError("unknown penalty kind: " + name);
}

double Schedule::at(std::size_t iteration) const {
  if (kind == Kind::Constant || over == 0) return to;
  const double f = std::min(
      1.0, static_cast<double>(iteration) / static_cast<double>(over));
  return from + (to - from) * f;
}

double uls_risk(const PointModel& model, const Matrix& batch) {
  check_batch(model, batch, "uls risk");
  return uls_value(model, batch, batch);
}

double contractive_penalty(const PointModel& model, const Matrix& batch) {
  check_batch(model, batch, "contractive penalty");
  const std::size_t d = model.input_dim();
  std::vector<double> terms(batch.cols());
  std::vector<double> dir(d, 0.0);
  for (std::size_t i = 0; i < batch.cols(); ++i) {
    const std::vector<double> x = batch.col(i);
    double fro = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      std::fill(dir.begin(), dir.end(), 0.0);
      dir[j] = 1.0;
      const std::vector<double> col = model.encode_jvp(x, dir);
      for (double v : col) fro += v * v;
    }
    terms[i] = fro;
  }
  return sorted_mean(terms);
}

double ortho_contractive_penalty(const PointModel& model, const Matrix& batch) {
  check_batch(model, batch, "ortho penalty");
  std::vector<double> terms = ortho_terms(model, batch, batch, false, 0.0);
  return sorted_mean(terms);
}

double normalized_ortho_penalty(const PointModel& model, const Matrix& batch,
                                double eps) {
  check_batch(model, batch, "normalized ortho penalty");
  if (!(eps > 0.0))
    throw ConfigError("normalized ortho penalty: eps must be positive");
  std::vector<double> terms = ortho_terms(model, batch, batch, true, eps);
  return sorted_mean(terms);
}

Matrix denoise_corrupt(const Matrix& batch, double sigma, std::uint64_t seed,
                       std::uint64_t index) {
  if (sigma < 0.0) throw ConfigError("denoise corrupt: sigma must be nonnegative");
  Rng rng(substream(seed, index));
  Matrix out = batch;
  for (std::size_t i = 0; i < out.cols(); ++i)
    for (std::size_t r = 0; r < out.rows(); ++r)
      out(r, i) += sigma * rng.normal();
  return out;
}

double cem_orthogonality_risk(const PointModel& model, const Matrix& batch,
                              std::size_t n_bins) {
  check_batch(model, batch, "cem orthogonality risk");
  if (model.latent_dim() != 1)
    throw ShapeError("cem orthogonality risk: requires a 1-D latent");

  const BinnedDecoder bd = build_binned_decoder(model, batch, n_bins);
  std::vector<std::size_t> ne;
  for (std::size_t b = 0; b < bd.n_bins(); ++b)
    if (bd.counts[b] > 0) ne.push_back(b);
  if (ne.size() < 3)
    throw InsufficientBinsError("cem orthogonality risk: fewer than 3 nonempty bins");

  // dg/dz per nonempty bin: central differences over the nearest
  // nonempty neighbors, one-sided at the extremes.
  const std::size_t d = batch.rows();
  std::vector<std::vector<double>> tangent(bd.n_bins());
  for (std::size_t j = 0; j < ne.size(); ++j) {
    const std::size_t p = ne[j == 0 ? 0 : j - 1];
    const std::size_t q = ne[j + 1 < ne.size() ? j + 1 : j];
    const double dz = bd.centers[q] - bd.centers[p];
    std::vector<double> u(d);
    for (std::size_t r = 0; r < d; ++r)
      u[r] = (bd.means[q][r] - bd.means[p][r]) / dz;
    tangent[ne[j]] = std::move(u);
  }

  std::vector<double> terms(batch.cols());
  for (std::size_t i = 0; i < batch.cols(); ++i) {
    const std::vector<double> z = model.encode(batch.col(i));
    const std::size_t b = bd.bin_of(z[0]);
    double dot = 0.0;
    for (std::size_t r = 0; r < d; ++r)
      dot += tangent[b][r] * (bd.means[b][r] - batch(r, i));
    terms[i] = dot * dot;
  }
  return sorted_mean(terms);
}

ObjectiveValue total_objective(const PointModel& model, const Matrix& inputs,
                               const Matrix& targets, const RiskSpec& spec,
                               std::size_t iteration) {
  check_batch(model, inputs, "total objective");
  if (targets.rows() != inputs.rows() || targets.cols() != inputs.cols())
    throw ShapeError("total objective: inputs and targets differ in shape");
  if (!(spec.epsilon_floor > 0.0))
    throw ConfigError("total objective: epsilon floor must be positive");

  ObjectiveValue out;
  out.stats.base_risk = uls_value(model, inputs, targets);
  out.stats.rmse = std::sqrt(2.0 * out.stats.base_risk /
                             static_cast<double>(inputs.rows()));
  out.total = out.stats.base_risk;
  for (const PenaltySpec& pen : spec.penalties) {
    double value = 0.0;
    switch (pen.kind) {
      case PenaltyKind::Contractive:
        value = contractive_penalty(model, inputs);
        break;
      case PenaltyKind::OrthoContractive: {
        std::vector<double> terms = ortho_terms(model, inputs, targets, false, 0.0);
        value = sorted_mean(terms);
        break;
      }
      case PenaltyKind::NormalizedOrtho: {
        std::vector<double> terms =
            ortho_terms(model, inputs, targets, true, spec.epsilon_floor);
        value = sorted_mean(terms);
        break;
      }
    }
    out.stats.penalty_values.push_back(value);
    out.total += pen.weight_at(iteration) * value;
  }
  return out;
}

ObjectiveValue total_objective(const PointModel& model, const Matrix& batch,
                               const RiskSpec& spec, std::size_t iteration) {
  return total_objective(model, batch, batch, spec, iteration);
}

ObjectiveNodes build_total_objective(Tape& tape, const Net& net, NodeId inputs,
                                     NodeId targets, const RiskSpec& spec,
                                     std::size_t iteration) {
  if (!(spec.epsilon_floor > 0.0))
    throw ConfigError("total objective: epsilon floor must be positive");
  const std::size_t B = tape.cols(inputs);
  const NodeId z = record_encode(tape, net, inputs);
  const NodeId g = record_decode(tape, net, z);
  const NodeId r = tape.sub(g, targets);

  ObjectiveNodes out;
  out.base = tape.scale(tape.mean_cols(tape.sqnorm_cols(r)), 0.5);
  NodeId total = out.base;
  NodeId jt_r = kNoNode;  // J_g^T r, shared by both orthogonality penalties

  for (const PenaltySpec& pen : spec.penalties) {
    NodeId p = kNoNode;
    switch (pen.kind) {
      case PenaltyKind::Contractive: {
        const std::size_t d = net.arch.input_dim;
        NodeId acc = kNoNode;
        for (std::size_t j = 0; j < d; ++j) {
          Matrix ej(d, B);
          for (std::size_t c = 0; c < B; ++c) ej(j, c) = 1.0;
          const NodeId tj = tape.jvp(z, inputs, tape.constant(ej));
          const NodeId mj = tape.mean_cols(tape.sqnorm_cols(tj));
          acc = acc == kNoNode ? mj : tape.add(acc, mj);
        }
        p = acc;
        break;
      }
      case PenaltyKind::OrthoContractive: {
        if (jt_r == kNoNode) jt_r = tape.vjp(g, z, r);
        p = tape.mean_cols(tape.sqnorm_cols(jt_r));
        break;
      }
      case PenaltyKind::NormalizedOrtho: {
        if (jt_r == kNoNode) jt_r = tape.vjp(g, z, r);
        const NodeId den = tape.max_c(tape.sqnorm_cols(r), spec.epsilon_floor);
        p = tape.mean_cols(tape.div(tape.sqnorm_cols(jt_r), den));
        break;
      }
    }
    const double w = pen.weight_at(iteration);
    out.penalties.push_back(p);
    out.weights.push_back(w);
    total = tape.add(total, tape.scale(p, w));
  }
  out.total = total;
  return out;
}

}  // namespace aelab

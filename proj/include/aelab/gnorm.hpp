#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aelab/matrix.hpp"

namespace aelab {

/// Scalar objective with closed-form gradient and Hessian.
struct TestFunction {
  std::string name;
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> f;
  std::function<std::vector<double>(std::span<const double>)> grad;
  std::function<Matrix(std::span<const double>)> hessian;
};

/// Fixed gallery: bowl, saddle, cubic_plus_linear, rosenbrock, illcond.
const std::vector<TestFunction>& gallery();
const TestFunction& gallery_function(const std::string& name);

struct DescentOptions {
  double step = 1e-2;          // initial trial step, reset every iteration
  std::size_t max_iters = 200000;
  double tol = 1e-8;           // stop when ||grad f|| < tol
  double stat_tol = 1e-10;     // stop when the descent direction vanishes
  double diverge_norm = 1e8;   // throw DivergenceError past this
  std::size_t max_halvings = 60;
};

struct DescentResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_norm = 0.0;   // ||grad f|| at the final iterate
  std::size_t iterations = 0;
  bool converged = false;   // true iff grad_norm < tol
  std::vector<double> grad_norm_history;  // per accepted iterate, x0 first
};

/// Minimizes F(x) = ½||grad f(x)||² by descending along -H(x)·grad f(x)
/// with step halving whenever F would increase.  Stops at ||grad f|| <
/// tol (converged), when the direction or the achievable decrease
/// vanishes (a critical point of F, possibly spurious), or at max_iters.
DescentResult gnorm_descent(const TestFunction& fn, std::span<const double> x0,
                            const DescentOptions& opts = {});

/// Plain gradient descent on f with the same halving rule on f.  Used as
/// the saddle-repelled baseline; throws DivergenceError past the bound.
DescentResult gd_descent(const TestFunction& fn, std::span<const double> x0,
                         const DescentOptions& opts = {});

/// Newton iteration on grad f = 0: x <- x - H⁻¹ grad f.  Converges to
/// critical points of any signature; throws SingularHessianError where
/// the Hessian is singular.
DescentResult newton_descent(const TestFunction& fn, std::span<const double> x0,
                             const DescentOptions& opts = {});

enum class TerminalKind { TrueCritical, SpuriousGnormCritical, NotCritical };

std::string terminal_kind_name(TerminalKind k);

/// Distinguishes a genuine critical point (grad f ~ 0) from a spurious
/// minimum of ||grad f||² where the Hessian annihilates a nonzero
/// gradient (H·grad f ~ 0, grad f != 0).
TerminalKind classify_terminal(const TestFunction& fn,
                               std::span<const double> x,
                               double grad_tol = 1e-6, double stat_tol = 1e-6);

}  // namespace aelab

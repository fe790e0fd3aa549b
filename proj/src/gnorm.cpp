#include "aelab/gnorm.hpp"

#include <cmath>

#include "aelab/errors.hpp"

namespace aelab {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> hess_grad(const TestFunction& fn,
                              std::span<const double> x,
                              std::span<const double> g) {
  const Matrix h = fn.hessian(x);
  std::vector<double> d(fn.dim, 0.0);
  for (std::size_t i = 0; i < fn.dim; ++i)
    for (std::size_t j = 0; j < fn.dim; ++j) d[i] += h(i, j) * g[j];
  return d;
}

void check_start(const TestFunction& fn, std::span<const double> x0) {
  if (x0.size() != fn.dim)
    throw ShapeError("descent: start point dimension does not match " +
                     fn.name);
}

}  // namespace

const std::vector<TestFunction>& gallery() {
  static const std::vector<TestFunction> fns = [] {
    std::vector<TestFunction> v;
    v.push_back({"bowl", 2,
                 [](std::span<const double> x) {
                   return 0.5 * (x[0] * x[0] + x[1] * x[1]);
                 },
                 [](std::span<const double> x) {
                   return std::vector<double>{x[0], x[1]};
                 },
                 [](std::span<const double>) {
                   Matrix h(2, 2);
                   h(0, 0) = 1.0;
                   h(1, 1) = 1.0;
                   return h;
                 }});
    v.push_back({"saddle", 2,
                 [](std::span<const double> x) {
                   return x[0] * x[0] - x[1] * x[1];
                 },
                 [](std::span<const double> x) {
                   return std::vector<double>{2.0 * x[0], -2.0 * x[1]};
                 },
                 [](std::span<const double>) {
                   Matrix h(2, 2);
                   h(0, 0) = 2.0;
                   h(1, 1) = -2.0;
                   return h;
                 }});
    // No true critical point anywhere; the Hessian annihilates the
    // gradient at the origin, the canonical spurious case.
    v.push_back({"cubic_plus_linear", 1,
                 [](std::span<const double> x) {
                   return x[0] * x[0] * x[0] + x[0];
                 },
                 [](std::span<const double> x) {
                   return std::vector<double>{3.0 * x[0] * x[0] + 1.0};
                 },
                 [](std::span<const double> x) {
                   Matrix h(1, 1);
                   h(0, 0) = 6.0 * x[0];
                   return h;
                 }});
    v.push_back({"rosenbrock", 2,
                 [](std::span<const double> x) {
                   const double a = 1.0 - x[0];
                   const double b = x[1] - x[0] * x[0];
                   return a * a + 100.0 * b * b;
                 },
                 [](std::span<const double> x) {
                   const double b = x[1] - x[0] * x[0];
                   return std::vector<double>{
                       -2.0 * (1.0 - x[0]) - 400.0 * x[0] * b, 200.0 * b};
                 },
                 [](std::span<const double> x) {
                   Matrix h(2, 2);
                   h(0, 0) = 2.0 - 400.0 * x[1] + 1200.0 * x[0] * x[0];
                   h(0, 1) = -400.0 * x[0];
                   h(1, 0) = -400.0 * x[0];
                   h(1, 1) = 200.0;
                   return h;
                 }});
    v.push_back({"illcond", 2,
                 [](std::span<const double> x) {
                   return 0.5 * (x[0] * x[0] + 100.0 * x[1] * x[1]);
                 },
                 [](std::span<const double> x) {
                   return std::vector<double>{x[0], 100.0 * x[1]};
                 },
                 [](std::span<const double>) {
                   Matrix h(2, 2);
                   h(0, 0) = 1.0;
                   h(1, 1) = 100.0;
                   return h;
                 }});
    return v;
  }();
  return fns;
}

const TestFunction& gallery_function(const std::string& name) {
  for (const TestFunction& fn : gallery())
    if (fn.name == name) return fn;
  throw ConfigError("unknown test function: " + name);
}

DescentResult gnorm_descent(const TestFunction& fn, std::span<const double> x0,
                            const DescentOptions& opts) {
  check_start(fn, x0);
  DescentResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g = fn.grad(res.x);
  double gn = norm(g);
  double obj = 0.5 * gn * gn;
  res.grad_norm_history.push_back(gn);

  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    if (gn < opts.tol) {
      res.converged = true;
      break;
    }
    if (norm(res.x) > opts.diverge_norm)
      throw DivergenceError("gnorm descent diverged on " + fn.name);

    const std::vector<double> d = hess_grad(fn, res.x, g);
    if (norm(d) < opts.stat_tol * std::max(1.0, gn)) break;

    double eta = opts.step;
    bool accepted = false;
    std::vector<double> xn(fn.dim), gnew;
    double obj_new = 0.0;
    for (std::size_t h = 0; h <= opts.max_halvings; ++h) {
      for (std::size_t i = 0; i < fn.dim; ++i) xn[i] = res.x[i] - eta * d[i];
      gnew = fn.grad(xn);
      const double gnn = norm(gnew);
      obj_new = 0.5 * gnn * gnn;
      if (std::isfinite(obj_new) && obj_new < obj) {
        accepted = true;
        gn = gnn;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    res.x = xn;
    g = std::move(gnew);
    obj = obj_new;
    res.iterations += 1;
    res.grad_norm_history.push_back(gn);
  }

  res.converged = res.converged || gn < opts.tol;
  res.f = fn.f(res.x);
  res.grad_norm = gn;
  return res;
}

DescentResult gd_descent(const TestFunction& fn, std::span<const double> x0,
                         const DescentOptions& opts) {
  check_start(fn, x0);
  DescentResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g = fn.grad(res.x);
  double gn = norm(g);
  double fv = fn.f(res.x);
  res.grad_norm_history.push_back(gn);

  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    if (gn < opts.tol) {
      res.converged = true;
      break;
    }
    if (norm(res.x) > opts.diverge_norm)
      throw DivergenceError("gradient descent diverged on " + fn.name);

    double eta = opts.step;
    bool accepted = false;
    std::vector<double> xn(fn.dim);
    double f_new = 0.0;
    for (std::size_t h = 0; h <= opts.max_halvings; ++h) {
      for (std::size_t i = 0; i < fn.dim; ++i) xn[i] = res.x[i] - eta * g[i];
      f_new = fn.f(xn);
      if (std::isfinite(f_new) && f_new < fv) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    res.x = xn;
    g = fn.grad(res.x);
    gn = norm(g);
    fv = f_new;
    res.iterations += 1;
    res.grad_norm_history.push_back(gn);
  }

  res.converged = res.converged || gn < opts.tol;
  res.f = fv;
  res.grad_norm = gn;
  return res;
}

DescentResult newton_descent(const TestFunction& fn, std::span<const double> x0,
                             const DescentOptions& opts) {
  check_start(fn, x0);
  DescentResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g = fn.grad(res.x);
  double gn = norm(g);
  res.grad_norm_history.push_back(gn);

  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    if (gn < opts.tol) {
      res.converged = true;
      break;
    }
    if (norm(res.x) > opts.diverge_norm)
      throw DivergenceError("newton iteration diverged on " + fn.name);

    const std::vector<double> v = solve_dense(fn.hessian(res.x), g);
    for (std::size_t i = 0; i < fn.dim; ++i) res.x[i] -= v[i];
    g = fn.grad(res.x);
    gn = norm(g);
    res.iterations += 1;
    res.grad_norm_history.push_back(gn);
  }

  res.converged = res.converged || gn < opts.tol;
  res.f = fn.f(res.x);
  res.grad_norm = gn;
  return res;
}

std::string terminal_kind_name(TerminalKind k) {
  switch (k) {
    case TerminalKind::TrueCritical: return "true_critical";
    case TerminalKind::SpuriousGnormCritical: return "spurious_gnorm_critical";
    case TerminalKind::NotCritical: return "not_critical";
  }
  throw ConfigError("unknown terminal kind");
}

TerminalKind classify_terminal(const TestFunction& fn,
                               std::span<const double> x, double grad_tol,
                               double stat_tol) {
  check_start(fn, x);
  const std::vector<double> g = fn.grad(x);
  const double gn = norm(g);
  if (gn < grad_tol) return TerminalKind::TrueCritical;
  const std::vector<double> d = hess_grad(fn, x, g);
  if (norm(d) < stat_tol * std::max(1.0, gn))
    return TerminalKind::SpuriousGnormCritical;
  return TerminalKind::NotCritical;
}

}  // namespace aelab

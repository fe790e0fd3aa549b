#include "aelab/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aelab/config.hpp"
#include "aelab/data.hpp"
#include "aelab/diagnostics.hpp"
#include "aelab/errors.hpp"
#include "aelab/gnorm.hpp"
#include "aelab/io.hpp"
#include "aelab/network.hpp"
#include "aelab/risks.hpp"
#include "aelab/svg.hpp"
#include "aelab/train.hpp"

namespace aelab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("config: " + path + ": " + e.what());
  }
}

/// Analytic projector onto the unit circle; the built-in reference model
/// for auditing the diagnostics pipeline against a known-orthogonal map.
class CircleProjector final : public PointModel {
public:
  std::size_t input_dim() const override { return 2; }
  std::size_t latent_dim() const override { return 1; }
  std::vector<double> encode(std::span<const double> x) const override {
    return {std::atan2(x[1], x[0])};
  }
  std::vector<double> decode(std::span<const double> z) const override {
    return {std::cos(z[0]), std::sin(z[0])};
  }
  std::vector<double> decode_jvp(std::span<const double> z,
                                 std::span<const double> v) const override {
    return {-std::sin(z[0]) * v[0], std::cos(z[0]) * v[0]};
  }
  std::vector<double> decode_vjp(std::span<const double> z,
                                 std::span<const double> w) const override {
    return {-std::sin(z[0]) * w[0] + std::cos(z[0]) * w[1]};
  }
  std::vector<double> encode_jvp(std::span<const double> x,
                                 std::span<const double> v) const override {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    return {(-x[1] * v[0] + x[0] * v[1]) / r2};
  }
};

std::vector<double> point_at(const Matrix& m, std::size_t j) {
  std::vector<double> x(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) x[r] = m(r, j);
  return x;
}

std::string recon_csv(const Net& net, const Dataset& ds, const json& meta) {
  std::vector<char> is_test(ds.size(), 0);
  for (std::size_t i : ds.test) is_test[i] = 1;
  const std::size_t latent = net.arch.latent_dim();
  std::string out = "# meta: " + meta.dump() + "\n";
  out += "split,i,x0,x1";
  for (std::size_t k = 0; k < latent; ++k) out += ",z" + std::to_string(k);
  out += ",r0,r1\n";
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const std::vector<double> x = point_at(ds.points, j);
    const std::vector<double> z = encode(net, x);
    const std::vector<double> r = decode(net, z);
    out += is_test[j] ? "test," : "train,";
    out += std::to_string(j);
    for (double v : x) out += "," + fmt17(v);
    for (double v : z) out += "," + fmt17(v);
    for (double v : r) out += "," + fmt17(v);
    out += '\n';
  }
  return out;
}

std::string grid_csv(const Net& net, const Dataset& ds, json meta) {
  double r_max = 0.0;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    double n2 = 0.0;
    for (std::size_t r = 0; r < ds.dim(); ++r) n2 += ds.points(r, j) * ds.points(r, j);
    r_max = std::max(r_max, std::sqrt(n2));
  }
  if (r_max == 0.0) r_max = 1.0;
  const std::size_t n_rays = 12, n_circles = 6, samples = 100;
  meta["grid"] = {{"n_rays", n_rays},
                  {"n_circles", n_circles},
                  {"r_max", 1.1 * r_max},
                  {"samples_per_line", samples}};
  const PolarGrid grid = gen_polar_grid(n_rays, n_circles, 1.1 * r_max, samples);
  const PolarGrid mapped = map_grid(net, grid);

  std::string out = "# meta: " + meta.dump() + "\n";
  out += "kind,k,i,x0,x1,m0,m1\n";
  auto emit = [&](const char* kind, const std::vector<Matrix>& orig,
                  const std::vector<Matrix>& img) {
    for (std::size_t k = 0; k < orig.size(); ++k)
      for (std::size_t i = 0; i < orig[k].cols(); ++i) {
        out += kind;
        out += "," + std::to_string(k) + "," + std::to_string(i);
        out += "," + fmt17(orig[k](0, i)) + "," + fmt17(orig[k](1, i));
        out += "," + fmt17(img[k](0, i)) + "," + fmt17(img[k](1, i));
        out += '\n';
      }
  };
  emit("ray", grid.rays, mapped.rays);
  emit("circle", grid.circles, mapped.circles);
  return out;
}

struct RunOutcome {
  RunRecord rec;
  bool diverged = false;
  std::string message;
};

/// Trains one configuration and writes the full artifact set into `dir`.
/// On divergence the partial record still produces every artifact.
/// The config as embedded in artifact metas: everything needed to rerun
/// the experiment, minus where the files happen to land.
json provenance(const ExperimentConfig& ec) {
  json t = ec.tree;
  t.erase("output_dir");
  return t;
}

RunOutcome run_cell(const ExperimentConfig& ec, const std::string& dir_in) {
  const std::string dir = dir_in.empty() ? "." : dir_in;
  fs::create_directories(dir);
  const Dataset ds = dataset_from_spec(ec.dataset);
  RunOutcome out;
  try {
    out.rec = train(ec.train, ds);
  } catch (const TrainDivergedError& e) {
    out.rec = e.partial;
    out.diverged = true;
    out.message = e.what();
  }
  const json prov = provenance(ec);
  const std::string run = run_record_to_csv(out.rec);
  write_file_atomic(dir + "/run.csv", run);
  write_file_atomic(dir + "/checkpoint.txt", checkpoint_to_string(out.rec.net));
  const std::string recon =
      recon_csv(out.rec.net, ds,
                json{{"kind", "reconstruction_scatter"}, {"config", prov}});
  write_file_atomic(dir + "/recon.csv", recon);
  const std::string grid = grid_csv(
      out.rec.net, ds, json{{"kind", "deformed_grid"}, {"config", prov}});
  write_file_atomic(dir + "/grid.csv", grid);
  write_file_atomic(dir + "/run.svg", svg::run_csv_to_svg(run));
  write_file_atomic(dir + "/recon.svg", svg::scatter_csv_to_svg(recon));
  write_file_atomic(dir + "/grid.svg", svg::grid_csv_to_svg(grid));
  return out;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              bool seed_given, std::uint64_t seed) {
  ExperimentConfig ec = load_experiment(config_path);
  if (seed_given) {
    set_path(ec.tree, "train.seed", seed);
    ec.train.seed = seed;
  }
  if (!out_dir.empty()) {
    ec.output_dir = out_dir;
    ec.tree["output_dir"] = out_dir;
  }
  if (!ec.axes.empty())
    throw ConfigError(
        "config: this experiment declares sweep axes; run `sweep` instead");
  const RunOutcome oc = run_cell(ec, ec.output_dir);
  std::printf("wrote %s/{run,recon,grid}.csv + .svg, checkpoint.txt (%zu eval rows)\n",
              ec.output_dir.c_str(), oc.rec.rows.size());
  if (oc.diverged) {
    std::fprintf(stderr, "%s\n", oc.message.c_str());
    return 1;
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              bool seed_given, std::uint64_t seed, std::size_t threads) {
  ExperimentConfig ec = load_experiment(config_path);
  if (seed_given) {
    set_path(ec.tree, "train.seed", seed);
    ec.train.seed = seed;
  }
  if (!out_dir.empty()) {
    ec.output_dir = out_dir;
    ec.tree["output_dir"] = out_dir;
  }
  const std::vector<json> cells = expand_sweep(ec);
  std::vector<ExperimentConfig> cfgs;
  cfgs.reserve(cells.size());
  for (const json& c : cells) cfgs.push_back(experiment_from_json(c));

  const std::string root = ec.output_dir.empty() ? "." : ec.output_dir;
  fs::create_directories(root);

  struct CellResult {
    bool diverged = false;
    bool failed = false;
    std::string message;
    double train_rmse = std::nan("");
    double test_rmse = std::nan("");
  };
  std::vector<CellResult> results(cfgs.size());

  auto cell_dir = [&](std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "cell_%03zu", i);
    return root + "/" + buf;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfgs.size()) break;
      try {
        const RunOutcome oc = run_cell(cfgs[i], cell_dir(i));
        results[i].diverged = oc.diverged;
        results[i].message = oc.message;
        if (!oc.rec.rows.empty()) {
          results[i].train_rmse = oc.rec.rows.back().train_rmse;
          results[i].test_rmse = oc.rec.rows.back().test_rmse;
        }
      } catch (const std::exception& e) {
        results[i].failed = true;
        results[i].message = e.what();
      }
    }
  };
  const std::size_t k = std::clamp<std::size_t>(threads, 1, cfgs.size());
  if (k <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::string summary =
      "# meta: " +
      json{{"kind", "sweep_summary"}, {"config", provenance(ec)}}.dump() +
      "\n";
  summary += "cell";
  for (const SweepAxis& ax : ec.axes) summary += "," + ax.path;
  summary += ",final_train_rmse,final_test_rmse,status\n";
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    summary += std::to_string(i);
    for (const SweepAxis& ax : ec.axes) {
      json cell = cells[i];  // resolve against the cell's own tree
      const json& v = resolve_path(cell, ax.path);
      summary += ",";
      summary += v.is_string() ? v.get<std::string>() : v.dump();
    }
    summary += "," + fmt17(results[i].train_rmse);
    summary += "," + fmt17(results[i].test_rmse);
    summary += results[i].failed ? ",failed"
               : results[i].diverged ? ",diverged"
                                     : ",ok";
    summary += '\n';
  }
  write_file_atomic(root + "/summary.csv", summary);

  bool all_ok = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const CellResult& r = results[i];
    std::printf("cell_%03zu: %s", i,
                r.failed ? "failed" : r.diverged ? "diverged" : "ok");
    if (!r.failed && !std::isnan(r.train_rmse))
      std::printf(" (train rmse %.6g, test rmse %.6g)", r.train_rmse,
                  r.test_rmse);
    std::printf("\n");
    if (r.failed || r.diverged) {
      std::fprintf(stderr, "cell_%03zu: %s\n", i, r.message.c_str());
      all_ok = false;
    }
  }
  std::printf("wrote %s/summary.csv (%zu cells)\n", root.c_str(), cfgs.size());
  return all_ok ? 0 : 1;
}



int cmd_gnorm(const std::string& config_path, const std::string& out_dir) {
  const GnormConfig gc = gnorm_config_from_json(load_json(config_path));
  const TestFunction fn = gallery_function(gc.function);
  if (fn.dim != gc.x0.size())
    throw ConfigError("config: function '" + gc.function + "' expects " +
                      std::to_string(fn.dim) + " coordinates in x0, got " +
                      std::to_string(gc.x0.size()));

  json cfg = {{"version", 1},
              {"name", gc.name},
              {"function", gc.function},
              {"x0", gc.x0},
              {"method", gc.method},
              {"options",
               {{"step", gc.options.step},
                {"max_iters", gc.options.max_iters},
                {"tol", gc.options.tol},
                {"stat_tol", gc.options.stat_tol},
                {"diverge_norm", gc.options.diverge_norm},
                {"max_halvings", gc.options.max_halvings}}},
              {"grad_tol", gc.grad_tol},
              {"stat_tol", gc.stat_tol}};

  fs::create_directories(out_dir);
  DescentResult dr;
  try {
    if (gc.method == "gnorm")
      dr = gnorm_descent(fn, gc.x0, gc.options);
    else if (gc.method == "newton")
      dr = newton_descent(fn, gc.x0, gc.options);
    else
      dr = gd_descent(fn, gc.x0, gc.options);
  } catch (const DivergenceError& e) {
    json meta = {{"kind", "descent_trajectory"},
                 {"config", cfg},
                 {"status", "diverged"},
                 {"error", e.what()}};
    const std::string csv =
        "# meta: " + meta.dump() + "\nstep,grad_norm,log10_grad_norm\n";
    write_file_atomic(out_dir + "/gnorm.csv", csv);
    write_file_atomic(out_dir + "/gnorm.svg", svg::gnorm_csv_to_svg(csv));
    std::printf("terminal: diverged\n");
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  const TerminalKind terminal =
      classify_terminal(fn, dr.x, gc.grad_tol, gc.stat_tol);
  json meta = {{"kind", "descent_trajectory"},
               {"config", cfg},
               {"status", dr.converged ? "converged" : "stopped"},
               {"final_x", dr.x},
               {"f", dr.f},
               {"grad_norm", dr.grad_norm},
               {"iterations", dr.iterations},
               {"terminal", terminal_kind_name(terminal)}};
  std::string csv = "# meta: " + meta.dump() + "\n";
  csv += "step,grad_norm,log10_grad_norm\n";
  for (std::size_t i = 0; i < dr.grad_norm_history.size(); ++i) {
    const double gn = dr.grad_norm_history[i];
    csv += std::to_string(i) + "," + fmt17(gn) + "," + fmt17(std::log10(gn)) +
           "\n";
  }
  write_file_atomic(out_dir + "/gnorm.csv", csv);
  write_file_atomic(out_dir + "/gnorm.svg", svg::gnorm_csv_to_svg(csv));

  std::string at = "(";
  for (std::size_t i = 0; i < dr.x.size(); ++i)
    at += (i ? ", " : "") + fmt("%.6g", dr.x[i]);
  at += ")";
  std::printf("terminal: %s at %s, |grad f| = %.3g after %zu iterations\n",
              terminal_kind_name(terminal).c_str(), at.c_str(), dr.grad_norm,
              dr.iterations);
  std::printf("wrote %s/gnorm.csv, %s/gnorm.svg\n", out_dir.c_str(),
              out_dir.c_str());
  return 0;
}

int cmd_diagnose(const std::string& config_path, const std::string& out_dir) {
  const DiagnoseConfig dc = diagnose_config_from_json(load_json(config_path));
  const Dataset ds = dataset_from_spec(dc.dataset);

  Net net;
  std::unique_ptr<PointModel> model;
  if (!dc.checkpoint.empty()) {
    net = load_checkpoint(dc.checkpoint);
    model = std::make_unique<NetModel>(net);
  } else {
    model = std::make_unique<CircleProjector>();
  }
  if (model->input_dim() != ds.dim())
    throw ConfigError("diagnose: model expects " +
                      std::to_string(model->input_dim()) +
                      "-dimensional points, dataset has " +
                      std::to_string(ds.dim()));

  const BatchStats tr =
      total_objective(*model, ds.train_matrix(), dc.risk, 0).stats;
  const BatchStats te =
      total_objective(*model, ds.test_matrix(), dc.risk, 0).stats;

  std::vector<std::tuple<std::string, std::string, double>> rows;
  rows.emplace_back("base_risk", "train", tr.base_risk);
  rows.emplace_back("base_risk", "test", te.base_risk);
  rows.emplace_back("rmse", "train", tr.rmse);
  rows.emplace_back("rmse", "test", te.rmse);
  for (std::size_t p = 0; p < dc.risk.penalties.size(); ++p) {
    const std::string name = penalty_kind_name(dc.risk.penalties[p].kind);
    rows.emplace_back(name, "train", tr.penalty_values[p]);
    rows.emplace_back(name, "test", te.penalty_values[p]);
  }
  rows.emplace_back("orthogonality_defect", "all",
                    orthogonality_defect(*model, ds));
  if (model->latent_dim() == 1)
    rows.emplace_back("self_consistency", "all",
                      self_consistency_residual(*model, ds, dc.bins));

  json meta = {{"kind", "diagnostics"},
               {"config",
                {{"version", 1},
                 {"name", dc.name},
                 {"dataset", dc.dataset},
                 {"checkpoint", dc.checkpoint},
                 {"reference", dc.reference},
                 {"risk", risk_spec_to_json(dc.risk)},
                 {"bins", dc.bins}}}};
  std::string csv = "# meta: " + meta.dump() + "\n";
  csv += "metric,split,value\n";
  for (const auto& [metric, split, value] : rows) {
    csv += metric + "," + split + "," + fmt17(value) + "\n";
    std::printf("%-22s %-6s %.10g\n", metric.c_str(), split.c_str(), value);
  }
  fs::create_directories(out_dir);
  write_file_atomic(out_dir + "/diagnostics.csv", csv);
  std::printf("wrote %s/diagnostics.csv\n", out_dir.c_str());
  return 0;
}

int cmd_shapes(const std::string& config_path, const std::string& out_dir) {
  const ShapesConfig sc = shapes_config_from_json(load_json(config_path));
  const PenaltyShapeTable table = penalty_shapes(sc.alpha, sc.samples);
  const std::string csv = penalty_shapes_csv(table);
  fs::create_directories(out_dir);
  write_file_atomic(out_dir + "/shapes.csv", csv);
  write_file_atomic(out_dir + "/shapes.svg", svg::shapes_csv_to_svg(csv));
  std::printf("wrote %s/shapes.csv, %s/shapes.svg (alpha=%g, %zu samples)\n",
              out_dir.c_str(), out_dir.c_str(), sc.alpha, sc.samples);
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"autoencoder regularization lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
  };

  CLI::App* train_cmd =
      app.add_subcommand("train", "train one model, emit curves and plots");
  add_common(train_cmd);
  CLI::Option* train_seed = train_cmd->add_option("--seed", seed, "seed override");

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "train every cell of the declared sweep");
  add_common(sweep_cmd);
  CLI::Option* sweep_seed = sweep_cmd->add_option("--seed", seed, "seed override");
  sweep_cmd->add_option("--threads", threads, "parallel cells");

  CLI::App* gnorm_cmd = app.add_subcommand(
      "gnorm", "run gradient-norm/newton/gd descent on a test function");
  add_common(gnorm_cmd);

  CLI::App* diag_cmd = app.add_subcommand(
      "diagnose", "audit a checkpoint: risks, penalties, orthogonality");
  add_common(diag_cmd);

  CLI::App* shapes_cmd = app.add_subcommand(
      "shapes", "emit the idealized penalty landscape table and plot");
  add_common(shapes_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(config_path, out_dir, train_seed->count() > 0, seed);
    if (sweep_cmd->parsed())
      return cmd_sweep(config_path, out_dir, sweep_seed->count() > 0, seed,
                       threads);
    const std::string dir = out_dir.empty() ? "." : out_dir;
    if (gnorm_cmd->parsed()) return cmd_gnorm(config_path, dir);
    if (diag_cmd->parsed()) return cmd_diagnose(config_path, dir);
    if (shapes_cmd->parsed()) return cmd_shapes(config_path, dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace aelab::cli

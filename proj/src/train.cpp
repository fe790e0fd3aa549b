#include "aelab/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "aelab/io.hpp"
#include "aelab/prng.hpp"
#include "aelab/tape.hpp"

namespace aelab {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string optimizer_name(Optimizer o) {
  return o == Optimizer::SGD ? "sgd" : "adam";
}

Optimizer optimizer_from_name(const std::string& name) {
  if (name == "sgd") return Optimizer::SGD;
  if (name == "adam") return Optimizer::Adam;
  throw ConfigError("unknown optimizer: " + name);
}

nlohmann::json schedule_to_json(const Schedule& s) {
  if (s.kind == Schedule::Kind::Constant)
    return {{"kind", "constant"}, {"value", s.to}};
  return {{"kind", "linear_ramp"},
          {"from", s.from},
          {"to", s.to},
          {"over", s.over}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant")
    return Schedule::constant(j.at("value").get<double>());
  if (kind == "linear_ramp")
    return Schedule::linear_ramp(j.at("from").get<double>(),
                                 j.at("to").get<double>(),
                                 j.at("over").get<std::size_t>());
  throw ConfigError("unknown schedule kind: " + kind);
}

nlohmann::json risk_spec_to_json(const RiskSpec& spec) {
  nlohmann::json pens = nlohmann::json::array();
  for (const PenaltySpec& p : spec.penalties) {
    nlohmann::json e = {{"kind", penalty_kind_name(p.kind)},
                        {"weight", p.weight}};
    if (p.scheduled) e["schedule"] = schedule_to_json(p.schedule);
    pens.push_back(e);
  }
  return {{"base", base_risk_name(spec.base)},
          {"noise_sigma", spec.noise_sigma},
          {"epsilon_floor", spec.epsilon_floor},
          {"penalties", pens}};
}

RiskSpec risk_spec_from_json(const nlohmann::json& j) {
  RiskSpec spec;
  spec.base = base_risk_from_name(j.at("base").get<std::string>());
  spec.noise_sigma = j.value("noise_sigma", 0.0);
  spec.epsilon_floor = j.value("epsilon_floor", 1e-8);
  for (const nlohmann::json& e : j.value("penalties", nlohmann::json::array())) {
    PenaltySpec p;
    p.kind = penalty_kind_from_name(e.at("kind").get<std::string>());
    p.weight = e.value("weight", 0.0);
    if (e.contains("schedule")) {
      p.scheduled = true;
      p.schedule = schedule_from_json(e.at("schedule"));
    }
    spec.penalties.push_back(p);
  }
  return spec;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"arch", serialize_arch(cfg.arch)},
          {"latent_index", cfg.arch.latent_index},
          {"activation", act_name(cfg.arch.activation)},
          {"input_dim", cfg.arch.input_dim},
          {"optimizer", optimizer_name(cfg.optimizer)},
          {"lr", cfg.lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"adam_eps", cfg.adam_eps},
          {"iterations", cfg.iterations},
          {"batch_size", cfg.batch_size},
          {"eval_every", cfg.eval_every},
          {"seed", cfg.seed},
          {"risk", risk_spec_to_json(cfg.risk)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.arch = parse_arch(j.at("arch").get<std::string>(),
                        j.value("input_dim", std::size_t{2}));
  if (j.contains("latent_index"))
    cfg.arch.latent_index = j.at("latent_index").get<std::size_t>();
  if (j.contains("activation"))
    cfg.arch.activation = act_from_name(j.at("activation").get<std::string>());
  if (cfg.arch.latent_index >= cfg.arch.widths.size())
    throw ConfigError("train config: latent index out of range");
  cfg.optimizer = optimizer_from_name(j.value("optimizer", std::string("adam")));
  cfg.lr = j.value("lr", 1e-3);
  cfg.beta1 = j.value("beta1", 0.9);
  cfg.beta2 = j.value("beta2", 0.999);
  cfg.adam_eps = j.value("adam_eps", 1e-8);
  cfg.iterations = j.value("iterations", std::size_t{20000});
  cfg.batch_size = j.value("batch_size", std::size_t{100});
  cfg.eval_every = j.value("eval_every", std::size_t{200});
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("risk")) cfg.risk = risk_spec_from_json(j.at("risk"));
  return cfg;
}

std::pair<BatchStats, BatchStats> evaluate(const Net& net, const Dataset& ds,
                                           const RiskSpec& risk) {
  if (ds.train.empty()) throw EmptyBatchError("evaluate: train split is empty");
  if (ds.test.empty()) throw EmptyBatchError("evaluate: test split is empty");
  NetModel model(net);
  BatchStats tr = total_objective(model, ds.train_matrix(), risk, 0).stats;
  BatchStats te = total_objective(model, ds.test_matrix(), risk, 0).stats;
  return {tr, te};
}

RunRecord train(const TrainConfig& cfg, const Dataset& ds) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.iterations == 0) throw ConfigError("train: iterations must be positive");
  if (cfg.batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (cfg.eval_every == 0) throw ConfigError("train: eval_every must be positive");
  if (ds.train.empty()) throw EmptyBatchError("train: train split is empty");
  if (ds.dim() != cfg.arch.input_dim)
    throw ShapeError("train: dataset dimension does not match the architecture");

  // independent streams for init, batch order, and corruption draws
  const std::uint64_t seed_init = substream(cfg.seed, 1);
  const std::uint64_t seed_shuffle = substream(cfg.seed, 2);
  const std::uint64_t seed_corrupt = substream(cfg.seed, 3);

  RunRecord rec;
  rec.config = cfg;
  for (const PenaltySpec& p : cfg.risk.penalties)
    rec.penalty_names.push_back(penalty_kind_name(p.kind));
  rec.net = init(cfg.arch, seed_init);
  const std::size_t n_params = rec.net.params.size();

  const std::size_t n_train = ds.train.size();
  const std::size_t bs = std::min(cfg.batch_size, n_train);
  const std::size_t batches_per_epoch = n_train / bs;
  const bool denoising =
      cfg.risk.base == BaseRisk::ULSDenoising && cfg.risk.noise_sigma > 0.0;

  std::vector<double> m, v;
  if (cfg.optimizer == Optimizer::Adam) {
    m.assign(n_params, 0.0);
    v.assign(n_params, 0.0);
  }

  auto push_eval = [&](std::size_t label) {
    auto [tr, te] = evaluate(rec.net, ds, cfg.risk);
    rec.rows.push_back({label, tr.rmse, te.rmse, tr.penalty_values});
  };

  std::vector<std::size_t> order;
  Matrix batch(ds.dim(), bs);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const std::size_t slot = t % batches_per_epoch;
    if (slot == 0) {
      Rng rng(substream(seed_shuffle, t / batches_per_epoch));
      order = shuffled_indices(n_train, rng);
    }
    for (std::size_t i = 0; i < bs; ++i)
      batch.set_col(i, ds.points.col(ds.train[order[slot * bs + i]]));

    try {
      Tape tape(rec.net.params);
      NodeId xin, xtg;
      if (denoising) {
        xin = tape.constant(
            denoise_corrupt(batch, cfg.risk.noise_sigma, seed_corrupt, t));
        xtg = tape.constant(batch);
      } else {
        xin = tape.constant(batch);
        xtg = xin;
      }
      ObjectiveNodes nodes =
          build_total_objective(tape, rec.net, xin, xtg, cfg.risk, t);
      const std::vector<double> g = tape.grad(nodes.total);

      if (cfg.optimizer == Optimizer::Adam) {
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t + 1));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t + 1));
        for (std::size_t i = 0; i < n_params; ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
          rec.net.params[i] -=
              cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        }
      } else {
        for (std::size_t i = 0; i < n_params; ++i)
          rec.net.params[i] -= cfg.lr * g[i];
      }
    } catch (const NonFiniteError& e) {
      rec.wall_seconds = seconds_since(t0);
      throw TrainDivergedError("train: diverged at iteration " +
                                   std::to_string(t) + ": " + e.what(),
                               std::move(rec));
    }

    for (std::size_t i = 0; i < n_params; ++i) {
      if (!std::isfinite(rec.net.params[i])) {
        rec.wall_seconds = seconds_since(t0);
        throw TrainDivergedError(
            "train: parameters non-finite after iteration " + std::to_string(t),
            std::move(rec));
      }
    }

    if ((t + 1) % cfg.eval_every == 0) push_eval(t + 1);
  }
  if (cfg.iterations % cfg.eval_every != 0) push_eval(cfg.iterations);

  rec.wall_seconds = seconds_since(t0);
  return rec;
}

PolarGrid map_grid(const Net& net, const PolarGrid& grid) {
  PolarGrid out;
  for (const Matrix& ray : grid.rays) out.rays.push_back(reconstruct_m(net, ray));
  for (const Matrix& circ : grid.circles)
    out.circles.push_back(reconstruct_m(net, circ));
  return out;
}

std::string run_record_to_csv(const RunRecord& rec) {
  std::string out = "# meta: " + train_config_to_json(rec.config).dump() + "\n";
  out += "iteration,train_rmse,test_rmse";
  for (const std::string& name : rec.penalty_names) out += "," + name;
  out += "\n";
  for (const EvalRow& row : rec.rows) {
    out += std::to_string(row.iteration);
    out += "," + fmt17(row.train_rmse);
    out += "," + fmt17(row.test_rmse);
    for (double p : row.penalties) out += "," + fmt17(p);
    out += "\n";
  }
  return out;
}

RunRecord run_record_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# meta: ", 0) != 0)
    throw ParseError("run record: missing meta line");
  RunRecord rec;
  try {
    rec.config = train_config_from_json(nlohmann::json::parse(line.substr(8)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run record: bad meta json: ") + e.what());
  }

  if (!std::getline(in, line) ||
      line.rfind("iteration,train_rmse,test_rmse", 0) != 0)
    throw ParseError("run record: missing header row");
  std::string rest = line.substr(std::string("iteration,train_rmse,test_rmse").size());
  while (!rest.empty()) {
    if (rest[0] != ',') throw ParseError("run record: malformed header row");
    rest.erase(0, 1);
    const std::size_t comma = rest.find(',');
    rec.penalty_names.push_back(rest.substr(0, comma));
    rest = comma == std::string::npos ? "" : rest.substr(comma);
  }

  const std::size_t want = 3 + rec.penalty_names.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != want)
      throw ParseError("run record: row has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(want));
    EvalRow row;
    try {
      row.iteration = std::stoull(cells[0]);
      row.train_rmse = std::stod(cells[1]);
      row.test_rmse = std::stod(cells[2]);
      for (std::size_t i = 3; i < cells.size(); ++i)
        row.penalties.push_back(std::stod(cells[i]));
    } catch (const std::exception&) {
      throw ParseError("run record: malformed row: " + line);
    }
    rec.rows.push_back(std::move(row));
  }
  return rec;
}

void save_run_record(const RunRecord& rec, const std::string& path) {
  write_file_atomic(path, run_record_to_csv(rec));
}

RunRecord load_run_record(const std::string& path) {
  return run_record_from_csv(read_file(path));
}

}  // namespace aelab

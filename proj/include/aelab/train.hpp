#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aelab/data.hpp"
#include "aelab/errors.hpp"
#include "aelab/network.hpp"
#include "aelab/risks.hpp"

namespace aelab {

enum class Optimizer { SGD, Adam };

std::string optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& name);

struct TrainConfig {
  ArchSpec arch;
  RiskSpec risk;
  Optimizer optimizer = Optimizer::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t iterations = 20000;
  std::size_t batch_size = 100;
  std::size_t eval_every = 200;
  std::uint64_t seed = 0;
};

nlohmann::json schedule_to_json(const Schedule& s);
Schedule schedule_from_json(const nlohmann::json& j);
nlohmann::json risk_spec_to_json(const RiskSpec& spec);
RiskSpec risk_spec_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EvalRow {
  std::size_t iteration = 0;
  double train_rmse = 0.0;
  double test_rmse = 0.0;
  std::vector<double> penalties;  // unweighted, on the train split
};

struct RunRecord {
  std::vector<EvalRow> rows;
  std::vector<std::string> penalty_names;  // CSV column names
  Net net;                   // parameters at the end of the run
  TrainConfig config;
  double wall_seconds = 0.0;  // informational; never serialized
};

/// Training blew up (non-finite objective, gradient, or parameters).
/// Carries everything recorded up to the failing iteration.
class TrainDivergedError : public Error {
public:
  TrainDivergedError(const std::string& msg, RunRecord partial_record)
      : Error(msg), partial(std::move(partial_record)) {}
  RunRecord partial;
};

/// Unweighted metrics on the train and test splits; inputs are always
/// clean here, including under a denoising base risk.
std::pair<BatchStats, BatchStats> evaluate(const Net& net, const Dataset& ds,
                                           const RiskSpec& risk);

/// Minibatch training of a fresh net on the dataset's train split.
/// Batches come from a seeded shuffle each epoch (short remainders are
/// dropped); evaluation rows land at every multiple of eval_every plus
/// the final iteration when it is not itself a multiple.  Fully
/// deterministic for a fixed config and dataset.
RunRecord train(const TrainConfig& cfg, const Dataset& ds);

/// Applies the net's reconstruction map to every polyline vertex.
PolarGrid map_grid(const Net& net, const PolarGrid& grid);

std::string run_record_to_csv(const RunRecord& rec);
RunRecord run_record_from_csv(const std::string& text);  // net stays empty
void save_run_record(const RunRecord& rec, const std::string& path);
RunRecord load_run_record(const std::string& path);

}  // namespace aelab

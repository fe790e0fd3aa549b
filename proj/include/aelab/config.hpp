#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "aelab/data.hpp"
#include "aelab/gnorm.hpp"
#include "aelab/train.hpp"

namespace aelab {

/// One sweep dimension: a dot path into the normalized experiment tree
/// ("train.risk.penalties.0.weight", "train.arch", "dataset.seed") and the
/// values it takes.  Paths must resolve against the tree as written.
struct SweepAxis {
  std::string path;
  nlohmann::json values;  // non-empty array
};

/// A fully validated experiment: dataset recipe, training setup, optional
/// sweep axes, output directory.  `tree` is the normalized form with every
/// default filled in; sweep cells and provenance metadata derive from it,
/// so rebuilding from `tree` reproduces this config exactly.
struct ExperimentConfig {
  int version = 1;
  std::string name = "experiment";
  nlohmann::json dataset;  // generator spec, same schema as Dataset::meta
  TrainConfig train;
  std::vector<SweepAxis> axes;
  std::size_t sweep_cap = 64;
  std::string output_dir = ".";
  nlohmann::json tree;
};

/// Strict parse: unknown keys, missing required fields, bad types, and
/// unsupported versions all raise ConfigError naming the dotted path.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig experiment_from_string(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);

/// Materializes the dataset a normalized spec describes.
Dataset dataset_from_spec(const nlohmann::json& spec);

/// Walks a dot path ("a.b.0.c") through objects and arrays.  Missing keys,
/// out-of-range indices, and non-container hops raise ConfigError.
nlohmann::json& resolve_path(nlohmann::json& root, const std::string& path);

/// Overwrites the value at `path`, requiring the replacement to keep the
/// broad type (number for number, string for string, ...).
void set_path(nlohmann::json& root, const std::string& path,
              const nlohmann::json& value);

/// Cartesian expansion of the sweep axes over the normalized tree.  Each
/// cell is a complete single-run experiment (its own axes list is empty).
/// Earlier axes vary slowest.  No axes means one cell: the tree itself.
/// Raises ConfigError when the cell count exceeds the cap.
std::vector<nlohmann::json> expand_sweep(const ExperimentConfig& cfg);

struct GnormConfig {
  int version = 1;
  std::string name = "gnorm";
  std::string function;
  std::vector<double> x0;
  std::string method = "gnorm";  // gnorm | newton | gd
  DescentOptions options;
  double grad_tol = 1e-6;  // terminal classification thresholds
  double stat_tol = 1e-6;
};

GnormConfig gnorm_config_from_json(const nlohmann::json& j);

struct DiagnoseConfig {
  int version = 1;
  std::string name = "diagnose";
  nlohmann::json dataset;
  std::string checkpoint;  // path; exactly one of checkpoint/reference
  std::string reference;   // built-in analytic model: "circle"
  RiskSpec risk;
  std::size_t bins = 32;
};

DiagnoseConfig diagnose_config_from_json(const nlohmann::json& j);

struct ShapesConfig {
  int version = 1;
  std::string name = "shapes";
  double alpha = 1.0;
  std::size_t samples = 201;
};

ShapesConfig shapes_config_from_json(const nlohmann::json& j);

}  // namespace aelab

#include "aelab/config.hpp"

#include <initializer_list>
#include <utility>

#include "aelab/errors.hpp"
#include "aelab/io.hpp"

namespace aelab {

namespace {

using nlohmann::json;

std::string dotted(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

void need_object(const json& j, const std::string& path) {
  if (!j.is_object())
    throw ConfigError("config: '" + path + "' must be an object");
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  need_object(j, path.empty() ? "<root>" : path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("config: unknown key '" + dotted(path, it.key()) +
                        "'");
  }
}

const json& need(const json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw ConfigError("config: missing field '" + dotted(path, key) + "'");
  return *it;
}

double as_num(const json& v, const std::string& path) {
  if (!v.is_number())
    throw ConfigError("config: '" + path + "' must be a number");
  return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("config: '" + path +
                      "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("config: '" + path +
                      "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string as_str(const json& v, const std::string& path) {
  if (!v.is_string())
    throw ConfigError("config: '" + path + "' must be a string");
  return v.get<std::string>();
}

void require_version(const json& j, const std::string& path) {
  const json& v = need(j, path, "version");
  if (!v.is_number_integer() || v.get<long long>() != 1)
    throw ConfigError("config: unsupported '" + dotted(path, "version") +
                      "' (this reader understands version 1)");
}

json normalize_dataset(const json& d, const std::string& path) {
  need_object(d, path);
  const std::string gen =
      as_str(need(d, path, "generator"), dotted(path, "generator"));
  json out;
  out["generator"] = gen;
  if (gen == "spiral") {
    check_keys(d, path,
               {"generator", "n", "turns", "r0", "r1", "sigma", "seed",
                "train_fraction"});
    out["n"] = as_count(need(d, path, "n"), dotted(path, "n"));
    out["turns"] =
        d.contains("turns") ? as_num(d["turns"], dotted(path, "turns")) : 2.0;
    out["r0"] = d.contains("r0") ? as_num(d["r0"], dotted(path, "r0")) : 0.3;
    out["r1"] = d.contains("r1") ? as_num(d["r1"], dotted(path, "r1")) : 2.0;
    out["sigma"] =
        d.contains("sigma") ? as_num(d["sigma"], dotted(path, "sigma")) : 0.05;
  } else if (gen == "line" || gen == "circle" || gen == "strip") {
    check_keys(d, path, {"generator", "n", "sigma", "seed", "train_fraction"});
    out["n"] = as_count(need(d, path, "n"), dotted(path, "n"));
    out["sigma"] =
        d.contains("sigma") ? as_num(d["sigma"], dotted(path, "sigma")) : 0.0;
  } else {
    throw ConfigError("config: unknown generator '" + gen + "' at '" +
                      dotted(path, "generator") + "'");
  }
  out["seed"] =
      d.contains("seed") ? as_u64(d["seed"], dotted(path, "seed")) : 0;
  out["train_fraction"] =
      d.contains("train_fraction")
          ? as_num(d["train_fraction"], dotted(path, "train_fraction"))
          : 0.8;
  return out;
}

// Every generator emits planar point clouds.
std::size_t dataset_dim(const json&) { return 2; }

json normalize_risk(const json& r, const std::string& path) {
  check_keys(r, path, {"base", "noise_sigma", "epsilon_floor", "penalties"});
  json out;
  out["base"] = r.contains("base")
                    ? as_str(r["base"], dotted(path, "base"))
                    : "uls";
  out["noise_sigma"] =
      r.contains("noise_sigma")
          ? as_num(r["noise_sigma"], dotted(path, "noise_sigma"))
          : 0.0;
  out["epsilon_floor"] =
      r.contains("epsilon_floor")
          ? as_num(r["epsilon_floor"], dotted(path, "epsilon_floor"))
          : 1e-8;
  json pens = json::array();
  if (r.contains("penalties")) {
    if (!r["penalties"].is_array())
      throw ConfigError("config: '" + dotted(path, "penalties") +
                        "' must be an array");
    std::size_t i = 0;
    for (const json& p : r["penalties"]) {
      const std::string pp = dotted(path, "penalties." + std::to_string(i));
      check_keys(p, pp, {"kind", "weight", "schedule"});
      json pm;
      pm["kind"] = as_str(need(p, pp, "kind"), dotted(pp, "kind"));
      pm["weight"] = p.contains("weight")
                         ? as_num(p["weight"], dotted(pp, "weight"))
                         : 0.0;
      if (p.contains("schedule")) {
        const json& s = p["schedule"];
        const std::string sp = dotted(pp, "schedule");
        check_keys(s, sp, {"kind", "value", "from", "to", "over"});
        const std::string sk = as_str(need(s, sp, "kind"), dotted(sp, "kind"));
        json sm;
        sm["kind"] = sk;
        if (sk == "constant") {
          sm["value"] = as_num(need(s, sp, "value"), dotted(sp, "value"));
        } else if (sk == "linear_ramp") {
          sm["from"] = as_num(need(s, sp, "from"), dotted(sp, "from"));
          sm["to"] = as_num(need(s, sp, "to"), dotted(sp, "to"));
          sm["over"] = as_count(need(s, sp, "over"), dotted(sp, "over"));
        } else {
          throw ConfigError("config: unknown schedule kind '" + sk +
                            "' at '" + sp + "'");
        }
        pm["schedule"] = sm;
      }
      pens.push_back(pm);
      ++i;
    }
  }
  out["penalties"] = pens;
  return out;
}

json normalize_train(const json& t, const std::string& path,
                     std::size_t input_dim) {
  check_keys(t, path,
             {"arch", "activation", "latent_index", "optimizer", "lr",
              "beta1", "beta2", "adam_eps", "iterations", "batch_size",
              "eval_every", "seed", "risk", "input_dim"});
  // input_dim is derived from the dataset; normalized trees carry it, and
  // a hand-written value must agree
  if (t.contains("input_dim") &&
      as_count(t["input_dim"], dotted(path, "input_dim")) != input_dim)
    throw ConfigError("config: '" + dotted(path, "input_dim") +
                      "' must be " + std::to_string(input_dim) +
                      " for this dataset");
  json m = t;
  as_str(need(t, path, "arch"), dotted(path, "arch"));
  if (t.contains("activation"))
    as_str(t["activation"], dotted(path, "activation"));
  if (t.contains("optimizer")) as_str(t["optimizer"], dotted(path, "optimizer"));
  if (t.contains("latent_index"))
    as_count(t["latent_index"], dotted(path, "latent_index"));
  for (const char* k : {"lr", "beta1", "beta2", "adam_eps"})
    if (t.contains(k)) as_num(t[k], dotted(path, k));
  for (const char* k : {"iterations", "batch_size", "eval_every"})
    if (t.contains(k)) as_count(t[k], dotted(path, k));
  if (t.contains("seed")) as_u64(t["seed"], dotted(path, "seed"));
  if (t.contains("risk")) m["risk"] = normalize_risk(t["risk"], dotted(path, "risk"));
  m["input_dim"] = input_dim;
  // the typed reader validates enums and the latent position; re-emitting
  // produces the canonical fully defaulted form sweep paths resolve against
  return train_config_to_json(train_config_from_json(m));
}

json normalize_sweep(const json& s, const std::string& path) {
  check_keys(s, path, {"axes", "cap"});
  json axes = json::array();
  if (s.contains("axes")) {
    if (!s["axes"].is_array())
      throw ConfigError("config: '" + dotted(path, "axes") +
                        "' must be an array");
    std::size_t i = 0;
    for (const json& a : s["axes"]) {
      const std::string ap = dotted(path, "axes." + std::to_string(i));
      check_keys(a, ap, {"path", "values"});
      json am;
      am["path"] = as_str(need(a, ap, "path"), dotted(ap, "path"));
      const json& vals = need(a, ap, "values");
      if (!vals.is_array() || vals.empty())
        throw ConfigError("config: '" + dotted(ap, "values") +
                          "' must be a non-empty array");
      am["values"] = vals;
      axes.push_back(am);
      ++i;
    }
  }
  json out;
  out["axes"] = axes;
  out["cap"] = s.contains("cap") ? as_count(s["cap"], dotted(path, "cap"))
                                 : std::size_t{64};
  if (out["cap"].get<std::size_t>() == 0)
    throw ConfigError("config: '" + dotted(path, "cap") + "' must be positive");
  return out;
}

int broad_type(const json& v) {
  if (v.is_number()) return 0;
  if (v.is_string()) return 1;
  if (v.is_boolean()) return 2;
  if (v.is_object()) return 3;
  if (v.is_array()) return 4;
  return 5;
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  check_keys(j, "",
             {"version", "name", "dataset", "train", "sweep", "output_dir"});
  require_version(j, "");
  ExperimentConfig ec;
  ec.name = j.contains("name") ? as_str(j["name"], "name") : "experiment";
  ec.dataset = normalize_dataset(need(j, "", "dataset"), "dataset");
  const json train_norm =
      normalize_train(need(j, "", "train"), "train", dataset_dim(ec.dataset));
  ec.train = train_config_from_json(train_norm);
  const json sweep_norm =
      j.contains("sweep")
          ? normalize_sweep(j["sweep"], "sweep")
          : json{{"axes", json::array()}, {"cap", std::size_t{64}}};
  for (const json& a : sweep_norm["axes"])
    ec.axes.push_back({a["path"].get<std::string>(), a["values"]});
  ec.sweep_cap = sweep_norm["cap"].get<std::size_t>();
  ec.output_dir =
      j.contains("output_dir") ? as_str(j["output_dir"], "output_dir") : ".";
  ec.tree = {{"version", 1},         {"name", ec.name},
             {"dataset", ec.dataset}, {"train", train_norm},
             {"sweep", sweep_norm},   {"output_dir", ec.output_dir}};
  // axes must reference fields that exist in the normalized tree
  for (const SweepAxis& ax : ec.axes) resolve_path(ec.tree, ax.path);
  return ec;
}

ExperimentConfig experiment_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return experiment_from_json(j);
}

ExperimentConfig load_experiment(const std::string& path) {
  return experiment_from_string(read_file(path));
}

Dataset dataset_from_spec(const nlohmann::json& spec) {
  return regenerate(normalize_dataset(spec, "dataset"));
}

nlohmann::json& resolve_path(nlohmann::json& root, const std::string& path) {
  if (path.empty()) throw ConfigError("config: empty sweep path");
  nlohmann::json* cur = &root;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = path.find('.', pos);
    const std::string tok =
        dot == std::string::npos ? path.substr(pos) : path.substr(pos, dot - pos);
    if (tok.empty())
      throw ConfigError("config: malformed sweep path '" + path + "'");
    if (cur->is_object()) {
      auto it = cur->find(tok);
      if (it == cur->end())
        throw ConfigError("config: sweep path '" + path +
                          "' references missing field '" + tok + "'");
      cur = &*it;
    } else if (cur->is_array()) {
      for (char c : tok)
        if (c < '0' || c > '9')
          throw ConfigError("config: sweep path '" + path + "': '" + tok +
                            "' is not an array index");
      const std::size_t idx = std::stoull(tok);
      if (idx >= cur->size())
        throw ConfigError("config: sweep path '" + path + "': index " + tok +
                          " is out of range");
      cur = &(*cur)[idx];
    } else {
      throw ConfigError("config: sweep path '" + path +
                        "' descends into a scalar at '" + tok + "'");
    }
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return *cur;
}

void set_path(nlohmann::json& root, const std::string& path,
              const nlohmann::json& value) {
  nlohmann::json& slot = resolve_path(root, path);
  if (broad_type(slot) != broad_type(value))
    throw ConfigError("config: sweep value for '" + path +
                      "' would change the field's type");
  slot = value;
}

std::vector<nlohmann::json> expand_sweep(const ExperimentConfig& cfg) {
  std::size_t total = 1;
  for (const SweepAxis& ax : cfg.axes) {
    total *= ax.values.size();
    if (total > cfg.sweep_cap)
      throw ConfigError("config: sweep expands to more than " +
                        std::to_string(cfg.sweep_cap) +
                        " cells; raise sweep.cap if that is intentional");
  }
  std::vector<nlohmann::json> cells;
  cells.reserve(total);
  std::vector<std::size_t> odo(cfg.axes.size(), 0);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (std::size_t a = cfg.axes.size(); a-- > 0;) {
      const std::size_t sz = cfg.axes[a].values.size();
      odo[a] = rem % sz;
      rem /= sz;
    }
    nlohmann::json cell = cfg.tree;
    for (std::size_t a = 0; a < cfg.axes.size(); ++a)
      set_path(cell, cfg.axes[a].path, cfg.axes[a].values[odo[a]]);
    cell["sweep"] = {{"axes", nlohmann::json::array()}, {"cap", cfg.sweep_cap}};
    cells.push_back(std::move(cell));
  }
  return cells;
}

GnormConfig gnorm_config_from_json(const nlohmann::json& j) {
  check_keys(j, "",
             {"version", "name", "function", "x0", "method", "options",
              "grad_tol", "stat_tol"});
  require_version(j, "");
  GnormConfig gc;
  if (j.contains("name")) gc.name = as_str(j["name"], "name");
  gc.function = as_str(need(j, "", "function"), "function");
  const json& x0 = need(j, "", "x0");
  if (!x0.is_array() || x0.empty())
    throw ConfigError("config: 'x0' must be a non-empty array of numbers");
  for (std::size_t i = 0; i < x0.size(); ++i)
    gc.x0.push_back(as_num(x0[i], "x0." + std::to_string(i)));
  if (j.contains("method")) gc.method = as_str(j["method"], "method");
  if (gc.method != "gnorm" && gc.method != "newton" && gc.method != "gd")
    throw ConfigError("config: 'method' must be gnorm, newton, or gd");
  if (j.contains("options")) {
    const json& o = j["options"];
    check_keys(o, "options",
               {"step", "max_iters", "tol", "stat_tol", "diverge_norm",
                "max_halvings"});
    if (o.contains("step")) gc.options.step = as_num(o["step"], "options.step");
    if (o.contains("max_iters"))
      gc.options.max_iters = as_count(o["max_iters"], "options.max_iters");
    if (o.contains("tol")) gc.options.tol = as_num(o["tol"], "options.tol");
    if (o.contains("stat_tol"))
      gc.options.stat_tol = as_num(o["stat_tol"], "options.stat_tol");
    if (o.contains("diverge_norm"))
      gc.options.diverge_norm = as_num(o["diverge_norm"], "options.diverge_norm");
    if (o.contains("max_halvings"))
      gc.options.max_halvings =
          as_count(o["max_halvings"], "options.max_halvings");
  }
  if (j.contains("grad_tol")) gc.grad_tol = as_num(j["grad_tol"], "grad_tol");
  if (j.contains("stat_tol")) gc.stat_tol = as_num(j["stat_tol"], "stat_tol");
  return gc;
}

DiagnoseConfig diagnose_config_from_json(const nlohmann::json& j) {
  check_keys(j, "",
             {"version", "name", "dataset", "checkpoint", "reference", "risk",
              "bins"});
  require_version(j, "");
  DiagnoseConfig dc;
  if (j.contains("name")) dc.name = as_str(j["name"], "name");
  dc.dataset = normalize_dataset(need(j, "", "dataset"), "dataset");
  const bool has_ckpt = j.contains("checkpoint");
  const bool has_ref = j.contains("reference");
  if (has_ckpt == has_ref)
    throw ConfigError(
        "config: provide exactly one of 'checkpoint' (a file path) or "
        "'reference' (a built-in model name)");
  if (has_ckpt) dc.checkpoint = as_str(j["checkpoint"], "checkpoint");
  if (has_ref) {
    dc.reference = as_str(j["reference"], "reference");
    if (dc.reference != "circle")
      throw ConfigError("config: unknown reference model '" + dc.reference +
                        "' (available: circle)");
  }
  if (j.contains("risk"))
    dc.risk = risk_spec_from_json(normalize_risk(j["risk"], "risk"));
  if (j.contains("bins")) {
    dc.bins = as_count(j["bins"], "bins");
    if (dc.bins == 0) throw ConfigError("config: 'bins' must be positive");
  }
  return dc;
}

ShapesConfig shapes_config_from_json(const nlohmann::json& j) {
  check_keys(j, "", {"version", "name", "alpha", "samples"});
  require_version(j, "");
  ShapesConfig sc;
  if (j.contains("name")) sc.name = as_str(j["name"], "name");
  sc.alpha = as_num(need(j, "", "alpha"), "alpha");
  if (j.contains("samples")) sc.samples = as_count(j["samples"], "samples");
  return sc;
}

}  // namespace aelab

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aelab/config.hpp"
#include "aelab/diagnostics.hpp"
#include "aelab/errors.hpp"
#include "aelab/io.hpp"
#include "aelab/network.hpp"
#include "aelab/svg.hpp"

namespace {

namespace fs = std::filesystem;
using namespace aelab;
using nlohmann::json;

const std::string kCli = AELAB_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "aelab_expcli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args, const fs::path& log = {}) {
  std::string cmd = kCli + " " + args;
  cmd += log.empty() ? std::string(" > /dev/null 2>&1")
                     : " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

json minimal_experiment() {
  return {
      {"version", 1},
      {"dataset", {{"generator", "spiral"}, {"n", 150}, {"seed", 3}}},
      {"train",
       {{"arch", "4-1-4"},
        {"iterations", 120},
        {"eval_every", 60},
        {"seed", 5}}},
  };
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_SUITE("expcli") {

TEST_CASE("config: strict validation names the offending path") {
  json base = minimal_experiment();

  json j = base;
  j["typo"] = 1;
  CHECK_THROWS_WITH_AS(experiment_from_json(j),
                       doctest::Contains("typo"), ConfigError);

  j = base;
  j["train"]["risk"] = {{"penalties", json::array({{{"kind", "contractive"},
                                                    {"wieght", 0.1}}})}};
  try {
    experiment_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), "train.risk.penalties.0.wieght"));
  }

  j = base;
  j.erase("version");
  CHECK_THROWS_AS(experiment_from_json(j), ConfigError);
  j["version"] = 7;
  CHECK_THROWS_AS(experiment_from_json(j), ConfigError);

  j = base;
  j["train"]["lr"] = "fast";
  try {
    experiment_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), "train.lr"));
  }

  j = base;
  j["dataset"]["generator"] = "helix";
  CHECK_THROWS_AS(experiment_from_json(j), ConfigError);

  j = base;
  j["sweep"] = {{"axes", json::array({{{"path", "train.momentum"},
                                       {"values", {0.1}}}})}};
  CHECK_THROWS_AS(experiment_from_json(j), ConfigError);

  j = base;
  j["sweep"] = {{"axes", json::array({{{"path", "train.lr"},
                                       {"values", json::array()}}})}};
  CHECK_THROWS_AS(experiment_from_json(j), ConfigError);

  CHECK_THROWS_WITH_AS(experiment_from_string("{\"version\": 1,"),
                       doctest::Contains("line"), ParseError);
}

TEST_CASE("config: defaults fill in and the tree is canonical") {
  const ExperimentConfig ec = experiment_from_json(minimal_experiment());
  CHECK(ec.name == "experiment");
  CHECK(ec.output_dir == ".");
  CHECK(ec.train.lr == 1e-3);
  CHECK(ec.train.iterations == 120);
  CHECK(ec.tree["dataset"]["turns"] == 2.0);
  CHECK(ec.tree["dataset"]["train_fraction"] == 0.8);
  CHECK(ec.tree["train"]["optimizer"] == "adam");
  CHECK(ec.tree["sweep"]["axes"].empty());
  CHECK(ec.sweep_cap == 64);

  // round trip: the normalized tree re-parses to the same tree
  const ExperimentConfig ec2 = experiment_from_json(ec.tree);
  CHECK(ec2.tree == ec.tree);
}

TEST_CASE("config: sweep expansion is cartesian, earlier axes slowest") {
  json j = minimal_experiment();
  j["train"]["risk"] = {
      {"penalties", json::array({{{"kind", "contractive"}, {"weight", 0.1}}})}};
  j["sweep"] = {
      {"axes",
       json::array({{{"path", "train.seed"}, {"values", {1, 2}}},
                    {{"path", "train.risk.penalties.0.weight"},
                     {"values", {0.04, 0.02, 0.005}}}})}};
  const ExperimentConfig ec = experiment_from_json(j);
  std::vector<json> cells = expand_sweep(ec);
  REQUIRE(cells.size() == 6);
  CHECK(resolve_path(cells[0], "train.seed") == 1);
  CHECK(resolve_path(cells[0], "train.risk.penalties.0.weight") == 0.04);
  CHECK(resolve_path(cells[1], "train.risk.penalties.0.weight") == 0.02);
  CHECK(resolve_path(cells[3], "train.seed") == 2);
  CHECK(resolve_path(cells[5], "train.risk.penalties.0.weight") == 0.005);
  for (json& c : cells) {
    CHECK(c["sweep"]["axes"].empty());
    CHECK_NOTHROW(experiment_from_json(c));  // every cell revalidates
  }

  // no axes: exactly one cell, the tree itself
  const ExperimentConfig plain = experiment_from_json(minimal_experiment());
  const std::vector<json> one = expand_sweep(plain);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == plain.tree);

  // the cap caps
  json big = minimal_experiment();
  json vals = json::array();
  for (int i = 0; i < 65; ++i) vals.push_back(i);
  big["sweep"] = {{"axes", json::array({{{"path", "train.seed"},
                                         {"values", vals}}})}};
  CHECK_THROWS_AS(expand_sweep(experiment_from_json(big)), ConfigError);
  big["sweep"]["cap"] = 128;
  CHECK(expand_sweep(experiment_from_json(big)).size() == 65);

  // sweep values cannot change a field's type
  json typed = minimal_experiment();
  typed["sweep"] = {{"axes", json::array({{{"path", "train.arch"},
                                           {"values", {1, 2}}}})}};
  CHECK_THROWS_AS(expand_sweep(experiment_from_json(typed)), ConfigError);
}

TEST_CASE("cli: train writes artifacts deterministically") {
  const fs::path dir = fresh_dir("train");
  json j = minimal_experiment();
  j["output_dir"] = (dir / "a").string();
  write_text(dir / "cfg.json", j.dump());
  REQUIRE(run_cli("train --config " + (dir / "cfg.json").string()) == 0);
  for (const char* f : {"run.csv", "recon.csv", "grid.csv", "checkpoint.txt",
                        "run.svg", "recon.svg", "grid.svg"})
    CHECK(fs::exists(dir / "a" / f));

  // second run into a different directory: byte-identical artifacts
  REQUIRE(run_cli("train --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "b").string()) == 0);
  for (const char* f : {"run.csv", "recon.csv", "grid.csv", "checkpoint.txt"})
    CHECK(read_file((dir / "a" / f).string()) ==
          read_file((dir / "b" / f).string()));
  // svg is a pure function of the csv, so it matches too
  CHECK(read_file((dir / "a" / "run.svg").string()) ==
        read_file((dir / "b" / "run.svg").string()));

  // seed override changes the trajectory
  REQUIRE(run_cli("train --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "c").string() + " --seed 99") == 0);
  CHECK(read_file((dir / "a" / "run.csv").string()) !=
        read_file((dir / "c" / "run.csv").string()));
}

TEST_CASE("cli: config and usage errors exit 2") {
  const fs::path dir = fresh_dir("errors");
  CHECK(run_cli("train --config " + (dir / "missing.json").string()) == 2);

  json j = minimal_experiment();
  j["typo"] = true;
  write_text(dir / "bad.json", j.dump());
  CHECK(run_cli("train --config " + (dir / "bad.json").string()) == 2);

  write_text(dir / "mangled.json", "{\"version\": 1,");
  CHECK(run_cli("train --config " + (dir / "mangled.json").string()) == 2);

  // train refuses a config that declares sweep axes
  json s = minimal_experiment();
  s["sweep"] = {{"axes", json::array({{{"path", "train.seed"},
                                       {"values", {1, 2}}}})}};
  write_text(dir / "sweepy.json", s.dump());
  CHECK(run_cli("train --config " + (dir / "sweepy.json").string()) == 2);

  CHECK(run_cli("") == 2);               // no subcommand
  CHECK(run_cli("train") == 2);          // missing --config
  CHECK(run_cli("frobnicate --config x") == 2);
}

TEST_CASE("cli: sweep emits one summary row per cell") {
  const fs::path dir = fresh_dir("sweep");
  json j = minimal_experiment();
  j["train"]["iterations"] = 40;
  j["train"]["eval_every"] = 20;
  j["train"]["risk"] = {
      {"penalties",
       json::array({{{"kind", "normalized_ortho"}, {"weight", 0.02}}})}};
  j["sweep"] = {{"axes", json::array({{{"path",
                                        "train.risk.penalties.0.weight"},
                                       {"values", {0.04, 0.02, 0.005}}}})}};
  j["output_dir"] = (dir / "w").string();
  write_text(dir / "cfg.json", j.dump());
  REQUIRE(run_cli("sweep --config " + (dir / "cfg.json").string()) == 0);

  const std::string summary = read_file((dir / "w" / "summary.csv").string());
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);  // meta+hdr+3
  CHECK(contains(summary, "train.risk.penalties.0.weight"));
  CHECK(contains(summary, "0,0.04,"));
  CHECK(contains(summary, "1,0.02,"));
  CHECK(contains(summary, "2,0.005,"));
  for (int c = 0; c < 3; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "cell_%03d", c);
    CHECK(fs::exists(dir / "w" / buf / "run.csv"));
  }

  // parallel execution changes nothing observable
  REQUIRE(run_cli("sweep --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "w2").string() + " --threads 3") == 0);
  CHECK(read_file((dir / "w" / "summary.csv").string()) ==
        read_file((dir / "w2" / "summary.csv").string()));
  CHECK(read_file((dir / "w" / "cell_001" / "run.csv").string()) ==
        read_file((dir / "w2" / "cell_001" / "run.csv").string()));

  // two axes of sizes 2 and 3: six cells
  json j2 = minimal_experiment();
  j2["train"]["iterations"] = 20;
  j2["train"]["eval_every"] = 20;
  j2["sweep"] = {{"axes",
                  json::array({{{"path", "train.seed"}, {"values", {1, 2}}},
                               {{"path", "train.lr"},
                                {"values", {1e-3, 1e-2, 1e-1}}}})}};
  j2["output_dir"] = (dir / "x").string();
  write_text(dir / "cfg2.json", j2.dump());
  REQUIRE(run_cli("sweep --config " + (dir / "cfg2.json").string()) == 0);
  const std::string sx = read_file((dir / "x" / "summary.csv").string());
  CHECK(std::count(sx.begin(), sx.end(), '\n') == 8);  // meta+hdr+6

  // empty axes behaves as train: one cell
  json j3 = minimal_experiment();
  j3["train"]["iterations"] = 20;
  j3["output_dir"] = (dir / "y").string();
  write_text(dir / "cfg3.json", j3.dump());
  REQUIRE(run_cli("sweep --config " + (dir / "cfg3.json").string()) == 0);
  const std::string sy = read_file((dir / "y" / "summary.csv").string());
  CHECK(std::count(sy.begin(), sy.end(), '\n') == 3);  // meta+hdr+1
  CHECK(fs::exists(dir / "y" / "cell_000" / "checkpoint.txt"));
}

TEST_CASE("cli: gnorm finds true and spurious terminals") {
  const fs::path dir = fresh_dir("gnorm");
  write_text(dir / "saddle.json",
             json{{"version", 1},
                  {"function", "saddle"},
                  {"x0", {0.5, 0.5}},
                  {"method", "gnorm"}}
                 .dump());
  REQUIRE(run_cli("gnorm --config " + (dir / "saddle.json").string() +
                  " --out " + (dir / "s").string(),
                  dir / "saddle.log") == 0);
  CHECK(contains(read_file((dir / "saddle.log").string()), "true_critical"));
  const std::string csv = read_file((dir / "s" / "gnorm.csv").string());
  CHECK(contains(csv, "\"terminal\":\"true_critical\""));
  CHECK(contains(csv, "step,grad_norm,log10_grad_norm"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') > 3);

  write_text(dir / "cubic.json",
             json{{"version", 1},
                  {"function", "cubic_plus_linear"},
                  {"x0", {0.5}},
                  {"method", "gnorm"}}
                 .dump());
  REQUIRE(run_cli("gnorm --config " + (dir / "cubic.json").string() +
                  " --out " + (dir / "c").string(),
                  dir / "cubic.log") == 0);
  CHECK(contains(read_file((dir / "cubic.log").string()),
                 "spurious_gnorm_critical"));

  write_text(dir / "unknown.json",
             json{{"version", 1}, {"function", "mystery"}, {"x0", {0.0}}}
                 .dump());
  CHECK(run_cli("gnorm --config " + (dir / "unknown.json").string()) == 2);

  // plain gd runs off the saddle: runtime failure, not a config error
  write_text(dir / "gd.json",
             json{{"version", 1},
                  {"function", "saddle"},
                  {"x0", {0.1, 0.5}},
                  {"method", "gd"}}
                 .dump());
  CHECK(run_cli("gnorm --config " + (dir / "gd.json").string() + " --out " +
                (dir / "g").string()) == 1);
  CHECK(contains(read_file((dir / "g" / "gnorm.csv").string()),
                 "\"status\":\"diverged\""));
}

TEST_CASE("cli: diagnose audits checkpoints and reference models") {
  const fs::path dir = fresh_dir("diagnose");

  // analytic circle projector on a noisy circle: residuals are radial, so
  // the defect vanishes and self-consistency stays at the bin scale
  write_text(dir / "circle.json",
             json{{"version", 1},
                  {"dataset",
                   {{"generator", "circle"},
                    {"n", 400},
                    {"sigma", 0.05},
                    {"seed", 2}}},
                  {"reference", "circle"},
                  {"bins", 24}}
                 .dump());
  REQUIRE(run_cli("diagnose --config " + (dir / "circle.json").string() +
                  " --out " + (dir / "c").string()) == 0);
  std::string csv = read_file((dir / "c" / "diagnostics.csv").string());
  double defect = -1.0;
  std::size_t pos = csv.find("orthogonality_defect,all,");
  REQUIRE(pos != std::string::npos);
  defect = std::stod(csv.substr(pos + 25));
  CHECK(defect < 1e-10);
  CHECK(contains(csv, "self_consistency,all,"));

  // identity-weight checkpoint: zero residual everywhere, defect exactly 0
  ArchSpec arch = parse_arch("2", 2);
  arch.activation = ActKind::Identity;
  Net net = init(arch, 0);
  std::fill(net.params.begin(), net.params.end(), 0.0);
  net.params[net.w_offset(0) + 0] = 1.0;
  net.params[net.w_offset(0) + 3] = 1.0;
  net.params[net.w_offset(1) + 0] = 1.0;
  net.params[net.w_offset(1) + 3] = 1.0;
  save_checkpoint(net, (dir / "ident.ckpt").string());
  write_text(dir / "ident.json",
             json{{"version", 1},
                  {"dataset", {{"generator", "spiral"}, {"n", 100}, {"seed", 1}}},
                  {"checkpoint", (dir / "ident.ckpt").string()},
                  {"risk",
                   {{"penalties", json::array({{{"kind", "contractive"},
                                                {"weight", 0.1}}})}}}}
                 .dump());
  REQUIRE(run_cli("diagnose --config " + (dir / "ident.json").string() +
                  " --out " + (dir / "i").string()) == 0);
  csv = read_file((dir / "i" / "diagnostics.csv").string());
  pos = csv.find("orthogonality_defect,all,");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(csv.substr(pos + 25)) == 0.0);
  CHECK(contains(csv, "contractive,train,"));
  // 2-d latent: self-consistency (a curve notion) is not reported
  CHECK(!contains(csv, "self_consistency"));

  // input dimension mismatch is a config error
  Net wide = init(parse_arch("3-1-3", 3), 0);
  save_checkpoint(wide, (dir / "wide.ckpt").string());
  write_text(dir / "mismatch.json",
             json{{"version", 1},
                  {"dataset", {{"generator", "spiral"}, {"n", 50}, {"seed", 1}}},
                  {"checkpoint", (dir / "wide.ckpt").string()}}
                 .dump());
  CHECK(run_cli("diagnose --config " + (dir / "mismatch.json").string()) == 2);

  // exactly one model source
  write_text(dir / "both.json",
             json{{"version", 1},
                  {"dataset", {{"generator", "circle"}, {"n", 50}, {"seed", 1}}},
                  {"checkpoint", "x"},
                  {"reference", "circle"}}
                 .dump());
  CHECK(run_cli("diagnose --config " + (dir / "both.json").string()) == 2);
  write_text(dir / "neither.json",
             json{{"version", 1},
                  {"dataset", {{"generator", "circle"}, {"n", 50}, {"seed", 1}}}}
                 .dump());
  CHECK(run_cli("diagnose --config " + (dir / "neither.json").string()) == 2);
}

TEST_CASE("cli: shapes reproduces the library table byte for byte") {
  const fs::path dir = fresh_dir("shapes");
  write_text(dir / "cfg.json",
             json{{"version", 1}, {"alpha", 0.5}, {"samples", 101}}.dump());
  REQUIRE(run_cli("shapes --config " + (dir / "cfg.json").string() +
                  " --out " + (dir / "o").string()) == 0);
  const std::string csv = read_file((dir / "o" / "shapes.csv").string());
  CHECK(csv == penalty_shapes_csv(penalty_shapes(0.5, 101)));
  const std::string svg = read_file((dir / "o" / "shapes.svg").string());
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(contains(svg, "total_ortho"));
  CHECK(svg == svg::shapes_csv_to_svg(csv));  // pure function of the csv

  write_text(dir / "bad.json", json{{"version", 1}, {"alpha", -1.0}}.dump());
  CHECK(run_cli("shapes --config " + (dir / "bad.json").string()) == 2);
}

TEST_CASE("cli: eval rows follow the iteration/eval_every contract") {
  const fs::path dir = fresh_dir("rows");
  json j = minimal_experiment();
  j["train"] = {{"arch", "200-1-200"},
                {"iterations", 1000},
                {"eval_every", 100},
                {"batch_size", 50},
                {"seed", 2}};
  j["dataset"] = {{"generator", "spiral"}, {"n", 120}, {"seed", 4}};
  j["output_dir"] = (dir / "o").string();
  write_text(dir / "cfg.json", j.dump());
  REQUIRE(run_cli("train --config " + (dir / "cfg.json").string()) == 0);
  const std::string csv = read_file((dir / "o" / "run.csv").string());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);  // meta+hdr+10
}

TEST_CASE("cli: divergence exits 1 but keeps partial artifacts") {
  const fs::path dir = fresh_dir("diverge");
  json j = minimal_experiment();
  j["train"] = {{"arch", "8-1-8"},
                {"iterations", 30},
                {"eval_every", 10},
                {"optimizer", "sgd"},
                {"lr", 1e25},
                {"seed", 6}};
  j["output_dir"] = (dir / "o").string();
  write_text(dir / "cfg.json", j.dump());
  CHECK(run_cli("train --config " + (dir / "cfg.json").string()) == 1);
  CHECK(fs::exists(dir / "o" / "run.csv"));
  CHECK(fs::exists(dir / "o" / "checkpoint.txt"));
  CHECK(fs::exists(dir / "o" / "run.svg"));
}

}  // TEST_SUITE

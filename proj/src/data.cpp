#include "aelab/data.hpp"

#include <cmath>
#include <cstdio>

#include "aelab/errors.hpp"
#include "aelab/io.hpp"
#include "aelab/prng.hpp"

namespace aelab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void split_contiguous(Dataset& ds, double train_fraction) {
  const std::size_t n = ds.size();
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ConfigError("train_fraction must be in (0, 1]");
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n)));
  ds.train.clear();
  ds.test.clear();
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? ds.train : ds.test).push_back(i);
}

}  // namespace

Matrix Dataset::gather(const std::vector<std::size_t>& idx) const {
  Matrix out(dim(), idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (std::size_t i = 0; i < dim(); ++i) out(i, j) = points(i, idx[j]);
  return out;
}

Dataset gen_spiral(std::size_t n, double turns, double r0, double r1,
                   double sigma, std::uint64_t seed, double train_fraction) {
  if (n < 2) throw ConfigError("gen_spiral: n must be at least 2");
  if (!(r1 >= r0 && r0 >= 0.0))
    throw ConfigError("gen_spiral: need r1 >= r0 >= 0");
  if (turns < 0.0) throw ConfigError("gen_spiral: turns must be >= 0");
  if (sigma < 0.0) throw ConfigError("gen_spiral: sigma must be >= 0");

  Dataset ds;
  ds.points = Matrix(2, n);
  Rng rng(seed);
  for (std::size_t j = 0; j < n; ++j) {
    const double t = rng.uniform();
    const double r = r0 + (r1 - r0) * t;
    const double a = kTwoPi * turns * t;
    // Noise is always drawn so streams align across sigma values.
    const double nx = rng.normal(), ny = rng.normal();
    ds.points(0, j) = r * std::cos(a) + sigma * nx;
    ds.points(1, j) = r * std::sin(a) + sigma * ny;
  }
  split_contiguous(ds, train_fraction);
  ds.meta = {{"generator", "spiral"}, {"n", n},         {"turns", turns},
             {"r0", r0},              {"r1", r1},       {"sigma", sigma},
             {"seed", seed},          {"train_fraction", train_fraction}};
  return ds;
}

Dataset gen_fixture(FixtureKind kind, std::size_t n, double sigma,
                    std::uint64_t seed, double train_fraction) {
  if (n < 2) throw ConfigError("gen_fixture: n must be at least 2");
  if (sigma < 0.0) throw ConfigError("gen_fixture: sigma must be >= 0");

  Dataset ds;
  ds.points = Matrix(2, n);
  Rng rng(seed);
  const char* name = "";
  for (std::size_t j = 0; j < n; ++j) {
    double x = 0.0, y = 0.0;
    switch (kind) {
      case FixtureKind::Line: {
        // Segment from (-1, -0.5) to (1, 0.5).
        const double t = rng.uniform();
        x = -1.0 + 2.0 * t;
        y = -0.5 + 1.0 * t;
        name = "line";
        break;
      }
      case FixtureKind::Circle: {
        const double a = kTwoPi * rng.uniform();
        x = std::cos(a);
        y = std::sin(a);
        name = "circle";
        break;
      }
      case FixtureKind::Strip: {
        x = rng.uniform(-1.0, 1.0);
        y = rng.uniform(-0.5, 0.5);
        name = "strip";
        break;
      }
    }
    const double nx = rng.normal(), ny = rng.normal();
    ds.points(0, j) = x + sigma * nx;
    ds.points(1, j) = y + sigma * ny;
  }
  split_contiguous(ds, train_fraction);
  ds.meta = {{"generator", name},
             {"n", n},
             {"sigma", sigma},
             {"seed", seed},
             {"train_fraction", train_fraction}};
  return ds;
}

PolarGrid gen_polar_grid(std::size_t n_rays, std::size_t n_circles,
                         double r_max, std::size_t samples_per_line) {
  if (n_rays < 1 || n_circles < 1 || samples_per_line < 1)
    throw ConfigError("gen_polar_grid: counts must be >= 1");
  if (r_max <= 0.0) throw ConfigError("gen_polar_grid: r_max must be > 0");

  PolarGrid g;
  for (std::size_t k = 0; k < n_rays; ++k) {
    const double a =
        kTwoPi * static_cast<double>(k) / static_cast<double>(n_rays);
    Matrix line(2, samples_per_line);
    for (std::size_t j = 0; j < samples_per_line; ++j) {
      const double r = samples_per_line == 1
                           ? r_max
                           : r_max * static_cast<double>(j) /
                                 static_cast<double>(samples_per_line - 1);
      line(0, j) = r * std::cos(a);
      line(1, j) = r * std::sin(a);
    }
    g.rays.push_back(std::move(line));
  }
  for (std::size_t k = 0; k < n_circles; ++k) {
    const double r = r_max * static_cast<double>(k + 1) /
                     static_cast<double>(n_circles);
    Matrix line(2, samples_per_line);
    for (std::size_t j = 0; j < samples_per_line; ++j) {
      const double a = samples_per_line == 1
                           ? 0.0
                           : kTwoPi * static_cast<double>(j) /
                                 static_cast<double>(samples_per_line - 1);
      line(0, j) = r * std::cos(a);
      line(1, j) = r * std::sin(a);
    }
    g.circles.push_back(std::move(line));
  }
  return g;
}

Dataset regenerate(const nlohmann::json& meta) {
  const std::string gen = meta.at("generator").get<std::string>();
  if (gen == "spiral")
    return gen_spiral(meta.at("n").get<std::size_t>(),
                      meta.at("turns").get<double>(),
                      meta.at("r0").get<double>(), meta.at("r1").get<double>(),
                      meta.at("sigma").get<double>(),
                      meta.at("seed").get<std::uint64_t>(),
                      meta.at("train_fraction").get<double>());
  FixtureKind kind;
  if (gen == "line") kind = FixtureKind::Line;
  else if (gen == "circle") kind = FixtureKind::Circle;
  else if (gen == "strip") kind = FixtureKind::Strip;
  else throw ConfigError("regenerate: unknown generator '" + gen + "'");
  return gen_fixture(kind, meta.at("n").get<std::size_t>(),
                     meta.at("sigma").get<double>(),
                     meta.at("seed").get<std::uint64_t>(),
                     meta.at("train_fraction").get<double>());
}

std::string dataset_to_csv(const Dataset& ds) {
  std::string out = "# meta: " + ds.meta.dump() + "\n";
  for (std::size_t i = 0; i < ds.dim(); ++i) {
    if (i) out += ',';
    out += "x" + std::to_string(i);
  }
  out += '\n';
  char buf[40];
  for (std::size_t j = 0; j < ds.size(); ++j) {
    for (std::size_t i = 0; i < ds.dim(); ++i) {
      if (i) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", ds.points(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  const std::string meta_tag = "# meta: ";
  if (text.rfind(meta_tag, 0) != 0)
    throw ParseError("dataset CSV: missing '# meta:' line");
  const std::size_t eol = text.find('\n');
  if (eol == std::string::npos) throw ParseError("dataset CSV: truncated");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text.substr(meta_tag.size(),
                                             eol - meta_tag.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset CSV: bad meta JSON: ") + e.what());
  }

  // Parse the body: header row then points.
  std::vector<std::vector<double>> rows;
  std::size_t pos = eol + 1;
  const std::size_t header_end = text.find('\n', pos);
  if (header_end == std::string::npos)
    throw ParseError("dataset CSV: missing header row");
  pos = header_end + 1;
  while (pos < text.size()) {
    std::size_t line_end = text.find('\n', pos);
    if (line_end == std::string::npos) line_end = text.size();
    if (line_end > pos) {
      std::vector<double> row;
      std::size_t p = pos;
      while (p <= line_end) {
        std::size_t comma = std::min(text.find(',', p), line_end);
        try {
          row.push_back(std::stod(text.substr(p, comma - p)));
        } catch (const std::exception&) {
          throw ParseError("dataset CSV: bad number at byte " +
                           std::to_string(p));
        }
        p = comma + 1;
        if (comma == line_end) break;
      }
      rows.push_back(std::move(row));
    }
    pos = line_end + 1;
  }
  if (rows.empty()) throw ParseError("dataset CSV: no points");
  const std::size_t dim = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != dim)
      throw ParseError("dataset CSV: ragged rows");

  Dataset ds;
  ds.meta = meta;
  ds.points = Matrix(dim, rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < dim; ++i) ds.points(i, j) = rows[j][i];
  const double tf = meta.contains("train_fraction")
                        ? meta.at("train_fraction").get<double>()
                        : 0.8;
  split_contiguous(ds, tf);

  // Provenance check: regenerating from meta must reproduce the file.
  if (meta.contains("generator") &&
      meta.at("generator").get<std::string>() != "file") {
    const Dataset fresh = regenerate(meta);
    bool same = fresh.dim() == ds.dim() && fresh.size() == ds.size();
    for (std::size_t i = 0; same && i < ds.points.size(); ++i)
      same = fresh.points.data()[i] == ds.points.data()[i];
    if (!same)
      throw ParseError(
          "dataset CSV: points do not match regeneration from the meta "
          "line");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  write_file_atomic(path, dataset_to_csv(ds));
}

Dataset load_dataset(const std::string& path) {
  return dataset_from_csv(read_file(path));
}

}  // namespace aelab

#include "sure_eb/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sure_eb {

Index CsvTable::col(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Index>(i);
  return -1;
}

Index CsvTable::require_col(const std::string& name) const {
  const Index i = col(name);
  if (i < 0) throw data_error("missing required column: " + name);
  return i;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

double parse_double(const std::string& cell, const std::string& col,
                    size_t row) {
  double out = 0;
  const auto* begin = cell.data();
  const auto* end = cell.data() + cell.size();
  const auto res = std::from_chars(begin, end, out);
  if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(out)) {
    std::ostringstream msg;
    msg << "row " << row << ": cannot parse column '" << col << "' value '"
        << cell << "'";
    throw data_error(msg.str());
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty file: " + path);
  table.header = split_csv_line(line);
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size()) {
      std::ostringstream msg;
      msg << "row " << row << ": expected " << table.header.size()
          << " cells, got " << cells.size();
      throw data_error(msg.str());
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file: " + path);
  for (size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << "\n";
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Dataset dataset_from_table(const CsvTable& table) {
  const Index zc = table.require_col("z");
  const Index sc = table.require_col("sigma");
  std::vector<Index> xcols;
  for (Index d = 1;; ++d) {
    const Index c = table.col("x" + std::to_string(d));
    if (c < 0) break;
    xcols.push_back(c);
  }
  const Index n = static_cast<Index>(table.rows.size());
  if (n == 0) throw data_error("no data rows");
  Dataset ds;
  ds.z.resize(n);
  ds.sigma2.resize(n);
  ds.X.resize(n, static_cast<Index>(xcols.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<size_t>(i)];
    const size_t line = static_cast<size_t>(i) + 2;  // 1-based incl header
    ds.z[i] = parse_double(row[static_cast<size_t>(zc)], "z", line);
    const double sigma =
        parse_double(row[static_cast<size_t>(sc)], "sigma", line);
    if (!(sigma > 0)) {
      std::ostringstream msg;
      msg << "row " << line << ": sigma must be > 0, got " << sigma;
      throw data_error(msg.str());
    }
    ds.sigma2[i] = sigma * sigma;
    for (size_t k = 0; k < xcols.size(); ++k)
      ds.X(i, static_cast<Index>(k)) = parse_double(
          row[static_cast<size_t>(xcols[k])],
          "x" + std::to_string(k + 1), line);
  }
  ds.validate();
  return ds;
}

Dataset read_dataset_csv(const std::string& path) {
  return dataset_from_table(read_csv(path));
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error("cannot parse JSON in " + path + ": " + e.what());
  }
  return j;
}

json to_json(const FitConfig& c) {
  return json{{"k", c.K},
              {"iters", c.iters},
              {"lr", c.lr},
              {"folds", c.folds},
              {"seed", c.seed},
              {"early_stop_tol", c.early_stop_tol},
              {"early_stop_window", c.early_stop_window},
              {"standardize", c.standardize}};
}

FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  c.K = j.value("k", c.K);
  c.iters = j.value("iters", c.iters);
  c.lr = j.value("lr", c.lr);
  c.folds = j.value("folds", c.folds);
  c.seed = j.value("seed", c.seed);
  c.early_stop_tol = j.value("early_stop_tol", c.early_stop_tol);
  c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
  c.standardize = j.value("standardize", c.standardize);
  return c;
}

json to_json(const ParticlePrior& prior) {
  return json{{"atoms", std::vector<double>(
                            prior.atoms.data(),
                            prior.atoms.data() + prior.atoms.size())},
              {"weights", std::vector<double>(
                              prior.weights.data(),
                              prior.weights.data() + prior.weights.size())}};
}

json to_json(const MseReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back(json{{"setting", report.setting},
                        {"n", report.n},
                        {"method", r.method},
                        {"mse_mean", r.mse_mean},
                        {"mse_se", r.mse_se},
                        {"runtime_s", r.runtime_s},
                        {"seed", report.seed}});
  return rows;
}

json to_json(const FissionReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back(json{{"method", r.method},
                        {"fmse_mean", r.fmse_mean},
                        {"ri_percent", 100.0 * r.ri_mean},
                        {"se_ri_percent", 100.0 * r.se_ri},
                        {"b", report.B},
                        {"seed", report.seed}});
  return rows;
}

}  // namespace sure_eb

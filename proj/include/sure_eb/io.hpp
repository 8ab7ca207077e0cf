#pragma once
#include <json.hpp>
#include <string>
#include <vector>

#include "sure_eb/estimators.hpp"
#include "sure_eb/eval.hpp"
#include "sure_eb/types.hpp"

namespace sure_eb {

using json = nlohmann::json;

// Plain comma-separated table; cells kept verbatim so fit output can append
// columns without disturbing the caller's data.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index col(const std::string& name) const;      // -1 when absent
  Index require_col(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Shortest-exact decimal formatting for CSV cells.
std::string format_double(double x);

// Parses columns z (value), sigma (standard deviation, squared on load) and
// x1..xd (consecutive, starting at x1) into a Dataset.
Dataset dataset_from_table(const CsvTable& table);
Dataset read_dataset_csv(const std::string& path);

void write_json(const std::string& path, const json& j);
json read_json(const std::string& path);

json to_json(const FitConfig& c);
FitConfig fit_config_from_json(const json& j);

json to_json(const ParticlePrior& prior);
json to_json(const MseReport& report);
json to_json(const FissionReport& report);

}  // namespace sure_eb

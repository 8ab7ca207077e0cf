#pragma once
#include <string>
#include <vector>

#include "sure_eb/io.hpp"
#include "sure_eb/types.hpp"

namespace sure_eb {

// Everything a command needs, serializable so that results files echo their
// own provenance and can be rerun bit-for-bit via --config.
struct RunConfig {
  std::string command;                    // simulate | fit | fission | cv
  std::string setting = "homosc_normal";  // simulate
  std::vector<Index> n_list = {100};      // simulate sample sizes
  int replicates = 10;                    // simulate / fission B
  std::vector<std::string> methods = {"sure-pm", "npmle", "oracle"};
  std::string method = "sure-pm";         // fit / cv
  std::string input;                      // fit / fission / cv CSV path
  std::string out = "results.json";
  std::string format = "json";            // json | csv (csv adds a view)
  Index K = 100;
  std::uint64_t seed = 1;
  long iters = 2000;
  double lr = 0.01;
  int folds = 5;
  double a_star = 1;
  double m_star = 5;
  Index k_star = 50;
  std::vector<Index> k_grid = {10, 100};  // cv hyperparameter grid
  bool timing = false;                    // write measured runtime_s
  bool standardize = false;
};

json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j);

int cmd_simulate(const RunConfig& config);
int cmd_fit(const RunConfig& config);
int cmd_fission(const RunConfig& config);
int cmd_cv(const RunConfig& config);

int run_cli(int argc, const char* const* argv);

}  // namespace sure_eb

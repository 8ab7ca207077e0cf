#include "sure_eb/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <iostream>

#include "sure_eb/estimators.hpp"
#include "sure_eb/eval.hpp"
#include "sure_eb/simgen.hpp"

namespace sure_eb {

namespace {

std::string stem_of(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos ||
      (slash != std::string::npos && dot < slash))
    return path;
  return path.substr(0, dot);
}

FitConfig to_fit_config(const RunConfig& c) {
  FitConfig f;
  f.K = c.K;
  f.iters = c.iters;
  f.lr = c.lr;
  f.folds = c.folds;
  f.seed = c.seed;
  f.standardize = c.standardize;
  return f;
}

std::string covariate_label(const Dataset& ds) {
  if (ds.dim() == 0) return "sigma";
  return "sigma+x1..x" + std::to_string(ds.dim());
}

void write_rows_csv(const std::string& path, const json& rows) {
  if (!rows.is_array() || rows.empty()) return;
  CsvTable table;
  for (auto it = rows[0].begin(); it != rows[0].end(); ++it)
    table.header.push_back(it.key());
  for (const auto& r : rows) {
    std::vector<std::string> cells;
    for (const auto& name : table.header) {
      const auto& v = r.at(name);
      if (v.is_number_float())
        cells.push_back(format_double(v.get<double>()));
      else if (v.is_string())
        cells.push_back(v.get<std::string>());
      else
        cells.push_back(v.dump());
    }
    table.rows.push_back(std::move(cells));
  }
  write_csv(path, table);
}

void emit_results(const RunConfig& config, const json& rows) {
  json doc{{"schema_version", 1},
           {"config", to_json(config)},
           {"rows", rows}};
  write_json(config.out, doc);
  if (config.format == "csv")
    write_rows_csv(stem_of(config.out) + ".csv", rows);
}

}  // namespace

json to_json(const RunConfig& c) {
  return json{{"command", c.command},
              {"setting", c.setting},
              {"n", c.n_list},
              {"replicates", c.replicates},
              {"methods", c.methods},
              {"method", c.method},
              {"input", c.input},
              {"out", c.out},
              {"format", c.format},
              {"k", c.K},
              {"seed", c.seed},
              {"iters", c.iters},
              {"lr", c.lr},
              {"folds", c.folds},
              {"a_star", c.a_star},
              {"m_star", c.m_star},
              {"k_star", c.k_star},
              {"k_grid", c.k_grid},
              {"timing", c.timing},
              {"standardize", c.standardize}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.command = j.value("command", c.command);
  c.setting = j.value("setting", c.setting);
  c.n_list = j.value("n", c.n_list);
  c.replicates = j.value("replicates", c.replicates);
  c.methods = j.value("methods", c.methods);
  c.method = j.value("method", c.method);
  c.input = j.value("input", c.input);
  c.out = j.value("out", c.out);
  c.format = j.value("format", c.format);
  c.K = j.value("k", c.K);
  c.seed = j.value("seed", c.seed);
  c.iters = j.value("iters", c.iters);
  c.lr = j.value("lr", c.lr);
  c.folds = j.value("folds", c.folds);
  c.a_star = j.value("a_star", c.a_star);
  c.m_star = j.value("m_star", c.m_star);
  c.k_star = j.value("k_star", c.k_star);
  c.k_grid = j.value("k_grid", c.k_grid);
  c.timing = j.value("timing", c.timing);
  c.standardize = j.value("standardize", c.standardize);
  return c;
}

int cmd_simulate(const RunConfig& config) {
  if (config.methods.empty()) throw usage_error("no methods given");
  DgpSpec spec;
  spec.setting = setting_from_name(config.setting);
  spec.seed = config.seed;
  spec.a_star = config.a_star;
  spec.m_star = config.m_star;
  spec.k_star = config.k_star;

  std::vector<std::string> methods = config.methods;
  std::sort(methods.begin(), methods.end());
  std::vector<Index> sizes = config.n_list;
  std::sort(sizes.begin(), sizes.end());

  json rows = json::array();
  for (Index n : sizes) {
    spec.n = n;
    const MseReport report = run_mse_study(
        spec, methods, config.replicates, to_fit_config(config),
        config.timing);
    for (const auto& r : to_json(report)) rows.push_back(r);
  }
  emit_results(config, rows);

  CsvTable plot;
  plot.header = {"setting", "n", "method", "mse_mean", "mse_se"};
  for (const auto& r : rows)
    plot.rows.push_back({r.at("setting").get<std::string>(),
                         std::to_string(r.at("n").get<Index>()),
                         r.at("method").get<std::string>(),
                         format_double(r.at("mse_mean").get<double>()),
                         format_double(r.at("mse_se").get<double>())});
  write_csv(stem_of(config.out) + "_plot.csv", plot);
  return 0;
}

int cmd_fit(const RunConfig& config) {
  if (config.input.empty()) throw usage_error("fit needs --input CSV");
  const CsvTable table = read_csv(config.input);
  const Dataset ds = dataset_from_table(table);
  const FitResult fit = fit_method(config.method, ds, to_fit_config(config));

  CsvTable out = table;
  out.header.push_back("mu_hat");
  out.header.push_back("post_var");
  for (Index i = 0; i < ds.n(); ++i) {
    out.rows[static_cast<size_t>(i)].push_back(
        format_double(fit.estimates[i]));
    out.rows[static_cast<size_t>(i)].push_back(
        fit.post_var.size() > 0 ? format_double(fit.post_var[i]) : "");
  }
  write_csv(config.out, out);

  json sidecar{{"schema_version", 1},
               {"config", to_json(config)},
               {"method", fit.method},
               {"final_loss", fit.final_loss},
               {"iterations_run", fit.iterations_run},
               {"n", ds.n()}};
  if (fit.prior) sidecar["prior"] = to_json(*fit.prior);
  if (fit.A) sidecar["a"] = *fit.A;
  if (fit.method == "grandmean") sidecar["center"] = fit.center;
  if (fit.method == "sure-thing") sidecar["m_offset"] = fit.m_offset;
  if (fit.fold_A.size() > 0)
    sidecar["fold_a"] = std::vector<double>(
        fit.fold_A.data(), fit.fold_A.data() + fit.fold_A.size());
  write_json(config.out + ".json", sidecar);
  return 0;
}

int cmd_fission(const RunConfig& config) {
  if (config.input.empty()) throw usage_error("fission needs --input CSV");
  const Dataset ds = read_dataset_csv(config.input);
  const FissionReport report = fission_evaluate(
      ds, config.methods, config.replicates, config.seed,
      to_fit_config(config));
  const std::string label = covariate_label(ds);
  json rows = json::array();
  for (const auto& r : to_json(report)) {
    json row = r;
    row["label"] = label;
    rows.push_back(row);
  }
  emit_results(config, rows);
  return 0;
}

int cmd_cv(const RunConfig& config) {
  if (config.input.empty()) throw usage_error("cv needs --input CSV");
  if (config.k_grid.empty()) throw usage_error("empty --k-grid");
  const Dataset ds = read_dataset_csv(config.input);
  std::vector<FitConfig> grid;
  for (Index k : config.k_grid) {
    FitConfig f = to_fit_config(config);
    f.K = k;
    grid.push_back(f);
  }
  const CvResult res = cv_sure(ds, config.method, grid, config.folds);
  json rows = json::array();
  for (size_t g = 0; g < grid.size(); ++g)
    for (Index f = 0; f < res.fold_scores.cols(); ++f)
      rows.push_back(json{{"k", grid[g].K},
                          {"fold", f},
                          {"cv_sure", res.fold_scores(static_cast<Index>(g), f)},
                          {"mean_cv_sure", res.mean_scores[static_cast<Index>(g)]},
                          {"chosen", static_cast<Index>(g) == res.chosen}});
  json doc{{"schema_version", 1},
           {"config", to_json(config)},
           {"chosen_k", res.grid[static_cast<size_t>(res.chosen)].K},
           {"rows", rows}};
  write_json(config.out, doc);
  if (config.format == "csv") write_rows_csv(stem_of(config.out) + ".csv", rows);
  return 0;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"empirical Bayes denoising via SURE-trained priors"};
  app.require_subcommand(1);

  RunConfig config;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", config.out, "output path (canonical JSON)");
    sub->add_option("--format", config.format, "json | csv (csv adds a view)")
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", config.seed, "RNG seed");
    sub->add_option("--k", config.K, "number of prior atoms");
    sub->add_option("--iters", config.iters, "optimizer iteration budget");
    sub->add_option("--lr", config.lr, "Adam learning rate");
    sub->add_option("--folds", config.folds, "fold count");
    sub->add_flag("--standardize", config.standardize,
                  "standardize network inputs");
    sub->add_option("--config", config_path,
                    "rerun from the config echoed in a results file");
  };

  auto* sim = app.add_subcommand("simulate", "replicated simulation study");
  add_common(sim);
  sim->add_option("--setting", config.setting, "DGP name");
  sim->add_option("--n", config.n_list, "sample sizes");
  sim->add_option("--replicates", config.replicates, "Monte Carlo replicates");
  sim->add_option("--methods", config.methods, "methods (incl. oracle, mle)")
      ->delimiter(',');
  sim->add_option("--a-star", config.a_star, "homosc_normal prior variance");
  sim->add_option("--m-star", config.m_star, "compound signal size");
  sim->add_option("--k-star", config.k_star, "compound signal count");
  sim->add_flag("--timing", config.timing, "record wall-clock runtime_s");

  auto* fitc = app.add_subcommand("fit", "fit one method to CSV data");
  add_common(fitc);
  fitc->add_option("--input", config.input, "CSV with z, sigma, x1..xd");
  fitc->add_option("--method", config.method, "method name");

  auto* fis = app.add_subcommand("fission", "data-fission evaluation");
  add_common(fis);
  fis->add_option("--input", config.input, "CSV with z, sigma, x1..xd");
  fis->add_option("--methods", config.methods, "methods to compare")
      ->delimiter(',');
  fis->add_option("--replicates", config.replicates, "fission replicates");

  auto* cv = app.add_subcommand("cv", "cross-validated SURE selection");
  add_common(cv);
  cv->add_option("--input", config.input, "CSV with z, sigma, x1..xd");
  cv->add_option("--method", config.method, "method name");
  cv->add_option("--k-grid", config.k_grid, "atom counts to compare")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    std::string command;
    for (auto* sub : {sim, fitc, fis, cv})
      if (sub->parsed()) command = sub->get_name();
    if (!config_path.empty()) {
      const json j = read_json(config_path);
      config = run_config_from_json(j.contains("config") ? j.at("config") : j);
      if (config.command.empty()) config.command = command;
    } else {
      config.command = command;
    }
    if (config.command == "simulate") return cmd_simulate(config);
    if (config.command == "fit") return cmd_fit(config);
    if (config.command == "fission") return cmd_fission(config);
    if (config.command == "cv") return cmd_cv(config);
    throw usage_error("unknown command: " + config.command);
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace sure_eb

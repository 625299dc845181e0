#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pyramid/commands.hpp"

using namespace pyramid;

namespace {

// Flags bound to optionals so only values the user set override the config.
struct FitFlags {
  std::optional<std::string> data, mode;
  std::optional<int> categories, K_upper, B, iterations, burn_in, thin;
  std::optional<bool> positivity, save_local;
  std::optional<double> mu0, sigma0_sq, v0, a_sigma, b_sigma, alpha, theta_inf;

  void add(CLI::App* app, bool with_data) {
    if (with_data) {
      app->add_option("--data", data, "Dataset CSV (category codes 1..d)");
      app->add_option("--categories", categories, "Categories per variable (0: infer)");
    }
    app->add_option("--mode", mode, "csp or fixed_K");
    app->add_option("--K-upper", K_upper, "Number of binary latent columns fitted");
    app->add_option("--B", B, "Deep latent classes");
    app->add_option("--iterations", iterations);
    app->add_option("--burn-in", burn_in);
    app->add_option("--thin", thin);
    app->add_option("--positivity", positivity, "Constrain active coefficients to be positive");
    app->add_option("--save-local-draws", save_local, "Store A and Z for every retained draw");
    app->add_option("--mu0", mu0, "Intercept prior mean");
    app->add_option("--sigma0-sq", sigma0_sq, "Intercept prior variance");
    app->add_option("--v0", v0, "Pseudo-prior sd of inactive coefficients");
    app->add_option("--a-sigma", a_sigma);
    app->add_option("--b-sigma", b_sigma);
    app->add_option("--alpha", alpha, "Stick-breaking concentration");
    app->add_option("--theta-inf", theta_inf, "Spike variance");
  }

  Json overlay() const {
    Json f = Json::object();
    auto put = [&](const char* key, const auto& opt) {
      if (opt) f[key] = *opt;
    };
    put("data", data);
    put("mode", mode);
    put("categories", categories);
    put("K_upper", K_upper);
    put("B", B);
    put("iterations", iterations);
    put("burn_in", burn_in);
    put("thin", thin);
    put("positivity", positivity);
    put("save_local_draws", save_local);
    put("mu0", mu0);
    put("sigma0_sq", sigma0_sq);
    put("v0", v0);
    put("a_sigma", a_sigma);
    put("b_sigma", b_sigma);
    put("alpha", alpha);
    put("theta_inf", theta_inf);
    return f;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian pyramid models: simulate, fit, check identifiability, evaluate"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<long long> seed;
  std::optional<int> jobs;
  std::string out;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config; flags override its values");
  app.add_option("--seed", seed, "Root RNG seed");
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--jobs", jobs, "Worker threads");
  app.add_flag("--verbose,-v", verbose, "Progress on stderr");

  auto* sim = app.add_subcommand("simulate", "Draw a dataset from a two-layer truth");
  std::optional<int> sim_n;
  std::optional<std::string> sim_truth;
  sim->add_option("--n", sim_n, "Sample size");
  sim->add_option("--truth", sim_truth, "'paper' or a truth JSON file");

  auto* fit = app.add_subcommand("fit", "Run the Gibbs sampler on a dataset");
  FitFlags fit_flags;
  fit_flags.add(fit, true);

  auto* chk = app.add_subcommand("check-id", "Identifiability verdicts");
  std::optional<std::string> chk_mode, chk_constraint;
  std::optional<std::vector<std::string>> chk_graphs;
  std::optional<int> chk_B;
  chk->add_option("--mode", chk_mode, "two-layer, multilayer, strict or generic");
  chk->add_option("--graph", chk_graphs, "Graph CSV; repeat for multilayer, bottom layer first");
  chk->add_option("--constraint", chk_constraint, "Constraint-matrix CSV (strict/generic)");
  chk->add_option("--B", chk_B, "Deep latent classes (two-layer)");

  auto* ev = app.add_subcommand("evaluate", "Score a draws directory against a truth");
  std::optional<std::string> ev_draws, ev_truth;
  ev->add_option("--draws", ev_draws, "Directory written by fit (its draws/ folder)");
  ev->add_option("--truth", ev_truth, "'paper' or a truth JSON file");

  auto* rep = app.add_subcommand("replicate", "Repeated simulate-fit-evaluate pipelines");
  std::optional<int> rep_reps;
  std::optional<std::vector<int>> rep_n;
  std::optional<std::string> rep_truth;
  rep->add_option("--reps", rep_reps, "Replications per sample size");
  rep->add_option("--n", rep_n, "Sample sizes");
  rep->add_option("--truth", rep_truth, "'paper' or a truth JSON file");
  FitFlags rep_flags;
  rep_flags.add(rep, false);

  for (auto* sub : {sim, fit, chk, ev, rep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::string name = app.get_subcommands().front()->get_name();
  Json overlay = Json::object();
  if (seed) overlay["seed"] = *seed;
  if (jobs) overlay["jobs"] = *jobs;
  if (name == "simulate") {
    Json s = Json::object();
    if (sim_n) s["n"] = *sim_n;
    if (sim_truth) s["truth"] = *sim_truth;
    overlay["simulate"] = s;
  } else if (name == "fit") {
    overlay["fit"] = fit_flags.overlay();
  } else if (name == "check-id") {
    Json c = Json::object();
    if (chk_mode) c["mode"] = *chk_mode;
    if (chk_graphs) c["graphs"] = *chk_graphs;
    if (chk_constraint) c["constraint"] = *chk_constraint;
    if (chk_B) c["B"] = *chk_B;
    overlay["check_id"] = c;
  } else if (name == "evaluate") {
    Json e = Json::object();
    if (ev_draws) e["draws"] = *ev_draws;
    if (ev_truth) e["truth"] = *ev_truth;
    overlay["evaluate"] = e;
  } else if (name == "replicate") {
    Json r = Json::object();
    if (rep_reps) r["reps"] = *rep_reps;
    if (rep_n) r["n"] = *rep_n;
    if (rep_truth) r["truth"] = *rep_truth;
    overlay["replicate"] = r;
    overlay["fit"] = rep_flags.overlay();
  }

  CommandIo io{std::cerr, std::cerr, verbose};
  Json config;
  try {
    config = default_config();
    if (config_path) {
      Json file;
      try {
        file = Json::parse(read_file(*config_path));
      } catch (const Json::exception& e) {
        throw ConfigError("cannot parse " + *config_path + ": " + e.what());
      }
      config = merge_config(config, file);
    }
    config = merge_config(config, overlay);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return run_command(name, config, out, io);
}

#include "pyramid/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "pyramid/identify.hpp"
#include "pyramid/simgen.hpp"

namespace pyramid {

namespace {

constexpr const char* kVersion = "1.0.0";

const Json& section(const Json& cfg, const char* name) {
  if (!cfg.contains(name) || !cfg[name].is_object())
    throw ConfigError(std::string("missing config section '") + name + "'");
  return cfg[name];
}

template <class T>
T get(const Json& obj, const char* key, const char* where) {
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " is missing or has the wrong type");
  }
}

std::uint64_t required_seed(const Json& cfg) {
  if (!cfg.contains("seed") || cfg["seed"].is_null())
    throw ConfigError("a seed is required (--seed or \"seed\" in the config file)");
  if (!cfg["seed"].is_number_integer() || cfg["seed"].get<long long>() < 0)
    throw ConfigError("seed must be a non-negative integer");
  return cfg["seed"].get<std::uint64_t>();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Tracks files written by a command for the manifest.
class OutputSet {
 public:
  explicit OutputSet(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }
  void write(const std::string& rel, const std::string& contents) {
    write_file_atomic(root_ / rel, contents);
    files_[rel] = hex64(fnv1a64(contents));
  }
  void add_existing(const std::string& rel) {
    files_[rel] = hex64(fnv1a64(read_file(root_ / rel)));
  }
  void finish(const std::string& command, const Json& config, double seconds, Json extra = {}) {
    write("config.json", config.dump(2) + "\n");
    Json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config"] = config;
    m["config_hash"] = config_hash(config);
    m["outputs"] = files_;
    m["runtime_seconds"] = seconds;
    m["rerun"] = "pyramid_cli " + command + " --config config.json --out <dir>";
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_file_atomic(root_ / "manifest.json", m.dump(2) + "\n");
  }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  Json files_ = Json::object();
};

std::string vector_csv(const Vector& v) { return matrix_to_csv(Matrix(v.transpose())); }

void write_posterior_summaries(OutputSet& outs, const PosteriorDraws& draws) {
  const ModeEstimates modes = posterior_mode_estimates(draws);
  const PosteriorMeans means = posterior_means(draws);
  outs.write("estimates/G_hat.csv", int_matrix_to_csv(modes.G_hat));
  outs.write("estimates/A_hat.csv", int_matrix_to_csv(modes.A_hat));
  outs.write("estimates/Z_hat.csv", int_matrix_to_csv(modes.Z_hat));
  outs.write("estimates/G_freq.csv", matrix_to_csv(means.G_freq));
  outs.write("estimates/beta0_mean.csv", matrix_to_csv(means.beta0));
  for (std::size_t c = 0; c < means.beta.size(); ++c)
    outs.write("estimates/beta_mean_c" + std::to_string(c + 1) + ".csv",
               matrix_to_csv(means.beta[c]));
  outs.write("estimates/sigma2_mean.csv", matrix_to_csv(means.sigma2));
  outs.write("estimates/eta_mean.csv", matrix_to_csv(means.eta));
  outs.write("estimates/tau_mean.csv", vector_csv(means.tau));
}

void write_draw_dir(OutputSet& outs, const PosteriorDraws& draws) {
  write_draws(outs.root() / "draws", draws);
  for (const auto& e : fs::directory_iterator(outs.root() / "draws"))
    outs.add_existing("draws/" + e.path().filename().string());
}

// Smallest active coefficient over retained draws (infinity when none).
double min_active_beta(const PosteriorDraws& d) {
  double m = std::numeric_limits<double>::infinity();
  for (int t = 0; t < d.size(); ++t)
    for (const auto& slice : d.beta[t])
      for (int j = 0; j < d.p; ++j)
        for (int k = 0; k < d.K; ++k)
          if (d.G[t](j, k)) m = std::min(m, slice(j, k));
  return m;
}

std::vector<std::pair<std::string, double>> metrics(const EvalReport& r) {
  std::vector<std::pair<std::string, double>> m = {
      {"g_error_matrix", r.g_error.matrix}, {"g_error_row", r.g_error.row},
      {"g_error_entry", r.g_error.entry},   {"rmse_beta_active", r.rmse.beta_active},
      {"rmse_beta_all", r.rmse.beta_all},   {"rmse_beta0", r.rmse.beta0},
      {"rmse_eta", r.rmse.eta}};
  if (r.k_star) m.emplace_back("k_star", *r.k_star);
  if (r.k_star_indicator) m.emplace_back("k_star_indicator", *r.k_star_indicator);
  return m;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

Json default_config() {
  return Json::parse(R"({
    "seed": null,
    "jobs": 1,
    "simulate": {"n": 1000, "truth": "paper"},
    "fit": {"data": "", "categories": 0, "mode": "csp", "K_upper": 7, "B": 2,
            "iterations": 15000, "burn_in": 5000, "thin": 5, "positivity": true,
            "save_local_draws": false, "mu0": 0.0, "sigma0_sq": 4.0, "v0": 0.1,
            "a_sigma": 2.0, "b_sigma": 2.0, "alpha": 5.0, "theta_inf": 0.07},
    "check_id": {"mode": "two-layer", "graphs": [], "constraint": "", "B": 2},
    "evaluate": {"draws": "", "truth": ""},
    "replicate": {"reps": 5, "n": [1000], "truth": "paper", "keep_draws": false}
  })");
}

Json merge_config(Json base, const Json& overlay) {
  if (!overlay.is_object()) throw ConfigError("config document must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string& key = it.key();
    if (!base.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + key + "' must be a section");
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
        if (!slot.contains(jt.key()))
          throw ConfigError("unknown config key '" + key + "." + jt.key() + "'");
        Json& leaf = slot[jt.key()];
        const Json& v = jt.value();
        const bool ok = leaf.is_null() || v.is_null() || (leaf.is_number() && v.is_number()) ||
                        leaf.type() == v.type();
        if (!ok) throw ConfigError("config key '" + key + "." + jt.key() + "' has the wrong type");
        // Keep real-valued settings real even when given as integers.
        leaf = (leaf.is_number_float() && v.is_number()) ? Json(v.get<double>()) : v;
      }
    } else {
      const Json& v = it.value();
      const bool ok = slot.is_null() || v.is_null() || (slot.is_number() && v.is_number()) ||
                      slot.type() == v.type();
      if (!ok) throw ConfigError("config key '" + key + "' has the wrong type");
      slot = v;
    }
  }
  return base;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const Json& config) { return hex64(fnv1a64(config.dump())); }

SamplerConfig sampler_from_config(const Json& cfg) {
  const Json& f = section(cfg, "fit");
  SamplerConfig s;
  try {
    s.mode = parse_prior_mode(get<std::string>(f, "mode", "fit"));
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  s.K_upper = get<int>(f, "K_upper", "fit");
  s.B = get<int>(f, "B", "fit");
  s.iterations = get<int>(f, "iterations", "fit");
  s.burn_in = get<int>(f, "burn_in", "fit");
  s.thin = get<int>(f, "thin", "fit");
  s.positivity = get<bool>(f, "positivity", "fit");
  s.keep_local_draws = get<bool>(f, "save_local_draws", "fit");
  s.hyper.mu0 = get<double>(f, "mu0", "fit");
  s.hyper.sigma0_sq = get<double>(f, "sigma0_sq", "fit");
  s.hyper.v0 = get<double>(f, "v0", "fit");
  s.hyper.a_sigma = get<double>(f, "a_sigma", "fit");
  s.hyper.b_sigma = get<double>(f, "b_sigma", "fit");
  s.hyper.alpha = get<double>(f, "alpha", "fit");
  s.hyper.theta_inf = get<double>(f, "theta_inf", "fit");
  s.seed = cfg.contains("seed") && cfg["seed"].is_number_integer() ? cfg["seed"].get<std::uint64_t>()
                                                                    : 0;
  s.jobs = get<int>(cfg, "jobs", "config");
  try {
    s.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

TwoLayerParams load_truth(const std::string& source) {
  if (source == "paper") return paper_sim_truth();
  if (source.empty()) throw ConfigError("a truth file is required");
  Json j;
  try {
    j = Json::parse(read_file(source));
  } catch (const Json::exception& e) {
    throw InputError("malformed truth file " + source + ": " + e.what());
  }
  return two_layer_from_json(j);
}

PipelineSeeds replicate_seeds(std::uint64_t root, int rep, int n) {
  return {derive_seed(root, {0x51ULL, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(n)}),
          derive_seed(root, {0xF1ULL, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(n)})};
}

ReplicateRecord run_pipeline(const TwoLayerParams& truth, int n, const SamplerConfig& base,
                             const PipelineSeeds& seeds, int rep) {
  ReplicateRecord rec;
  rec.rep = rep;
  rec.n = n;
  rec.seeds = seeds;
  const SimOutput sim = simulate_two_layer(truth, n, seeds.simulate, base.jobs);
  SamplerConfig cfg = base;
  cfg.seed = seeds.fit;
  const PosteriorDraws draws = run_chain(sim.dataset, cfg);
  rec.report = evaluate(draws, truth);
  return rec;
}

std::vector<ReplicateRecord> run_replicates(const TwoLayerParams& truth, const std::vector<int>& ns,
                                            int reps, const SamplerConfig& base,
                                            std::uint64_t root_seed, int workers,
                                            const ReplicateProgress& progress) {
  struct Task {
    int rep, n;
  };
  std::vector<Task> tasks;
  for (int n : ns)
    for (int r = 0; r < reps; ++r) tasks.push_back({r, n});
  std::vector<ReplicateRecord> out(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mu;
  SamplerConfig chain_cfg = base;
  chain_cfg.jobs = 1;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      try {
        out[t] = run_pipeline(truth, tasks[t].n, chain_cfg,
                              replicate_seeds(root_seed, tasks[t].rep, tasks[t].n), tasks[t].rep);
        if (progress) {
          std::lock_guard<std::mutex> lock(progress_mu);
          progress(out[t]);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < nthreads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (!errors[t]) continue;
    const std::string where = "replicate " + std::to_string(tasks[t].rep + 1) +
                              " (n=" + std::to_string(tasks[t].n) + "): ";
    try {
      std::rethrow_exception(errors[t]);
    } catch (const NumericalError& e) {
      throw NumericalError(where + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(where + e.what());
    }
  }
  return out;
}

Json to_json(const EvalReport& r) {
  Json j;
  j["g_error"] = {{"matrix", r.g_error.matrix}, {"row", r.g_error.row}, {"entry", r.g_error.entry}};
  j["rmse"] = {{"beta_active", r.rmse.beta_active},
               {"beta_all", r.rmse.beta_all},
               {"beta0", r.rmse.beta0},
               {"eta", r.rmse.eta}};
  j["k_star"] = r.k_star ? Json(*r.k_star) : Json();
  j["k_star_indicator"] = r.k_star_indicator ? Json(*r.k_star_indicator) : Json();
  std::vector<int> one_based;
  for (int c : r.retained) one_based.push_back(c + 1);
  j["retained_columns"] = one_based;
  one_based.clear();
  for (int c : r.permutation) one_based.push_back(r.retained[c] + 1);
  j["permutation"] = one_based;
  one_based.clear();
  for (int c : r.class_permutation) one_based.push_back(c + 1);
  j["class_permutation"] = one_based;
  Json g = Json::array();
  for (Eigen::Index a = 0; a < r.G_hat.rows(); ++a) {
    std::string row;
    for (Eigen::Index b = 0; b < r.G_hat.cols(); ++b) row += r.G_hat(a, b) ? '1' : '0';
    g.push_back(row);
  }
  j["G_hat"] = g;
  return j;
}

Json to_json(const IdVerdict& v) {
  Json j;
  j["status"] = to_string(v.status);
  if (v.witness) {
    auto one = [](const std::vector<int>& xs) {
      std::vector<int> o;
      for (int x : xs) o.push_back(x + 1);
      return o;
    };
    j["witness"] = {{"A1", one(v.witness->a1)}, {"A2", one(v.witness->a2)}, {"A3", one(v.witness->a3)}};
  } else {
    j["witness"] = nullptr;
  }
  j["flips"] = Json::array();
  for (const auto& f : v.flips) j["flips"].push_back({{"row", f.row + 1}, {"col", f.col + 1}});
  j["diagnostics"] = v.diagnostics;
  return j;
}

void cmd_simulate(const Json& cfg, const fs::path& out, CommandIo& io) {
  Timer timer;
  const std::uint64_t seed = required_seed(cfg);
  const Json& s = section(cfg, "simulate");
  const int n = get<int>(s, "n", "simulate");
  if (n < 1) throw ConfigError("simulate.n must be positive");
  const TwoLayerParams truth = load_truth(get<std::string>(s, "truth", "simulate"));
  const int jobs = get<int>(cfg, "jobs", "config");
  if (io.verbose) io.log << "simulating n=" << n << " p=" << truth.p() << "\n";
  const SimOutput sim = simulate_two_layer(truth, n, seed, jobs);
  OutputSet outs(out);
  outs.write("data.csv", dataset_to_csv(sim.dataset));
  outs.write("truth.json", to_json(truth).dump(2) + "\n");
  outs.write("alpha.csv", int_matrix_to_csv(sim.latents_alpha[0]));
  IntMatrix z(n, 1);
  for (int i = 0; i < n; ++i) z(i, 0) = sim.latents_z[i];
  outs.write("z.csv", int_matrix_to_csv(z));
  outs.finish("simulate", cfg, timer.seconds());
  io.log << "config hash " << config_hash(cfg) << "\n";
}

void cmd_fit(const Json& cfg, const fs::path& out, CommandIo& io) {
  Timer timer;
  required_seed(cfg);
  const SamplerConfig sc = sampler_from_config(cfg);
  const Json& f = section(cfg, "fit");
  const std::string data_path = get<std::string>(f, "data", "fit");
  if (data_path.empty()) throw ConfigError("fit needs a dataset (--data)");
  const Dataset data = read_dataset_csv(data_path, get<int>(f, "categories", "fit"));
  ProgressFn progress;
  if (io.verbose)
    progress = [&](int t, double ll) {
      if (t % 500 == 0 || t == sc.iterations)
        io.log << "iteration " << t << "/" << sc.iterations << " log-lik " << ll << "\n";
    };
  const PosteriorDraws draws = run_chain(data, sc, progress);
  OutputSet outs(out);
  write_draw_dir(outs, draws);
  write_posterior_summaries(outs, draws);
  Json summary;
  summary["draws"] = draws.size();
  summary["k_star"] = draws.csp_pi.empty() ? Json() : Json(estimate_k_star(draws));
  summary["k_star_indicator"] =
      draws.csp_zind.empty() ? Json() : Json(estimate_k_star_indicator(draws));
  const double mb = draws.size() ? min_active_beta(draws) : 0.0;
  summary["min_active_beta"] = std::isfinite(mb) ? Json(mb) : Json();
  outs.write("summary.json", summary.dump(2) + "\n");
  outs.finish("fit", cfg, timer.seconds(),
              {{"positivity_constraint", sc.positivity},
               {"positivity_satisfied", !sc.positivity || !(mb <= 0.0)}});
}

void cmd_check_id(const Json& cfg, const fs::path& out, CommandIo& io) {
  Timer timer;
  const Json& c = section(cfg, "check_id");
  const std::string mode = get<std::string>(c, "mode", "check_id");
  const auto graph_paths = get<std::vector<std::string>>(c, "graphs", "check_id");
  const std::string constraint = get<std::string>(c, "constraint", "check_id");
  const int B = get<int>(c, "B", "check_id");
  std::vector<GraphicalMatrix> graphs;
  for (const auto& g : graph_paths) graphs.push_back(read_graph_csv(g));
  auto constraint_matrix = [&]() {
    if (!constraint.empty())
      return ConstraintMatrix::make(parse_int_table(read_file(constraint), constraint));
    if (graphs.size() != 1) throw ConfigError("need --constraint or exactly one --graph");
    return constraint_matrix_from_graph(graphs[0]);
  };
  IdVerdict v;
  if (mode == "two-layer") {
    if (graphs.size() != 1) throw ConfigError("two-layer check needs exactly one graph");
    v = check_two_layer(graphs[0], B);
  } else if (mode == "multilayer") {
    if (graphs.empty()) throw ConfigError("multilayer check needs at least one graph");
    v = check_multilayer(graphs);
  } else if (mode == "strict") {
    v = check_strict_corollary(constraint_matrix());
  } else if (mode == "generic") {
    v = check_generic(constraint_matrix());
  } else {
    throw ConfigError("unknown check_id.mode '" + mode +
                      "' (expected two-layer, multilayer, strict or generic)");
  }
  if (io.verbose) io.log << "verdict: " << to_string(v.status) << "\n";
  OutputSet outs(out);
  outs.write("verdict.json", to_json(v).dump(2) + "\n");
  outs.finish("check-id", cfg, timer.seconds());
}

void cmd_evaluate(const Json& cfg, const fs::path& out, CommandIo& io) {
  Timer timer;
  const Json& e = section(cfg, "evaluate");
  const std::string draws_dir = get<std::string>(e, "draws", "evaluate");
  if (draws_dir.empty()) throw ConfigError("evaluate needs a draws directory (--draws)");
  const TwoLayerParams truth = load_truth(get<std::string>(e, "truth", "evaluate"));
  const PosteriorDraws draws = read_draws(draws_dir);
  const EvalReport r = evaluate(draws, truth);
  OutputSet outs(out);
  outs.write("eval.json", to_json(r).dump(2) + "\n");
  std::string csv = "n,metric,value\n";
  for (const auto& [name, val] : metrics(r)) csv += std::to_string(draws.n) + "," + name + "," + fmt(val) + "\n";
  outs.write("eval.csv", csv);
  if (io.verbose) io.log << "entry-level graph error " << r.g_error.entry << "\n";
  outs.finish("evaluate", cfg, timer.seconds());
}

void cmd_replicate(const Json& cfg, const fs::path& out, CommandIo& io) {
  Timer timer;
  const std::uint64_t root = required_seed(cfg);
  const SamplerConfig sc = sampler_from_config(cfg);
  const Json& r = section(cfg, "replicate");
  const int reps = get<int>(r, "reps", "replicate");
  const auto ns = get<std::vector<int>>(r, "n", "replicate");
  if (reps < 1) throw ConfigError("replicate.reps must be positive");
  if (ns.empty()) throw ConfigError("replicate.n must list at least one sample size");
  for (int n : ns)
    if (n < 1) throw ConfigError("replicate.n entries must be positive");
  const TwoLayerParams truth = load_truth(get<std::string>(r, "truth", "replicate"));
  ReplicateProgress progress;
  if (io.verbose)
    progress = [&](const ReplicateRecord& rec) {
      io.log << "replicate " << rec.rep + 1 << " n=" << rec.n << " entry error "
             << rec.report.g_error.entry << "\n";
    };
  const auto records = run_replicates(truth, ns, reps, sc, root, sc.jobs, progress);

  OutputSet outs(out);
  std::string rows = "rep,n,simulate_seed,fit_seed";
  const auto names = metrics(records.front().report);
  for (const auto& m : names) rows += "," + m.first;
  rows += "\n";
  for (const auto& rec : records) {
    rows += std::to_string(rec.rep + 1) + "," + std::to_string(rec.n) + "," +
            std::to_string(rec.seeds.simulate) + "," + std::to_string(rec.seeds.fit);
    for (const auto& m : metrics(rec.report)) rows += "," + fmt(m.second);
    rows += "\n";
  }
  outs.write("replicates.csv", rows);

  std::string curves = "n,metric,median,q25,q75,mean,min,max\n";
  Json summary = Json::object();
  for (int n : ns) {
    Json per_n = Json::object();
    for (std::size_t m = 0; m < names.size(); ++m) {
      std::vector<double> xs;
      for (const auto& rec : records)
        if (rec.n == n) xs.push_back(metrics(rec.report)[m].second);
      const Summary s = summarize(xs);
      curves += std::to_string(n) + "," + names[m].first + "," + fmt(s.median) + "," + fmt(s.q25) +
                "," + fmt(s.q75) + "," + fmt(s.mean) + "," + fmt(s.min) + "," + fmt(s.max) + "\n";
      per_n[names[m].first] = {{"median", s.median}, {"q25", s.q25}, {"q75", s.q75},
                               {"mean", s.mean},     {"min", s.min},   {"max", s.max}};
    }
    summary[std::to_string(n)] = per_n;
  }
  outs.write("curves.csv", curves);
  outs.write("summary.json", summary.dump(2) + "\n");
  outs.finish("replicate", cfg, timer.seconds());
}

int run_command(const std::string& name, const Json& config, const fs::path& out, CommandIo& io) {
  try {
    if (name == "simulate")
      cmd_simulate(config, out, io);
    else if (name == "fit")
      cmd_fit(config, out, io);
    else if (name == "check-id")
      cmd_check_id(config, out, io);
    else if (name == "evaluate")
      cmd_evaluate(config, out, io);
    else if (name == "replicate")
      cmd_replicate(config, out, io);
    else
      throw ConfigError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    io.err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    io.err << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    io.err << "data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace pyramid

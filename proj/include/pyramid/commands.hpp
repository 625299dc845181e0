#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pyramid/gibbs.hpp"
#include "pyramid/identify.hpp"
#include "pyramid/io.hpp"
#include "pyramid/postproc.hpp"

namespace pyramid {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Every recognised key with its default. Sections: top level (seed, jobs),
/// simulate, fit, check_id, evaluate, replicate.
Json default_config();
/// Overlay values onto `base`; unknown keys and type changes are ConfigErrors.
Json merge_config(Json base, const Json& overlay);
std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash(const Json& config);

/// Reads the fit section plus top-level seed and jobs.
SamplerConfig sampler_from_config(const Json& config);
/// "paper" selects the reference design; anything else is a truth JSON path.
TwoLayerParams load_truth(const std::string& source);

struct PipelineSeeds {
  std::uint64_t simulate = 0;
  std::uint64_t fit = 0;
};
PipelineSeeds replicate_seeds(std::uint64_t root, int rep, int n);

struct ReplicateRecord {
  int rep = 0;
  int n = 0;
  PipelineSeeds seeds;
  EvalReport report;
};

/// simulate -> fit -> evaluate for one (rep, n).
ReplicateRecord run_pipeline(const TwoLayerParams& truth, int n, const SamplerConfig& base,
                             const PipelineSeeds& seeds, int rep);

using ReplicateProgress = std::function<void(const ReplicateRecord&)>;

/// All (rep, n) pipelines on a pool of `workers` threads; each chain runs
/// single-threaded. Results are ordered by n, then rep. A failing pipeline is
/// rethrown with its replicate index and n.
std::vector<ReplicateRecord> run_replicates(const TwoLayerParams& truth, const std::vector<int>& ns,
                                            int reps, const SamplerConfig& base,
                                            std::uint64_t root_seed, int workers,
                                            const ReplicateProgress& progress = {});

Json to_json(const EvalReport& r);
Json to_json(const IdVerdict& v);

struct CommandIo {
  std::ostream& log;  // progress when verbose
  std::ostream& err;  // error messages
  bool verbose = false;
};

// Each writes its outputs plus config.json and manifest.json into `out`.
void cmd_simulate(const Json& config, const fs::path& out, CommandIo& io);
void cmd_fit(const Json& config, const fs::path& out, CommandIo& io);
void cmd_check_id(const Json& config, const fs::path& out, CommandIo& io);
void cmd_evaluate(const Json& config, const fs::path& out, CommandIo& io);
void cmd_replicate(const Json& config, const fs::path& out, CommandIo& io);

/// Dispatches by name and maps exceptions onto exit codes.
int run_command(const std::string& name, const Json& config, const fs::path& out, CommandIo& io);

}  // namespace pyramid

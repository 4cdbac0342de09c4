#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "novas/fbsde/fbsde.hpp"
#include "novas/harness/bench.hpp"
#include "novas/harness/config.hpp"
#include "novas/spen/spen.hpp"

namespace novas::harness {

// Independent seeds for the parts of a run, all derived from the master seed.
// Training and test noise come from fixed domains of the master seed itself.
enum class SeedDomain : std::uint64_t { Data = 1, Init = 2, Market = 3 };
std::uint64_t derive_seed(std::uint64_t master, SeedDomain domain);

search::NovasConfig novas_config(const RunConfig& cfg, const std::string& samples_key = "novas.samples",
                                 const std::string& iters_key = "novas.iters");
spen::SpenTrainOptions spen_options(const RunConfig& cfg);
spen::RegressionDataset spen_dataset(const RunConfig& cfg);
fbsde::NetworkOptions network_options(const RunConfig& cfg);
fbsde::TrainOptions fbsde_train_options(const RunConfig& cfg);
fbsde::EvaluationOptions fbsde_eval_options(const RunConfig& cfg);
std::unique_ptr<fbsde::SocProblem> make_problem(const RunConfig& cfg);
BenchOptions bench_options(const RunConfig& cfg);

// Each verb validates the config, writes its artifacts and manifest.json
// into output.dir, logs progress to `log`, and returns a summary that is also
// saved as <verb>.json.
nlohmann::json spen_train(const RunConfig& cfg, std::ostream& log);
nlohmann::json spen_eval_sweep(const RunConfig& cfg, std::ostream& log);
nlohmann::json spen_landscape(const RunConfig& cfg, std::ostream& log);
nlohmann::json fbsde_train(const RunConfig& cfg, std::ostream& log);
nlohmann::json fbsde_eval(const RunConfig& cfg, std::ostream& log);
nlohmann::json bench(const RunConfig& cfg, std::ostream& log);
// spen: train, sweep, landscape; cartpole | portfolio: train, eval; bench.
nlohmann::json run(const RunConfig& cfg, std::ostream& log);

nlohmann::json inspect_checkpoint(const std::filesystem::path& path);

}  // namespace novas::harness

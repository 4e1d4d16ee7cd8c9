#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iseat/data.hpp"
#include "iseat/model.hpp"
#include "iseat/trainer.hpp"

namespace iseat {

struct DatasetConfig {
    enum class Source { synthetic, idx };
    Source source = Source::synthetic;
    // synthetic
    SyntheticKind kind = SyntheticKind::moons;
    std::size_t n = 200;
    double noise = 0.1;
    std::uint64_t seed = 0;
    // idx
    std::string images;
    std::string labels;

    double test_fraction = 0.25;
    std::uint64_t split_seed = 0;
};

struct MarginAnalysisConfig {
    double mu_step = 0.25;
    double mu_max = 50.0;
};

struct LandscapeAnalysisConfig {
    std::vector<double> alphas;  // default −1..4 step 0.25
    std::vector<double> betas;   // default −1..1 step 0.25
    std::size_t sample_index = 0;
    std::uint64_t direction_seed = 0;
};

// One experiment: dataset + model + training recipe + analysis knobs.
// Parsed strictly: unknown keys are rejected with the offending field path.
struct ExperimentConfig {
    std::string label = "run";
    std::string precision = "f64";
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;  // multi-seed aggregation (compare)
    std::string output_dir;
    DatasetConfig dataset;
    ModelSpec model;
    RunConfig train;
    MarginAnalysisConfig margin;
    LandscapeAnalysisConfig landscape;

    void validate() const;
};

// Parse + validate + resolve defaults. `seed_override` / `precision_override`
// come from the CLI and win over the file.
ExperimentConfig load_experiment_config(const std::string& path,
                                        std::optional<std::uint64_t> seed_override = {},
                                        std::optional<std::string> precision_override = {});

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         std::optional<std::uint64_t> seed_override = {},
                                         std::optional<std::string> precision_override = {});

// Canonical snapshot of the fully resolved config (sorted keys, 2-space indent).
std::string resolved_config_json(const ExperimentConfig& cfg);

// Materialize the dataset named by the config and split it.
SplitResult load_and_split(const DatasetConfig& cfg);

}  // namespace iseat

#pragma once

#include <string>
#include <vector>

#include "iseat/checkpoint.hpp"
#include "iseat/config.hpp"
#include "iseat/csv.hpp"

namespace iseat {

struct RunSummary {
    std::string label;
    std::string out_dir;
    std::string precision;
    MetricsRecord final_row;
    int best_epoch = 0;
    double best_robust_acc = 0;
};

// Train per the config and stage {metrics.csv, checkpoints, resolved config}
// into out_dir. Outputs land in a sibling staging directory first and move
// into place only on success, so a failed run never leaves a partial out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// If out_dir already holds a run with a byte-identical resolved config, read
// its summary back instead of recomputing.
bool try_load_existing(const ExperimentConfig& cfg, const std::string& out_dir,
                       RunSummary& out);

// Analysis commands; all compute in f64 (f32 checkpoints are upcast exactly).
void cmd_attack(const Checkpoint& ck, const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_margin(const Checkpoint& ck, const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_landscape(const Checkpoint& ck, const ExperimentConfig& cfg,
                   const std::string& out_dir);
void cmd_analyze(const Checkpoint& ck, const ExperimentConfig& cfg, const std::string& out_dir);

// Multi-config comparison: every member config is validated before any run
// starts; members execute in parallel up to `threads` and rows keep config
// order. Existing compatible runs are reused.
void cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_dir,
                 unsigned threads);

std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

unsigned thread_cap_from_env();

}  // namespace iseat

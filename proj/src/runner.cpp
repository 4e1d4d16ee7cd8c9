#include "iseat/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "iseat/trainer.hpp"

namespace fs = std::filesystem;

namespace iseat {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_model_fits_dataset(const ExperimentConfig& cfg, const Dataset& train) {
    if (cfg.model.input_dim() != train.dim())
        throw ConfigError("model.widths", "input width " + std::to_string(cfg.model.input_dim()) +
                                              " does not match dataset dim " +
                                              std::to_string(train.dim()));
    if (cfg.model.num_classes() < train.num_classes())
        throw ConfigError("model.widths",
                          "class count " + std::to_string(cfg.model.num_classes()) +
                              " is below dataset classes " +
                              std::to_string(train.num_classes()));
}

template <typename T>
RunSummary run_experiment_typed(const ExperimentConfig& cfg, const fs::path& staging) {
    const SplitResult splits = load_and_split(cfg.dataset);
    check_model_fits_dataset(cfg, splits.train);

    ModelParams<T> params = init_params<T>(cfg.model);
    const RunResult<T> result = run_training(std::move(params), splits.train, splits.test,
                                             cfg.train);

    write_metrics_csv((staging / "metrics.csv").string(), result.metrics);
    save_checkpoint((staging / "checkpoint_final.json").string(), result.final_params,
                    cfg.train.epochs);
    save_checkpoint((staging / "checkpoint_best.json").string(), result.best_params,
                    result.best_epoch);
    if (result.swa_params)
        save_checkpoint((staging / "checkpoint_swa.json").string(), *result.swa_params,
                        cfg.train.epochs);

    RunSummary s;
    s.label = cfg.label;
    s.precision = cfg.precision;
    s.final_row = result.metrics.back();
    s.best_epoch = result.best_epoch;
    s.best_robust_acc = result.best_robust_acc;
    return s;
}

}  // namespace

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + " is empty");
    if (line != metrics_csv_header()) throw IoError(path + " has an unexpected header");
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(std::strtod(cell.c_str(), nullptr));
        if (vals.size() != 13) throw IoError(path + " has a malformed row: " + line);
        MetricsRecord r;
        r.epoch = static_cast<int>(vals[0]);
        r.train_clean_loss = vals[1];
        r.train_adv_loss = vals[2];
        r.eval_clean_acc = vals[3];
        r.eval_robust_acc = vals[4];
        r.av.sd = vals[5];
        r.av.top10_mean = vals[6];
        r.av.bot10_mean = vals[7];
        r.av.frac_ge_1 = vals[8];
        r.av.frac_le_0 = vals[9];
        r.lr = vals[10];
        r.lambda = vals[11];
        r.eps = vals[12];
        out.push_back(r);
    }
    return out;
}

RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("output_dir", "no output directory given");
    const fs::path target(out_dir);
    const fs::path staging(out_dir + ".staging");
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::error_code ec;
    fs::remove_all(staging, ec);
    fs::create_directories(staging);

    RunSummary s;
    try {
        s = cfg.precision == "f32" ? run_experiment_typed<float>(cfg, staging)
                                   : run_experiment_typed<double>(cfg, staging);
        write_text(staging / "config_resolved.json", resolved_config_json(cfg));
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(target, ec);
    fs::rename(staging, target);
    s.out_dir = target.string();
    return s;
}

bool try_load_existing(const ExperimentConfig& cfg, const std::string& out_dir,
                       RunSummary& out) {
    const fs::path dir(out_dir);
    if (!fs::exists(dir / "config_resolved.json") || !fs::exists(dir / "metrics.csv"))
        return false;
    if (read_text(dir / "config_resolved.json") != resolved_config_json(cfg)) return false;
    const auto metrics = read_metrics_csv((dir / "metrics.csv").string());
    if (metrics.empty()) return false;
    out.label = cfg.label;
    out.precision = cfg.precision;
    out.out_dir = out_dir;
    out.final_row = metrics.back();
    out.best_epoch = 0;
    out.best_robust_acc = 0;
    for (const auto& r : metrics) {
        if (r.eval_robust_acc > out.best_robust_acc) {
            out.best_robust_acc = r.eval_robust_acc;
            out.best_epoch = r.epoch;
        }
    }
    return true;
}

namespace {

struct AnalysisContext {
    ModelParams<double> params;
    SplitResult splits;
};

AnalysisContext analysis_context(const Checkpoint& ck, const ExperimentConfig& cfg) {
    AnalysisContext ctx{ck.params<double>(), load_and_split(cfg.dataset)};
    if (ctx.params.spec.input_dim() != ctx.splits.train.dim())
        throw ConfigError("dataset", "checkpoint input width " +
                                         std::to_string(ctx.params.spec.input_dim()) +
                                         " does not match dataset dim " +
                                         std::to_string(ctx.splits.train.dim()));
    return ctx;
}

fs::path prepare_out(const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("output_dir", "no output directory given");
    fs::create_directories(out_dir);
    return fs::path(out_dir);
}

}  // namespace

void cmd_attack(const Checkpoint& ck, const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto ctx = analysis_context(ck, cfg);
    const fs::path out = prepare_out(out_dir);
    const std::uint64_t seed = mix_seed(cfg.seed, seed_tag::eval);
    const auto ev = evaluate<double>(ctx.params, ctx.splits.test, cfg.train.eval_attack,
                                     cfg.train.batch_size, seed);
    std::ofstream f(out / "accuracy.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + (out / "accuracy.csv").string());
    f << "clean_acc,robust_acc\n" << fmt9(ev.clean_acc) << "," << fmt9(ev.robust_acc) << "\n";
    std::cout << "clean accuracy  " << fmt9(ev.clean_acc) << "\n"
              << "robust accuracy " << fmt9(ev.robust_acc) << "\n";
}

void cmd_margin(const Checkpoint& ck, const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto ctx = analysis_context(ck, cfg);
    const fs::path out = prepare_out(out_dir);
    const Dataset& ds = ctx.splits.train;
    std::vector<MarginResult> margins;
    margins.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<std::size_t> one{i};
        const Dataset part = take(ds, one);
        const Tensor<double> x = part.inputs;
        AttackConfig acfg = cfg.train.eval_attack;
        acfg.seed = mix_seed(cfg.seed, i, 0x3a69ULL);
        const Tensor<double> delta = pgd(ctx.params, x, part.labels, acfg);
        Tensor<double> xi({ds.dim()}, std::vector<double>(x.values()));
        Tensor<double> di({ds.dim()}, std::vector<double>(delta.values()));
        if (nd::l2_norm(di) == 0.0) {
            // no direction to search along; by convention this sample reports the sentinel
            margins.push_back({cfg.margin.mu_max, false, 0.0});
            continue;
        }
        margins.push_back(
            margin_search(ctx.params, xi, di, cfg.margin.mu_step, cfg.margin.mu_max));
    }
    write_margin_csv((out / "margins.csv").string(), margins);
    write_margin_histogram_csv((out / "margin_hist.csv").string(), margins, cfg.margin.mu_step,
                               cfg.margin.mu_max);
}

void cmd_landscape(const Checkpoint& ck, const ExperimentConfig& cfg,
                   const std::string& out_dir) {
    const auto ctx = analysis_context(ck, cfg);
    const fs::path out = prepare_out(out_dir);
    const Dataset& ds = ctx.splits.train;
    if (cfg.landscape.sample_index >= ds.size())
        throw ConfigError("analysis.landscape.sample_index",
                          "outside dataset of size " + std::to_string(ds.size()));
    std::vector<std::size_t> one{cfg.landscape.sample_index};
    const Dataset part = take(ds, one);
    AttackConfig acfg = cfg.train.eval_attack;
    acfg.seed = mix_seed(cfg.seed, cfg.landscape.sample_index, 0x6e1dULL);
    const Tensor<double> delta = pgd(ctx.params, part.inputs, part.labels, acfg);
    Tensor<double> xi({ds.dim()}, std::vector<double>(part.inputs.values()));
    Tensor<double> di({ds.dim()}, std::vector<double>(delta.values()));
    const LandscapeGrid grid =
        loss_landscape(ctx.params, xi, part.labels[0], di, cfg.landscape.alphas,
                       cfg.landscape.betas, acfg.epsilon, cfg.landscape.direction_seed);
    write_landscape_csv((out / "landscape.csv").string(), grid);
}

void cmd_analyze(const Checkpoint& ck, const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto ctx = analysis_context(ck, cfg);
    const fs::path out = prepare_out(out_dir);
    const std::uint64_t seed = mix_seed(cfg.seed, seed_tag::av_pass);
    const auto avs = measure_avs(ctx.params, ctx.splits.train, cfg.train.eval_attack,
                                 cfg.train.batch_size, seed);
    const AVStats stats = av_stats(avs);
    write_avstats_csv((out / "avstats.csv").string(), stats);
    std::cout << "av_sd " << fmt9(stats.sd) << "  top10 " << fmt9(stats.top10_mean) << "  bot10 "
              << fmt9(stats.bot10_mean) << "  frac_ge_1 " << fmt9(stats.frac_ge_1)
              << "  frac_le_0 " << fmt9(stats.frac_le_0) << "\n";
}

unsigned thread_cap_from_env() {
    const char* env = std::getenv("ISEAT_THREADS");
    if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0)
        throw ConfigError("ISEAT_THREADS", "must be a non-negative integer");
    if (v == 0) return std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(v);
}

void cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_dir,
                 unsigned threads) {
    if (config_paths.empty()) throw ConfigError("compare", "needs at least one config");
    const fs::path out = prepare_out(out_dir);

    // fail-fast: parse and validate every member before any compute
    struct Member {
        std::string raw_text;
        ExperimentConfig cfg;
        std::vector<std::uint64_t> seeds;
        std::vector<std::string> run_dirs;
    };
    std::vector<Member> members;
    for (const auto& path : config_paths) {
        Member m;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open config " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        m.raw_text = ss.str();
        m.cfg = parse_experiment_config(m.raw_text);
        m.seeds = m.cfg.seeds.empty() ? std::vector<std::uint64_t>{m.cfg.seed} : m.cfg.seeds;
        for (const std::uint64_t s : m.seeds)
            m.run_dirs.push_back(
                (out / (m.cfg.label + "-seed" + std::to_string(s))).string());
        members.push_back(std::move(m));
    }
    {
        std::vector<std::string> dirs;
        for (const auto& m : members)
            dirs.insert(dirs.end(), m.run_dirs.begin(), m.run_dirs.end());
        std::sort(dirs.begin(), dirs.end());
        if (std::adjacent_find(dirs.begin(), dirs.end()) != dirs.end())
            throw ConfigError("compare", "duplicate label+seed output directories");
    }

    struct Job {
        ExperimentConfig cfg;
        std::string dir;
        RunSummary summary;
    };
    std::vector<Job> jobs;
    for (const auto& m : members)
        for (std::size_t i = 0; i < m.seeds.size(); ++i) {
            // re-resolve from the raw text so seed-derived defaults follow the seed
            ExperimentConfig cfg = parse_experiment_config(m.raw_text, m.seeds[i]);
            cfg.seeds.clear();
            jobs.push_back({std::move(cfg), m.run_dirs[i], {}});
        }

    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            std::size_t idx;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (first_error || next >= jobs.size()) return;
                idx = next++;
            }
            try {
                Job& job = jobs[idx];
                if (!try_load_existing(job.cfg, job.dir, job.summary))
                    job.summary = run_experiment(job.cfg, job.dir);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const unsigned nthreads = std::max(1u, std::min<unsigned>(threads, jobs.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    // one row per member config, mean ± population sd over its seeds
    std::ofstream f(out / "compare.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + (out / "compare.csv").string());
    f << "method,label,runs,clean_acc_mean,clean_acc_sd,robust_acc_mean,robust_acc_sd,"
         "av_sd_mean,av_sd_sd\n";
    std::size_t job_idx = 0;
    for (const auto& m : members) {
        std::vector<double> clean, robust, avsd;
        for (std::size_t i = 0; i < m.seeds.size(); ++i, ++job_idx) {
            const auto& row = jobs[job_idx].summary.final_row;
            clean.push_back(row.eval_clean_acc);
            robust.push_back(row.eval_robust_acc);
            avsd.push_back(row.av.sd);
        }
        auto mean_sd = [](const std::vector<double>& v) {
            double mean = 0;
            for (const double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0;
            for (const double x : v) var += (x - mean) * (x - mean);
            var /= static_cast<double>(v.size());
            return std::pair<double, double>(mean, std::sqrt(var));
        };
        const auto [cm, cs] = mean_sd(clean);
        const auto [rm, rs] = mean_sd(robust);
        const auto [am, as] = mean_sd(avsd);
        f << method_name(m.cfg.train.method) << "," << m.cfg.label << "," << m.seeds.size()
          << "," << fmt9(cm) << "," << fmt9(cs) << "," << fmt9(rm) << "," << fmt9(rs) << ","
          << fmt9(am) << "," << fmt9(as) << "\n";
    }
    if (!f) throw IoError("short write to compare.csv");
}

}  // namespace iseat

#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "iseat/attack.hpp"
#include "iseat/errors.hpp"
#include "iseat/vulnerability.hpp"

namespace iseat {

// All tabular output uses 9 significant digits.
inline std::string fmt9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct MetricsRecord {
    int epoch = 0;
    double train_clean_loss = 0;
    double train_adv_loss = 0;
    double eval_clean_acc = 0;
    double eval_robust_acc = 0;
    AVStats av;
    double lr = 0;
    double lambda = 0;
    double eps = 0;
};

inline const char* metrics_csv_header() {
    return "epoch,train_clean_loss,train_adv_loss,eval_clean_acc,eval_robust_acc,"
           "av_sd,av_top10,av_bot10,frac_ge_1,frac_le_0,lr,lambda,eps";
}

inline std::string metrics_csv_row(const MetricsRecord& r) {
    std::string s = std::to_string(r.epoch);
    for (const double v : {r.train_clean_loss, r.train_adv_loss, r.eval_clean_acc,
                           r.eval_robust_acc, r.av.sd, r.av.top10_mean, r.av.bot10_mean,
                           r.av.frac_ge_1, r.av.frac_le_0, r.lr, r.lambda, r.eps})
        s += "," + fmt9(v);
    return s;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << metrics_csv_header() << "\n";
    for (const auto& r : rows) out << metrics_csv_row(r) << "\n";
    if (!out) throw IoError("short write to " + path);
}

// `# alpha_budget <v>` marks the α at which the adversarial offset has the same
// ℓ2 length as δ itself, i.e. the row budget-equivalent to the attack.
inline void write_landscape_csv(const std::string& path, const LandscapeGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "# alpha_budget " << fmt9(grid.alpha_budget) << "\n";
    out << "# direction_seed " << grid.direction_seed << "\n";
    out << "alpha,beta,loss\n";
    for (std::size_t i = 0; i < grid.alphas.size(); ++i)
        for (std::size_t j = 0; j < grid.betas.size(); ++j)
            out << fmt9(grid.alphas[i]) << "," << fmt9(grid.betas[j]) << ","
                << fmt9(grid.at(i, j)) << "\n";
    if (!out) throw IoError("short write to " + path);
}

inline void write_margin_csv(const std::string& path, const std::vector<MarginResult>& margins) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "index,mu,flipped,direction_norm\n";
    for (std::size_t i = 0; i < margins.size(); ++i)
        out << i << "," << fmt9(margins[i].mu) << "," << (margins[i].flipped ? 1 : 0) << ","
            << fmt9(margins[i].direction_norm) << "\n";
    if (!out) throw IoError("short write to " + path);
}

// Cumulative distribution of μ over the lattice.
inline void write_margin_histogram_csv(const std::string& path,
                                       const std::vector<MarginResult>& margins, double mu_step,
                                       double mu_max) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "mu,cumulative_fraction\n";
    const std::size_t count = static_cast<std::size_t>(mu_max / mu_step + 1e-9);
    const double n = static_cast<double>(margins.size());
    for (std::size_t k = 0; k <= count; ++k) {
        const double mu = mu_step * static_cast<double>(k);
        std::size_t c = 0;
        for (const auto& m : margins)
            if (m.flipped && m.mu <= mu + 1e-12) ++c;
        out << fmt9(mu) << "," << fmt9(static_cast<double>(c) / n) << "\n";
    }
    if (!out) throw IoError("short write to " + path);
}

inline void write_avstats_csv(const std::string& path, const AVStats& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "av_sd,av_top10,av_bot10,frac_ge_1,frac_le_0\n";
    out << fmt9(s.sd) << "," << fmt9(s.top10_mean) << "," << fmt9(s.bot10_mean) << ","
        << fmt9(s.frac_ge_1) << "," << fmt9(s.frac_le_0) << "\n";
    if (!out) throw IoError("short write to " + path);
}

}  // namespace iseat

#pragma once

#include "mfh/model.hpp"
#include "mfh/numkernel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mfh {

enum class DPattern { A, B };
enum class ErrorDist { Normal, Chi2 };
enum class RegionMode { Single, Difference };
enum class PsiMode { Estimated, Known };

std::string to_string(DPattern p);
std::string to_string(ErrorDist d);
std::string to_string(RegionMode r);
DPattern parse_pattern(const std::string& s);
ErrorDist parse_dist(const std::string& s);

/// User-facing parameters of one coverage experiment cell.
struct SimConfig {
    int k = 2;
    int m = 30;
    double rho = 0.2;
    DPattern pattern = DPattern::A;
    ErrorDist dist = ErrorDist::Normal;
    double alpha = 0.05;
    int reps = 10000;
    std::uint64_t seed = 1;
    RegionMode mode = RegionMode::Single;
    // Known: plug the true Psi in place of the estimate (exact-pivot check).
    PsiMode psi_mode = PsiMode::Estimated;
};

/// Materialized design: fixed covariates, true Psi and the sampling
/// covariances, plus the areas that represent each of the five groups.
struct SimDesign {
    SimConfig config;
    std::vector<Matrix> X;
    SymMatrix psi_true;
    SymMatrix psi_sqrt;
    std::vector<SymMatrix> D;
    std::vector<SymMatrix> D_sqrt;
    std::vector<std::size_t> group_first;  // first area of each group
};

/// k x 2k block designs: row j of X_i is (0.., 1, x_ij, ..0) at columns
/// (2j, 2j+1), with x_ij ~ U(-1, 1) drawn once from `seed`.
std::vector<Matrix> make_design(int k, int m, std::uint64_t seed);

/// rho * psi psi^T + (1 - rho) diag(psi psi^T) with the standard
/// variances (1.6, 0.8) for k = 2 and (1.6, 1.2, 0.8) for k = 3.
SymMatrix make_psi(int k, double rho);

/// Five consecutive groups of m/5 areas sharing D = c_g I_k.
std::vector<SymMatrix> d_pattern(DPattern pattern, int k, int m);

SimDesign make_sim_design(const SimConfig& config);

struct Sample {
    Dataset data;
    std::vector<Vector> theta;  // true small-area means
};

/// Replication `rep` of the design: beta = 0, v_i = Psi^{1/2} z, e_i = D_i^{1/2} z'
/// with z, z' iid standard normal or standardized chi^2_2 components.
Sample draw_sample(const SimDesign& design, std::uint64_t rep);

struct GroupCoverage {
    int group = 0;          // 1-based, G1..G5
    std::size_t area = 0;   // representative area (first of the group)
    std::size_t area_b = 0; // second area, difference mode only
    int covered_corrected = 0;
    int covered_naive = 0;
    int degenerate = 0;     // replications with 1 + h* <= 0 (counted as not covered)
    double corrected_cp = 0.0;
    double naive_cp = 0.0;
    double mean_h_star = 0.0;
};

struct CoverageResult {
    SimConfig config;
    std::vector<GroupCoverage> groups;
    double elapsed_seconds = 0.0;
    int threads = 1;
};

/// Runs config.reps replications. The result (apart from elapsed_seconds)
/// is bitwise identical for any thread count.
CoverageResult coverage_experiment(const SimDesign& design, int threads = 1);

/// The four preset layouts: 1 (k=2, pattern A), 2 (k=2, pattern B),
/// 3 (k=3, pattern A), 4 (difference regions, k=2, pattern A). Each expands
/// to normal and chi-square errors at rho = 0.2, 0.4, 0.6.
std::vector<SimConfig> table_preset(int table, int reps, std::uint64_t seed);

/// CSV with one row per (cell, group); leading '#' lines carry metadata.
std::string coverage_csv(const std::vector<CoverageResult>& results, const std::string& metadata);

}  // namespace mfh

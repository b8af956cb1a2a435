#include "mfh/simulation.hpp"

#include "mfh/error.hpp"
#include "mfh/estimators.hpp"
#include "mfh/prediction.hpp"
#include "mfh/regions.hpp"
#include "mfh/rng.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace mfh {

namespace {

constexpr int kGroups = 5;
constexpr std::uint32_t kDesignStream = 0xD5;
constexpr std::uint32_t kEffectStream = 1;
constexpr std::uint32_t kErrorStream = 2;

std::string shortest(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double standardized_draw(CounterRng& rng, ErrorDist dist)
{
    if (dist == ErrorDist::Normal) {
        return rng.normal();
    }
    // chi^2_2 = 2 * Exp(1); (w - 2) / 2 has mean 0 and variance 1.
    const double w = 2.0 * rng.exponential();
    return (w - 2.0) / 2.0;
}

}  // namespace

std::string to_string(DPattern p)
{
    return p == DPattern::A ? "a" : "b";
}

std::string to_string(ErrorDist d)
{
    return d == ErrorDist::Normal ? "normal" : "chi2";
}

std::string to_string(RegionMode r)
{
    return r == RegionMode::Single ? "single" : "difference";
}

DPattern parse_pattern(const std::string& s)
{
    if (s == "a" || s == "A") return DPattern::A;
    if (s == "b" || s == "B") return DPattern::B;
    throw Error(ErrorCode::InvalidInput, "unknown D pattern '" + s + "' (a|b)");
}

ErrorDist parse_dist(const std::string& s)
{
    if (s == "normal") return ErrorDist::Normal;
    if (s == "chi2") return ErrorDist::Chi2;
    throw Error(ErrorCode::InvalidInput, "unknown error distribution '" + s + "' (normal|chi2)");
}

std::vector<Matrix> make_design(int k, int m, std::uint64_t seed)
{
    if (k != 2 && k != 3) {
        throw Error(ErrorCode::UnsupportedK, "the block design is defined for k in {2, 3}");
    }
    if (m < 1) {
        throw Error(ErrorCode::InvalidInput, "m must be positive");
    }
    CounterRng rng(seed, 0, kDesignStream);
    std::vector<Matrix> xs;
    xs.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        Matrix x = Matrix::Zero(k, 2 * k);
        for (int j = 0; j < k; ++j) {
            x(j, 2 * j) = 1.0;
            x(j, 2 * j + 1) = rng.uniform(-1.0, 1.0);
        }
        xs.push_back(std::move(x));
    }
    return xs;
}

SymMatrix make_psi(int k, double rho)
{
    if (!(rho > -1.0 && rho < 1.0)) {
        throw Error(ErrorCode::InvalidInput, "rho must lie in (-1, 1)");
    }
    std::vector<double> variances;
    if (k == 2) {
        variances = {1.6, 0.8};
    } else if (k == 3) {
        variances = {1.6, 1.2, 0.8};
    } else {
        throw Error(ErrorCode::UnsupportedK, "Psi design is defined for k in {2, 3}");
    }
    Matrix psi(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            // Diagonal: rho v + (1 - rho) v = v, assigned directly.
            psi(i, j) = i == j ? variances[static_cast<std::size_t>(i)]
                               : rho * std::sqrt(variances[static_cast<std::size_t>(i)] *
                                                 variances[static_cast<std::size_t>(j)]);
        }
    }
    return SymMatrix(psi);
}

std::vector<SymMatrix> d_pattern(DPattern pattern, int k, int m)
{
    if (m < kGroups || m % kGroups != 0) {
        throw Error(ErrorCode::InvalidGroupSize,
                    "m must be a positive multiple of 5, got " + std::to_string(m));
    }
    static constexpr double levels_a[kGroups] = {0.7, 0.6, 0.5, 0.4, 0.3};
    static constexpr double levels_b[kGroups] = {2.0, 0.6, 0.5, 0.4, 0.2};
    const double* levels = pattern == DPattern::A ? levels_a : levels_b;
    const int per_group = m / kGroups;
    std::vector<SymMatrix> ds;
    ds.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        ds.push_back(SymMatrix(levels[i / per_group] * Matrix::Identity(k, k)));
    }
    return ds;
}

SimDesign make_sim_design(const SimConfig& config)
{
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
        throw Error(ErrorCode::InvalidInput, "alpha must lie in (0, 1)");
    }
    if (config.reps < 1) {
        throw Error(ErrorCode::InvalidInput, "reps must be >= 1");
    }
    SimDesign d;
    d.config = config;
    d.D = d_pattern(config.pattern, config.k, config.m);
    if (config.mode == RegionMode::Difference && config.m / kGroups < 2) {
        throw Error(ErrorCode::InvalidGroupSize, "difference mode needs at least two areas per group");
    }
    d.X = make_design(config.k, config.m, config.seed);
    d.psi_true = make_psi(config.k, config.rho);
    d.psi_sqrt = spd_sqrt(d.psi_true);
    for (const SymMatrix& di : d.D) {
        d.D_sqrt.push_back(spd_sqrt(di));
    }
    const int per_group = config.m / kGroups;
    for (int g = 0; g < kGroups; ++g) {
        d.group_first.push_back(static_cast<std::size_t>(g * per_group));
    }
    return d;
}

Sample draw_sample(const SimDesign& design, std::uint64_t rep)
{
    const SimConfig& cfg = design.config;
    CounterRng effects(cfg.seed, rep, kEffectStream);
    CounterRng errors(cfg.seed, rep, kErrorStream);
    std::vector<AreaData> areas;
    std::vector<Vector> theta;
    areas.reserve(design.X.size());
    theta.reserve(design.X.size());
    Vector z(cfg.k);
    for (std::size_t i = 0; i < design.X.size(); ++i) {
        for (int j = 0; j < cfg.k; ++j) z(j) = standardized_draw(effects, cfg.dist);
        Vector th = design.psi_sqrt.matrix() * z;  // X_i beta = 0
        for (int j = 0; j < cfg.k; ++j) z(j) = standardized_draw(errors, cfg.dist);
        Vector y = th + design.D_sqrt[i].matrix() * z;
        areas.push_back({std::move(y), design.X[i], design.D[i]});
        theta.push_back(std::move(th));
    }
    return {Dataset(std::move(areas)), std::move(theta)};
}

namespace {

struct RepOutcome {
    std::array<bool, kGroups> corrected{};
    std::array<bool, kGroups> naive{};
    std::array<bool, kGroups> degenerate{};
    std::array<double, kGroups> h_star{};
};

RepOutcome run_replication(const SimDesign& design, std::uint64_t rep, double cutoff)
{
    const SimConfig& cfg = design.config;
    const Sample sample = draw_sample(design, rep);
    const SymMatrix psi_hat =
        cfg.psi_mode == PsiMode::Known ? design.psi_true : psi_adjusted(sample.data).adjusted;
    const GlsFit fit = fit_gls(sample.data, psi_hat);

    RepOutcome out;
    for (int g = 0; g < kGroups; ++g) {
        const std::size_t a = design.group_first[static_cast<std::size_t>(g)];
        Vector center;
        Vector truth;
        SymMatrix shape;
        BTerms bt;
        if (cfg.mode == RegionMode::Single) {
            const Prediction p = predict_at(sample.data, fit, a);
            center = p.theta_eb;
            shape = p.h_mat;
            truth = sample.theta[a];
            bt = b_terms(sample.data, fit, a);
        } else {
            const std::size_t b = a + 1;
            center = eblup(sample.data, fit, a) - eblup(sample.data, fit, b);
            shape = diff_shape(sample.data, fit, a, b);
            truth = sample.theta[a] - sample.theta[b];
            bt = diff_b_terms(sample.data, fit, a, b);
        }
        const double h = bartlett_h(bt, cfg.k, cutoff);
        const Vector diff = truth - center;
        const double stat = diff.dot(spd_solve(shape, diff));
        out.h_star[static_cast<std::size_t>(g)] = h;
        out.naive[static_cast<std::size_t>(g)] = stat <= cutoff;
        out.degenerate[static_cast<std::size_t>(g)] = 1.0 + h <= 0.0;
        out.corrected[static_cast<std::size_t>(g)] = 1.0 + h > 0.0 && stat <= (1.0 + h) * cutoff;
    }
    return out;
}

}  // namespace

CoverageResult coverage_experiment(const SimDesign& design, int threads)
{
    const SimConfig& cfg = design.config;
    if (cfg.reps < 100) {
        throw Error(ErrorCode::InvalidInput, "coverage_experiment needs reps >= 100");
    }
    threads = std::max(1, threads);
    const auto start = std::chrono::steady_clock::now();
    const double cutoff = chi2_quantile(cfg.k, 1.0 - cfg.alpha);
    const auto reps = static_cast<std::size_t>(cfg.reps);

    std::vector<RepOutcome> outcomes(reps);
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));
    std::vector<std::size_t> failed_at(static_cast<std::size_t>(threads), reps);
    auto worker = [&](int t) {
        for (std::size_t r = static_cast<std::size_t>(t); r < reps; r += static_cast<std::size_t>(threads)) {
            try {
                outcomes[r] = run_replication(design, r, cutoff);
            } catch (...) {
                failures[static_cast<std::size_t>(t)] = std::current_exception();
                failed_at[static_cast<std::size_t>(t)] = r;
                return;
            }
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    // Surface the failure with the smallest replication index.
    const auto first = std::min_element(failed_at.begin(), failed_at.end());
    if (*first < reps) {
        std::rethrow_exception(failures[static_cast<std::size_t>(first - failed_at.begin())]);
    }

    CoverageResult result;
    result.config = cfg;
    result.threads = threads;
    for (int g = 0; g < kGroups; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        GroupCoverage gc;
        gc.group = g + 1;
        gc.area = design.group_first[gi];
        gc.area_b = cfg.mode == RegionMode::Difference ? gc.area + 1 : gc.area;
        double h_sum = 0.0;
        for (const RepOutcome& o : outcomes) {  // fixed order keeps the sum reproducible
            gc.covered_corrected += o.corrected[gi];
            gc.covered_naive += o.naive[gi];
            gc.degenerate += o.degenerate[gi];
            h_sum += o.h_star[gi];
        }
        const double n = static_cast<double>(reps);
        gc.corrected_cp = gc.covered_corrected / n;
        gc.naive_cp = gc.covered_naive / n;
        gc.mean_h_star = h_sum / n;
        result.groups.push_back(gc);
    }
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::vector<SimConfig> table_preset(int table, int reps, std::uint64_t seed)
{
    SimConfig base;
    base.reps = reps;
    base.seed = seed;
    switch (table) {
    case 1: break;
    case 2: base.pattern = DPattern::B; break;
    case 3: base.k = 3; break;
    case 4: base.mode = RegionMode::Difference; break;
    default: throw Error(ErrorCode::InvalidInput, "table must be 1, 2, 3 or 4");
    }
    std::vector<SimConfig> cells;
    for (ErrorDist dist : {ErrorDist::Normal, ErrorDist::Chi2}) {
        for (double rho : {0.2, 0.4, 0.6}) {
            SimConfig c = base;
            c.dist = dist;
            c.rho = rho;
            cells.push_back(c);
        }
    }
    return cells;
}

std::string coverage_csv(const std::vector<CoverageResult>& results, const std::string& metadata)
{
    std::ostringstream out;
    std::istringstream meta(metadata);
    std::string line;
    while (std::getline(meta, line)) {
        out << "# " << line << '\n';
    }
    out << "group,rho,dist,corrected_cp,naive_cp,mean_h_star,reps,seed\n";
    for (const CoverageResult& r : results) {
        for (const GroupCoverage& g : r.groups) {
            out << 'G' << g.group << ',' << shortest(r.config.rho) << ',' << to_string(r.config.dist)
                << ',' << shortest(g.corrected_cp) << ',' << shortest(g.naive_cp) << ','
                << shortest(g.mean_h_star) << ',' << r.config.reps << ',' << r.config.seed << '\n';
        }
    }
    return out.str();
}

}  // namespace mfh

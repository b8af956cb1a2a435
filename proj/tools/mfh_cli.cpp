// mfh: command-line front end for multivariate Fay-Herriot fitting,
// prediction, confidence regions and the coverage simulation study.

#include "mfh/error.hpp"
#include "mfh/estimators.hpp"
#include "mfh/model.hpp"
#include "mfh/prediction.hpp"
#include "mfh/regions.hpp"
#include "mfh/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#ifndef MFH_VERSION
#define MFH_VERSION "0.0.0"
#endif

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Settings {
    std::string config;
    std::string data;
    std::string format;
    std::string out;
    std::optional<std::size_t> area;
    std::size_t area_a = 0;
    std::size_t area_b = 1;
    double alpha = 0.05;
    bool naive = false;
    std::string theta_file;
    std::string psi_file;

    int table = 0;
    int k = 2;
    int m = 30;
    double rho = 0.2;
    std::string pattern = "a";
    std::string dist = "normal";
    std::string mode = "single";
    int reps = 10000;
    std::uint64_t seed = 1;
    int threads = 1;
    bool known_psi = false;
    bool timing = false;
    std::string out_csv;
    std::string out_json;
};

// One option that can also be supplied by the config file.
struct Binding {
    std::string key;
    CLI::Option* option;
    std::function<void(const json&)> set;
    std::function<ordered_json()> get;
};

class Registry {
public:
    template <class T>
    CLI::Option* add(CLI::App* sub, const std::string& flags, const std::string& key, T& target,
                     const std::string& help)
    {
        CLI::Option* opt;
        if constexpr (std::is_same_v<T, bool>) {
            opt = sub->add_flag(flags, target, help);
        } else {
            opt = sub->add_option(flags, target, help);
        }
        bindings_[sub].push_back({key, opt, [&target](const json& v) { target = v.get<T>(); },
                                  [&target] { return ordered_json(target); }});
        known_.insert(key);
        return opt;
    }

    CLI::Option* add_area(CLI::App* sub, std::optional<std::size_t>& target)
    {
        CLI::Option* opt = sub->add_option("-a,--area", target, "area index (0-based); all areas if omitted");
        bindings_[sub].push_back({"area", opt, [&target](const json& v) { target = v.get<std::size_t>(); },
                                  [&target] { return target ? ordered_json(*target) : ordered_json(); }});
        known_.insert("area");
        return opt;
    }

    // Fills options absent from the command line: a section named after the
    // command wins over top-level keys.
    void apply(CLI::App* sub, const json& cfg) const
    {
        if (!cfg.is_object()) {
            throw mfh::Error(mfh::ErrorCode::ParseError, "config must be a JSON object");
        }
        for (const auto& [key, value] : cfg.items()) {
            if (!known_.count(key) && !commands_.count(key)) {
                throw mfh::Error(mfh::ErrorCode::InvalidInput, "unknown config key '" + key + "'");
            }
        }
        const json* section = nullptr;
        if (cfg.contains(sub->get_name())) {
            section = &cfg.at(sub->get_name());
            if (!section->is_object()) {
                throw mfh::Error(mfh::ErrorCode::ParseError, "config section '" + sub->get_name() + "' must be an object");
            }
        }
        for (const Binding& b : bindings_.at(sub)) {
            if (b.option->count() > 0) continue;
            const json* v = nullptr;
            if (section && section->contains(b.key)) {
                v = &section->at(b.key);
            } else if (cfg.contains(b.key) && !cfg.at(b.key).is_object()) {
                v = &cfg.at(b.key);
            }
            if (v) {
                try {
                    b.set(*v);
                } catch (const json::exception& e) {
                    throw mfh::Error(mfh::ErrorCode::ParseError, "config key '" + b.key + "': " + e.what());
                }
            }
        }
    }

    ordered_json echo(CLI::App* sub) const
    {
        ordered_json out = ordered_json::object();
        for (const Binding& b : bindings_.at(sub)) {
            out[b.key] = b.get();
        }
        return out;
    }

    void command(const std::string& name) { commands_.insert(name); }

private:
    std::map<CLI::App*, std::vector<Binding>> bindings_;
    std::set<std::string> known_;
    std::set<std::string> commands_;
};

ordered_json to_json(const mfh::Vector& v)
{
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

ordered_json to_json(const mfh::Matrix& m)
{
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json r = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

ordered_json to_json(const mfh::SymMatrix& s)
{
    return to_json(s.matrix());
}

ordered_json meta(const std::string& command, const ordered_json& config, std::optional<std::uint64_t> seed)
{
    ordered_json m;
    m["tool"] = "mfh";
    m["version"] = MFH_VERSION;
    m["command"] = command;
    m["seed"] = seed ? ordered_json(*seed) : ordered_json();
    m["config"] = config;
    return m;
}

void write_text(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw mfh::Error(mfh::ErrorCode::IoError, "cannot open '" + path + "' for writing");
    }
    out << text;
    if (!out) {
        throw mfh::Error(mfh::ErrorCode::IoError, "write to '" + path + "' failed");
    }
}

json read_json_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw mfh::Error(mfh::ErrorCode::IoError, "cannot open '" + path + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw mfh::Error(mfh::ErrorCode::ParseError, path + ": " + e.what());
    }
}

mfh::Dataset load(const Settings& s)
{
    if (s.data.empty()) {
        throw mfh::Error(mfh::ErrorCode::InvalidInput, "--data is required");
    }
    mfh::DataFormat fmt;
    if (!s.format.empty()) {
        fmt = mfh::parse_format(s.format);
    } else {
        fmt = std::filesystem::is_directory(s.data) ? mfh::DataFormat::Csv : mfh::DataFormat::Json;
    }
    return mfh::load_dataset(s.data, fmt);
}

void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw mfh::Error(mfh::ErrorCode::InvalidInput, "alpha must lie in (0, 1)");
    }
}

// Accepts a JSON array of numbers or an object {"theta": [...]}.
mfh::Vector read_theta(const std::string& path, Eigen::Index k)
{
    json doc = read_json_file(path);
    if (doc.is_object() && doc.contains("theta")) doc = doc.at("theta");
    if (!doc.is_array()) {
        throw mfh::Error(mfh::ErrorCode::ParseError, path + ": expected an array of numbers");
    }
    if (static_cast<Eigen::Index>(doc.size()) != k) {
        throw mfh::Error(mfh::ErrorCode::DimensionMismatch,
                         path + ": theta has length " + std::to_string(doc.size()) + ", expected " + std::to_string(k));
    }
    mfh::Vector theta(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const json& v = doc.at(static_cast<std::size_t>(i));
        if (!v.is_number()) {
            throw mfh::Error(mfh::ErrorCode::ParseError, path + ": entry " + std::to_string(i) + " is not a number");
        }
        theta(i) = v.get<double>();
    }
    return theta;
}

// A k x k JSON matrix, or {"psi": [[...]]}.
mfh::SymMatrix read_psi(const std::string& path, Eigen::Index k)
{
    json doc = read_json_file(path);
    if (doc.is_object() && doc.contains("psi")) doc = doc.at("psi");
    mfh::Matrix psi(k, k);
    try {
        if (!doc.is_array() || static_cast<Eigen::Index>(doc.size()) != k) {
            throw mfh::Error(mfh::ErrorCode::DimensionMismatch, path + ": psi must be a " + std::to_string(k) + "x" +
                                                                    std::to_string(k) + " matrix");
        }
        for (Eigen::Index i = 0; i < k; ++i) {
            const json& row = doc.at(static_cast<std::size_t>(i));
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != k) {
                throw mfh::Error(mfh::ErrorCode::DimensionMismatch, path + ": row " + std::to_string(i) +
                                                                        " must have " + std::to_string(k) + " entries");
            }
            for (Eigen::Index j = 0; j < k; ++j) psi(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
        }
    } catch (const json::exception& e) {
        throw mfh::Error(mfh::ErrorCode::ParseError, path + ": " + e.what());
    }
    if ((psi - psi.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + psi.cwiseAbs().maxCoeff())) {
        throw mfh::Error(mfh::ErrorCode::InvalidInput, path + ": psi is not symmetric");
    }
    mfh::SymMatrix out(psi);
    if (!mfh::is_positive_definite(out)) {
        throw mfh::Error(mfh::ErrorCode::NotPositiveDefinite, path + ": psi is not positive definite");
    }
    return out;
}

// Covariance used for prediction: --psi if given, else the adjusted estimate.
mfh::SymMatrix working_psi(const Settings& s, const mfh::Dataset& data)
{
    if (!s.psi_file.empty()) return read_psi(s.psi_file, data.k());
    return mfh::psi_adjusted(data).adjusted;
}

ordered_json region_json(const mfh::Region& r, const std::optional<mfh::Vector>& theta)
{
    ordered_json o;
    o["center"] = to_json(r.center);
    o["shape"] = to_json(r.shape);
    o["chi2_cutoff"] = r.chi2_cutoff;
    o["h_star"] = r.h_star;
    o["radius_sq"] = r.radius_sq;
    o["b1"] = r.bterms.b1;
    o["b2"] = r.bterms.b2;
    o["b3"] = r.bterms.b3;
    if (theta) {
        ordered_json t;
        t["theta"] = to_json(*theta);
        t["distance_sq"] = mfh::mahalanobis(r, *theta);
        t["contains"] = mfh::contains(r, *theta);
        o["test"] = std::move(t);
    }
    return o;
}

std::string dump(const ordered_json& doc)
{
    return doc.dump(2) + "\n";
}

void cmd_fit(const Settings& s, const ordered_json& echo)
{
    const mfh::Dataset data = load(s);
    const mfh::CovarianceEstimate cov = mfh::psi_adjusted(data);
    const mfh::GlsFit fit = mfh::fit_gls(data, cov.adjusted);

    ordered_json doc;
    doc["meta"] = meta("fit", echo, std::nullopt);
    doc["m"] = data.m();
    doc["k"] = data.k();
    doc["s"] = data.s();
    doc["beta"] = to_json(fit.beta);
    doc["psi_raw"] = to_json(cov.raw_pr);
    doc["psi_bias_corrected"] = to_json(cov.bias_corrected);
    doc["psi_adjusted"] = to_json(cov.adjusted);
    doc["eigenvalues"] = to_json(cov.eigen.eigenvalues);
    doc["adjusted_eigenvalues"] = to_json(cov.adjusted_eigenvalues);
    doc["a_hat"] = cov.a_hat;
    doc["b_hat"] = to_json(cov.b_hat);
    write_text(s.out, dump(doc));
}

void cmd_predict(const Settings& s, const ordered_json& echo)
{
    const mfh::Dataset data = load(s);
    const mfh::GlsFit fit = mfh::fit_gls(data, working_psi(s, data));

    std::vector<std::size_t> areas;
    if (s.area) {
        data.area(*s.area);
        areas.push_back(*s.area);
    } else {
        for (std::size_t i = 0; i < data.m(); ++i) areas.push_back(i);
    }
    ordered_json list = ordered_json::array();
    for (std::size_t a : areas) {
        const mfh::Prediction p = mfh::predict_at(data, fit, a);
        ordered_json o;
        o["area"] = a;
        o["eblup"] = to_json(p.theta_eb);
        o["g1"] = to_json(p.g1);
        o["g2"] = to_json(p.g2);
        o["g3"] = to_json(p.g3);
        o["msem"] = to_json(p.msem);
        list.push_back(std::move(o));
    }
    ordered_json doc;
    doc["meta"] = meta("predict", echo, std::nullopt);
    doc["psi"] = to_json(fit.psi);
    doc["beta"] = to_json(fit.beta);
    doc["predictions"] = std::move(list);
    write_text(s.out, dump(doc));
}

void cmd_region(const Settings& s, const ordered_json& echo)
{
    check_alpha(s.alpha);
    const mfh::Dataset data = load(s);
    const std::size_t a = s.area.value_or(0);
    data.area(a);
    const mfh::GlsFit fit = mfh::fit_gls(data, working_psi(s, data));
    std::optional<mfh::Vector> theta;
    if (!s.theta_file.empty()) theta = read_theta(s.theta_file, data.k());

    ordered_json doc;
    doc["meta"] = meta("region", echo, std::nullopt);
    doc["area"] = a;
    doc["alpha"] = s.alpha;
    doc["psi"] = to_json(fit.psi);
    if (!s.naive) {
        doc["corrected"] = region_json(mfh::corrected_region_at(data, fit, a, s.alpha), theta);
    }
    doc["naive"] = region_json(mfh::naive_region_at(data, fit, a, s.alpha), theta);
    write_text(s.out, dump(doc));
}

void cmd_diff_region(const Settings& s, const ordered_json& echo)
{
    check_alpha(s.alpha);
    const mfh::Dataset data = load(s);
    data.area(s.area_a);
    data.area(s.area_b);
    if (s.area_a == s.area_b) {
        throw mfh::Error(mfh::ErrorCode::SameArea, "difference region needs two distinct areas");
    }
    const mfh::GlsFit fit = mfh::fit_gls(data, working_psi(s, data));
    std::optional<mfh::Vector> theta;
    if (!s.theta_file.empty()) theta = read_theta(s.theta_file, data.k());

    ordered_json doc;
    doc["meta"] = meta("diff-region", echo, std::nullopt);
    doc["area_a"] = s.area_a;
    doc["area_b"] = s.area_b;
    doc["alpha"] = s.alpha;
    doc["psi"] = to_json(fit.psi);
    if (!s.naive) {
        doc["corrected"] = region_json(mfh::diff_region_at(data, fit, s.area_a, s.area_b, s.alpha, true), theta);
    }
    doc["naive"] = region_json(mfh::diff_region_at(data, fit, s.area_a, s.area_b, s.alpha, false), theta);
    write_text(s.out, dump(doc));
}

std::vector<mfh::SimConfig> sim_cells(const Settings& s)
{
    std::vector<mfh::SimConfig> cells;
    if (s.table != 0) {
        cells = mfh::table_preset(s.table, s.reps, s.seed);
    } else {
        mfh::SimConfig c;
        c.k = s.k;
        c.m = s.m;
        c.rho = s.rho;
        c.pattern = mfh::parse_pattern(s.pattern);
        c.dist = mfh::parse_dist(s.dist);
        c.reps = s.reps;
        c.seed = s.seed;
        if (s.mode == "single") {
            c.mode = mfh::RegionMode::Single;
        } else if (s.mode == "difference") {
            c.mode = mfh::RegionMode::Difference;
        } else {
            throw mfh::Error(mfh::ErrorCode::InvalidInput, "unknown mode '" + s.mode + "' (single|difference)");
        }
        cells.push_back(c);
    }
    for (mfh::SimConfig& c : cells) {
        c.alpha = s.alpha;
        c.psi_mode = s.known_psi ? mfh::PsiMode::Known : mfh::PsiMode::Estimated;
    }
    return cells;
}

void cmd_simulate(const Settings& s, const ordered_json& echo)
{
    check_alpha(s.alpha);
    if (s.threads < 1) {
        throw mfh::Error(mfh::ErrorCode::InvalidInput, "threads must be >= 1");
    }
    std::vector<mfh::CoverageResult> results;
    double elapsed = 0.0;
    for (const mfh::SimConfig& c : sim_cells(s)) {
        results.push_back(mfh::coverage_experiment(mfh::make_sim_design(c), s.threads));
        elapsed += results.back().elapsed_seconds;
    }

    const ordered_json head = meta("simulate", echo, s.seed);
    std::ostringstream lines;
    lines << "tool: mfh " << MFH_VERSION << "\n"
          << "command: simulate\n"
          << "seed: " << s.seed << "\n"
          << "representative areas: first area of each group (second area for differences)\n"
          << "config: " << echo.dump();
    const std::string csv = mfh::coverage_csv(results, lines.str());

    if (!s.out_json.empty()) {
        ordered_json doc;
        doc["meta"] = head;
        ordered_json cells = ordered_json::array();
        for (const mfh::CoverageResult& r : results) {
            ordered_json cell;
            cell["k"] = r.config.k;
            cell["m"] = r.config.m;
            cell["rho"] = r.config.rho;
            cell["pattern"] = mfh::to_string(r.config.pattern);
            cell["dist"] = mfh::to_string(r.config.dist);
            cell["mode"] = mfh::to_string(r.config.mode);
            cell["alpha"] = r.config.alpha;
            cell["known_psi"] = r.config.psi_mode == mfh::PsiMode::Known;
            cell["reps"] = r.config.reps;
            cell["seed"] = r.config.seed;
            ordered_json groups = ordered_json::array();
            for (const mfh::GroupCoverage& g : r.groups) {
                ordered_json o;
                o["group"] = "G" + std::to_string(g.group);
                o["area"] = g.area;
                if (r.config.mode == mfh::RegionMode::Difference) o["area_b"] = g.area_b;
                o["corrected_cp"] = g.corrected_cp;
                o["naive_cp"] = g.naive_cp;
                o["mean_h_star"] = g.mean_h_star;
                o["covered_corrected"] = g.covered_corrected;
                o["covered_naive"] = g.covered_naive;
                o["degenerate"] = g.degenerate;
                groups.push_back(std::move(o));
            }
            cell["groups"] = std::move(groups);
            if (s.timing) cell["elapsed_seconds"] = r.elapsed_seconds;
            cells.push_back(std::move(cell));
        }
        doc["cells"] = std::move(cells);
        write_text(s.out_json, dump(doc));
    }
    if (!s.out_csv.empty() || s.out_json.empty()) {
        write_text(s.out_csv, csv);
    }
    std::cerr << "simulate: " << results.size() << " cell(s), " << s.reps << " reps each, " << elapsed
              << " s\n";
}

}  // namespace

int main(int argc, char** argv)
{
    Settings s;
    Registry reg;
    CLI::App app{"Multivariate Fay-Herriot estimation and confidence regions", "mfh"};
    app.set_version_flag("--version", MFH_VERSION);
    app.require_subcommand(1);

    auto data_options = [&](CLI::App* sub) {
        sub->add_option("--config", s.config, "JSON config file (flags take precedence)");
        reg.add(sub, "-d,--data", "data", s.data, "dataset: JSON file or CSV directory");
        reg.add(sub, "--format", "format", s.format, "json|csv (default: by path type)");
        reg.add(sub, "-o,--out", "out", s.out, "output file (default stdout)");
    };

    CLI::App* fit = app.add_subcommand("fit", "estimate beta and Psi");
    data_options(fit);

    CLI::App* predict = app.add_subcommand("predict", "EBLUP and MSE matrix per area");
    data_options(predict);
    reg.add_area(predict, s.area);
    reg.add(predict, "--psi", "psi", s.psi_file, "JSON file with Psi to use instead of the estimate");

    CLI::App* region = app.add_subcommand("region", "confidence region for one area");
    data_options(region);
    reg.add_area(region, s.area);
    reg.add(region, "--alpha", "alpha", s.alpha, "1 - confidence level");
    reg.add(region, "--naive", "naive", s.naive, "report only the uncorrected region");
    reg.add(region, "--test", "test", s.theta_file, "JSON file with a theta to test for membership");
    reg.add(region, "--psi", "psi", s.psi_file, "JSON file with Psi to use instead of the estimate");

    CLI::App* diff = app.add_subcommand("diff-region", "confidence region for theta_a - theta_b");
    data_options(diff);
    reg.add(diff, "-a,--area-a", "area_a", s.area_a, "first area (0-based)");
    reg.add(diff, "-b,--area-b", "area_b", s.area_b, "second area (0-based)");
    reg.add(diff, "--alpha", "alpha", s.alpha, "1 - confidence level");
    reg.add(diff, "--naive", "naive", s.naive, "report only the uncorrected region");
    reg.add(diff, "--test", "test", s.theta_file, "JSON file with a difference to test for membership");
    reg.add(diff, "--psi", "psi", s.psi_file, "JSON file with Psi to use instead of the estimate");

    CLI::App* sim = app.add_subcommand("simulate", "coverage simulation study");
    sim->add_option("--config", s.config, "JSON config file (flags take precedence)");
    reg.add(sim, "--table", "table", s.table, "preset 1|2|3|4 (sets k, pattern, mode; sweeps dist and rho)")
        ->check(CLI::Range(0, 4));
    reg.add(sim, "--k", "k", s.k, "dimension (2 or 3)");
    reg.add(sim, "--m", "m", s.m, "number of areas (multiple of 5)");
    reg.add(sim, "--rho", "rho", s.rho, "correlation in Psi");
    reg.add(sim, "--pattern", "pattern", s.pattern, "sampling covariance pattern a|b");
    reg.add(sim, "--dist", "dist", s.dist, "normal|chi2");
    reg.add(sim, "--mode", "mode", s.mode, "single|difference");
    reg.add(sim, "--alpha", "alpha", s.alpha, "1 - confidence level");
    reg.add(sim, "--reps", "reps", s.reps, "replications per cell (>= 100)");
    reg.add(sim, "--seed", "seed", s.seed, "64-bit seed");
    reg.add(sim, "--threads", "threads", s.threads, "worker threads (result does not depend on it)");
    reg.add(sim, "--known-psi", "known_psi", s.known_psi, "use the true Psi instead of the estimate");
    reg.add(sim, "--timing", "timing", s.timing, "include elapsed time in the JSON output");
    reg.add(sim, "--out-csv", "out_csv", s.out_csv, "CSV output file");
    reg.add(sim, "--out-json", "out_json", s.out_json, "JSON output file");

    for (CLI::App* sub : {fit, predict, region, diff, sim}) reg.command(sub->get_name());

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (!s.config.empty()) reg.apply(sub, read_json_file(s.config));
        ordered_json echo = reg.echo(sub);
        echo.erase("threads");  // a scheduling hint; results do not depend on it
        if (sub == fit) cmd_fit(s, echo);
        else if (sub == predict) cmd_predict(s, echo);
        else if (sub == region) cmd_region(s, echo);
        else if (sub == diff) cmd_diff_region(s, echo);
        else cmd_simulate(s, echo);
    } catch (const mfh::Error& e) {
        std::string msg = e.what();
        const std::string prefix = std::string(mfh::to_string(e.code())) + ": ";
        if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
        std::cerr << "error[" << mfh::to_string(e.code()) << "]: " << msg << "\n";
        return mfh::exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error[Internal]: " << e.what() << "\n";
        return 15;
    }
    return 0;
}

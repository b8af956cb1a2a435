#include "mfh/error.hpp"
#include "mfh/estimators.hpp"
#include "mfh/model.hpp"
#include "mfh/numkernel.hpp"
#include "mfh/regions.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kData = MFH_TEST_DATA;

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
    json doc() const { return json::parse(out); }
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("mfh_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Outcome run(const std::string& args) const
    {
        const fs::path out = dir_ / "stdout";
        const fs::path err = dir_ / "stderr";
        const std::string cmd = std::string("\"") + MFH_CLI_PATH + "\" " + args + " >\"" + out.string() +
                                "\" 2>\"" + err.string() + "\"";
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    fs::path write(const std::string& name, const std::string& text) const
    {
        const fs::path p = dir_ / name;
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }

    static std::string data(const std::string& name) { return "\"" + kData + "/" + name + "\""; }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, FitScalarFixture)
{
    const Outcome r = run("fit -d " + data("scalar2.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json d = r.doc();
    EXPECT_DOUBLE_EQ(d["psi_raw"][0][0].get<double>(), 0.5);
    EXPECT_NEAR(d["psi_bias_corrected"][0][0].get<double>(), 1.0, 1e-12);
    EXPECT_GT(d["psi_adjusted"][0][0].get<double>(), 0.0);
    EXPECT_EQ(d["m"], 2);
    EXPECT_EQ(d["meta"]["tool"], "mfh");
    EXPECT_TRUE(d["meta"].contains("version"));
    EXPECT_TRUE(d["meta"].contains("seed"));
    EXPECT_EQ(d["meta"]["config"]["data"], kData + "/scalar2.json");
}

TEST_F(Cli, FitMatchesLibrary)
{
    const Outcome r = run("fit -d " + data("bivariate4.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json d = r.doc();
    const mfh::Dataset ds = mfh::load_dataset(kData + "/bivariate4.json", mfh::DataFormat::Json);
    const mfh::CovarianceEstimate cov = mfh::psi_adjusted(ds);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            EXPECT_EQ(d["psi_adjusted"][i][j].get<double>(), cov.adjusted(i, j));
            EXPECT_EQ(d["psi_raw"][i][j].get<double>(), cov.raw_pr(i, j));
        }
        EXPECT_EQ(d["b_hat"][i].get<double>(), cov.b_hat(i));
    }
    EXPECT_EQ(d["a_hat"].get<double>(), cov.a_hat);
}

TEST_F(Cli, CsvDirectoryGivesSameFit)
{
    const Outcome a = run("fit -d " + data("bivariate4.json"));
    const Outcome b = run("fit -d " + data("bivariate4_csv"));
    ASSERT_EQ(b.code, 0) << b.err;
    json da = a.doc(), db = b.doc();
    da.erase("meta");
    db.erase("meta");
    EXPECT_EQ(da, db);
}

TEST_F(Cli, RankDeficientExitCode)
{
    const Outcome r = run("fit -d " + data("rank_deficient.json"));
    EXPECT_EQ(r.code, mfh::exit_code(mfh::ErrorCode::RankDeficientDesign));
    EXPECT_EQ(r.code, 5);
    EXPECT_EQ(r.err.rfind("error[RankDeficientDesign]: ", 0), 0u) << r.err;
    EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, ErrorCategories)
{
    EXPECT_EQ(run("fit -d " + data("missing_d.json")).code, 3);
    EXPECT_EQ(run("fit -d \"" + (dir_ / "nope.json").string() + "\"").code, 14);
    EXPECT_EQ(run("predict -d " + data("bivariate4.json") + " -a 99").code, 9);
    EXPECT_EQ(run("region -d " + data("bivariate4.json") + " --alpha 1.5").code, 2);
    EXPECT_EQ(run("simulate --reps 50").code, 2);
    EXPECT_EQ(run("simulate --k 4 --reps 100").code, 12);
    EXPECT_EQ(run("simulate --m 12 --reps 100").code, 13);
    const fs::path bad = write("psi.json", "[[1, 2], [2, 1]]");
    EXPECT_EQ(run("region -d " + data("bivariate4.json") + " --psi \"" + bad.string() + "\"").code, 7);

    // Tiny Psi against huge sampling variances pushes 1 + h* below zero.
    json areas = json::array();
    for (int i = 0; i < 10; ++i) areas.push_back({{"y", {0.1 * i}}, {"X", {{1.0}}}, {"D", {{1000.0}}}});
    const fs::path noisy = write("noisy.json", json{{"k", 1}, {"s", 1}, {"areas", areas}}.dump());
    const fs::path small = write("small.json", "[[0.01]]");
    const Outcome deg = run("region -d \"" + noisy.string() + "\" --alpha 0.99 --psi \"" + small.string() + "\"");
    EXPECT_EQ(deg.code, 10);
    EXPECT_EQ(deg.err.rfind("error[DegenerateCorrection]: ", 0), 0u) << deg.err;
}

TEST_F(Cli, UsageErrorsExitOne)
{
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("fit --bogus").code, 1);
    EXPECT_EQ(run("simulate --reps many").code, 1);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, OutputIsByteIdentical)
{
    for (const std::string& args :
         {"fit -d " + data("bivariate4.json"), "predict -d " + data("bivariate4.json"),
          "region -d " + data("bivariate4.json") + " -a 2", "diff-region -d " + data("bivariate4.json") + " -a 0 -b 3"}) {
        const Outcome a = run(args);
        const Outcome b = run(args);
        ASSERT_EQ(a.code, 0) << a.err;
        EXPECT_EQ(a.out, b.out) << args;
    }
}

TEST_F(Cli, RegionHandValues)
{
    const fs::path psi = fs::path(kData) / "psi_one.json";
    const Outcome r = run("region -d " + data("scalar10.json") + " -a 0 --psi \"" + psi.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const json c = r.doc()["corrected"];
    // psi = d = 1, m = 10, one covariate: H = 0.55 and the B-terms have closed forms.
    const double m = 10.0, h = 0.55;
    const double b1 = -1.0 / (m * 4.0 * h * h * h);
    const double b2 = -3.0 / (4.0 * m * 4.0 * h * h);
    const double b3 = 0.1 / h;
    const double x = mfh::chi2_quantile(1, 0.95);
    const double hstar = -2.0 * ((b1 - b3 - b2) + b2 * x / 3.0);
    EXPECT_NEAR(c["b1"].get<double>(), b1, 1e-12);
    EXPECT_NEAR(c["b2"].get<double>(), b2, 1e-12);
    EXPECT_NEAR(c["b3"].get<double>(), b3, 1e-12);
    EXPECT_NEAR(c["h_star"].get<double>(), hstar, 1e-9);
    EXPECT_NEAR(c["h_star"].get<double>(), 0.698934, 5e-6);
    EXPECT_NEAR(c["radius_sq"].get<double>(), (1.0 + hstar) * x, 1e-9);
    EXPECT_NEAR(c["shape"][0][0].get<double>(), h, 1e-12);
}

TEST_F(Cli, RegionMatchesLibraryAtEstimate)
{
    const Outcome r = run("region -d " + data("bivariate4.json") + " -a 1 --alpha 0.1");
    ASSERT_EQ(r.code, 0) << r.err;
    const mfh::Dataset ds = mfh::load_dataset(kData + "/bivariate4.json", mfh::DataFormat::Json);
    const mfh::Region reg = mfh::corrected_region(ds, 1, mfh::psi_adjusted(ds), 0.1);
    EXPECT_EQ(r.doc()["corrected"]["h_star"].get<double>(), reg.h_star);
    EXPECT_EQ(r.doc()["corrected"]["center"][1].get<double>(), reg.center(1));
}

TEST_F(Cli, NaiveFlagGivesZeroCorrection)
{
    const Outcome r = run("region -d " + data("bivariate4.json") + " -a 1 --naive");
    ASSERT_EQ(r.code, 0) << r.err;
    const json d = r.doc();
    EXPECT_FALSE(d.contains("corrected"));
    EXPECT_EQ(d["naive"]["h_star"].get<double>(), 0.0);
    EXPECT_EQ(d["naive"]["radius_sq"].get<double>(), d["naive"]["chi2_cutoff"].get<double>());
}

TEST_F(Cli, TestPointAtCenterIsContained)
{
    const Outcome first = run("region -d " + data("bivariate4.json") + " -a 3");
    ASSERT_EQ(first.code, 0) << first.err;
    const json center = first.doc()["corrected"]["center"];
    const fs::path theta = write("theta.json", json{{"theta", center}}.dump());
    const Outcome r = run("region -d " + data("bivariate4.json") + " -a 3 --test \"" + theta.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.doc()["corrected"]["test"]["contains"].get<bool>());
    EXPECT_TRUE(r.doc()["naive"]["test"]["contains"].get<bool>());
    EXPECT_EQ(r.doc()["corrected"]["test"]["distance_sq"].get<double>(), 0.0);

    const fs::path far = write("far.json", "[1e6, -1e6]");
    const Outcome f = run("region -d " + data("bivariate4.json") + " -a 3 --test \"" + far.string() + "\"");
    EXPECT_FALSE(f.doc()["corrected"]["test"]["contains"].get<bool>());

    const fs::path shortv = write("short.json", "[1]");
    EXPECT_EQ(run("region -d " + data("bivariate4.json") + " --test \"" + shortv.string() + "\"").code, 4);
}

TEST_F(Cli, DiffRegion)
{
    const std::string base = "diff-region -d " + data("bivariate4.json") + " -a 0 -b 2";
    const Outcome r = run(base);
    ASSERT_EQ(r.code, 0) << r.err;
    const mfh::Dataset ds = mfh::load_dataset(kData + "/bivariate4.json", mfh::DataFormat::Json);
    const mfh::Region reg = mfh::diff_region(ds, 0, 2, mfh::psi_adjusted(ds), 0.05);
    EXPECT_NEAR(r.doc()["corrected"]["h_star"].get<double>(), reg.h_star, 1e-9);

    const Outcome naive = run(base + " --naive");
    EXPECT_EQ(naive.doc()["naive"]["h_star"].get<double>(), 0.0);

    const fs::path theta = write("d.json", r.doc()["corrected"]["center"].dump());
    const Outcome t = run(base + " --test \"" + theta.string() + "\"");
    EXPECT_TRUE(t.doc()["corrected"]["test"]["contains"].get<bool>());

    const Outcome same = run("diff-region -d " + data("bivariate4.json") + " -a 1 -b 1");
    EXPECT_EQ(same.code, 11);
    EXPECT_EQ(same.err.rfind("error[SameArea]: ", 0), 0u) << same.err;
}

TEST_F(Cli, PredictAllAreas)
{
    const Outcome r = run("predict -d " + data("bivariate4.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json p = r.doc()["predictions"];
    ASSERT_EQ(p.size(), 4u);
    for (const json& a : p) {
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                const double sum = a["g1"][i][j].get<double>() + a["g2"][i][j].get<double>() +
                                   2.0 * a["g3"][i][j].get<double>();
                EXPECT_NEAR(a["msem"][i][j].get<double>(), sum, 1e-12);
            }
        }
    }
    EXPECT_EQ(run("predict -d " + data("bivariate4.json") + " -a 2").doc()["predictions"].size(), 1u);
}

TEST_F(Cli, SimulateSmokeIsFastAndReproducible)
{
    const auto start = std::chrono::steady_clock::now();
    const Outcome a = run("simulate --reps 100 --seed 11");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_LT(secs, 10.0);
    const Outcome b = run("simulate --reps 100 --seed 11 --threads 3");
    EXPECT_EQ(a.out, b.out);

    std::istringstream in(a.out);
    std::string line;
    int meta = 0, rows = 0;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) {
            ++meta;
        } else if (!header) {
            EXPECT_EQ(line, "group,rho,dist,corrected_cp,naive_cp,mean_h_star,reps,seed");
            header = true;
        } else {
            ++rows;
        }
    }
    EXPECT_GE(meta, 3);
    EXPECT_NE(a.out.find("# seed: 11\n"), std::string::npos);
    EXPECT_NE(a.out.find("# tool: mfh "), std::string::npos);
    EXPECT_EQ(rows, 5);
}

TEST_F(Cli, SimulateTablePresetLayout)
{
    const fs::path csv = dir_ / "t1.csv";
    const fs::path js = dir_ / "t1.json";
    const Outcome r = run("simulate --table 1 --reps 2000 --seed 7 --out-csv \"" + csv.string() + "\" --out-json \"" +
                      js.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    std::istringstream in(slurp(csv));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("group,", 0) == 0) continue;
        ++rows;
    }
    EXPECT_EQ(rows, 30);  // 2 error laws x 3 correlations x 5 groups
    const json d = json::parse(slurp(js));
    EXPECT_EQ(d["meta"]["seed"], 7);
    ASSERT_EQ(d["cells"].size(), 6u);
    for (const json& cell : d["cells"]) {
        EXPECT_EQ(cell["groups"].size(), 5u);
        EXPECT_FALSE(cell.contains("elapsed_seconds"));
        for (const json& g : cell["groups"]) {
            EXPECT_GE(g["corrected_cp"].get<double>(), g["naive_cp"].get<double>());
        }
    }
}

TEST_F(Cli, ConfigPrecedence)
{
    const fs::path cfg = write("cfg.json", R"({"reps": 150, "seed": 5, "simulate": {"rho": 0.4}, "alpha": 0.1})");
    const fs::path js = dir_ / "out.json";
    const Outcome r = run("simulate --config \"" + cfg.string() + "\" --seed 9 --out-json \"" + js.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const json d = json::parse(slurp(js));
    EXPECT_EQ(d["meta"]["seed"], 9);
    EXPECT_EQ(d["meta"]["config"]["reps"], 150);
    EXPECT_EQ(d["meta"]["config"]["rho"], 0.4);
    EXPECT_EQ(d["cells"][0]["reps"], 150);
    EXPECT_EQ(d["cells"][0]["alpha"], 0.1);
    EXPECT_EQ(d["cells"][0]["m"], 30);

    const fs::path bad = write("bad.json", R"({"repz": 150})");
    EXPECT_EQ(run("simulate --config \"" + bad.string() + "\"").code, 2);
    const fs::path typed = write("typed.json", R"({"reps": "lots"})");
    EXPECT_EQ(run("simulate --config \"" + typed.string() + "\"").code, 3);
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cardiomix/cli.hpp"
#include "cardiomix/config.hpp"
#include "cardiomix/errors.hpp"

using namespace cardiomix;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("cardiomix");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("cardiomix_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            out[fs::relative(entry.path(), dir).string()] = slurp(entry.path());
    return out;
}

}  // namespace

TEST_CASE("no arguments prints usage and exits 2") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({"gen", "--no-such-flag", "x"}) == 2);
    CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("gen is deterministic per seed and writes a loadable dataset") {
    const fs::path d1 = temp_dir("gen1");
    const fs::path d2 = temp_dir("gen2");
    const std::vector<std::string> common = {"gen",          "--per-class", "3",
                                             "--height",     "32",          "--width",
                                             "32",           "--radius-min", "4",
                                             "--radius-max", "6",           "--seed",
                                             "7"};
    std::vector<std::string> a1 = common;
    a1.push_back("--out");
    a1.push_back(d1.string());
    std::vector<std::string> a2 = common;
    a2.push_back("--out");
    a2.push_back(d2.string());

    REQUIRE(run_cli(a1) == 0);
    REQUIRE(run_cli(a2) == 0);
    const auto c1 = dir_contents(d1);
    const auto c2 = dir_contents(d2);
    REQUIRE(!c1.empty());
    CHECK(c1 == c2);

    CHECK(c1.count("manifest.csv") == 1);
    CHECK(c1.count("boxes.csv") == 1);
    CHECK(c1.count("config.resolved") == 1);
    CHECK(c1.count("c0_0000.pgm") == 1);
    CHECK(c1.count("c1_0002.pgm") == 1);

    // The resolved config is itself a valid config file.
    const RunConfig cfg = load_config((d1 / "config.resolved").string());
    CHECK(cfg.seed == 7);
    CHECK(cfg.gen.per_class == 3);
    CHECK(cfg.gen.height == 32);
}

TEST_CASE("augment dumps mixed samples with a sidecar") {
    const fs::path data = temp_dir("aug_data");
    REQUIRE(run_cli({"gen", "--out", data.string(), "--per-class", "3", "--height", "32",
                     "--width", "32", "--radius-min", "4", "--radius-max", "6", "--seed",
                     "3"}) == 0);
    const fs::path out = temp_dir("aug_out");
    REQUIRE(run_cli({"augment", "--data", (data / "manifest.csv").string(), "--out",
                     out.string(), "--n", "4", "--method", "mixup", "--set",
                     "preprocess.target_height=32", "--set", "preprocess.target_width=32"}) ==
            0);
    CHECK(fs::exists(out / "mix_0000.pgm"));
    CHECK(fs::exists(out / "mix_0003.pgm"));
    const std::string sidecar = slurp(out / "mixes.csv");
    CHECK(sidecar.rfind("path,lambda_eff,src_i,src_j\n", 0) == 0);
    // mixup with an unset alpha resolves to the 0.2 default in the config echo
    const std::string resolved = slurp(out / "config.resolved");
    CHECK(resolved.find("augment.method = mixup") != std::string::npos);
    CHECK(resolved.find("augment.alpha = 0.2") != std::string::npos);
}

TEST_CASE("eval validates fold counts against class sizes") {
    const fs::path data = temp_dir("eval_small");
    REQUIRE(run_cli({"gen", "--out", data.string(), "--per-class", "5", "--height", "20",
                     "--width", "20", "--radius-min", "3", "--radius-max", "5", "--seed",
                     "3"}) == 0);
    const fs::path out = temp_dir("eval_small_out");
    CHECK(run_cli({"eval", "--data", (data / "manifest.csv").string(), "--out", out.string(),
                   "--folds", "10", "--arch", "logistic", "--set",
                   "preprocess.target_height=20", "--set", "preprocess.target_width=20"}) ==
          1);
}

TEST_CASE("config file parsing: defaults, overrides, and errors") {
    RunConfig defaults;
    std::istringstream empty("");
    apply_config_text(defaults, empty, "empty");
    CHECK(defaults.seed == 1);
    CHECK(defaults.folds == 10);
    CHECK(defaults.occlusion.window == 15);
    CHECK(defaults.occlusion.stride == 8);
    CHECK(defaults.occlusion.baseline == 0.0);
    CHECK(defaults.preprocess.target_height == 100);
    CHECK(defaults.effective_alpha() == 1.0);

    RunConfig cfg;
    std::istringstream text(
        "# comment\n"
        "\n"
        "seed = 9\n"
        "augment.method = mixup\n"
        "train.lr = 0.25\n");
    apply_config_text(cfg, text, "test");
    CHECK(cfg.seed == 9);
    CHECK(cfg.mix_method == MixMethod::MixUp);
    CHECK(cfg.effective_alpha() == 0.2);
    CHECK(*cfg.learning_rate == 0.25);

    RunConfig bad;
    std::istringstream unknown("no.such.key = 1\n");
    try {
        apply_config_text(bad, unknown, "cfg");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 1") != std::string::npos);
        CHECK(msg.find("unknown key") != std::string::npos);
    }

    std::istringstream negative("augment.alpha = -1\n");
    CHECK_THROWS_AS(apply_config_text(bad, negative, "cfg"), UsageError);

    std::istringstream badnum("train.epochs = seven\n");
    CHECK_THROWS_AS(apply_config_text(bad, badnum, "cfg"), UsageError);

    // Serialized form round-trips.
    RunConfig base;
    base.seed = 123;
    base.mix_method = MixMethod::MixUp;
    base.epochs = 7;
    const std::string text2 = serialize_config(base);
    RunConfig reloaded;
    std::istringstream in2(text2);
    apply_config_text(reloaded, in2, "resolved");
    CHECK(reloaded.seed == 123);
    CHECK(reloaded.mix_method == MixMethod::MixUp);
    CHECK(reloaded.epochs == 7);
    CHECK(text2.find("# rng: splitmix64") != std::string::npos);
}

TEST_CASE("flags override config files") {
    const fs::path dir = temp_dir("cfg_precedence");
    {
        std::ofstream out(dir / "run.cfg");
        out << "gen.per_class = 2\nseed = 5\n";
    }
    const fs::path out1 = temp_dir("cfg_precedence_out");
    REQUIRE(run_cli({"gen", "--config", (dir / "run.cfg").string(), "--out", out1.string(),
                     "--per-class", "4", "--height", "24", "--width", "24", "--radius-min",
                     "3", "--radius-max", "5"}) == 0);
    const std::string resolved = slurp(out1 / "config.resolved");
    CHECK(resolved.find("gen.per_class = 4") != std::string::npos);  // flag wins
    CHECK(resolved.find("seed = 5") != std::string::npos);           // file kept
    int images = 0;
    for (const auto& entry : fs::directory_iterator(out1))
        if (entry.path().extension() == ".pgm") ++images;
    CHECK(images == 8);
}

TEST_CASE("train then explain produce checkpoints and heatmaps end to end") {
    const fs::path data = temp_dir("e2e_data");
    REQUIRE(run_cli({"gen", "--out", data.string(), "--per-class", "8", "--height", "30",
                     "--width", "30", "--radius-min", "4", "--radius-max", "7",
                     "--contrast", "0.6", "--noise", "0.15", "--seed", "11"}) == 0);

    const fs::path model_dir = temp_dir("e2e_model");
    REQUIRE(run_cli({"train", "--data", (data / "manifest.csv").string(), "--out",
                     model_dir.string(), "--arch", "logistic", "--epochs", "12", "--lr",
                     "0.2", "--seed", "11", "--set", "preprocess.target_height=30", "--set",
                     "preprocess.target_width=30"}) == 0);
    CHECK(fs::exists(model_dir / "model.cmix"));
    const std::string history = slurp(model_dir / "loss_history.csv");
    CHECK(history.rfind("epoch,mean_loss\n", 0) == 0);

    const fs::path heat_dir = temp_dir("e2e_heat");
    REQUIRE(run_cli({"explain", "--data", (data / "manifest.csv").string(), "--checkpoint",
                     (model_dir / "model.cmix").string(), "--out", heat_dir.string(),
                     "--images", "c1_0000.pgm", "--csv", "--threads", "1"}) == 0);
    CHECK(fs::exists(heat_dir / "heat_c1_0000.pgm.ppm"));
    CHECK(fs::exists(heat_dir / "heat_c1_0000.pgm.csv"));
    CHECK(fs::exists(heat_dir / "pointing.csv"));

    CHECK(run_cli({"explain", "--data", (data / "manifest.csv").string(), "--checkpoint",
                   (model_dir / "model.cmix").string(), "--out", heat_dir.string(),
                   "--images", "missing.pgm"}) == 1);
}

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
    const char* env = std::getenv("KCM_CLI");
    return env != nullptr ? env : "";
}

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe) != nullptr) result.output += buf;
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::size_t line_count(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) n += !line.empty();
    return n;
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / "kcm_cli_XXXXXX") {
        std::string tmpl = path.string();
        REQUIRE(mkdtemp(tmpl.data()) != nullptr);
        path = tmpl;
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("train writes metrics csv and checkpoint") {
    if (cli_path().empty()) return;  // suite requires the built binary
    TempDir dir;
    const fs::path cfg = dir.path / "moon.cfg";
    {
        std::ofstream out(cfg);
        out << "dataset.kind = twomoon\n"
               "dataset.n_train = 100\n"
               "dataset.n_test = 100\n"
               "model.hidden = 8\n"
               "train.epochs = 3\n"
               "train.batch_size = 50\n";
    }
    const RunResult r = run_cli("train --config " + cfg.string() + " --mode MIXUP_KCM --out " +
                                (dir.path / "out").string());
    CAPTURE(r.output);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir.path / "out" / "metrics.csv"));
    CHECK(fs::exists(dir.path / "out" / "model.ckpt"));
    CHECK(line_count(dir.path / "out" / "metrics.csv") == 4);  // header + 3 epochs

    // eval / contour / attack on the produced checkpoint
    const std::string common = " --config " + cfg.string() + " --mode MIXUP_KCM --checkpoint " +
                               (dir.path / "out" / "model.ckpt").string();
    CHECK(run_cli("eval" + common).exit_code == 0);
    CHECK(run_cli("contour" + common + " --contour.resolution 20 --out " +
                  (dir.path / "out").string())
              .exit_code == 0);
    CHECK(line_count(dir.path / "out" / "contour.csv") == 401);
    CHECK(run_cli("attack" + common + " --attack.epsilon 0.05 --out " +
                  (dir.path / "out").string())
              .exit_code == 0);
    CHECK(fs::exists(dir.path / "out" / "attack_report.csv"));
}

TEST_CASE("sweep produces one row per grid cell") {
    if (cli_path().empty()) return;
    TempDir dir;
    const fs::path cfg = dir.path / "moon.cfg";
    {
        std::ofstream out(cfg);
        out << "dataset.n_train = 60\ndataset.n_test = 60\nmodel.hidden = 4\n"
               "train.epochs = 1\ntrain.batch_size = 30\n";
    }
    const RunResult r =
        run_cli("sweep --config " + cfg.string() + " --h 0.005,0.05,0.5 --lambda 0,0.1 --out " +
                (dir.path / "out").string());
    CAPTURE(r.output);
    CHECK(r.exit_code == 0);
    CHECK(line_count(dir.path / "out" / "sweep.csv") == 7);  // header + 6 cells
}

TEST_CASE("missing config file: exit 2, message names the path") {
    if (cli_path().empty()) return;
    const RunResult r = run_cli("train --config /definitely/not/here.cfg");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("/definitely/not/here.cfg") != std::string::npos);
}

TEST_CASE("unknown flags, keys, and subcommands: exit 2") {
    if (cli_path().empty()) return;
    CHECK(run_cli("train --bogus 1").exit_code == 2);
    CHECK(run_cli("train --kernel.bandwith 1").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("rademacher --rademacher.n abc").exit_code == 2);
}

TEST_CASE("rademacher subcommand writes the csv") {
    if (cli_path().empty()) return;
    TempDir dir;
    const RunResult r = run_cli("rademacher --rademacher.n 6 --out " + dir.path.string());
    CAPTURE(r.output);
    CHECK(r.exit_code == 0);
    std::ifstream in(dir.path / "rademacher.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "method,n,M,value,stderr");
}

TEST_CASE("help-config lists schema keys") {
    if (cli_path().empty()) return;
    const RunResult r = run_cli("help-config");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("kernel.h") != std::string::npos);
    CHECK(r.output.find("mixup.alpha") != std::string::npos);
    CHECK(r.output.find("seed.kernel") != std::string::npos);
}

TEST_SUITE_END();

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>

// End-to-end checks of the command-line binary; the path comes from the
// build system.

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run(const std::string& args) {
    const std::string cmd = std::string(METAGLMM_CLI_PATH) + " " + args + " 2>&1";
    std::FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

const std::string kGammaCsv = std::string(METAGLMM_DATA_DIR) + "/long2020_gamma.csv";

} // namespace

TEST_CASE("reanalyze prints the four-method comparison") {
    const CmdResult r = run("reanalyze long2020 --qmc-nodes 1024 --seed 1");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "dl"));
    CHECK(contains(r.out, "plbc"));
    CHECK(contains(r.out, "plsbc"));
    CHECK(contains(r.out, "-0.473"));
    CHECK(contains(r.out, "-0.578"));
    CHECK(contains(r.out, "-0.367"));
    CHECK(contains(r.out, "-0.469"));
}

TEST_CASE("reanalysis weighted-mean rows ignore the seed") {
    const CmdResult a = run("reanalyze long2020 --qmc-nodes 256 --seed 11");
    const CmdResult b = run("reanalyze long2020 --qmc-nodes 256 --seed 99");
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    auto row = [](const std::string& out, const char* tag) {
        const std::size_t p = out.find(tag);
        return out.substr(p, out.find('\n', p) - p);
    };
    CHECK(row(a.out, "dl") == row(b.out, "dl"));
    CHECK(row(a.out, "plbc") == row(b.out, "plbc"));
}

TEST_CASE("identical seeds replay identical output") {
    const std::string args = "reanalyze long2020 --qmc-nodes 512 --seed 5";
    const CmdResult a = run(args);
    const CmdResult b = run(args);
    CHECK(a.exit_code == 0);
    CHECK(a.out == b.out);
}

TEST_CASE("unknown bundled id lists what exists") {
    const CmdResult r = run("reanalyze nothere");
    CHECK(r.exit_code == 1);
    CHECK(contains(r.out, "long2020"));
}

TEST_CASE("fit on the bundled table") {
    const CmdResult r = run("fit --family gamma --data \"" + kGammaCsv + "\" --qmc-nodes 1024");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "beta[1]"));
    CHECK(contains(r.out, "-0.43"));
    CHECK(contains(r.out, "converged"));
}

TEST_CASE("fixed tau2 turns the fit into a plain regression") {
    const CmdResult r =
        run("fit --family gamma --data \"" + kGammaCsv + "\" --qmc-nodes 256 --tau2-fixed 0");
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "tau2                     0.000"));
}

TEST_CASE("malformed input is a usage error with a row number") {
    {
        std::ofstream bad("cli_test_bad.csv");
        bad << "study,arm,n,mean,sd\nA,0,10,4.0,1.0\nA,1,x,4.2,1.1\n";
    }
    const CmdResult r = run("fit --family gamma --data cli_test_bad.csv");
    CHECK(r.exit_code == 1);
    CHECK(contains(r.out, "row 3"));
}

TEST_CASE("interval table honours the method filter") {
    const CmdResult pl_only =
        run("ci --family gamma --data \"" + kGammaCsv + "\" --qmc-nodes 512 --method pl");
    CHECK(pl_only.exit_code == 0);
    CHECK(contains(pl_only.out, "pl "));
    CHECK(!contains(pl_only.out, "plsbc"));

    const CmdResult with_nn =
        run("ci --family gamma --data \"" + kGammaCsv + "\" --qmc-nodes 512 --method all --nn");
    CHECK(with_nn.exit_code == 0);
    CHECK(contains(with_nn.out, "plsbc"));
    CHECK(contains(with_nn.out, "dl"));
    CHECK(contains(with_nn.out, "plbc"));

    const CmdResult bad =
        run("ci --family gamma --data \"" + kGammaCsv + "\" --method nope");
    CHECK(bad.exit_code == 1);
}

TEST_CASE("simulate runs a scenario file and writes the long table") {
    {
        std::ofstream scn("cli_test_tiny.scn");
        scn << "label = t\nfamily = binomial\nK = 3\ntau2 = 0.5\nreps = 2\nB = 128\nseed = 6\n"
               "methods = dl,plsbc\n";
    }
    const CmdResult r = run("simulate --scenario cli_test_tiny.scn --out cli_test_sim.csv");
    CHECK(r.exit_code == 0);
    std::ifstream in("cli_test_sim.csv");
    std::string line;
    int rows = 0;
    REQUIRE(std::getline(in, line));
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6); // 2 methods x 3 metrics

    {
        std::ofstream scn("cli_test_badkey.scn");
        scn << "family = binomial\nK = 3\ntau2 = 0.5\nreps = 1\nbogus_key = 1\n";
    }
    const CmdResult bad = run("simulate --scenario cli_test_badkey.scn");
    CHECK(bad.exit_code == 1);
    CHECK(contains(bad.out, "bogus_key"));
}

TEST_CASE("a one-replication sweep of the bundled scenario grid is quick") {
    const auto t0 = std::chrono::steady_clock::now();
    const CmdResult r = run("simulate --scenario \"" + std::string(METAGLMM_DATA_DIR) +
                            "/scenarios/smoke.scn\" --reps 1 --threads 2");
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.exit_code == 0);
    CHECK(contains(r.out, "binomial_k50"));
    CHECK(dt < 30.0);
}

TEST_CASE("help enumerates the documented flags") {
    const CmdResult top = run("--help");
    CHECK(top.exit_code == 0);
    for (const char* sub : {"fit", "ci", "simulate", "reanalyze"}) CHECK(contains(top.out, sub));
    const CmdResult fit_help = run("fit --help");
    for (const char* flag : {"--family", "--data", "--level", "--qmc-nodes", "--seed", "--out",
                             "--tau2-fixed"})
        CHECK(contains(fit_help.out, flag));
    const CmdResult ci_help = run("ci --help");
    for (const char* flag : {"--method", "--nn"}) CHECK(contains(ci_help.out, flag));
    const CmdResult sim_help = run("simulate --help");
    for (const char* flag : {"--scenario", "--out", "--threads", "--reps"})
        CHECK(contains(sim_help.out, flag));
}

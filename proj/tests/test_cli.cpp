#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wursim/cli.hpp"

namespace fs = std::filesystem;
using wursim::cli::run;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("wursim_cli_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter++))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

}  // namespace

TEST_CASE("cli sweep") {
    TempDir tmp;
    std::ostringstream os;

    SECTION("cell count matches the grid") {
        const int rc = run({"sweep", "--n", "25", "--loads", "0.01,0.1", "--protocols", "tdma,wur-bs",
                            "--reps", "2", "--events", "2000", "--out", tmp.path.string()},
                           os);
        REQUIRE(rc == 0);
        auto csv = slurp(tmp.path / "sweep.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 cells
        CHECK(fs::exists(tmp.path / "sweep.json"));
        CHECK(fs::exists(tmp.path / "run_meta.json"));
    }

    SECTION("out-of-range load exits 2") {
        const int rc = run({"sweep", "--n", "25", "--loads", "1.5", "--events", "1000", "--out",
                            tmp.path.string()},
                           os);
        CHECK(rc == 2);
    }

    SECTION("unknown protocol exits 2") {
        const int rc = run({"sweep", "--n", "25", "--loads", "0.1", "--protocols", "csma", "--out",
                            tmp.path.string()},
                           os);
        CHECK(rc == 2);
    }

    SECTION("repeat runs are byte-identical") {
        auto args = std::vector<std::string>{"sweep",  "--n",    "25",   "--loads", "0.1",
                                             "--reps", "3",      "--events", "3000",
                                             "--seed", "77",     "--out",   tmp.path.string()};
        REQUIRE(run(args, os) == 0);
        auto first = slurp(tmp.path / "sweep.csv");
        auto first_json = slurp(tmp.path / "sweep.json");
        REQUIRE(run(args, os) == 0);
        CHECK(slurp(tmp.path / "sweep.csv") == first);
        CHECK(slurp(tmp.path / "sweep.json") == first_json);
    }
}

TEST_CASE("cli validate") {
    std::ostringstream os;

    SECTION("single fast check passes") {
        const int rc = run({"validate", "--checks", "group-probs,bound-ordering", "--g", "8"}, os);
        CHECK(rc == 0);
        CHECK(os.str().find("PASS  group-probs") != std::string::npos);
        CHECK(os.str().find("PASS  bound-ordering") != std::string::npos);
    }
    SECTION("tdma cycle check against the closed form") {
        const int rc =
            run({"validate", "--checks", "tdma-cycle", "--xi", "0.3", "--events", "40000"}, os);
        CHECK(rc == 0);
        CHECK(os.str().find("PASS  tdma-cycle") != std::string::npos);
    }
    SECTION("unknown check exits 2") {
        CHECK(run({"validate", "--checks", "no-such-check"}, os) == 2);
    }
}

TEST_CASE("cli bounds") {
    TempDir tmp;
    std::ostringstream os;

    SECTION("writes a per-round table") {
        const int rc = run({"bounds", "--g", "24", "--rounds", "6", "--events", "4000", "--trials",
                            "4000", "--out", tmp.path.string()},
                           os);
        REQUIRE(rc == 0);
        auto csv = slurp(tmp.path / "bounds_g24.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);  // header + rounds 0..6
    }
    SECTION("group of one exits 2") {
        CHECK(run({"bounds", "--g", "1", "--out", tmp.path.string()}, os) == 2);
    }
}

TEST_CASE("cli fixed-group") {
    TempDir tmp;
    std::ostringstream os;

    SECTION("delta rows cover sizes x loads") {
        const int rc = run({"fixed-group", "--n", "20", "--sizes", "1,20", "--loads", "0.05,0.1",
                            "--reps", "2", "--events", "2000", "--out", tmp.path.string()},
                           os);
        REQUIRE(rc == 0);
        auto csv = slurp(tmp.path / "fixed_group_delta.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4
    }
    SECTION("oversized group exits 2") {
        CHECK(run({"fixed-group", "--n", "20", "--sizes", "21", "--out", tmp.path.string()}, os) ==
              2);
    }
}

TEST_CASE("cli config file") {
    TempDir tmp;
    std::ostringstream os;

    SECTION("config supplies defaults, flags win") {
        const auto cfg = tmp.path / "cfg.json";
        std::ofstream(cfg) << R"({"loads": [0.05], "reps": 2, "events": 2000, "seed": 5})";
        const int rc = run({"sweep", "--n", "25", "--protocols", "tdma", "--config", cfg.string(),
                            "--reps", "1", "--out", tmp.path.string()},
                           os);
        REQUIRE(rc == 0);
        auto csv = slurp(tmp.path / "sweep.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // one cell
        CHECK(csv.find(",1\n") != std::string::npos);          // --reps 1 overrode config's 2
    }
    SECTION("unknown config key exits 2") {
        const auto cfg = tmp.path / "bad.json";
        std::ofstream(cfg) << R"({"lods": [0.05]})";
        CHECK(run({"sweep", "--config", cfg.string(), "--out", tmp.path.string()}, os) == 2);
    }
    SECTION("missing config file exits 3") {
        CHECK(run({"sweep", "--config", (tmp.path / "none.json").string(), "--out",
                   tmp.path.string()},
                  os) == 3);
    }
}

TEST_CASE("cli io failure exits 3") {
    TempDir tmp;
    std::ostringstream os;
    const auto blocker = tmp.path / "file";
    std::ofstream(blocker) << "x";
    const int rc = run({"sweep", "--n", "20", "--loads", "0.1", "--protocols", "tdma", "--reps", "1",
                        "--events", "500", "--out", (blocker / "sub").string()},
                       os);
    CHECK(rc == 3);
}

TEST_CASE("environment seed fallback") {
    TempDir tmp;
    std::ostringstream os;
    ::setenv("WURSIM_SEED", "4242", 1);
    auto args = std::vector<std::string>{"sweep",    "--n",  "20",   "--loads", "0.1", "--protocols",
                                         "tdma",     "--reps", "2",  "--events", "2000",
                                         "--out", tmp.path.string()};
    REQUIRE(run(args, os) == 0);
    auto first = slurp(tmp.path / "sweep.csv");
    REQUIRE(run(args, os) == 0);
    CHECK(slurp(tmp.path / "sweep.csv") == first);

    ::setenv("WURSIM_SEED", "4243", 1);
    REQUIRE(run(args, os) == 0);
    CHECK(slurp(tmp.path / "sweep.csv") != first);
    ::unsetenv("WURSIM_SEED");
}

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "popk/tsv.hpp"

namespace {

namespace fs = std::filesystem;

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CommandResult run(const std::string& args) {
  const std::string command = std::string(POPK_CLI_BIN) + " " + args + " 2>&1";
  std::array<char, 4096> buffer{};
  CommandResult result;
  FILE* pipe = ::popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::size_t n;
  while ((n = ::fread(buffer.data(), 1, buffer.size(), pipe)) > 0)
    result.output.append(buffer.data(), n);
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("popk_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return (sub.empty() ? path : path / sub).string();
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p);
  out << contents;
}

}  // namespace

TEST_CASE("ingest prints an impressions/users summary") {
  TempDir dir;
  write_file(dir.path / "news.tsv",
             "n1\tsports\ts1\ttitle one\n"
             "n2\tfinance\ts2\ttitle two\n"
             "n3\tsports\ts3\ttitle three\n");
  write_file(dir.path / "behaviors.tsv",
             "i1\tu1\t7200\tn1\tn2-0 n3-1\n"
             "i2\tu2\t10800\t\tn1-1 n2-0\n"
             "i3\tu1\t14400\tn3\tn2-1\n");
  const CommandResult r = run("ingest --news " + dir.str("news.tsv") +
                              " --train " + dir.str("behaviors.tsv"));
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("train: 3 / 2") != std::string::npos);
  CHECK(r.output.find("news: 3 articles, 2 categories") != std::string::npos);
  CHECK(r.output.find("range 1970-01-01T02:00:00Z .. 1970-01-01T04:00:00Z") !=
        std::string::npos);
  CHECK(r.output.find("sports 2") != std::string::npos);
}

TEST_CASE("missing file exits with code 2 and names the path") {
  const CommandResult r = run("ingest --news /nonexistent/news.tsv");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("/nonexistent/news.tsv") != std::string::npos);
}

TEST_CASE("bad parse exits with code 2, bad flag value with nonzero") {
  TempDir dir;
  write_file(dir.path / "news.tsv", "n1\tsports\n");  // too few fields
  const CommandResult r = run("ingest --news " + dir.str("news.tsv"));
  CHECK(r.exit_code == 2);

  const CommandResult bad_flag = run("train --logic daily");
  CHECK(bad_flag.exit_code != 0);
}

TEST_CASE("synth then ingest summary matches an independent recount") {
  TempDir dir;
  const CommandResult s =
      run("synth --seed 5 --out " + dir.str("data"));
  REQUIRE(s.exit_code == 0);

  // independent recount of the generated behaviors file
  std::ifstream in(dir.path / "data" / "behaviors_train.tsv");
  REQUIRE(in.good());
  std::string line;
  std::size_t impressions = 0;
  std::set<std::string> users;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = popk::split(line, '\t');
    REQUIRE(fields.size() == 5);
    ++impressions;
    users.insert(std::string(fields[1]));
  }

  const CommandResult r =
      run("ingest --news " + dir.str("data/news.tsv") + " --train " +
          dir.str("data/behaviors_train.tsv"));
  REQUIRE(r.exit_code == 0);
  const std::string expected = "train: " + std::to_string(impressions) +
                               " / " + std::to_string(users.size());
  CHECK(r.output.find(expected) != std::string::npos);
}

TEST_CASE("end-to-end: synth, index, train, eval, sweep") {
  TempDir dir;
  write_file(dir.path / "config.json", R"({
    "synth": {"n_users": 30, "n_articles": 60, "n_categories": 6,
              "n_impressions": 800, "candidates_per_impression": 10,
              "popularity_exponent": 1.0, "preference_strength": 0.7,
              "horizon": 24, "test_impressions": 200},
    "model": {"dim": 8, "learning_rate": 0.2, "epochs": 2, "batch_size": 32},
    "sampler": {"k": 4, "popk": 1, "logic": "acc", "metric": "clicks"},
    "seed": 99
  })");
  const std::string cfg = " --config " + dir.str("config.json");
  const std::string data = dir.str("data");
  REQUIRE(run("synth" + cfg + " --out " + data).exit_code == 0);

  const std::string paths = " --news " + data + "/news.tsv --train " + data +
                            "/behaviors_train.tsv --test " + data +
                            "/behaviors_test.tsv";

  SECTION("index writes a fingerprinted snapshot") {
    REQUIRE(run("index" + cfg + paths + " --out " + dir.str("idx")).exit_code ==
            0);
    const std::string snapshot = slurp(dir.path / "idx" / "index.tsv");
    CHECK(snapshot.rfind("# config_fingerprint: ", 0) == 0);
    CHECK(snapshot.find('\t') != std::string::npos);
  }

  SECTION("train, dump samples, then eval") {
    const CommandResult t =
        run("train" + cfg + paths + " --out " + dir.str("run") +
            " --dump-samples " + dir.str("run/samples.tsv"));
    REQUIRE(t.exit_code == 0);
    CHECK(t.output.find("epoch 1 mean loss") != std::string::npos);
    CHECK(t.output.find("sampler seed") != std::string::npos);
    CHECK(fs::exists(dir.path / "run" / "model.json"));

    // audit dump: impression_id, positive, k negatives, flags
    std::ifstream samples(dir.path / "run" / "samples.tsv");
    std::string line;
    std::getline(samples, line);  // fingerprint
    CHECK(line.rfind("# config_fingerprint:", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(samples, line)) {
      const auto fields = popk::split(line, '\t');
      REQUIRE(fields.size() == 2 + 4 + 1);
      CHECK(fields.back().size() == 4);
      for (const char c : fields.back()) CHECK((c == 'i' || c == 'p'));
      ++rows;
    }
    CHECK(rows == 800);

    const CommandResult e = run("eval" + cfg + paths + " --out " +
                                dir.str("run") + " --model " +
                                dir.str("run/model.json"));
    REQUIRE(e.exit_code == 0);
    CHECK(fs::exists(dir.path / "run" / "report.json"));
    CHECK(fs::exists(dir.path / "run" / "categories_k5.tsv"));
    CHECK(fs::exists(dir.path / "run" / "categories_k10.tsv"));
    const std::string report = slurp(dir.path / "run" / "report.json");
    CHECK(report.find("\"auc\"") != std::string::npos);
    CHECK(report.find("\"config_fingerprint\"") != std::string::npos);
  }

  SECTION("sweep emits the 7-row table plus delta row") {
    REQUIRE(run("sweep" + cfg + paths + " --out " + dir.str("sweep") +
                " --popk-list 1,2,3 --logics acc,ptb --metrics clicks")
                .exit_code == 0);
    const std::string tsv = slurp(dir.path / "sweep" / "sweep.tsv");
    std::istringstream in(tsv);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') rows.push_back(line);
    // header + original + 6 variants + increase row
    REQUIRE(rows.size() == 9);
    CHECK(rows[0].rfind("variant\tlogic\tmetric\tpopk\tAUC\tMRR", 0) == 0);
    CHECK(rows[1].rfind("original\t-\t-\t0", 0) == 0);
    CHECK(rows[2].rfind("popk=1\tacc\tclicks\t1", 0) == 0);
    CHECK(rows[4].rfind("popk=3\tacc\tclicks\t3", 0) == 0);
    CHECK(rows[5].rfind("popk=1\tptb\tclicks\t1", 0) == 0);
    CHECK(rows[8].rfind("increase_vs_original", 0) == 0);
  }

  SECTION("baseline-only sweep has zero deltas") {
    REQUIRE(run("sweep" + cfg + paths + " --out " + dir.str("sweep0") +
                " --popk 0")
                .exit_code == 0);
    const std::string tsv = slurp(dir.path / "sweep0" / "sweep.tsv");
    std::istringstream in(tsv);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') rows.push_back(line);
    REQUIRE(rows.size() == 3);  // header + original + increase row
    CHECK(rows[2].find("+0.00%") != std::string::npos);
  }
}

TEST_CASE("flag overrides beat the config file") {
  TempDir dir;
  write_file(dir.path / "config.json", R"({
    "synth": {"n_users": 10, "n_articles": 20, "n_categories": 4,
              "n_impressions": 50, "candidates_per_impression": 5,
              "horizon": 8, "test_impressions": 0},
    "seed": 1
  })");
  // --seed overrides the config seed; fingerprints must differ
  const CommandResult a = run("synth --config " + dir.str("config.json") +
                              " --out " + dir.str("a"));
  const CommandResult b = run("synth --config " + dir.str("config.json") +
                              " --seed 2 --out " + dir.str("b"));
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  const std::string na = slurp(dir.path / "a" / "news.tsv");
  const std::string nb = slurp(dir.path / "b" / "news.tsv");
  CHECK(na.substr(0, na.find('\n')) != nb.substr(0, nb.find('\n')));
}

#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" SKELGEN_CLI_PATH "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("skelgen_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits zero and usage errors exit two") {
  const auto help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.output.find("generate") != std::string::npos);
  CHECK(run("gen-data --help").code == 0);
  CHECK(run("--no-such-flag").code == 2);
  CHECK(run("").code == 2);
  CHECK(run("gen-data").code == 2);
}

TEST_CASE("missing checkpoint is a domain error with a manifest") {
  const auto dir = scratch("missing");
  const auto out = (dir / "gen.jsonl").string();
  const auto r = run("generate --checkpoint " + (dir / "nope.skg").string() + " --prompt jump --out " + out);
  CHECK(r.code == 1);
  CHECK(r.output.find("nope.skg") != std::string::npos);
  const auto m = nlohmann::json::parse(slurp(out + ".manifest.json"));
  CHECK(m.at("status") == "error");
  CHECK(m.at("exit_code") == 1);
  CHECK(m.at("command") == "generate");
  fs::remove_all(dir);
}

TEST_CASE("bad config key is reported with a suggestion") {
  const auto dir = scratch("badcfg");
  {
    std::ofstream(dir / "run.ini") << "[sample]\ntopk = 3\n";
  }
  const auto r = run("--config " + (dir / "run.ini").string() + " gen-data --n 5 --out " + (dir / "d").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("did you mean 'k'") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("gen-data writes a corpus and honours SKELGEN_SEED") {
  const auto dir = scratch("gendata");
  const auto a = dir / "a", b = dir / "b", c = dir / "c";
  CHECK(run("gen-data --n 12 --t-min 2 --t-max 3 --out " + a.string(), "SKELGEN_SEED=5").code == 0);
  CHECK(run("-q gen-data --n 12 --t-min 2 --t-max 3 --seed 5 --out " + b.string()).code == 0);
  CHECK(run("-q gen-data --n 12 --t-min 2 --t-max 3 --seed 6 --out " + c.string()).code == 0);
  CHECK(slurp(a / "corpus.jsonl") == slurp(b / "corpus.jsonl"));
  CHECK(slurp(a / "corpus.jsonl") != slurp(c / "corpus.jsonl"));
  for (const auto* f : {"train.jsonl", "test.jsonl", "topology.json", "manifest.json"}) CHECK(fs::exists(a / f));
  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(m.at("status") == "ok");
  CHECK(m.at("seed") == 5);
  // A flag beats the environment.
  const auto d = dir / "d";
  CHECK(run("-q gen-data --n 12 --t-min 2 --t-max 3 --seed 6 --out " + d.string(), "SKELGEN_SEED=5").code == 0);
  CHECK(slurp(d / "corpus.jsonl") == slurp(c / "corpus.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("shipped topology matches gen-data output") {
  const auto dir = scratch("topo");
  REQUIRE(run("-q gen-data --n 2 --t-min 1 --t-max 1 --out " + dir.string()).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "topology.json")) ==
        nlohmann::json::parse(slurp(fs::path(SKELGEN_SOURCE_DIR) / "data" / "wholebody62.json")));
  fs::remove_all(dir);
}

}  // TEST_SUITE

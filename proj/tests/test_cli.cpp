#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfner/protocol.hpp"
#include "commands.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfner-cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cfner::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("cfner_test_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small synthetic experiment: 3 types, FG-1-PG-1, two epochs, two seeds.
fs::path write_small_config(const fs::path& dir) {
  const fs::path p = dir / "small.cfg";
  std::ofstream(p) << "synth.num_types = 3\n"
                      "synth.sentences_per_type = 20\n"
                      "synth.vocab_per_type = 6\n"
                      "synth.other_vocab_size = 20\n"
                      "synth.sentence_length = 7\n"
                      "epochs = 2\n"
                      "m = 2\n"
                      "seeds = [1, 2]\n";
  return p;
}

}  // namespace

TEST_CASE("synth writes a deterministic train/dev/test split") {
  TempDir dir("synth");
  const std::vector<std::string> args{"synth", "--num-types", "3", "--sentences-per-type", "20", "--seed", "4"};
  auto first = args;
  first.insert(first.end(), {"--out", (dir.path / "a").string()});
  auto second = args;
  second.insert(second.end(), {"--out", (dir.path / "b").string()});
  REQUIRE(cli(first).code == 0);
  REQUIRE(cli(second).code == 0);
  for (const char* f : {"train.conll", "dev.conll", "test.conll", "manifest.json"}) {
    CHECK(fs::exists(dir.path / "a" / f));
    CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir.path / "a" / "manifest.json"));
  const std::size_t total = manifest["files"]["train"]["sentences"].get<std::size_t>() +
                            manifest["files"]["dev"]["sentences"].get<std::size_t>() +
                            manifest["files"]["test"]["sentences"].get<std::size_t>();
  CHECK(total == 60);
}

TEST_CASE("partition writes one slice per step and a manifest") {
  TempDir dir("partition");
  REQUIRE(cli({"synth", "--num-types", "4", "--sentences-per-type", "15", "--out", dir.path.string()}).code == 0);
  const Result r = cli({"partition", (dir.path / "train.conll").string(), "--fg", "1", "--pg", "1",
                        "--out", (dir.path / "slices").string()});
  REQUIRE(r.code == 0);
  for (int j = 0; j < 4; ++j) {
    CHECK(fs::exists(dir.path / "slices" / ("slice_0" + std::to_string(j) + ".conll")));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir.path / "slices" / "manifest.json"));
  CHECK(manifest["slices"].size() == 4);
}

TEST_CASE("run honors --baseline and writes parseable reports") {
  TempDir dir("run");
  const fs::path config = write_small_config(dir.path);
  const Result r = cli({"run", "--config", config.string(), "--baseline", "extendner", "--out",
                        (dir.path / "out").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("extendner: micro-F1") != std::string::npos);
  std::ifstream in(dir.path / "out" / "report.jsonl");
  const cfner::LoadedReport report = cfner::read_report_jsonl(in);
  CHECK(report.method == "extendner");
  CHECK(report.steps.size() == 2 * 3);
  CHECK(report.aggregate.at("steps") == 3);
  CHECK(fs::exists(dir.path / "out" / "timing.jsonl"));
  CHECK(fs::exists(dir.path / "out" / "curves.csv"));
  CHECK(fs::exists(dir.path / "out" / "seed_1" / "diagnostics_step_0.json"));

  SUBCASE("report prints a table and recomputes the aggregate") {
    const Result t = cli({"report", (dir.path / "out" / "report.jsonl").string()});
    REQUIRE(t.code == 0);
    CHECK(t.out.find("extendner") != std::string::npos);
    const cfner::Aggregate micro = cfner::recompute_aggregate(report.steps, "micro_f1");
    CHECK(micro.mean == report.aggregate.at("micro_f1_mean").get<double>());
  }
  SUBCASE("report merges several files into one CSV") {
    REQUIRE(cli({"run", "--config", config.string(), "--baseline", "finetune", "--out",
                 (dir.path / "ft").string()})
                .code == 0);
    const fs::path csv = dir.path / "curves.csv";
    const Result t = cli({"report", (dir.path / "out" / "report.jsonl").string(),
                          (dir.path / "ft" / "report.jsonl").string(), "--csv", csv.string()});
    REQUIRE(t.code == 0);
    const std::string text = slurp(csv);
    CHECK(text.rfind("step,extendner_mean_micro_f1,extendner_std_micro_f1,finetune_mean_micro_f1,"
                     "finetune_std_micro_f1\n",
                     0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  }
  SUBCASE("the same run twice gives identical report bytes") {
    REQUIRE(cli({"run", "--config", config.string(), "--baseline", "extendner", "--jobs", "2",
                 "--out", (dir.path / "again").string()})
                .code == 0);
    CHECK(slurp(dir.path / "again" / "report.jsonl") == slurp(dir.path / "out" / "report.jsonl"));
  }
}

TEST_CASE("gradcheck exit codes") {
  CHECK(cli({"gradcheck", "--trials", "1"}).code == 0);
  CHECK(cli({"gradcheck", "--trials", "1", "--corrupt"}).code != 0);
  const Result none = cli({"gradcheck", "--trials", "0"});
  CHECK(none.code == 0);
  CHECK(none.out == "no trials requested\n");
}

TEST_CASE("bad input fails with a message") {
  const Result missing = cli({"run", "--config", "/nonexistent/cfner.cfg"});
  CHECK(missing.code != 0);
  CHECK(missing.err.find("cannot open config file") != std::string::npos);
  CHECK(cli({"run", "--set", "nope=1"}).code != 0);
  CHECK(cli({"run", "--baseline", "lwf"}).code != 0);
  CHECK(cli({"report", "/nonexistent/report.jsonl"}).code != 0);
  CHECK(cli({}).code != 0);
}

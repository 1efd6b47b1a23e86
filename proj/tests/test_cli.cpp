#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// End-to-end checks of the command-line binary (path injected by CMake).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "attnmixer_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run(const std::string& args) {
  const fs::path log = work_dir() / "last_output.txt";
  const std::string cmd =
      std::string(CLI_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  return {WEXITSTATUS(raw), buf.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string p(const char* name) { return (work_dir() / name).string(); }

}  // namespace

TEST_CASE("generate -> train -> eval pipeline exits cleanly") {
  auto gen = run("generate --out " + p("d.csv") + " --graph-out " + p("g.json") +
                 " --steps 300 --seed 0");
  CHECK(gen.exit_code == 0);
  CHECK(fs::exists(p("d.csv")));
  CHECK(fs::exists(p("g.json")));
  CHECK(gen.output.find("config:") != std::string::npos);

  auto train = run("train --data " + p("d.csv") + " --ckpt " + p("m.json") + " --report " +
                   p("r.csv") + " --T 8 --K 1 --gru-hidden 6 --epochs 2 --batch-size 32"
                   " --seed 0");
  CHECK(train.exit_code == 0);
  CHECK(fs::exists(p("m.json")));
  CHECK(fs::exists(p("r.csv")));

  auto eval = run("eval --ckpt " + p("m.json") + " --data " + p("d.csv") + " --out " +
                  p("metrics.csv"));
  CHECK(eval.exit_code == 0);
  const std::string metrics = slurp(p("metrics.csv"));
  CHECK(metrics.find("split,horizon,r2,rmse,mae") != std::string::npos);
  CHECK(metrics.find("train,1,") != std::string::npos);
  CHECK(metrics.find("val,1,") != std::string::npos);
  CHECK(metrics.find("test,1,") != std::string::npos);

  auto attn = run("attention --ckpt " + p("m.json") + " --data " + p("d.csv") + " --out " +
                  p("attn.json") + " --graph " + p("g.json"));
  CHECK(attn.exit_code == 0);
  CHECK(attn.output.find("true_edge_mass_ratio=") != std::string::npos);
  CHECK(slurp(p("attn.json")).find("attnmixer-attn-v1") != std::string::npos);

  auto anomaly = run("anomaly --ckpt " + p("m.json") + " --data " + p("d.csv") + " --out " +
                     p("flags.csv") + " --q 0.95");
  CHECK(anomaly.exit_code == 0);
  CHECK(slurp(p("flags.csv")).find("timestamp,residual,threshold") != std::string::npos);
}

TEST_CASE("flops prints the worked example and verifies") {
  auto r = run("flops --T 2 --D 3 --K 1");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("samp=144") != std::string::npos);
  CHECK(r.output.find("verified") != std::string::npos);
}

TEST_CASE("ablate emits exactly five variant rows") {
  auto r = run("ablate --data " + p("d.csv") + " --out " + p("ablate.csv") +
               " --T 8 --K 1 --gru-hidden 6 --epochs 2 --batch-size 32 --seed 0");
  CHECK(r.exit_code == 0);
  std::ifstream in(p("ablate.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "variant,r2,rmse,mae");
  int rows = 0;
  std::string names;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    names += line.substr(0, line.find(',')) + " ";
  }
  CHECK(rows == 5);
  for (const char* v : {"full", "no_samp", "no_tamp", "no_smpr", "tied_qk"}) {
    CHECK(names.find(v) != std::string::npos);
  }
}

TEST_CASE("reruns with the same seed are byte-identical") {
  auto first = run("train --data " + p("d.csv") + " --ckpt " + p("m1.json") + " --report " +
                   p("r1.csv") + " --T 8 --K 1 --gru-hidden 6 --epochs 2 --batch-size 32"
                   " --seed 5");
  auto second = run("train --data " + p("d.csv") + " --ckpt " + p("m2.json") + " --report " +
                    p("r2.csv") + " --T 8 --K 1 --gru-hidden 6 --epochs 2 --batch-size 32"
                    " --seed 5");
  CHECK(first.exit_code == 0);
  CHECK(second.exit_code == 0);
  CHECK(slurp(p("m1.json")) == slurp(p("m2.json")));
  CHECK(slurp(p("r1.csv")) == slurp(p("r2.csv")));

  run("eval --ckpt " + p("m1.json") + " --data " + p("d.csv") + " --out " + p("e1.csv"));
  run("eval --ckpt " + p("m1.json") + " --data " + p("d.csv") + " --out " + p("e2.csv"));
  CHECK(slurp(p("e1.csv")) == slurp(p("e2.csv")));

  run("generate --out " + p("d1.csv") + " --steps 100 --seed 9");
  run("generate --out " + p("d2.csv") + " --steps 100 --seed 9");
  CHECK(slurp(p("d1.csv")) == slurp(p("d2.csv")));
}

TEST_CASE("--help lists flags with defaults for every subcommand") {
  for (const char* sub : {"generate", "train", "eval", "ablate", "attention", "flops",
                          "anomaly"}) {
    auto r = run(std::string(sub) + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("--help") != std::string::npos);
  }
  auto train_help = run("train --help");
  for (const char* flag : {"--seed", "--lambda", "--epochs", "--batch-size", "--lr",
                           "--patience", "--smpr-mode", "--tie-qk", "--no-samp",
                           "--no-tamp", "--gru-hidden"}) {
    CHECK(train_help.output.find(flag) != std::string::npos);
  }
  CHECK(train_help.output.find("200") != std::string::npos);  // epochs default
}

TEST_CASE("exit codes distinguish error classes") {
  CHECK(run("train --data " + p("d.csv") + " --ckpt " + p("x.json") +
            " --definitely-not-a-flag").exit_code == 2);
  CHECK(run("nonsense-subcommand").exit_code == 2);
  CHECK(run("train --data /nonexistent/missing.csv --ckpt " + p("x.json")).exit_code == 5);

  const auto bad = work_dir() / "bad.csv";
  std::ofstream(bad) << "timestamp,v1,kpi\n2021-01-01T00:00:00,not_a_number,1\n";
  CHECK(run("train --data " + bad.string() + " --ckpt " + p("x.json")).exit_code == 3);

  // Checkpoint trained on 8 variates against 1-variate data.
  const auto narrow = work_dir() / "narrow.csv";
  {
    std::ofstream out(narrow);
    out << "timestamp,v1,kpi\n";
    for (int i = 0; i < 40; ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "2021-01-01T%02d:%02d:00,%d,%d\n", i / 60, i % 60, i,
                    i + 1);
      out << buf;
    }
  }
  CHECK(run("eval --ckpt " + p("m.json") + " --data " + narrow.string() + " --out " +
            p("y.csv")).exit_code == 2);
  CHECK(run("train --data " + p("d.csv") + " --ckpt " + p("x.json") + " --smpr-mode bogus")
            .exit_code == 2);
}

TEST_CASE("JSON config file loads and flags override it") {
  const auto cfg = work_dir() / "run.json";
  std::ofstream(cfg) << R"({"window": 8, "rounds": 1, "gru_hidden": 6, "epochs": 2,)"
                     << R"( "batch_size": 32, "seed": 4})";
  auto from_file = run("--config " + cfg.string() + " train --data " + p("d.csv") +
                       " --ckpt " + p("mc.json"));
  CHECK(from_file.exit_code == 0);
  CHECK(from_file.output.find("\"window\":8") != std::string::npos);
  CHECK(from_file.output.find("\"epochs\":2") != std::string::npos);
  CHECK(from_file.output.find("\"seed\":4") != std::string::npos);

  auto overridden = run("--config " + cfg.string() + " train --data " + p("d.csv") +
                        " --ckpt " + p("mo.json") + " --seed 11");
  CHECK(overridden.exit_code == 0);
  CHECK(overridden.output.find("\"seed\":11") != std::string::npos);
  CHECK(overridden.output.find("\"window\":8") != std::string::npos);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

// IGNN_BIN is injected by the build as the path to the command-line binary.
int run_cli(const std::string& args) {
  const std::string cmd = std::string(IGNN_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status >= 0);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct CliFixture {
  testutil::ScratchDir dir{"ignn_cli_scratch"};
  std::string data;

  CliFixture() {
    const std::string out = (dir.path() / "data").string();
    REQUIRE(run_cli("gen-data --out " + out + " --count 36 --min-nodes 4 --max-nodes 6 --seed 11") == 0);
    data = out + "/dataset.bin";
  }

  std::string train_args(const std::string& out, const std::string& extra) const {
    return "train --data " + data + " --out " + out +
           " --scheme mpnn --hidden 4 --layers 2 --edge-hidden 6 --epochs 2 --batch 12"
           " --val 6 --test 6 --seed 3 " + extra;
  }
};

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run_cli("") == 1);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("train --no-such-flag") == 1);
  CHECK(run_cli("frobnicate") == 1);
}

TEST_CASE("gen-data writes a loadable dataset and is idempotent") {
  testutil::ScratchDir dir("ignn_cli_gendata");
  const std::string a = (dir.path() / "a").string();
  const std::string b = (dir.path() / "b").string();
  const std::string flags = " --count 20 --min-nodes 4 --max-nodes 6 --seed 5";
  CHECK(run_cli("gen-data --out " + a + flags) == 0);
  CHECK(run_cli("gen-data --out " + b + flags) == 0);
  CHECK(fs::exists(a + "/dataset.bin"));
  CHECK(fs::exists(a + "/config.json"));
  CHECK(slurp(a + "/dataset.bin") == slurp(b + "/dataset.bin"));
  CHECK(slurp(a + "/config.json") == slurp(b + "/config.json"));

  // invalid generator settings are a data error
  CHECK(run_cli("gen-data --out " + (dir.path() / "c").string() +
                " --count 5 --min-nodes 6 --max-nodes 4") == 3);
}

TEST_CASE("train produces the full artifact set reproducibly") {
  CliFixture fx;
  const std::string out1 = (fx.dir.path() / "run1").string();
  const std::string out2 = (fx.dir.path() / "run2").string();
  REQUIRE(run_cli(fx.train_args(out1, "")) == 0);
  REQUIRE(run_cli(fx.train_args(out2, "")) == 0);
  for (const char* leaf : {"config.json", "checkpoint.bin", "history.jsonl", "metrics.csv"}) {
    CHECK(fs::exists(fs::path(out1) / leaf));
    CHECK(slurp(fs::path(out1) / leaf) == slurp(fs::path(out2) / leaf));
  }
  const std::string csv = slurp(fs::path(out1) / "metrics.csv");
  CHECK(csv.rfind("run_id,split,mae_0,mae_mean,nmae,pearson_0", 0) == 0);
  CHECK(csv.find("run-seed3,train,") != std::string::npos);
  CHECK(csv.find("run-seed3,val,") != std::string::npos);
  CHECK(csv.find("run-seed3,test,") != std::string::npos);
}

TEST_CASE("train accepts a config file with flag overrides") {
  CliFixture fx;
  const std::string base = (fx.dir.path() / "base").string();
  REQUIRE(run_cli(fx.train_args(base, "")) == 0);
  // reuse the emitted config verbatim, overriding only the seed
  const std::string out = (fx.dir.path() / "cfgrun").string();
  CHECK(run_cli("train --data " + fx.data + " --out " + out + " --config " + base +
                "/config.json --seed 4") == 0);
  const std::string csv = slurp(fs::path(out) / "metrics.csv");
  CHECK(csv.find("run-seed4,") != std::string::npos);
}

TEST_CASE("missing input files exit with the io code and no artifacts") {
  CliFixture fx;
  const std::string out = (fx.dir.path() / "evalmissing").string();
  CHECK(run_cli("eval --checkpoint " + (fx.dir.path() / "nope.bin").string() + " --data " +
                fx.data + " --out " + out) == 2);
  CHECK(!fs::exists(out));  // no partial outputs

  CHECK(run_cli("train --data " + (fx.dir.path() / "nothing.bin").string() + " --out " +
                (fx.dir.path() / "t").string() + " --epochs 1") == 2);
}

TEST_CASE("bad configuration values exit with the config code") {
  CliFixture fx;
  const std::string out = (fx.dir.path() / "bad").string();
  const std::string stem = "train --data " + fx.data + " --out " + out + " --epochs 1";
  CHECK(run_cli(stem + " --scheme warp") == 3);
  CHECK(run_cli(stem + " --batch 0") == 3);
  CHECK(run_cli(fx.train_args(out, "--l0 ce")) == 3);  // ce needs --classes
}

TEST_CASE("eval and zero-epoch fine-tune agree with training metrics") {
  CliFixture fx;
  const std::string run = (fx.dir.path() / "run").string();
  REQUIRE(run_cli(fx.train_args(run, "")) == 0);

  const std::string ev = (fx.dir.path() / "ev").string();
  REQUIRE(run_cli("eval --checkpoint " + run + "/checkpoint.bin --data " + fx.data +
                  " --out " + ev + " --run-id probe") == 0);
  CHECK(fs::exists(ev + "/metrics.csv"));
  CHECK(slurp(ev + "/metrics.csv").find("probe,eval,") != std::string::npos);

  // fine-tune for zero epochs, then evaluate both checkpoints identically
  const std::string ft = (fx.dir.path() / "ft0").string();
  REQUIRE(run_cli("fine-tune --checkpoint " + run + "/checkpoint.bin --data " + fx.data +
                  " --out " + ft + " --epochs 0") == 0);
  const std::string ev2 = (fx.dir.path() / "ev2").string();
  REQUIRE(run_cli("eval --checkpoint " + ft + "/checkpoint.bin --data " + fx.data +
                  " --out " + ev2 + " --run-id probe") == 0);
  CHECK(slurp(ev + "/metrics.csv") == slurp(ev2 + "/metrics.csv"));
}

TEST_CASE("fine-tune rejects an incompatible dataset") {
  CliFixture fx;
  const std::string run = (fx.dir.path() / "run").string();
  REQUIRE(run_cli(fx.train_args(run, "")) == 0);

  const std::string other = (fx.dir.path() / "other").string();
  REQUIRE(run_cli("gen-data --out " + other +
                  " --count 10 --min-nodes 4 --max-nodes 6 --relations 3 --seed 2") == 0);
  CHECK(run_cli("fine-tune --checkpoint " + run + "/checkpoint.bin --data " + other +
                "/dataset.bin --out " + (fx.dir.path() / "ftbad").string() +
                " --epochs 1") == 3);
}

TEST_CASE("divergence exits with its own code") {
  CliFixture fx;
  const std::string out = (fx.dir.path() / "boom").string();
  CHECK(run_cli(fx.train_args(out, "--lr 1e80")) == 7);
}

TEST_CASE("gradcheck and bound-check report success") {
  testutil::ScratchDir dir("ignn_cli_checks");
  CHECK(run_cli("gradcheck --seed 5 --seeds 1 --out " + (dir.path() / "gc").string()) == 0);
  CHECK(fs::exists(dir.path() / "gc" / "gradcheck.json"));
  CHECK(run_cli("bound-check --trials 25 --out " + (dir.path() / "bc").string()) == 0);
  CHECK(fs::exists(dir.path() / "bc" / "bound_check.json"));
}

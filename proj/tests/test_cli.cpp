#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rdsgan/config.hpp"
#include "rdsgan/corpus.hpp"

using namespace rdsgan;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd " + cwd.string() + " && " + RDSGAN_CLI_PATH + " " + args +
                          " > out.txt 2> err.txt";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "rdsgan_cli_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("run config parsing") {
  SUBCASE("defaults applied for absent keys") {
    auto cfg = parse_run_config_json(R"({"train_corpus": "x.jsonl"})", "inline");
    CHECK(cfg.train.batch_size == 160);
    CHECK(cfg.train.lr_g == doctest::Approx(1e-5));
    CHECK(cfg.train.lr_d == doctest::Approx(1e-4));
    CHECK(cfg.dims.word_dim == 50);
    CHECK(cfg.dims.pos_dim == 10);
    CHECK(cfg.dims.n_filters == 230);
    CHECK(cfg.dims.aligned_length == 120);
    CHECK(cfg.train.dropout_p == doctest::Approx(0.5));
  }
  SUBCASE("unknown top-level key rejected with its name") {
    try {
      parse_run_config_json(R"({"train_corpus": "x", "trian": "typo"})", "inline");
      FAIL("expected UsageError");
    } catch (const UsageError& e) {
      CHECK(std::string(e.what()).find("trian") != std::string::npos);
    }
  }
  SUBCASE("unknown nested key rejected") {
    CHECK_THROWS_AS(
        parse_run_config_json(R"({"train_corpus":"x","train":{"learning_rate":1}})", "inline"),
        UsageError);
  }
  SUBCASE("wrong value type rejected") {
    CHECK_THROWS_AS(parse_run_config_json(R"({"train_corpus": 5})", "inline"), UsageError);
  }
  SUBCASE("resolved dump parses back to the same values") {
    auto cfg = parse_run_config_json(
        R"({"train_corpus":"a.jsonl","output_dir":"r","train":{"lr_g":0.25,"seed":9}})",
        "inline");
    auto round = parse_run_config_json(dump_run_config(cfg), "dump");
    CHECK(round.train.lr_g == doctest::Approx(0.25));
    CHECK(round.train.seed == 9);
    CHECK(round.output_dir == "r");
  }
  SUBCASE("invalid values rejected at validation") {
    auto cfg = parse_run_config_json(R"({"train_corpus":"x","train":{"lr_g":0.0}})", "inline");
    CHECK_THROWS_AS(cfg.validate_for_training(), ShapeError);
  }
}

TEST_CASE("cli exit codes") {
  auto dir = work_dir();

  SUBCASE("--help exits 0 and lists subcommands") {
    CHECK(run_cli("--help", dir) == 0);
    auto text = slurp(dir / "out.txt");
    for (auto name : {"convert", "synth", "train", "eval", "generate", "gradcheck"}) {
      CHECK(text.find(name) != std::string::npos);
    }
  }
  SUBCASE("subcommand --help lists flags with defaults") {
    CHECK(run_cli("synth --help", dir) == 0);
    auto text = slurp(dir / "out.txt");
    CHECK(text.find("--noise") != std::string::npos);
    CHECK(text.find("--seed") != std::string::npos);
  }
  SUBCASE("no subcommand is a usage error") { CHECK(run_cli("", dir) == 1); }
  SUBCASE("eval without a trained run exits 1") {
    std::ofstream(dir / "cfg.json") << R"({"train_corpus":"t.jsonl","output_dir":"no_such_run"})";
    CHECK(run_cli("eval --config cfg.json", dir) == 1);
    CHECK(slurp(dir / "err.txt").find("train") != std::string::npos);
  }
  SUBCASE("convert on a missing file exits 2") {
    CHECK(run_cli("convert --in missing.tsv --out o.jsonl", dir) == 2);
  }
  SUBCASE("bad config key exits 1") {
    std::ofstream(dir / "bad.json") << R"({"train_corpus":"t.jsonl","oops":1})";
    CHECK(run_cli("train --config bad.json", dir) == 1);
  }
  SUBCASE("synth with noise rate 1 exits 1") {
    CHECK(run_cli("synth --out s.jsonl --noise 1.0", dir) == 1);
  }
}

TEST_CASE("convert and synth are byte-stable") {
  auto dir = work_dir();
  REQUIRE(run_cli("synth --out a.jsonl --n-relations 3 --n-pairs 10 --seed 4", dir) == 0);
  REQUIRE(run_cli("synth --out b.jsonl --n-relations 3 --n-pairs 10 --seed 4", dir) == 0);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(slurp(dir / "a.jsonl.noise.jsonl") == slurp(dir / "b.jsonl.noise.jsonl"));

  REQUIRE(run_cli("synth --out c.tsv --format tsv --n-pairs 8 --seed 6", dir) == 0);
  REQUIRE(run_cli("convert --in c.tsv --out c1.jsonl", dir) == 0);
  REQUIRE(run_cli("convert --in c.tsv --out c2.jsonl", dir) == 0);
  CHECK(slurp(dir / "c1.jsonl") == slurp(dir / "c2.jsonl"));
}

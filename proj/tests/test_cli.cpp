#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "star/data_io.hpp"

namespace fs = std::filesystem;

namespace {
struct Workspace {
  fs::path root = fs::temp_directory_path() / "star_cli_test";
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    star::write_text_file(path("spec.json"),
                          R"({"blocks":4,"nodes_per_block":30,"p_in":0.2,"p_out":0.01,"feature_dim":8,"seed":2})");
    star::write_text_file(path("cfg.json"),
                          R"({"max_epochs":10,"n_way":3,"k_shot":2,"episodes":4,"repetitions":1})");
  }
  ~Workspace() { fs::remove_all(root); }
  std::string path(const std::string& f) const { return (root / f).string(); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(STAR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

nlohmann::json read_json(const std::string& p) { return nlohmann::json::parse(star::read_text_file(p)); }
}  // namespace

TEST_CASE("end to end through the command line") {
  Workspace w;
  REQUIRE(run("synth --spec " + w.path("spec.json") + " --out " + w.path("data")) == 0);
  CHECK(fs::exists(w.path("data/features.tsv")));
  CHECK(fs::exists(w.path("data/splits.json")));

  REQUIRE(run("pretrain --quiet --data " + w.path("data") + " --config " + w.path("cfg.json") + " --out " +
              w.path("ckpt")) == 0);
  CHECK(fs::exists(w.path("ckpt/params.bin")));
  CHECK(read_json(w.path("ckpt/train.json")).contains("loss_history"));

  REQUIRE(run("embed --data " + w.path("data") + " --ckpt " + w.path("ckpt") + " --out " + w.path("z.tsv")) == 0);
  const star::Matrix z = star::load_embeddings(w.path("z.tsv"));
  CHECK(z.rows() == 120);
  CHECK(z.cols() == 32);

  REQUIRE(run("eval --data " + w.path("data") + " --emb " + w.path("z.tsv") + " --config " + w.path("cfg.json") +
              " --out " + w.path("m.json")) == 0);
  auto m = read_json(w.path("m.json"));
  CHECK(m["n_way"] == 3);
  CHECK(m["episodes"] == 4);
  CHECK(fs::exists(w.path("m.episodes.csv")));

  SUBCASE("flags override the config") {
    REQUIRE(run("eval --data " + w.path("data") + " --emb " + w.path("z.tsv") + " --config " + w.path("cfg.json") +
                " --n 2 --episodes 3 --no-set --out " + w.path("m2.json")) == 0);
    m = read_json(w.path("m2.json"));
    CHECK(m["n_way"] == 2);
    CHECK(m["episodes"] == 3);
    CHECK(m["k_shot"] == 2);
    CHECK(m["ablation"]["no_set"] == true);
  }
  SUBCASE("diagnostics") {
    REQUIRE(run("diag --data " + w.path("data") + " --emb " + w.path("z.tsv") + " --config " + w.path("cfg.json") +
                " --episodes 2 --out " + w.path("d.json")) == 0);
    CHECK(read_json(w.path("d.json")).contains("retrieval_purity"));
  }
  SUBCASE("failures exit nonzero") {
    CHECK(run("") != 0);
    CHECK(run("eval --data " + w.path("nowhere") + " --emb " + w.path("z.tsv") + " --out " + w.path("x.json")) != 0);
    CHECK(run("eval --data " + w.path("data") + " --emb " + w.path("z.tsv") + " --n 9 --out " + w.path("x.json")) !=
          0);
    CHECK_FALSE(fs::exists(w.path("x.json")));
    star::write_text_file(w.path("bad.json"), R"({"temperature":0})");
    CHECK(run("pretrain --data " + w.path("data") + " --config " + w.path("bad.json") + " --out " +
              w.path("ckpt2")) != 0);
  }
}

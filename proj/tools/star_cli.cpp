// Command-line front end; talks to the library only through star.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "star/star.h"

namespace {

struct CliError {
  int code;
  std::string message;
};

void check(star_status status, const char* what) {
  if (status != STAR_OK)
    throw CliError{static_cast<int>(status),
                   std::string(what) + ": " + star_status_string(status) + ": " + star_last_error()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{2, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError{2, "cannot write '" + path + "'"};
  out << text;
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<star_config, Deleter<star_config, star_config_free>>;
using DatasetPtr = std::unique_ptr<star_dataset, Deleter<star_dataset, star_dataset_free>>;
using ModelPtr = std::unique_ptr<star_model, Deleter<star_model, star_model_free>>;
using EmbeddingPtr = std::unique_ptr<star_embedding, Deleter<star_embedding, star_embedding_free>>;

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { star_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

ConfigPtr load_config(const std::string& path) {
  star_config* cfg = nullptr;
  if (path.empty())
    check(star_config_create(&cfg), "config");
  else
    check(star_config_from_json(read_file(path).c_str(), &cfg), ("config " + path).c_str());
  return ConfigPtr(cfg);
}

DatasetPtr load_dataset(const std::string& dir) {
  star_dataset* ds = nullptr;
  check(star_dataset_load(dir.c_str(), &ds), ("dataset " + dir).c_str());
  return DatasetPtr(ds);
}

EmbeddingPtr load_embedding(const std::string& path) {
  star_embedding* emb = nullptr;
  check(star_embedding_load(path.c_str(), &emb), ("embedding " + path).c_str());
  return EmbeddingPtr(emb);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STAR: unsupervised graph few-shot node classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", star_version());

  std::string spec_path, data_dir, config_path, out_path, ckpt_dir, emb_path, format = "auto";
  std::size_t n_way = 0, k_shot = 0, q_query = 0, episodes = 0, reps = 0, shift_episodes = 50;
  bool no_ot = false, no_set = false, no_instance = false, quiet = false;

  auto* synth = app.add_subcommand("synth", "Generate a stochastic block model dataset directory");
  synth->add_option("--spec", spec_path, "SBM spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_path, "Output dataset directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "Contrastive pretraining on an unlabeled graph");
  pretrain->add_option("--data", data_dir, "Dataset directory")->required();
  pretrain->add_option("--config", config_path, "Run configuration JSON");
  pretrain->add_option("--out", out_path, "Checkpoint directory")->required();
  pretrain->add_flag("--quiet", quiet, "Suppress the training summary");

  auto* embed = app.add_subcommand("embed", "Build final node embeddings Z from a checkpoint");
  embed->add_option("--data", data_dir, "Dataset directory")->required();
  embed->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  embed->add_option("--out", out_path, "Embedding file (.bin or .tsv)")->required();
  embed->add_option("--format", format, "binary, tsv or auto (by extension)")
      ->check(CLI::IsMember({"auto", "binary", "tsv"}));

  auto* eval = app.add_subcommand("eval", "Episodic N-way K-shot evaluation");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--emb", emb_path, "Embedding file")->required();
  eval->add_option("--config", config_path, "Run configuration JSON");
  // Given flags override the config file; absent ones leave it alone.
  const std::vector<std::pair<const char*, CLI::Option*>> eval_overrides{
      {"n_way", eval->add_option("--n", n_way, "Classes per episode (N)")},
      {"k_shot", eval->add_option("--k", k_shot, "Support nodes per class (K)")},
      {"q_query", eval->add_option("--q", q_query, "Query nodes per class (Q)")},
      {"episodes", eval->add_option("--episodes", episodes, "Episodes per repetition")},
      {"repetitions", eval->add_option("--reps", reps, "Repetitions")},
  };
  eval->add_flag("--no-ot", no_ot, "Train on raw support embeddings");
  eval->add_flag("--no-set", no_set, "Drop the set block of Z");
  eval->add_flag("--no-instance", no_instance, "Drop the instance block of Z");
  eval->add_option("--out", out_path, "metrics.json path")->required();

  auto* diag = app.add_subcommand("diag", "Retrieval purity, shift diagnostic and 2-D projection");
  diag->add_option("--data", data_dir, "Dataset directory")->required();
  diag->add_option("--emb", emb_path, "Embedding file")->required();
  diag->add_option("--config", config_path, "Run configuration JSON");
  diag->add_option("--episodes", shift_episodes, "Episodes for the shift diagnostic");
  diag->add_option("--out", out_path, "diag.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      star_dataset* ds = nullptr;
      check(star_dataset_synth(read_file(spec_path).c_str(), &ds), "synth");
      DatasetPtr owned(ds);
      check(star_dataset_save(ds, out_path.c_str()), "save dataset");
      std::size_t n = 0, m = 0;
      star_dataset_num_nodes(ds, &n);
      star_dataset_num_edges(ds, &m);
      std::cerr << "wrote " << out_path << " (" << n << " nodes, " << m << " edges)\n";
    } else if (*pretrain) {
      auto cfg = load_config(config_path);
      auto ds = load_dataset(data_dir);
      star_model* model = nullptr;
      check(star_model_pretrain(ds.get(), cfg.get(), &model), "pretrain");
      ModelPtr owned(model);
      check(star_model_save(model, out_path.c_str()), "save checkpoint");
      if (!quiet) {
        std::size_t epochs = 0;
        double last = 0.0;
        star_model_epochs(model, &epochs);
        if (epochs > 0) star_model_loss(model, epochs - 1, &last);
        std::cerr << "trained " << epochs << " epochs, final loss " << last << ", checkpoint "
                  << out_path << "\n";
      }
    } else if (*embed) {
      auto ds = load_dataset(data_dir);
      star_model* model = nullptr;
      check(star_model_load(ckpt_dir.c_str(), &model), "load checkpoint");
      ModelPtr owned_model(model);
      star_embedding* emb = nullptr;
      check(star_embed(model, ds.get(), &emb), "embed");
      EmbeddingPtr owned(emb);
      const bool tsv = format == "tsv" || (format == "auto" && ends_with(out_path, ".tsv"));
      check(star_embedding_save(emb, out_path.c_str(), tsv ? STAR_EMBEDDING_TSV : STAR_EMBEDDING_BINARY),
            "save embedding");
    } else if (*eval) {
      if (no_set && no_instance) throw CliError{1, "--no-set and --no-instance are exclusive"};
      auto cfg = load_config(config_path);
      std::ostringstream patch;
      patch << "{";
      for (const auto& [key, opt] : eval_overrides)
        if (opt->count() > 0) patch << "\"" << key << "\":" << opt->as<std::size_t>() << ",";
      if (no_ot) patch << "\"no_ot\":true,";
      std::string body = patch.str();
      if (body.size() > 1) body.pop_back();
      body += "}";
      check(star_config_update(cfg.get(), body.c_str()), "eval options");
      auto ds = load_dataset(data_dir);
      auto emb = load_embedding(emb_path);
      const star_block_mask blocks =
          no_set ? STAR_BLOCKS_DROP_SET : (no_instance ? STAR_BLOCKS_DROP_INSTANCE : STAR_BLOCKS_ALL);
      OwnedString json;
      check(star_evaluate(emb.get(), ds.get(), cfg.get(), blocks, out_path.c_str(), &json.ptr), "eval");
      std::cout << json.str() << "\n";
    } else if (*diag) {
      auto cfg = load_config(config_path);
      auto ds = load_dataset(data_dir);
      auto emb = load_embedding(emb_path);
      OwnedString json;
      check(star_diagnose(emb.get(), ds.get(), cfg.get(), shift_episodes, &json.ptr), "diag");
      write_file(out_path, json.str() + "\n");
    }
  } catch (const CliError& e) {
    std::cerr << "star: " << e.message << "\n";
    return e.code == 0 ? 1 : e.code;
  }
  return 0;
}

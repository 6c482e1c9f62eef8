#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "star/episodes.hpp"
#include "star/graph.hpp"
#include "star/matrix.hpp"

namespace star {

// Directory layout: features.tsv, edges.tsv, labels.tsv, splits.json.
struct Dataset {
  Graph graph;
  ClassSplit split;
  std::size_t dropped_self_loops = 0;
};

// features.tsv and edges.tsv are required; labels.tsv and splits.json are
// read when present (splits.json requires labels.tsv).
Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& dataset, const std::string& dir);

ClassSplit parse_split_json(const std::string& text, const std::string& origin = "splits.json");
std::string split_to_json(const ClassSplit& split);

struct SbmSpec {
  std::size_t blocks = 5;
  std::size_t nodes_per_block = 200;
  double p_in = 0.05;
  double p_out = 0.005;
  std::size_t feature_dim = 32;
  double separation = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 0;
};

void validate(const SbmSpec& spec);
SbmSpec parse_sbm_spec(const std::string& json_text);
std::string sbm_spec_to_json(const SbmSpec& spec);

// Labels are block ids; node i belongs to block i / nodes_per_block.
Graph generate_sbm(const SbmSpec& spec);

struct EvalMetrics {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_query = 0;
  std::size_t episodes = 0;
  std::size_t repetitions = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;            // over all pooled episodes
  double std_across_repetitions = 0.0;  // over repetition means
  std::vector<double> repetition_means;
  std::vector<double> repetition_stds;
  std::vector<double> episode_accuracies;  // repetition-major
  std::map<std::string, bool> ablation;
  std::string config_json = "{}";

  friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

std::string metrics_to_json(const EvalMetrics& m);
EvalMetrics metrics_from_json(const std::string& text);

// Writes `path` (JSON) and `<path without .json>.episodes.csv`.
void export_results(const EvalMetrics& m, const std::string& path);
EvalMetrics read_results(const std::string& path);

enum class EmbeddingFormat { binary, tsv };

// Binary uses the checkpoint tensor format with a single tensor "Z".
void export_embeddings(const Matrix& z, const std::string& path, EmbeddingFormat format,
                       const std::string& meta_json = "{}");
// Format chosen by extension: ".tsv" is text, anything else binary.
Matrix load_embeddings(const std::string& path, std::string* meta_json = nullptr);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace star

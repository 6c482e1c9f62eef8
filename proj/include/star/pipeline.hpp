#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "star/augment.hpp"
#include "star/classifier.hpp"
#include "star/data_io.hpp"
#include "star/episodes.hpp"
#include "star/graph.hpp"
#include "star/nn.hpp"
#include "star/set_encoder.hpp"
#include "star/transport.hpp"

namespace star {

struct RunConfig {
  double edge_drop_ratio = 0.2;
  double feature_mask_ratio = 0.2;
  std::uint64_t seed = 0;

  std::size_t layers = 2;
  std::size_t embed_dim = 16;   // d'
  std::size_t hidden_dim = 16;  // projector / set MLP hidden width
  std::size_t proj_dim = 16;    // projector output width
  double temperature = kDefaultTemperature;
  std::size_t top_k = kDefaultTopK;
  bool symmetric_sets = false;

  double learning_rate = 0.001;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  double min_delta = 1e-3;

  double ot_epsilon = 0.1;
  double ot_tol = 1e-6;
  std::size_t ot_max_iter = 1000;
  bool raw_plan_transport = false;

  double clf_l2 = 1e-3;
  std::size_t clf_epochs = 500;
  double clf_lr = 0.01;

  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t q_query = kDefaultQueryPerClass;
  std::size_t episodes = 50;
  std::size_t repetitions = 5;

  bool no_instance = false;
  bool no_set = false;
  bool no_ot = false;
  bool retrieve_on_original = false;
};

void validate(const RunConfig& cfg);
std::string config_to_json(const RunConfig& cfg);
// Keys absent from the JSON keep their current values in `base`; unknown keys
// are rejected.
RunConfig config_from_json(const std::string& text, const RunConfig& base = {});

// Trainable parameters: SGC weight, instance projector, DeepSets MLP, set
// projector.
struct EncoderStack {
  nn::Linear encoder;
  nn::MlpProjector instance_projector;
  DeepSetsEncoder set_function;
  nn::MlpProjector set_projector;

  static EncoderStack create(std::size_t feature_dim, const RunConfig& cfg);
  std::vector<nn::Tensor> parameters() const;
  std::vector<nn::NamedTensor> named_tensors() const;
  static EncoderStack from_named_tensors(const std::vector<nn::NamedTensor>& tensors);
};

struct EpochLoss {
  double instance = 0.0;
  double set = 0.0;
  double total = 0.0;
};

struct TrainResult {
  EncoderStack params;
  std::vector<EpochLoss> history;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

// Combined loss for one pair of views; exposed for gradient checks.
struct ViewPair {
  Matrix propagated1;  // A1^l X1
  Matrix propagated2;
  Matrix original;     // A^l X, used only with retrieve_on_original
};

ViewPair make_views(const Graph& g, const RunConfig& cfg, std::uint64_t epoch);

struct StepLosses {
  nn::Tensor instance;
  nn::Tensor set;
  nn::Tensor total;
};
StepLosses training_losses(const EncoderStack& params, const ViewPair& views, const RunConfig& cfg);

using EpochCallback = std::function<void(std::size_t, const EpochLoss&)>;
TrainResult meta_train(const Graph& g, const RunConfig& cfg, const EpochCallback& on_epoch = {});

struct EmbeddingMeta {
  std::size_t instance_dim = 0;
  std::size_t set_dim = 0;
  std::size_t top_k = 0;
  std::size_t layers = 0;
};
std::string embedding_meta_to_json(const EmbeddingMeta& meta);
EmbeddingMeta embedding_meta_from_json(const std::string& text, std::size_t total_cols);

// Z = H~ || S~ (or H~ alone when cfg.no_set).
FinalEmbeddings embed(const Graph& g, const EncoderStack& params, const RunConfig& cfg);
EmbeddingMeta embedding_meta(const RunConfig& cfg, const FinalEmbeddings& e);

// ---- meta-test ---------------------------------------------------------

struct EpisodeOutcome {
  double accuracy = 0.0;
  std::size_t ot_iterations = 0;
  bool ot_converged = true;
};

// One task: optional OT calibration, classifier training, query prediction.
EpisodeOutcome evaluate_episode(const Matrix& z, const Episode& ep, const RunConfig& cfg);

Episode episode_for(std::span<const int> labels, std::span<const int> classes, const RunConfig& cfg,
                    std::size_t repetition, std::size_t index);

EvalMetrics meta_test(const Matrix& z, std::span<const int> labels, const ClassSplit& split,
                      const RunConfig& cfg);

// Nearest class centroid on the given features over the same seeded episodes
// that meta_test draws.
EvalMetrics nearest_centroid_baseline(const Matrix& features, std::span<const int> labels,
                                      const ClassSplit& split, const RunConfig& cfg);

// ---- diagnostics ------------------------------------------------------

// V-statistic energy distance with Euclidean distances:
// 2 E|x-y| - E|x-x'| - E|y-y'|.
double energy_distance(const Matrix& a, const Matrix& b);

struct ShiftDiagnostic {
  double before = 0.0;
  double after = 0.0;
};
ShiftDiagnostic shift_diagnostic(const Matrix& support, const Matrix& query, const Matrix& transported);

// Top-2 principal components via power iteration with deflation; returns
// the centered data projected onto them (n x 2).
Matrix pca_project_2d(const Matrix& x, std::size_t iterations = 500);

struct Diagnostics {
  double retrieval_purity = 0.0;
  double median_energy_before = 0.0;
  double median_energy_after = 0.0;
  std::vector<ShiftDiagnostic> shifts;
  Matrix projection;
};

Diagnostics diagnose(const Matrix& z, const EmbeddingMeta& meta, std::span<const int> labels,
                     const ClassSplit& split, const RunConfig& cfg, std::size_t shift_episodes);
std::string diagnostics_to_json(const Diagnostics& d, std::span<const int> labels);

double median(std::vector<double> values);

}  // namespace star

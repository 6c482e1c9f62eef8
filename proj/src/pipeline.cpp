#include "star/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "star/contrastive.hpp"
#include "star/error.hpp"

namespace star {

using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 0x1717;
constexpr std::uint64_t kEpisodeStream = 0xe915;

template <typename Config, typename Visitor>
void visit_fields(Config& c, Visitor&& v) {
  v("edge_drop_ratio", c.edge_drop_ratio);
  v("feature_mask_ratio", c.feature_mask_ratio);
  v("seed", c.seed);
  v("layers", c.layers);
  v("embed_dim", c.embed_dim);
  v("hidden_dim", c.hidden_dim);
  v("proj_dim", c.proj_dim);
  v("temperature", c.temperature);
  v("top_k", c.top_k);
  v("symmetric_sets", c.symmetric_sets);
  v("learning_rate", c.learning_rate);
  v("max_epochs", c.max_epochs);
  v("patience", c.patience);
  v("min_delta", c.min_delta);
  v("ot_epsilon", c.ot_epsilon);
  v("ot_tol", c.ot_tol);
  v("ot_max_iter", c.ot_max_iter);
  v("raw_plan_transport", c.raw_plan_transport);
  v("clf_l2", c.clf_l2);
  v("clf_epochs", c.clf_epochs);
  v("clf_lr", c.clf_lr);
  v("n_way", c.n_way);
  v("k_shot", c.k_shot);
  v("q_query", c.q_query);
  v("episodes", c.episodes);
  v("repetitions", c.repetitions);
  v("no_instance", c.no_instance);
  v("no_set", c.no_set);
  v("no_ot", c.no_ot);
  v("retrieve_on_original", c.retrieve_on_original);
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

void validate(const RunConfig& c) {
  validate(AugmentConfig{c.edge_drop_ratio, c.feature_mask_ratio, c.seed});
  require(c.embed_dim >= 1 && c.hidden_dim >= 1 && c.proj_dim >= 1, "dimensions must be positive");
  require(c.temperature > 0.0, "temperature must be positive");
  require(c.top_k >= 2 && c.top_k % 2 == 0, "top_k must be an even number >= 2");
  require(c.learning_rate > 0.0, "learning_rate must be positive");
  require(c.max_epochs >= 1, "max_epochs must be positive");
  require(c.min_delta >= 0.0, "min_delta must be non-negative");
  require(c.ot_epsilon > 0.0, "ot_epsilon must be positive");
  require(c.ot_tol > 0.0, "ot_tol must be positive");
  require(c.ot_max_iter >= 1, "ot_max_iter must be positive");
  require(c.clf_l2 >= 0.0, "clf_l2 must be non-negative");
  require(c.clf_lr > 0.0, "clf_lr must be positive");
  require(c.n_way >= 1 && c.k_shot >= 1 && c.q_query >= 1, "n_way, k_shot, q_query must be >= 1");
  require(!(c.no_instance && c.no_set), "no_instance and no_set together leave nothing to train");
}

std::string config_to_json(const RunConfig& cfg) {
  json j = json::object();
  visit_fields(cfg, [&](const char* key, const auto& value) { j[key] = value; });
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::parse, "config: expected a JSON object");
  RunConfig cfg = base;
  std::size_t matched = 0;
  visit_fields(cfg, [&](const char* key, auto& value) {
    if (!j.contains(key)) return;
    ++matched;
    try {
      using T = std::decay_t<decltype(value)>;
      if constexpr (std::is_same_v<T, bool>) {
        if (!j[key].is_boolean()) fail(ErrorCode::parse, std::string("config: '") + key + "' must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!j[key].is_number_integer() || j[key].get<long long>() < 0)
          fail(ErrorCode::parse, std::string("config: '") + key + "' must be a non-negative integer");
      } else {
        if (!j[key].is_number()) fail(ErrorCode::parse, std::string("config: '") + key + "' must be a number");
      }
      value = j[key].get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, std::string("config: '") + key + "': " + e.what());
    }
  });
  if (matched != j.size()) {
    for (const auto& [key, _] : j.items()) {
      bool known = false;
      visit_fields(cfg, [&](const char* k, auto&) { known = known || key == k; });
      if (!known) fail(ErrorCode::parse, "config: unknown key '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

// ---- parameters -------------------------------------------------------

EncoderStack EncoderStack::create(std::size_t feature_dim, const RunConfig& cfg) {
  Rng rng = Rng::stream(cfg.seed, {kInitStream});
  EncoderStack s;
  s.encoder = nn::Linear::create(feature_dim, cfg.embed_dim, rng);
  s.instance_projector = nn::MlpProjector::create(cfg.embed_dim, cfg.hidden_dim, cfg.proj_dim, rng);
  s.set_function.mlp = nn::MlpProjector::create(cfg.embed_dim, cfg.hidden_dim, cfg.embed_dim, rng);
  s.set_projector = nn::MlpProjector::create(cfg.embed_dim, cfg.hidden_dim, cfg.proj_dim, rng);
  return s;
}

std::vector<nn::Tensor> EncoderStack::parameters() const {
  std::vector<nn::Tensor> out{encoder.weight};
  for (const auto* m : {&instance_projector, &set_function.mlp, &set_projector})
    for (const auto& p : m->parameters()) out.push_back(p);
  return out;
}

std::vector<nn::NamedTensor> EncoderStack::named_tensors() const {
  std::vector<nn::NamedTensor> out{{"encoder.weight", encoder.weight.value()}};
  const std::pair<const char*, const nn::MlpProjector*> mlps[] = {
      {"instance_projector", &instance_projector},
      {"set_function", &set_function.mlp},
      {"set_projector", &set_projector}};
  for (const auto& [prefix, m] : mlps) {
    const std::string p(prefix);
    out.push_back({p + ".w1", m->w1.value()});
    out.push_back({p + ".b1", m->b1.value()});
    out.push_back({p + ".w2", m->w2.value()});
    out.push_back({p + ".b2", m->b2.value()});
  }
  return out;
}

EncoderStack EncoderStack::from_named_tensors(const std::vector<nn::NamedTensor>& tensors) {
  auto find = [&](const std::string& name) {
    for (const auto& t : tensors)
      if (t.name == name) return nn::parameter(t.value);
    fail(ErrorCode::parse, "checkpoint is missing tensor '" + name + "'");
  };
  auto mlp = [&](const std::string& p) {
    nn::MlpProjector m{find(p + ".w1"), find(p + ".b1"), find(p + ".w2"), find(p + ".b2")};
    require(m.b1.cols() == m.w1.cols() && m.w2.rows() == m.w1.cols() && m.b2.cols() == m.w2.cols(),
            "checkpoint tensors for '" + p + "' have inconsistent shapes");
    return m;
  };
  EncoderStack s;
  s.encoder.weight = find("encoder.weight");
  s.instance_projector = mlp("instance_projector");
  s.set_function.mlp = mlp("set_function");
  s.set_projector = mlp("set_projector");
  return s;
}

// ---- meta-training ----------------------------------------------------

ViewPair make_views(const Graph& g, const RunConfig& cfg, std::uint64_t epoch) {
  const AugmentConfig aug{cfg.edge_drop_ratio, cfg.feature_mask_ratio, cfg.seed};
  ViewPair v;
  const Graph g1 = augment_view(g, aug, epoch, 0);
  const Graph g2 = augment_view(g, aug, epoch, 1);
  v.propagated1 = propagate(normalize_adjacency(g1), g1.features, cfg.layers);
  v.propagated2 = propagate(normalize_adjacency(g2), g2.features, cfg.layers);
  if (cfg.retrieve_on_original) v.original = propagate(normalize_adjacency(g), g.features, cfg.layers);
  return v;
}

StepLosses training_losses(const EncoderStack& p, const ViewPair& views, const RunConfig& cfg) {
  const nn::Tensor h1 = p.encoder.forward(nn::constant(views.propagated1));
  const nn::Tensor h2 = p.encoder.forward(nn::constant(views.propagated2));
  const std::size_t n = h1.rows();

  StepLosses out;
  if (!cfg.no_instance) {
    const nn::Tensor projected = nn::l2_normalize_rows(p.instance_projector.forward(nn::vstack(h1, h2)));
    out.instance = infonce_loss(projected, cross_view_partners(n), cfg.temperature);
  }
  if (!cfg.no_set) {
    require(cfg.top_k <= n, "top_k (" + std::to_string(cfg.top_k) + ") exceeds node count (" +
                                std::to_string(n) + ")");
    const nn::Tensor members =
        cfg.retrieve_on_original ? p.encoder.forward(nn::constant(views.original)) : h2;
    SetBatch forward =
        set_branch_forward(h1.value(), members, p.set_function, p.set_projector, cfg.top_k);
    if (cfg.symmetric_sets) {
      const nn::Tensor back_members =
          cfg.retrieve_on_original ? members : h1;
      const Matrix& back_anchors = h2.value();
      SetBatch backward =
          set_branch_forward(back_anchors, back_members, p.set_function, p.set_projector, cfg.top_k);
      const std::size_t offset = forward.partner.size();
      for (std::size_t q : backward.partner) forward.partner.push_back(q + offset);
      forward.embeddings = nn::vstack(forward.embeddings, backward.embeddings);
    }
    out.set = infonce_loss(forward.embeddings, std::move(forward.partner), cfg.temperature);
  }
  if (out.instance.defined() && out.set.defined())
    out.total = nn::add(out.instance, out.set);
  else
    out.total = out.instance.defined() ? out.instance : out.set;
  return out;
}

TrainResult meta_train(const Graph& g, const RunConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  validate(g);
  require(g.n >= 1, "cannot train on an empty graph");

  TrainResult result{EncoderStack::create(g.feature_dim(), cfg), {}, 0, false};
  nn::Adam adam(result.params.parameters(), nn::AdamOptions{.lr = cfg.learning_rate});

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const ViewPair views = make_views(g, cfg, epoch);
    StepLosses losses;
    try {
      losses = training_losses(result.params, views, cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric) throw;
      fail(ErrorCode::numeric, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }

    EpochLoss record;
    record.instance = losses.instance.defined() ? losses.instance.item() : 0.0;
    record.set = losses.set.defined() ? losses.set.item() : 0.0;
    record.total = losses.total.item();
    if (!std::isfinite(record.total))
      fail(ErrorCode::numeric, "training diverged: non-finite loss at epoch " + std::to_string(epoch));
    result.history.push_back(record);
    if (on_epoch) on_epoch(epoch, record);

    adam.zero_grad();
    nn::backward(losses.total);
    adam.step();
    for (const nn::Tensor& t : adam.parameters())
      if (!all_finite(t.value()))
        fail(ErrorCode::numeric, "training diverged: non-finite parameters after epoch " + std::to_string(epoch));

    if (!std::isfinite(best) || record.total < best - cfg.min_delta * std::abs(best)) {
      best = record.total;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

// ---- embeddings ---------------------------------------------------------

std::string embedding_meta_to_json(const EmbeddingMeta& m) {
  return json{{"instance_dim", m.instance_dim},
              {"set_dim", m.set_dim},
              {"top_k", m.top_k},
              {"layers", m.layers}}
      .dump();
}

EmbeddingMeta embedding_meta_from_json(const std::string& text, std::size_t total_cols) {
  EmbeddingMeta m;
  try {
    const json j = json::parse(text.empty() ? "{}" : text);
    m.instance_dim = j.value("instance_dim", total_cols);
    m.set_dim = j.value("set_dim", std::size_t{0});
    m.top_k = j.value("top_k", std::size_t{0});
    m.layers = j.value("layers", std::size_t{0});
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("embedding metadata: ") + e.what());
  }
  require(m.instance_dim + m.set_dim == total_cols,
          "embedding metadata block widths do not add up to the column count");
  return m;
}

FinalEmbeddings embed(const Graph& g, const EncoderStack& params, const RunConfig& cfg) {
  return build_final_embeddings(g, params.encoder, cfg.no_set ? nullptr : &params.set_function,
                                cfg.layers, cfg.top_k);
}

EmbeddingMeta embedding_meta(const RunConfig& cfg, const FinalEmbeddings& e) {
  return {e.instance.cols(), e.set.cols(), cfg.no_set ? 0 : cfg.top_k, cfg.layers};
}

// ---- meta-test ---------------------------------------------------------

Episode episode_for(std::span<const int> labels, std::span<const int> classes, const RunConfig& cfg,
                    std::size_t repetition, std::size_t index) {
  Rng rng = Rng::stream(cfg.seed, {kEpisodeStream, repetition, index});
  return sample_episode(labels, classes, cfg.n_way, cfg.k_shot, cfg.q_query, rng);
}

EpisodeOutcome evaluate_episode(const Matrix& z, const Episode& ep, const RunConfig& cfg) {
  const Matrix support = gather_rows(z, ep.support_ids);
  const Matrix query = gather_rows(z, ep.query_ids);
  const Matrix support_labels = one_hot(ep.support_classes, ep.n_way);
  const ClassifierOptions clf{cfg.clf_l2, cfg.clf_epochs, cfg.clf_lr};

  EpisodeOutcome out;
  LinearClassifier model;
  if (cfg.no_ot) {
    model = train_soft(support, support_labels, clf);
  } else {
    const TransportPlan plan =
        sinkhorn(pairwise_cost(support, query), {cfg.ot_epsilon, cfg.ot_tol, cfg.ot_max_iter});
    out.ot_iterations = plan.iterations;
    out.ot_converged = plan.converged;
    const TransportedSupport moved =
        transport_support(plan, support, support_labels, cfg.raw_plan_transport);
    model = train_soft(moved.embeddings, moved.labels, clf);
  }
  out.accuracy = accuracy(predict(model, query).labels, ep.query_classes);
  return out;
}

namespace {

EvalMetrics summarize(std::vector<double> accuracies, const RunConfig& cfg) {
  EvalMetrics m;
  m.n_way = cfg.n_way;
  m.k_shot = cfg.k_shot;
  m.q_query = cfg.q_query;
  m.episodes = cfg.episodes;
  m.repetitions = cfg.repetitions;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    const std::span<const double> block(accuracies.data() + r * cfg.episodes, cfg.episodes);
    m.repetition_means.push_back(mean_of(block));
    m.repetition_stds.push_back(std_of(block));
  }
  m.mean_accuracy = mean_of(accuracies);
  m.std_accuracy = std_of(accuracies);
  m.std_across_repetitions = std_of(m.repetition_means);
  m.episode_accuracies = std::move(accuracies);
  m.ablation = {{"no_instance", cfg.no_instance},
                {"no_set", cfg.no_set},
                {"no_ot", cfg.no_ot},
                {"retrieve_on_original", cfg.retrieve_on_original}};
  m.config_json = json::parse(config_to_json(cfg)).dump();
  return m;
}

template <typename EpisodeFn>
EvalMetrics run_episodes(std::span<const int> labels, const ClassSplit& split, const RunConfig& cfg,
                         EpisodeFn&& fn) {
  validate(cfg);
  validate(split, labels);
  require(!split.test.empty(), "split has no test classes");
  std::vector<double> acc;
  acc.reserve(cfg.repetitions * cfg.episodes);
  for (std::size_t r = 0; r < cfg.repetitions; ++r)
    for (std::size_t e = 0; e < cfg.episodes; ++e)
      acc.push_back(fn(episode_for(labels, split.test, cfg, r, e)));
  return summarize(std::move(acc), cfg);
}

}  // namespace

EvalMetrics meta_test(const Matrix& z, std::span<const int> labels, const ClassSplit& split,
                      const RunConfig& cfg) {
  require(z.rows() == labels.size(), "embedding rows do not match label count");
  require(all_finite(z), "embeddings contain non-finite values");
  return run_episodes(labels, split, cfg,
                      [&](const Episode& ep) { return evaluate_episode(z, ep, cfg).accuracy; });
}

EvalMetrics nearest_centroid_baseline(const Matrix& features, std::span<const int> labels,
                                      const ClassSplit& split, const RunConfig& cfg) {
  require(features.rows() == labels.size(), "feature rows do not match label count");
  return run_episodes(labels, split, cfg, [&](const Episode& ep) {
    Matrix centroids(ep.n_way, features.cols());
    for (std::size_t s = 0; s < ep.support_ids.size(); ++s) {
      auto dst = centroids.row(ep.support_classes[s]);
      auto src = features.row(ep.support_ids[s]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c] / static_cast<double>(ep.k_shot);
    }
    const Matrix dist = pairwise_cost(gather_rows(features, ep.query_ids), centroids);
    std::vector<std::size_t> pred(dist.rows());
    for (std::size_t q = 0; q < dist.rows(); ++q) {
      const auto row = dist.row(q);
      pred[q] = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
    }
    return accuracy(pred, ep.query_classes);
  });
}

// ---- diagnostics ------------------------------------------------------

double energy_distance(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "energy_distance: point sets have different dimensions");
  require(a.rows() >= 1 && b.rows() >= 1, "energy_distance: empty point set");
  auto mean_dist = [](const Matrix& x, const Matrix& y) {
    const Matrix d = pairwise_cost(x, y);
    double s = 0.0;
    for (double v : d.values()) s += std::sqrt(v);
    return s / static_cast<double>(d.size());
  };
  return 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
}

ShiftDiagnostic shift_diagnostic(const Matrix& support, const Matrix& query, const Matrix& transported) {
  return {energy_distance(support, query), energy_distance(transported, query)};
}

Matrix pca_project_2d(const Matrix& x, std::size_t iterations) {
  const std::size_t n = x.rows(), d = x.cols();
  require(n >= 1 && d >= 1, "pca: empty input");
  Matrix centered = x;
  for (std::size_t c = 0; c < d; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += x(r, c);
    m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered(r, c) -= m;
  }
  Matrix cov = (1.0 / static_cast<double>(n)) * matmul_tn(centered, centered);

  const std::size_t comps = std::min<std::size_t>(2, d);
  Matrix basis(d, 2);
  for (std::size_t k = 0; k < comps; ++k) {
    std::vector<double> v(d);
    for (std::size_t c = 0; c < d; ++c) v[c] = 1.0 / std::sqrt(static_cast<double>(d)) + 1e-3 * static_cast<double>(c);
    double eigen = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
      std::vector<double> w(d, 0.0);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) w[i] += cov(i, j) * v[j];
      const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
      if (norm < 1e-300) break;
      for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / norm;
      eigen = norm;
    }
    // Sign convention: largest-magnitude coordinate positive.
    const auto big = std::max_element(v.begin(), v.end(),
                                      [](double p, double q) { return std::abs(p) < std::abs(q); });
    if (*big < 0)
      for (double& e : v) e = -e;
    for (std::size_t i = 0; i < d; ++i) {
      basis(i, k) = v[i];
      for (std::size_t j = 0; j < d; ++j) cov(i, j) -= eigen * v[i] * v[j];
    }
  }
  return matmul(centered, basis);
}

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Diagnostics diagnose(const Matrix& z, const EmbeddingMeta& meta, std::span<const int> labels,
                     const ClassSplit& split, const RunConfig& cfg, std::size_t shift_episodes) {
  require(z.rows() == labels.size(), "embedding rows do not match label count");
  Diagnostics d;
  const Matrix instance = slice_cols(z, 0, meta.instance_dim);
  const std::size_t k = std::min(meta.top_k ? meta.top_k : cfg.top_k, z.rows());
  d.retrieval_purity = retrieval_purity(topk_retrieve(instance, instance, k), labels);

  if (!split.test.empty() && shift_episodes > 0) {
    validate(split, labels);
    std::vector<double> before, after;
    for (std::size_t e = 0; e < shift_episodes; ++e) {
      const Episode ep = episode_for(labels, split.test, cfg, 0, e);
      const Matrix support = gather_rows(z, ep.support_ids);
      const Matrix query = gather_rows(z, ep.query_ids);
      const TransportPlan plan =
          sinkhorn(pairwise_cost(support, query), {cfg.ot_epsilon, cfg.ot_tol, cfg.ot_max_iter});
      const Matrix moved =
          transport_support(plan, support, one_hot(ep.support_classes, ep.n_way), cfg.raw_plan_transport)
              .embeddings;
      d.shifts.push_back(shift_diagnostic(support, query, moved));
      before.push_back(d.shifts.back().before);
      after.push_back(d.shifts.back().after);
    }
    d.median_energy_before = median(before);
    d.median_energy_after = median(after);
  }
  d.projection = pca_project_2d(z);
  return d;
}

std::string diagnostics_to_json(const Diagnostics& d, std::span<const int> labels) {
  json j;
  j["retrieval_purity"] = d.retrieval_purity;
  j["shift"] = {{"median_energy_before", d.median_energy_before},
                {"median_energy_after", d.median_energy_after},
                {"episodes", d.shifts.size()},
                {"before", json::array()},
                {"after", json::array()}};
  for (const auto& s : d.shifts) {
    j["shift"]["before"].push_back(s.before);
    j["shift"]["after"].push_back(s.after);
  }
  json points = json::array();
  for (std::size_t r = 0; r < d.projection.rows(); ++r) {
    json p = {{"x", d.projection(r, 0)}, {"y", d.projection(r, 1)}};
    if (r < labels.size()) p["label"] = labels[r];
    points.push_back(std::move(p));
  }
  j["pca_projection"] = std::move(points);
  return j.dump(2);
}

}  // namespace star

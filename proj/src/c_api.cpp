#include "star/star.h"

#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include <json.hpp>

#include "star/data_io.hpp"
#include "star/error.hpp"
#include "star/pipeline.hpp"

struct star_config {
  star::RunConfig cfg;
};

struct star_dataset {
  star::Dataset data;
};

struct star_model {
  star::RunConfig cfg;
  star::EncoderStack params;
  std::vector<star::EpochLoss> history;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

struct star_embedding {
  star::Matrix z;
  star::EmbeddingMeta meta;
};

namespace {

thread_local std::string g_last_error;

star_status to_status(star::ErrorCode code) {
  switch (code) {
    case star::ErrorCode::invalid_argument: return STAR_ERR_INVALID_ARGUMENT;
    case star::ErrorCode::io: return STAR_ERR_IO;
    case star::ErrorCode::parse: return STAR_ERR_PARSE;
    case star::ErrorCode::numeric: return STAR_ERR_NUMERIC;
    case star::ErrorCode::state: return STAR_ERR_STATE;
  }
  return STAR_ERR_INTERNAL;
}

template <typename Fn>
star_status guarded(Fn&& fn) {
  try {
    fn();
    return STAR_OK;
  } catch (const star::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return STAR_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return STAR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return STAR_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return STAR_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) star::fail(star::ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string train_json(const star_model& m) {
  nlohmann::json j;
  j["config"] = nlohmann::json::parse(star::config_to_json(m.cfg));
  j["best_epoch"] = m.best_epoch;
  j["early_stopped"] = m.early_stopped;
  j["loss_history"] = nlohmann::json::array();
  for (const auto& e : m.history)
    j["loss_history"].push_back({{"instance", e.instance}, {"set", e.set}, {"total", e.total}});
  return j.dump(2);
}

}  // namespace

extern "C" {

const char* star_last_error(void) { return g_last_error.c_str(); }

const char* star_status_string(star_status status) {
  switch (status) {
    case STAR_OK: return "ok";
    case STAR_ERR_INVALID_ARGUMENT: return "invalid argument";
    case STAR_ERR_IO: return "i/o error";
    case STAR_ERR_PARSE: return "parse error";
    case STAR_ERR_NUMERIC: return "numerical error";
    case STAR_ERR_STATE: return "invalid state";
    case STAR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* star_version(void) { return "1.0.0"; }

void star_string_free(char* s) { delete[] s; }

// ---- configuration ----

star_status star_config_create(star_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new star_config{};
  });
}

star_status star_config_from_json(const char* json, star_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new star_config{star::config_from_json(json)};
  });
}

star_status star_config_update(star_config* cfg, const char* json_patch) {
  return guarded([&] {
    need(cfg, "cfg");
    need(json_patch, "json_patch");
    cfg->cfg = star::config_from_json(json_patch, cfg->cfg);
  });
}

star_status star_config_to_json(const star_config* cfg, char** out_json) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out_json, "out_json");
    *out_json = dup_string(star::config_to_json(cfg->cfg));
  });
}

void star_config_free(star_config* cfg) { delete cfg; }

// ---- datasets ----

star_status star_dataset_load(const char* dir, star_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new star_dataset{star::load_dataset(dir)};
  });
}

star_status star_dataset_save(const star_dataset* ds, const char* dir) {
  return guarded([&] {
    need(ds, "ds");
    need(dir, "dir");
    star::save_dataset(ds->data, dir);
  });
}

star_status star_dataset_synth(const char* spec_json, star_dataset** out) {
  return guarded([&] {
    need(spec_json, "spec_json");
    need(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(spec_json);
    } catch (const nlohmann::json::exception& e) {
      star::fail(star::ErrorCode::parse, std::string("SBM spec: ") + e.what());
    }
    star::ClassSplit split;
    const bool has_split = j.contains("splits");
    if (has_split) {
      split = star::parse_split_json(j["splits"].dump(), "spec.splits");
      j.erase("splits");
    }
    const star::SbmSpec spec = star::parse_sbm_spec(j.dump());
    star::Dataset ds;
    ds.graph = star::generate_sbm(spec);
    if (!has_split)
      for (std::size_t b = 0; b < spec.blocks; ++b) split.test.push_back(static_cast<int>(b));
    star::validate(split, *ds.graph.labels);
    ds.split = std::move(split);
    *out = new star_dataset{std::move(ds)};
  });
}

star_status star_dataset_num_nodes(const star_dataset* ds, size_t* out) {
  return guarded([&] {
    need(ds, "ds");
    need(out, "out");
    *out = ds->data.graph.n;
  });
}

star_status star_dataset_num_edges(const star_dataset* ds, size_t* out) {
  return guarded([&] {
    need(ds, "ds");
    need(out, "out");
    *out = ds->data.graph.num_edges();
  });
}

star_status star_dataset_feature_dim(const star_dataset* ds, size_t* out) {
  return guarded([&] {
    need(ds, "ds");
    need(out, "out");
    *out = ds->data.graph.feature_dim();
  });
}

void star_dataset_free(star_dataset* ds) { delete ds; }

// ---- pretraining ----

star_status star_model_pretrain(const star_dataset* ds, const star_config* cfg, star_model** out) {
  return guarded([&] {
    need(ds, "ds");
    need(cfg, "cfg");
    need(out, "out");
    star::TrainResult r = star::meta_train(ds->data.graph, cfg->cfg);
    *out = new star_model{cfg->cfg, std::move(r.params), std::move(r.history), r.best_epoch,
                          r.early_stopped};
  });
}

star_status star_model_save(const star_model* model, const char* dir) {
  return guarded([&] {
    need(model, "model");
    need(dir, "dir");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) star::fail(star::ErrorCode::io, std::string("cannot create '") + dir + "': " + ec.message());
    const std::filesystem::path root(dir);
    star::nn::save_tensors((root / "params.bin").string(), model->params.named_tensors(),
                           star::config_to_json(model->cfg));
    star::write_text_file((root / "train.json").string(), train_json(*model) + "\n");
  });
}

star_status star_model_load(const char* dir, star_model** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    const std::filesystem::path root(dir);
    std::string meta;
    const auto tensors = star::nn::load_tensors((root / "params.bin").string(), &meta);
    auto model = std::make_unique<star_model>();
    model->cfg = star::config_from_json(meta);
    model->params = star::EncoderStack::from_named_tensors(tensors);
    const auto train_path = (root / "train.json").string();
    if (std::filesystem::exists(train_path)) {
      const auto j = nlohmann::json::parse(star::read_text_file(train_path));
      model->best_epoch = j.value("best_epoch", std::size_t{0});
      model->early_stopped = j.value("early_stopped", false);
      for (const auto& e : j.value("loss_history", nlohmann::json::array()))
        model->history.push_back({e.at("instance").get<double>(), e.at("set").get<double>(),
                                  e.at("total").get<double>()});
    }
    *out = model.release();
  });
}

star_status star_model_epochs(const star_model* model, size_t* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = model->history.size();
  });
}

star_status star_model_loss(const star_model* model, size_t epoch, double* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    star::require(epoch < model->history.size(), "epoch index out of range");
    *out = model->history[epoch].total;
  });
}

void star_model_free(star_model* model) { delete model; }

// ---- embeddings ----

star_status star_embed(const star_model* model, const star_dataset* ds, star_embedding** out) {
  return guarded([&] {
    need(model, "model");
    need(ds, "ds");
    need(out, "out");
    star::require(model->params.encoder.weight.rows() == ds->data.graph.feature_dim(),
                  "model expects " + std::to_string(model->params.encoder.weight.rows()) +
                      " input features, dataset has " + std::to_string(ds->data.graph.feature_dim()));
    star::FinalEmbeddings e = star::embed(ds->data.graph, model->params, model->cfg);
    const star::EmbeddingMeta meta = star::embedding_meta(model->cfg, e);
    *out = new star_embedding{std::move(e.z), meta};
  });
}

star_status star_embedding_save(const star_embedding* emb, const char* path,
                                star_embedding_format format) {
  return guarded([&] {
    need(emb, "emb");
    need(path, "path");
    star::export_embeddings(emb->z, path,
                            format == STAR_EMBEDDING_TSV ? star::EmbeddingFormat::tsv
                                                         : star::EmbeddingFormat::binary,
                            star::embedding_meta_to_json(emb->meta));
  });
}

star_status star_embedding_load(const char* path, star_embedding** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::string meta;
    star::Matrix z = star::load_embeddings(path, &meta);
    const auto m = star::embedding_meta_from_json(meta, z.cols());
    *out = new star_embedding{std::move(z), m};
  });
}

star_status star_embedding_shape(const star_embedding* emb, size_t* rows, size_t* cols) {
  return guarded([&] {
    need(emb, "emb");
    need(rows, "rows");
    need(cols, "cols");
    *rows = emb->z.rows();
    *cols = emb->z.cols();
  });
}

star_status star_embedding_copy(const star_embedding* emb, double* buffer, size_t length) {
  return guarded([&] {
    need(emb, "emb");
    need(buffer, "buffer");
    star::require(length == emb->z.size(), "buffer length does not match rows * cols");
    std::memcpy(buffer, emb->z.data(), length * sizeof(double));
  });
}

void star_embedding_free(star_embedding* emb) { delete emb; }

// ---- meta-test and diagnostics ----

star_status star_evaluate(const star_embedding* emb, const star_dataset* ds, const star_config* cfg,
                          star_block_mask blocks, const char* out_path, char** out_json) {
  return guarded([&] {
    need(emb, "emb");
    need(ds, "ds");
    need(cfg, "cfg");
    need(out_json, "out_json");
    const auto& g = ds->data.graph;
    star::require(g.labels.has_value(), "dataset has no labels");
    star::RunConfig run = cfg->cfg;
    star::Matrix z = emb->z;
    const std::size_t split_at = emb->meta.instance_dim;
    if (blocks == STAR_BLOCKS_DROP_SET) {
      z = star::slice_cols(emb->z, 0, split_at);
      run.no_set = true;
    } else if (blocks == STAR_BLOCKS_DROP_INSTANCE) {
      star::require(emb->meta.set_dim > 0, "embedding has no set block to evaluate on");
      z = star::slice_cols(emb->z, split_at, emb->z.cols());
      run.no_instance = true;
    }
    const star::EvalMetrics m = star::meta_test(z, *g.labels, ds->data.split, run);
    if (out_path != nullptr) star::export_results(m, out_path);
    *out_json = dup_string(star::metrics_to_json(m));
  });
}

star_status star_baseline(const star_dataset* ds, const star_config* cfg, char** out_json) {
  return guarded([&] {
    need(ds, "ds");
    need(cfg, "cfg");
    need(out_json, "out_json");
    const auto& g = ds->data.graph;
    star::require(g.labels.has_value(), "dataset has no labels");
    const auto m = star::nearest_centroid_baseline(g.features, *g.labels, ds->data.split, cfg->cfg);
    *out_json = dup_string(star::metrics_to_json(m));
  });
}

star_status star_diagnose(const star_embedding* emb, const star_dataset* ds, const star_config* cfg,
                          size_t shift_episodes, char** out_json) {
  return guarded([&] {
    need(emb, "emb");
    need(ds, "ds");
    need(cfg, "cfg");
    need(out_json, "out_json");
    const auto& g = ds->data.graph;
    star::require(g.labels.has_value(), "dataset has no labels");
    const auto d = star::diagnose(emb->z, emb->meta, *g.labels, ds->data.split, cfg->cfg, shift_episodes);
    *out_json = dup_string(star::diagnostics_to_json(d, *g.labels));
  });
}

}  // extern "C"

#include "star/data_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "star/error.hpp"
#include "star/nn.hpp"
#include "star/random.hpp"

namespace star {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

namespace {

[[noreturn]] void parse_error(const std::string& file, std::size_t line, const std::string& what) {
  fail(ErrorCode::parse, file + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view token, const std::string& file, std::size_t line) {
  T value{};
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end)
    parse_error(file, line, "malformed number '" + std::string(token) + "'");
  return value;
}

// Lines of a text file with trailing '\r' stripped; a final empty line is dropped.
std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

Matrix read_matrix_tsv(const std::string& path) {
  const auto lines = read_lines(path);
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tokens = split_tabs(lines[i]);
    if (i == 0) cols = tokens.size();
    if (tokens.size() != cols)
      parse_error(path, i + 1, "expected " + std::to_string(cols) + " columns, found " +
                                   std::to_string(tokens.size()));
    for (auto t : tokens) {
      const double v = parse_number<double>(t, path, i + 1);
      if (!std::isfinite(v)) parse_error(path, i + 1, "non-finite value");
      data.push_back(v);
    }
  }
  return Matrix(lines.size(), cols, std::move(data));
}

void write_matrix_tsv(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      // Shortest representation that round-trips exactly.
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(r, c));
      if (c) out << '\t';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

std::vector<int> parse_class_list(const json& j, const char* key, const std::string& origin) {
  if (!j.contains(key)) return {};
  if (!j[key].is_array()) fail(ErrorCode::parse, origin + ": '" + key + "' must be an array");
  std::vector<int> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer())
      fail(ErrorCode::parse, origin + ": '" + key + "' must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

ClassSplit parse_split_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, origin + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::parse, origin + ": expected a JSON object");
  return {parse_class_list(j, "train_classes", origin), parse_class_list(j, "val_classes", origin),
          parse_class_list(j, "test_classes", origin)};
}

std::string split_to_json(const ClassSplit& split) {
  return json{{"train_classes", split.train},
              {"val_classes", split.val},
              {"test_classes", split.test}}
      .dump(2);
}

Dataset load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::io, "dataset directory '" + dir + "' does not exist");
  const fs::path root(dir);
  const std::string features_path = (root / "features.tsv").string();
  const std::string edges_path = (root / "edges.tsv").string();
  const std::string labels_path = (root / "labels.tsv").string();
  const std::string splits_path = (root / "splits.json").string();
  for (const auto& p : {features_path, edges_path})
    if (!fs::exists(p)) fail(ErrorCode::io, "missing dataset file '" + p + "'");

  Matrix features = read_matrix_tsv(features_path);
  const std::size_t n = features.rows();

  std::vector<Edge> raw;
  const auto edge_lines = read_lines(edges_path);
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    const auto tokens = split_tabs(edge_lines[i]);
    if (tokens.size() != 2) parse_error(edges_path, i + 1, "expected 'i<TAB>j'");
    const auto a = parse_number<std::size_t>(tokens[0], edges_path, i + 1);
    const auto b = parse_number<std::size_t>(tokens[1], edges_path, i + 1);
    if (a >= n || b >= n)
      parse_error(edges_path, i + 1, "node id out of range [0, " + std::to_string(n) + ")");
    raw.emplace_back(a, b);
  }

  Dataset ds;
  std::optional<std::vector<int>> labels;
  if (fs::exists(labels_path)) {
    const auto label_lines = read_lines(labels_path);
    if (label_lines.size() != n)
      parse_error(labels_path, label_lines.size(), "has " + std::to_string(label_lines.size()) +
                                                       " labels for " + std::to_string(n) + " nodes");
    labels.emplace();
    for (std::size_t i = 0; i < label_lines.size(); ++i)
      labels->push_back(parse_number<int>(label_lines[i], labels_path, i + 1));
  }
  if (fs::exists(splits_path)) {
    if (!labels) fail(ErrorCode::io, "splits.json present but labels.tsv is missing in '" + dir + "'");
    ds.split = parse_split_json(read_text_file(splits_path), splits_path);
    try {
      validate(ds.split, *labels);
    } catch (const Error& e) {
      fail(ErrorCode::parse, splits_path + ": " + e.what());
    }
  }

  std::vector<Edge> edges = canonical_edges(std::move(raw), &ds.dropped_self_loops);
  ds.graph = make_graph(std::move(features), std::move(edges), std::move(labels),
                        fs::path(dir).filename().string());
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create '" + dir + "': " + ec.message());
  const fs::path root(dir);
  const Graph& g = dataset.graph;
  write_matrix_tsv(g.features, (root / "features.tsv").string());
  {
    std::ostringstream ss;
    for (const auto& [a, b] : g.edges) ss << a << '\t' << b << '\n';
    write_text_file((root / "edges.tsv").string(), ss.str());
  }
  if (g.labels) {
    std::ostringstream ss;
    for (int l : *g.labels) ss << l << '\n';
    write_text_file((root / "labels.tsv").string(), ss.str());
    write_text_file((root / "splits.json").string(), split_to_json(dataset.split) + "\n");
  }
}

// ---- SBM ----------------------------------------------------------------

void validate(const SbmSpec& spec) {
  require(spec.blocks >= 1 && spec.nodes_per_block >= 1, "SBM needs at least one non-empty block");
  require(spec.feature_dim >= 1, "SBM feature_dim must be positive");
  require(0.0 <= spec.p_out && spec.p_out <= spec.p_in && spec.p_in <= 1.0,
          "SBM probabilities must satisfy 0 <= p_out <= p_in <= 1");
  require(spec.separation > 0.0, "SBM separation must be positive");
  require(spec.noise >= 0.0, "SBM noise must be non-negative");
}

SbmSpec parse_sbm_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("SBM spec: ") + e.what());
  }
  SbmSpec s;
  try {
    s.blocks = j.value("blocks", s.blocks);
    s.nodes_per_block = j.value("nodes_per_block", s.nodes_per_block);
    s.p_in = j.value("p_in", s.p_in);
    s.p_out = j.value("p_out", s.p_out);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.separation = j.value("separation", s.separation);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("SBM spec: ") + e.what());
  }
  validate(s);
  return s;
}

std::string sbm_spec_to_json(const SbmSpec& s) {
  return json{{"blocks", s.blocks},       {"nodes_per_block", s.nodes_per_block},
              {"p_in", s.p_in},           {"p_out", s.p_out},
              {"feature_dim", s.feature_dim}, {"separation", s.separation},
              {"noise", s.noise},         {"seed", s.seed}}
      .dump(2);
}

Graph generate_sbm(const SbmSpec& spec) {
  validate(spec);
  const std::size_t n = spec.blocks * spec.nodes_per_block;
  const std::size_t d = spec.feature_dim;

  Rng mean_rng = Rng::stream(spec.seed, {0});
  Matrix means(spec.blocks, d);
  for (std::size_t b = 0; b < spec.blocks; ++b) {
    auto row = means.row(b);
    double norm = 0.0;
    do {
      for (double& v : row) v = mean_rng.normal();
      norm = std::sqrt(dot(row, row));
    } while (norm == 0.0);
    for (double& v : row) v *= spec.separation / norm;
  }

  Rng edge_rng = Rng::stream(spec.seed, {1});
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = i / spec.nodes_per_block == j / spec.nodes_per_block;
      if (edge_rng.uniform() < (same ? spec.p_in : spec.p_out)) edges.emplace_back(i, j);
    }
  }

  Rng feat_rng = Rng::stream(spec.seed, {2});
  Matrix features(n, d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t block = i / spec.nodes_per_block;
    labels[i] = static_cast<int>(block);
    for (std::size_t c = 0; c < d; ++c) features(i, c) = means(block, c) + spec.noise * feat_rng.normal();
  }
  return make_graph(std::move(features), std::move(edges), std::move(labels), "sbm");
}

// ---- metrics ----------------------------------------------------------

std::string metrics_to_json(const EvalMetrics& m) {
  json j;
  j["n_way"] = m.n_way;
  j["k_shot"] = m.k_shot;
  j["q_query"] = m.q_query;
  j["episodes"] = m.episodes;
  j["repetitions"] = m.repetitions;
  j["mean_accuracy"] = m.mean_accuracy;
  j["std_accuracy"] = m.std_accuracy;
  j["std_across_repetitions"] = m.std_across_repetitions;
  j["repetition_means"] = m.repetition_means;
  j["repetition_stds"] = m.repetition_stds;
  j["ablation"] = m.ablation;
  j["config"] = json::parse(m.config_json.empty() ? "{}" : m.config_json);
  return j.dump(2);
}

EvalMetrics metrics_from_json(const std::string& text) {
  EvalMetrics m;
  try {
    const json j = json::parse(text);
    m.n_way = j.at("n_way").get<std::size_t>();
    m.k_shot = j.at("k_shot").get<std::size_t>();
    m.q_query = j.value("q_query", std::size_t{0});
    m.episodes = j.at("episodes").get<std::size_t>();
    m.repetitions = j.at("repetitions").get<std::size_t>();
    m.mean_accuracy = j.at("mean_accuracy").get<double>();
    m.std_accuracy = j.at("std_accuracy").get<double>();
    m.std_across_repetitions = j.value("std_across_repetitions", 0.0);
    m.repetition_means = j.value("repetition_means", std::vector<double>{});
    m.repetition_stds = j.value("repetition_stds", std::vector<double>{});
    m.ablation = j.at("ablation").get<std::map<std::string, bool>>();
    m.config_json = j.contains("config") ? j["config"].dump() : "{}";
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("metrics JSON: ") + e.what());
  }
  return m;
}

namespace {
std::string episodes_csv_path(const std::string& path) {
  fs::path p(path);
  if (p.extension() == ".json") p.replace_extension();
  return p.string() + ".episodes.csv";
}
}  // namespace

void export_results(const EvalMetrics& m, const std::string& path) {
  write_text_file(path, metrics_to_json(m) + "\n");
  std::ostringstream csv;
  csv << "repetition,episode,accuracy\n";
  char buf[64];
  for (std::size_t i = 0; i < m.episode_accuracies.size(); ++i) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m.episode_accuracies[i]);
    const std::size_t per = m.episodes == 0 ? 1 : m.episodes;
    csv << i / per << ',' << i % per << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf))
        << '\n';
  }
  write_text_file(episodes_csv_path(path), csv.str());
}

EvalMetrics read_results(const std::string& path) {
  EvalMetrics m = metrics_from_json(read_text_file(path));
  const std::string csv = episodes_csv_path(path);
  if (fs::exists(csv)) {
    const auto lines = read_lines(csv);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto comma = lines[i].rfind(',');
      if (comma == std::string::npos) parse_error(csv, i + 1, "expected three fields");
      m.episode_accuracies.push_back(
          parse_number<double>(std::string_view(lines[i]).substr(comma + 1), csv, i + 1));
    }
  }
  return m;
}

// ---- embeddings --------------------------------------------------------

void export_embeddings(const Matrix& z, const std::string& path, EmbeddingFormat format,
                       const std::string& meta_json) {
  if (format == EmbeddingFormat::tsv) {
    write_matrix_tsv(z, path);
    return;
  }
  nn::save_tensors(path, {{"Z", z}}, meta_json);
}

Matrix load_embeddings(const std::string& path, std::string* meta_json) {
  if (fs::path(path).extension() == ".tsv") {
    if (meta_json) *meta_json = "{}";
    return read_matrix_tsv(path);
  }
  auto tensors = nn::load_tensors(path, meta_json);
  for (auto& t : tensors)
    if (t.name == "Z") return std::move(t.value);
  fail(ErrorCode::parse, path + ": no tensor named 'Z'");
}

}  // namespace star

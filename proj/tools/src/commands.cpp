#include "commands.hpp"

#include <esh/anchor_graph.hpp>
#include <esh/codes.hpp>
#include <esh/error.hpp>

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace esh::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t hash_file(const fs::path& path, std::uint64_t h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory " + dir.string());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

fs::path manifest_path(const fs::path& artifact) {
  return fs::path(artifact.string() + ".manifest.json");
}

void write_manifest(const fs::path& artifact, const std::string& command,
                    std::uint64_t hash, const json& config) {
  json m;
  m["command"] = command;
  m["config_hash"] = hex(hash);
  m["config"] = config;
  m["artifact"] = artifact.filename().string();
  write_text(manifest_path(artifact), m.dump(2) + "\n");
}

std::optional<std::string> manifest_hash(const fs::path& artifact) {
  const fs::path p = manifest_path(artifact);
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  try {
    const json m = json::parse(in);
    return m.at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, p.string() + ": " + e.what());
  }
}

std::string extension(FeatureFormat f) { return f == FeatureFormat::kCsv ? ".csv" : ".bin"; }

json train_params(const TrainCommandConfig& c) {
  json j;
  j["algo"] = c.train.algorithm == Algorithm::kEsh1 ? "esh1" : "esh2";
  j["bits"] = c.train.bits;
  j["iters"] = c.train.iterations;
  j["eta"] = c.train.eta;
  j["alpha"] = c.train.alpha ? json(*c.train.alpha) : json("auto");
  j["tau0"] = c.train.tau0;
  j["seed"] = c.train.seed;
  j["early_stop"] = c.train.early_stop;
  j["anchors"] = c.anchors.anchors;
  j["snn"] = c.anchors.nearest;
  j["kmeans_iters"] = c.anchors.kmeans_iters;
  j["sigma2"] = c.anchors.sigma2 ? json(*c.anchors.sigma2) : json(nullptr);
  j["query_mode"] = std::string(to_string(c.query_mode));
  j["keep_affinity"] = c.keep_affinity;
  return j;
}

const PackedCodes& require_codes(const HashModel& model, const fs::path& path) {
  if (!model.train_codes) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + " stores no training codes; pass --database");
  }
  return *model.train_codes;
}

}  // namespace

std::string hex(std::uint64_t value) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << value;
  return s.str();
}

std::uint64_t config_hash(const TrainCommandConfig& config) {
  const std::string params = train_params(config).dump();
  return hash_file(config.features, fnv1a(params.data(), params.size()));
}

SynthResult cmd_synth(const SynthConfig& config) {
  ensure_dir(config.out);
  const LabeledFeatures data = generate_synthetic(config.spec);
  const std::string ext = extension(config.format);

  SynthResult result;
  result.rows = data.features.rows();
  result.features = config.out / ("features" + ext);
  result.labels = config.out / "labels.csv";
  save_features(result.features, data.features, config.format);
  save_labels(result.labels, data.labels);

  if (config.query_fraction > 0.0) {
    const HoldoutSplit split =
        holdout_split(data.labels, config.query_fraction, config.spec.seed);
    result.train_features = config.out / ("train_features" + ext);
    result.train_labels = config.out / "train_labels.csv";
    result.query_features = config.out / ("query_features" + ext);
    result.query_labels = config.out / "query_labels.csv";
    save_features(*result.train_features, data.features.select_rows(split.train), config.format);
    save_labels(*result.train_labels, data.labels.select_rows(split.train));
    save_features(*result.query_features, data.features.select_rows(split.query), config.format);
    save_labels(*result.query_labels, data.labels.select_rows(split.query));
  }
  return result;
}

TrainCommandResult cmd_train(const TrainCommandConfig& config) {
  ensure_dir(config.out);
  const FeatureMatrix raw = load_features(config.features, format_from_path(config.features));
  validate(config.train, raw.dims());
  if (config.anchors.anchors > raw.rows()) {
    throw Error(ErrorCode::kInvalidArgument,
                "anchor count " + std::to_string(config.anchors.anchors) +
                    " exceeds sample count " + std::to_string(raw.rows()));
  }

  Standardized data = standardize(raw);
  AnchorParams anchor_params = config.anchors;
  anchor_params.seed = config.train.seed;
  AnchorGraph graph = build_anchor_graph(data.features, anchor_params);
  const Matrix s = compute_s(data.features, graph.z, graph.degrees);
  const RowMatrix& x = data.features.values();

  TrainResult trained = train(x, s, config.train);
  PackedCodes codes = encode_train(x, trained.w);

  TrainCommandResult result;
  result.config_hash = config_hash(config);
  result.dropped_anchors = graph.dropped;
  result.model = config.out / "model.eshm";
  result.trace = config.out / "trace.csv";
  result.codes = config.out / "train_codes.eshb";

  save_codes(result.codes, codes);
  ModelParts parts;
  parts.w = std::move(trained.w);
  parts.stats = std::move(data.stats);
  parts.graph = std::move(graph);
  parts.train_codes = std::move(codes);
  parts.query_mode = config.query_mode;
  parts.config_hash = result.config_hash;
  parts.keep_affinity = config.keep_affinity;
  save_model(make_model(std::move(parts)), result.model);

  std::ostringstream trace;
  write_trace_csv(trace, trained.trace, config.timing);
  write_text(result.trace, trace.str());

  json params = train_params(config);
  params["alpha_resolved"] = trained.trace.alpha;
  for (const auto& artifact : {result.model, result.trace, result.codes}) {
    write_manifest(artifact, "train", result.config_hash, params);
  }
  result.trace_data = std::move(trained.trace);
  return result;
}

EncodeResult cmd_encode(const EncodeConfig& config) {
  ensure_dir(config.out);
  const HashModel model = load_model(config.model);
  const FeatureMatrix raw = load_features(config.features, format_from_path(config.features));
  const QueryMode mode = config.mode.value_or(model.query_mode);
  const PackedCodes codes = encode_queries(raw, model, mode);

  EncodeResult result;
  result.rows = codes.size();
  result.codes = config.out / "codes.eshb";
  save_codes(result.codes, codes);
  json params;
  params["query_mode"] = std::string(to_string(mode));
  params["model"] = config.model.filename().string();
  write_manifest(result.codes, "encode", model.config_hash, params);
  if (config.csv) {
    result.csv = config.out / "codes.csv";
    std::ostringstream text;
    write_codes_csv(text, codes);
    write_text(*result.csv, text.str());
  }
  return result;
}

QueryResult cmd_query(const QueryConfig& config) {
  if (config.top < 1) throw Error(ErrorCode::kInvalidArgument, "--top must be >= 1");
  ensure_dir(config.out);
  const HashModel model = load_model(config.model);
  const FeatureMatrix raw = load_features(config.features, format_from_path(config.features));
  const QueryMode mode = config.mode.value_or(model.query_mode);
  const PackedCodes queries = encode_queries(raw, model, mode);

  PackedCodes loaded;
  const PackedCodes* database = nullptr;
  if (config.database) {
    loaded = load_codes(*config.database);
    database = &loaded;
    if (const auto h = manifest_hash(*config.database); h && *h != hex(model.config_hash)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "database codes come from a different training run (" + *h + ")");
    }
  } else {
    database = &require_codes(model, config.model);
  }
  if (database->bits() != model.bits()) {
    throw Error(ErrorCode::kShape, "model has " + std::to_string(model.bits()) +
                                       " bits, database codes have " +
                                       std::to_string(database->bits()));
  }

  QueryResult result;
  result.codes = config.out / "query_codes.eshb";
  result.rankings = config.out / "rankings.csv";
  save_codes(result.codes, queries);

  std::ostringstream text;
  text << "query,rank,id,distance\n";
  for (Index q = 0; q < queries.size(); ++q) {
    const Ranking r = rank_database(queries.code(q), *database, q, {.exclude = {}, .top = config.top});
    for (std::size_t p = 0; p < r.size(); ++p) {
      text << q << ',' << p + 1 << ',' << r.ids[p] << ',' << r.distances[p] << '\n';
    }
  }
  write_text(result.rankings, text.str());
  json params;
  params["query_mode"] = std::string(to_string(mode));
  params["top"] = config.top;
  write_manifest(result.codes, "query", model.config_hash, params);
  write_manifest(result.rankings, "query", model.config_hash, params);
  return result;
}

EvalResult cmd_eval(const EvalConfig& config) {
  ensure_dir(config.out);
  const PackedCodes queries = load_codes(config.queries);
  const PackedCodes database = load_codes(config.database);
  if (queries.bits() != database.bits()) {
    throw Error(ErrorCode::kShape, "query codes have " + std::to_string(queries.bits()) +
                                       " bits, database codes have " +
                                       std::to_string(database.bits()));
  }
  const auto qh = manifest_hash(config.queries);
  const auto dh = manifest_hash(config.database);
  if (qh && dh && *qh != *dh) {
    throw Error(ErrorCode::kInvalidArgument,
                "query and database codes come from different training runs (" + *qh +
                    " vs " + *dh + ")");
  }
  if (config.labels.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "eval needs --labels for the database");
  }
  LabelSet db_labels = load_labels(config.labels);
  LabelSet query_labels;
  if (config.query_labels) {
    query_labels = load_labels(*config.query_labels);
  } else if (config.options.exclude_self || config.queries == config.database) {
    query_labels = db_labels;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "eval needs --query-labels for the queries");
  }

  EvalResult result;
  result.data = evaluate_retrieval(queries, database,
                                   GroundTruth(std::move(query_labels), std::move(db_labels)),
                                   config.options);
  const EvalReport& r = result.data;

  json report;
  report["map"] = r.map;
  report["macro_map"] = r.macro_map;
  json prec = json::object();
  for (const auto& [n, v] : r.precision_at_n) prec[std::to_string(n)] = v;
  report["precision_at_n"] = prec;
  report["radius"] = r.radius;
  report["precision_at_radius"] = r.precision_at_radius;
  report["queries"] = r.queries;
  report["queries_without_positives"] = r.queries_without_positives;
  report["cutoff"] = config.options.cutoff ? json(*config.options.cutoff) : json(nullptr);
  json curve = json::array();
  for (const auto& p : r.pr_curve) curve.push_back({p.recall, p.precision});
  report["pr_curve"] = curve;

  result.report = config.out / "report.json";
  result.pr_curve = config.out / "pr.csv";
  write_text(result.report, report.dump(2) + "\n");
  std::ostringstream pr;
  pr << "recall,precision\n";
  pr << std::setprecision(17);
  for (const auto& p : r.pr_curve) pr << p.recall << ',' << p.precision << '\n';
  write_text(result.pr_curve, pr.str());
  return result;
}

}  // namespace esh::cli

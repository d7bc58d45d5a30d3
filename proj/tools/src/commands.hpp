#pragma once

#include <esh/dataset.hpp>
#include <esh/encoder.hpp>
#include <esh/optimizer.hpp>
#include <esh/retrieval.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace esh::cli {

struct SynthConfig {
  SyntheticSpec spec;
  double query_fraction = 0.0;
  FeatureFormat format = FeatureFormat::kBinary;
  std::filesystem::path out = ".";
};

struct SynthResult {
  std::filesystem::path features;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> train_features, train_labels;
  std::optional<std::filesystem::path> query_features, query_labels;
  Index rows = 0;
};

struct TrainCommandConfig {
  std::filesystem::path features;
  TrainConfig train;
  AnchorParams anchors;
  QueryMode query_mode = QueryMode::kGraph;
  bool keep_affinity = false;
  bool timing = false;
  std::filesystem::path out = ".";
};

struct TrainCommandResult {
  std::filesystem::path model;
  std::filesystem::path trace;
  std::filesystem::path codes;
  TrainTrace trace_data;
  std::uint64_t config_hash = 0;
  Index dropped_anchors = 0;
};

struct EncodeConfig {
  std::filesystem::path model;
  std::filesystem::path features;
  std::optional<QueryMode> mode;  // default: the model's mode
  bool csv = false;
  std::filesystem::path out = ".";
};

struct EncodeResult {
  std::filesystem::path codes;
  std::optional<std::filesystem::path> csv;
  Index rows = 0;
};

struct QueryConfig {
  std::filesystem::path model;
  std::filesystem::path features;
  std::optional<std::filesystem::path> database;  // default: stored train codes
  std::optional<QueryMode> mode;
  Index top = 10;
  std::filesystem::path out = ".";
};

struct QueryResult {
  std::filesystem::path rankings;
  std::filesystem::path codes;
};

struct EvalConfig {
  std::filesystem::path queries;
  std::filesystem::path database;
  std::optional<std::filesystem::path> query_labels;  // default: database labels
  std::filesystem::path labels;
  EvalOptions options;
  std::filesystem::path out = ".";
};

struct EvalResult {
  std::filesystem::path report;
  std::filesystem::path pr_curve;
  EvalReport data;
};

SynthResult cmd_synth(const SynthConfig& config);
TrainCommandResult cmd_train(const TrainCommandConfig& config);
EncodeResult cmd_encode(const EncodeConfig& config);
QueryResult cmd_query(const QueryConfig& config);
EvalResult cmd_eval(const EvalConfig& config);

/// 64-bit FNV-1a of the canonical training parameters and the feature bytes.
/// Output locations are excluded so reruns into another directory agree.
std::uint64_t config_hash(const TrainCommandConfig& config);

std::string hex(std::uint64_t value);

}  // namespace esh::cli

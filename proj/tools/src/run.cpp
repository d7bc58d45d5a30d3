#include "run.hpp"

#include "commands.hpp"
#include "json_config.hpp"

#include <esh/error.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <map>

namespace esh::cli {
namespace {

using nlohmann::json;

void print_error(std::ostream& err, std::string_view command, std::string_view code,
                 const std::string& message) {
  json e;
  e["error"] = {{"command", command}, {"code", code}, {"message", message}};
  err << e.dump() << '\n';
}

const std::map<std::string, Algorithm> kAlgorithms = {{"esh1", Algorithm::kEsh1},
                                                     {"esh2", Algorithm::kEsh2}};
const std::map<std::string, QueryMode> kQueryModes = {{"graph", QueryMode::kGraph},
                                                      {"linear", QueryMode::kLinear}};
const std::map<std::string, FeatureFormat> kFormats = {{"bin", FeatureFormat::kBinary},
                                                       {"csv", FeatureFormat::kCsv}};

std::optional<double> parse_alpha(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, "--alpha expects 'auto' or a real, got '" + text + "'");
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Efficient spectral hashing: learn, apply and evaluate binary codes", "esh"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with per-subcommand option sections");
  app.require_subcommand(1);
  app.fallthrough();

  // synth
  SynthConfig synth;
  std::string synth_format = "bin";
  auto* synth_cmd = app.add_subcommand("synth", "Write a labeled Gaussian-blob dataset");
  synth_cmd->add_option("--clusters", synth.spec.clusters, "Number of blobs")->capture_default_str();
  synth_cmd->add_option("--per-cluster", synth.spec.per_cluster, "Samples per blob")->capture_default_str();
  synth_cmd->add_option("--dims", synth.spec.dims, "Feature dimension")->capture_default_str();
  synth_cmd->add_option("--spread", synth.spec.spread, "Blob standard deviation")->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--query-fraction", synth.query_fraction,
                        "Also write a stratified train/query split with this query share")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  synth_cmd->add_option("--format", synth_format, "Feature file format")
      ->check(CLI::IsMember({"bin", "csv"}))
      ->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->capture_default_str();

  // train
  TrainCommandConfig train;
  std::string algo = "esh2";
  std::string alpha = "auto";
  std::string train_mode = "graph";
  std::optional<double> sigma2;
  auto* train_cmd = app.add_subcommand("train", "Learn a hash model from features");
  train_cmd->add_option("--features", train.features, "Training features (.csv or ESHF binary)")
      ->required();
  train_cmd->add_option("--bits", train.train.bits, "Code length k")->capture_default_str();
  train_cmd->add_option("--algo", algo, "esh1 (projected gradient) or esh2 (Cayley + BB)")
      ->check(CLI::IsMember({"esh1", "esh2"}))
      ->capture_default_str();
  train_cmd->add_option("--iters", train.train.iterations, "Iterations N")->capture_default_str();
  train_cmd->add_option("--eta", train.train.eta, "ESH1 learning rate")->capture_default_str();
  train_cmd->add_option("--alpha", alpha, "Regularization weight or 'auto'")->capture_default_str();
  train_cmd->add_option("--tau0", train.train.tau0, "Initial ESH2 step")->capture_default_str();
  train_cmd->add_option("--anchors", train.anchors.anchors, "Anchor count m")->capture_default_str();
  train_cmd->add_option("--snn", train.anchors.nearest, "Nearest anchors per sample s")
      ->capture_default_str();
  train_cmd->add_option("--sigma2", sigma2, "Kernel width (default: self-tuned)");
  train_cmd->add_option("--kmeans-iters", train.anchors.kmeans_iters, "Lloyd iterations")
      ->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--query-mode", train_mode, "Default out-of-sample encoder")
      ->check(CLI::IsMember({"graph", "linear"}))
      ->capture_default_str();
  train_cmd->add_flag("--early-stop", train.train.early_stop,
                      "Stop after 10 iterations with relative loss change < 1e-7");
  train_cmd->add_flag("--keep-affinity", train.keep_affinity, "Store Z in the model file");
  train_cmd->add_flag("--timing", train.timing, "Record wall time in the trace");
  train_cmd->add_option("--out", train.out, "Output directory")->capture_default_str();

  // encode
  EncodeConfig encode;
  std::string encode_mode;
  auto* encode_cmd = app.add_subcommand("encode", "Hash samples with a trained model");
  encode_cmd->add_option("--model", encode.model, "Model file")->required();
  encode_cmd->add_option("--features", encode.features, "Raw features to encode")->required();
  encode_cmd->add_option("--query-mode", encode_mode, "graph or linear (default: model's)")
      ->check(CLI::IsMember({"graph", "linear"}));
  encode_cmd->add_flag("--csv", encode.csv, "Also write +1/-1 CSV codes");
  encode_cmd->add_option("--out", encode.out, "Output directory")->capture_default_str();

  // query
  QueryConfig query;
  std::string query_mode;
  auto* query_cmd = app.add_subcommand("query", "Rank database codes for raw queries");
  query_cmd->add_option("--model", query.model, "Model file")->required();
  query_cmd->add_option("--features", query.features, "Raw query features")->required();
  query_cmd->add_option("--database", query.database,
                        "Database codes (default: codes stored in the model)");
  query_cmd->add_option("--query-mode", query_mode, "graph or linear (default: model's)")
      ->check(CLI::IsMember({"graph", "linear"}));
  query_cmd->add_option("--top", query.top, "Results per query")->capture_default_str();
  query_cmd->add_option("--out", query.out, "Output directory")->capture_default_str();

  // eval
  EvalConfig eval;
  std::optional<Index> cutoff;
  auto* eval_cmd = app.add_subcommand("eval", "Hamming-ranking retrieval metrics");
  eval_cmd->add_option("--queries", eval.queries, "Query codes (ESHB)")->required();
  eval_cmd->add_option("--database", eval.database, "Database codes (ESHB)")->required();
  eval_cmd->add_option("--labels", eval.labels, "Database labels")->required();
  eval_cmd->add_option("--query-labels", eval.query_labels, "Query labels");
  eval_cmd->add_option("--precision-at", eval.options.precision_at, "N values for precision@N")
      ->delimiter(',')
      ->capture_default_str();
  eval_cmd->add_option("--radius", eval.options.radius, "Hamming radius for precision@r")
      ->capture_default_str();
  eval_cmd->add_option("--cutoff", cutoff, "Rank cutoff for AP (default: full ranking)");
  eval_cmd->add_flag("--exclude-self", eval.options.exclude_self,
                     "Queries are the database; drop each query from its own ranking");
  eval_cmd->add_flag("--skip-empty", eval.options.skip_empty,
                     "Drop queries without positives instead of scoring 0");
  eval_cmd->add_option("--out", eval.out, "Output directory")->capture_default_str();

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json summary;
    summary["command"] = command;
    if (command == "synth") {
      synth.format = kFormats.at(synth_format);
      const SynthResult r = cmd_synth(synth);
      summary["rows"] = r.rows;
      summary["features"] = r.features.string();
      summary["labels"] = r.labels.string();
      if (r.query_features) {
        summary["train_features"] = r.train_features->string();
        summary["query_features"] = r.query_features->string();
      }
    } else if (command == "train") {
      train.train.algorithm = kAlgorithms.at(algo);
      train.train.alpha = parse_alpha(alpha);
      train.anchors.sigma2 = sigma2;
      train.query_mode = kQueryModes.at(train_mode);
      const TrainCommandResult r = cmd_train(train);
      summary["model"] = r.model.string();
      summary["trace"] = r.trace.string();
      summary["codes"] = r.codes.string();
      summary["config_hash"] = hex(r.config_hash);
      summary["alpha"] = r.trace_data.alpha;
      summary["initial_loss"] = r.trace_data.initial_loss;
      summary["final_loss"] = r.trace_data.records.back().loss;
      summary["dropped_anchors"] = r.dropped_anchors;
    } else if (command == "encode") {
      if (!encode_mode.empty()) encode.mode = kQueryModes.at(encode_mode);
      const EncodeResult r = cmd_encode(encode);
      summary["codes"] = r.codes.string();
      summary["rows"] = r.rows;
    } else if (command == "query") {
      if (!query_mode.empty()) query.mode = kQueryModes.at(query_mode);
      const QueryResult r = cmd_query(query);
      summary["rankings"] = r.rankings.string();
      summary["codes"] = r.codes.string();
    } else if (command == "eval") {
      eval.options.cutoff = cutoff;
      const EvalResult r = cmd_eval(eval);
      summary["report"] = r.report.string();
      summary["pr_curve"] = r.pr_curve.string();
      summary["map"] = r.data.map;
      summary["macro_map"] = r.data.macro_map;
      summary["precision_at_radius"] = r.data.precision_at_radius;
    }
    out << summary.dump() << '\n';
    return 0;
  } catch (const Error& e) {
    print_error(err, command, to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    print_error(err, command, "internal", e.what());
  }
  return 1;
}

}  // namespace esh::cli

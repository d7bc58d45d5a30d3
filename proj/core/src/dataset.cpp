#include "esh/dataset.hpp"

#include "binary_io.hpp"
#include "esh/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace esh {
namespace {

constexpr std::string_view kFeatureMagic = "ESHF";
constexpr std::uint8_t kFeatureVersion = 1;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string location(Index row, Index col) {
  return "row " + std::to_string(row) + ", col " + std::to_string(col);
}

FeatureMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());

  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    Index count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = body.find(',', start);
      const std::string_view field = trim(body.substr(
          start, comma == std::string_view::npos ? std::string_view::npos
                                                 : comma - start));
      double v = 0.0;
      const char* first = field.data();
      const char* last = field.data() + field.size();
      if (!field.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (field.empty() || ec != std::errc() || ptr != last) {
        throw Error(ErrorCode::kFormat, path.string() + ": cannot parse '" +
                                            std::string(field) + "' at " +
                                            location(rows, count));
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, path.string() +
                                               ": non-finite value at " +
                                               location(rows, count));
      }
      values.push_back(v);
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols < 0) {
      cols = count;
    } else if (count != cols) {
      throw Error(ErrorCode::kShape,
                  path.string() + ": row " + std::to_string(rows) + " has " +
                      std::to_string(count) + " columns, expected " +
                      std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::kShape, path.string() + ": no rows");
  return FeatureMatrix(
      Eigen::Map<const RowMatrix>(values.data(), rows, cols).eval());
}

FeatureMatrix load_binary(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size(), path.string());
  if (bytes.size() < kFeatureMagic.size() ||
      r.tag(kFeatureMagic.size()) != kFeatureMagic) {
    throw Error(ErrorCode::kFormat, path.string() + ": missing ESHF magic");
  }
  const std::uint8_t version = r.u8();
  if (version != kFeatureVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                path.string() + ": unsupported version " +
                    std::to_string(version));
  }
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  if (n == 0 || d == 0) {
    throw Error(ErrorCode::kShape, path.string() + ": empty shape " +
                                       std::to_string(n) + "x" +
                                       std::to_string(d));
  }
  if (d > r.remaining() / 4 || n > r.remaining() / 4 / d ||
      n * d * 4 != r.remaining()) {
    throw Error(ErrorCode::kShape,
                path.string() + ": payload does not match header " +
                    std::to_string(n) + "x" + std::to_string(d));
  }
  RowMatrix m(static_cast<Index>(n), static_cast<Index>(d));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = r.f32();
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, path.string() +
                                               ": non-finite value at " +
                                               location(i, j));
      }
      m(i, j) = v;
    }
  }
  return FeatureMatrix(std::move(m));
}

}  // namespace

FeatureMatrix::FeatureMatrix(RowMatrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw Error(ErrorCode::kShape, "feature matrix must be non-empty");
  }
  for (Index i = 0; i < values_.rows(); ++i) {
    for (Index j = 0; j < values_.cols(); ++j) {
      if (!std::isfinite(values_(i, j))) {
        throw Error(ErrorCode::kNonFinite,
                    "non-finite feature value at " + location(i, j));
      }
    }
  }
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const Index> ids) const {
  RowMatrix out(static_cast<Index>(ids.size()), dims());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= rows()) {
      throw Error(ErrorCode::kInvalidArgument, "row index out of range");
    }
    out.row(static_cast<Index>(r)) = values_.row(ids[r]);
  }
  return FeatureMatrix(std::move(out));
}

FeatureFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? FeatureFormat::kCsv : FeatureFormat::kBinary;
}

FeatureMatrix load_features(const std::filesystem::path& path,
                            FeatureFormat format) {
  return format == FeatureFormat::kCsv ? load_csv(path) : load_binary(path);
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& x,
                   FeatureFormat format) {
  const RowMatrix& v = x.values();
  if (format == FeatureFormat::kCsv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    char buf[32];
    for (Index i = 0; i < v.rows(); ++i) {
      for (Index j = 0; j < v.cols(); ++j) {
        if (j > 0) out << ',';
        // Shortest round-trip representation.
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v(i, j));
        out.write(buf, ptr - buf);
      }
      out << '\n';
    }
    if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
    return;
  }
  detail::ByteWriter w;
  w.tag(kFeatureMagic);
  w.u8(kFeatureVersion);
  w.u64(static_cast<std::uint64_t>(v.rows()));
  w.u64(static_cast<std::uint64_t>(v.cols()));
  for (Index i = 0; i < v.rows(); ++i) {
    for (Index j = 0; j < v.cols(); ++j) w.f32(static_cast<float>(v(i, j)));
  }
  detail::write_file(path, w.buffer());
}

Standardized standardize(const FeatureMatrix& x) {
  const Index n = x.rows();
  if (n < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "standardization needs at least two rows");
  }
  const RowMatrix& v = x.values();
  StandardizationStats stats;
  stats.mean = v.colwise().mean().transpose();
  stats.std.resize(x.dims());
  for (Index j = 0; j < x.dims(); ++j) {
    const double var =
        (v.col(j).array() - stats.mean(j)).square().sum() / static_cast<double>(n);
    stats.std(j) = std::max(std::sqrt(var), kStdFloor);
  }
  return {apply_standardization(x, stats), std::move(stats)};
}

Vector apply_standardization(const Eigen::Ref<const Vector>& x,
                             const StandardizationStats& stats) {
  if (x.size() != stats.mean.size()) {
    throw Error(ErrorCode::kShape,
                "query has " + std::to_string(x.size()) +
                    " dims, model expects " + std::to_string(stats.mean.size()));
  }
  return ((x - stats.mean).array() / stats.std.array()).matrix();
}

FeatureMatrix apply_standardization(const FeatureMatrix& x,
                                    const StandardizationStats& stats) {
  if (x.dims() != stats.mean.size()) {
    throw Error(ErrorCode::kShape,
                "features have " + std::to_string(x.dims()) +
                    " dims, model expects " + std::to_string(stats.mean.size()));
  }
  RowMatrix out(x.rows(), x.dims());
  for (Index i = 0; i < x.rows(); ++i) {
    out.row(i) = ((x.row(i).transpose() - stats.mean).array() /
                  stats.std.array())
                     .matrix()
                     .transpose();
  }
  return FeatureMatrix(std::move(out));
}

LabelSet LabelSet::from_rows(std::vector<std::vector<std::int32_t>> rows) {
  LabelSet set;
  bool single = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (r.empty()) {
      throw Error(ErrorCode::kFormat,
                  "sample " + std::to_string(i) + " has no label");
    }
    single = single && r.size() == 1;
  }
  set.kind = single ? LabelKind::kSingle : LabelKind::kMulti;
  set.labels = std::move(rows);
  return set;
}

LabelSet LabelSet::select_rows(std::span<const Index> ids) const {
  LabelSet out;
  out.kind = kind;
  out.labels.reserve(ids.size());
  for (Index id : ids) out.labels.push_back(labels.at(static_cast<std::size_t>(id)));
  return out;
}

bool share_label(std::span<const std::int32_t> a,
                 std::span<const std::int32_t> b) noexcept {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

LabelSet load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::vector<std::int32_t>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    std::vector<std::int32_t> ids;
    std::size_t start = 0;
    while (true) {
      const std::size_t semi = body.find(';', start);
      const std::string_view field = trim(body.substr(
          start,
          semi == std::string_view::npos ? std::string_view::npos : semi - start));
      std::int32_t id = 0;
      const auto [ptr, ec] =
          std::from_chars(field.data(), field.data() + field.size(), id);
      if (field.empty() || ec != std::errc() ||
          ptr != field.data() + field.size()) {
        throw Error(ErrorCode::kFormat,
                    path.string() + ": bad label '" + std::string(field) +
                        "' on line " + std::to_string(rows.size() + 1));
      }
      ids.push_back(id);
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
    rows.push_back(std::move(ids));
  }
  if (rows.empty()) throw Error(ErrorCode::kShape, path.string() + ": no labels");
  return LabelSet::from_rows(std::move(rows));
}

void save_labels(const std::filesystem::path& path, const LabelSet& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& row : labels.labels) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out << ';';
      out << row[j];
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

LabeledFeatures generate_synthetic(const SyntheticSpec& spec) {
  if (spec.clusters < 2 || spec.per_cluster < 1 || spec.dims < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "synthetic data needs clusters >= 2, per_cluster >= 1, dims >= 1");
  }
  if (!(spec.spread > 0.0) || !std::isfinite(spec.spread)) {
    throw Error(ErrorCode::kInvalidArgument, "spread must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto c = static_cast<Index>(spec.clusters);
  const auto d = static_cast<Index>(spec.dims);
  const auto per = static_cast<Index>(spec.per_cluster);

  RowMatrix centers(c, d);
  for (Index i = 0; i < c; ++i) {
    for (Index j = 0; j < d; ++j) centers(i, j) = normal(rng);
  }

  RowMatrix values(c * per, d);
  std::vector<std::vector<std::int32_t>> labels;
  labels.reserve(static_cast<std::size_t>(c * per));
  for (Index i = 0; i < c; ++i) {
    for (Index p = 0; p < per; ++p) {
      const Index row = i * per + p;
      for (Index j = 0; j < d; ++j) {
        values(row, j) = centers(i, j) + spec.spread * normal(rng);
      }
      labels.push_back({static_cast<std::int32_t>(i)});
    }
  }
  return {FeatureMatrix(std::move(values)), LabelSet::from_rows(std::move(labels))};
}

HoldoutSplit holdout_split(const LabelSet& labels, double query_fraction,
                           std::uint64_t seed) {
  if (!(query_fraction >= 0.0 && query_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "query fraction must lie in [0, 1)");
  }
  std::map<std::int32_t, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels.labels[i].front()].push_back(static_cast<Index>(i));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> is_query(labels.size(), 0);
  for (auto& [label, rows] : by_class) {
    auto take = static_cast<std::size_t>(
        std::llround(query_fraction * static_cast<double>(rows.size())));
    if (query_fraction > 0.0 && rows.size() >= 2) take = std::max<std::size_t>(take, 1);
    take = std::min(take, rows.size() - 1);
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t t = 0; t < take; ++t) is_query[static_cast<std::size_t>(rows[t])] = 1;
  }
  HoldoutSplit split;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (is_query[i] ? split.query : split.train).push_back(static_cast<Index>(i));
  }
  return split;
}

}  // namespace esh

#include "binary_io.hpp"
#include "esh/encoder.hpp"
#include "esh/error.hpp"

#include <zlib.h>

#include <cmath>
#include <set>
#include <string>

namespace esh {
namespace {

constexpr std::string_view kModelMagic = "ESHM";
constexpr std::uint8_t kModelVersion = 1;
constexpr std::size_t kTagSize = 4;
const std::set<std::string> kRequired = {"META", "STAT", "ANCH", "LAMB", "PROJ", "VOTE"};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_vector(detail::ByteWriter& w, const Vector& v) {
  w.u64(static_cast<std::uint64_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

template <typename M>
void put_matrix(detail::ByteWriter& w, const M& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
  }
}

Index checked_count(detail::ByteReader& r, std::size_t elem_bytes) {
  const std::uint64_t n = r.u64();
  if (elem_bytes > 0 && n > r.remaining() / elem_bytes) {
    throw Error(ErrorCode::kCorruption, "model section length exceeds payload");
  }
  return static_cast<Index>(n);
}

Vector get_vector(detail::ByteReader& r) {
  const Index n = checked_count(r, 8);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = r.f64();
  return v;
}

template <typename M>
M get_matrix(detail::ByteReader& r) {
  const Index rows = checked_count(r, 0);
  const Index cols = checked_count(r, 0);
  if (rows < 0 || cols < 0 || (cols > 0 && static_cast<std::uint64_t>(rows) >
                                               r.remaining() / 8 / static_cast<std::uint64_t>(cols))) {
    throw Error(ErrorCode::kCorruption, "model matrix exceeds payload");
  }
  M m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = r.f64();
  }
  return m;
}

template <typename Fill>
void section(detail::ByteWriter& out, std::string_view tag, Fill fill) {
  detail::ByteWriter body;
  fill(body);
  out.tag(tag);
  out.u64(body.buffer().size());
  out.bytes(body.buffer().data(), body.buffer().size());
}

}  // namespace

void save_model(const HashModel& model, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.tag(kModelMagic);
  out.u8(kModelVersion);

  section(out, "META", [&](detail::ByteWriter& w) {
    w.u64(model.config_hash);
    w.u8(model.query_mode == QueryMode::kGraph ? 0 : 1);
    w.u64(static_cast<std::uint64_t>(model.anchors.s));
    w.f64(model.anchors.sigma2);
  });
  section(out, "STAT", [&](detail::ByteWriter& w) {
    put_vector(w, model.stats.mean);
    put_vector(w, model.stats.std);
  });
  section(out, "ANCH", [&](detail::ByteWriter& w) { put_matrix(w, model.anchors.centers); });
  section(out, "LAMB", [&](detail::ByteWriter& w) { put_vector(w, model.degrees.lambda); });
  section(out, "PROJ", [&](detail::ByteWriter& w) { put_matrix(w, model.w); });
  section(out, "VOTE", [&](detail::ByteWriter& w) { put_matrix(w, model.vote_matrix); });
  if (model.train_codes) {
    section(out, "CODE", [&](detail::ByteWriter& w) {
      w.u64(static_cast<std::uint64_t>(model.train_codes->size()));
      w.u64(static_cast<std::uint64_t>(model.train_codes->bits()));
      for (auto word : model.train_codes->words()) w.u64(word);
    });
  }
  if (model.train_affinity) {
    const auto& z = *model.train_affinity;
    section(out, "ZAFF", [&](detail::ByteWriter& w) {
      w.u64(static_cast<std::uint64_t>(z.rows()));
      w.u64(static_cast<std::uint64_t>(z.anchors()));
      w.u64(static_cast<std::uint64_t>(z.per_row()));
      for (Index i = 0; i < z.rows(); ++i) {
        const auto idx = z.indices(i);
        const auto wt = z.weights(i);
        for (std::size_t t = 0; t < idx.size(); ++t) {
          w.u32(static_cast<std::uint32_t>(idx[t]));
          w.f64(wt[t]);
        }
      }
    });
  }
  out.u32(crc_of(out.buffer().data(), out.buffer().size()));
  detail::write_file(path, out.buffer());
}

HashModel load_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const std::string name = path.string();
  if (bytes.size() < kModelMagic.size() + 1 + 4) {
    throw Error(ErrorCode::kCorruption, name + ": model file truncated");
  }
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kModelMagic) {
    throw Error(ErrorCode::kFormat, name + ": missing ESHM magic");
  }
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader trailer(bytes.data() + body, 4, name);
  if (trailer.u32() != crc_of(bytes.data(), body)) {
    throw Error(ErrorCode::kCorruption, name + ": checksum mismatch");
  }
  if (bytes[4] != kModelVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                name + ": unsupported model version " + std::to_string(bytes[4]));
  }

  HashModel model;
  std::set<std::string> seen;
  detail::ByteReader r(bytes.data() + 5, body - 5, name);
  while (r.remaining() > 0) {
    const std::string tag = r.tag(kTagSize);
    const std::uint64_t length = r.u64();
    if (length > r.remaining()) {
      throw Error(ErrorCode::kCorruption, name + ": section " + tag + " overruns file");
    }
    detail::ByteReader s = r.sub(static_cast<std::size_t>(length));
    seen.insert(tag);
    if (tag == "META") {
      model.config_hash = s.u64();
      const std::uint8_t mode = s.u8();
      if (mode > 1) throw Error(ErrorCode::kCorruption, name + ": bad query mode");
      model.query_mode = mode == 0 ? QueryMode::kGraph : QueryMode::kLinear;
      model.anchors.s = static_cast<Index>(s.u64());
      model.anchors.sigma2 = s.f64();
    } else if (tag == "STAT") {
      model.stats.mean = get_vector(s);
      model.stats.std = get_vector(s);
    } else if (tag == "ANCH") {
      model.anchors.centers = get_matrix<RowMatrix>(s);
    } else if (tag == "LAMB") {
      model.degrees.lambda = get_vector(s);
    } else if (tag == "PROJ") {
      model.w = get_matrix<Matrix>(s);
    } else if (tag == "VOTE") {
      model.vote_matrix = get_matrix<Matrix>(s);
    } else if (tag == "CODE") {
      const Index n = checked_count(s, 0);
      const Index k = checked_count(s, 0);
      if (k < 1 || n < 0) throw Error(ErrorCode::kCorruption, name + ": bad code shape");
      const auto per_code = static_cast<std::uint64_t>((k + 63) / 64);
      if (static_cast<std::uint64_t>(n) > s.remaining() / 8 / per_code ||
          static_cast<std::uint64_t>(n) * per_code * 8 != s.remaining()) {
        throw Error(ErrorCode::kCorruption, name + ": code section size mismatch");
      }
      PackedCodes codes(n, k);
      std::vector<std::uint64_t> words(codes.words().size());
      for (auto& word : words) word = s.u64();
      codes.assign_words(std::move(words));
      model.train_codes = std::move(codes);
    } else if (tag == "ZAFF") {
      const Index n = checked_count(s, 0);
      const Index m = checked_count(s, 0);
      const Index per = checked_count(s, 0);
      if (per < 1 || static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(per) * 12 !=
                         s.remaining()) {
        throw Error(ErrorCode::kCorruption, name + ": affinity section size mismatch");
      }
      SparseAffinityRows z(n, m, per);
      for (Index i = 0; i < n; ++i) {
        auto idx = z.indices(i);
        auto wt = z.weights(i);
        for (Index t = 0; t < per; ++t) {
          const std::uint32_t j = s.u32();
          if (j >= static_cast<std::uint64_t>(m)) {
            throw Error(ErrorCode::kCorruption, name + ": affinity index out of range");
          }
          idx[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(j);
          wt[static_cast<std::size_t>(t)] = s.f64();
        }
      }
      model.train_affinity = std::move(z);
    }
    if (kRequired.count(tag) && s.remaining() != 0) {
      throw Error(ErrorCode::kCorruption, name + ": trailing bytes in section " + tag);
    }
    // unknown sections are skipped
  }

  for (const auto& required : kRequired) {
    if (!seen.count(required)) {
      throw Error(ErrorCode::kCorruption, name + ": missing section " + required);
    }
  }
  const Index d = model.w.rows();
  const Index k = model.w.cols();
  const Index m = model.anchors.size();
  const bool consistent =
      d > 0 && k > 0 && model.stats.mean.size() == d && model.stats.std.size() == d &&
      model.anchors.dims() == d && model.degrees.lambda.size() == m &&
      model.vote_matrix.rows() == k && model.vote_matrix.cols() == m &&
      model.anchors.s >= 1 && model.anchors.s <= m && model.anchors.sigma2 > 0.0 &&
      (!model.train_codes || model.train_codes->bits() == k) &&
      (!model.train_affinity || model.train_affinity->anchors() == m);
  if (!consistent) {
    throw Error(ErrorCode::kCorruption, name + ": model sections are inconsistent");
  }
  return model;
}

}  // namespace esh

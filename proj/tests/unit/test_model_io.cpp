#include "support.hpp"

#include <esh/encoder.hpp>
#include <esh/optimizer.hpp>

#include <cstring>

using namespace esh;
using testing_support::TempDir;
using testing_support::read_bytes;
using testing_support::write_bytes;

namespace {

HashModel small_model(bool keep_affinity) {
  SyntheticSpec spec;
  spec.clusters = 3;
  spec.per_cluster = 30;
  spec.dims = 5;
  Standardized st = standardize(generate_synthetic(spec).features);
  AnchorParams ap;
  ap.anchors = 9;
  AnchorGraph g = build_anchor_graph(st.features, ap);
  const Matrix s = compute_s(st.features, g.z, g.degrees);
  TrainConfig tc;
  tc.bits = 3;
  tc.iterations = 10;
  const TrainResult r = train(st.features.values(), s, tc);
  ModelParts parts;
  parts.w = r.w;
  parts.train_codes = encode_train(st.features.values(), r.w);
  parts.stats = st.stats;
  parts.graph = std::move(g);
  parts.query_mode = QueryMode::kLinear;
  parts.config_hash = 0xfeedbeefULL;
  parts.keep_affinity = keep_affinity;
  return make_model(std::move(parts));
}

// Bitwise CRC-32 (reflected, polynomial 0xEDB88320).
std::uint32_t crc32_bitwise(const std::string& b, std::size_t len) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    crc ^= static_cast<std::uint8_t>(b[i]);
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::string with_crc(std::string body) {
  const std::uint32_t crc = crc32_bitwise(body, body.size());
  char le[4];
  std::memcpy(le, &crc, 4);
  return body + std::string(le, 4);
}

}  // namespace

TEST(ModelIo, RoundTripIsExact) {
  TempDir dir("model");
  for (bool keep : {false, true}) {
    const HashModel m = small_model(keep);
    save_model(m, dir / "m.eshm");
    const HashModel back = load_model(dir / "m.eshm");
    EXPECT_EQ(back.w, m.w);
    EXPECT_LT(orthogonality_residual(back.w), 1e-8);
    EXPECT_EQ(back.stats.mean, m.stats.mean);
    EXPECT_EQ(back.stats.std, m.stats.std);
    EXPECT_EQ(back.anchors.centers, m.anchors.centers);
    EXPECT_EQ(back.anchors.sigma2, m.anchors.sigma2);
    EXPECT_EQ(back.anchors.s, m.anchors.s);
    EXPECT_EQ(back.degrees.lambda, m.degrees.lambda);
    EXPECT_EQ(back.vote_matrix, m.vote_matrix);
    EXPECT_EQ(back.query_mode, QueryMode::kLinear);
    EXPECT_EQ(back.config_hash, 0xfeedbeefULL);
    ASSERT_TRUE(back.train_codes.has_value());
    EXPECT_EQ(*back.train_codes, *m.train_codes);
    EXPECT_EQ(back.train_affinity.has_value(), keep);
    if (keep) EXPECT_EQ(back.train_affinity->to_dense(), m.train_affinity->to_dense());
    // saving again gives the same bytes
    save_model(back, dir / "again.eshm");
    EXPECT_EQ(read_bytes(dir / "again.eshm"), read_bytes(dir / "m.eshm"));
  }
}

TEST(ModelIo, DetectsCorruption) {
  TempDir dir("corrupt");
  save_model(small_model(false), dir / "m.eshm");
  const std::string bytes = read_bytes(dir / "m.eshm");

  for (std::size_t at : {std::size_t{10}, bytes.size() / 2, bytes.size() - 6}) {
    std::string flipped = bytes;
    flipped[at] = static_cast<char>(flipped[at] ^ 0x40);
    write_bytes(dir / "flip.eshm", flipped);
    EXPECT_ESH_ERROR(load_model(dir / "flip.eshm"), ErrorCode::kCorruption);
  }
  write_bytes(dir / "trunc.eshm", bytes.substr(0, bytes.size() - 100));
  EXPECT_ESH_ERROR(load_model(dir / "trunc.eshm"), ErrorCode::kCorruption);
  write_bytes(dir / "tiny.eshm", "ESH");
  EXPECT_ESH_ERROR(load_model(dir / "tiny.eshm"), ErrorCode::kCorruption);
  write_bytes(dir / "magic.eshm", "XXXX" + bytes.substr(4));
  EXPECT_ESH_ERROR(load_model(dir / "magic.eshm"), ErrorCode::kFormat);
  EXPECT_ESH_ERROR(load_model(dir / "absent.eshm"), ErrorCode::kIo);
}

TEST(ModelIo, TrailerIsCrc32OfBody) {
  TempDir dir("crc");
  save_model(small_model(false), dir / "m.eshm");
  const std::string bytes = read_bytes(dir / "m.eshm");
  EXPECT_EQ(with_crc(bytes.substr(0, bytes.size() - 4)), bytes);
}

TEST(ModelIo, VersionMismatch) {
  TempDir dir("version");
  save_model(small_model(false), dir / "m.eshm");
  std::string body = read_bytes(dir / "m.eshm");
  body.resize(body.size() - 4);
  body[4] = 2;
  write_bytes(dir / "v.eshm", with_crc(body));
  EXPECT_ESH_ERROR(load_model(dir / "v.eshm"), ErrorCode::kVersionMismatch);
  // a bare edit without a fresh checksum is corruption
  std::string stale = read_bytes(dir / "m.eshm");
  stale[4] = 2;
  write_bytes(dir / "stale.eshm", stale);
  EXPECT_ESH_ERROR(load_model(dir / "stale.eshm"), ErrorCode::kCorruption);
}

TEST(ModelIo, UnknownSectionsAreSkippedAndMissingOnesRejected) {
  TempDir dir("sections");
  const HashModel m = small_model(false);
  save_model(m, dir / "m.eshm");
  std::string body = read_bytes(dir / "m.eshm");
  body.resize(body.size() - 4);
  std::string extra = "XTRA";
  const std::uint64_t len = 3;
  extra.append(reinterpret_cast<const char*>(&len), 8);
  extra += "abc";
  write_bytes(dir / "extra.eshm", with_crc(body + extra));
  EXPECT_EQ(load_model(dir / "extra.eshm").w, m.w);

  // rename the first section (META, right after magic + version)
  std::string renamed = body;
  renamed.replace(5, 4, "ATEM");
  write_bytes(dir / "missing.eshm", with_crc(renamed));
  EXPECT_ESH_ERROR(load_model(dir / "missing.eshm"), ErrorCode::kCorruption);
}

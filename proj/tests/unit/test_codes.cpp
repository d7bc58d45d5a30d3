#include "support.hpp"

#include <esh/codes.hpp>

#include <sstream>

using namespace esh;
using testing_support::TempDir;

namespace {

Matrix random_signs(Index n, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix b(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) b(i, j) = rng() & 1 ? 1.0 : -1.0;
  return b;
}

}  // namespace

TEST(PackedCodes, BitLayout) {
  PackedCodes c(2, 70);
  EXPECT_EQ(c.words_per_code(), 2);
  c.set_bit(1, 0, true);
  c.set_bit(1, 65, true);
  EXPECT_EQ(c.code(1)[0], 1u);
  EXPECT_EQ(c.code(1)[1], 2u);
  EXPECT_TRUE(c.bit(1, 65));
  EXPECT_FALSE(c.bit(0, 65));
  c.set_bit(1, 65, false);
  EXPECT_EQ(c.code(1)[1], 0u);
}

TEST(PackedCodes, PackUnpackRoundTrip) {
  for (Index k : {1, 16, 63, 64, 65, 130}) {
    const Matrix b = random_signs(9, k, static_cast<std::uint64_t>(k));
    const PackedCodes c = PackedCodes::pack(b);
    EXPECT_EQ(c.unpack(), b);
    for (Index i = 0; i < 9; ++i)
      for (Index j = 0; j < k; ++j) EXPECT_EQ(c.bit(i, j), b(i, j) > 0);
  }
  // zero packs as +1
  EXPECT_TRUE(PackedCodes::pack(Matrix::Zero(1, 3)).bit(0, 2));
}

TEST(PackedCodes, PaddingMustBeClear) {
  PackedCodes c(1, 3);
  EXPECT_ESH_ERROR(c.assign_words({0x8}), ErrorCode::kCorruption);
  EXPECT_ESH_ERROR(c.assign_words({0x1, 0x0}), ErrorCode::kShape);
  c.assign_words({0x5});
  EXPECT_TRUE(c.bit(0, 2));
}

TEST(PackedCodes, SelectRows) {
  const Matrix b = random_signs(5, 7, 1);
  const PackedCodes c = PackedCodes::pack(b);
  const std::vector<Index> ids = {4, 1};
  const PackedCodes s = c.select_rows(ids);
  EXPECT_EQ(s.unpack().row(0), b.row(4));
  EXPECT_EQ(s.unpack().row(1), b.row(1));
}

TEST(CodesIo, RoundTripAndErrors) {
  TempDir dir("codes");
  const PackedCodes c = PackedCodes::pack(random_signs(11, 100, 2));
  save_codes(dir / "c.eshb", c);
  EXPECT_EQ(load_codes(dir / "c.eshb"), c);

  std::string bytes = testing_support::read_bytes(dir / "c.eshb");
  EXPECT_EQ(bytes.substr(0, 4), "ESHB");
  testing_support::write_bytes(dir / "short.eshb", bytes.substr(0, bytes.size() - 1));
  EXPECT_ESH_ERROR(load_codes(dir / "short.eshb"), ErrorCode::kCorruption);
  std::string versioned = bytes;
  versioned[4] = 9;
  testing_support::write_bytes(dir / "v.eshb", versioned);
  EXPECT_ESH_ERROR(load_codes(dir / "v.eshb"), ErrorCode::kVersionMismatch);
  testing_support::write_bytes(dir / "magic.eshb", "XXXX" + bytes.substr(4));
  EXPECT_ESH_ERROR(load_codes(dir / "magic.eshb"), ErrorCode::kFormat);
}

TEST(CodesIo, CsvExport) {
  Matrix b(2, 3);
  b << 1, -1, 1, -1, -1, 1;
  std::ostringstream out;
  write_codes_csv(out, PackedCodes::pack(b));
  EXPECT_EQ(out.str(), "1,-1,1\n-1,-1,1\n");
}

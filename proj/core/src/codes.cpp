#include "esh/codes.hpp"

#include "binary_io.hpp"
#include "esh/error.hpp"

#include <ostream>
#include <string>

namespace esh {
namespace {

constexpr std::string_view kCodesMagic = "ESHB";
constexpr std::uint8_t kCodesVersion = 1;

Index words_for(Index k) { return (k + 63) / 64; }

std::uint64_t padding_mask(Index k) {
  const Index used = k % 64;
  return used == 0 ? 0 : ~std::uint64_t{0} << used;
}

}  // namespace

PackedCodes::PackedCodes(Index n, Index k)
    : n_(n), k_(k), words_(words_for(k)),
      data_(static_cast<std::size_t>(n * words_for(k)), 0) {
  if (n < 0 || k < 1) throw Error(ErrorCode::kShape, "codes need n >= 0 and k >= 1");
}

bool PackedCodes::bit(Index i, Index j) const {
  return (data_[static_cast<std::size_t>(i * words_ + j / 64)] >> (j % 64)) & 1u;
}

void PackedCodes::set_bit(Index i, Index j, bool positive) {
  auto& word = data_[static_cast<std::size_t>(i * words_ + j / 64)];
  const std::uint64_t mask = std::uint64_t{1} << (j % 64);
  word = positive ? (word | mask) : (word & ~mask);
}

void PackedCodes::assign_words(std::vector<std::uint64_t> words) {
  if (words.size() != data_.size()) {
    throw Error(ErrorCode::kShape, "word buffer does not match code shape");
  }
  const std::uint64_t pad = padding_mask(k_);
  for (Index i = 0; i < n_ && pad != 0; ++i) {
    if (words[static_cast<std::size_t>(i * words_ + words_ - 1)] & pad) {
      throw Error(ErrorCode::kCorruption,
                  "padding bits set in code " + std::to_string(i));
    }
  }
  data_ = std::move(words);
}

PackedCodes PackedCodes::pack(const Matrix& b) {
  PackedCodes codes(b.rows(), b.cols());
  for (Index i = 0; i < b.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) codes.set_bit(i, j, b(i, j) >= 0.0);
  }
  return codes;
}

Matrix PackedCodes::unpack() const {
  Matrix b(n_, k_);
  for (Index i = 0; i < n_; ++i) {
    for (Index j = 0; j < k_; ++j) b(i, j) = bit(i, j) ? 1.0 : -1.0;
  }
  return b;
}

PackedCodes PackedCodes::select_rows(std::span<const Index> ids) const {
  PackedCodes out(static_cast<Index>(ids.size()), k_);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= n_) {
      throw Error(ErrorCode::kInvalidArgument, "code index out of range");
    }
    const auto src = code(ids[r]);
    std::copy(src.begin(), src.end(),
              out.data_.begin() + static_cast<std::ptrdiff_t>(r) * words_);
  }
  return out;
}

void save_codes(const std::filesystem::path& path, const PackedCodes& codes) {
  detail::ByteWriter w;
  w.tag(kCodesMagic);
  w.u8(kCodesVersion);
  w.u64(static_cast<std::uint64_t>(codes.size()));
  w.u64(static_cast<std::uint64_t>(codes.bits()));
  for (auto word : codes.words()) w.u64(word);
  detail::write_file(path, w.buffer());
}

PackedCodes load_codes(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size(), path.string());
  if (bytes.size() < kCodesMagic.size() || r.tag(kCodesMagic.size()) != kCodesMagic) {
    throw Error(ErrorCode::kFormat, path.string() + ": missing ESHB magic");
  }
  if (const auto v = r.u8(); v != kCodesVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                path.string() + ": unsupported version " + std::to_string(v));
  }
  const std::uint64_t n = r.u64();
  const std::uint64_t k = r.u64();
  if (k == 0 || k > (1u << 20)) {
    throw Error(ErrorCode::kFormat, path.string() + ": bad bit count");
  }
  const std::uint64_t words = (k + 63) / 64;
  if (n > r.remaining() / 8 / words || n * words * 8 != r.remaining()) {
    throw Error(ErrorCode::kCorruption,
                path.string() + ": payload does not match header");
  }
  PackedCodes codes(static_cast<Index>(n), static_cast<Index>(k));
  std::vector<std::uint64_t> data(static_cast<std::size_t>(n * words));
  for (auto& word : data) word = r.u64();
  codes.assign_words(std::move(data));
  return codes;
}

void write_codes_csv(std::ostream& out, const PackedCodes& codes) {
  for (Index i = 0; i < codes.size(); ++i) {
    for (Index j = 0; j < codes.bits(); ++j) {
      if (j > 0) out << ',';
      out << (codes.bit(i, j) ? "1" : "-1");
    }
    out << '\n';
  }
}

}  // namespace esh

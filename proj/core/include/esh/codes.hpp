#pragma once

#include "esh/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace esh {

/// n binary codes of k bits. Bit j of a code lives in word j / 64 at
/// position j % 64; a set bit means +1, a clear bit -1. Padding bits past k
/// in the last word of each code are always zero.
class PackedCodes {
 public:
  PackedCodes() = default;
  PackedCodes(Index n, Index k);

  Index size() const noexcept { return n_; }
  Index bits() const noexcept { return k_; }
  Index words_per_code() const noexcept { return words_; }

  std::span<const std::uint64_t> code(Index i) const {
    return {data_.data() + i * words_, static_cast<std::size_t>(words_)};
  }
  bool bit(Index i, Index j) const;
  void set_bit(Index i, Index j, bool positive);

  const std::vector<std::uint64_t>& words() const noexcept { return data_; }
  /// Replaces the word buffer; throws kShape on size mismatch and
  /// kCorruption if any padding bit is set.
  void assign_words(std::vector<std::uint64_t> words);

  /// Packs the signs of b; entries >= 0 become +1.
  static PackedCodes pack(const Matrix& b);
  /// n x k matrix over {-1, +1}.
  Matrix unpack() const;

  PackedCodes select_rows(std::span<const Index> ids) const;

  friend bool operator==(const PackedCodes&, const PackedCodes&) = default;

 private:
  Index n_ = 0;
  Index k_ = 0;
  Index words_ = 0;
  std::vector<std::uint64_t> data_;
};

/// Raw packed export: "ESHB", version byte, n and k as u64 LE, then words.
void save_codes(const std::filesystem::path& path, const PackedCodes& codes);
PackedCodes load_codes(const std::filesystem::path& path);

/// One line per code, comma-separated +1/-1.
void write_codes_csv(std::ostream& out, const PackedCodes& codes);

}  // namespace esh

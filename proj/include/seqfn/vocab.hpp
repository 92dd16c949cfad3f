#pragma once

#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqfn/errors.hpp"
#include "seqfn/layers.hpp"

namespace seqfn {

/// Fixed 25-token amino-acid vocabulary.
///
///   0 PAD, 1 BOS, 2 EOS, 3 X (unknown / nonstandard residue),
///   4..23 the 20 canonical residues in alphabetical one-letter order,
///   24 MASK (reserved; never produced by encode).
namespace vocab {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnknown = 3;
inline constexpr TokenId kFirstResidue = 4;
inline constexpr TokenId kMask = 24;
inline constexpr std::size_t kSize = 25;

inline constexpr std::string_view kCanonical = "ACDEFGHIKLMNPQRSTVWY";

inline constexpr std::array<std::string_view, kSize> kSymbols = {
    "<pad>", "<bos>", "<eos>", "X", "A", "C", "D", "E", "F", "G", "H", "I", "K",
    "L",     "M",     "N",     "P", "Q", "R", "S", "T", "V", "W", "Y", "<mask>"};

/// Id for a one-letter code (case-insensitive). Letters outside the canonical
/// twenty map to X; non-letters return -1.
inline TokenId residue_id(char c) {
  if (!std::isalpha(static_cast<unsigned char>(c))) return -1;
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const auto pos = kCanonical.find(up);
  return pos == std::string_view::npos ? kUnknown : kFirstResidue + static_cast<TokenId>(pos);
}

inline bool is_special(TokenId id) { return id == kPad || id == kBos || id == kEos || id == kMask; }

/// One-letter code of a residue token (X included). Throws for specials and
/// out-of-range ids.
inline char residue_char(TokenId id) {
  if (id == kUnknown) return 'X';
  if (id >= kFirstResidue && id < kFirstResidue + 20) return kCanonical[id - kFirstResidue];
  throw FormatError("token id " + std::to_string(id) + " is not a residue");
}

}  // namespace vocab

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t original_length = 0;  // residues, excluding specials and padding
};

/// "GAV" -> [BOS, G, A, V, EOS]. Letters are case-insensitive; B, Z, U, O, J
/// and any other non-canonical letter become X.
inline TokenSequence encode(std::string_view seq) {
  if (seq.empty()) throw FormatError("cannot encode an empty sequence");
  TokenSequence out;
  out.ids.reserve(seq.size() + 2);
  out.ids.push_back(vocab::kBos);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const TokenId id = vocab::residue_id(seq[i]);
    if (id < 0) {
      throw FormatError("non-alphabetic character '" + std::string(1, seq[i]) + "' at position " + std::to_string(i));
    }
    out.ids.push_back(id);
  }
  out.ids.push_back(vocab::kEos);
  out.original_length = seq.size();
  return out;
}

/// Residue string of a token sequence; special tokens are dropped.
inline std::string decode(std::span<const TokenId> ids) {
  std::string out;
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab::kSize) {
      throw FormatError("unknown token id " + std::to_string(id));
    }
    if (vocab::is_special(id)) continue;
    out.push_back(vocab::residue_char(id));
  }
  if (out.empty()) throw FormatError("token sequence contains no residues");
  return out;
}

inline std::string decode(const TokenSequence& seq) { return decode(seq.ids); }

}  // namespace seqfn

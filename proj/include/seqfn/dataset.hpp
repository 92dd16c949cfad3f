#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "seqfn/errors.hpp"
#include "seqfn/pdb.hpp"
#include "seqfn/vocab.hpp"

namespace seqfn {

enum class Split { train, valid, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s, std::size_t line_no = 0) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw FormatError("bad split '" + std::string(s) + "' (expected train, valid or test)", line_no);
}

struct LabeledExample {
  std::string sequence;
  double label = 0.0;
  Split split = Split::train;
  std::size_t line = 0;  // source line in the CSV, 0 if synthetic
};

/// Header names to read the three fields from. Benchmarks that ship other
/// names (e.g. FLIP's "target"/"set") are adapted by changing these.
struct ColumnMap {
  std::string sequence = "sequence";
  std::string label = "label";
  std::string split = "split";
};

namespace detail {

// One CSV record (no embedded newlines). Double-quoted fields may contain
// commas and doubled quotes.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw FormatError("unterminated quoted field", line_no);
  return fields;
}

inline double parse_label(std::string_view s, std::size_t line_no) {
  s = trim(s);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw FormatError("unparsable label '" + std::string(s) + "'", line_no);
  }
  return v;
}

}  // namespace detail

/// Rows of a `sequence,label,split` table (UTF-8, LF or CRLF). Extra columns
/// are ignored; blank lines are skipped. Errors carry the 1-based line number.
inline std::vector<LabeledExample> load_labeled_csv(std::string_view text, const ColumnMap& columns = {}) {
  std::vector<LabeledExample> out;
  std::size_t line_no = 0, pos = 0;
  std::size_t col_seq = 0, col_label = 0, col_split = 0, width = 0;
  bool have_header = false;
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (!have_header) {
      auto find = [&](const std::string& name) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
          if (detail::trim(fields[i]) == name) return i;
        }
        throw FormatError("missing column '" + name + "' in header", line_no);
      };
      col_seq = find(columns.sequence);
      col_label = find(columns.label);
      col_split = find(columns.split);
      width = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != width) {
      throw FormatError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                        line_no);
    }
    LabeledExample ex;
    ex.sequence = std::string(detail::trim(fields[col_seq]));
    if (ex.sequence.empty()) throw FormatError("empty sequence", line_no);
    ex.label = detail::parse_label(fields[col_label], line_no);
    ex.split = split_from_string(detail::trim(fields[col_split]), line_no);
    ex.line = line_no;
    out.push_back(std::move(ex));
  }
  if (!have_header) throw FormatError("empty file: missing header row");
  return out;
}

/// Throws FormatError naming the first line whose label is not 0 or 1.
inline void require_binary_labels(const std::vector<LabeledExample>& examples) {
  for (const auto& ex : examples) {
    if (ex.label != 0.0 && ex.label != 1.0) {
      throw FormatError("classification label must be 0 or 1, got " + std::to_string(ex.label), ex.line);
    }
  }
}

inline std::vector<LabeledExample> select_split(const std::vector<LabeledExample>& examples, Split split) {
  std::vector<LabeledExample> out;
  for (const auto& ex : examples) {
    if (ex.split == split) out.push_back(ex);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Residue composition

struct FrequencyReport {
  std::array<std::size_t, 20> counts{};  // canonical residues, vocab::kCanonical order
  std::size_t unknown = 0;               // X and other nonstandard letters
  std::size_t sequences = 0;

  std::size_t canonical_total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  /// Percentage with X excluded from the denominator.
  double percent(std::size_t i) const { return 100.0 * counts[i] / static_cast<double>(canonical_total()); }
  /// Percentage with X counted in the denominator.
  double percent_with_unknown(std::size_t i) const {
    return 100.0 * counts[i] / static_cast<double>(canonical_total() + unknown);
  }
  double unknown_percent() const { return 100.0 * unknown / static_cast<double>(canonical_total() + unknown); }
};

template <class Range>
FrequencyReport vocab_frequencies(const Range& corpus) {
  FrequencyReport r;
  for (const auto& seq : corpus) {
    ++r.sequences;
    for (char c : std::string_view(seq)) {
      const TokenId id = vocab::residue_id(c);
      if (id == vocab::kUnknown) {
        ++r.unknown;
      } else if (id >= vocab::kFirstResidue) {
        ++r.counts[id - vocab::kFirstResidue];
      }
    }
  }
  if (r.canonical_total() == 0) throw FormatError("corpus contains no canonical residues");
  return r;
}

inline constexpr std::array<std::string_view, 20> kResidueNames = {
    "Alanine",   "Cysteine",   "Aspartic acid", "Glutamic acid", "Phenylalanine", "Glycine",  "Histidine",
    "Isoleucine", "Lysine",    "Leucine",       "Methionine",    "Asparagine",    "Proline",  "Glutamine",
    "Arginine",  "Serine",     "Threonine",     "Valine",        "Tryptophan",    "Tyrosine"};

}  // namespace seqfn

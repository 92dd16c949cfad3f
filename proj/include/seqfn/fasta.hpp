#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "seqfn/errors.hpp"
#include "seqfn/pdb.hpp"

namespace seqfn {

struct FastaRecord {
  std::string header;  // text after '>', trimmed
  std::string sequence;

  bool operator==(const FastaRecord&) const = default;
};

/// Multi-line records are concatenated and all whitespace inside sequence
/// lines is dropped. Blank lines are ignored. CRLF input is accepted.
inline std::vector<FastaRecord> parse_fasta(std::string_view text) {
  std::vector<FastaRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.starts_with('>')) {
      out.push_back({std::string(detail::trim(line.substr(1))), {}});
      continue;
    }
    if (detail::trim(line).empty()) continue;
    if (out.empty()) throw FormatError("sequence data before the first '>' header", line_no);
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) out.back().sequence.push_back(c);
    }
  }
  return out;
}

inline std::string write_fasta(const std::vector<FastaRecord>& records, std::size_t width = 60) {
  std::string out;
  for (const auto& r : records) {
    out += '>';
    out += r.header;
    out += '\n';
    for (std::size_t i = 0; i < r.sequence.size(); i += width) {
      out.append(r.sequence, i, width);
      out += '\n';
    }
  }
  return out;
}

}  // namespace seqfn

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace seqfn {

struct ChainSequence {
  char chain_id = ' ';
  std::string sequence;  // one-letter codes, nonstandard residues as X
};

struct PdbSequences {
  std::vector<ChainSequence> chains;  // file order of first appearance
  std::vector<std::string> warnings;  // one per skipped line
};

/// Standard three-letter residue code -> one-letter code; anything else is X
/// (so MSE, nucleotides and ligands collapse to X).
inline char residue_from_three_letter(std::string_view code) {
  static constexpr std::pair<std::string_view, char> kTable[] = {
      {"ALA", 'A'}, {"ARG", 'R'}, {"ASN", 'N'}, {"ASP", 'D'}, {"CYS", 'C'}, {"GLN", 'Q'}, {"GLU", 'E'},
      {"GLY", 'G'}, {"HIS", 'H'}, {"ILE", 'I'}, {"LEU", 'L'}, {"LYS", 'K'}, {"MET", 'M'}, {"PHE", 'F'},
      {"PRO", 'P'}, {"SER", 'S'}, {"THR", 'T'}, {"TRP", 'W'}, {"TYR", 'Y'}, {"VAL", 'V'}};
  std::string up(code);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& [three, one] : kTable) {
    if (three == up) return one;
  }
  return 'X';
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool is_uint(std::string_view s) {
  s = trim(s);
  if (s.empty()) return false;
  unsigned v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool valid_residue_token(std::string_view t) {
  return !t.empty() && t.size() <= 3 &&
         std::all_of(t.begin(), t.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
}

}  // namespace detail

/// Chain sequences from the SEQRES records of a PDB-format text.
///
/// Lines in the fixed-column layout (serial in columns 8-10, chain id in
/// column 12, residue count in 14-17, residue names from column 20) are read
/// by column; whitespace-separated "SEQRES <serial> <chain> <count> <res>..."
/// lines are accepted as well. Anything else starting with SEQRES is skipped
/// with a warning. A file without SEQRES records yields no chains.
inline PdbSequences parse_pdb(std::string_view text) {
  PdbSequences out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.starts_with("SEQRES")) continue;

    char chain = 0;
    std::vector<std::string_view> residues;
    const bool fixed = line.size() >= 20 && line[6] == ' ' && line[10] == ' ' && line[12] == ' ' &&
                       detail::is_uint(line.substr(7, 3)) && detail::is_uint(line.substr(13, 4)) &&
                       line.substr(17, 2) == "  ";
    if (fixed) {
      chain = line[11];
      residues = detail::split_ws(line.substr(19));
    } else {
      auto tok = detail::split_ws(line);
      if (tok.size() >= 5 && tok[0] == "SEQRES" && detail::is_uint(tok[1]) && tok[2].size() == 1 &&
          detail::is_uint(tok[3])) {
        chain = tok[2][0];
        residues.assign(tok.begin() + 4, tok.end());
      }
    }
    const bool ok = chain != 0 && !residues.empty() &&
                    std::all_of(residues.begin(), residues.end(), detail::valid_residue_token);
    if (!ok) {
      out.warnings.push_back("line " + std::to_string(line_no) + ": malformed SEQRES record skipped");
      continue;
    }
    auto it = std::find_if(out.chains.begin(), out.chains.end(),
                           [chain](const ChainSequence& c) { return c.chain_id == chain; });
    if (it == out.chains.end()) {
      out.chains.push_back({chain, {}});
      it = std::prev(out.chains.end());
    }
    for (auto r : residues) it->sequence.push_back(residue_from_three_letter(r));
  }
  return out;
}

/// Corpus filter: a structure qualifies when it has exactly one chain.
inline bool is_single_chain(const PdbSequences& pdb) { return pdb.chains.size() == 1; }

}  // namespace seqfn

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "seqfn/batching.hpp"
#include "seqfn/dataset.hpp"
#include "seqfn/fasta.hpp"
#include "seqfn/pdb.hpp"
#include "seqfn/vocab.hpp"

using namespace seqfn;

namespace {

std::string read_fixture(const std::string& rel) {
  std::ifstream in(std::string(SEQFN_FIXTURES) + "/" + rel, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string random_canonical(std::mt19937_64& rng, std::size_t len, bool mixed_case = false) {
  std::string s(len, 'A');
  for (auto& c : s) {
    c = vocab::kCanonical[rng() % 20];
    if (mixed_case && rng() % 2) c = static_cast<char>(std::tolower(c));
  }
  return s;
}

}  // namespace

TEST(Vocab, LayoutAndBijection) {
  EXPECT_EQ(vocab::kSize, 25u);
  EXPECT_EQ(vocab::kPad, 0);
  EXPECT_EQ(vocab::kBos, 1);
  EXPECT_EQ(vocab::kEos, 2);
  EXPECT_EQ(vocab::kUnknown, 3);
  EXPECT_EQ(vocab::residue_id('A'), 4);
  EXPECT_EQ(vocab::residue_id('Y'), 23);
  for (TokenId id = vocab::kUnknown; id < vocab::kFirstResidue + 20; ++id) {
    EXPECT_EQ(vocab::residue_id(vocab::residue_char(id)), id);
    EXPECT_EQ(std::string(1, vocab::residue_char(id)), vocab::kSymbols[id]);
  }
}

TEST(Encode, AddsSpecials) {
  auto t = encode("GAV");
  std::vector<TokenId> expect{vocab::kBos, vocab::residue_id('G'), vocab::residue_id('A'), vocab::residue_id('V'),
                              vocab::kEos};
  EXPECT_EQ(t.ids, expect);
  EXPECT_EQ(t.original_length, 3u);
}

TEST(Encode, AblKinasePrefixHasNoUnknowns) {
  auto t = encode("GAMDPSSPNYDKWEMERTDITMKHKLGGGQY");
  EXPECT_EQ(t.original_length, 31u);
  EXPECT_EQ(t.ids.size(), 33u);
  EXPECT_EQ(std::count(t.ids.begin(), t.ids.end(), vocab::kUnknown), 0);
}

TEST(Encode, NonstandardLettersBecomeUnknown) {
  auto t = encode("GBX");
  EXPECT_EQ(t.ids[1], vocab::residue_id('G'));
  EXPECT_EQ(t.ids[2], vocab::kUnknown);
  EXPECT_EQ(t.ids[3], vocab::kUnknown);
  for (char c : std::string("BZUOJ")) EXPECT_EQ(vocab::residue_id(c), vocab::kUnknown);
}

TEST(Encode, Errors) {
  EXPECT_THROW(encode(""), FormatError);
  try {
    encode("GA1V");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos);
  }
}

TEST(Decode, RoundTripAndErrors) {
  EXPECT_EQ(decode(encode("MKV")), "MKV");
  std::vector<TokenId> pads(4, vocab::kPad);
  EXPECT_THROW(decode(pads), FormatError);
  std::vector<TokenId> bad{1, 30, 2};
  EXPECT_THROW(decode(bad), FormatError);
}

TEST(Decode, RoundTripPropertyOverRandomCanonicalStrings) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 2000; ++i) {
    auto s = random_canonical(rng, 1 + rng() % 60, true);
    std::string up = s;
    for (auto& c : up) c = static_cast<char>(std::toupper(c));
    ASSERT_EQ(decode(encode(s)), up);
  }
}

TEST(ParsePdb, FixedColumnSeqres) {
  auto r = parse_pdb(read_fixture("pdb_dir/1gav.pdb"));
  ASSERT_EQ(r.chains.size(), 1u);
  EXPECT_EQ(r.chains[0].chain_id, 'A');
  EXPECT_EQ(r.chains[0].sequence, "GAV");
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_TRUE(is_single_chain(r));
}

TEST(ParsePdb, WhitespaceSeparatedRecord) {
  auto r = parse_pdb("SEQRES 1 A 3 GLY ALA VAL\n");
  ASSERT_EQ(r.chains.size(), 1u);
  EXPECT_EQ(r.chains[0].sequence, "GAV");
}

TEST(ParsePdb, SelenomethionineAndWaterBecomeUnknown) {
  EXPECT_EQ(residue_from_three_letter("MSE"), 'X');
  auto r = parse_pdb(read_fixture("pdb_dir/3mse.pdb"));
  ASSERT_EQ(r.chains.size(), 1u);
  EXPECT_EQ(r.chains[0].sequence, "GAMDPSSPNYDKWEMERTDITMKHKLGGGQYXX");
}

TEST(ParsePdb, TwoChainsInFileOrder) {
  auto r = parse_pdb(read_fixture("pdb_dir/2two.pdb"));
  ASSERT_EQ(r.chains.size(), 2u);
  EXPECT_EQ(r.chains[0].chain_id, 'A');
  EXPECT_EQ(r.chains[0].sequence, "MKTAYIAKQR");
  EXPECT_EQ(r.chains[1].chain_id, 'B');
  EXPECT_EQ(r.chains[1].sequence, "GSHMLEDP");
  EXPECT_FALSE(is_single_chain(r));
}

TEST(ParsePdb, MalformedLinesWarnAndSkip) {
  auto r = parse_pdb(read_fixture("malformed.pdb"));
  ASSERT_EQ(r.chains.size(), 1u);
  EXPECT_EQ(r.chains[0].sequence, "GAV");
  ASSERT_EQ(r.warnings.size(), 2u);
  EXPECT_NE(r.warnings[0].find("line 4"), std::string::npos);
}

TEST(ParsePdb, NoSeqresIsEmptyNotError) {
  auto r = parse_pdb(read_fixture("no_seqres.pdb"));
  EXPECT_TRUE(r.chains.empty());
  EXPECT_TRUE(parse_pdb("").chains.empty());
}

TEST(ParsePdb, IdempotentAndOrderStable) {
  auto text = read_fixture("pdb_dir/2two.pdb");
  auto a = parse_pdb(text), b = parse_pdb(text);
  ASSERT_EQ(a.chains.size(), b.chains.size());
  for (std::size_t i = 0; i < a.chains.size(); ++i) {
    EXPECT_EQ(a.chains[i].chain_id, b.chains[i].chain_id);
    EXPECT_EQ(a.chains[i].sequence, b.chains[i].sequence);
  }
}

TEST(ParseFasta, MultiLineAndEmpty) {
  auto r = parse_fasta(">p1\nGA\nV");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (FastaRecord{"p1", "GAV"}));
  EXPECT_TRUE(parse_fasta("").empty());
  auto f = parse_fasta(read_fixture("sample.fasta"));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].header, "p1 first protein");
  EXPECT_EQ(f[0].sequence, "GAVLKM");
  EXPECT_EQ(f[1].sequence, "mkvla");
  EXPECT_EQ(parse_fasta(">a\r\nG A\r\n")[0].sequence, "GA");
}

TEST(ParseFasta, DataBeforeHeaderIsError) {
  try {
    parse_fasta("\nGAV\n>p\nG\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line, 2u);
  }
}

TEST(ParseFasta, WriteParseRoundTripProperty) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<FastaRecord> recs;
    const std::size_t n = rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      recs.push_back({"seq" + std::to_string(i) + " desc", random_canonical(rng, 1 + rng() % 200)});
    }
    EXPECT_EQ(parse_fasta(write_fasta(recs, 1 + rng() % 80)), recs);
  }
}

TEST(LabeledCsv, ThreeRowFixture) {
  auto ex = load_labeled_csv(read_fixture("labeled.csv"));
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].sequence, "MKVLA");
  EXPECT_DOUBLE_EQ(ex[0].label, 0.706);
  EXPECT_EQ(ex[0].split, Split::train);
  EXPECT_EQ(ex[1].split, Split::valid);
  EXPECT_EQ(ex[2].split, Split::test);
  EXPECT_DOUBLE_EQ(ex[2].label, -0.25);
  EXPECT_EQ(ex[2].line, 4u);
}

TEST(LabeledCsv, BadSplitReportsLine) {
  try {
    load_labeled_csv(read_fixture("bad_split.csv"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line, 3u);
    EXPECT_NE(std::string(e.what()).find("dev"), std::string::npos);
  }
}

TEST(LabeledCsv, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      load_labeled_csv(text);
    } catch (const FormatError& e) {
      return e.line;
    }
    return 0;
  };
  EXPECT_EQ(line_of("sequence,split\nMKV,train\n"), 1u);
  EXPECT_EQ(line_of("sequence,label,split\nMKV,0.1,train\nMKV,abc,train\n"), 3u);
  EXPECT_EQ(line_of("sequence,label,split\nMKV,nan,train\n"), 2u);
  EXPECT_EQ(line_of("sequence,label,split\nMKV,0.1\n"), 2u);
  EXPECT_THROW(load_labeled_csv(""), FormatError);
}

TEST(LabeledCsv, ColumnMappingAndQuoting) {
  ColumnMap flip{"sequence", "target", "set"};
  auto ex = load_labeled_csv("set,sequence,target,validation\ntrain,\"MK,V\",1.25,False\n", flip);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].sequence, "MK,V");
  EXPECT_EQ(ex[0].label, 1.25);
}

TEST(LabeledCsv, BinaryLabelCheckNamesLine) {
  auto ex = load_labeled_csv(read_fixture("binary.csv"));
  try {
    require_binary_labels(ex);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line, 4u);
  }
}

TEST(Batching, PadsToBatchMaxAndMarksPads) {
  std::vector<TokenSequence> seqs{encode("GAV"), encode("MKVLA")};
  auto plan = make_batches(seqs, 64, 1, false);
  ASSERT_EQ(plan.batches.size(), 1u);
  const auto& b = plan.batches[0];
  EXPECT_EQ(b.width, 7u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(b.ids[r].size(), 7u);
    const auto n = seqs[b.indices[r]].ids.size();
    for (std::size_t t = 0; t < 7; ++t) {
      EXPECT_EQ(b.is_pad[r][t], t >= n ? 1 : 0);
      if (t >= n) {
        EXPECT_EQ(b.ids[r][t], vocab::kPad);
      }
    }
    EXPECT_EQ(b.unpadded(r).size(), n);
  }
}

TEST(Batching, DeterministicAndPartitionsInput) {
  std::mt19937_64 rng(5);
  std::vector<TokenSequence> seqs;
  for (int i = 0; i < 200; ++i) seqs.push_back(encode(random_canonical(rng, 1 + rng() % 50)));
  seqs.push_back(encode(std::string(100, 'A')));  // longer than max_tokens
  auto a = make_batches(seqs, 96, 42, true);
  auto b = make_batches(seqs, 96, 42, true);
  ASSERT_EQ(a.batches.size(), b.batches.size());
  for (std::size_t i = 0; i < a.batches.size(); ++i) EXPECT_EQ(a.batches[i].indices, b.batches[i].indices);
  EXPECT_EQ(a.skipped, std::vector<std::size_t>{200});

  std::multiset<std::vector<TokenId>> in, out;
  for (std::size_t i = 0; i < 200; ++i) in.insert(seqs[i].ids);
  for (const auto& batch : a.batches) {
    EXPECT_LE(batch.size() * batch.width, 96u);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      auto row = batch.unpadded(r);
      out.insert(std::vector<TokenId>(row.begin(), row.end()));
    }
  }
  EXPECT_EQ(in, out);
  auto c = make_batches(seqs, 96, 43, true);
  bool differs = false;
  for (std::size_t i = 0; i < std::min(a.batches.size(), c.batches.size()); ++i) {
    differs |= a.batches[i].indices != c.batches[i].indices;
  }
  EXPECT_TRUE(differs);
}

TEST(Frequencies, SimpleCorpus) {
  std::vector<std::string> corpus{"AAAG"};
  auto r = vocab_frequencies(corpus);
  EXPECT_DOUBLE_EQ(r.percent(0), 75.0);
  EXPECT_DOUBLE_EQ(r.percent(vocab::kCanonical.find('G')), 25.0);
}

TEST(Frequencies, NormalizationBothWays) {
  std::mt19937_64 rng(3);
  std::vector<std::string> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(random_canonical(rng, 80) + "XXB");
  auto r = vocab_frequencies(corpus);
  double excl = 0, incl = r.unknown_percent();
  for (std::size_t i = 0; i < 20; ++i) {
    excl += r.percent(i);
    incl += r.percent_with_unknown(i);
  }
  EXPECT_NEAR(excl, 100.0, 1e-9);
  EXPECT_NEAR(incl, 100.0, 1e-9);
  EXPECT_EQ(r.unknown, 90u);
  std::vector<std::string> empty;
  EXPECT_THROW(vocab_frequencies(empty), FormatError);
}

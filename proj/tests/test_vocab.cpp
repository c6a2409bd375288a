// Copyright 2026 The mvlip Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "mvlip/synthetic.hpp"
#include "mvlip/vocab.hpp"

using namespace mvlip;

TEST(Vocabulary, FixedLayout) {
  const auto& v = build_vocabulary();
  EXPECT_EQ(v.size(), 14);
  EXPECT_EQ(v.symbol(v.blank_id()), "[blank]");
  EXPECT_EQ(v.blank_id(), 0);
  EXPECT_EQ(v.sos_eos_id(), 13);
  EXPECT_NE(v.blank_id(), v.sos_eos_id());
  std::set<std::string> names(v.symbols().begin(), v.symbols().end());
  EXPECT_EQ(names.size(), 14u);
  std::set<std::string> classes;
  for (int i = 0; i < v.size(); ++i)
    if (v.is_viseme(i)) classes.insert(v.symbol(i));
  EXPECT_EQ(classes, (std::set<std::string>{"V1", "V2", "V3", "V4", "A", "B", "C", "D", "E", "F", "G", "H"}));
  for (int i = 0; i < v.size(); ++i) EXPECT_EQ(v.id(v.symbol(i)), i);
}

TEST(Vocabulary, StableOrder) {
  // serialized symbol order must not depend on the process
  std::ostringstream os;
  for (const auto& s : build_vocabulary().symbols()) os << s << ' ';
  EXPECT_EQ(os.str(), "[blank] V1 V2 V3 V4 A B C D E F G H [sos/eos] ");
}

TEST(Vocabulary, EncodeDecode) {
  const auto& v = build_vocabulary();
  EXPECT_EQ(encode_labels({"V1", "A"}), (LabelIds{v.id("V1"), v.id("A")}));
  EXPECT_THROW(encode_labels({"Q"}), Error);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(0, 11), len(0, 20);
  for (int k = 0; k < 100; ++k) {
    VisemeSequence s;
    for (int n = len(rng); n > 0; --n) s.emplace_back(kVisemeClasses[pick(rng)]);
    EXPECT_EQ(decode_labels(encode_labels(s)), s);
  }
}

TEST(PhonemeMap, ShippedDefault) {
  auto map = PhonemeVisemeMap::load(default_data_path("phoneme_viseme.tsv"));
  EXPECT_EQ(phonemes_to_visemes({"p", "b", "m"}, map), (VisemeSequence{"A", "A", "A"}));
  EXPECT_EQ(phonemes_to_visemes({"p", "b", "m"}, map, true), (VisemeSequence{"A"}));
  EXPECT_TRUE(phonemes_to_visemes({}, map).empty());
  std::set<std::string> targets;
  for (const auto& [ph, vis] : map.entries()) targets.insert(vis);
  EXPECT_EQ(targets.size(), 12u);
}

TEST(PhonemeMap, UnknownPhonemeNamesPosition) {
  auto map = PhonemeVisemeMap::load(default_data_path("phoneme_viseme.tsv"));
  try {
    phonemes_to_visemes({"zzz"}, map);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "unknown phoneme zzz at 0");
  }
  try {
    phonemes_to_visemes({"p", "q"}, map);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "unknown phoneme q at 1");
  }
}

TEST(PhonemeMap, ParseErrors) {
  std::istringstream dup("p\tA\np\tB\n");
  EXPECT_THROW(PhonemeVisemeMap::parse(dup), Error);
  std::istringstream bad("p\tZ\n");
  EXPECT_THROW(PhonemeVisemeMap::parse(bad), Error);
  std::istringstream notab("p A\n");
  EXPECT_THROW(PhonemeVisemeMap::parse(notab), Error);
  std::istringstream ok("# comment\n\nk\tG  # trailing\n");
  EXPECT_EQ(PhonemeVisemeMap::parse(ok).entries().at("k"), "G");
}

TEST(PhonemeMap, CollapseIsIdempotent) {
  auto map = PhonemeVisemeMap::load(default_data_path("phoneme_viseme.tsv"));
  std::vector<std::string> phones;
  for (const auto& [ph, _] : map.entries()) phones.push_back(ph);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<size_t> pick(0, phones.size() - 1);
  for (int k = 0; k < 200; ++k) {
    std::vector<std::string> seq;
    for (int n = 0; n < 15; ++n) seq.push_back(phones[pick(rng)]);
    auto once = phonemes_to_visemes(seq, map, true);
    EXPECT_EQ(collapse_repeats(once), once);
    EXPECT_EQ(phonemes_to_visemes(seq, map).size(), seq.size());
  }
}

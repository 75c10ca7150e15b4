#include <gtest/gtest.h>

#include <snplab/adversary.hpp>

#include "support/recipe_oracle.hpp"

using namespace snplab;

namespace {

KnowledgeBase absorb_all(const std::vector<Term>& kb) {
  KnowledgeBase k;
  for (auto& t : kb) k = k.absorb(t);
  return k;
}

}  // namespace

TEST(Oracle, AgreesOnHandPickedCases) {
  Term k = Term::fresh(1), m = Term::fresh(2);
  std::vector<Term> kb{snenc(m, N(0), k), pair(k, pub("a"))};
  EXPECT_TRUE(oracle::derivable(kb, m));
  EXPECT_TRUE(absorb_all(kb).derivable(m));
  std::vector<Term> sig{m, pk(k)};
  EXPECT_FALSE(oracle::derivable(sig, sign(m, k)));
  EXPECT_FALSE(absorb_all(sig).derivable(sign(m, k)));
}

// 1000 knowledge bases, at most 12 leaves each, terms of depth at most 4, recipes up to depth 5
TEST(Oracle, ThousandRandomKnowledgeBasesAgreeAtDepthFive) {
  oracle::Generator g(1);
  std::size_t goals = 0, mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    auto kb = g.kb(12, 4);
    auto engine = absorb_all(kb);
    for (auto& goal : oracle::goals(kb, g)) {
      ++goals;
      bool a = engine.derivable(goal), b = oracle::derivable(kb, goal, 5);
      if (a != b) ++mismatches;
      EXPECT_EQ(a, b) << "kb #" << i << " goal " << goal.str();
    }
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_GT(goals, 5000u);
}

TEST(Oracle, FixpointAgreesOnBroaderKnowledgeBases) {
  oracle::Generator g(7);
  for (int i = 0; i < 300; ++i) {
    auto kb = g.kb(20, 5);
    auto engine = absorb_all(kb);
    for (auto& goal : oracle::goals(kb, g, 3))
      EXPECT_EQ(engine.derivable(goal), oracle::derivable(kb, goal, 64)) << "kb #" << i << " " << goal.str();
  }
}

#include <gtest/gtest.h>

#include <snplab/adversary.hpp>

using namespace snplab;

namespace {

KnowledgeBase kb_of(std::initializer_list<Term> ts) {
  KnowledgeBase kb;
  for (auto& t : ts) kb = kb.absorb(t);
  return kb;
}

}  // namespace

TEST(Absorb, DecryptsWhenNonceAndKeyKnown) {
  Term k = Term::fresh(1), m = Term::fresh(2);
  auto kb = kb_of({k, N(0)}).absorb(snenc(m, N(0), k));
  EXPECT_TRUE(kb.knows(m));
}

TEST(Absorb, CiphertextFirstThenKey) {
  Term k = Term::fresh(1), m = Term::fresh(2);
  auto kb = kb_of({snenc(m, N(0), k)});
  EXPECT_FALSE(kb.derivable(m));
  kb = kb.absorb(k);
  EXPECT_TRUE(kb.knows(m));
}

TEST(Absorb, SplitsPairs) {
  Term a = Term::fresh(1), b = Term::fresh(2);
  auto kb = kb_of({pair(a, b)});
  EXPECT_TRUE(kb.knows(a));
  EXPECT_TRUE(kb.knows(b));
}

TEST(Absorb, NonceReuseExposesKey) {
  Term k = Term::fresh(9);
  std::vector<ActionEvent> evs;
  auto kb = kb_of({snenc(Term::fresh(1), N(1), k)}).absorb(snenc(Term::fresh(2), N(1), k), &evs);
  EXPECT_TRUE(kb.knows(k));
  EXPECT_TRUE(kb.knows(Term::fresh(1)));
  EXPECT_TRUE(kb.knows(Term::fresh(2)));
  ASSERT_EQ(evs.size(), 1u);
  EXPECT_EQ(evs[0].label, "ReuseNonceKey");
  EXPECT_EQ(evs[0].args[0], N(1));
  EXPECT_EQ(evs[0].args[1], k);
}

TEST(Absorb, SameMessageTwiceIsNotReuse) {
  Term k = Term::fresh(9);
  Term c = snenc(Term::fresh(1), N(1), k);
  std::vector<ActionEvent> evs;
  auto kb = kb_of({c}).absorb(c, &evs);
  EXPECT_FALSE(kb.derivable(k));
  EXPECT_TRUE(evs.empty());
}

TEST(Absorb, DifferentNoncesAreNotReuse) {
  Term k = Term::fresh(9);
  auto kb = kb_of({snenc(Term::fresh(1), N(1), k), snenc(Term::fresh(2), N(3), k)});
  EXPECT_FALSE(kb.derivable(k));
}

TEST(Absorb, PublicationLogKeepsNetworkOrder) {
  auto kb = kb_of({pub("b"), pub("a"), pub("b")});
  ASSERT_EQ(kb.network().size(), 2u);
  EXPECT_EQ(kb.network()[0], pub("b"));
}

TEST(Derivable, ComposesFromKnownParts) {
  Term x = Term::fresh(1);
  auto kb = kb_of({x});
  EXPECT_TRUE(kb.derivable(hash(x)));
  EXPECT_TRUE(kb.derivable(pair(x, pub("tag"))));
  EXPECT_TRUE(kb.derivable(snenc(x, N(5), x)));
}

TEST(Derivable, UnknownFreshNameIsNot) {
  EXPECT_FALSE(KnowledgeBase().derivable(Term::fresh(7)));
  EXPECT_TRUE(KnowledgeBase().derivable(pub("anything")));
  EXPECT_TRUE(KnowledgeBase().derivable(N(12)));
}

TEST(Derivable, SignatureNeedsPrivateKey) {
  Term m = Term::fresh(1), sk = Term::fresh(2);
  auto kb = kb_of({m, pk(sk)});
  EXPECT_FALSE(kb.derivable(sign(m, sk)));
  EXPECT_TRUE(kb.absorb(sk).derivable(sign(m, sk)));
}

TEST(Derivable, HashIsOneWay) {
  Term x = Term::fresh(1);
  auto kb = kb_of({hash(x)});
  EXPECT_FALSE(kb.derivable(x));
}

TEST(Corrupt, RevealsSecretAndLogsEvent) {
  Term s = Term::fresh(4);
  std::vector<ActionEvent> evs;
  auto r = corrupt(KnowledgeBase(), s, CorruptionKind::VMPCK, CorruptionPolicy::all(), &evs);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.value().knows(s));
  ASSERT_EQ(evs.size(), 1u);
  EXPECT_EQ(evs[0].label, "CorruptVMPCK");
  EXPECT_TRUE(r.value().network().empty());
}

TEST(Corrupt, DisabledKindIsRefused) {
  auto r = corrupt(KnowledgeBase(), Term::fresh(4), CorruptionKind::CEK, CorruptionPolicy::none());
  EXPECT_EQ(r.code(), "CorruptionDisabled");
}

TEST(Corrupt, KindNamesRoundTrip) {
  for (auto k : CorruptionPolicy::all().enabled) {
    auto back = kind_from_name(kind_name(k));
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, k);
  }
}

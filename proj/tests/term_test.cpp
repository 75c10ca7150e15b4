#include <gtest/gtest.h>

#include <snplab/term.hpp>

using namespace snplab;

namespace {

Term m() { return pub("m"); }
Term k() { return Term::fresh(7); }

}  // namespace

TEST(SnDec, RightNonceAndKeyYieldsPlaintext) {
  auto r = sn_dec(snenc(m(), N(1), k()), N(1), k());
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value(), m());
}

TEST(SnDec, WrongNonceFails) {
  auto r = sn_dec(snenc(m(), N(1), k()), N(3), k());
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.code(), "WrongNonce");
}

TEST(SnDec, HashIsNotACiphertext) {
  auto r = sn_dec(hash(m()), N(1), k());
  EXPECT_EQ(r.code(), "NotCiphertext");
}

TEST(SDec, WrongKeyOrHeadFails) {
  EXPECT_EQ(s_dec(senc(m(), k()), k()).value(), m());
  EXPECT_EQ(s_dec(senc(m(), k()), Term::fresh(8)).code(), "WrongKey");
  EXPECT_EQ(s_dec(snenc(m(), N(0), k()), k()).code(), "NotCiphertext");
}

TEST(VerifySig, MatchesOnlyTheSigningKey) {
  Term sk = Term::fresh(3);
  Term s = sign(m(), sk);
  EXPECT_TRUE(verify_sig(s, m(), pk(sk)));
  EXPECT_FALSE(verify_sig(s, m(), pk(Term::fresh(4))));
  EXPECT_FALSE(verify_sig(s, pub("other"), pk(sk)));
  EXPECT_FALSE(verify_sig(s, m(), sk));
}

TEST(Counter, IncrementAddsOne) {
  EXPECT_EQ(counter_incr(N(0), 1).value(), N(1));
  EXPECT_EQ(counter_incr(N(4), 2).value(), N(6));
}

TEST(Counter, PairIsNotACounter) {
  EXPECT_EQ(counter_incr(pair(N(0), N(1)), 1).code(), "NotACounter");
}

TEST(Term, StructuralEqualityAndOrder) {
  Term a = tup({pub("x"), N(2), Term::fresh(1)});
  Term b = tup({pub("x"), N(2), Term::fresh(1)});
  EXPECT_EQ(a, b);
  EXPECT_EQ(Term::compare(a, b), 0);
  Term c = tup({pub("x"), N(3), Term::fresh(1)});
  EXPECT_NE(a, c);
  EXPECT_NE(Term::compare(a, c), 0);
  EXPECT_EQ(Term::compare(a, c), -Term::compare(c, a));
}

TEST(Term, TupleRoundTrip) {
  std::vector<Term> xs{pub("a"), N(1), Term::fresh(2), pub("d")};
  auto back = untup(tup(xs), 4);
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, xs);
  EXPECT_FALSE(untup(pub("a"), 2));
}

TEST(Term, HeadNamesRoundTrip) {
  for (Head h : {Head::Pair, Head::SnEnc, Head::SEnc, Head::Sign, Head::Pk, Head::Kdf, Head::Mac, Head::Hash}) {
    auto back = head_from_name(head_name(h));
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, h);
    EXPECT_TRUE(is_constructor(h));
  }
  EXPECT_FALSE(head_from_name("nope"));
}

TEST(Fresh, SourceNeverRepeats) {
  FreshSource f;
  Term a = f.next(), b = f.next();
  EXPECT_NE(a, b);
  EXPECT_EQ(f.issued(), 3u);
}

#include <gtest/gtest.h>

#include <snplab/builtins.hpp>
#include <snplab/explore.hpp>
#include <snplab/lemmas.hpp>

using namespace snplab;

namespace {

Trace builtin_trace(const std::string& name, Flags extra = {}) {
  auto* b = find_builtin(name);
  EXPECT_NE(b, nullptr) << name;
  auto rr = run_scenario(with_flags(b->scenario, extra, false));
  EXPECT_TRUE(rr.ok()) << name << ": " << (rr.error ? rr.error->detail : "");
  return rr.world.trace;
}

bool holds(const std::string& lemma, const Trace& tr) {
  auto* l = find_lemma(lemma);
  EXPECT_NE(l, nullptr) << lemma;
  return (*l)(tr).holds;
}

std::vector<std::string> violated_on(const Trace& tr) {
  std::vector<std::string> out;
  for (auto& l : lemma_registry())
    if (!l(tr).holds) out.push_back(l.name);
  return out;
}

}  // namespace

TEST(Registry, NamesAreUnique) {
  std::set<std::string> names;
  for (auto& l : lemma_registry()) EXPECT_TRUE(names.insert(l.name).second) << l.name;
  EXPECT_EQ(names.size(), 36u);
}

TEST(Registry, FiveLemmasAreExpectedToFail) {
  std::set<std::string> x;
  for (auto& l : lemma_registry())
    if (!l.expectHolds) x.insert(l.name);
  EXPECT_EQ(x, (std::set<std::string>{"AuthFWGVMMsgAgreeForAttestAssocMA", "AuthFWGVMMsgAgreeForKeyDerAssocMA",
                                      "AuthGVMFWMsgAgreeForAttestAssocMA", "AuthGVMFWMsgAgreeForKeyDerAssocMA",
                                      "AttestationReportStrongIntegrityAssocMA"}));
}

TEST(Agreement, PlatformConfusionBreaksFirmwareSide) {
  auto tr = builtin_trace("platform-confusion-report");
  EXPECT_FALSE(holds("AuthFWGVMMsgAgreeForAttestAssocMA", tr));
  EXPECT_TRUE(holds("AuthFWGVMMsgAgreeForKeyDerAssocMA", tr));
}

TEST(Agreement, NoAssocVariantHoldsOnHonestRuns) {
  for (auto* n : {"honest-e2e", "swap-cycles"}) {
    auto tr = builtin_trace(n);
    EXPECT_TRUE(holds("AuthFWGVMMsgAgreeForAttestNoAssocMA", tr)) << n;
    EXPECT_TRUE(holds("AuthGVMFWMsgAgreeForKeyDerNoAssocMA", tr)) << n;
  }
}

TEST(Agreement, DeferredResponseBreaksGuestSide) {
  auto tr = builtin_trace("deferred-response-key");
  EXPECT_FALSE(holds("AuthGVMFWMsgAgreeForKeyDerAssocMA", tr));
  EXPECT_TRUE(holds("AuthGVMFWMsgAgreeForAttestAssocMA", tr));
}

TEST(Attestation, ConfusionBreaksOnlyStrongIntegrity) {
  auto tr = builtin_trace("attestation-strong-integrity");
  EXPECT_FALSE(holds("AttestationReportStrongIntegrityAssocMA", tr));
  EXPECT_TRUE(holds("AttestationReportWeakIntegrityAssocMA", tr));
  EXPECT_TRUE(holds("AttestationReportAuthenticityAssocMA", tr));
}

TEST(Secrecy, CorruptionExcusesKnowledge) {
  Term vmpck = Term::fresh(10), tid = Term::fresh(11);
  Trace tr{ev("FWLaunchGVM", {pub("P1"), Term::fresh(1), tid, vmpck, Term::fresh(2), pub("AssocMA"), Term::fresh(3)}),
           ev("CorruptVMPCK", {vmpck}), ev("AdversaryDerives", {pub("GVM_VMPCK"), vmpck, tid})};
  EXPECT_TRUE(holds("SecGVMVMPCKIsSecret", tr));
  tr.erase(tr.begin() + 1);
  EXPECT_FALSE(holds("SecGVMVMPCKIsSecret", tr));
}

TEST(Secrecy, ReplayOverChannelLeaksVmpck) {
  Flags f;
  f.replayOverComm = true;
  auto tr = builtin_trace("comm-replay", f);
  EXPECT_FALSE(holds("SecGVMVMPCKIsSecret", tr));
}

TEST(Freshness, HonestRunsKeepAllFour) {
  for (auto* n : {"honest-e2e", "swap-cycles", "ma-two-guests"}) {
    auto tr = builtin_trace(n);
    for (auto* l : {"FreshNoKeyNonceReuse", "FreshAttestationReportFreshness", "FreshMAVMRKInstallationIsUnique",
                    "FreshKeyDerivedFromFWVMRKIsGuestUnique"})
      EXPECT_TRUE(holds(l, tr)) << n << " " << l;
  }
}

TEST(Freshness, RollbackBreaksNonceReuse) {
  Flags f;
  f.ignoreRootMdEntry = true;
  auto tr = builtin_trace("swap-rollback", f);
  EXPECT_FALSE(holds("FreshNoKeyNonceReuse", tr));
}

TEST(Freshness, DuplicateInstallIsCaught) {
  Term vmpck = Term::fresh(1), addr = Term::fresh(2);
  Trace tr{ev("InstallVMRK", {vmpck, addr, Term::fresh(3), Term::fresh(4)}),
           ev("InstallVMRK", {vmpck, addr, Term::fresh(5), Term::fresh(4)})};
  EXPECT_FALSE(holds("FreshMAVMRKInstallationIsUnique", tr));
}

TEST(Lemmas, OnlyTheIntendedLemmasFailOnAttacks) {
  using V = std::vector<std::string>;
  EXPECT_EQ(violated_on(builtin_trace("platform-confusion-report")),
            (V{"AuthFWGVMMsgAgreeForAttestAssocMA"}));
  EXPECT_EQ(violated_on(builtin_trace("attestation-strong-integrity")),
            (V{"AuthFWGVMMsgAgreeForAttestAssocMA", "AttestationReportStrongIntegrityAssocMA"}));
  EXPECT_EQ(violated_on(builtin_trace("platform-confusion-key")), (V{"AuthFWGVMMsgAgreeForKeyDerAssocMA"}));
  EXPECT_TRUE(violated_on(builtin_trace("honest-e2e")).empty());
  EXPECT_TRUE(violated_on(builtin_trace("ma-two-guests")).empty());
}

TEST(Lemmas, RecheckIsIdempotent) {
  auto tr = builtin_trace("platform-confusion-report");
  for (auto& l : lemma_registry()) {
    auto a = l(tr), b = l(tr);
    EXPECT_EQ(a.holds, b.holds);
    EXPECT_EQ(a.at, b.at);
  }
}

TEST(Explore, FindsAllFiveAttacksWithMigrationStraddlingWitness) {
  ExploreOptions opt;
  opt.stopWhenAllViolated = true;
  auto r = explore(config_assoc(), lemmas_for_config("assoc", false), default_bounds(config_assoc()), opt);
  ASSERT_TRUE(r.ok()) << r.code();
  for (auto& o : r.value().lemmas) {
    EXPECT_FALSE(o.holds) << o.name;
    EXPECT_FALSE(o.witness.empty()) << o.name;
  }
  auto& w = r.value().lemmas[0];
  ASSERT_EQ(w.name, "AuthFWGVMMsgAgreeForAttestAssocMA");
  auto issue = builtin_detail::find_event(w.witnessTrace, "GVMIssueRequest");
  auto exp = builtin_detail::find_event(w.witnessTrace, "FWExportsGVM");
  auto imp = builtin_detail::find_event(w.witnessTrace, "FWImportsGVM");
  ASSERT_TRUE(issue && exp && imp);
  EXPECT_LT(*issue, *exp);
  EXPECT_LT(*exp, *imp);
  auto recv = builtin_detail::find_event(w.witnessTrace, "FWReceiveGVMRequest", *imp);
  ASSERT_TRUE(recv);
  EXPECT_EQ(w.witnessTrace[*recv].args[0], pub("FW_GENERATE_REPORT"));
  EXPECT_EQ(w.witnessTrace[*recv].args[1], w.witnessTrace[*imp].args[0]);
  EXPECT_EQ(w.witnessTrace[*recv].args[4], w.witnessTrace[*issue].args[3]);
}

TEST(Explore, NoAssocLemmasHoldAtShallowDepth) {
  Bounds b = default_bounds(config_noassoc());
  b.maxDepth = 24;
  auto r = explore(config_noassoc(), lemmas_for_config("noassoc", true), b);
  ASSERT_TRUE(r.ok()) << r.code();
  for (auto& o : r.value().lemmas) EXPECT_TRUE(o.holds) << o.name << ": " << o.why;
}

TEST(Explore, SecrecyHoldsWithoutSynthesis) {
  auto cfg = config_noassoc();
  Bounds b = default_bounds(cfg);
  b.recipeDepth = 0;
  b.maxDepth = 22;
  std::vector<const LemmaSpec*> sec;
  for (auto& l : lemma_registry())
    if (l.kind == "secrecy" && l.config == "noassoc") sec.push_back(&l);
  auto r = explore(cfg, sec, b);
  ASSERT_TRUE(r.ok());
  for (auto& o : r.value().lemmas) EXPECT_TRUE(o.holds) << o.name;
}

TEST(Explore, ResultIsDeterministic) {
  Bounds b = default_bounds(config_noassoc());
  b.maxDepth = 20;
  auto a = explore(config_noassoc(), lemmas_for_config("noassoc"), b).value();
  auto c = explore(config_noassoc(), lemmas_for_config("noassoc"), b).value();
  EXPECT_EQ(a.states, c.states);
  EXPECT_EQ(a.transitions, c.transitions);
}

TEST(Explore, OversizedBoundsAreRefused) {
  Bounds b;
  b.maxDepth = 10'000;
  EXPECT_EQ(explore(config_noassoc(), lemmas_for_config("noassoc"), b).code(), "BoundsTooLarge");
}

#include <gtest/gtest.h>

#include <algorithm>

#include <snplab/audit.hpp>
#include <snplab/builtins.hpp>
#include <snplab/scenario.hpp>

using namespace snplab;

namespace {

WorldState after_setup(WorldConfig cfg) {
  auto rr = run_scenario(Scenario{"setup", "", cfg, setup_script(cfg)});
  EXPECT_TRUE(rr.ok()) << (rr.error ? rr.error->detail : "");
  return rr.world;
}

bool has_step(const std::vector<Step>& steps, const std::string& op, const std::string& name1 = {}) {
  return std::any_of(steps.begin(), steps.end(), [&](const Step& s) {
    return s.op == op && (name1.empty() || (s.names.size() > 1 && s.names[1] == name1));
  });
}

std::string guest_ctx(const WorldState& w, const std::string& guest) {
  for (auto& [_, ps] : w.platforms)
    for (auto& [n, c] : ps.contexts)
      if (c.owner == guest && !c.isMa && c.live()) return n;
  return {};
}

}  // namespace

TEST(World, SetupLaunchesEverything) {
  auto w = after_setup(config_assoc());
  EXPECT_EQ(w.platforms.size(), 2u);
  EXPECT_EQ(w.mas.size(), 2u);
  auto* c = w.guest_context("G1");
  ASSERT_NE(c, nullptr);
  EXPECT_TRUE(c->live());
  EXPECT_TRUE(c->vmrkFromMa);
  EXPECT_TRUE(audit_trace(w.trace).empty());
}

TEST(World, BothRequestKindsAreEnabledOnceNoncePending) {
  auto w = after_setup(config_assoc());
  auto steps = enabled_steps(w);
  EXPECT_TRUE(has_step(steps, "gvm_request", "key"));
  EXPECT_FALSE(has_step(steps, "gvm_request", "report"));
  auto w2 = apply_step(w, Step{"go_nonce", {"GO1"}, {}});
  ASSERT_TRUE(w2.ok()) << w2.code();
  steps = enabled_steps(w2.value());
  EXPECT_TRUE(has_step(steps, "gvm_request", "key"));
  EXPECT_TRUE(has_step(steps, "gvm_request", "report"));
}

TEST(World, PolicyNoneOffersNoCorruption) {
  auto cfg = config_assoc();
  cfg.policy = CorruptionPolicy::none();
  EXPECT_FALSE(has_step(enabled_steps(after_setup(cfg)), "corrupt"));
  EXPECT_TRUE(has_step(enabled_steps(after_setup(config_assoc())), "corrupt"));
}

TEST(World, ApplyStepLeavesInputUntouched) {
  auto w = after_setup(config_assoc());
  auto before = w.trace;
  auto depth = w.depth;
  auto kbAtoms = w.kb.atoms();
  auto steps = enabled_steps(w);
  ASSERT_FALSE(steps.empty());
  for (auto& s : steps) ASSERT_TRUE(apply_step(w, s).ok()) << s.key();
  EXPECT_EQ(w.trace, before);
  EXPECT_EQ(w.depth, depth);
  EXPECT_EQ(w.kb.atoms(), kbAtoms);
}

TEST(World, ApplyIsDeterministic) {
  auto w = after_setup(config_assoc());
  for (auto& s : enabled_steps(w)) {
    auto a = apply_step(w, s).value();
    auto b = apply_step(w, s).value();
    EXPECT_EQ(a.trace, b.trace) << s.key();
  }
}

TEST(World, DisabledStepIsRefused) {
  auto w = after_setup(config_assoc());
  EXPECT_EQ(apply_step(w, Step{"create_root", {}, {}}).code(), "StepNotEnabled");
  EXPECT_EQ(apply_step(w, Step{"go_verify", {"GO1"}, {pub("junk")}}).code(), "StepNotEnabled");
}

TEST(World, HonestKeyRequestRoundTrip) {
  auto w = after_setup(config_noassoc());
  std::string ctx = guest_ctx(w, "G1");
  ASSERT_FALSE(ctx.empty());
  Scenario sc{"k", "", config_noassoc(), setup_script(config_noassoc())};
  sc.steps.push_back({"gvm_request", {ctx, "key"}});
  sc.steps.push_back({"fw_gvm", {ctx}});
  sc.steps.push_back({"gvm_accept", {ctx}});
  auto rr = run_scenario(sc);
  ASSERT_TRUE(rr.ok()) << rr.error->detail;
  EXPECT_TRUE(builtin_detail::has_event(rr.world.trace, "GVMReceiveKey"));
  EXPECT_EQ(rr.world.threads.at(ctx).guestCounter, N(2));
  EXPECT_EQ(rr.world.guest_context("G1")->fwMsgCount, N(2));
  EXPECT_TRUE(audit_trace(rr.world.trace).empty());
}

TEST(World, ScriptFailureNamesTheStep) {
  Scenario sc{"bad", "", config_noassoc(), {{"create_root"}, {"create_root"}}};
  auto rr = run_scenario(sc);
  ASSERT_FALSE(rr.ok());
  EXPECT_EQ(rr.failedIndex, 1u);
  EXPECT_EQ(rr.error->code, "ScriptStepNotEnabled");
}

TEST(World, BadPickIsRefused) {
  Scenario sc{"bad", "", config_noassoc(), {{"create_root", {}, "sometimes"}}};
  EXPECT_FALSE(run_scenario(sc).ok());
}

TEST(Builtins, EveryBuiltinShowsItsExpectedOutcome) {
  for (auto& b : builtins()) {
    auto rr = run_scenario(b.scenario);
    std::string why;
    bool gated = b.scenario.name == "swap-rollback" || b.scenario.name == "comm-replay";
    ASSERT_TRUE(gated || rr.ok()) << b.scenario.name << ": " << rr.error->detail;
    bool expected = rr.ok() && b.expect(rr, why);
    // the two flag-gated attacks only succeed with their flag set
    if (gated) {
      EXPECT_FALSE(expected) << b.scenario.name;
      Flags f;
      f.ignoreRootMdEntry = b.scenario.name == "swap-rollback";
      f.replayOverComm = b.scenario.name == "comm-replay";
      rr = run_scenario(with_flags(b.scenario, f, false));
      ASSERT_TRUE(rr.ok()) << b.scenario.name << ": " << rr.error->detail;
      expected = b.expect(rr, why);
    }
    EXPECT_TRUE(expected) << b.scenario.name << ": " << why;
    EXPECT_TRUE(audit_trace(rr.world.trace).empty()) << b.scenario.name;
  }
}

TEST(Builtins, LookupByName) {
  EXPECT_NE(find_builtin("platform-confusion-report"), nullptr);
  EXPECT_EQ(find_builtin("no-such-attack"), nullptr);
}

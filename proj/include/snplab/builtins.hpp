#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lemmas.hpp"
#include "scenario.hpp"

namespace snplab {

// exploration configurations
inline WorldConfig config_assoc() {
  WorldConfig c;
  c.platforms = {{"P1", "v1"}, {"P2", "v1"}};
  c.mas = {{"MA1", "P1", "MA2"}, {"MA2", "P2", "MA1"}};
  c.guests = {{"G1", "GO1", "P1", "MA1", true, kGvmImage}};
  c.gos = {{"GO1", ""}};
  c.tcbOrder = {"v1"};
  c.policy = CorruptionPolicy::all();
  return c;
}

inline WorldConfig config_noassoc() {
  WorldConfig c;
  c.platforms = {{"P1", "v1"}, {"P2", "v1"}};
  c.guests = {{"G1", "GO1", "P1", "", false, kGvmImage}};
  c.gos = {{"GO1", ""}};
  c.tcbOrder = {"v1"};
  c.policy = CorruptionPolicy::all();
  return c;
}

inline WorldConfig config_twoguests() {
  WorldConfig c;
  c.platforms = {{"P1", "v1"}};
  c.guests = {{"G1", "GO1", "P1", "", false, kGvmImage}, {"G2", "GO2", "P1", "", false, kGvmImage}};
  c.gos = {{"GO1", ""}, {"GO2", ""}};
  c.tcbOrder = {"v1"};
  c.policy = CorruptionPolicy::all();
  return c;
}

inline std::optional<WorldConfig> named_config(const std::string& n) {
  if (n == "assoc") return config_assoc();
  if (n == "noassoc") return config_noassoc();
  if (n == "twoguests") return config_twoguests();
  return std::nullopt;
}

class ScriptBuilder {
 public:
  std::size_t add(std::string op, std::vector<std::string> names = {}, std::string pick = "first") {
    steps.push_back({std::move(op), std::move(names), std::move(pick)});
    return steps.size() - 1;
  }
  static std::string out(std::size_t j) { return "out:" + std::to_string(j); }

  std::vector<ScriptStep> steps;
};

// root, platforms, MAs, channels, deployment and launch of every guest, MA VMRK provisioning
inline std::vector<ScriptStep> setup_script(const WorldConfig& c) {
  ScriptBuilder b;
  b.add("create_root");
  b.add("create_ask");
  for (auto& p : c.platforms) b.add("pl_create", {p.name});
  for (auto& m : c.mas) b.add("launch_ma", {m.name});
  for (auto& m : c.mas)
    if (!m.peer.empty() && m.name < m.peer) b.add("establish_chan", {m.name, m.peer});
  for (auto& g : c.guests) {
    b.add("go_deploy", {g.owner, g.name});
    b.add("init_gvm", {g.name});
    b.add("finalize_gvm", {g.name});
  }
  for (auto& g : c.guests) {
    if (g.ma.empty()) continue;
    b.add("ma_request_vmrk", {g.ma, g.platform + "/" + g.name + "/1"});
    b.add("fw_ma", {g.ma});
    b.add("ma_accept", {g.ma});
  }
  return b.steps;
}

struct Builtin {
  std::string kind;  // attack | demo
  Scenario scenario;
  std::vector<std::string> lemmas;  // lemmas the run is expected to violate
  // true when the run shows the expected outcome
  std::function<bool(const RunResult&, std::string&)> expect;
};

namespace builtin_detail {

inline bool has_event(const Trace& tr, const std::string& label, std::size_t from = 0) {
  for (std::size_t i = from; i < tr.size(); ++i)
    if (tr[i].label == label) return true;
  return false;
}

inline std::optional<std::size_t> find_event(const Trace& tr, const std::string& label, std::size_t from = 0) {
  for (std::size_t i = from; i < tr.size(); ++i)
    if (tr[i].label == label) return i;
  return std::nullopt;
}

inline std::optional<std::string> last_verdict(const Trace& tr) {
  std::optional<std::string> v;
  for (auto& e : tr)
    if (e.label == "GOVerifiesReport") v = e.args[4].name();
  return v;
}

// reuse of a nonce under a guest vmpck, then the vmpck itself becomes derivable
inline bool reuse_then_leak(const Trace& tr, std::string& why) {
  auto r = find_event(tr, "ReuseNonceKey");
  if (!r) {
    why = "no ReuseNonceKey";
    return false;
  }
  for (std::size_t i = *r; i < tr.size(); ++i)
    if (tr[i].label == "AdversaryDerives" && tr[i].args[0] == pub("GVM_VMPCK")) return true;
  why = "vmpck not derived after reuse";
  return false;
}

inline bool lemmas_violated(const RunResult& rr, const std::vector<std::string>& names, std::string& why) {
  for (auto& n : names) {
    const LemmaSpec* l = find_lemma(n);
    if (!l || (*l)(rr.world.trace).holds) {
      why = n + " not violated";
      return false;
    }
  }
  return true;
}

inline Builtin attack(std::string name, std::string desc, WorldConfig cfg, std::vector<ScriptStep> steps,
                      std::vector<std::string> lemmas) {
  Builtin b{"attack", {std::move(name), std::move(desc), std::move(cfg), std::move(steps)}, std::move(lemmas), {}};
  auto ls = b.lemmas;
  b.expect = [ls](const RunResult& rr, std::string& why) {
    if (!rr.ok()) {
      why = rr.error->code + " " + rr.error->detail;
      return false;
    }
    return lemmas_violated(rr, ls, why);
  };
  return b;
}

// guest G1 on P1, swapped out, exported by MA1 and imported on P2 through MA2
inline void migrate(ScriptBuilder& b, const std::string& from, const std::string& to, const std::string& maFrom,
                    const std::string& maTo, std::size_t* swapIdx = nullptr) {
  std::size_t s = b.add("swap_out", {from});
  if (swapIdx) *swapIdx = s;
  b.add("ma_request_export", {maFrom, from});
  b.add("fw_ma", {maFrom});
  b.add("ma_accept", {maFrom});
  b.add("ma_recv_import", {maTo});
  b.add("fw_ma", {maTo});
  b.add("ma_accept", {maTo});
  (void)to;
}

inline Builtin platform_confusion(const std::string& kind) {
  WorldConfig cfg = config_assoc();
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  if (kind == "report") b.add("go_nonce", {"GO1"});
  std::size_t req = b.add("gvm_request", {"P1/G1/1", kind});
  std::size_t so = 0;
  migrate(b, "P1/G1/1", "P2/G1/1", "MA1", "MA2", &so);
  b.add("swap_in", {"P2/G1/1"}, ScriptBuilder::out(so));
  b.add("fw_gvm", {"P2/G1/1"}, ScriptBuilder::out(req));
  std::string fwLemma = kind == "report" ? "AuthFWGVMMsgAgreeForAttestAssocMA" : "AuthFWGVMMsgAgreeForKeyDerAssocMA";
  return attack("platform-confusion-" + kind,
                "request issued on P1 is served by P2 after migration", cfg, b.steps, {fwLemma});
}

inline Builtin deferred_response(const std::string& kind) {
  WorldConfig cfg = config_assoc();
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  if (kind == "report") b.add("go_nonce", {"GO1"});
  std::size_t req = b.add("gvm_request", {"P1/G1/1", kind});
  std::size_t rsp = b.add("fw_gvm", {"P1/G1/1"}, ScriptBuilder::out(req));
  std::size_t so = 0;
  migrate(b, "P1/G1/1", "P2/G1/1", "MA1", "MA2", &so);
  b.add("swap_in", {"P2/G1/1"}, ScriptBuilder::out(so));
  b.add("gvm_accept", {"P2/G1/1"}, ScriptBuilder::out(rsp));
  std::string l = kind == "report" ? "AuthGVMFWMsgAgreeForAttestAssocMA" : "AuthGVMFWMsgAgreeForKeyDerAssocMA";
  return attack("deferred-response-" + kind,
                "response produced on P1 is accepted by the guest after it moved to P2", cfg, b.steps, {l});
}

inline Builtin strong_integrity() {
  Builtin pc = platform_confusion("report");
  ScriptBuilder b;
  b.steps = pc.scenario.steps;
  std::size_t fw = b.steps.size() - 1;
  b.add("gvm_accept", {"P2/G1/1"}, ScriptBuilder::out(fw));
  b.add("go_verify", {"GO1"});
  return attack("attestation-strong-integrity",
                "owner accepts a report naming P2 for report data requested while the guest ran on P1",
                pc.scenario.cfg, b.steps, {"AttestationReportStrongIntegrityAssocMA"});
}

inline Builtin swap_rollback() {
  WorldConfig cfg = config_noassoc();
  cfg.platforms = {{"P1", "v1"}};
  cfg.policy = CorruptionPolicy::none();
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  std::size_t s0 = b.add("swap_out", {"P1/G1/1"});
  b.add("swap_in", {"P1/G1/1"}, ScriptBuilder::out(s0));
  b.add("go_nonce", {"GO1"});
  std::size_t r1 = b.add("gvm_request", {"P1/G1/1", "report"});
  std::size_t f1 = b.add("fw_gvm", {"P1/G1/1"}, ScriptBuilder::out(r1));
  b.add("gvm_accept", {"P1/G1/1"}, ScriptBuilder::out(f1));
  b.add("go_verify", {"GO1"});
  b.add("swap_out", {"P1/G1/1"});
  b.add("swap_in", {"P1/G1/1"}, ScriptBuilder::out(s0));  // stale payload
  b.add("go_nonce", {"GO1"});
  b.add("gvm_request", {"P1/G1/1", "report"});
  Builtin out = attack("swap-rollback", "stale swapped-out state is swapped back in and the guest reuses a nonce",
                       cfg, b.steps, {"FreshNoKeyNonceReuse"});
  out.expect = [](const RunResult& rr, std::string& why) {
    if (!rr.ok()) {
      why = rr.error->code + " " + rr.error->detail;
      return false;
    }
    return reuse_then_leak(rr.world.trace, why) && lemmas_violated(rr, {"FreshNoKeyNonceReuse"}, why);
  };
  return out;
}

inline Builtin comm_replay() {
  WorldConfig cfg = config_assoc();
  cfg.policy = CorruptionPolicy::none();
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  std::size_t so = 0;
  migrate(b, "P1/G1/1", "P2/G1/1", "MA1", "MA2", &so);
  b.add("ma_recv_import", {"MA2"});
  b.add("fw_ma", {"MA2"});
  b.add("ma_accept", {"MA2"});
  b.add("swap_in", {"P2/G1/1"}, ScriptBuilder::out(so));
  b.add("swap_in", {"P2/G1/2"}, ScriptBuilder::out(so));
  b.add("go_nonce", {"GO1"});
  std::size_t req = b.add("gvm_request", {"P2/G1/1", "report"});
  b.add("fw_gvm", {"P2/G1/1"}, ScriptBuilder::out(req));
  b.add("fw_gvm", {"P2/G1/2"}, ScriptBuilder::out(req));
  Builtin out = attack("comm-replay", "exported context replayed over the MA channel is imported twice", cfg, b.steps,
                       {"FreshNoKeyNonceReuse"});
  out.expect = [](const RunResult& rr, std::string& why) {
    if (!rr.ok()) {
      why = rr.error->code + " " + rr.error->detail;
      return false;
    }
    return reuse_then_leak(rr.world.trace, why) && lemmas_violated(rr, {"FreshNoKeyNonceReuse"}, why);
  };
  return out;
}

inline Builtin back_and_forth() {
  WorldConfig cfg;
  cfg.platforms = {{"PH", "v_high"}, {"PL", "v_low"}};
  cfg.mas = {{"MA1", "PH", "MA2"}, {"MA2", "PL", "MA1"}};
  cfg.guests = {{"G1", "GO1", "PH", "MA1", true, kGvmImage}};
  cfg.gos = {{"GO1", ""}};
  cfg.tcbOrder = {"v_low", "v_high"};
  cfg.maxMigrations = 2;
  cfg.policy = CorruptionPolicy::none();
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  std::size_t so = 0;
  migrate(b, "PH/G1/1", "PL/G1/1", "MA1", "MA2", &so);
  b.add("ma_request_export", {"MA2", "PL/G1/1"});
  b.add("fw_ma", {"MA2"});
  b.add("ma_accept", {"MA2"});
  b.add("ma_recv_import", {"MA1"});
  b.add("fw_ma", {"MA1"});
  b.add("ma_accept", {"MA1"});
  b.add("swap_in", {"PH/G1/2"}, ScriptBuilder::out(so));
  b.add("go_nonce", {"GO1"});
  std::size_t req = b.add("gvm_request", {"PH/G1/2", "report"});
  std::size_t fw = b.add("fw_gvm", {"PH/G1/2"}, ScriptBuilder::out(req));
  b.add("gvm_accept", {"PH/G1/2"}, ScriptBuilder::out(fw));
  b.add("go_verify", {"GO1"});
  Builtin out{"attack",
              {"back-and-forth-migration", "guest passes through a lower-TCB platform and returns", cfg, b.steps},
              {},
              {}};
  out.expect = [](const RunResult& rr, std::string& why) {
    if (!rr.ok()) {
      why = rr.error->code + " " + rr.error->detail;
      return false;
    }
    auto v = last_verdict(rr.world.trace);
    std::string want = rr.world.flags().mitigation ? "flag_migrated_to_weaker" : "accept";
    if (v != want) {
      why = "verdict " + v.value_or("none") + ", expected " + want;
      return false;
    }
    return true;
  };
  return out;
}

inline std::function<bool(const RunResult&, std::string&)> demo_expect(std::function<bool(const Trace&, std::string&)> f) {
  return [f](const RunResult& rr, std::string& why) {
    if (!rr.ok()) {
      why = rr.error->code + " " + rr.error->detail;
      return false;
    }
    for (auto& e : rr.world.trace)
      if (e.label == "GOVerifiesReport" && e.args[4] != pub("accept")) {
        why = "report verdict " + e.args[4].name();
        return false;
      }
    if (has_event(rr.world.trace, "ReuseNonceKey")) {
      why = "nonce reuse in honest run";
      return false;
    }
    return f(rr.world.trace, why);
  };
}

inline void attest(ScriptBuilder& b, const std::string& go, const std::string& ctx) {
  b.add("go_nonce", {go});
  std::size_t r = b.add("gvm_request", {ctx, "report"});
  std::size_t f = b.add("fw_gvm", {ctx}, ScriptBuilder::out(r));
  b.add("gvm_accept", {ctx}, ScriptBuilder::out(f));
  b.add("go_verify", {go}, "last");
}

inline void get_key(ScriptBuilder& b, const std::string& ctx) {
  std::size_t r = b.add("gvm_request", {ctx, "key"});
  std::size_t f = b.add("fw_gvm", {ctx}, ScriptBuilder::out(r));
  b.add("gvm_accept", {ctx}, ScriptBuilder::out(f));
}

inline std::vector<Term> received_keys(const Trace& tr) {
  std::vector<Term> k;
  for (auto& e : tr)
    if (e.label == "GVMReceiveKey") k.push_back(e.args[1]);
  return k;
}

inline Builtin ma_two_guests() {
  WorldConfig cfg;
  cfg.platforms = {{"P1", "v1"}};
  cfg.mas = {{"MA1", "P1", ""}};
  cfg.guests = {{"G1", "GO1", "P1", "MA1", true, kGvmImage}, {"G2", "GO2", "P1", "MA1", true, kGvmImage}};
  cfg.gos = {{"GO1", ""}, {"GO2", ""}};
  cfg.tcbOrder = {"v1"};
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  attest(b, "GO1", "P1/G1/1");
  attest(b, "GO2", "P1/G2/1");
  get_key(b, "P1/G1/1");
  get_key(b, "P1/G2/1");
  return {"demo",
          {"ma-two-guests", "one migration agent provisions VMRKs for two guests", cfg, b.steps},
          {},
          demo_expect([](const Trace& tr, std::string& why) {
            int installs = 0;
            for (auto& e : tr) installs += e.label == "InstallVMRK";
            auto k = received_keys(tr);
            if (installs != 2 || k.size() != 2 || k[0] == k[1]) {
              why = "expected two VMRK installs and two distinct keys";
              return false;
            }
            return true;
          })};
}

inline Builtin swap_cycles() {
  WorldConfig cfg;
  cfg.platforms = {{"P1", "v1"}};
  cfg.guests = {{"G1", "GO1", "P1", "", false, kGvmImage}};
  cfg.gos = {{"GO1", ""}};
  cfg.tcbOrder = {"v1"};
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  for (int i = 0; i < 3; ++i) {
    attest(b, "GO1", "P1/G1/1");
    std::size_t r = b.add("gvm_request", {"P1/G1/1", "key"});
    std::size_t so = b.add("swap_out", {"P1/G1/1"});
    b.add("swap_in", {"P1/G1/1"}, ScriptBuilder::out(so));
    std::size_t f = b.add("fw_gvm", {"P1/G1/1"}, ScriptBuilder::out(r));
    b.add("gvm_accept", {"P1/G1/1"}, ScriptBuilder::out(f));
    b.add("gvm_delete_key", {"P1/G1/1"});
    std::size_t s2 = b.add("swap_out", {"P1/G1/1"});
    b.add("swap_in", {"P1/G1/1"}, ScriptBuilder::out(s2));
  }
  return {"demo",
          {"swap-cycles", "three swap cycles with requests in flight across swaps", cfg, b.steps},
          {},
          demo_expect([](const Trace& tr, std::string& why) {
            int outs = 0, ins = 0;
            for (auto& e : tr) {
              outs += e.label == "FWSwapsOutVMPCKBM";
              ins += e.label == "FWSwapsInGVM";
            }
            auto k = received_keys(tr);
            if (outs < 3 || ins < 3 || k.size() != 3) {
              why = "expected at least three swap cycles and three keys";
              return false;
            }
            for (auto& x : k)
              if (x != k[0]) {
                why = "derived key changed across swaps";
                return false;
              }
            return true;
          })};
}

inline Builtin honest_e2e() {
  WorldConfig cfg = config_assoc();
  cfg.policy = CorruptionPolicy::none();
  ScriptBuilder b;
  b.steps = setup_script(cfg);
  attest(b, "GO1", "P1/G1/1");
  get_key(b, "P1/G1/1");
  b.add("gvm_delete_key", {"P1/G1/1"});
  std::size_t s = b.add("swap_out", {"P1/G1/1"});
  b.add("swap_in", {"P1/G1/1"}, ScriptBuilder::out(s));
  std::size_t so = 0;
  migrate(b, "P1/G1/1", "P2/G1/1", "MA1", "MA2", &so);
  b.add("swap_in", {"P2/G1/1"}, ScriptBuilder::out(so));
  attest(b, "GO1", "P2/G1/1");
  get_key(b, "P2/G1/1");
  return {"demo",
          {"honest-e2e", "launch, attest, derive a key, swap, migrate, attest and derive again", cfg, b.steps},
          {},
          demo_expect([](const Trace& tr, std::string& why) {
            auto k = received_keys(tr);
            int verdicts = 0;
            for (auto& e : tr) verdicts += e.label == "GOVerifiesReport";
            if (verdicts != 2 || k.size() != 2 || k[0] != k[1] || !has_event(tr, "FWImportsGVM")) {
              why = "expected two accepted reports and the same key before and after migration";
              return false;
            }
            return true;
          })};
}

}  // namespace builtin_detail

inline const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> all = [] {
    using namespace builtin_detail;
    return std::vector<Builtin>{platform_confusion("report"), platform_confusion("key"), deferred_response("report"),
                                deferred_response("key"),     strong_integrity(),        swap_rollback(),
                                comm_replay(),                back_and_forth(),          ma_two_guests(),
                                swap_cycles(),                honest_e2e()};
  }();
  return all;
}

inline const Builtin* find_builtin(const std::string& name) {
  for (auto& b : builtins())
    if (b.scenario.name == name) return &b;
  return nullptr;
}

// flags given on the command line are layered over the scenario's own
inline Scenario with_flags(Scenario sc, const Flags& extra, bool overrideAll) {
  if (overrideAll) sc.cfg.flags = extra;
  else {
    sc.cfg.flags.ignoreRootMdEntry |= extra.ignoreRootMdEntry;
    sc.cfg.flags.replayOverComm |= extra.replayOverComm;
    sc.cfg.flags.mitigation |= extra.mitigation;
  }
  return sc;
}

}  // namespace snplab

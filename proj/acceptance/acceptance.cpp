// Acceptance suite: one PASS/FAIL line per criterion.
// usage: acceptance --cli PATH/TO/snplab --workdir DIR [--only N]

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <snplab/snplab.hpp>

#include "support/recipe_oracle.hpp"

using namespace snplab;
namespace fs = std::filesystem;

namespace {

// time limits per criterion, seconds
constexpr double kAttackBudget = 600;
constexpr double kLemmaBudget = 1800;
constexpr double kOracleBudget = 120;
constexpr int kOracleKbs = 1000;
constexpr int kOracleLeaves = 12;
constexpr int kOracleTermDepth = 4;
constexpr int kOracleRecipeDepth = 5;
constexpr std::uint64_t kOracleSeed = 1;
constexpr int kMinSwapCycles = 3;

std::string g_cli;
fs::path g_work;
std::vector<std::pair<std::string, Trace>> g_audit;  // traces collected for criterion 6

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int run_cli(const std::string& args) {
  std::string cmd = "\"" + g_cli + "\" " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::optional<Trace> load_trace(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  auto t = read_trace_jsonl(in);
  if (!t) return std::nullopt;
  return t.value();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

void report(int n, const std::string& title, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << title << " -- " << o.detail << std::endl;
}

std::optional<std::string> final_verdict(const Trace& tr) {
  for (auto it = tr.rbegin(); it != tr.rend(); ++it)
    if (it->label == "GOVerifiesReport") return it->args.at(4).name();
  return std::nullopt;
}

// request issued before the export, received on the import chip afterwards, same request term
bool straddles_migration(const Trace& tr, std::string& why) {
  const ActionEvent* recv = nullptr;
  for (auto& e : tr)
    if (e.label == "FWReceiveGVMRequest" && e.args[0] == pub("FW_GENERATE_REPORT")) recv = &e;
  if (!recv) return why = "no FW_GENERATE_REPORT receipt", false;
  std::optional<std::size_t> issue, exp, imp;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label == "GVMIssueRequest" && e.args[0] == pub(tag::ReportReq) && e.args[3] == recv->args[4]) issue = i;
    if (e.label == "FWExportsGVM" && !exp) exp = i;
    if (e.label == "FWImportsGVM" && e.args[0] == recv->args[1]) imp = i;
  }
  if (!issue || !exp || !imp) return why = "missing issue/export/import event", false;
  if (!(*issue < *exp && *exp < *imp && *imp < recv->step)) return why = "events out of order", false;
  if (tr[*exp].args[0] == recv->args[1]) return why = "received on the source chip", false;
  return true;
}

Outcome criterion1() {
  auto t0 = Clock::now();
  ExploreOptions opt;
  opt.stopWhenAllViolated = true;
  auto ls = lemmas_for_config("assoc", false);
  auto r = explore(config_assoc(), ls, default_bounds(config_assoc()), opt);
  if (!r) return {false, r.error().code + " " + r.error().detail};
  std::ostringstream d;
  bool ok = ls.size() == 5;
  for (auto& o : r.value().lemmas) {
    ok = ok && !o.holds && !o.witness.empty();
    d << o.name << "=" << (o.holds ? "HOLDS" : "VIOLATED(" + std::to_string(o.witness.size()) + ")") << " ";
    if (!o.holds) g_audit.emplace_back("explore:" + o.name, o.witnessTrace);
  }
  std::string why;
  auto& first = r.value().lemmas.front();
  bool shape = first.name == "AuthFWGVMMsgAgreeForAttestAssocMA" && straddles_migration(first.witnessTrace, why);
  double s = since(t0);
  d << "shape=" << (shape ? "ok" : why) << " states=" << r.value().states << " time=" << s << "s/" << kAttackBudget
    << "s";
  return {ok && shape && s <= kAttackBudget, d.str()};
}

Outcome criterion2() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  std::map<std::string, int> byKind;
  for (auto* cfgName : {"assoc", "noassoc", "twoguests"}) {
    auto cfg = *named_config(cfgName);
    auto ls = lemmas_for_config(cfgName, true);
    auto r = explore(cfg, ls, default_bounds(cfg));
    if (!r) return {false, std::string(cfgName) + ": " + r.error().code + " " + r.error().detail};
    d << cfgName << ":" << r.value().states << " states/" << static_cast<int>(r.value().seconds) << "s ";
    for (std::size_t i = 0; i < ls.size(); ++i) {
      auto& o = r.value().lemmas[i];
      if (o.holds) byKind[ls[i]->kind]++;
      else {
        ok = false;
        d << "VIOLATED " << o.name << " (" << o.why << ") ";
      }
    }
  }
  bool counts = byKind["secrecy"] == 13 && byKind["authentication"] == 10 && byKind["attestation"] == 4 &&
                byKind["freshness"] == 4;
  double s = since(t0);
  d << "holds: secrecy " << byKind["secrecy"] << "/13, authentication " << byKind["authentication"]
    << "/10, attestation " << byKind["attestation"] << "/4, freshness " << byKind["freshness"] << "/4; time=" << s
    << "s/" << kLemmaBudget << "s";
  return {ok && counts && s <= kLemmaBudget, d.str()};
}

// ReuseNonceKey, then the adversary learns a guest vmpck without corrupting it
bool reuse_then_vmpck(const Trace& tr) {
  std::optional<std::size_t> reuse;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (tr[i].label == "CorruptVMPCK") return false;
    if (tr[i].label == "ReuseNonceKey" && !reuse) reuse = i;
    if (reuse && tr[i].label == "AdversaryDerives" && tr[i].args[0] == pub("GVM_VMPCK")) return true;
  }
  return false;
}

Outcome criterion3() {
  std::ostringstream d;
  bool ok = true;
  for (auto [name, flag] : {std::pair{"swap-rollback", "--ignore-root-md-entry"},
                            std::pair{"comm-replay", "--enable-replay-over-comm"}}) {
    fs::path out = g_work / (std::string(name) + ".jsonl");
    int with = run_cli(std::string("attack ") + name + " " + flag + " --output \"" + out.string() + "\"");
    int without = run_cli(std::string("attack ") + name);
    auto tr = load_trace(out);
    bool shape = tr && reuse_then_vmpck(*tr);
    if (tr) g_audit.emplace_back(name, *tr);
    d << name << ": with flag exit " << with << ", without exit " << without << ", reuse->vmpck "
      << (shape ? "yes" : "no") << "; ";
    ok = ok && with == 0 && without == 2 && shape;
  }
  return {ok, d.str()};
}

Outcome criterion4() {
  fs::path a = g_work / "bfm-mitigation.jsonl", b = g_work / "bfm-plain.jsonl";
  int ra = run_cli("attack back-and-forth-migration --mitigation --output \"" + a.string() + "\"");
  int rb = run_cli("attack back-and-forth-migration --output \"" + b.string() + "\"");
  auto ta = load_trace(a), tb = load_trace(b);
  std::string va = ta ? final_verdict(*ta).value_or("none") : "no trace";
  std::string vb = tb ? final_verdict(*tb).value_or("none") : "no trace";
  if (ta) g_audit.emplace_back("bfm-mitigation", *ta);
  if (tb) g_audit.emplace_back("bfm-plain", *tb);
  std::ostringstream d;
  d << "--mitigation: exit " << ra << " verdict " << va << "; plain: exit " << rb << " verdict " << vb;
  return {ra == 0 && rb == 0 && va == "flag_migrated_to_weaker" && vb == "accept", d.str()};
}

Outcome criterion5() {
  std::ostringstream d;
  bool ok = true;
  for (auto* name : {"ma-two-guests", "swap-cycles", "honest-e2e"}) {
    fs::path out = g_work / (std::string(name) + ".jsonl");
    int rc = run_cli(std::string("attack ") + name + " --output \"" + out.string() + "\"");
    auto tr = load_trace(out);
    bool extra = tr.has_value();
    if (tr && std::string(name) == "swap-cycles") {
      int cycles = 0;
      bool exact = true;
      std::map<Term, Term> saved;  // vmpck -> state at swap-out
      for (auto& e : *tr) {
        if (e.label == "FWSwapsOutVMPCKBM") saved[e.args[0]] = e.args[5];
        if (e.label == "FWSwapsInGVM") {
          ++cycles;
          exact = exact && saved.count(e.args[0]) && saved[e.args[0]] == e.args[3];
        }
      }
      extra = cycles >= kMinSwapCycles && exact;
      d << "(" << cycles << " swap cycles, state " << (exact ? "preserved" : "CHANGED") << ") ";
    }
    if (tr && std::string(name) == "ma-two-guests") {
      std::set<Term> assoc;
      for (auto& e : *tr)
        if (e.label == "AssociateMAGVM") assoc.insert(e.args[2]);
      extra = assoc.size() >= 2;
    }
    if (tr) g_audit.emplace_back(name, *tr);
    d << name << ": exit " << rc << "; ";
    ok = ok && rc == 0 && extra;
  }
  return {ok, d.str()};
}

Outcome criterion6() {
  std::size_t events = 0, bad = 0;
  std::ostringstream d;
  for (auto& [name, tr] : g_audit) {
    events += tr.size();
    for (auto& v : audit_trace(tr)) {
      if (bad++ < 3) d << name << ": " << v.invariant << " at " << v.at << " (" << v.detail << ") ";
    }
  }
  d << g_audit.size() << " traces, " << events << " events, " << bad << " violations";
  return {!g_audit.empty() && bad == 0, d.str()};
}

Outcome criterion7() {
  auto t0 = Clock::now();
  oracle::Generator g(kOracleSeed);
  std::size_t goals = 0, mismatch = 0;
  for (int i = 0; i < kOracleKbs; ++i) {
    auto kbTerms = g.kb(kOracleLeaves, kOracleTermDepth);
    KnowledgeBase kb;
    for (auto& t : kbTerms) kb = kb.absorb(t);
    for (auto& goal : oracle::goals(kbTerms, g)) {
      ++goals;
      mismatch += kb.derivable(goal) != oracle::derivable(kbTerms, goal, kOracleRecipeDepth);
    }
  }
  double s = since(t0);
  std::ostringstream d;
  d << kOracleKbs << " knowledge bases, " << goals << " goals, " << mismatch << " disagreements, time=" << s << "s/"
    << kOracleBudget << "s";
  return {mismatch == 0 && s <= kOracleBudget, d.str()};
}

Outcome criterion8() {
  std::ostringstream d;
  bool ok = true;
  int n = 0;
  for (auto& b : builtins()) {
    std::string flags;
    if (b.scenario.name == "swap-rollback") flags = " --ignore-root-md-entry";
    if (b.scenario.name == "comm-replay") flags = " --enable-replay-over-comm";
    fs::path p1 = g_work / ("det-" + b.scenario.name + "-1.jsonl");
    fs::path p2 = g_work / ("det-" + b.scenario.name + "-2.jsonl");
    int r1 = run_cli("attack " + b.scenario.name + flags + " --output \"" + p1.string() + "\"");
    int r2 = run_cli("attack " + b.scenario.name + flags + " --output \"" + p2.string() + "\"");
    std::string a = slurp(p1), c = slurp(p2);
    bool same = r1 == r2 && !a.empty() && a == c;
    if (!same) d << b.scenario.name << " differs; ";
    ok = ok && same;
    ++n;
  }
  d << n << " builtins run twice";
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string work = "acceptance_out";
  std::vector<int> only;
  app.add_option("--cli", g_cli, "snplab binary")->required();
  app.add_option("--workdir", work, "scratch directory for traces");
  app.add_option("--only", only, "run only these criteria (6 audits whatever ran)");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  auto want = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  std::map<int, std::pair<std::string, Outcome>> results;
  auto go = [&](int n, const char* title, Outcome (*f)()) {
    if (!want(n)) return;
    std::cerr << "criterion " << n << " ..." << std::endl;
    results[n] = {title, f()};
  };
  go(1, "attack reproduction", criterion1);
  go(3, "variant attacks", criterion3);
  go(4, "mitigation efficacy", criterion4);
  go(5, "executability demos", criterion5);
  go(7, "deduction oracle equivalence", criterion7);
  go(8, "determinism", criterion8);
  go(6, "runtime invariants", criterion6);
  go(2, "verified lemma suite", criterion2);
  bool all = true;
  for (auto& [n, r] : results) {
    report(n, r.first, r.second);
    all = all && r.second.pass;
  }
  std::cout << (all ? "ALL PASS" : "SOME FAILED") << std::endl;
  return all ? 0 : 1;
}

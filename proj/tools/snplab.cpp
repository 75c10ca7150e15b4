#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <snplab/snplab.hpp>

using namespace snplab;

namespace {

enum Exit { kOk = 0, kUnexpected = 2, kUnknown = 3, kParse = 4 };

struct Common {
  Flags flags;
  int maxDepth = 40;
  int recipeDepth = 3;
  std::vector<std::string> lemmas;
  std::string output;
  std::string format = "summary";
  unsigned jobs = 0;
  std::string reportDir;
  std::string exportScenario;
};

void add_common(CLI::App* app, Common& c) {
  app->add_flag("--ignore-root-md-entry", c.flags.ignoreRootMdEntry, "skip the swap-in root metadata check");
  app->add_flag("--enable-replay-over-comm", c.flags.replayOverComm, "MA channel messages may be received again");
  app->add_flag("--mitigation", c.flags.mitigation, "mark contexts imported onto a lower TCB");
  app->add_option("--max-depth", c.maxDepth, "step bound for explore")->check(CLI::PositiveNumber);
  app->add_option("--recipe-depth", c.recipeDepth, "adversary recipe depth")->check(CLI::NonNegativeNumber);
  app->add_option("--lemma", c.lemmas, "lemma name (repeatable)");
  app->add_option("--output", c.output, "trace (JSONL) or report (JSON) path");
  app->add_option("--format", c.format, "json or summary")->check(CLI::IsMember({"json", "summary"}));
  app->add_option("--jobs", c.jobs, "explore worker threads (default: logical cores)");
}

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result<Json> read_json(const std::string& path) {
  auto text = slurp(path);
  if (!text) return err("ParseError", "cannot read " + path);
  Json j = Json::parse(*text, nullptr, false);
  if (j.is_discarded()) return err("ParseError", path + " is not valid JSON");
  return j;
}

bool write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << data;
  return static_cast<bool>(out);
}

std::vector<std::pair<const LemmaSpec*, LemmaVerdict>> eval_lemmas(const Trace& tr, const std::vector<std::string>& names) {
  std::vector<std::pair<const LemmaSpec*, LemmaVerdict>> out;
  for (auto& n : names) {
    const LemmaSpec* l = find_lemma(n);
    out.emplace_back(l, (*l)(tr));
  }
  return out;
}

std::optional<std::string> unknown_lemma(const std::vector<std::string>& names) {
  for (auto& n : names)
    if (!find_lemma(n)) return n;
  return std::nullopt;
}

// the last report the owner judged, with what is needed to re-check it offline
void export_report(const WorldState& w, const std::string& dir) {
  const ActionEvent* last = nullptr;
  for (auto& e : w.trace)
    if (e.label == "GOVerifiesReport") last = &e;
  if (!last) {
    std::cerr << "no verified report to export\n";
    return;
  }
  const Term& body = last->args[3];
  Term sig;
  for (auto& t : w.kb.network()) {
    auto f = untup(t, 3);
    if (f && (*f)[0] == pub("REPORT") && (*f)[1] == body) sig = (*f)[2];
  }
  auto rf = ReportFields::parse(body);
  std::vector<Certificate> chain;
  if (rf && w.platforms.count(rf->chipId.name())) chain = w.kds.chain_for(w.platforms.at(rf->chipId.name()).pl.vcekCert);
  Json ex;
  if (w.kds.ark) ex["trustedRoot"] = term_to_json(w.kds.ark->pub);
  if (rf) ex["nonce"] = term_to_json(rf->reportData);
  for (auto& [name, go] : w.gos)
    if (go.ownerTid == last->args[1]) {
      ex["image"] = go.image;
      ex["idKeyPub"] = term_to_json(go.idk.pub);
    }
  write_file(dir + "/report.json", report_to_json(body, sig).dump(2) + "\n");
  write_file(dir + "/chain.json", chain_to_json(chain).dump(2) + "\n");
  write_file(dir + "/expect.json", ex.dump(2) + "\n");
}

void print_run(const std::string& title, const RunResult& rr, bool expected, const std::string& why,
               const std::vector<std::pair<const LemmaSpec*, LemmaVerdict>>& verdicts, const Common& c) {
  auto audit = audit_trace(rr.world.trace);
  if (c.format == "json") {
    write_trace_jsonl(std::cout, rr.world.trace);
    return;
  }
  std::cout << title << ": " << (expected ? "expected outcome" : "UNEXPECTED outcome") << "\n";
  if (!why.empty()) std::cout << "  detail: " << why << "\n";
  std::cout << "  steps: " << rr.applied.size() << ", events: " << rr.world.trace.size() << "\n";
  for (auto& [l, v] : verdicts)
    std::cout << "  " << l->name << ": " << (v.holds ? "HOLDS" : "VIOLATED at event " + std::to_string(v.at)) << "\n";
  for (auto& e : rr.world.trace)
    if (e.label == "GOVerifiesReport") std::cout << "  owner verdict: " << e.args[4].name() << "\n";
  std::cout << "  invariant audit: " << audit.size() << " violation(s)\n";
  for (auto& a : audit) std::cout << "    " << a.invariant << " at " << a.at << ": " << a.detail << "\n";
}

int finish_run(const std::string& title, const RunResult& rr, bool expected, const std::string& why,
               const Common& c) {
  auto verdicts = eval_lemmas(rr.world.trace, c.lemmas);
  if (!c.output.empty() && !write_file(c.output, trace_jsonl(rr.world.trace))) {
    std::cerr << "cannot write " << c.output << "\n";
    return kUnexpected;
  }
  if (!c.reportDir.empty()) export_report(rr.world, c.reportDir);
  print_run(title, rr, expected, why, verdicts, c);
  return expected ? kOk : kUnexpected;
}

int cmd_attack(const std::string& name, const Common& c) {
  const Builtin* b = find_builtin(name);
  if (!b) {
    std::cerr << "unknown scenario " << name << " (see `snplab list`)\n";
    return kUnknown;
  }
  if (auto u = unknown_lemma(c.lemmas)) {
    std::cerr << "unknown lemma " << *u << "\n";
    return kUnknown;
  }
  Scenario sc = with_flags(b->scenario, c.flags, false);
  sc.cfg.recipeDepth = c.recipeDepth;
  if (!c.exportScenario.empty()) write_file(c.exportScenario, scenario_to_json(sc).dump(2) + "\n");
  RunResult rr = run_scenario(sc);
  std::string why;
  bool ok = b->expect(rr, why);
  Common cc = c;
  if (cc.lemmas.empty()) cc.lemmas = b->lemmas;
  return finish_run(b->kind + " " + name, rr, ok, why, cc);
}

int cmd_run(const std::string& path, const Common& c) {
  auto j = read_json(path);
  if (!j) {
    std::cerr << j.error().detail << "\n";
    return kParse;
  }
  auto sc = scenario_from_json(j.value());
  if (!sc) {
    std::cerr << "scenario: " << sc.error().detail << "\n";
    return kParse;
  }
  Common cc = c;
  std::vector<std::string> wantViolated, wantHolds;
  std::optional<std::string> wantVerdict;
  if (j.value().contains("expect")) {
    auto& e = j.value()["expect"];
    wantViolated = e.value("violated", std::vector<std::string>{});
    wantHolds = e.value("holds", std::vector<std::string>{});
    if (e.contains("verdict")) wantVerdict = e["verdict"].get<std::string>();
  }
  for (auto* v : {&wantViolated, &wantHolds})
    for (auto& n : *v)
      if (std::find(cc.lemmas.begin(), cc.lemmas.end(), n) == cc.lemmas.end()) cc.lemmas.push_back(n);
  if (auto u = unknown_lemma(cc.lemmas)) {
    std::cerr << "unknown lemma " << *u << "\n";
    return kUnknown;
  }
  Scenario s = with_flags(sc.value(), c.flags, false);
  if (!c.exportScenario.empty()) write_file(c.exportScenario, scenario_to_json(s).dump(2) + "\n");
  RunResult rr = run_scenario(s);
  std::string why;
  bool ok = rr.ok();
  if (!ok) why = rr.error->code + " " + rr.error->detail;
  for (auto& n : wantViolated)
    if (ok && (*find_lemma(n))(rr.world.trace).holds) ok = false, why = n + " expected VIOLATED";
  for (auto& n : wantHolds)
    if (ok && !(*find_lemma(n))(rr.world.trace).holds) ok = false, why = n + " expected HOLDS";
  if (ok && wantVerdict) {
    std::string got = "none";
    for (auto& e : rr.world.trace)
      if (e.label == "GOVerifiesReport") got = e.args[4].name();
    if (got != *wantVerdict) ok = false, why = "owner verdict " + got + ", expected " + *wantVerdict;
  }
  return finish_run("scenario " + s.name, rr, ok, why, cc);
}

Json outcome_json(const LemmaOutcome& o, const LemmaSpec& spec, const std::string& config) {
  Json j;
  j["lemma"] = o.name;
  j["config"] = config;
  j["verdict"] = o.holds ? "HOLDS" : "VIOLATED";
  j["expected"] = spec.expectHolds ? "HOLDS" : "VIOLATED";
  if (!o.holds) {
    j["why"] = o.why;
    Json path = Json::array();
    for (auto& s : o.witness) path.push_back(step_to_json(s));
    j["witness"] = std::move(path);
    Json tr = Json::array();
    for (auto& e : o.witnessTrace) tr.push_back(event_to_json(e));
    j["trace"] = std::move(tr);
  }
  return j;
}

int cmd_explore(const std::string& configName, const std::string& path, bool stopEarly, int maxCorruptions,
                int maxRequests, int maxSwaps,
                const Common& c) {
  if (auto u = unknown_lemma(c.lemmas)) {
    std::cerr << "unknown lemma " << *u << "\n";
    return kUnknown;
  }
  // lemmas grouped by the configuration they are judged under
  std::map<std::string, std::vector<const LemmaSpec*>> groups;
  std::map<std::string, WorldConfig> configs;
  if (!path.empty()) {
    auto j = read_json(path);
    if (!j) {
      std::cerr << j.error().detail << "\n";
      return kParse;
    }
    auto cfg = config_from_json(j.value());
    if (!cfg) {
      std::cerr << "scenario: " << cfg.error().detail << "\n";
      return kParse;
    }
    configs[path] = cfg.value();
    for (auto& n : c.lemmas) groups[path].push_back(find_lemma(n));
    if (c.lemmas.empty())
      for (auto& l : lemma_registry()) groups[path].push_back(&l);
  } else if (!configName.empty()) {
    auto cfg = named_config(configName);
    if (!cfg) {
      std::cerr << "unknown configuration " << configName << "\n";
      return kUnknown;
    }
    configs[configName] = *cfg;
    for (auto& n : c.lemmas) groups[configName].push_back(find_lemma(n));
    if (c.lemmas.empty()) groups[configName] = lemmas_for_config(configName);
  } else {
    std::vector<const LemmaSpec*> ls;
    for (auto& n : c.lemmas) ls.push_back(find_lemma(n));
    if (ls.empty())
      for (auto& l : lemma_registry()) ls.push_back(&l);
    for (auto* l : ls) {
      groups[l->config].push_back(l);
      configs[l->config] = *named_config(l->config);
    }
  }

  Json report = Json::array();
  bool allExpected = true;
  for (auto& [name, ls] : groups) {
    WorldConfig cfg = configs[name];
    Bounds b = default_bounds(cfg);
    b.maxDepth = c.maxDepth;
    b.recipeDepth = c.recipeDepth;
    b.maxCorruptions = maxCorruptions;
    if (maxRequests >= 0) b.maxRequests = maxRequests;
    if (maxSwaps >= 0) b.maxSwaps = maxSwaps;
    b.jobs = c.jobs;
    cfg.flags.ignoreRootMdEntry |= c.flags.ignoreRootMdEntry;
    cfg.flags.replayOverComm |= c.flags.replayOverComm;
    cfg.flags.mitigation |= c.flags.mitigation;
    ExploreOptions opt;
    opt.stopWhenAllViolated = stopEarly;
    auto r = explore(cfg, ls, b, opt);
    if (!r) {
      std::cerr << name << ": " << r.error().code << " " << r.error().detail << "\n";
      return kUnexpected;
    }
    auto& res = r.value();
    if (c.format == "summary")
      std::cout << "configuration " << name << ": " << res.states << " states, " << res.transitions
                << " transitions, " << res.seconds << " s\n";
    for (std::size_t i = 0; i < ls.size(); ++i) {
      auto& o = res.lemmas[i];
      bool expected = o.holds == ls[i]->expectHolds;
      allExpected = allExpected && expected;
      report.push_back(outcome_json(o, *ls[i], name));
      if (c.format == "summary") {
        std::cout << "  " << o.name << ": " << (o.holds ? "HOLDS (within bounds)" : "VIOLATED")
                  << (expected ? "" : "  <-- unexpected") << "\n";
        if (!o.holds) {
          std::cout << "    " << o.why << "\n    witness (" << o.witness.size() << " steps):";
          for (auto& s : o.witness) std::cout << " " << s.op << (s.names.empty() ? "" : "[" + s.names[0] + "]");
          std::cout << "\n";
        }
      }
    }
  }
  if (c.format == "json") std::cout << report.dump(2) << "\n";
  if (!c.output.empty() && !write_file(c.output, report.dump(2) + "\n")) {
    std::cerr << "cannot write " << c.output << "\n";
    return kUnexpected;
  }
  return allExpected ? kOk : kUnexpected;
}

int cmd_verify(const std::string& reportPath, const std::string& chainPath, const std::string& expectPath,
               const Common& c) {
  auto rj = read_json(reportPath);
  auto cj = read_json(chainPath);
  if (!rj || !cj) {
    std::cerr << (!rj ? rj.error().detail : cj.error().detail) << "\n";
    return kParse;
  }
  auto report = report_from_json(rj.value());
  auto chain = chain_from_json(cj.value());
  if (!report || !chain) {
    std::cerr << (!report ? report.error().detail : chain.error().detail) << "\n";
    return kParse;
  }
  Expectations ex;
  if (!expectPath.empty()) {
    auto ej = read_json(expectPath);
    if (!ej) {
      std::cerr << ej.error().detail << "\n";
      return kParse;
    }
    auto e = expectations_from_json(ej.value());
    if (!e) {
      std::cerr << e.error().detail << "\n";
      return kParse;
    }
    ex = e.value();
  }
  auto [body, sig] = report.value();
  auto f = ReportFields::parse(body);
  GoState go;
  // without expectations the report is checked against itself and the chain's own root
  if (!chain.value().empty()) go.trustedRoot = chain.value().back().pub;
  if (ex.trustedRoot) go.trustedRoot = *ex.trustedRoot;
  go.pendingNonce = ex.nonce ? *ex.nonce : f->reportData;
  go.expectedDigest = ex.image ? image_digest(*ex.image) : f->launchDigest;
  go.expectedIdKeyDigest = ex.idKeyPub ? id_key_digest(*ex.idKeyPub) : f->digestIdk;
  go.pinnedChip = ex.pinnedChip;
  Verdict v = evaluate_report(go, body, sig, chain.value(), c.flags.mitigation);
  if (c.format == "json") {
    std::cout << verdict_to_json(v).dump(2) << "\n";
  } else {
    std::cout << "verdict: " << v.label() << "\n";
    for (auto& [n, ok] : v.checks) std::cout << "  " << n << ": " << (ok ? "ok" : "FAIL") << "\n";
  }
  return kOk;
}

int cmd_list(const Common& c) {
  if (c.format == "json") {
    Json j;
    j["lemmas"] = Json::array();
    for (auto& l : lemma_registry())
      j["lemmas"].push_back({{"name", l.name},
                             {"kind", l.kind},
                             {"config", l.config},
                             {"expected", l.expectHolds ? "HOLDS" : "VIOLATED"}});
    j["scenarios"] = Json::array();
    for (auto& b : builtins())
      j["scenarios"].push_back({{"name", b.scenario.name}, {"kind", b.kind}, {"description", b.scenario.description}});
    j["configs"] = {"assoc", "noassoc", "twoguests"};
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::cout << "scenarios:\n";
  for (auto& b : builtins())
    std::cout << "  " << b.scenario.name << " (" << b.kind << ") " << b.scenario.description << "\n";
  std::cout << "lemmas:\n";
  for (auto& l : lemma_registry())
    std::cout << "  " << l.name << " [" << l.kind << ", " << l.config << "] expected "
              << (l.expectHolds ? "HOLDS" : "VIOLATED") << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  (void)std::getenv("SNPLAB_SEED");  // accepted, not needed: runs are deterministic

  CLI::App app{"snplab: symbolic simulator and bounded model checker for SEV-SNP guest management"};
  app.require_subcommand(1);
  Common c;

  auto* run = app.add_subcommand("run", "execute a scenario file");
  std::string scenarioPath;
  run->add_option("scenario", scenarioPath, "scenario JSON (schema 1)")->required();
  add_common(run, c);
  run->add_option("--report-dir", c.reportDir, "write report.json, chain.json and expect.json of the last report");
  run->add_option("--export-scenario", c.exportScenario, "write the effective scenario JSON");

  auto* exp = app.add_subcommand("explore", "bounded exhaustive search for lemma violations");
  std::string configName, explorePath;
  bool stopEarly = false;
  int maxCorruptions = 1;
  int maxRequests = -1;
  int maxSwaps = -1;
  exp->add_option("scenario", explorePath, "scenario JSON whose entities define the world");
  exp->add_option("--config", configName, "builtin configuration: assoc, noassoc, twoguests");
  exp->add_flag("--stop-when-violated", stopEarly, "stop once every selected lemma is violated");
  exp->add_option("--max-corruptions", maxCorruptions, "corruption steps allowed")->check(CLI::NonNegativeNumber);
  exp->add_option("--max-requests", maxRequests, "guest requests per guest")->check(CLI::NonNegativeNumber);
  exp->add_option("--max-swaps", maxSwaps, "swap-outs per guest")->check(CLI::NonNegativeNumber);
  add_common(exp, c);

  auto* att = app.add_subcommand("attack", "run a builtin attack or demo scenario");
  std::string attackName;
  att->add_option("name", attackName, "scenario name (see list)")->required();
  add_common(att, c);
  att->add_option("--report-dir", c.reportDir, "write report.json, chain.json and expect.json of the last report");
  att->add_option("--export-scenario", c.exportScenario, "write the scenario JSON");

  auto* ver = app.add_subcommand("verify-report", "check an attestation report offline");
  std::string reportPath, chainPath, expectPath;
  ver->add_option("report", reportPath, "report JSON")->required();
  ver->add_option("chain", chainPath, "certificate chain JSON, leaf first")->required();
  ver->add_option("expectations", expectPath, "expected nonce, image, id key and trusted root");
  add_common(ver, c);

  auto* lst = app.add_subcommand("list", "list builtin scenarios and lemmas");
  add_common(lst, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }

  if (*run) return cmd_run(scenarioPath, c);
  if (*exp) return cmd_explore(configName, explorePath, stopEarly, maxCorruptions, maxRequests, maxSwaps, c);
  if (*att) return cmd_attack(attackName, c);
  if (*ver) return cmd_verify(reportPath, chainPath, expectPath, c);
  return cmd_list(c);
}

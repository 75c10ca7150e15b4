#pragma once

#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "agents.hpp"
#include "builtins.hpp"
#include "kds.hpp"
#include "scenario.hpp"
#include "trace.hpp"

namespace snplab {

using Json = nlohmann::ordered_json;

inline Json term_to_json(const Term& t) {
  Json j;
  j["t"] = head_name(t.head());
  switch (t.head()) {
    case Head::PubConst: j["name"] = t.name(); break;
    case Head::Fresh: j["id"] = t.num(); break;
    case Head::Counter: j["n"] = t.num(); break;
    case Head::TrueVal: break;
    default: {
      Json a = Json::array();
      for (auto& x : t.args()) a.push_back(term_to_json(x));
      j["args"] = std::move(a);
    }
  }
  return j;
}

inline Result<Term> term_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("t") || !j["t"].is_string()) return err("ParseError", "term needs \"t\"");
  auto h = head_from_name(j["t"].get<std::string>());
  if (!h) return err("ParseError", "unknown head " + j["t"].get<std::string>());
  try {
    switch (*h) {
      case Head::PubConst: return Term::pub(j.at("name").get<std::string>());
      case Head::Fresh: return Term::fresh(j.at("id").get<std::uint64_t>());
      case Head::Counter: return Term::counter(j.at("n").get<std::uint64_t>());
      case Head::TrueVal: return Term::truth();
      default: {
        std::vector<Term> args;
        for (auto& a : j.at("args")) {
          auto r = term_from_json(a);
          if (!r) return r;
          args.push_back(r.value());
        }
        if (args.size() != head_arity(*h)) return err("ParseError", std::string("arity of ") + head_name(*h));
        return Term::make(*h, std::move(args));
      }
    }
  } catch (const std::exception& e) {
    return err("ParseError", e.what());
  }
}

inline Json event_to_json(const ActionEvent& e) {
  Json j;
  j["step"] = e.step;
  j["label"] = e.label;
  Json a = Json::array();
  for (auto& t : e.args) a.push_back(term_to_json(t));
  j["args"] = std::move(a);
  return j;
}

inline Result<ActionEvent> event_from_json(const Json& j) {
  try {
    ActionEvent e;
    e.step = j.at("step").get<std::size_t>();
    e.label = j.at("label").get<std::string>();
    for (auto& a : j.at("args")) {
      auto t = term_from_json(a);
      if (!t) return t.error();
      e.args.push_back(t.value());
    }
    return e;
  } catch (const std::exception& ex) {
    return err("ParseError", ex.what());
  }
}

inline void write_trace_jsonl(std::ostream& os, const Trace& tr) {
  for (auto& e : tr) os << event_to_json(e).dump() << '\n';
}

inline std::string trace_jsonl(const Trace& tr) {
  std::ostringstream os;
  write_trace_jsonl(os, tr);
  return os.str();
}

inline Result<Trace> read_trace_jsonl(std::istream& is) {
  Trace tr;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) return err("ParseError", "line " + std::to_string(n));
    auto e = event_from_json(j);
    if (!e) return e.error();
    tr.push_back(e.value());
  }
  return tr;
}

inline Json step_to_json(const Step& s) {
  Json j;
  j["op"] = s.op;
  j["names"] = s.names;
  Json m = Json::array();
  for (auto& t : s.msgs) m.push_back(term_to_json(t));
  j["msgs"] = std::move(m);
  return j;
}

inline Json config_to_json(const WorldConfig& c) {
  Json ent;
  ent["platforms"] = Json::array();
  for (auto& p : c.platforms) ent["platforms"].push_back({{"name", p.name}, {"tcb", p.tcb}});
  ent["mas"] = Json::array();
  for (auto& m : c.mas) ent["mas"].push_back({{"name", m.name}, {"platform", m.platform}, {"peer", m.peer}});
  ent["guests"] = Json::array();
  for (auto& g : c.guests)
    ent["guests"].push_back({{"name", g.name},
                             {"owner", g.owner},
                             {"platform", g.platform},
                             {"ma", g.ma},
                             {"allowMig", g.allowMig},
                             {"image", g.image}});
  ent["owners"] = Json::array();
  for (auto& o : c.gos) ent["owners"].push_back({{"name", o.name}, {"pinnedChip", o.pinnedChip}});
  Json j;
  j["entities"] = std::move(ent);
  j["tcbOrder"] = c.tcbOrder;
  j["flags"] = {{"ignoreRootMdEntry", c.flags.ignoreRootMdEntry},
                {"replayOverComm", c.flags.replayOverComm},
                {"mitigation", c.flags.mitigation}};
  Json pol = Json::array();
  for (auto k : c.policy.enabled) pol.push_back(kind_name(k));
  j["corruptionPolicy"] = std::move(pol);
  j["maxMigrations"] = c.maxMigrations;
  j["recipeDepth"] = c.recipeDepth;
  return j;
}

inline Json scenario_to_json(const Scenario& sc) {
  Json j;
  j["schema"] = 1;
  j["name"] = sc.name;
  j["description"] = sc.description;
  Json cfg = config_to_json(sc.cfg);
  for (auto& [k, v] : cfg.items()) j[k] = v;
  j["steps"] = Json::array();
  for (auto& s : sc.steps) {
    Json x{{"op", s.op}, {"names", s.names}};
    if (s.pick != "first") x["pick"] = s.pick;
    j["steps"].push_back(std::move(x));
  }
  return j;
}

inline Result<WorldConfig> config_from_json(const Json& j) {
  try {
    WorldConfig c;
    const Json& e = j.at("entities");
    for (auto& p : e.value("platforms", Json::array()))
      c.platforms.push_back({p.at("name").get<std::string>(), p.value("tcb", std::string("v1"))});
    for (auto& m : e.value("mas", Json::array()))
      c.mas.push_back({m.at("name").get<std::string>(), m.at("platform").get<std::string>(),
                       m.value("peer", std::string())});
    for (auto& g : e.value("guests", Json::array()))
      c.guests.push_back({g.at("name").get<std::string>(), g.at("owner").get<std::string>(),
                          g.at("platform").get<std::string>(), g.value("ma", std::string()),
                          g.value("allowMig", false), g.value("image", kGvmImage)});
    for (auto& o : e.value("owners", Json::array()))
      c.gos.push_back({o.at("name").get<std::string>(), o.value("pinnedChip", std::string())});
    c.tcbOrder = j.value("tcbOrder", std::vector<std::string>{});
    if (j.contains("flags")) {
      auto& f = j["flags"];
      c.flags.ignoreRootMdEntry = f.value("ignoreRootMdEntry", false);
      c.flags.replayOverComm = f.value("replayOverComm", false);
      c.flags.mitigation = f.value("mitigation", false);
    }
    for (auto& k : j.value("corruptionPolicy", Json::array())) {
      auto kind = kind_from_name(k.get<std::string>());
      if (!kind) return err("ParseError", "unknown corruption kind " + k.get<std::string>());
      c.policy.enabled.insert(*kind);
    }
    c.maxMigrations = j.value("maxMigrations", 1);
    c.recipeDepth = j.value("recipeDepth", 3);
    for (auto& g : c.guests)
      if (!c.platform(g.platform)) return err("ParseError", "guest " + g.name + " on unknown platform");
    for (auto& m : c.mas)
      if (!c.platform(m.platform)) return err("ParseError", "MA " + m.name + " on unknown platform");
    return c;
  } catch (const std::exception& ex) {
    return err("ParseError", ex.what());
  }
}

inline Result<Scenario> scenario_from_json(const Json& j) {
  if (!j.is_object()) return err("ParseError", "scenario must be an object");
  if (j.value("schema", 0) != 1) return err("ParseError", "unsupported schema");
  auto cfg = config_from_json(j);
  if (!cfg) return cfg.error();
  Scenario sc;
  sc.cfg = cfg.value();
  try {
    sc.name = j.value("name", std::string("scenario"));
    sc.description = j.value("description", std::string());
    bool setup = j.value("setup", false);
    if (setup) sc.steps = setup_script(sc.cfg);
    for (auto& s : j.value("steps", Json::array()))
      sc.steps.push_back({s.at("op").get<std::string>(), s.value("names", std::vector<std::string>{}),
                          s.value("pick", std::string("first"))});
  } catch (const std::exception& ex) {
    return err("ParseError", ex.what());
  }
  return sc;
}

inline Json report_to_json(const Term& body, const Term& sig) {
  Json j;
  auto f = ReportFields::parse(body);
  if (f) {
    j["fields"] = {{"imageId", term_to_json(f->imageId)},
                   {"allowMig", term_to_json(f->allowMig)},
                   {"reportData", term_to_json(f->reportData)},
                   {"launchDigest", term_to_json(f->launchDigest)},
                   {"digestIdk", term_to_json(f->digestIdk)},
                   {"reportId", term_to_json(f->reportId)},
                   {"reportIdMa", term_to_json(f->reportIdMa)},
                   {"chipId", term_to_json(f->chipId)},
                   {"hostData", term_to_json(f->hostData)},
                   {"tcbVersion", term_to_json(f->tcbVersion)},
                   {"migrationEnabled", term_to_json(f->migrationEnabled)}};
  }
  j["sig"] = term_to_json(sig);
  return j;
}

inline Result<std::pair<Term, Term>> report_from_json(const Json& j) {
  static const char* names[] = {"imageId", "allowMig",   "reportData", "launchDigest", "digestIdk",       "reportId",
                                "reportIdMa", "chipId", "hostData",   "tcbVersion",   "migrationEnabled"};
  if (!j.is_object() || !j.contains("fields") || !j.contains("sig")) return err("ParseError", "report needs fields and sig");
  std::vector<Term> v;
  for (auto* n : names) {
    if (!j["fields"].contains(n)) return err("ParseError", std::string("missing field ") + n);
    auto t = term_from_json(j["fields"][n]);
    if (!t) return t.error();
    v.push_back(t.value());
  }
  auto sig = term_from_json(j["sig"]);
  if (!sig) return sig.error();
  return std::pair{tup(v), sig.value()};
}

inline Json cert_to_json(const Certificate& c) {
  return {{"subjectKind", c.subjectKind},
          {"issuerId", c.issuerId},
          {"subjectId", c.subjectId},
          {"pub", term_to_json(c.pub)},
          {"sig", term_to_json(c.sig)}};
}

inline Json chain_to_json(const std::vector<Certificate>& chain) {
  Json a = Json::array();
  for (auto& c : chain) a.push_back(cert_to_json(c));
  return a;
}

// the signed body is rebuilt from the named fields
inline Result<std::vector<Certificate>> chain_from_json(const Json& j) {
  if (!j.is_array()) return err("ParseError", "chain must be an array");
  std::vector<Certificate> out;
  try {
    for (auto& c : j) {
      Certificate x;
      x.subjectKind = c.at("subjectKind").get<std::string>();
      x.issuerId = c.at("issuerId").get<std::string>();
      x.subjectId = c.at("subjectId").get<std::string>();
      auto p = term_from_json(c.at("pub"));
      auto s = term_from_json(c.at("sig"));
      if (!p) return p.error();
      if (!s) return s.error();
      x.pub = p.value();
      x.sig = s.value();
      x.signedBody = tup({pub(x.subjectKind), pub(x.issuerId), pub(x.subjectId), x.pub});
      out.push_back(std::move(x));
    }
  } catch (const std::exception& ex) {
    return err("ParseError", ex.what());
  }
  return out;
}

struct Expectations {
  std::optional<Term> trustedRoot;
  std::optional<Term> nonce;
  std::optional<std::string> image;
  std::optional<Term> idKeyPub;
  std::optional<std::string> pinnedChip;
};

inline Result<Expectations> expectations_from_json(const Json& j) {
  if (!j.is_object()) return err("ParseError", "expectations must be an object");
  Expectations e;
  auto term = [&](const char* k, std::optional<Term>& dst) -> Status {
    if (!j.contains(k)) return Unit{};
    auto t = term_from_json(j[k]);
    if (!t) return t.error();
    dst = t.value();
    return Unit{};
  };
  if (auto s = term("trustedRoot", e.trustedRoot); !s) return s.error();
  if (auto s = term("nonce", e.nonce); !s) return s.error();
  if (auto s = term("idKeyPub", e.idKeyPub); !s) return s.error();
  if (j.contains("image")) e.image = j["image"].get<std::string>();
  if (j.contains("pinnedChip")) e.pinnedChip = j["pinnedChip"].get<std::string>();
  return e;
}

inline Json verdict_to_json(const Verdict& v) {
  Json c;
  for (auto& [n, ok] : v.checks) c[n] = ok;
  return {{"verdict", v.kind}, {"reason", v.reason}, {"checks", c}};
}

}  // namespace snplab

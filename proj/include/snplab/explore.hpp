#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "builtins.hpp"
#include "lemmas.hpp"
#include "world.hpp"

namespace snplab {

struct Bounds {
  int maxDepth = 40;  // total steps, setup included
  int recipeDepth = 3;
  int maxMigrations = 1;
  int maxCorruptions = 1;
  int maxRequests = 1;  // per guest
  int maxSwaps = 2;     // per guest
  std::size_t maxStates = 5'000'000;
  bool corruptFirst = true;  // corruption only as the first step after setup
  unsigned jobs = 0;  // 0 = hardware concurrency
};

struct LemmaOutcome {
  std::string name;
  bool holds = true;
  std::string why;
  std::vector<Step> witness;
  Trace witnessTrace;
};

struct ExplorationResult {
  std::vector<LemmaOutcome> lemmas;
  std::size_t states = 0;
  std::size_t transitions = 0;
  std::size_t maxDepthReached = 0;
  double seconds = 0;
};

namespace canon {

class Renamer {
 public:
  std::string out;

  void term(const Term& t) { write(t, out, true); }
  void str(const std::string& s) {
    out += s;
    out += '|';
  }
  void flag(bool b) { out += b ? '1' : '0'; }

  // rendering that leaves unmapped fresh names anonymous; used to order sets before naming
  std::string provisional(const Term& t) {
    std::string s;
    write(t, s, false);
    return s;
  }

  void term_set(std::vector<Term> ts) {
    std::vector<std::pair<std::string, std::size_t>> keyed;
    keyed.reserve(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) keyed.emplace_back(provisional(ts[i]), i);
    std::sort(keyed.begin(), keyed.end());
    for (auto& [_, i] : keyed) {
      term(ts[i]);
      out += ';';
    }
    out += '#';
  }

 private:
  std::map<std::uint64_t, std::uint64_t> map_;

  void write(const Term& t, std::string& s, bool assign) {
    if (!t.valid()) {
      s += '_';
      return;
    }
    switch (t.head()) {
      case Head::Fresh: {
        auto it = map_.find(t.num());
        if (it == map_.end()) {
          if (!assign) {
            s += "~?";
            return;
          }
          it = map_.emplace(t.num(), map_.size() + 1).first;
        }
        s += '~' + std::to_string(it->second);
        return;
      }
      case Head::PubConst: s += '\'' + t.name() + '\''; return;
      case Head::Counter: s += 'N' + std::to_string(t.num()); return;
      case Head::TrueVal: s += 'T'; return;
      default:
        s += head_name(t.head());
        s += '(';
        for (auto& a : t.args()) {
          write(a, s, assign);
          s += ',';
        }
        s += ')';
    }
  }
};

inline bool epoch_event(const std::string& l) {
  return l == "FWLaunchGVM" || l == "FWImportsGVM" || lem::is_corruption(l);
}

inline void context(Renamer& r, const GuestContext& c) {
  r.str(c.name);
  r.str(c.owner);
  r.flag(c.isMa);
  for (const Term* t : {&c.addr, &c.chipTid, &c.imageTid, &c.vmpck, &c.fwMsgCount, &c.vmrk, &c.oek, &c.reportId,
                        &c.pubIdk, &c.pid, &c.statePtr})
    r.term(*t);
  r.term(c.reportIdMa ? *c.reportIdMa : Term());
  r.term(c.rootMdEntry ? *c.rootMdEntry : Term());
  for (bool b : {c.allowMig, c.isMig, c.vmrkFromMa, c.migrationEnabled, c.swapped, c.launched, c.freed}) r.flag(b);
  r.str(c.launchTcb);
  r.str(std::to_string(c.migrations));
}

inline std::string serialize(const WorldState& w) {
  Renamer r;
  r.out.reserve(8192);
  if (w.kds.ark) r.term(w.kds.ark->priv);
  if (w.kds.ask) r.term(w.kds.ask->priv);
  r.out += "\nP";
  for (auto& [name, ps] : w.platforms) {
    r.str(name);
    r.term(ps.pl.cek);
    for (auto& [cn, c] : ps.contexts) context(r, c);
  }
  r.out += "\nT";
  for (auto& [cn, g] : w.threads) {
    r.str(cn);
    r.str(g.name);
    r.term(g.state_term());
  }
  r.out += "\nM";
  for (auto& [mn, m] : w.mas) {
    r.str(mn);
    r.str(m.name);
    r.term(m.vmpck);
    r.term(m.counter);
    r.term(m.imageTid);
    r.term(m.target ? *m.target : Term());
  }
  r.out += "\nG";
  for (auto& [gn, g] : w.gos) {
    r.str(gn);
    r.term(g.ownerTid);
    r.term(g.idk.priv);
    r.term(g.pendingNonce ? *g.pendingNonce : Term());
    r.flag(g.stopped);
  }
  r.out += "\nD";
  for (auto& d : w.deployed) r.str(d);
  for (auto& [k, v] : w.counts) r.str(k + "=" + std::to_string(v));
  r.out += "\nC";
  for (auto& [link, q] : w.chans.queues) {
    r.term(link.first);
    r.term(link.second);
    for (auto& m : q) r.term(m);
    r.out += ';';
  }
  r.out += "\nK";
  r.term_set(w.kb.network());
  r.term_set(std::vector<Term>(w.kb.atoms().begin(), w.kb.atoms().end()));
  r.term_set(std::vector<Term>(w.unique.begin(), w.unique.end()));
  r.out += "\nE";
  // trace as a multiset of events, each tagged with how many residency or corruption events preceded it
  std::vector<Term> evs;
  evs.reserve(w.trace.size());
  std::uint64_t epoch = 0;
  for (auto& e : w.trace) {
    std::vector<Term> parts{pub(e.label), N(epoch)};
    parts.insert(parts.end(), e.args.begin(), e.args.end());
    evs.push_back(tup(parts));
    if (epoch_event(e.label)) ++epoch;
  }
  r.term_set(std::move(evs));
  return r.out;
}

struct Digest {
  std::uint64_t a = 0, b = 0;
  bool operator==(const Digest&) const = default;
};

struct DigestHash {
  std::size_t operator()(const Digest& d) const { return static_cast<std::size_t>(d.a ^ (d.b * 0x9e3779b97f4a7c15ULL)); }
};

inline Digest digest(const std::string& s) {
  std::uint64_t h1 = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h1 ^= c;
    h1 *= 1099511628211ULL;
  }
  std::uint64_t h2 = std::hash<std::string>{}(s);
  return {h1, h2};
}

}  // namespace canon

struct ExploreOptions {
  bool stopWhenAllViolated = false;
  std::function<void(std::size_t depth, std::size_t frontier, std::size_t states)> progress;
};

inline unsigned resolve_jobs(unsigned j) {
  if (j) return j;
  unsigned h = std::thread::hardware_concurrency();
  return h ? h : 1;
}

// two guests on one platform interleave freely, so each gets one swap
inline Bounds default_bounds(const WorldConfig& cfg) {
  Bounds b;
  if (cfg.guests.size() > 1) b.maxSwaps = 1;
  return b;
}

inline bool within(const WorldState& w, const Bounds& b) {
  if (w.count("corrupt") > b.maxCorruptions) return false;
  for (auto& [k, v] : w.counts) {
    if (k.rfind("req:", 0) == 0 && v > b.maxRequests) return false;
    if (k.rfind("swap:", 0) == 0 && v > b.maxSwaps) return false;
  }
  return true;
}

// breadth-first search from the world left by the setup script; witnesses are shortest within the search
inline Result<ExplorationResult> explore(WorldConfig cfg, const std::vector<const LemmaSpec*>& lemmas,
                                         const Bounds& b, const ExploreOptions& opt = {}) {
  if (b.maxDepth > 200 || b.recipeDepth > 8 || b.maxMigrations > 4 || b.maxCorruptions > 4 || b.maxRequests > 8 ||
      b.maxSwaps > 8 || cfg.platforms.size() > 4 || cfg.guests.size() > 4 || cfg.mas.size() > 4)
    return err("BoundsTooLarge", "bounds exceed the exploration caps");
  auto t0 = std::chrono::steady_clock::now();
  cfg.maxMigrations = b.maxMigrations;
  cfg.recipeDepth = b.recipeDepth;
  Scenario setup{"setup", "", cfg, setup_script(cfg)};
  RunResult rr = run_scenario(setup);
  if (!rr.ok()) return err("SetupFailed", rr.error->detail);

  ExplorationResult res;
  for (auto* l : lemmas) res.lemmas.push_back({l->name, true, {}, {}, {}});
  std::size_t open = lemmas.size();

  auto record = [&](std::size_t li, const LemmaVerdict& v, const std::vector<Step>& path, const Trace& tr) {
    auto& o = res.lemmas[li];
    if (!o.holds) return;
    o.holds = false;
    o.why = v.why;
    o.witness = path;
    o.witnessTrace = tr;
    --open;
  };

  std::vector<Step> setupPath = rr.applied;
  const std::size_t setupDepth = rr.world.depth;
  for (std::size_t li = 0; li < lemmas.size(); ++li) {
    auto v = (*lemmas[li])(rr.world.trace, 0);
    if (!v.holds) record(li, v, setupPath, rr.world.trace);
  }

  struct Node {
    WorldState w;
    std::vector<Step> path;
  };
  struct Child {
    Step step;
    WorldState w;
    canon::Digest d;
    std::vector<std::pair<std::size_t, LemmaVerdict>> violations;
  };

  std::unordered_set<canon::Digest, canon::DigestHash> seen;
  seen.insert(canon::digest(canon::serialize(rr.world)));
  std::vector<Node> frontier;
  frontier.push_back({rr.world, setupPath});
  res.states = 1;
  res.maxDepthReached = rr.world.depth;
  unsigned jobs = resolve_jobs(b.jobs);

  while (!frontier.empty() && !(opt.stopWhenAllViolated && open == 0)) {
    if (static_cast<int>(frontier.front().w.depth) >= b.maxDepth) break;
    std::vector<std::vector<Child>> kids(frontier.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < frontier.size();) {
        const WorldState& w = frontier[i].w;
        std::size_t from = w.trace.size();
        bool mayCorrupt = !b.corruptFirst || w.depth == setupDepth;
        for (auto& [s, nw] : successors(w)) {
          if (!within(nw, b) || (s.op == "corrupt" && !mayCorrupt)) continue;
          Child c{s, std::move(nw), {}, {}};
          c.d = canon::digest(canon::serialize(c.w));
          for (std::size_t li = 0; li < lemmas.size(); ++li) {
            if (!res.lemmas[li].holds) continue;
            auto v = (*lemmas[li])(c.w.trace, from);
            if (!v.holds) c.violations.emplace_back(li, std::move(v));
          }
          kids[i].push_back(std::move(c));
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    std::vector<Node> nextFrontier;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      for (auto& c : kids[i]) {
        ++res.transitions;
        if (!c.violations.empty()) {
          auto path = frontier[i].path;
          path.push_back(c.step);
          for (auto& [li, v] : c.violations) record(li, v, path, c.w.trace);
        }
        if (!seen.insert(c.d).second) continue;
        auto path = frontier[i].path;
        path.push_back(c.step);
        res.maxDepthReached = std::max<std::size_t>(res.maxDepthReached, c.w.depth);
        nextFrontier.push_back({std::move(c.w), std::move(path)});
      }
      kids[i].clear();
    }
    res.states += nextFrontier.size();
    if (res.states > b.maxStates)
      return err("BoundsTooLarge", "more than " + std::to_string(b.maxStates) + " states");
    frontier = std::move(nextFrontier);
    if (opt.progress && !frontier.empty()) opt.progress(frontier.front().w.depth, frontier.size(), res.states);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline std::vector<const LemmaSpec*> lemmas_for_config(const std::string& config, std::optional<bool> expectHolds = {}) {
  std::vector<const LemmaSpec*> out;
  for (auto& l : lemma_registry())
    if (l.config == config && (!expectHolds || l.expectHolds == *expectHolds)) out.push_back(&l);
  return out;
}

}  // namespace snplab

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "world.hpp"

namespace snplab {

// pick: "first" | "last" | "#k" (k-th enabled match) | "out:j" (message emitted by script step j)
struct ScriptStep {
  std::string op;
  std::vector<std::string> names;
  std::string pick = "first";
};

struct Scenario {
  std::string name;
  std::string description;
  WorldConfig cfg;
  std::vector<ScriptStep> steps;
};

struct RunResult {
  WorldState world;
  std::vector<Step> applied;
  std::vector<std::vector<Term>> outputs;
  std::optional<Error> error;
  std::size_t failedIndex = 0;

  bool ok() const { return !error; }
};

inline bool step_matches(const Step& s, const ScriptStep& ss) {
  if (s.op != ss.op || s.names.size() < ss.names.size()) return false;
  for (std::size_t i = 0; i < ss.names.size(); ++i)
    if (s.names[i] != ss.names[i]) return false;
  return true;
}

inline Result<Applied> resolve_and_apply(const WorldState& w, const ScriptStep& ss,
                                         const std::vector<std::vector<Term>>& outputs, Step* chosen) {
  std::optional<std::size_t> outIdx;
  std::optional<std::size_t> nth;
  bool last = ss.pick == "last";
  if (ss.pick.rfind("out:", 0) == 0) outIdx = std::stoul(ss.pick.substr(4));
  else if (ss.pick.rfind("#", 0) == 0) nth = std::stoul(ss.pick.substr(1));
  else if (ss.pick != "first" && !last) return err("BadPick", ss.pick);
  if (outIdx && *outIdx >= outputs.size()) return err("BadPick", ss.pick);

  std::optional<Applied> found;
  std::size_t seen = 0;
  for (auto& s : candidate_steps(w)) {
    if (!step_matches(s, ss)) continue;
    if (outIdx) {
      auto& o = outputs[*outIdx];
      if (s.msgs.empty() || std::find(o.begin(), o.end(), s.msgs[0]) == o.end()) continue;
    }
    auto r = apply_raw(w, s);
    if (!r) continue;
    if (nth && seen++ != *nth) continue;
    *chosen = s;
    found = std::move(r.value());
    if (!last) break;
  }
  if (!found) return err("ScriptStepNotEnabled");
  return std::move(*found);
}

inline RunResult run_scenario(const Scenario& sc) {
  RunResult rr{WorldState(sc.cfg), {}, {}, std::nullopt, 0};
  for (std::size_t i = 0; i < sc.steps.size(); ++i) {
    Step chosen;
    auto r = resolve_and_apply(rr.world, sc.steps[i], rr.outputs, &chosen);
    if (!r) {
      std::string what = sc.steps[i].op;
      for (auto& n : sc.steps[i].names) what += " " + n;
      rr.error = err("ScriptStepNotEnabled", std::to_string(i) + ": " + what);
      rr.failedIndex = i;
      return rr;
    }
    rr.world = std::move(r.value().world);
    rr.outputs.push_back(std::move(r.value().outputs));
    rr.applied.push_back(std::move(chosen));
  }
  return rr;
}

}  // namespace snplab

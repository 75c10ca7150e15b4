#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "term.hpp"
#include "trace.hpp"

namespace snplab {

struct Flags {
  bool ignoreRootMdEntry = false;
  bool replayOverComm = false;
  bool mitigation = false;

  bool operator==(const Flags&) const = default;
};

// everything a transition may touch outside the entity it operates on
struct Env {
  FreshSource& fresh;
  std::set<Term>& unique;
  std::vector<ActionEvent>& events;
  std::vector<Term>& out;
  Flags flags{};
  std::vector<std::string> tcbOrder{};
  int maxMigrations = 1;
  std::function<std::string(const std::string& chip, const Term& imageTid)> ctxName{};

  void emit(std::string label, std::vector<Term> args) { events.push_back(ev(std::move(label), std::move(args))); }
  void publish(const Term& t) { out.push_back(t); }
  bool uniq(const Term& t) { return unique.insert(t).second; }
};

// standalone Env with its own storage, handy for unit tests and tools
struct EnvStore {
  EnvStore() = default;
  EnvStore(const EnvStore&) = delete;
  EnvStore& operator=(const EnvStore&) = delete;

  FreshSource fresh;
  std::set<Term> unique;
  std::vector<ActionEvent> events;
  std::vector<Term> out;
  Env env{fresh, unique, events, out};
};

}  // namespace snplab

#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "term.hpp"
#include "trace.hpp"

namespace snplab {

enum class CorruptionKind { VMPCK, ImageOEK, VMRK, CEK, ARK, ASK };

inline const char* kind_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::VMPCK: return "VMPCK";
    case CorruptionKind::ImageOEK: return "OEK";
    case CorruptionKind::VMRK: return "VMRK";
    case CorruptionKind::CEK: return "CEK";
    case CorruptionKind::ARK: return "ARK";
    case CorruptionKind::ASK: return "ASK";
  }
  return "?";
}

inline std::optional<CorruptionKind> kind_from_name(const std::string& s) {
  for (auto k : {CorruptionKind::VMPCK, CorruptionKind::ImageOEK, CorruptionKind::VMRK,
                 CorruptionKind::CEK, CorruptionKind::ARK, CorruptionKind::ASK})
    if (s == kind_name(k)) return k;
  return std::nullopt;
}

inline const char* corrupt_label(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::VMPCK: return "CorruptVMPCK";
    case CorruptionKind::ImageOEK: return "CorruptImageOEK";
    case CorruptionKind::VMRK: return "CorruptVMRK";
    case CorruptionKind::CEK: return "CorruptCEK";
    case CorruptionKind::ARK: return "RevealARK";
    case CorruptionKind::ASK: return "RevealASK";
  }
  return "Corrupt";
}

struct CorruptionPolicy {
  std::set<CorruptionKind> enabled;

  static CorruptionPolicy none() { return {}; }
  static CorruptionPolicy all() {
    return {{CorruptionKind::VMPCK, CorruptionKind::ImageOEK, CorruptionKind::VMRK,
             CorruptionKind::CEK, CorruptionKind::ARK, CorruptionKind::ASK}};
  }
  bool allows(CorruptionKind k) const { return enabled.count(k) > 0; }
};

class KnowledgeBase {
 public:
  using Slot = std::pair<Term, Term>;  // (nonce, key)

  KnowledgeBase() : d_(std::make_shared<Data>()) {}

  // network = true records t in the publication log (replayable message)
  KnowledgeBase absorb(const Term& t, std::vector<ActionEvent>* events = nullptr,
                       bool network = true) const {
    auto d = std::make_shared<Data>(*d_);
    if (network && d->seen.insert(t).second) d->log.push_back(t);
    std::vector<Term> work{t};
    std::vector<Term> subs;
    subterms(t, subs);
    for (auto& s : subs) {
      if (!s.is(Head::SnEnc)) continue;
      Slot slot{s.arg(1), s.arg(2)};
      auto& msgs = d->observed[slot];
      bool fresh_msg = msgs.insert(s.arg(0)).second;
      if (fresh_msg && msgs.size() >= 2 && d->reused.insert(slot).second) {
        work.push_back(slot.second);
        if (events) events->push_back(ev("ReuseNonceKey", {slot.first, slot.second}));
      }
    }
    saturate(*d, std::move(work));
    return KnowledgeBase(std::move(d));
  }

  bool derivable(const Term& t) const {
    if (d_->atoms.count(t)) return true;
    switch (t.head()) {
      case Head::PubConst: case Head::Counter: case Head::TrueVal: return true;
      case Head::Fresh: return false;
      default:
        for (auto& a : t.args())
          if (!derivable(a)) return false;
        return true;
    }
  }

  bool knows(const Term& t) const { return d_->atoms.count(t) > 0; }
  const std::set<Term>& atoms() const { return d_->atoms; }
  const std::vector<Term>& network() const { return d_->log; }
  const std::map<Slot, std::set<Term>>& observed() const { return d_->observed; }
  const std::set<Slot>& reused() const { return d_->reused; }

  bool same_as(const KnowledgeBase& o) const {
    return d_ == o.d_ || (d_->atoms == o.d_->atoms && d_->observed == o.d_->observed);
  }

 private:
  struct Data {
    std::set<Term> atoms;
    std::set<Term> seen;
    std::vector<Term> log;
    std::map<Slot, std::set<Term>> observed;
    std::set<Slot> reused;
  };

  explicit KnowledgeBase(std::shared_ptr<const Data> d) : d_(std::move(d)) {}

  static bool derivable_in(const Data& d, const Term& t) {
    return KnowledgeBase(std::shared_ptr<const Data>(&d, [](const Data*) {})).derivable(t);
  }

  static void saturate(Data& d, std::vector<Term> work) {
    for (;;) {
      while (!work.empty()) {
        Term t = std::move(work.back());
        work.pop_back();
        if (!d.atoms.insert(t).second) continue;
        if (t.is(Head::Pair)) {
          work.push_back(t.arg(0));
          work.push_back(t.arg(1));
        }
      }
      for (auto& a : d.atoms) {
        if (a.is(Head::SEnc)) {
          if (!d.atoms.count(a.arg(0)) && derivable_in(d, a.arg(1))) work.push_back(a.arg(0));
        } else if (a.is(Head::SnEnc)) {
          if (!d.atoms.count(a.arg(0)) && derivable_in(d, a.arg(1)) && derivable_in(d, a.arg(2)))
            work.push_back(a.arg(0));
        }
      }
      if (work.empty()) return;
    }
  }

  std::shared_ptr<const Data> d_;
};

inline Result<KnowledgeBase> corrupt(const KnowledgeBase& kb, const Term& secret, CorruptionKind kind,
                                     const CorruptionPolicy& policy,
                                     std::vector<ActionEvent>* events = nullptr,
                                     const std::string& label = {}) {
  if (!policy.allows(kind)) return err("CorruptionDisabled", kind_name(kind));
  if (events) events->push_back(ev(label.empty() ? corrupt_label(kind) : label, {secret}));
  return kb.absorb(secret, events, false);
}

}  // namespace snplab

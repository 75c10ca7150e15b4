#pragma once

// Brute-force derivability: enumerate everything reachable by recipes of bounded depth,
// restricted to the subterms of the knowledge and the goal.

#include <random>
#include <set>
#include <vector>

#include <snplab/term.hpp>

namespace oracle {

using snplab::Head;
using snplab::Term;

inline void collect(const Term& t, std::set<Term>& out) {
  if (!out.insert(t).second) return;
  for (auto& a : t.args()) collect(a, out);
}

// keys exposed by two ciphertexts that share nonce and key but differ in plaintext
inline std::set<Term> reuse_keys(const std::vector<Term>& kb) {
  std::set<Term> subs;
  for (auto& t : kb) collect(t, subs);
  std::set<Term> keys;
  for (auto& a : subs)
    for (auto& b : subs)
      if (a.is(Head::SnEnc) && b.is(Head::SnEnc) && a.arg(1) == b.arg(1) && a.arg(2) == b.arg(2) &&
          a.arg(0) != b.arg(0))
        keys.insert(a.arg(2));
  return keys;
}

inline bool derivable(const std::vector<Term>& kb, const Term& goal, int depth = 5) {
  std::set<Term> universe;
  for (auto& t : kb) collect(t, universe);
  collect(goal, universe);

  std::set<Term> known(kb.begin(), kb.end());
  for (auto& k : reuse_keys(kb)) known.insert(k);
  for (auto& u : universe)
    if (u.is(Head::PubConst) || u.is(Head::Counter) || u.is(Head::TrueVal)) known.insert(u);

  for (int level = 0; level < depth; ++level) {
    std::set<Term> next = known;
    for (auto& t : known) {
      if (t.is(Head::Pair)) {
        next.insert(t.arg(0));
        next.insert(t.arg(1));
      } else if (t.is(Head::SEnc) && known.count(t.arg(1))) {
        next.insert(t.arg(0));
      } else if (t.is(Head::SnEnc) && known.count(t.arg(1)) && known.count(t.arg(2))) {
        next.insert(t.arg(0));
      }
    }
    for (auto& u : universe) {
      if (!snplab::is_constructor(u.head()) || known.count(u)) continue;
      bool all = true;
      for (auto& a : u.args()) all = all && known.count(a);
      if (all) next.insert(u);
    }
    if (next == known) break;
    known = std::move(next);
  }
  return known.count(goal) > 0;
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  Term leaf() {
    switch (pick(5)) {
      case 0: return snplab::pub(std::string(1, static_cast<char>('a' + pick(3))));
      case 1: return snplab::N(pick(3));
      default: return Term::fresh(1 + pick(6));
    }
  }

  Term term(int depth) {
    if (depth <= 1 || pick(4) == 0) return leaf();
    switch (pick(8)) {
      case 0:
      case 1: return snplab::pair(term(depth - 1), term(depth - 1));
      case 2: return snplab::senc(term(depth - 1), key(depth - 1));
      case 3: return snplab::snenc(term(depth - 1), snplab::N(pick(3)), key(depth - 1));
      case 4: return snplab::hash(term(depth - 1));
      case 5: return snplab::sign(term(depth - 1), key(depth - 1));
      case 6: return snplab::mac(term(depth - 1), key(depth - 1));
      default: return snplab::kdf(snplab::pub("k"), key(depth - 1), term(depth - 1));
    }
  }

  // keys are mostly plain names so decryption chains stay likely
  Term key(int depth) { return pick(3) == 0 ? term(depth) : Term::fresh(1 + pick(6)); }

  // at most maxLeaves leaf occurrences across the whole knowledge base
  std::vector<Term> kb(int maxLeaves, int depth) {
    std::vector<Term> out;
    int budget = maxLeaves;
    for (int tries = 0; tries < 40 && budget > 0; ++tries) {
      Term t = term(depth);
      int l = leaves(t);
      if (l <= budget) {
        out.push_back(t);
        budget -= l;
      }
      if (pick(4) == 0) break;
    }
    if (out.empty()) out.push_back(leaf());
    return out;
  }

  static int leaves(const Term& t) {
    if (t.args().empty()) return 1;
    int n = 0;
    for (auto& a : t.args()) n += leaves(a);
    return n;
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

 private:
  std::mt19937_64 rng_;
};

// goals: every subterm of the knowledge plus a few shallow unrelated terms
inline std::vector<Term> goals(const std::vector<Term>& kb, Generator& g, int depth = 2) {
  std::set<Term> s;
  for (auto& t : kb) collect(t, s);
  for (int i = 0; i < 4; ++i) s.insert(g.term(depth));
  return {s.begin(), s.end()};
}

}  // namespace oracle

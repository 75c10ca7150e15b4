#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace snplab {

struct Error {
  std::string code;
  std::string detail;
};

template <class T>
class Result {
 public:
  Result(T v) : v_(std::move(v)) {}
  Result(Error e) : v_(std::move(e)) {}

  bool ok() const { return v_.index() == 0; }
  explicit operator bool() const { return ok(); }

  const T& value() const& {
    if (!ok()) throw std::logic_error("Result holds error " + error().code);
    return std::get<0>(v_);
  }
  T& value() & {
    if (!ok()) throw std::logic_error("Result holds error " + error().code);
    return std::get<0>(v_);
  }
  T&& value() && {
    if (!ok()) throw std::logic_error("Result holds error " + error().code);
    return std::get<0>(std::move(v_));
  }
  const Error& error() const { return std::get<1>(v_); }
  const std::string& code() const {
    static const std::string none;
    return ok() ? none : error().code;
  }

 private:
  std::variant<T, Error> v_;
};

struct Unit {};
using Status = Result<Unit>;

inline Error err(std::string code, std::string detail = {}) {
  return Error{std::move(code), std::move(detail)};
}

enum class Head : std::uint8_t {
  PubConst,
  Fresh,
  Counter,
  Pair,
  SnEnc,
  SEnc,
  Sign,
  Pk,
  Kdf,
  Mac,
  Hash,
  TrueVal
};

inline const char* head_name(Head h) {
  switch (h) {
    case Head::PubConst: return "pub";
    case Head::Fresh: return "fresh";
    case Head::Counter: return "N";
    case Head::Pair: return "pair";
    case Head::SnEnc: return "snenc";
    case Head::SEnc: return "senc";
    case Head::Sign: return "sign";
    case Head::Pk: return "pk";
    case Head::Kdf: return "kdf";
    case Head::Mac: return "mac";
    case Head::Hash: return "h";
    case Head::TrueVal: return "true";
  }
  return "?";
}

inline std::optional<Head> head_from_name(const std::string& s) {
  static const std::pair<const char*, Head> table[] = {
      {"pub", Head::PubConst}, {"fresh", Head::Fresh}, {"N", Head::Counter},
      {"pair", Head::Pair},    {"snenc", Head::SnEnc}, {"senc", Head::SEnc},
      {"sign", Head::Sign},    {"pk", Head::Pk},       {"kdf", Head::Kdf},
      {"mac", Head::Mac},      {"h", Head::Hash},      {"true", Head::TrueVal}};
  for (auto& [n, h] : table)
    if (s == n) return h;
  return std::nullopt;
}

inline std::size_t head_arity(Head h) {
  switch (h) {
    case Head::Pair: case Head::SEnc: case Head::Sign: case Head::Mac: return 2;
    case Head::SnEnc: case Head::Kdf: return 3;
    case Head::Pk: case Head::Hash: return 1;
    default: return 0;
  }
}

inline bool is_constructor(Head h) { return head_arity(h) > 0; }

class Term {
  struct Node {
    Head head;
    std::uint64_t num = 0;
    std::string name;
    std::vector<Term> args;
    std::size_t hash = 0;
    int depth = 1;
  };

 public:
  Term() = default;

  static Term pub(std::string name) {
    auto n = std::make_shared<Node>();
    n->head = Head::PubConst;
    n->name = std::move(name);
    return finish(std::move(n));
  }
  static Term fresh(std::uint64_t id) { return leaf(Head::Fresh, id); }
  static Term counter(std::uint64_t v) { return leaf(Head::Counter, v); }
  static Term truth() { return leaf(Head::TrueVal, 0); }

  static Term make(Head h, std::vector<Term> args) {
    if (args.size() != head_arity(h) || !is_constructor(h))
      throw std::invalid_argument(std::string("bad arity for ") + head_name(h));
    for (auto& a : args)
      if (!a.valid()) throw std::invalid_argument("null subterm");
    auto n = std::make_shared<Node>();
    n->head = h;
    n->args = std::move(args);
    return finish(std::move(n));
  }

  bool valid() const { return static_cast<bool>(n_); }
  Head head() const { return n_->head; }
  const std::string& name() const { return n_->name; }
  std::uint64_t num() const { return n_->num; }
  const std::vector<Term>& args() const { return n_->args; }
  const Term& arg(std::size_t i) const { return n_->args.at(i); }
  std::size_t hash() const { return n_ ? n_->hash : 0; }
  int depth() const { return n_ ? n_->depth : 0; }

  bool is(Head h) const { return n_ && n_->head == h; }

  static int compare(const Term& a, const Term& b) {
    if (a.n_ == b.n_) return 0;
    if (!a.n_) return -1;
    if (!b.n_) return 1;
    const Node& x = *a.n_;
    const Node& y = *b.n_;
    if (x.head != y.head) return x.head < y.head ? -1 : 1;
    if (x.num != y.num) return x.num < y.num ? -1 : 1;
    if (int c = x.name.compare(y.name)) return c < 0 ? -1 : 1;
    if (x.args.size() != y.args.size()) return x.args.size() < y.args.size() ? -1 : 1;
    for (std::size_t i = 0; i < x.args.size(); ++i)
      if (int c = compare(x.args[i], y.args[i])) return c;
    return 0;
  }

  friend bool operator==(const Term& a, const Term& b) {
    if (a.n_ == b.n_) return true;
    if (a.hash() != b.hash()) return false;
    return compare(a, b) == 0;
  }
  friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }
  friend bool operator<(const Term& a, const Term& b) { return compare(a, b) < 0; }

  // prefix notation: snenc(pair('MSG',~3),N(1),~2)
  std::string str() const {
    std::string out;
    write(out);
    return out;
  }

  void write(std::string& out) const {
    if (!n_) {
      out += "<null>";
      return;
    }
    switch (n_->head) {
      case Head::PubConst:
        out += '\'';
        for (char c : n_->name) {
          if (c == '\'' || c == '\\') out += '\\';
          out += c;
        }
        out += '\'';
        return;
      case Head::Fresh:
        out += '~';
        out += std::to_string(n_->num);
        return;
      case Head::Counter:
        out += "N(" + std::to_string(n_->num) + ")";
        return;
      case Head::TrueVal:
        out += "true";
        return;
      default:
        out += head_name(n_->head);
        out += '(';
        for (std::size_t i = 0; i < n_->args.size(); ++i) {
          if (i) out += ',';
          n_->args[i].write(out);
        }
        out += ')';
    }
  }

 private:
  explicit Term(std::shared_ptr<const Node> n) : n_(std::move(n)) {}

  static Term leaf(Head h, std::uint64_t v) {
    auto n = std::make_shared<Node>();
    n->head = h;
    n->num = v;
    return finish(std::move(n));
  }

  static Term finish(std::shared_ptr<Node> n) {
    std::size_t h = std::hash<int>{}(static_cast<int>(n->head) + 1);
    auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); };
    mix(std::hash<std::uint64_t>{}(n->num));
    if (!n->name.empty()) mix(std::hash<std::string>{}(n->name));
    int d = 0;
    for (auto& a : n->args) {
      mix(a.hash());
      d = std::max(d, a.depth());
    }
    n->hash = h;
    n->depth = d + 1;
    return Term(std::shared_ptr<const Node>(std::move(n)));
  }

  std::shared_ptr<const Node> n_;
};

struct TermHash {
  std::size_t operator()(const Term& t) const { return t.hash(); }
};

inline Term pub(std::string s) { return Term::pub(std::move(s)); }
inline Term N(std::uint64_t v) { return Term::counter(v); }
inline Term pair(Term a, Term b) { return Term::make(Head::Pair, {std::move(a), std::move(b)}); }
inline Term snenc(Term m, Term n, Term k) { return Term::make(Head::SnEnc, {std::move(m), std::move(n), std::move(k)}); }
inline Term senc(Term m, Term k) { return Term::make(Head::SEnc, {std::move(m), std::move(k)}); }
inline Term sign(Term m, Term k) { return Term::make(Head::Sign, {std::move(m), std::move(k)}); }
inline Term pk(Term k) { return Term::make(Head::Pk, {std::move(k)}); }
inline Term kdf(Term tag, Term root, Term params) { return Term::make(Head::Kdf, {std::move(tag), std::move(root), std::move(params)}); }
inline Term mac(Term m, Term k) { return Term::make(Head::Mac, {std::move(m), std::move(k)}); }
inline Term hash(Term m) { return Term::make(Head::Hash, {std::move(m)}); }
inline Term bit(bool b) { return pub(b ? "1" : "0"); }

// right-nested tuple: <a,b,c> = pair(a, pair(b, c))
inline Term tup(std::vector<Term> xs) {
  if (xs.empty()) throw std::invalid_argument("empty tuple");
  Term acc = xs.back();
  for (std::size_t i = xs.size() - 1; i-- > 0;) acc = pair(xs[i], acc);
  return acc;
}

inline std::optional<std::vector<Term>> untup(const Term& t, std::size_t n) {
  std::vector<Term> out;
  Term cur = t;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!cur.is(Head::Pair)) return std::nullopt;
    out.push_back(cur.arg(0));
    cur = cur.arg(1);
  }
  out.push_back(cur);
  return out;
}

inline Result<Term> sn_dec(const Term& ct, const Term& nonce, const Term& key) {
  if (!ct.is(Head::SnEnc)) return err("NotCiphertext");
  if (ct.arg(2) != key) return err("WrongKey");
  if (ct.arg(1) != nonce) return err("WrongNonce");
  return ct.arg(0);
}

inline Result<Term> s_dec(const Term& ct, const Term& key) {
  if (!ct.is(Head::SEnc)) return err("NotCiphertext");
  if (ct.arg(1) != key) return err("WrongKey");
  return ct.arg(0);
}

inline bool verify_sig(const Term& sig, const Term& msg, const Term& pubkey) {
  if (!sig.is(Head::Sign) || !pubkey.is(Head::Pk)) return false;
  return sig.arg(0) == msg && sig.arg(1) == pubkey.arg(0);
}

inline Result<Term> counter_incr(const Term& c, std::uint64_t by) {
  if (!c.is(Head::Counter)) return err("NotACounter");
  return N(c.num() + by);
}

inline void subterms(const Term& t, std::vector<Term>& out) {
  out.push_back(t);
  for (auto& a : t.args()) subterms(a, out);
}

class FreshSource {
 public:
  Term next() { return Term::fresh(next_++); }
  std::uint64_t issued() const { return next_; }

 private:
  std::uint64_t next_ = 1;
};

}  // namespace snplab

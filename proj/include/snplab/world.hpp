#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adversary.hpp"
#include "agents.hpp"
#include "env.hpp"
#include "firmware.hpp"
#include "kds.hpp"
#include "trace.hpp"

namespace snplab {

struct PlatformDecl {
  std::string name;
  std::string tcb;
};

struct MaDecl {
  std::string name;
  std::string platform;
  std::string peer;
};

struct GuestDecl {
  std::string name;
  std::string owner;
  std::string platform;
  std::string ma;  // empty = not associated
  bool allowMig = false;
  std::string image = kGvmImage;
};

struct GoDecl {
  std::string name;
  std::string pinnedChip;  // empty = any
};

struct WorldConfig {
  std::vector<PlatformDecl> platforms;
  std::vector<MaDecl> mas;
  std::vector<GuestDecl> guests;
  std::vector<GoDecl> gos;
  std::vector<std::string> tcbOrder;
  Flags flags;
  CorruptionPolicy policy;
  int maxMigrations = 1;
  int recipeDepth = 3;

  const GuestDecl* guest(const std::string& n) const {
    for (auto& g : guests)
      if (g.name == n) return &g;
    return nullptr;
  }
  const MaDecl* ma(const std::string& n) const {
    for (auto& m : mas)
      if (m.name == n) return &m;
    return nullptr;
  }
  const PlatformDecl* platform(const std::string& n) const {
    for (auto& p : platforms)
      if (p.name == n) return &p;
    return nullptr;
  }
};

struct Secret {
  std::string label;
  Term term;
  Term owner;
  bool learned = false;
};

struct Step {
  std::string op;
  std::vector<std::string> names;
  std::vector<Term> msgs;

  std::string key() const {
    std::string k = op;
    for (auto& n : names) k += " " + n;
    for (auto& m : msgs) {
      k += " ";
      m.write(k);
    }
    return k;
  }
  bool operator==(const Step& o) const { return op == o.op && names == o.names && msgs == o.msgs; }
};

struct WorldState {
  std::shared_ptr<const WorldConfig> cfg;
  Kds kds;
  std::map<std::string, PlatformState> platforms;
  std::map<std::string, GvmState> threads;  // by context name
  std::map<std::string, MaState> mas;
  std::map<std::string, GoState> gos;
  std::set<std::string> deployed;
  KnowledgeBase kb;
  Channels chans;
  std::set<Term> unique;
  FreshSource fresh;
  Trace trace;
  std::vector<Secret> secrets;
  std::map<std::string, int> counts;
  std::map<Term, std::string> guestOfTid;
  std::size_t depth = 0;

  explicit WorldState(WorldConfig c = {}) : cfg(std::make_shared<const WorldConfig>(std::move(c))) {
    chans.replay = cfg->flags.replayOverComm;
  }

  const Flags& flags() const { return cfg->flags; }
  int count(const std::string& k) const {
    auto it = counts.find(k);
    return it == counts.end() ? 0 : it->second;
  }

  std::string ctx_name(const std::string& chip, const std::string& guest) const {
    int n = 0;
    auto it = platforms.find(chip);
    if (it != platforms.end())
      for (auto& [_, c] : it->second.contexts)
        if (c.owner == guest && !c.isMa) ++n;
    return chip + "/" + guest + "/" + std::to_string(n + 1);
  }

  const GuestContext* context(const std::string& name) const {
    auto slash = name.find('/');
    if (slash == std::string::npos) return nullptr;
    auto it = platforms.find(name.substr(0, slash));
    if (it == platforms.end()) return nullptr;
    auto c = it->second.contexts.find(name);
    return c == it->second.contexts.end() ? nullptr : &c->second;
  }

  // live guest context currently hosting the guest (first by name)
  const GuestContext* guest_context(const std::string& guest) const {
    for (auto& [_, ps] : platforms)
      for (auto& [_, c] : ps.contexts)
        if (!c.isMa && c.owner == guest && c.live()) return &c;
    return nullptr;
  }

  const MaState* ma_of_ctx(const GuestContext& c) const {
    for (auto& [_, m] : mas)
      if (c.reportIdMa) {
        auto* mc = context(m.ctx);
        if (mc && mc->reportId == *c.reportIdMa) return &m;
      }
    return nullptr;
  }
};

namespace detail {

inline std::string chip_of(const std::string& ctxName) { return ctxName.substr(0, ctxName.find('/')); }

inline std::vector<Term> network_sn(const KnowledgeBase& kb, const Term& key, const Term& nonce) {
  std::vector<Term> out;
  for (auto& t : kb.network())
    if (t.is(Head::SnEnc) && t.arg(2) == key && t.arg(1) == nonce) out.push_back(t);
  return out;
}

// adversary-built messages: observed plaintexts re-sealed at the nonce the receiver expects
inline void synthesize(const KnowledgeBase& kb, const Term& key, const Term& nonce, int recipeDepth,
                       std::vector<Term>& out) {
  if (recipeDepth < 1 || !kb.derivable(key)) return;
  std::set<Term> plain;
  for (auto& [slot, msgs] : kb.observed())
    if (slot.second == key)
      for (auto& m : msgs)
        if (kb.derivable(m)) plain.insert(m);
  for (auto& m : plain) {
    Term t = snenc(m, nonce, key);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
}

inline std::vector<Term> inbound(const KnowledgeBase& kb, const Term& key, const Term& nonce, int recipeDepth) {
  auto out = network_sn(kb, key, nonce);
  synthesize(kb, key, nonce, recipeDepth, out);
  return out;
}

}  // namespace detail

// every syntactically applicable transition; restrictions are applied by apply_raw
inline std::vector<Step> candidate_steps(const WorldState& w) {
  std::vector<Step> out;
  const WorldConfig& cfg = *w.cfg;
  auto add = [&out](std::string op, std::vector<std::string> names, std::vector<Term> msgs = {}) {
    out.push_back(Step{std::move(op), std::move(names), std::move(msgs)});
  };

  if (!w.kds.ark) add("create_root", {});
  if (w.kds.ark && !w.kds.ask) add("create_ask", {});
  for (auto& p : cfg.platforms)
    if (!w.platforms.count(p.name)) add("pl_create", {p.name});
  for (auto& m : cfg.mas)
    if (!w.mas.count(m.name) && w.platforms.count(m.platform)) add("launch_ma", {m.name});
  for (auto& m : cfg.mas) {
    auto a = w.mas.find(m.name);
    auto b = w.mas.find(m.peer);
    if (a == w.mas.end() || b == w.mas.end() || m.name >= m.peer) continue;
    if (!w.chans.pairs.count({a->second.imageTid, b->second.imageTid})) add("establish_chan", {m.name, m.peer});
  }
  for (auto& g : cfg.guests) {
    if (!w.deployed.count(g.name)) {
      add("go_deploy", {g.owner, g.name});
      continue;
    }
    bool any = false;
    for (auto& [_, ps] : w.platforms)
      for (auto& [name, c] : ps.contexts)
        if (c.owner == g.name && !c.isMa) {
          any = true;
          if (!c.launched) add("finalize_gvm", {g.name});
        }
    if (!any && w.platforms.count(g.platform)) add("init_gvm", {g.name});
  }

  // migration agents
  for (auto& [mname, m] : w.mas) {
    const GuestContext* mc = w.context(m.ctx);
    if (!mc) continue;
    auto& ps = w.platforms.at(m.chip);
    if (m.name == "IDLE") {
      for (auto& [cname, c] : ps.contexts) {
        if (c.isMa || !c.live() || !c.reportIdMa || *c.reportIdMa != mc->reportId) continue;
        if (!c.vmrkFromMa && !w.count("vmrkreq:" + cname)) add("ma_request_vmrk", {mname, cname});
        if (c.swapped && c.migrations < cfg.maxMigrations) add("ma_request_export", {mname, cname});
      }
      auto q = w.chans.queues.find({m.peerImageTid, m.imageTid});
      if (q != w.chans.queues.end()) {
        std::size_t n = w.chans.replay ? q->second.size() : std::min<std::size_t>(1, q->second.size());
        for (std::size_t i = 0; i < n; ++i) add("ma_recv_import", {mname}, {q->second[i]});
      }
    } else {
      for (auto& msg : detail::inbound(w.kb, m.vmpck, N(m.counter.num() + 2), cfg.recipeDepth))
        add("ma_accept", {mname}, {msg});
    }
    for (auto& msg : detail::inbound(w.kb, mc->vmpck, N(mc->fwMsgCount.num() + 1), cfg.recipeDepth))
      add("fw_ma", {mname}, {msg});
  }

  // guest owners
  for (auto& [gname, go] : w.gos) {
    if (go.stopped) continue;
    if (!go.pendingNonce) {
      add("go_nonce", {gname});
      continue;
    }
    std::vector<Term> pkgs;
    for (auto& t : w.kb.network()) {
      auto f = untup(t, 3);
      if (f && (*f)[0] == pub("REPORT")) pkgs.push_back(t);
    }
    // forged reports when some platform signing key has leaked
    std::vector<Term> forged;
    for (auto& [chip, ps] : w.platforms) {
      if (!w.kb.derivable(ps.pl.vcek.priv)) continue;
      for (auto& p : pkgs) {
        auto f = ReportFields::parse(untup(p, 3)->at(1));
        if (!f) continue;
        f->reportData = *go.pendingNonce;
        f->chipId = pub(chip);
        f->tcbVersion = pub(ps.pl.tcbVersion);
        Term body = f->body();
        Term pkg = tup({pub("REPORT"), body, sign(body, ps.pl.vcek.priv)});
        if (std::find(pkgs.begin(), pkgs.end(), pkg) == pkgs.end() &&
            std::find(forged.begin(), forged.end(), pkg) == forged.end())
          forged.push_back(pkg);
      }
    }
    for (auto& p : pkgs) add("go_verify", {gname}, {p});
    for (auto& p : forged) add("go_verify", {gname}, {p});
  }

  // guest contexts and their threads
  for (auto& [chip, ps] : w.platforms) {
    for (auto& [cname, c] : ps.contexts) {
      if (c.isMa || !c.live()) continue;
      auto th = w.threads.find(cname);
      if (th != w.threads.end()) {
        const GvmState& g = th->second;
        if (g.name == "IDLE") {
          const GuestDecl* gd = cfg.guest(c.owner);
          auto go = gd ? w.gos.find(gd->owner) : w.gos.end();
          if (go != w.gos.end() && go->second.pendingNonce)
            add("gvm_request", {cname, "report"}, {*go->second.pendingNonce});
          add("gvm_request", {cname, "key"}, {pair(c.vmpl, c.hostData)});
          if (g.heldKey != null_key()) add("gvm_delete_key", {cname});
        } else {
          for (auto& msg : detail::inbound(w.kb, g.vmpck, N(g.guestCounter.num() + 2), cfg.recipeDepth))
            add("gvm_accept", {cname}, {msg});
        }
        if (!c.swapped && !c.isMig && swappable_state(g.name) && (g.name != "IDLE" || g.heldKey == null_key()))
          add("swap_out", {cname});
      }
      if (!c.swapped) {
        for (auto& msg : detail::inbound(w.kb, c.vmpck, N(c.fwMsgCount.num() + 1), cfg.recipeDepth))
          add("fw_gvm", {cname}, {msg});
      } else if (th == w.threads.end()) {
        bool oekKnown = w.kb.derivable(c.oek);
        for (auto& t : w.kb.network()) {
          if (!t.is(Head::SEnc) || t.arg(1) != c.oek) continue;
          Term tg = mac(t, c.oek);
          if (oekKnown || w.kb.knows(tg)) add("swap_in", {cname}, {t, tg});
        }
      }
    }
  }

  // corruption
  const CorruptionPolicy& pol = cfg.policy;
  auto corr = [&](CorruptionKind k, const std::string& target, const Term& secret) {
    if (pol.allows(k) && secret.valid() && !w.kb.derivable(secret)) add("corrupt", {kind_name(k), target});
  };
  if (w.kds.ark) corr(CorruptionKind::ARK, "KDS", w.kds.ark->priv);
  if (w.kds.ask) corr(CorruptionKind::ASK, "KDS", w.kds.ask->priv);
  for (auto& [chip, ps] : w.platforms) corr(CorruptionKind::CEK, chip, ps.pl.cek);
  for (auto& [mname, m] : w.mas) corr(CorruptionKind::VMPCK, mname, m.vmpck);
  for (auto& g : cfg.guests) {
    const GuestContext* c = w.guest_context(g.name);
    if (!c) continue;
    corr(CorruptionKind::VMPCK, g.name, c->vmpck);
    corr(CorruptionKind::ImageOEK, g.name, c->oek);
    corr(CorruptionKind::VMRK, g.name, c->vmrk);
  }
  return out;
}

namespace detail {

inline void add_secret(WorldState& w, const std::string& label, const Term& t, const Term& owner) {
  for (auto& s : w.secrets)
    if (s.label == label && s.term == t) return;
  w.secrets.push_back(Secret{label, t, owner, false});
}

inline void register_guest_secrets(WorldState& w, const GuestContext& c) {
  add_secret(w, "GVM_VMPCK", c.vmpck, c.imageTid);
  add_secret(w, "GVM_OEK", c.oek, c.imageTid);
  add_secret(w, "FW_VMRK", c.vmrk, c.imageTid);
  add_secret(w, "KEY_FW_VMRK", derived_key(c.vmrk, c.vmpl, c.hostData, c.pubIdk), c.imageTid);
}

inline Status apply_into(WorldState& w, const Step& s, Env& env) {
  const WorldConfig& cfg = *w.cfg;
  auto nm = [&](std::size_t i) -> const std::string& { return s.names.at(i); };
  auto msg = [&](std::size_t i) -> const Term& { return s.msgs.at(i); };
  const std::string& op = s.op;

  if (op == "create_root") {
    auto r = create_root(w.kds, w.fresh);
    if (!r) return r.error();
    env.publish(r.value().second.term());
    env.emit("KDSCreateRoot", {r.value().first.pub});
    add_secret(w, "ARK", r.value().first.priv, pub("KDS"));
    return Unit{};
  }
  if (op == "create_ask") {
    auto r = create_signing_key(w.kds, w.fresh);
    if (!r) return r.error();
    env.publish(r.value().second.term());
    env.emit("KDSCreateASK", {r.value().first.pub});
    add_secret(w, "ASK", r.value().first.priv, pub("KDS"));
    return Unit{};
  }
  if (op == "pl_create") {
    const PlatformDecl* d = cfg.platform(nm(0));
    if (!d || w.platforms.count(d->name)) return err("NoSuchPlatform", nm(0));
    if ((int)w.platforms.size() >= (int)cfg.platforms.size()) return err("TooManyPlatforms");
    auto p = pl_create(w.kds, d->name, d->tcb, env);
    if (!p) return p.error();
    add_secret(w, "CEK", p.value().cek, pub(d->name));
    add_secret(w, "VCEK", p.value().vcek.priv, pub(d->name));
    w.platforms[d->name] = PlatformState{p.value(), {}};
    return Unit{};
  }
  if (op == "launch_ma") {
    const MaDecl* d = cfg.ma(nm(0));
    if (!d || w.mas.count(d->name) || !w.platforms.count(d->platform)) return err("NoSuchMA", nm(0));
    std::string cname = d->platform + "/" + d->name;
    auto c = fw_launch_ma(w.platforms.at(d->platform), cname, d->name, kMaImage, env);
    if (!c) return c.error();
    MaState m;
    m.entity = d->name;
    m.chip = d->platform;
    m.ctx = cname;
    m.vmpck = c.value().vmpck;
    m.imageTid = c.value().imageTid;
    auto peer = w.mas.find(d->peer);
    if (peer != w.mas.end()) {
      m.peerImageTid = peer->second.imageTid;
      peer->second.peerImageTid = m.imageTid;
    }
    w.mas[d->name] = m;
    add_secret(w, "MA_VMPCK", m.vmpck, m.imageTid);
    return Unit{};
  }
  if (op == "establish_chan") {
    auto a = w.mas.find(nm(0));
    auto b = w.mas.find(nm(1));
    if (a == w.mas.end() || b == w.mas.end()) return err("UnknownPairing");
    if (w.chans.pairs.count({a->second.imageTid, b->second.imageTid})) return err("AlreadyPaired");
    a->second.peerImageTid = b->second.imageTid;
    b->second.peerImageTid = a->second.imageTid;
    chan_establish(w.chans, a->second.imageTid, b->second.imageTid, env);
    return Unit{};
  }
  if (op == "go_deploy") {
    const GuestDecl* g = cfg.guest(nm(1));
    if (!g || g->owner != nm(0) || w.deployed.count(g->name)) return err("NoSuchGuest", nm(1));
    if (!w.kds.ark) return err("NoRoot");
    auto it = w.gos.find(g->owner);
    if (it == w.gos.end()) {
      GoState go;
      go.entity = g->owner;
      go.ownerId = pub(g->owner);
      go.ownerTid = w.fresh.next();
      go.idk = KeyPair::from(w.fresh.next(), KeyKind::IDK);
      go.trustedRoot = w.kds.ark->pub;
      for (auto& d : cfg.gos)
        if (d.name == g->owner && !d.pinnedChip.empty()) go.pinnedChip = d.pinnedChip;
      it = w.gos.emplace(g->owner, go).first;
    }
    go_deploy(it->second, g->image, g->allowMig, env);
    w.deployed.insert(g->name);
    return Unit{};
  }
  if (op == "init_gvm") {
    const GuestDecl* g = cfg.guest(nm(0));
    if (!g || !w.deployed.count(g->name) || !w.platforms.count(g->platform)) return err("NoSuchGuest", nm(0));
    if (w.guest_context(g->name)) return err("AlreadyLaunched");
    auto& go = w.gos.at(g->owner);
    Term idBlock = pair(image_digest(g->image), bit(g->allowMig));
    Term idAuth = pair(sign(idBlock, go.idk.priv), go.idk.pub);
    auto r = fw_initialize_gvm(w.platforms.at(g->platform), w.ctx_name(g->platform, g->name), g->name, g->image,
                               idBlock, idAuth, env);
    if (!r) return r.error();
    return Unit{};
  }
  if (op == "finalize_gvm") {
    const GuestDecl* g = cfg.guest(nm(0));
    if (!g) return err("NoSuchGuest", nm(0));
    auto& ps = w.platforms.at(g->platform);
    std::string cname;
    for (auto& [n, c] : ps.contexts)
      if (c.owner == g->name && !c.isMa && !c.launched) cname = n;
    if (cname.empty()) return err("NoSuchContext");
    const GuestContext* ma = nullptr;
    if (!g->ma.empty()) {
      auto m = w.mas.find(g->ma);
      if (m == w.mas.end()) return err("NoSuchMA", g->ma);
      ma = w.context(m->second.ctx);
    }
    auto r = fw_finalize_launch(ps, cname, ma, env);
    if (!r) return r.error();
    const GuestContext& c = r.value();
    GvmState t;
    t.guest = g->name;
    t.ctx = cname;
    t.imageId = c.imageId;
    t.vmpck = c.vmpck;
    t.imageTid = c.imageTid;
    w.threads[cname] = t;
    w.guestOfTid[c.imageTid] = g->name;
    register_guest_secrets(w, c);
    return Unit{};
  }
  if (op == "ma_request_vmrk" || op == "ma_request_export") {
    auto m = w.mas.find(nm(0));
    const GuestContext* c = w.context(nm(1));
    if (m == w.mas.end() || !c || !c->live()) return err("NoSuchContext", nm(1));
    if (detail::chip_of(nm(1)) != m->second.chip) return err("NoSuchContext", "other platform");
    if (op == "ma_request_vmrk") {
      auto r = ma_request_vmrk(m->second, c->addr, env);
      if (!r) return r.error();
      w.counts["vmrkreq:" + nm(1)]++;
      Term vmrk = env.events[env.events.size() - 2].args.at(1);
      add_secret(w, "MA_VMRK", vmrk, c->imageTid);
      add_secret(w, "KEY_MA_VMRK", derived_key(vmrk, c->vmpl, c->hostData, c->pubIdk), c->imageTid);
      return Unit{};
    }
    if (!c->swapped) return err("NotSwapped");
    auto r = ma_request_export(m->second, c->addr, env);
    if (!r) return r.error();
    return Unit{};
  }
  if (op == "fw_ma") {
    auto m = w.mas.find(nm(0));
    if (m == w.mas.end()) return err("NoSuchMA");
    auto r = fw_ma_request(w.platforms.at(m->second.chip), m->second.ctx, msg(0), env);
    if (!r) return r.error();
    for (auto& e : env.events)
      if (e.label == "FWImportsGVM") {
        auto& ps = w.platforms.at(m->second.chip);
        for (auto& [cn, c] : ps.contexts)
          if (c.addr == e.args.at(1) && !c.isMa) {
            auto g = w.guestOfTid.find(c.imageTid);
            if (g != w.guestOfTid.end()) c.owner = g->second;
            register_guest_secrets(w, c);
          }
      }
    return Unit{};
  }
  if (op == "ma_accept") {
    auto m = w.mas.find(nm(0));
    if (m == w.mas.end()) return err("NoSuchMA");
    return ma_accept_response(m->second, msg(0), w.chans, env);
  }
  if (op == "ma_recv_import") {
    auto m = w.mas.find(nm(0));
    if (m == w.mas.end()) return err("NoSuchMA");
    auto q = w.chans.queues.find({m->second.peerImageTid, m->second.imageTid});
    if (q == w.chans.queues.end()) return err("NoMessage");
    auto pos = std::find(q->second.begin(), q->second.end(), msg(0));
    if (pos == q->second.end()) return err("NoMessage");
    auto r = ma_receive_ctx_and_import(m->second, w.chans, env,
                                       static_cast<std::size_t>(pos - q->second.begin()));
    if (!r) return r.error();
    return Unit{};
  }
  if (op == "go_nonce") {
    auto g = w.gos.find(nm(0));
    if (g == w.gos.end()) return err("NoSuchOwner");
    auto r = go_new_nonce(g->second, env);
    if (!r) return r.error();
    return Unit{};
  }
  if (op == "go_verify") {
    auto g = w.gos.find(nm(0));
    if (g == w.gos.end()) return err("NoSuchOwner");
    auto f = untup(msg(0), 3);
    if (!f || (*f)[0] != pub("REPORT")) return err("NotAReport");
    auto rf = ReportFields::parse((*f)[1]);
    std::vector<Certificate> chain;
    if (rf && rf->chipId.is(Head::PubConst)) {
      auto p = w.platforms.find(rf->chipId.name());
      if (p != w.platforms.end()) chain = w.kds.chain_for(p->second.pl.vcekCert);
    }
    auto r = go_verify_report(g->second, (*f)[1], (*f)[2], chain, w.flags().mitigation, env);
    if (!r) return r.error();
    return Unit{};
  }
  if (op == "gvm_request") {
    auto t = w.threads.find(nm(0));
    if (t == w.threads.end()) return err("GuestInactive");
    auto r = gvm_request(t->second, nm(1) == "report" ? RequestKind::Report : RequestKind::Key, msg(0), env);
    if (!r) return r.error();
    w.counts["req:" + t->second.guest]++;
    return Unit{};
  }
  if (op == "gvm_accept") {
    auto t = w.threads.find(nm(0));
    if (t == w.threads.end()) return err("GuestInactive");
    return gvm_accept_response(t->second, msg(0), env);
  }
  if (op == "gvm_delete_key") {
    auto t = w.threads.find(nm(0));
    if (t == w.threads.end()) return err("GuestInactive");
    return gvm_delete_key(t->second, env);
  }
  if (op == "fw_gvm") {
    auto r = fw_guest_request(w.platforms.at(detail::chip_of(nm(0))), nm(0), msg(0), env);
    if (!r) return r.error();
    return Unit{};
  }
  if (op == "swap_out") {
    auto t = w.threads.find(nm(0));
    if (t == w.threads.end()) return err("GuestInactive");
    const GvmState& g = t->second;
    if (g.name == "IDLE" && g.heldKey != null_key()) return err("BadGuestState", "key still held");
    auto r = fw_swap_out(w.platforms.at(detail::chip_of(nm(0))), nm(0), g.state_term(), g.name, env);
    if (!r) return r.error();
    w.counts["swap:" + g.guest]++;
    w.threads.erase(t);
    return Unit{};
  }
  if (op == "swap_in") {
    if (w.threads.count(nm(0))) return err("NotSwapped", "thread already running");
    const GuestContext* c = w.context(nm(0));
    if (!c) return err("NoSuchContext");
    auto r = fw_swap_in(w.platforms.at(detail::chip_of(nm(0))), nm(0), msg(0), msg(1), env);
    if (!r) return r.error();
    auto g = GvmState::from_term(r.value());
    if (!g) return err("DecryptFailure", "malformed guest state");
    g->guest = c->owner;
    g->ctx = nm(0);
    g->imageId = c->imageId;
    w.threads[nm(0)] = *g;
    return Unit{};
  }
  if (op == "corrupt") {
    auto k = kind_from_name(nm(0));
    if (!k) return err("CorruptionDisabled", nm(0));
    Term secret;
    std::string label;
    const std::string& target = nm(1);
    switch (*k) {
      case CorruptionKind::ARK:
        if (w.kds.ark) secret = w.kds.ark->priv;
        break;
      case CorruptionKind::ASK:
        if (w.kds.ask) secret = w.kds.ask->priv;
        break;
      case CorruptionKind::CEK:
        if (w.platforms.count(target)) secret = w.platforms.at(target).pl.cek;
        break;
      case CorruptionKind::VMPCK:
        if (w.mas.count(target)) {
          secret = w.mas.at(target).vmpck;
        } else if (auto* c = w.guest_context(target)) {
          secret = c->vmpck;
          label = "CorruptImageVMPCK";
        }
        break;
      case CorruptionKind::ImageOEK:
        if (auto* c = w.guest_context(target)) secret = c->oek;
        break;
      case CorruptionKind::VMRK:
        if (auto* c = w.guest_context(target)) secret = c->vmrk;
        break;
    }
    if (!secret.valid()) return err("NoSuchTarget", target);
    auto r = corrupt(w.kb, secret, *k, cfg.policy, &env.events, label);
    if (!r) return r.error();
    w.kb = r.value();
    w.counts["corrupt"]++;
    return Unit{};
  }
  return err("UnknownStep", op);
}

}  // namespace detail

struct Applied {
  WorldState world;
  std::vector<Term> outputs;
};

// applies s without checking membership in candidate_steps
inline Result<Applied> apply_raw(const WorldState& w0, const Step& s) {
  Applied a{w0, {}};
  WorldState& w = a.world;
  std::vector<ActionEvent> events;
  Env env{w.fresh, w.unique, events, a.outputs, w.cfg->flags, w.cfg->tcbOrder, w.cfg->maxMigrations, {}};
  env.ctxName = [&w](const std::string& chip, const Term& tid) {
    auto it = w.guestOfTid.find(tid);
    return w.ctx_name(chip, it == w.guestOfTid.end() ? "?" : it->second);
  };
  auto st = detail::apply_into(w, s, env);
  if (!st) return st.error();
  for (auto& t : a.outputs) w.kb = w.kb.absorb(t, &events);
  for (auto& sec : w.secrets) {
    if (sec.learned || !w.kb.derivable(sec.term)) continue;
    sec.learned = true;
    events.push_back(ev("AdversaryDerives", {pub(sec.label), sec.term, sec.owner}));
  }
  for (auto& e : events) {
    e.step = w.trace.size();
    w.trace.push_back(std::move(e));
  }
  w.depth++;
  return a;
}

inline std::vector<std::pair<Step, WorldState>> successors(const WorldState& w) {
  std::vector<std::pair<Step, WorldState>> out;
  for (auto& s : candidate_steps(w)) {
    auto r = apply_raw(w, s);
    if (r) out.emplace_back(s, std::move(r.value().world));
  }
  return out;
}

inline std::vector<Step> enabled_steps(const WorldState& w) {
  std::vector<Step> out;
  for (auto& [s, _] : successors(w)) out.push_back(s);
  return out;
}

inline Result<WorldState> apply_step(const WorldState& w, const Step& s) {
  auto c = candidate_steps(w);
  if (std::find(c.begin(), c.end(), s) == c.end()) return err("StepNotEnabled", s.key());
  auto r = apply_raw(w, s);
  if (!r) return err("StepNotEnabled", s.key() + ": " + r.error().code);
  return std::move(r.value().world);
}

}  // namespace snplab

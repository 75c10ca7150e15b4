#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>

#include "env.hpp"
#include "kds.hpp"
#include "term.hpp"

namespace snplab {

inline const std::string kMaImage = "3A9B8C7D1E2F";
inline const std::string kGvmImage = "5XPYKIAXFS06O";

namespace tag {
inline const std::string ReportReq = "MSG_REPORT_REQ";
inline const std::string ReportRsp = "MSG_REPORT_RSP";
inline const std::string KeyReq = "MSG_KEY_REQ";
inline const std::string KeyRsp = "MSG_KEY_RSP";
inline const std::string VmrkReq = "MSG_VMRK_REQ";
inline const std::string VmrkRsp = "MSG_VMRK_RSP";
inline const std::string ExportReq = "MSG_EXPORT_REQ";
inline const std::string ExportRsp = "MSG_EXPORT_RSP";
inline const std::string ImportReq = "MSG_IMPORT_REQ";
inline const std::string ImportRsp = "MSG_IMPORT_RSP";
}  // namespace tag

inline Term image_digest(const std::string& image) { return hash(pair(pub("VM_IMAGE"), pub(image))); }
inline Term id_key_digest(const Term& pubIdk) { return hash(pair(pub("ID_KEY"), pubIdk)); }
inline Term null_key() { return kdf(pub("NULL"), pub("NULL"), pub("NULL")); }
inline Term derived_key(const Term& vmrk, const Term& vmpl, const Term& hostData, const Term& pubIdk) {
  return kdf(pub("vmrk"), vmrk, tup({vmpl, hostData, pubIdk}));
}

struct Platform {
  std::string chipId;
  std::string tcbVersion;
  Term cek;
  KeyPair vcek;
  Certificate vcekCert;
};

struct GuestContext {
  std::string name;
  std::string owner;  // guest or MA entity name
  bool isMa = false;
  Term addr;
  Term chipTid;
  Term imageTid;
  std::string imageId;
  Term launchDigest;
  bool allowMig = false;
  bool isMig = false;
  Term vmpck;
  Term fwMsgCount = N(0);
  Term vmrk;
  bool vmrkFromMa = false;
  Term oek;
  Term reportId;
  std::optional<Term> reportIdMa;
  Term vmpl = pub("VMPL0");
  Term hostData = pub("HOSTDATA0");
  Term pubIdk;
  Term idKeyDigest;
  std::optional<Term> rootMdEntry;
  bool migrationEnabled = false;
  std::string launchTcb;
  Term pid;
  Term statePtr;
  bool swapped = false;
  bool launched = false;
  bool freed = false;
  int migrations = 0;

  bool live() const { return launched && !freed; }
};

struct PlatformState {
  Platform pl;
  std::map<std::string, GuestContext> contexts;

  GuestContext* find_addr(const Term& addr) {
    for (auto& [_, c] : contexts)
      if (c.addr == addr && !c.isMa) return &c;
    return nullptr;
  }
};

struct ReportFields {
  Term imageId, allowMig, reportData, launchDigest, digestIdk, reportId, reportIdMa, chipId,
      hostData, tcbVersion, migrationEnabled;

  Term body() const {
    return tup({imageId, allowMig, reportData, launchDigest, digestIdk, reportId, reportIdMa, chipId,
                hostData, tcbVersion, migrationEnabled});
  }
  static std::optional<ReportFields> parse(const Term& body) {
    auto f = untup(body, 11);
    if (!f) return std::nullopt;
    auto& v = *f;
    return ReportFields{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
  }
};

inline bool tcb_less(const std::vector<std::string>& order, const std::string& a, const std::string& b) {
  auto ia = std::find(order.begin(), order.end(), a);
  auto ib = std::find(order.begin(), order.end(), b);
  if (ia == order.end() || ib == order.end()) return false;
  return ia < ib;
}

inline Result<Platform> pl_create(const Kds& kds, const std::string& chipId, const std::string& tcbVersion,
                                  Env& env) {
  if (!kds.ask) return err("NoSigningKey");
  if (!env.uniq(pair(pub("VCEK"), pub(chipId)))) return err("DuplicateChipId", chipId);
  Platform p;
  p.chipId = chipId;
  p.tcbVersion = tcbVersion;
  p.cek = env.fresh.next();
  p.vcek = derive_vcek(p.cek, tcbVersion);
  p.vcekCert = issue_cert("VCEK", kAskId, chipId, p.vcek.pub, kds.ask->priv);
  env.publish(p.vcekCert.term());
  env.emit("PLCreate", {pub(chipId), pub(tcbVersion), p.vcek.pub});
  env.emit("FWActivatePlatformID", {pub(chipId)});
  return p;
}

inline Result<GuestContext> fw_launch_ma(PlatformState& ps, const std::string& ctxName, const std::string& owner,
                                         const std::string& maImage, Env& env) {
  if (maImage != kMaImage) return err("BAD_MEASUREMENT", maImage);
  GuestContext c;
  c.name = ctxName;
  c.owner = owner;
  c.isMa = true;
  c.imageId = maImage;
  c.launchDigest = image_digest(maImage);
  c.vmpck = env.fresh.next();
  c.reportId = env.fresh.next();
  c.chipTid = env.fresh.next();
  c.imageTid = env.fresh.next();
  c.addr = env.fresh.next();
  c.statePtr = c.addr;
  c.fwMsgCount = N(0);
  c.launched = true;
  c.launchTcb = ps.pl.tcbVersion;
  if (!env.uniq(tup({pub("GCTX"), pub(ps.pl.chipId), c.addr}))) return err("DuplicateGctxAddr");
  ps.contexts[ctxName] = c;
  env.publish(pair(c.reportId, c.chipTid));
  env.emit("FWLaunchesMA", {pub(ps.pl.chipId), c.chipTid, c.imageTid, c.vmpck, c.reportId});
  return c;
}

inline Result<GuestContext> fw_initialize_gvm(PlatformState& ps, const std::string& ctxName,
                                              const std::string& owner, const std::string& image,
                                              const Term& idBlock, const Term& idAuth, Env& env,
                                              std::optional<Term> addr = std::nullopt) {
  auto blk = untup(idBlock, 2);
  auto auth = untup(idAuth, 2);
  if (!blk || !auth) return err("BAD_SIGNATURE", "malformed id block");
  const Term& digest = (*blk)[0];
  const Term& allow = (*blk)[1];
  const Term& sig = (*auth)[0];
  const Term& pubIdk = (*auth)[1];
  if (digest != image_digest(image)) return err("BAD_MEASUREMENT");
  if (!verify_sig(sig, idBlock, pubIdk)) return err("BAD_SIGNATURE");
  if (allow != bit(true) && allow != bit(false)) return err("BAD_SIGNATURE", "bad policy");
  GuestContext c;
  c.name = ctxName;
  c.owner = owner;
  c.imageId = image;
  c.launchDigest = digest;
  c.allowMig = allow == bit(true);
  c.pubIdk = pubIdk;
  c.idKeyDigest = id_key_digest(pubIdk);
  c.addr = addr ? *addr : env.fresh.next();
  if (!env.uniq(tup({pub("GCTX"), pub(ps.pl.chipId), c.addr}))) return err("DuplicateGctxAddr");
  c.oek = env.fresh.next();
  c.vmrk = env.fresh.next();
  c.pid = env.fresh.next();
  c.launchTcb = ps.pl.tcbVersion;
  ps.contexts[ctxName] = c;
  env.emit("FWInitializesGVM", {pub(ps.pl.chipId), c.addr, pub(image)});
  return c;
}

inline Result<GuestContext> fw_finalize_launch(PlatformState& ps, const std::string& ctxName,
                                               const GuestContext* ma, Env& env) {
  auto it = ps.contexts.find(ctxName);
  if (it == ps.contexts.end() || it->second.isMa) return err("NoSuchContext", ctxName);
  GuestContext& c = it->second;
  if (c.launched) return err("AlreadyLaunched");
  if ((ma != nullptr) != c.allowMig) return err("PolicyMismatch");
  if (ma) c.reportIdMa = ma->reportId;
  c.vmpck = env.fresh.next();
  c.reportId = env.fresh.next();
  c.imageTid = env.fresh.next();
  c.chipTid = env.fresh.next();
  c.statePtr = env.fresh.next();
  c.fwMsgCount = N(0);
  c.launched = true;
  Term chip = pub(ps.pl.chipId);
  env.emit("FWLaunchGVM",
           {chip, c.addr, c.imageTid, c.vmpck, c.oek, pub(ma ? "AssocMA" : "NoAssocMA"), c.vmrk});
  if (ma) env.emit("AssociateMAGVM", {chip, ma->imageTid, c.imageTid, ma->reportId});
  return c;
}

namespace detail {

inline Result<std::pair<Term, Term>> open_request(const GuestContext& c, const Term& req) {
  auto pt = sn_dec(req, N(c.fwMsgCount.num() + 1), c.vmpck);
  if (!pt) return err(pt.code() == "WrongNonce" ? "BadCounter" : "DecryptFailure", pt.code());
  auto parts = untup(pt.value(), 2);
  if (!parts || !(*parts)[0].is(Head::PubConst)) return err("DecryptFailure", "malformed plaintext");
  return std::pair{(*parts)[0], (*parts)[1]};
}

inline Term seal_response(GuestContext& c, const std::string& t, const Term& body) {
  Term n = N(c.fwMsgCount.num() + 2);
  c.fwMsgCount = n;
  return snenc(pair(pub(t), body), n, c.vmpck);
}

inline Result<GuestContext*> ma_ctx(PlatformState& ps, const std::string& name) {
  auto it = ps.contexts.find(name);
  if (it == ps.contexts.end() || !it->second.isMa) return err("NoSuchContext", name);
  return &it->second;
}

inline Result<GuestContext*> gvm_ctx(PlatformState& ps, const std::string& name) {
  auto it = ps.contexts.find(name);
  if (it == ps.contexts.end() || it->second.isMa || !it->second.live()) return err("NoSuchContext", name);
  return &it->second;
}

inline Result<Term> open_ma(PlatformState& ps, GuestContext& ma, const Term& req, const std::string& want,
                            Env& env) {
  auto r = open_request(ma, req);
  if (!r) return r.error();
  if (r.value().first != pub(want)) return err("WrongTag", r.value().first.name());
  env.emit("FWReceiveMARequest", {pub(want), pub(ps.pl.chipId), ma.vmpck, req});
  return r.value().second;
}

}  // namespace detail

inline Result<Term> fw_install_ma_vmrk(PlatformState& ps, const std::string& maName, const Term& req, Env& env) {
  auto m = detail::ma_ctx(ps, maName);
  if (!m) return m.error();
  GuestContext& ma = *m.value();
  auto body = detail::open_ma(ps, ma, req, tag::VmrkReq, env);
  if (!body) return body.error();
  auto f = untup(body.value(), 2);
  if (!f) return err("DecryptFailure", "malformed body");
  const Term& addr = (*f)[0];
  const Term& vmrk = (*f)[1];
  GuestContext* g = ps.find_addr(addr);
  if (!g || !g->live()) return err("NoSuchContext");
  if (!g->reportIdMa || *g->reportIdMa != ma.reportId) return err("ReportIdMismatch");
  if (!env.uniq(tup({pub("VMRK"), pub(ps.pl.chipId), addr}))) return err("DuplicateGctxAddr");
  g->vmrk = vmrk;
  g->vmrkFromMa = true;
  Term rsp = detail::seal_response(ma, tag::VmrkRsp, addr);
  env.emit("FWInstallsMAVMRK", {ma.chipTid, ma.vmpck, addr, vmrk});
  env.emit("InstallVMRK", {g->vmpck, addr, vmrk, g->imageTid});
  env.emit("FWHandleMA", {pub(tag::VmrkRsp), pub(ps.pl.chipId), ma.vmpck, rsp});
  env.publish(rsp);
  return rsp;
}

inline Term context_term(const GuestContext& g) {
  return tup({g.imageTid, pub(g.imageId), g.launchDigest, bit(g.allowMig), g.vmpck, g.fwMsgCount, g.vmrk,
              g.oek, g.hostData, g.vmpl, g.pubIdk, g.rootMdEntry ? *g.rootMdEntry : pub("NONE"),
              bit(g.migrationEnabled), pub(g.launchTcb), N(static_cast<std::uint64_t>(g.migrations)), g.pid,
              bit(g.vmrkFromMa)});
}

inline Result<Term> fw_export_gvm(PlatformState& ps, const std::string& maName, const Term& req, Env& env) {
  auto m = detail::ma_ctx(ps, maName);
  if (!m) return m.error();
  GuestContext& ma = *m.value();
  auto body = detail::open_ma(ps, ma, req, tag::ExportReq, env);
  if (!body) return body.error();
  GuestContext* g = ps.find_addr(body.value());
  if (!g || !g->live()) return err("NoSuchContext");
  if (!g->reportIdMa || *g->reportIdMa != ma.reportId) return err("ReportIdMismatch");
  if (!g->swapped) return err("NotSwapped");
  if (g->migrations >= env.maxMigrations) return err("MigrationLimit");
  if (!env.uniq(pair(pub("FREE"), g->statePtr))) return err("DoubleFree");
  Term ctx = context_term(*g);
  g->freed = true;
  Term rsp = detail::seal_response(ma, tag::ExportRsp, ctx);
  env.emit("FWExportsGVM", {pub(ps.pl.chipId), g->addr, g->imageTid, g->vmpck});
  env.emit("FWHandleMA", {pub(tag::ExportRsp), pub(ps.pl.chipId), ma.vmpck, rsp});
  env.publish(rsp);
  return rsp;
}

inline Result<Term> fw_import_gvm(PlatformState& ps, const std::string& maName, const Term& req, Env& env) {
  auto m = detail::ma_ctx(ps, maName);
  if (!m) return m.error();
  GuestContext& ma = *m.value();
  auto body = detail::open_ma(ps, ma, req, tag::ImportReq, env);
  if (!body) return body.error();
  auto f = untup(body.value(), 2);
  if (!f) return err("DecryptFailure", "malformed body");
  auto v = untup((*f)[0], 17);
  const Term& addr = (*f)[1];
  if (!v) return err("DecryptFailure", "malformed context");
  auto& x = *v;
  if (!x[1].is(Head::PubConst) || !x[13].is(Head::PubConst) || !x[14].is(Head::Counter))
    return err("DecryptFailure", "malformed context");
  if (!env.uniq(tup({pub("GCTX"), pub(ps.pl.chipId), addr}))) return err("DuplicateGctxAddr");
  GuestContext g;
  g.imageTid = x[0];
  g.imageId = x[1].name();
  g.launchDigest = x[2];
  g.allowMig = x[3] == bit(true);
  g.vmpck = x[4];
  g.fwMsgCount = x[5];
  g.vmrk = x[6];
  g.oek = x[7];
  g.hostData = x[8];
  g.vmpl = x[9];
  g.pubIdk = x[10];
  g.idKeyDigest = id_key_digest(g.pubIdk);
  if (x[11] != pub("NONE")) g.rootMdEntry = x[11];
  g.migrationEnabled = x[12] == bit(true);
  g.launchTcb = x[13].name();
  g.migrations = static_cast<int>(x[14].num()) + 1;
  g.pid = x[15];
  g.vmrkFromMa = x[16] == bit(true);
  if (env.flags.mitigation && tcb_less(env.tcbOrder, ps.pl.tcbVersion, g.launchTcb)) g.migrationEnabled = true;
  g.addr = addr;
  g.reportId = env.fresh.next();
  g.reportIdMa = ma.reportId;
  g.chipTid = env.fresh.next();
  g.statePtr = env.fresh.next();
  g.isMig = true;
  g.swapped = true;
  g.launched = true;
  g.name = env.ctxName ? env.ctxName(ps.pl.chipId, g.imageTid) : ps.pl.chipId + "/imported";
  if (ps.contexts.count(g.name)) return err("DuplicateGctxAddr", g.name);
  ps.contexts[g.name] = g;
  Term rsp = detail::seal_response(ma, tag::ImportRsp, addr);
  env.emit("FWImportsGVM", {pub(ps.pl.chipId), addr, g.imageTid, g.vmpck, bit(g.migrationEnabled)});
  env.emit("FWHandleMA", {pub(tag::ImportRsp), pub(ps.pl.chipId), ma.vmpck, rsp});
  env.publish(rsp);
  return rsp;
}

inline Result<Term> fw_ma_request(PlatformState& ps, const std::string& maName, const Term& req, Env& env) {
  auto m = detail::ma_ctx(ps, maName);
  if (!m) return m.error();
  auto r = detail::open_request(*m.value(), req);
  if (!r) return r.error();
  const Term& t = r.value().first;
  if (t == pub(tag::VmrkReq)) return fw_install_ma_vmrk(ps, maName, req, env);
  if (t == pub(tag::ExportReq)) return fw_export_gvm(ps, maName, req, env);
  if (t == pub(tag::ImportReq)) return fw_import_gvm(ps, maName, req, env);
  return err("WrongTag", t.name());
}

namespace detail {

inline Result<std::pair<GuestContext*, Term>> open_guest(PlatformState& ps, const std::string& name,
                                                         const Term& req, const std::string& want,
                                                         const char* fwKind, Env& env) {
  auto g = gvm_ctx(ps, name);
  if (!g) return g.error();
  GuestContext& c = *g.value();
  if (c.swapped) return err("GuestSwappedOut");
  auto r = open_request(c, req);
  if (!r) return r.error();
  if (r.value().first != pub(want)) return err("WrongTag", r.value().first.name());
  env.emit("FWReceiveGVMRequest",
           {pub(fwKind), pub(ps.pl.chipId), c.imageTid, c.vmpck, req, N(c.fwMsgCount.num() + 2)});
  return std::pair{&c, r.value().second};
}

}  // namespace detail

inline Result<Term> fw_generate_report(PlatformState& ps, const std::string& ctxName, const Term& req, Env& env) {
  auto o = detail::open_guest(ps, ctxName, req, tag::ReportReq, "FW_GENERATE_REPORT", env);
  if (!o) return o.error();
  GuestContext& c = *o.value().first;
  ReportFields f{pub(c.imageId), bit(c.allowMig), o.value().second, c.launchDigest, c.idKeyDigest,
                 c.reportId, c.reportIdMa ? *c.reportIdMa : pub("NONE"), pub(ps.pl.chipId), c.hostData,
                 pub(ps.pl.tcbVersion), bit(c.migrationEnabled)};
  Term body = f.body();
  Term sig = sign(body, ps.pl.vcek.priv);
  Term rsp = detail::seal_response(c, tag::ReportRsp, pair(body, sig));
  env.emit("FWGeneratesReport", {pub(ps.pl.chipId), c.imageTid, body, sig});
  env.emit("FWHandleGVM", {pub(tag::ReportRsp), pub(ps.pl.chipId), c.vmpck, rsp, c.fwMsgCount});
  env.publish(rsp);
  return rsp;
}

inline Result<Term> fw_derive_key(PlatformState& ps, const std::string& ctxName, const Term& req, Env& env) {
  auto o = detail::open_guest(ps, ctxName, req, tag::KeyReq, "FW_DERIVE_KEY", env);
  if (!o) return o.error();
  GuestContext& c = *o.value().first;
  Term key = derived_key(c.vmrk, c.vmpl, c.hostData, c.pubIdk);
  Term rsp = detail::seal_response(c, tag::KeyRsp, key);
  env.emit("FWDerivesKey", {pub(ps.pl.chipId), c.imageTid, key});
  env.emit("FWHandleGVM", {pub(tag::KeyRsp), pub(ps.pl.chipId), c.vmpck, rsp, c.fwMsgCount});
  env.publish(rsp);
  return rsp;
}

inline Result<Term> fw_guest_request(PlatformState& ps, const std::string& ctxName, const Term& req, Env& env) {
  auto g = detail::gvm_ctx(ps, ctxName);
  if (!g) return g.error();
  if (g.value()->swapped) return err("GuestSwappedOut");
  auto r = detail::open_request(*g.value(), req);
  if (!r) return r.error();
  const Term& t = r.value().first;
  if (t == pub(tag::ReportReq)) return fw_generate_report(ps, ctxName, req, env);
  if (t == pub(tag::KeyReq)) return fw_derive_key(ps, ctxName, req, env);
  return err("WrongTag", t.name());
}

inline bool swappable_state(const std::string& s) { return s == "IDLE" || s == "KEY_REQ" || s == "REPORT_REQ"; }

inline Result<std::pair<Term, Term>> fw_swap_out(PlatformState& ps, const std::string& ctxName,
                                                 const Term& guestState, const std::string& stateName, Env& env) {
  auto g = detail::gvm_ctx(ps, ctxName);
  if (!g) return g.error();
  GuestContext& c = *g.value();
  if (c.isMig) return err("MigratedGuest");
  if (c.swapped) return err("AlreadySwapped");
  if (!swappable_state(stateName)) return err("BadGuestState", stateName);
  if (!env.uniq(pair(pub("SWAP"), c.statePtr))) return err("AlreadySwapped", "state pointer");
  Term payload = senc(guestState, c.oek);
  Term authTag = mac(payload, c.oek);
  c.rootMdEntry = authTag;
  c.swapped = true;
  env.publish(payload);
  env.publish(authTag);
  env.emit("FWSwapsOutVMPCKBM", {c.vmpck, pub(ps.pl.chipId), c.addr, payload, authTag, guestState});
  return std::pair{payload, authTag};
}

inline Result<Term> fw_swap_in(PlatformState& ps, const std::string& ctxName, const Term& payload,
                               const Term& authTag, Env& env) {
  auto g = detail::gvm_ctx(ps, ctxName);
  if (!g) return g.error();
  GuestContext& c = *g.value();
  if (!c.swapped) return err("NotSwapped");
  if (!env.flags.ignoreRootMdEntry && (!c.rootMdEntry || authTag != *c.rootMdEntry)) return err("BAD_AUTH");
  if (authTag != mac(payload, c.oek)) return err("BAD_AUTH", "tag does not cover payload");
  auto st = s_dec(payload, c.oek);
  if (!st) return err("DecryptFailure", st.code());
  c.swapped = false;
  c.statePtr = env.fresh.next();
  env.emit("FWSwapsInGVM", {c.vmpck, pub(ps.pl.chipId), c.addr, st.value()});
  return st.value();
}

}  // namespace snplab

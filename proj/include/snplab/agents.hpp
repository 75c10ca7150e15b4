#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "env.hpp"
#include "firmware.hpp"
#include "kds.hpp"

namespace snplab {

enum class RequestKind { Report, Key };

struct GvmState {
  std::string guest;
  std::string ctx;  // context the thread currently runs in
  std::string name = "IDLE";
  std::string imageId;
  Term vmpck;
  Term guestCounter = N(0);
  Term heldKey = null_key();
  Term imageTid;

  Term state_term() const { return tup({pub(name), guestCounter, heldKey, vmpck, imageTid}); }

  static std::optional<GvmState> from_term(const Term& t) {
    auto f = untup(t, 5);
    if (!f || !(*f)[0].is(Head::PubConst) || !(*f)[1].is(Head::Counter)) return std::nullopt;
    GvmState g;
    g.name = (*f)[0].name();
    g.guestCounter = (*f)[1];
    g.heldKey = (*f)[2];
    g.vmpck = (*f)[3];
    g.imageTid = (*f)[4];
    return g;
  }
};

inline Result<Term> gvm_request(GvmState& s, RequestKind kind, const Term& reportData, Env& env) {
  if (s.name != "IDLE") return err("NotIdle", s.name);
  const std::string& t = kind == RequestKind::Report ? tag::ReportReq : tag::KeyReq;
  Term req = snenc(pair(pub(t), reportData), N(s.guestCounter.num() + 1), s.vmpck);
  s.name = kind == RequestKind::Report ? "REPORT_REQ" : "KEY_REQ";
  env.emit("GVMIssueRequest", {pub(t), s.imageTid, s.vmpck, req, s.guestCounter});
  if (kind == RequestKind::Report) env.emit("GVMReportReq", {s.imageTid, reportData});
  env.publish(req);
  return req;
}

inline Status gvm_accept_response(GvmState& s, const Term& msg, Env& env) {
  if (s.name != "REPORT_REQ" && s.name != "KEY_REQ") return err("NotWaiting", s.name);
  auto pt = sn_dec(msg, N(s.guestCounter.num() + 2), s.vmpck);
  if (!pt) return err(pt.code() == "WrongNonce" ? "BadCounter" : "DecryptFailure", pt.code());
  auto parts = untup(pt.value(), 2);
  if (!parts) return err("DecryptFailure", "malformed plaintext");
  const std::string& want = s.name == "REPORT_REQ" ? tag::ReportRsp : tag::KeyRsp;
  if ((*parts)[0] != pub(want)) return err("WrongTag");
  const Term& body = (*parts)[1];
  if (s.name == "REPORT_REQ") {
    auto rb = untup(body, 2);
    if (!rb) return err("DecryptFailure", "malformed report");
    env.publish(tup({pub("REPORT"), (*rb)[0], (*rb)[1]}));
  } else {
    s.heldKey = body;
    env.emit("GVMReceiveKey", {s.imageTid, body});
  }
  s.guestCounter = N(s.guestCounter.num() + 2);
  s.name = "IDLE";
  env.emit("GVMAcceptResponse", {pub(want), s.imageTid, s.vmpck, msg, s.guestCounter});
  return Unit{};
}

inline Status gvm_delete_key(GvmState& s, Env& env) {
  if (s.heldKey == null_key()) return err("NoKey");
  s.heldKey = null_key();
  env.emit("GVMDeleteKey", {s.imageTid});
  return Unit{};
}

struct Channels {
  using Link = std::pair<Term, Term>;
  std::set<Link> pairs;
  std::map<Link, std::vector<Term>> queues;
  bool replay = false;
};

inline void chan_establish(Channels& ch, const Term& a, const Term& b, Env& env) {
  ch.pairs.insert({a, b});
  ch.pairs.insert({b, a});
  env.emit("EstablishSecureChan", {a, b});
}

inline Status chan_send(Channels& ch, const Term& a, const Term& b, const Term& msg, Env& env) {
  if (!ch.pairs.count({a, b})) return err("UnknownPairing");
  ch.queues[{a, b}].push_back(msg);
  env.emit("ComChanOut", {a, b, msg});
  return Unit{};
}

// linear: the message is consumed; replay mode leaves it for later receivers
inline Result<Term> chan_recv(Channels& ch, const Term& a, const Term& b, Env& env, std::size_t index = 0) {
  if (!ch.pairs.count({a, b})) return err("UnknownPairing");
  auto it = ch.queues.find({a, b});
  if (it == ch.queues.end() || index >= it->second.size()) return err("NoMessage");
  Term msg = it->second[index];
  if (!ch.replay) {
    it->second.erase(it->second.begin() + static_cast<std::ptrdiff_t>(index));
    if (it->second.empty()) ch.queues.erase(it);
  }
  env.emit("ComChanIn", {a, b, msg});
  return msg;
}

struct MaState {
  std::string entity;
  std::string chip;
  std::string ctx;
  std::string name = "IDLE";
  Term vmpck;
  Term counter = N(0);
  Term imageTid;
  Term peerImageTid;
  std::optional<Term> target;
};

namespace detail {
inline Term ma_seal(MaState& s, const std::string& t, const Term& body, Env& env) {
  Term req = snenc(pair(pub(t), body), N(s.counter.num() + 1), s.vmpck);
  env.emit("MAIssueRequest", {pub(t), s.imageTid, s.vmpck, req});
  env.publish(req);
  return req;
}
}  // namespace detail

inline Result<Term> ma_request_vmrk(MaState& s, const Term& gctxAddr, Env& env) {
  if (s.name != "IDLE") return err("NotIdle", s.name);
  Term vmrk = env.fresh.next();
  env.emit("GenerateVMRK", {s.imageTid, vmrk, gctxAddr});
  s.name = "VMRK_REQUEST";
  s.target = gctxAddr;
  return detail::ma_seal(s, tag::VmrkReq, pair(gctxAddr, vmrk), env);
}

inline Result<Term> ma_request_export(MaState& s, const Term& gctxAddr, Env& env) {
  if (s.name != "IDLE") return err("NotIdle", s.name);
  s.name = "EXPORT_REQUEST";
  s.target = gctxAddr;
  return detail::ma_seal(s, tag::ExportReq, gctxAddr, env);
}

inline Result<Term> ma_receive_ctx_and_import(MaState& s, Channels& ch, Env& env, std::size_t index = 0) {
  if (s.name != "IDLE") return err("NotIdle", s.name);
  auto ctx = chan_recv(ch, s.peerImageTid, s.imageTid, env, index);
  if (!ctx) return ctx.error();
  Term addr = env.fresh.next();
  s.name = "IMPORT_REQUEST";
  s.target = addr;
  return detail::ma_seal(s, tag::ImportReq, pair(ctx.value(), addr), env);
}

inline Status ma_accept_response(MaState& s, const Term& msg, Channels& ch, Env& env) {
  std::string want;
  if (s.name == "VMRK_REQUEST") want = tag::VmrkRsp;
  else if (s.name == "EXPORT_REQUEST") want = tag::ExportRsp;
  else if (s.name == "IMPORT_REQUEST") want = tag::ImportRsp;
  else return err("NotWaiting", s.name);
  auto pt = sn_dec(msg, N(s.counter.num() + 2), s.vmpck);
  if (!pt) return err(pt.code() == "WrongNonce" ? "BadCounter" : "DecryptFailure", pt.code());
  auto parts = untup(pt.value(), 2);
  if (!parts || (*parts)[0] != pub(want)) return err("WrongTag");
  if (want == tag::ExportRsp) {
    auto st = chan_send(ch, s.imageTid, s.peerImageTid, (*parts)[1], env);
    if (!st) return st;
  }
  s.counter = N(s.counter.num() + 2);
  s.name = "IDLE";
  s.target.reset();
  env.emit("MAAcceptResponse", {pub(want), s.imageTid, s.vmpck, msg});
  return Unit{};
}

struct MaAction {
  enum Kind { RequestVmrk, RequestExport, ReceiveAndImport } kind;
  Term addr;
};

inline Result<Term> ma_step(MaState& s, const MaAction& a, Channels& ch, Env& env) {
  switch (a.kind) {
    case MaAction::RequestVmrk: return ma_request_vmrk(s, a.addr, env);
    case MaAction::RequestExport: return ma_request_export(s, a.addr, env);
    case MaAction::ReceiveAndImport: return ma_receive_ctx_and_import(s, ch, env);
  }
  return err("NoSuchContext");
}

struct GoState {
  std::string entity;
  Term ownerId;
  Term ownerTid;
  KeyPair idk;
  std::optional<Term> pendingNonce;
  Term trustedRoot;
  std::string image;
  bool allowMig = false;
  Term expectedDigest;
  Term expectedIdKeyDigest;
  std::optional<std::string> pinnedChip;
  bool stopped = false;
};

struct Verdict {
  std::string kind;    // accept | reject | flag_migrated_to_weaker
  std::string reason;  // chain | signature | freshness | digest | platform
  std::vector<std::pair<std::string, bool>> checks;

  std::string label() const { return reason.empty() ? kind : kind + ":" + reason; }
  bool accepted() const { return kind != "reject"; }
};

inline std::pair<Term, Term> go_deploy(GoState& go, const std::string& image, bool allowMig, Env& env) {
  Term idBlock = pair(image_digest(image), bit(allowMig));
  Term idAuth = pair(sign(idBlock, go.idk.priv), go.idk.pub);
  go.image = image;
  go.allowMig = allowMig;
  go.expectedDigest = image_digest(image);
  go.expectedIdKeyDigest = id_key_digest(go.idk.pub);
  env.emit("GODeploy", {go.ownerTid, pub(image), bit(allowMig), go.idk.pub});
  env.publish(tup({pub("DEPLOY_REQ"), idBlock, idAuth}));
  return {idBlock, idAuth};
}

inline Result<Term> go_new_nonce(GoState& go, Env& env) {
  if (go.stopped) return err("Stopped");
  if (go.pendingNonce) return err("NoncePending");
  Term n = env.fresh.next();
  go.pendingNonce = n;
  env.emit("GONonce", {go.ownerTid, n});
  env.publish(n);
  return n;
}

inline Verdict evaluate_report(const GoState& go, const Term& body, const Term& sig,
                               const std::vector<Certificate>& chain, bool checkMitigation) {
  Verdict v;
  auto f = ReportFields::parse(body);
  bool chainOk = f && verify_chain(chain, go.trustedRoot) && chain.front().subjectKind == "VCEK" &&
                 f->chipId.is(Head::PubConst) && chain.front().subjectId == f->chipId.name();
  bool sigOk = chainOk && verify_sig(sig, body, chain.front().pub);
  bool fresh = f && go.pendingNonce && f->reportData == *go.pendingNonce;
  bool digest = f && f->launchDigest == go.expectedDigest && f->digestIdk == go.expectedIdKeyDigest;
  bool platform = f && (!go.pinnedChip || f->chipId == pub(*go.pinnedChip));
  bool migrated = f && f->migrationEnabled == bit(true);
  v.checks = {{"chain", chainOk}, {"signature", sigOk}, {"freshness", fresh}, {"digest", digest},
              {"platform", platform}, {"migrationEnabled", !migrated}};
  for (auto& [name, ok] : v.checks) {
    if (name == "migrationEnabled") break;
    if (!ok) {
      v.kind = "reject";
      v.reason = name;
      return v;
    }
  }
  v.kind = checkMitigation && migrated ? "flag_migrated_to_weaker" : "accept";
  return v;
}

inline Result<Verdict> go_verify_report(GoState& go, const Term& body, const Term& sig,
                                        const std::vector<Certificate>& chain, bool checkMitigation, Env& env) {
  if (go.stopped) return err("Stopped");
  if (!go.pendingNonce) return err("NoPendingNonce");
  Verdict v = evaluate_report(go, body, sig, chain, checkMitigation);
  go.pendingNonce.reset();
  if (v.kind == "reject") go.stopped = true;
  env.emit("GOVerifiesReport", {go.ownerId, go.ownerTid, go.idk.pub, body, pub(v.label())});
  return v;
}

}  // namespace snplab

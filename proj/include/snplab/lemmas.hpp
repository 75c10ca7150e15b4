#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "firmware.hpp"
#include "trace.hpp"

namespace snplab {

struct LemmaVerdict {
  bool holds = true;
  std::size_t at = 0;  // trace index of the violating event
  std::string why;

  static LemmaVerdict ok() { return {}; }
  static LemmaVerdict violated(std::size_t at, std::string why) { return {false, at, std::move(why)}; }
};

enum class Variant { Any, AssocMA, NoAssocMA };

namespace lem {

inline bool is_corruption(const std::string& l) {
  return l == "CorruptVMPCK" || l == "CorruptImageVMPCK" || l == "CorruptImageOEK" || l == "CorruptVMRK" ||
         l == "CorruptCEK" || l == "RevealARK" || l == "RevealASK";
}

inline const ActionEvent* launch_of(const Trace& tr, const Term& tid) {
  for (auto& e : tr)
    if (e.label == "FWLaunchGVM" && e.args[2] == tid) return &e;
  return nullptr;
}

inline bool variant_ok(const Trace& tr, const Term& tid, Variant v) {
  if (v == Variant::Any) return true;
  const ActionEvent* l = launch_of(tr, tid);
  if (!l) return false;
  return (l->args[5] == pub("AssocMA")) == (v == Variant::AssocMA);
}

// chip hosting the guest thread at trace index i (launch and import events)
inline std::optional<Term> residency(const Trace& tr, const Term& tid, std::size_t i) {
  std::optional<Term> chip;
  for (std::size_t j = 0; j < i && j < tr.size(); ++j) {
    auto& e = tr[j];
    if ((e.label == "FWLaunchGVM" || e.label == "FWImportsGVM") && e.args[2] == tid) chip = e.args[0];
  }
  return chip;
}

inline std::optional<Term> ma_chip(const Trace& tr, const Term& maTid) {
  for (auto& e : tr)
    if (e.label == "FWLaunchesMA" && e.args[2] == maTid) return e.args[0];
  return std::nullopt;
}

inline std::optional<Term> tid_of_vmpck(const Trace& tr, const Term& vmpck) {
  for (auto& e : tr)
    if (e.label == "FWLaunchGVM" && e.args[3] == vmpck) return e.args[2];
  return std::nullopt;
}

// keys whose compromise excuses a guest-level property: vmpck, oek, every vmrk, every MA vmpck
inline std::set<Term> guest_deps(const Trace& tr, const Term& tid, std::size_t i) {
  std::set<Term> d;
  for (std::size_t j = 0; j < tr.size() && j < i; ++j) {
    auto& e = tr[j];
    if (e.label == "FWLaunchGVM" && e.args[2] == tid) {
      d.insert(e.args[3]);
      d.insert(e.args[4]);
      d.insert(e.args[6]);
    } else if (e.label == "InstallVMRK" && e.args[3] == tid) {
      d.insert(e.args[2]);
    } else if (e.label == "FWLaunchesMA") {
      d.insert(e.args[3]);
    } else if (e.label == "GenerateVMRK") {
      d.insert(e.args[1]);
    }
  }
  return d;
}

inline std::set<Term> kds_deps(const Trace& tr, const Term& chip) {
  std::set<Term> d{pub("ARK"), pub("ASK")};
  (void)tr;
  d.insert(chip);
  return d;
}

inline bool corrupted_before(const Trace& tr, std::size_t i, const std::set<Term>& deps) {
  for (std::size_t j = 0; j < i && j < tr.size(); ++j) {
    auto& e = tr[j];
    if (!is_corruption(e.label)) continue;
    if (e.label == "RevealARK" && deps.count(pub("ARK"))) return true;
    if (e.label == "RevealASK" && deps.count(pub("ASK"))) return true;
    if (!e.args.empty() && deps.count(e.args[0])) return true;
  }
  return false;
}

// CEK corruption is recorded with the cek term; map chip labels to their cek
inline std::set<Term> expand_chips(const Trace& tr, std::set<Term> deps) {
  for (auto& e : tr)
    if (e.label == "PLCreate" && deps.count(e.args[0])) {
      const Term& vpub = e.args[2];
      if (vpub.is(Head::Pk) && vpub.arg(0).is(Head::Kdf)) deps.insert(vpub.arg(0).arg(1));
    }
  return deps;
}

inline bool accepted_verdict(const Term& v) {
  return v == pub("accept") || v == pub("flag_migrated_to_weaker");
}

inline std::string tname(const Term& t) { return t.str(); }

}  // namespace lem

using Checker = std::function<LemmaVerdict(const Trace&, std::size_t)>;

struct LemmaSpec {
  std::string name;
  std::string kind;    // secrecy | authentication | attestation | freshness
  std::string config;  // exploration configuration the lemma is evaluated under
  bool expectHolds = true;
  Checker check;

  LemmaVerdict operator()(const Trace& tr, std::size_t from = 0) const { return check(tr, from); }
};

inline LemmaVerdict check_secrecy(const Trace& tr, std::size_t from, const std::string& label, Variant v) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "AdversaryDerives" || e.args[0] != pub(label)) continue;
    const Term& secret = e.args[1];
    const Term& owner = e.args[2];
    std::set<Term> deps;
    if (label == "ARK") deps = {pub("ARK")};
    else if (label == "ASK") deps = {pub("ASK")};
    else if (label == "CEK") deps = {secret};
    else if (label == "VCEK") deps = {secret.is(Head::Kdf) ? secret.arg(1) : secret};
    else if (label == "MA_VMPCK") deps = {secret};
    else {
      if (!lem::variant_ok(tr, owner, v)) continue;
      deps = lem::guest_deps(tr, owner, i);
    }
    if (!lem::corrupted_before(tr, i, deps))
      return LemmaVerdict::violated(i, label + " " + secret.str() + " derivable without corruption");
  }
  return LemmaVerdict::ok();
}

// firmware side: every request the firmware serves was issued by the guest while resident on that chip
inline LemmaVerdict check_agreement_fw(const Trace& tr, std::size_t from, const std::string& fwKind, Variant v) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "FWReceiveGVMRequest" || e.args[0] != pub(fwKind)) continue;
    const Term& chip = e.args[1];
    const Term& tid = e.args[2];
    const Term& req = e.args[4];
    if (!lem::variant_ok(tr, tid, v)) continue;
    bool found = false;
    for (std::size_t j = 0; j < i && !found; ++j) {
      auto& f = tr[j];
      if (f.label == "GVMIssueRequest" && f.args[3] == req && lem::residency(tr, f.args[1], j) == chip) found = true;
    }
    if (!found && !lem::corrupted_before(tr, i, lem::guest_deps(tr, tid, i)))
      return LemmaVerdict::violated(i, "firmware on " + chip.str() + " served a request not issued there");
  }
  return LemmaVerdict::ok();
}

// guest side: every accepted response came from the firmware of the chip the guest resides on
inline LemmaVerdict check_agreement_gvm(const Trace& tr, std::size_t from, const std::string& rspTag, Variant v) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "GVMAcceptResponse" || e.args[0] != pub(rspTag)) continue;
    const Term& tid = e.args[1];
    const Term& rsp = e.args[3];
    if (!lem::variant_ok(tr, tid, v)) continue;
    auto chip = lem::residency(tr, tid, i);
    bool found = false;
    for (std::size_t j = 0; j < i && !found; ++j) {
      auto& f = tr[j];
      if (f.label == "FWHandleGVM" && f.args[3] == rsp && chip && f.args[1] == *chip) found = true;
    }
    if (!found && !lem::corrupted_before(tr, i, lem::guest_deps(tr, tid, i)))
      return LemmaVerdict::violated(i, "guest accepted a response not produced by its host firmware");
  }
  return LemmaVerdict::ok();
}

inline LemmaVerdict check_agreement_fw_ma(const Trace& tr, std::size_t from, const std::string& reqTag) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "FWReceiveMARequest" || e.args[0] != pub(reqTag)) continue;
    bool found = false;
    for (std::size_t j = 0; j < i && !found; ++j) {
      auto& f = tr[j];
      if (f.label == "MAIssueRequest" && f.args[3] == e.args[3] && lem::ma_chip(tr, f.args[1]) == e.args[1])
        found = true;
    }
    if (!found && !lem::corrupted_before(tr, i, {e.args[2]}))
      return LemmaVerdict::violated(i, "firmware served an MA request the MA never issued");
  }
  return LemmaVerdict::ok();
}

inline LemmaVerdict check_agreement_ma_fw(const Trace& tr, std::size_t from, const std::string& rspTag) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "MAAcceptResponse" || e.args[0] != pub(rspTag)) continue;
    auto chip = lem::ma_chip(tr, e.args[1]);
    bool found = false;
    for (std::size_t j = 0; j < i && !found; ++j) {
      auto& f = tr[j];
      if (f.label == "FWHandleMA" && f.args[3] == e.args[3] && chip && f.args[1] == *chip) found = true;
    }
    if (!found && !lem::corrupted_before(tr, i, {e.args[2]}))
      return LemmaVerdict::violated(i, "MA accepted a response its firmware never produced");
  }
  return LemmaVerdict::ok();
}

enum class AttestStrength { Authenticity, WeakIntegrity, StrongIntegrity };

inline LemmaVerdict check_attestation(const Trace& tr, std::size_t from, AttestStrength strength, Variant v) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "GOVerifiesReport" || !lem::accepted_verdict(e.args[4])) continue;
    const Term& body = e.args[3];
    auto f = ReportFields::parse(body);
    if (!f) continue;
    if (v != Variant::Any && (f->allowMig == bit(true)) != (v == Variant::AssocMA)) continue;
    std::set<Term> deps = lem::expand_chips(tr, lem::kds_deps(tr, f->chipId));
    std::optional<std::size_t> gen;
    Term tid;
    for (std::size_t j = 0; j < i && !gen; ++j)
      if (tr[j].label == "FWGeneratesReport" && tr[j].args[2] == body && tr[j].args[0] == f->chipId) {
        gen = j;
        tid = tr[j].args[1];
      }
    if (!gen) {
      if (!lem::corrupted_before(tr, i, deps))
        return LemmaVerdict::violated(i, "accepted report was never generated by the signing platform");
      continue;
    }
    if (strength == AttestStrength::Authenticity) continue;
    auto gd = lem::guest_deps(tr, tid, i);
    deps.insert(gd.begin(), gd.end());
    const ActionEvent* launch = lem::launch_of(tr, tid);
    std::optional<std::size_t> asked;
    for (std::size_t j = 0; j < *gen; ++j)
      if (tr[j].label == "GVMReportReq" && tr[j].args[0] == tid && tr[j].args[1] == f->reportData) asked = j;
    if (!launch || !asked) {
      if (!lem::corrupted_before(tr, i, deps))
        return LemmaVerdict::violated(i, "report fields do not match a request of the bound guest");
      continue;
    }
    if (strength == AttestStrength::StrongIntegrity && lem::residency(tr, tid, *asked) != f->chipId) {
      if (!lem::corrupted_before(tr, i, deps))
        return LemmaVerdict::violated(i, "report names " + f->chipId.str() +
                                             " but the guest resided elsewhere when it asked");
    }
  }
  return LemmaVerdict::ok();
}

inline LemmaVerdict check_no_key_nonce_reuse(const Trace& tr, std::size_t from) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "ReuseNonceKey") continue;
    const Term& key = e.args[1];
    std::set<Term> deps{key};
    if (auto tid = lem::tid_of_vmpck(tr, key)) deps = lem::guest_deps(tr, *tid, i);
    if (!lem::corrupted_before(tr, i, deps))
      return LemmaVerdict::violated(i, "honest parties reused nonce " + e.args[0].str() + " under one key");
  }
  return LemmaVerdict::ok();
}

inline LemmaVerdict check_report_freshness(const Trace& tr, std::size_t from) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "GOVerifiesReport" || !lem::accepted_verdict(e.args[4])) continue;
    auto f = ReportFields::parse(e.args[3]);
    if (!f) continue;
    bool issued = false;
    for (std::size_t j = 0; j < i; ++j) {
      auto& g = tr[j];
      if (g.label == "GONonce" && g.args[0] == e.args[1] && g.args[1] == f->reportData) issued = true;
      if (g.label == "GOVerifiesReport" && g.args[1] == e.args[1] && lem::accepted_verdict(g.args[4])) {
        auto h = ReportFields::parse(g.args[3]);
        if (h && h->reportData == f->reportData)
          return LemmaVerdict::violated(i, "report data accepted twice");
      }
    }
    if (!issued) return LemmaVerdict::violated(i, "accepted report data never issued by this owner");
  }
  return LemmaVerdict::ok();
}

inline LemmaVerdict check_vmrk_install_unique(const Trace& tr, std::size_t from) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label == "InstallVMRK") {
      for (std::size_t j = 0; j < i; ++j)
        if (tr[j].label == "InstallVMRK" && tr[j].args[0] == e.args[0] && tr[j].args[1] == e.args[1])
          return LemmaVerdict::violated(i, "VMRK installed twice into one context");
    }
    if (e.label == "FWInstallsMAVMRK") {
      for (std::size_t j = 0; j < i; ++j)
        if (tr[j].label == "FWInstallsMAVMRK" && tr[j].args[3] == e.args[3] &&
            !lem::corrupted_before(tr, i, {e.args[1]}))
          return LemmaVerdict::violated(i, "one VMRK installed into two contexts");
    }
  }
  return LemmaVerdict::ok();
}

inline LemmaVerdict check_derived_key_guest_unique(const Trace& tr, std::size_t from) {
  for (std::size_t i = from; i < tr.size(); ++i) {
    auto& e = tr[i];
    if (e.label != "GVMReceiveKey") continue;
    for (std::size_t j = 0; j < i; ++j) {
      auto& f = tr[j];
      if (f.label != "GVMReceiveKey" || f.args[1] != e.args[1] || f.args[0] == e.args[0]) continue;
      auto deps = lem::guest_deps(tr, e.args[0], i);
      auto d2 = lem::guest_deps(tr, f.args[0], i);
      deps.insert(d2.begin(), d2.end());
      if (!lem::corrupted_before(tr, i, deps))
        return LemmaVerdict::violated(i, "two guests hold the same derived key");
    }
  }
  return LemmaVerdict::ok();
}

inline const std::vector<LemmaSpec>& lemma_registry() {
  static const std::vector<LemmaSpec> reg = [] {
    std::vector<LemmaSpec> r;
    auto sec = [&r](std::string name, std::string label, Variant v, std::string cfg) {
      r.push_back({std::move(name), "secrecy", std::move(cfg), true,
                   [label, v](const Trace& t, std::size_t f) { return check_secrecy(t, f, label, v); }});
    };
    sec("SecMAVMPCKIsSecret", "MA_VMPCK", Variant::Any, "assoc");
    sec("SecGVMOEKIsSecretNoAssocMA", "GVM_OEK", Variant::NoAssocMA, "noassoc");
    sec("SecGVMOEKIsSecret", "GVM_OEK", Variant::AssocMA, "assoc");
    sec("SecGVMVMPCKIsSecretNoAssocMA", "GVM_VMPCK", Variant::NoAssocMA, "noassoc");
    sec("SecGVMVMPCKIsSecret", "GVM_VMPCK", Variant::AssocMA, "assoc");
    sec("SecMAVMRKIsSecret", "MA_VMRK", Variant::Any, "assoc");
    sec("SecFWVMRKIsSecret", "FW_VMRK", Variant::Any, "noassoc");
    sec("SecKeyDerivedFromMAVMRKIsSecret", "KEY_MA_VMRK", Variant::Any, "assoc");
    sec("SecKeyDerivedFromFWVMRKIsSecret", "KEY_FW_VMRK", Variant::Any, "noassoc");
    sec("SecARKIsSecret", "ARK", Variant::Any, "assoc");
    sec("SecASKIsSecret", "ASK", Variant::Any, "assoc");
    sec("SecCEKIsSecret", "CEK", Variant::Any, "assoc");
    sec("SecVCEKIsSecret", "VCEK", Variant::Any, "assoc");

    auto fw = [&r](std::string name, std::string kind, Variant v, bool holds) {
      std::string cfg = v == Variant::AssocMA ? "assoc" : "noassoc";
      r.push_back({std::move(name), "authentication", cfg, holds,
                   [kind, v](const Trace& t, std::size_t f) { return check_agreement_fw(t, f, kind, v); }});
    };
    auto gv = [&r](std::string name, std::string tagName, Variant v, bool holds) {
      std::string cfg = v == Variant::AssocMA ? "assoc" : "noassoc";
      r.push_back({std::move(name), "authentication", cfg, holds,
                   [tagName, v](const Trace& t, std::size_t f) { return check_agreement_gvm(t, f, tagName, v); }});
    };
    fw("AuthFWGVMMsgAgreeForAttestNoAssocMA", "FW_GENERATE_REPORT", Variant::NoAssocMA, true);
    fw("AuthFWGVMMsgAgreeForKeyDerNoAssocMA", "FW_DERIVE_KEY", Variant::NoAssocMA, true);
    gv("AuthGVMFWMsgAgreeForAttestNoAssocMA", tag::ReportRsp, Variant::NoAssocMA, true);
    gv("AuthGVMFWMsgAgreeForKeyDerNoAssocMA", tag::KeyRsp, Variant::NoAssocMA, true);
    fw("AuthFWGVMMsgAgreeForAttestAssocMA", "FW_GENERATE_REPORT", Variant::AssocMA, false);
    fw("AuthFWGVMMsgAgreeForKeyDerAssocMA", "FW_DERIVE_KEY", Variant::AssocMA, false);
    gv("AuthGVMFWMsgAgreeForAttestAssocMA", tag::ReportRsp, Variant::AssocMA, false);
    gv("AuthGVMFWMsgAgreeForKeyDerAssocMA", tag::KeyRsp, Variant::AssocMA, false);
    auto fm = [&r](std::string name, std::string t) {
      r.push_back({std::move(name), "authentication", "assoc", true,
                   [t](const Trace& tr, std::size_t f) { return check_agreement_fw_ma(tr, f, t); }});
    };
    auto mf = [&r](std::string name, std::string t) {
      r.push_back({std::move(name), "authentication", "assoc", true,
                   [t](const Trace& tr, std::size_t f) { return check_agreement_ma_fw(tr, f, t); }});
    };
    fm("AuthFWMAMsgAgreeForVMRK", tag::VmrkReq);
    fm("AuthFWMAMsgAgreeForExport", tag::ExportReq);
    fm("AuthFWMAMsgAgreeForImport", tag::ImportReq);
    mf("AuthMAFWMsgAgreeForVMRK", tag::VmrkRsp);
    mf("AuthMAFWMsgAgreeForExport", tag::ExportRsp);
    mf("AuthMAFWMsgAgreeForImport", tag::ImportRsp);

    auto at = [&r](std::string name, AttestStrength s, Variant v, bool holds) {
      std::string cfg = v == Variant::AssocMA ? "assoc" : "noassoc";
      r.push_back({std::move(name), "attestation", cfg, holds,
                   [s, v](const Trace& t, std::size_t f) { return check_attestation(t, f, s, v); }});
    };
    at("AttestationReportAuthenticityNoAssocMA", AttestStrength::Authenticity, Variant::NoAssocMA, true);
    at("AttestationReportAuthenticityAssocMA", AttestStrength::Authenticity, Variant::AssocMA, true);
    at("AttestationReportIntegrityNoAssocMA", AttestStrength::StrongIntegrity, Variant::NoAssocMA, true);
    at("AttestationReportWeakIntegrityAssocMA", AttestStrength::WeakIntegrity, Variant::AssocMA, true);
    at("AttestationReportStrongIntegrityAssocMA", AttestStrength::StrongIntegrity, Variant::AssocMA, false);

    r.push_back({"FreshNoKeyNonceReuse", "freshness", "assoc", true, check_no_key_nonce_reuse});
    r.push_back({"FreshAttestationReportFreshness", "freshness", "assoc", true, check_report_freshness});
    r.push_back({"FreshMAVMRKInstallationIsUnique", "freshness", "assoc", true, check_vmrk_install_unique});
    r.push_back({"FreshKeyDerivedFromFWVMRKIsGuestUnique", "freshness", "twoguests", true,
                 check_derived_key_guest_unique});
    return r;
  }();
  return reg;
}

inline const LemmaSpec* find_lemma(const std::string& name) {
  for (auto& l : lemma_registry())
    if (l.name == name) return &l;
  return nullptr;
}

}  // namespace snplab

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "term.hpp"

namespace snplab {

enum class KeyKind { ARK, ASK, VCEK, IDK };

struct KeyPair {
  Term priv;
  Term pub;
  KeyKind kind = KeyKind::IDK;

  static KeyPair from(Term priv, KeyKind kind) {
    Term p = pk(priv);
    return KeyPair{std::move(priv), std::move(p), kind};
  }
};

struct Certificate {
  std::string subjectKind;
  std::string issuerId;
  std::string subjectId;
  Term pub;
  Term signedBody;
  Term sig;

  // <data, sign(data, priv)> as it travels on the network
  Term term() const { return pair(signedBody, sig); }
};

inline Certificate issue_cert(const std::string& kind, const std::string& issuerId,
                              const std::string& subjectId, const Term& subjectPub,
                              const Term& issuerPriv) {
  Term body = tup({pub(kind), pub(issuerId), pub(subjectId), subjectPub});
  return Certificate{kind, issuerId, subjectId, subjectPub, body, sign(body, issuerPriv)};
}

struct Kds {
  std::optional<KeyPair> ark;
  std::optional<Certificate> arkCert;
  std::optional<KeyPair> ask;
  std::optional<Certificate> askCert;

  std::vector<Certificate> chain_for(const Certificate& leaf) const {
    std::vector<Certificate> c{leaf};
    if (askCert) c.push_back(*askCert);
    if (arkCert) c.push_back(*arkCert);
    return c;
  }
};

inline const std::string kArkId = "ARK";
inline const std::string kAskId = "ASK";

inline Result<std::pair<KeyPair, Certificate>> create_root(Kds& kds, FreshSource& fresh) {
  if (kds.ark) return err("RootExists");
  KeyPair ark = KeyPair::from(fresh.next(), KeyKind::ARK);
  Certificate cert = issue_cert("ARK", kArkId, kArkId, ark.pub, ark.priv);
  kds.ark = ark;
  kds.arkCert = cert;
  return std::pair{ark, cert};
}

inline Result<std::pair<KeyPair, Certificate>> create_signing_key(Kds& kds, FreshSource& fresh) {
  if (!kds.ark) return err("NoRoot");
  KeyPair ask = KeyPair::from(fresh.next(), KeyKind::ASK);
  Certificate cert = issue_cert("ASK", kArkId, kAskId, ask.pub, kds.ark->priv);
  kds.ask = ask;
  kds.askCert = cert;
  return std::pair{ask, cert};
}

inline KeyPair derive_vcek(const Term& cek, const std::string& tcbVersion) {
  return KeyPair::from(kdf(pub("VCEK"), cek, pub(tcbVersion)), KeyKind::VCEK);
}

inline bool cert_self_consistent(const Certificate& c) {
  return c.signedBody == tup({pub(c.subjectKind), pub(c.issuerId), pub(c.subjectId), c.pub});
}

// chain is leaf first, root last
inline bool verify_chain(const std::vector<Certificate>& chain, const Term& trustedRoot) {
  if (chain.empty()) return false;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const Certificate& c = chain[i];
    if (!cert_self_consistent(c)) return false;
    const Certificate& issuer = i + 1 < chain.size() ? chain[i + 1] : c;
    if (i + 1 < chain.size() && c.issuerId != issuer.subjectId) return false;
    if (!verify_sig(c.sig, c.signedBody, issuer.pub)) return false;
  }
  const Certificate& root = chain.back();
  return root.pub == trustedRoot && root.issuerId == root.subjectId;
}

}  // namespace snplab

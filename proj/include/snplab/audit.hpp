#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "firmware.hpp"
#include "trace.hpp"

namespace snplab {

struct AuditViolation {
  std::string invariant;  // counter-parity | counter-sync | serviced-while-swapped | vmrk-install-injective
  std::size_t at = 0;
  std::string detail;
};

// counters are tracked per vmpck; the guest side resets from the state carried by a swap-in
inline std::vector<AuditViolation> audit_trace(const Trace& tr) {
  std::vector<AuditViolation> out;
  std::map<Term, long> guest, fw;
  std::set<std::pair<Term, Term>> swapped;  // (chip, vmpck)
  std::set<std::pair<Term, Term>> installs;

  auto check = [&](const Term& vmpck, std::size_t i) {
    auto g = guest.find(vmpck);
    if (g == guest.end()) return;
    if (g->second % 2 != 0)
      out.push_back({"counter-parity", i, "guest counter " + std::to_string(g->second)});
    auto f = fw.find(vmpck);
    long d = (f == fw.end() ? 0 : f->second) - g->second;
    if (d != 0 && d != 2)
      out.push_back({"counter-sync", i, "firmware minus guest is " + std::to_string(d)});
  };

  for (std::size_t i = 0; i < tr.size(); ++i) {
    auto& e = tr[i];
    const auto& a = e.args;
    if (e.label == "FWLaunchGVM") {
      guest[a[3]] = 0;
      fw[a[3]] = 0;
    } else if (e.label == "GVMAcceptResponse") {
      guest[a[2]] = a[4].num();
      check(a[2], i);
    } else if (e.label == "FWHandleGVM") {
      fw[a[2]] = a[4].num();
      check(a[2], i);
    } else if (e.label == "FWSwapsOutVMPCKBM") {
      swapped.insert({a[1], a[0]});
    } else if (e.label == "FWSwapsInGVM") {
      swapped.erase({a[1], a[0]});
      auto st = untup(a[3], 5);
      if (st && (*st)[1].is(Head::Counter)) guest[a[0]] = (*st)[1].num();
    } else if (e.label == "FWExportsGVM") {
      swapped.erase({a[0], a[3]});
    } else if (e.label == "FWReceiveGVMRequest") {
      if (swapped.count({a[1], a[3]}))
        out.push_back({"serviced-while-swapped", i, "request served on " + a[1].str() + " while swapped out"});
    } else if (e.label == "InstallVMRK") {
      if (!installs.insert({a[0], a[1]}).second)
        out.push_back({"vmrk-install-injective", i, "second install for " + a[1].str()});
    }
  }
  return out;
}

}  // namespace snplab

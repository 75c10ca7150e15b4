#include <gtest/gtest.h>

#include <snplab/agents.hpp>
#include <snplab/firmware.hpp>

using namespace snplab;

namespace {

struct Host {
  Kds kds;
  EnvStore es;
  PlatformState ps;
  Term idk = Term::fresh(1000);

  explicit Host(std::string tcb = "v1", std::string chip = "P1") {
    create_root(kds, es.fresh);
    create_signing_key(kds, es.fresh);
    ps.pl = pl_create(kds, chip, tcb, es.env).value();
  }

  std::pair<Term, Term> id_block(const std::string& image, bool allowMig) {
    Term blk = pair(image_digest(image), bit(allowMig));
    return {blk, pair(sign(blk, idk), pk(idk))};
  }

  GuestContext launch(const std::string& name, bool allowMig = false, const GuestContext* ma = nullptr) {
    auto [blk, auth] = id_block(kGvmImage, allowMig);
    fw_initialize_gvm(ps, name, "G1", kGvmImage, blk, auth, es.env).value();
    return fw_finalize_launch(ps, name, ma, es.env).value();
  }

  Term request(const GuestContext& c, const std::string& t, const Term& body, std::uint64_t n) {
    return snenc(pair(pub(t), body), N(n), c.vmpck);
  }

  const GuestContext& ctx(const std::string& n) { return ps.contexts.at(n); }
};

GvmState thread_of(const GuestContext& c) {
  GvmState g;
  g.vmpck = c.vmpck;
  g.imageTid = c.imageTid;
  return g;
}

}  // namespace

TEST(Launch, BadDigestIsRejected) {
  Host h;
  auto [blk, auth] = h.id_block("other-image", false);
  EXPECT_EQ(fw_initialize_gvm(h.ps, "G", "G1", kGvmImage, blk, auth, h.es.env).code(), "BAD_MEASUREMENT");
}

TEST(Launch, WrongSignerIsRejected) {
  Host h;
  Term blk = pair(image_digest(kGvmImage), bit(false));
  Term auth = pair(sign(blk, Term::fresh(1)), pk(Term::fresh(2)));
  EXPECT_EQ(fw_initialize_gvm(h.ps, "G", "G1", kGvmImage, blk, auth, h.es.env).code(), "BAD_SIGNATURE");
}

TEST(Launch, MaWithoutMigrationPolicyIsRejected) {
  Host h;
  auto ma = fw_launch_ma(h.ps, "MA", "MA1", kMaImage, h.es.env).value();
  auto [blk, auth] = h.id_block(kGvmImage, false);
  fw_initialize_gvm(h.ps, "G", "G1", kGvmImage, blk, auth, h.es.env).value();
  EXPECT_EQ(fw_finalize_launch(h.ps, "G", &ma, h.es.env).code(), "PolicyMismatch");
}

TEST(Launch, MaImageMustMatch) {
  Host h;
  EXPECT_EQ(fw_launch_ma(h.ps, "MA", "MA1", "not-the-ma", h.es.env).code(), "BAD_MEASUREMENT");
}

TEST(Launch, DuplicateAddressIsRejected) {
  Host h;
  auto [blk, auth] = h.id_block(kGvmImage, false);
  Term addr = Term::fresh(4242);
  ASSERT_TRUE(fw_initialize_gvm(h.ps, "A", "G1", kGvmImage, blk, auth, h.es.env, addr).ok());
  EXPECT_EQ(fw_initialize_gvm(h.ps, "B", "G1", kGvmImage, blk, auth, h.es.env, addr).code(), "DuplicateGctxAddr");
}

TEST(Launch, AssociationRecordsMaReportId) {
  Host h;
  auto ma = fw_launch_ma(h.ps, "MA", "MA1", kMaImage, h.es.env).value();
  auto g = h.launch("G", true, &ma);
  ASSERT_TRUE(g.reportIdMa);
  EXPECT_EQ(*g.reportIdMa, ma.reportId);
  EXPECT_EQ(h.es.events.back().label, "AssociateMAGVM");
}

TEST(GuestRequest, ReportCarriesFieldsAndAdvancesCounter) {
  Host h;
  auto g = h.launch("G");
  Term nonce = Term::fresh(555);
  auto rsp = fw_guest_request(h.ps, "G", h.request(g, tag::ReportReq, nonce, 1), h.es.env);
  ASSERT_TRUE(rsp.ok());
  EXPECT_EQ(h.ctx("G").fwMsgCount, N(2));
  auto pt = sn_dec(rsp.value(), N(2), g.vmpck);
  ASSERT_TRUE(pt.ok());
  auto parts = untup(pt.value(), 2);
  EXPECT_EQ((*parts)[0], pub(tag::ReportRsp));
  auto rb = untup((*parts)[1], 2);
  auto f = ReportFields::parse((*rb)[0]);
  ASSERT_TRUE(f);
  EXPECT_EQ(f->reportData, nonce);
  EXPECT_EQ(f->chipId, pub("P1"));
  EXPECT_EQ(f->tcbVersion, pub("v1"));
  EXPECT_EQ(f->migrationEnabled, bit(false));
  EXPECT_TRUE(verify_sig((*rb)[1], (*rb)[0], h.ps.pl.vcek.pub));
}

TEST(GuestRequest, StaleCounterIsBadCounter) {
  Host h;
  auto g = h.launch("G");
  ASSERT_TRUE(fw_guest_request(h.ps, "G", h.request(g, tag::KeyReq, pub("p"), 1), h.es.env).ok());
  EXPECT_EQ(fw_guest_request(h.ps, "G", h.request(g, tag::KeyReq, pub("p"), 1), h.es.env).code(), "BadCounter");
  EXPECT_TRUE(fw_guest_request(h.ps, "G", h.request(g, tag::KeyReq, pub("p"), 3), h.es.env).ok());
}

TEST(GuestRequest, WrongKeyIsDecryptFailure) {
  Host h;
  auto g = h.launch("G");
  Term req = snenc(pair(pub(tag::KeyReq), pub("p")), N(1), Term::fresh(31337));
  EXPECT_EQ(fw_guest_request(h.ps, "G", req, h.es.env).code(), "DecryptFailure");
}

TEST(GuestRequest, DerivedKeyBindsVmrkAndIdKey) {
  Host h;
  auto g = h.launch("G");
  ASSERT_TRUE(fw_guest_request(h.ps, "G", h.request(g, tag::KeyReq, pub("p"), 1), h.es.env).ok());
  auto& e = h.es.events[h.es.events.size() - 2];
  EXPECT_EQ(e.label, "FWDerivesKey");
  EXPECT_EQ(e.args[2], derived_key(g.vmrk, g.vmpl, g.hostData, g.pubIdk));
}

TEST(GuestRequest, SwappedOutGuestIsNotServed) {
  Host h;
  auto g = h.launch("G");
  GvmState st = thread_of(g);
  ASSERT_TRUE(fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).ok());
  EXPECT_EQ(fw_guest_request(h.ps, "G", h.request(g, tag::KeyReq, pub("p"), 1), h.es.env).code(),
            "GuestSwappedOut");
}

TEST(Swap, RoundTripRestoresState) {
  Host h;
  GvmState st = thread_of(h.launch("G"));
  st.guestCounter = N(4);
  auto out = fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).value();
  EXPECT_EQ(fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).code(), "AlreadySwapped");
  auto in = fw_swap_in(h.ps, "G", out.first, out.second, h.es.env);
  ASSERT_TRUE(in.ok());
  EXPECT_EQ(in.value(), st.state_term());
  EXPECT_FALSE(h.ctx("G").swapped);
}

TEST(Swap, StalePayloadIsBadAuth) {
  Host h;
  GvmState st = thread_of(h.launch("G"));
  auto first = fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).value();
  ASSERT_TRUE(fw_swap_in(h.ps, "G", first.first, first.second, h.es.env).ok());
  st.guestCounter = N(2);
  ASSERT_TRUE(fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).ok());
  EXPECT_EQ(fw_swap_in(h.ps, "G", first.first, first.second, h.es.env).code(), "BAD_AUTH");
}

TEST(Swap, IgnoringRootEntryAcceptsStalePayload) {
  Host h;
  h.es.env.flags.ignoreRootMdEntry = true;
  GvmState st = thread_of(h.launch("G"));
  auto first = fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).value();
  ASSERT_TRUE(fw_swap_in(h.ps, "G", first.first, first.second, h.es.env).ok());
  st.guestCounter = N(2);
  ASSERT_TRUE(fw_swap_out(h.ps, "G", st.state_term(), "IDLE", h.es.env).ok());
  auto back = fw_swap_in(h.ps, "G", first.first, first.second, h.es.env);
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(GvmState::from_term(back.value())->guestCounter, N(0));
}

TEST(Swap, SwapInWithoutSwapOutIsNotSwapped) {
  Host h;
  h.launch("G");
  Term oek = h.ctx("G").oek;
  Term p = senc(thread_of(h.ctx("G")).state_term(), oek);
  EXPECT_EQ(fw_swap_in(h.ps, "G", p, mac(p, oek), h.es.env).code(), "NotSwapped");
}

namespace {

// MA on P1 with G associated to it
struct MaHost : Host {
  GuestContext ma;
  MaState mas;
  Channels ch;

  MaHost() : Host() {
    ma = fw_launch_ma(ps, "MA", "MA1", kMaImage, es.env).value();
    launch("G", true, &ma);
    mas.vmpck = ma.vmpck;
    mas.imageTid = ma.imageTid;
    mas.peerImageTid = Term::fresh(9000);
    chan_establish(ch, mas.imageTid, mas.peerImageTid, es.env);
  }

  Result<Term> exchange(Result<Term> req) {
    if (!req) return req;
    auto rsp = fw_ma_request(ps, "MA", req.value(), es.env);
    if (!rsp) return rsp;
    auto st = ma_accept_response(mas, rsp.value(), ch, es.env);
    if (!st) return st.error();
    return rsp;
  }
};

}  // namespace

TEST(Ma, VmrkInstallReplacesGuestVmrk) {
  MaHost h;
  Term addr = h.ctx("G").addr;
  ASSERT_TRUE(h.exchange(ma_request_vmrk(h.mas, addr, h.es.env)).ok());
  EXPECT_TRUE(h.ctx("G").vmrkFromMa);
  EXPECT_EQ(h.mas.counter, N(2));
}

TEST(Ma, ReplayedVmrkRequestIsRejected) {
  MaHost h;
  Term addr = h.ctx("G").addr;
  auto req = ma_request_vmrk(h.mas, addr, h.es.env).value();
  ASSERT_TRUE(fw_ma_request(h.ps, "MA", req, h.es.env).ok());
  EXPECT_EQ(fw_ma_request(h.ps, "MA", req, h.es.env).code(), "BadCounter");
}

TEST(Ma, ForeignGuestIsReportIdMismatch) {
  MaHost h;
  auto [blk, auth] = h.id_block(kGvmImage, false);
  fw_initialize_gvm(h.ps, "H", "G2", kGvmImage, blk, auth, h.es.env).value();
  fw_finalize_launch(h.ps, "H", nullptr, h.es.env).value();
  auto req = ma_request_vmrk(h.mas, h.ctx("H").addr, h.es.env).value();
  EXPECT_EQ(fw_ma_request(h.ps, "MA", req, h.es.env).code(), "ReportIdMismatch");
}

TEST(Ma, ExportNeedsSwappedGuest) {
  MaHost h;
  auto req = ma_request_export(h.mas, h.ctx("G").addr, h.es.env).value();
  EXPECT_EQ(fw_ma_request(h.ps, "MA", req, h.es.env).code(), "NotSwapped");
}

TEST(Ma, MigratedGuestCannotSwapOut) {
  MaHost src;
  ASSERT_TRUE(fw_swap_out(src.ps, "G", thread_of(src.ctx("G")).state_term(), "IDLE", src.es.env).ok());
  auto rsp0 = src.exchange(ma_request_export(src.mas, src.ctx("G").addr, src.es.env));
  ASSERT_TRUE(rsp0.ok()) << rsp0.code();
  ASSERT_EQ(src.ch.queues.size(), 1u);
  EXPECT_TRUE(src.ctx("G").freed);

  // import the exported context into a second platform that shares the fresh source
  PlatformState dst;
  dst.pl = pl_create(src.kds, "P2", "v1", src.es.env).value();
  GuestContext ma2 = fw_launch_ma(dst, "MA2", "MA2", kMaImage, src.es.env).value();
  MaState m2;
  m2.vmpck = ma2.vmpck;
  m2.imageTid = ma2.imageTid;
  m2.peerImageTid = src.mas.imageTid;
  src.ch.pairs.insert({src.mas.imageTid, m2.imageTid});
  src.ch.pairs.insert({m2.imageTid, src.mas.imageTid});
  src.ch.queues[{src.mas.imageTid, m2.imageTid}] = src.ch.queues.begin()->second;
  auto req = ma_receive_ctx_and_import(m2, src.ch, src.es.env).value();
  auto rsp = fw_ma_request(dst, "MA2", req, src.es.env);
  ASSERT_TRUE(rsp.ok()) << rsp.code();
  ASSERT_EQ(dst.contexts.size(), 2u);
  std::string name;
  for (auto& [n, c] : dst.contexts)
    if (!c.isMa) name = n;
  EXPECT_TRUE(dst.contexts[name].isMig);
  EXPECT_EQ(fw_swap_out(dst, name, thread_of(dst.contexts[name]).state_term(), "IDLE", src.es.env).code(), "MigratedGuest");
}

TEST(Ma, MitigationFlagsImportFromHigherTcb) {
  for (bool mitigation : {false, true}) {
    Host h("v_high");
    h.es.env.flags.mitigation = mitigation;
    h.es.env.tcbOrder = {"v_low", "v_high"};
    GuestContext ma = fw_launch_ma(h.ps, "MA", "MA1", kMaImage, h.es.env).value();
    auto g = h.launch("G", true, &ma);
    g.launchTcb = "v_high";

    PlatformState low;
    low.pl = pl_create(h.kds, "P2", "v_low", h.es.env).value();
    GuestContext ma2 = fw_launch_ma(low, "MA2", "MA2", kMaImage, h.es.env).value();
    Term addr = h.es.fresh.next();
    Term body = pair(context_term(g), addr);
    Term req = snenc(pair(pub(tag::ImportReq), body), N(1), ma2.vmpck);
    ASSERT_TRUE(fw_ma_request(low, "MA2", req, h.es.env).ok());
    auto* imported = low.find_addr(addr);
    ASSERT_NE(imported, nullptr);
    EXPECT_EQ(imported->migrationEnabled, mitigation);
  }
}

TEST(Ma, WrongMaTagIsRejected) {
  MaHost h;
  Term req = snenc(pair(pub(tag::ReportReq), pub("x")), N(1), h.ma.vmpck);
  EXPECT_EQ(fw_ma_request(h.ps, "MA", req, h.es.env).code(), "WrongTag");
}

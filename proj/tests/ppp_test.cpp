#include <gtest/gtest.h>

#include <random>

#include "swforge/digest.hpp"
#include "swforge/ppp.hpp"

namespace swforge::ppp {
namespace {

// Frames exchanged instantly between two links until both are quiet.
struct Link2 {
  PppLink si;
  PppLink sc;
  std::vector<Frame> si_sent, sc_sent;
  std::vector<Phase> si_phases, sc_phases;
  std::vector<LinkFailed> si_failed, sc_failed;
  int si_up = 0, sc_up = 0;

  Link2(PppConfig si_cfg, PppConfig sc_cfg) : si(Role::SI, seeded(si_cfg, 101)), sc(Role::SC, seeded(sc_cfg, 202)) {}

  static PppConfig seeded(PppConfig c, std::uint64_t s) {
    c.seed = s;
    return c;
  }

  void record(bool from_si, const Output& o) {
    for (auto& e : o.events) {
      if (auto* p = std::get_if<PhaseChanged>(&e)) (from_si ? si_phases : sc_phases).push_back(p->phase);
      if (auto* f = std::get_if<LinkFailed>(&e)) (from_si ? si_failed : sc_failed).push_back(*f);
      if (std::holds_alternative<LinkUp>(e)) ++(from_si ? si_up : sc_up);
    }
    auto& log = from_si ? si_sent : sc_sent;
    log.insert(log.end(), o.frames.begin(), o.frames.end());
  }

  void pump(Output a, Output b, SimTime now) {
    record(true, a);
    record(false, b);
    std::vector<Frame> to_sc = a.frames, to_si = b.frames;
    for (int guard = 0; guard < 1000 && (!to_sc.empty() || !to_si.empty()); ++guard) {
      std::vector<Frame> next_sc, next_si;
      for (auto& f : to_sc) {
        auto o = sc.receive(f, now);
        record(false, o);
        next_si.insert(next_si.end(), o.frames.begin(), o.frames.end());
      }
      for (auto& f : to_si) {
        auto o = si.receive(f, now);
        record(true, o);
        next_sc.insert(next_sc.end(), o.frames.begin(), o.frames.end());
      }
      to_sc = std::move(next_sc);
      to_si = std::move(next_si);
    }
  }

  void run(SimTime now = SimTime{0}) { pump(si.open(now), sc.open(now), now); }

  static int count(const std::vector<Frame>& frames, std::uint16_t proto, std::uint8_t code) {
    int n = 0;
    for (auto& f : frames) {
      if (f.protocol == proto && decode_cp(f.payload).code == code) ++n;
    }
    return n;
  }
};

Authorizer accept_all() {
  return [](const AuthRequest&) { return AuthDecision{true, "ok", std::nullopt, std::nullopt}; };
}

Authorizer chap_with(std::string secret, AuthDecision on_success = {true, "ok", {}, {}}) {
  return [secret, on_success](const AuthRequest& r) {
    if (!r.chap) return on_success;
    if (chap_md5(r.chap->id, secret, r.chap->challenge) != r.chap->response) {
      return AuthDecision{false, "bad response", {}, {}};
    }
    return on_success;
  };
}

TEST(PppMtu, Anchors) {
  // Transport header sums: IPv4 20 + UDP 8 + L2TP 8 + PPP 4 = 40; IPv6 adds 20.
  EXPECT_EQ(compute_ppp_mtu(1500, Af::V4, false), 1500u - (20 + 8 + 8 + 4));
  EXPECT_EQ(compute_ppp_mtu(1500, Af::V4, false), 1460u);
  EXPECT_EQ(compute_ppp_mtu(1500, Af::V6, false), 1440u);
  EXPECT_EQ(compute_ppp_mtu(1500, Af::V4, true), 1462u);
  EXPECT_EQ(compute_ppp_mtu(576, Af::V4, false), 536u);
}

TEST(PppMtu, TooSmall) {
  try {
    compute_ppp_mtu(100, Af::V4, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MtuTooSmall);
  }
}

TEST(PppMtu, MonotoneInEachComponent) {
  for (std::size_t link = 577; link < 9000; ++link) {
    for (Af af : {Af::V4, Af::V6}) {
      for (bool acfc : {false, true}) {
        EXPECT_EQ(compute_ppp_mtu(link, af, acfc), compute_ppp_mtu(link - 1, af, acfc) + 1);
      }
      EXPECT_GT(compute_ppp_mtu(link, af, true), compute_ppp_mtu(link, af, false));
    }
    EXPECT_GT(compute_ppp_mtu(link, Af::V4, false), compute_ppp_mtu(link, Af::V6, false));
  }
}

TEST(Lcp, DefaultsConvergeInOneExchange) {
  Link2 l({}, {});
  l.run();
  EXPECT_EQ(l.si.phase(), Phase::Up);
  EXPECT_EQ(l.sc.phase(), Phase::Up);
  EXPECT_EQ(Link2::count(l.si_sent, proto::kLcp, code::kConfigureRequest), 1);
  EXPECT_EQ(Link2::count(l.sc_sent, proto::kLcp, code::kConfigureRequest), 1);
  EXPECT_EQ(Link2::count(l.si_sent, proto::kLcp, code::kConfigureAck), 1);
  EXPECT_EQ(Link2::count(l.sc_sent, proto::kLcp, code::kConfigureAck), 1);
  EXPECT_EQ(l.si.mtu(), 1460u);
  EXPECT_EQ(l.si.peer_mru(), 1460);
  EXPECT_FALSE(l.si.acfc_accepted());
  EXPECT_FALSE(l.si.chap_selected());
  EXPECT_EQ(l.si_up, 1);
  EXPECT_EQ(l.sc_up, 1);
}

TEST(Lcp, AcfcRejectedByPolicy) {
  PppConfig si, sc;
  si.request_acfc = true;
  sc.accept_acfc = false;
  Link2 l(si, sc);
  l.run();
  EXPECT_EQ(Link2::count(l.sc_sent, proto::kLcp, code::kConfigureReject), 1);
  bool listed_acfc = false;
  for (auto& f : l.sc_sent) {
    auto p = decode_cp(f.payload);
    if (f.protocol == proto::kLcp && p.code == code::kConfigureReject) {
      auto opts = decode_options(p.data);
      ASSERT_EQ(opts.size(), 1u);
      listed_acfc = opts[0].type == lcp_opt::kAcfc;
    }
  }
  EXPECT_TRUE(listed_acfc);
  EXPECT_EQ(l.si.phase(), Phase::Up);
  EXPECT_FALSE(l.si.acfc_accepted());
  EXPECT_FALSE(l.sc.acfc_accepted());
}

TEST(Lcp, AcfcAcceptedChangesLedgerOnly) {
  PppConfig si;
  si.request_acfc = true;
  Link2 l(si, {});
  l.run();
  EXPECT_TRUE(l.si.acfc_accepted());
  EXPECT_TRUE(l.sc.acfc_accepted());
  EXPECT_EQ(l.si.mtu(), 1460u);  // bounded by the peer's MRU
}

TEST(Lcp, DivergesAfterTenRequests) {
  PppLink si(Role::SI, {});
  auto out = si.open(SimTime{0});
  int requests = 1;
  std::optional<LinkFailed> failure;
  while (auto t = si.next_deadline()) {
    auto o = si.on_timer(*t);
    requests += Link2::count(o.frames, proto::kLcp, code::kConfigureRequest);
    for (auto& e : o.events) {
      if (auto* f = std::get_if<LinkFailed>(&e)) failure = *f;
    }
  }
  EXPECT_EQ(requests, 10);
  ASSERT_TRUE(failure);
  EXPECT_EQ(failure->code, Errc::NegotiationDiverged);
  EXPECT_EQ(si.phase(), Phase::Dead);
}

TEST(Lcp, EchoReplyCarriesOwnMagic) {
  Link2 l({}, {});
  l.run();
  auto out = l.si.receive(Frame{proto::kLcp, encode_cp({code::kEchoRequest, 9, {0, 0, 0, 7}})}, SimTime{0});
  ASSERT_EQ(out.frames.size(), 1u);
  auto p = decode_cp(out.frames[0].payload);
  EXPECT_EQ(p.code, code::kEchoReply);
  EXPECT_EQ(p.id, 9);
  EXPECT_EQ(ByteReader(p.data).u32(), l.si.magic());
}

TEST(Chap, MatchingSecrets) {
  PppConfig si, sc;
  si.user_name = "alice";
  si.secret = "wonderland";
  sc.require_chap = true;
  sc.authorize = chap_with("wonderland");
  Link2 l(si, sc);
  l.run();
  EXPECT_TRUE(l.si.chap_selected());
  EXPECT_TRUE(l.sc.chap_selected());
  EXPECT_EQ(l.si.phase(), Phase::Up);
  EXPECT_EQ(l.sc.phase(), Phase::Up);
  EXPECT_EQ(l.sc.peer_name(), "alice");
  EXPECT_EQ(l.si_phases, (std::vector<Phase>{Phase::LcpNegotiating, Phase::Authenticating,
                                             Phase::NcpNegotiating, Phase::Up}));
  EXPECT_EQ(l.sc_phases, l.si_phases);

  // The response on the wire is MD5 over id || secret || challenge.
  Bytes challenge;
  std::uint8_t id = 0;
  for (auto& f : l.sc_sent) {
    auto p = decode_cp(f.payload);
    if (f.protocol == proto::kChap && p.code == chap_code::kChallenge) {
      challenge = decode_chap_value(p.data).value;
      id = p.id;
    }
  }
  ASSERT_EQ(challenge.size(), 16u);
  Bytes concat{id};
  for (char c : std::string("wonderland")) concat.push_back(static_cast<std::uint8_t>(c));
  concat.insert(concat.end(), challenge.begin(), challenge.end());
  bool seen = false;
  for (auto& f : l.si_sent) {
    auto p = decode_cp(f.payload);
    if (f.protocol == proto::kChap && p.code == chap_code::kResponse) {
      auto v = decode_chap_value(p.data);
      EXPECT_EQ(v.value, md5(concat));
      EXPECT_EQ(v.name, "alice");
      seen = true;
    }
  }
  EXPECT_TRUE(seen);
  EXPECT_EQ(Link2::count(l.sc_sent, proto::kChap, chap_code::kSuccess), 1);
}

TEST(Chap, MismatchedSecretFails) {
  PppConfig si, sc;
  si.user_name = "alice";
  si.secret = "guess";
  sc.require_chap = true;
  sc.authorize = chap_with("wonderland");
  Link2 l(si, sc);
  l.run();
  EXPECT_EQ(Link2::count(l.sc_sent, proto::kChap, chap_code::kFailure), 1);
  ASSERT_EQ(l.sc_failed.size(), 1u);
  EXPECT_EQ(l.sc_failed[0].code, Errc::AuthFailed);
  ASSERT_EQ(l.si_failed.size(), 1u);
  EXPECT_EQ(l.si_failed[0].code, Errc::AuthFailed);
  EXPECT_EQ(l.si.phase(), Phase::Dead);
  EXPECT_EQ(l.sc.phase(), Phase::Dead);
}

TEST(Chap, SiWithoutSecretRejectsAuth) {
  PppConfig sc;
  sc.require_chap = true;
  sc.authorize = accept_all();
  Link2 l({}, sc);
  l.run();
  ASSERT_EQ(l.sc_failed.size(), 1u);
  EXPECT_EQ(l.sc_failed[0].code, Errc::AuthFailed);
}

TEST(Chap, DisabledSkipsAuthenticationButAuthorizes) {
  PppConfig sc;
  sc.peer_hint = "si.example";
  std::optional<AuthRequest> seen;
  sc.authorize = [&](const AuthRequest& r) {
    seen = r;
    return AuthDecision{true, "ok", {}, {}};
  };
  Link2 l({}, sc);
  l.run();
  EXPECT_EQ(l.si_phases, (std::vector<Phase>{Phase::LcpNegotiating, Phase::NcpNegotiating, Phase::Up}));
  ASSERT_TRUE(seen);
  EXPECT_EQ(seen->name, "si.example");
  EXPECT_FALSE(seen->chap);
}

TEST(Chap, AuthorizationRejectedWithoutChap) {
  PppConfig sc;
  sc.authorize = [](const AuthRequest&) { return AuthDecision{false, "unknown", {}, {}}; };
  Link2 l({}, sc);
  l.run();
  ASSERT_EQ(l.sc_failed.size(), 1u);
  EXPECT_EQ(l.sc_failed[0].code, Errc::AuthFailed);
}

TEST(Ipv6cp, DistinctIdsAckedDirectly) {
  PppConfig si, sc;
  si.iid = 0xA;
  sc.iid = 0xB;
  Link2 l(si, sc);
  l.run();
  EXPECT_EQ(l.si.local_iid(), 0xAu);
  EXPECT_EQ(l.si.remote_iid(), 0xBu);
  EXPECT_EQ(l.sc.remote_iid(), 0xAu);
  EXPECT_EQ(Link2::count(l.si_sent, proto::kIpv6cp, code::kConfigureNak), 0);
  EXPECT_EQ(Link2::count(l.sc_sent, proto::kIpv6cp, code::kConfigureNak), 0);
}

TEST(Ipv6cp, CollisionResolvedDeterministically) {
  PppConfig si, sc;
  si.iid = 0x1111;
  sc.iid = 0x1111;
  Link2 l(si, sc);
  l.run();
  ASSERT_EQ(l.si.phase(), Phase::Up);
  EXPECT_NE(l.si.local_iid(), l.sc.local_iid());
  EXPECT_EQ(l.sc.local_iid(), 0x1111u);
  EXPECT_EQ(l.si.local_iid(), 0x1112u);
  EXPECT_EQ(l.si.remote_iid(), l.sc.local_iid());
  EXPECT_EQ(l.sc.remote_iid(), l.si.local_iid());
}

TEST(Ipv6cp, AaaInterfaceIdUsedBySc) {
  PppConfig sc;
  sc.iid = 0x99;
  sc.authorize = [](const AuthRequest&) { return AuthDecision{true, "ok", {}, 0x0200'0000'0000'0042ULL}; };
  Link2 l({}, sc);
  l.run();
  bool carried = false;
  for (auto& f : l.sc_sent) {
    auto p = decode_cp(f.payload);
    if (f.protocol == proto::kIpv6cp && p.code == code::kConfigureRequest) {
      auto opts = decode_options(p.data);
      carried = opts.size() == 1 && ByteReader(opts[0].data).u64() == 0x0200'0000'0000'0042ULL;
    }
  }
  EXPECT_TRUE(carried);
  EXPECT_EQ(l.si.remote_iid(), 0x0200'0000'0000'0042ULL);
}

TEST(Ipv6cp, ExhaustedWhenNeitherSideYields) {
  PppConfig si, sc;
  si.iid = 7;
  si.iid_fixed = true;
  sc.iid = 7;
  Link2 l(si, sc);
  l.run();
  bool exhausted = false;
  for (auto& f : l.si_failed) exhausted |= f.code == Errc::IidExhausted;
  for (auto& f : l.sc_failed) exhausted |= f.code == Errc::IidExhausted;
  EXPECT_TRUE(exhausted);
}

TEST(Ipv6cp, ZeroIdIsNakd) {
  PppConfig si;
  si.iid = 0;
  Link2 l(si, {});
  l.run();
  EXPECT_EQ(l.si.phase(), Phase::Up);
  EXPECT_NE(l.si.local_iid(), 0u);
}

TEST(Ipcp, AaaAddressWins) {
  PppConfig si, sc;
  si.payload_af = sc.payload_af = Af::V4;
  sc.authorize = [](const AuthRequest&) {
    return AuthDecision{true, "ok", Ipv4Addr::parse("192.0.2.10"), {}};
  };
  sc.allocate_ipv4 = [] { return std::optional<Ipv4Addr>(Ipv4Addr::parse("198.51.100.1")); };
  Link2 l(si, sc);
  l.run();
  ASSERT_EQ(l.si.phase(), Phase::Up);
  EXPECT_EQ(l.si.local_ipv4()->str(), "192.0.2.10");
  EXPECT_EQ(l.sc.peer_ipv4()->str(), "192.0.2.10");
  EXPECT_EQ(l.si.ncp(), Ncp::Ipcp);
}

TEST(Ipcp, PoolAddressWhenNoAaa) {
  PppConfig si, sc;
  si.payload_af = sc.payload_af = Af::V4;
  sc.allocate_ipv4 = [] { return std::optional<Ipv4Addr>(Ipv4Addr::parse("198.51.100.1")); };
  Link2 l(si, sc);
  l.run();
  EXPECT_EQ(l.si.local_ipv4()->str(), "198.51.100.1");
}

TEST(Ipcp, PoolExhausted) {
  PppConfig si, sc;
  si.payload_af = sc.payload_af = Af::V4;
  sc.allocate_ipv4 = [] { return std::optional<Ipv4Addr>(); };
  Link2 l(si, sc);
  l.run();
  ASSERT_EQ(l.sc_failed.size(), 1u);
  EXPECT_EQ(l.sc_failed[0].code, Errc::PoolExhausted);
}

TEST(Ipcp, DnsServedWhenRequested) {
  PppConfig si, sc;
  si.payload_af = sc.payload_af = Af::V4;
  si.request_dns = true;
  sc.dns_servers = {Ipv4Addr::parse("192.0.2.53"), Ipv4Addr::parse("192.0.2.54")};
  sc.allocate_ipv4 = [] { return std::optional<Ipv4Addr>(Ipv4Addr::parse("10.0.0.2")); };
  Link2 l(si, sc);
  l.run();
  ASSERT_EQ(l.si.dns().size(), 2u);
  EXPECT_EQ(l.si.dns()[0].str(), "192.0.2.53");
  EXPECT_EQ(l.si.dns()[1].str(), "192.0.2.54");
}

TEST(Ipcp, DnsRejectedWhenNotConfigured) {
  PppConfig si, sc;
  si.payload_af = sc.payload_af = Af::V4;
  si.request_dns = true;
  sc.allocate_ipv4 = [] { return std::optional<Ipv4Addr>(Ipv4Addr::parse("10.0.0.2")); };
  Link2 l(si, sc);
  l.run();
  EXPECT_EQ(l.si.phase(), Phase::Up);
  EXPECT_TRUE(l.si.dns().empty());
  EXPECT_EQ(l.si.local_ipv4()->str(), "10.0.0.2");
}

TEST(Ncp, OtherFamilyIsProtocolRejected) {
  Link2 l({}, {});
  l.run();
  auto out = l.si.receive(Frame{proto::kIpcp, encode_cp({code::kConfigureRequest, 1, {}})}, SimTime{0});
  ASSERT_EQ(out.frames.size(), 1u);
  EXPECT_EQ(out.frames[0].protocol, proto::kLcp);
  EXPECT_EQ(decode_cp(out.frames[0].payload).code, code::kProtocolReject);
}

TEST(Echo, LinkDeadAfterThreeMissed) {
  PppConfig si;
  si.echo_enabled = true;
  si.echo_interval = std::chrono::seconds(30);
  Link2 l(si, {});
  l.run();
  ASSERT_EQ(l.si.phase(), Phase::Up);
  std::vector<double> echo_times;
  std::optional<double> dead_at;
  while (auto t = l.si.next_deadline()) {
    auto o = l.si.on_timer(*t);
    if (Link2::count(o.frames, proto::kLcp, code::kEchoRequest)) echo_times.push_back(to_seconds(*t));
    for (auto& e : o.events) {
      if (auto* f = std::get_if<LinkFailed>(&e)) {
        EXPECT_EQ(f->code, Errc::LinkDead);
        dead_at = to_seconds(*t);
      }
    }
  }
  EXPECT_EQ(echo_times, (std::vector<double>{30, 60, 90}));
  ASSERT_TRUE(dead_at);
  EXPECT_DOUBLE_EQ(*dead_at, 120);
}

TEST(Echo, AnsweredEchoesKeepLinkUp) {
  PppConfig si;
  si.echo_enabled = true;
  si.echo_interval = std::chrono::seconds(10);
  Link2 l(si, {});
  l.run();
  for (int i = 0; i < 20; ++i) {
    auto t = *l.si.next_deadline();
    l.pump(l.si.on_timer(t), {}, t);
  }
  EXPECT_EQ(l.si.phase(), Phase::Up);
}

TEST(Echo, IntervalBelowMinimumRejected) {
  PppConfig c;
  c.echo_enabled = true;
  c.echo_interval = std::chrono::seconds(5);
  EXPECT_THROW(PppLink(Role::SI, c), Error);
}

TEST(Properties, PhaseMonotoneAndSingleNcp) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    PppConfig si, sc;
    si.payload_af = sc.payload_af = rng() % 2 ? Af::V4 : Af::V6;
    si.request_acfc = rng() % 2;
    sc.accept_acfc = rng() % 2;
    if (rng() % 2) {
      si.secret = "s";
      sc.require_chap = true;
      sc.authorize = chap_with("s");
    }
    sc.allocate_ipv4 = [] { return std::optional<Ipv4Addr>(Ipv4Addr::parse("10.1.1.1")); };
    si.iid = rng() % 4;
    sc.iid = rng() % 4 + 1;
    Link2 l(Link2::seeded(si, rng()), Link2::seeded(sc, rng()));
    l.run();
    ASSERT_EQ(l.si.phase(), Phase::Up) << i;
    ASSERT_EQ(l.sc.phase(), Phase::Up) << i;
    for (auto* phases : {&l.si_phases, &l.sc_phases}) {
      for (std::size_t k = 1; k < phases->size(); ++k) EXPECT_LT((*phases)[k - 1], (*phases)[k]);
    }
    const auto other = si.payload_af == Af::V6 ? proto::kIpcp : proto::kIpv6cp;
    for (auto& f : l.si_sent) EXPECT_NE(f.protocol, other);
    for (auto& f : l.sc_sent) EXPECT_NE(f.protocol, other);
    if (si.payload_af == Af::V6) {
      EXPECT_NE(l.si.local_iid(), *l.si.remote_iid());
    } else {
      EXPECT_TRUE(l.si.local_ipv4());
    }
  }
}

}  // namespace
}  // namespace swforge::ppp

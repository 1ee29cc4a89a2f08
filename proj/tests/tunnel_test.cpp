#include <gtest/gtest.h>

#include <algorithm>

#include "swforge/digest.hpp"
#include "swforge/tunnel.hpp"

namespace swforge::tunnel {
namespace {

using l2tp::AvpType;
using l2tp::ControlMessage;
using l2tp::MessageType;

std::vector<ControlMessage> sent(const Actions& acts, bool include_zlb = false) {
  std::vector<ControlMessage> out;
  for (auto& a : acts) {
    if (auto* s = std::get_if<SendControl>(&a)) {
      if (include_zlb || s->message.type != MessageType::ZLB) out.push_back(s->message);
    }
  }
  return out;
}

std::vector<Bytes> wires(const Actions& acts) {
  std::vector<Bytes> out;
  for (auto& a : acts) {
    if (auto* s = std::get_if<SendControl>(&a)) out.push_back(s->wire);
  }
  return out;
}

std::uint16_t result_of(const ControlMessage& m) {
  auto& v = m.find(AvpType::ResultCode)->value;
  return static_cast<std::uint16_t>((v.at(0) << 8) | v.at(1));
}

template <typename T>
const T* find_action(const Actions& acts) {
  for (auto& a : acts) {
    if (auto* t = std::get_if<T>(&a)) return t;
  }
  return nullptr;
}

std::vector<std::uint16_t> avp_types(const ControlMessage& m) {
  std::vector<std::uint16_t> out;
  for (auto& a : m.avps) out.push_back(a.attribute_type);
  std::sort(out.begin(), out.end());
  return out;
}

// Two endpoints joined by an instantaneous lossless wire that carries the
// encoded bytes, so every exchange also exercises the codec.
struct Pair {
  TunnelEndpoint si;
  TunnelEndpoint sc;
  std::vector<MessageType> log;  // non-ZLB control messages in delivery order

  Pair(TunnelConfig si_cfg = {}, TunnelConfig sc_cfg = {})
      : si(Role::SI, with_seed(std::move(si_cfg), 11)), sc(Role::SC, with_seed(std::move(sc_cfg), 22)) {}

  static TunnelConfig with_seed(TunnelConfig c, std::uint64_t seed) {
    c.seed = seed;
    return c;
  }

  // Delivers everything until both sides are quiet.
  void pump(Actions from_si, Actions from_sc, SimTime now) {
    while (!from_si.empty() || !from_sc.empty()) {
      Actions next_sc, next_si;
      for (auto& w : wires(from_si)) deliver(sc, w, now, next_sc);
      for (auto& w : wires(from_sc)) deliver(si, w, now, next_si);
      from_si = std::move(next_si);
      from_sc = std::move(next_sc);
    }
  }

  void deliver(TunnelEndpoint& to, const Bytes& wire, SimTime now, Actions& out) {
    auto msg = l2tp::decode_message(wire);
    if (msg.type != MessageType::ZLB) log.push_back(msg.type);
    auto acts = to.handle_control(msg, now);
    collect(acts);
    out.insert(out.end(), acts.begin(), acts.end());
  }

  void collect(const Actions& acts) {
    for (auto& a : acts) {
      if (std::holds_alternative<SessionUp>(a)) ++session_ups;
      if (auto* d = std::get_if<TunnelDown>(&a)) downs.push_back(d->reason);
    }
  }

  void establish(SimTime now = SimTime{0}) { pump(si.si_start(now), {}, now); }

  int session_ups = 0;
  std::vector<DownReason> downs;
};

TEST(ChallengeResponse, MatchesIndependentDigest) {
  Bytes challenge(16);
  for (int i = 0; i < 16; ++i) challenge[i] = static_cast<std::uint8_t>(i);
  EXPECT_EQ(to_hex(compute_response("swordfish", challenge, MessageType::SCCRP)),
            "faa4a2b9e523c8a448f27141ad00fecb");
  EXPECT_EQ(to_hex(compute_response("swordfish", challenge, MessageType::SCCCN)),
            "1ca4d0419d62a0e2febb634715a444b7");
  EXPECT_EQ(to_hex(md5({})), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_EQ(to_hex(chap_md5(1, "pw", Bytes(16, 0xaa))), "cf23a764a02342f2cedced0ca604c2eb");
}

TEST(SiStart, DefaultSccrqCarriesExactlyRequiredAvps) {
  TunnelEndpoint si(Role::SI, {});
  auto acts = si.si_start(SimTime{0});
  auto msgs = sent(acts);
  ASSERT_EQ(msgs.size(), 1u);
  auto& m = msgs[0];
  EXPECT_EQ(m.type, MessageType::SCCRQ);
  EXPECT_EQ(m.avps.size(), 5u);
  for (auto t : l2tp::required_avps(MessageType::SCCRQ)) EXPECT_NE(m.find(t), nullptr);
  EXPECT_EQ(m.find(AvpType::FramingCapabilities)->as_u32(), 0x3u);
  EXPECT_EQ(m.find(AvpType::ProtocolVersion)->as_u16(), 0x0100);
  EXPECT_EQ(m.header.tunnel_id, 0);
  EXPECT_EQ(si.cc_state(), CcState::WaitCtlReply);
  EXPECT_NE(si.local_tunnel_id(), 0);
}

TEST(SiStart, OptionalAvpsWhenConfigured) {
  TunnelConfig cfg;
  cfg.receive_window = 4;
  cfg.vendor_name = "acme";
  cfg.secret = "s";
  TunnelEndpoint si(Role::SI, cfg);
  auto m = sent(si.si_start(SimTime{0}))[0];
  ASSERT_NE(m.find(AvpType::ReceiveWindowSize), nullptr);
  EXPECT_EQ(m.find(AvpType::ReceiveWindowSize)->as_u16(), 4);
  EXPECT_EQ(m.find(AvpType::VendorName)->as_text(), "acme");
  EXPECT_EQ(m.find(AvpType::Challenge)->value.size(), 16u);
  for (auto& a : m.avps) {
    EXPECT_NE(l2tp::classify_avp(m.type, a), l2tp::Relevance::NotRelevant) << a.attribute_type;
  }
}

TEST(SiStart, RejectedForScOrTwice) {
  TunnelEndpoint sc(Role::SC, {});
  EXPECT_THROW(sc.si_start(SimTime{0}), Error);
  TunnelEndpoint si(Role::SI, {});
  si.si_start(SimTime{0});
  EXPECT_THROW(si.si_start(SimTime{0}), Error);
}

TEST(Establishment, SequenceAndState) {
  Pair p;
  p.establish();
  EXPECT_EQ(p.log, (std::vector<MessageType>{MessageType::SCCRQ, MessageType::SCCRP, MessageType::SCCCN,
                                             MessageType::ICRQ, MessageType::ICRP, MessageType::ICCN}));
  EXPECT_EQ(p.si.cc_state(), CcState::Established);
  EXPECT_EQ(p.sc.cc_state(), CcState::Established);
  EXPECT_EQ(p.si.session_state(), SessionState::Established);
  EXPECT_EQ(p.sc.session_state(), SessionState::Established);
  EXPECT_EQ(p.session_ups, 2);
  EXPECT_EQ(p.si.remote_tunnel_id(), p.sc.local_tunnel_id());
  EXPECT_EQ(p.sc.remote_tunnel_id(), p.si.local_tunnel_id());
  EXPECT_EQ(p.si.remote_session_id(), p.sc.local_session_id());
  EXPECT_EQ(p.sc.remote_session_id(), p.si.local_session_id());
  EXPECT_EQ(p.si.outstanding(), 0u);
  EXPECT_EQ(p.sc.outstanding(), 0u);
  EXPECT_EQ(p.sc.peer_host_name(), "lcce");
}

TEST(Establishment, EveryMessageHasRequiredAndNoIrrelevantAvps) {
  TunnelEndpoint si(Role::SI, Pair::with_seed({}, 3));
  TunnelEndpoint sc(Role::SC, Pair::with_seed({}, 4));
  std::vector<ControlMessage> all;
  Actions a = si.si_start(SimTime{0});
  for (int round = 0; round < 10; ++round) {
    Actions b;
    for (auto& m : sent(a, true)) {
      all.push_back(m);
      auto r = sc.handle_control(m, SimTime{0});
      b.insert(b.end(), r.begin(), r.end());
    }
    a.clear();
    for (auto& m : sent(b, true)) {
      all.push_back(m);
      auto r = si.handle_control(m, SimTime{0});
      a.insert(a.end(), r.begin(), r.end());
    }
  }
  int checked = 0;
  for (auto& m : all) {
    if (m.type == MessageType::ZLB) continue;
    for (auto t : l2tp::required_avps(m.type)) EXPECT_NE(m.find(t), nullptr) << l2tp::to_string(m.type);
    for (auto& avp : m.avps) {
      EXPECT_NE(l2tp::classify_avp(m.type, avp), l2tp::Relevance::NotRelevant);
    }
    ++checked;
  }
  EXPECT_EQ(checked, 6);
}

TEST(Establishment, ScReplyHasItsRequiredAvps) {
  TunnelEndpoint si(Role::SI, {});
  TunnelEndpoint sc(Role::SC, {});
  auto sccrq = sent(si.si_start(SimTime{0}))[0];
  auto reply = sent(sc.handle_control(sccrq, SimTime{0}));
  ASSERT_EQ(reply.size(), 1u);
  EXPECT_EQ(reply[0].type, MessageType::SCCRP);
  EXPECT_EQ(avp_types(reply[0]), (std::vector<std::uint16_t>{0, 2, 3, 7, 9}));
  EXPECT_EQ(sc.cc_state(), CcState::WaitCtlConn);
}

TEST(Establishment, IccnConnectSpeedIgnored) {
  TunnelEndpoint si(Role::SI, Pair::with_seed({}, 5));
  TunnelEndpoint sc(Role::SC, Pair::with_seed({}, 6));
  auto r1 = sent(sc.handle_control(sent(si.si_start(SimTime{0}))[0], SimTime{0}));
  auto r2 = sent(si.handle_control(r1[0], SimTime{0}));  // SCCCN + ICRQ
  ASSERT_EQ(r2.size(), 2u);
  sc.handle_control(r2[0], SimTime{0});
  auto r3 = sent(sc.handle_control(r2[1], SimTime{0}));  // ICRP
  auto r4 = sent(si.handle_control(r3[0], SimTime{0}));  // ICCN
  ASSERT_EQ(r4[0].type, MessageType::ICCN);
  EXPECT_EQ(r4[0].find(AvpType::TxConnectSpeed)->as_u32(), 0u);
  EXPECT_EQ(r4[0].find(AvpType::FramingType)->as_u32(), l2tp::kFramingSync);
  auto iccn = r4[0];
  for (auto& a : iccn.avps) {
    if (a.is(AvpType::TxConnectSpeed)) a.value = {0xff, 0xff, 0xff, 0xff};
  }
  auto acts = sc.handle_control(iccn, SimTime{0});
  EXPECT_NE(find_action<SessionUp>(acts), nullptr);
  EXPECT_EQ(sc.session_state(), SessionState::Established);
}

TEST(Establishment, DeterministicForSeed) {
  auto run = [] {
    Pair p;
    auto acts = p.si.si_start(SimTime{0});
    return wires(acts);
  };
  EXPECT_EQ(run(), run());
}

TEST(Auth, MatchingSecretsEstablish) {
  TunnelConfig c;
  c.secret = "swordfish";
  Pair p(c, c);
  p.establish();
  EXPECT_EQ(p.session_ups, 2);
  EXPECT_TRUE(p.downs.empty());
}

TEST(Auth, MismatchedSecretFailsWithAuthFailure) {
  TunnelConfig a, b;
  a.secret = "one";
  b.secret = "two";
  Pair p(a, b);
  p.establish();
  EXPECT_EQ(p.session_ups, 0);
  ASSERT_FALSE(p.downs.empty());
  EXPECT_EQ(p.downs[0], DownReason::AuthFailure);
  EXPECT_TRUE(p.si.is_down());
}

TEST(Auth, ScDemandsResponseFromSi) {
  TunnelConfig sc_cfg;
  sc_cfg.secret = "x";
  Pair p({}, sc_cfg);  // SI has no secret but is challenged
  p.establish();
  EXPECT_EQ(p.session_ups, 0);
  ASSERT_FALSE(p.downs.empty());
  EXPECT_EQ(p.downs[0], DownReason::AuthFailure);
}

TEST(Violations, OcrqToScIsProtocolViolation) {
  Pair p;
  p.establish();
  auto ocrq = ControlMessage::make(MessageType::OCRQ, p.sc.local_tunnel_id(), 0);
  ocrq.header.ns = p.sc.expected_nr();
  ocrq.header.nr = p.sc.next_ns();
  auto acts = p.sc.handle_control(ocrq, SimTime{0});
  auto down = find_action<TunnelDown>(acts);
  ASSERT_NE(down, nullptr);
  EXPECT_EQ(down->reason, DownReason::ProtocolViolation);
  auto msgs = sent(acts);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].type, MessageType::StopCCN);
  auto* rc = msgs[0].find(AvpType::ResultCode);
  ASSERT_NE(rc, nullptr);
  EXPECT_EQ(result_of(msgs[0]), l2tp::result::kFsmError);
  EXPECT_EQ(msgs[0].find(AvpType::AssignedTunnelId)->as_u16(), p.sc.local_tunnel_id());
}

TEST(Violations, IcrqBeforeScccnIsViolation) {
  TunnelEndpoint si(Role::SI, {});
  TunnelEndpoint sc(Role::SC, {});
  sc.handle_control(sent(si.si_start(SimTime{0}))[0], SimTime{0});
  auto icrq = ControlMessage::make(MessageType::ICRQ, sc.local_tunnel_id(), 0,
                                   {l2tp::Avp::u16(AvpType::AssignedSessionId, 7),
                                    l2tp::Avp::u32(AvpType::CallSerialNumber, 1)});
  icrq.header.ns = 1;
  icrq.header.nr = 1;
  auto acts = sc.handle_control(icrq, SimTime{0});
  ASSERT_NE(find_action<TunnelDown>(acts), nullptr);
  EXPECT_EQ(find_action<TunnelDown>(acts)->reason, DownReason::ProtocolViolation);
}

TEST(Violations, SecondIcrqGetsCdnTunnelSurvives) {
  Pair p;
  p.establish();
  auto icrq = ControlMessage::make(MessageType::ICRQ, p.sc.local_tunnel_id(), 0,
                                   {l2tp::Avp::u16(AvpType::AssignedSessionId, 99),
                                    l2tp::Avp::u32(AvpType::CallSerialNumber, 2)});
  icrq.header.ns = p.sc.expected_nr();
  icrq.header.nr = p.sc.next_ns();
  auto msgs = sent(p.sc.handle_control(icrq, SimTime{0}));
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].type, MessageType::CDN);
  EXPECT_EQ(msgs[0].header.session_id, 99);
  EXPECT_EQ(p.sc.session_state(), SessionState::Established);
  EXPECT_EQ(p.sc.remote_session_id(), p.si.local_session_id());
}

TEST(Violations, MissingRequiredAvp) {
  TunnelEndpoint sc(Role::SC, {});
  auto sccrq = ControlMessage::make(MessageType::SCCRQ, 0, 0,
                                    {l2tp::Avp::u16(AvpType::ProtocolVersion, 0x0100),
                                     l2tp::Avp::u16(AvpType::AssignedTunnelId, 5)});
  sccrq.header.ns = 0;
  sccrq.header.nr = 0;
  auto acts = sc.handle_control(sccrq, SimTime{0});
  ASSERT_NE(find_action<TunnelDown>(acts), nullptr);
  EXPECT_EQ(sent(acts)[0].type, MessageType::StopCCN);
  EXPECT_EQ(sent(acts)[0].header.tunnel_id, 5);
}

TEST(Violations, DecodeErrorUnknownMandatoryUsesErrorCode8) {
  Pair p;
  p.establish();
  auto acts = p.sc.handle_decode_error(Error(Errc::MandatoryUnknownAvp, "x"), SimTime{0});
  auto msgs = sent(acts);
  ASSERT_EQ(msgs.size(), 1u);
  auto& v = msgs[0].find(AvpType::ResultCode)->value;
  ASSERT_GE(v.size(), 4u);
  EXPECT_EQ((v[0] << 8) | v[1], l2tp::result::kGeneralError);
  EXPECT_EQ((v[2] << 8) | v[3], l2tp::error_code::kUnknownMandatoryAvp);
}

TEST(Reliability, DeadPeerAfterEightyThreeSeconds) {
  Pair p;
  p.establish();
  // The SC vanishes. The SI's HELLO fires at 60 s and is retransmitted at
  // 61, 63, 67 and 75 s before the fifth timeout at 83 s.
  std::vector<double> tx_times;
  std::optional<double> down_at;
  DownReason reason{};
  while (auto t = p.si.next_deadline()) {
    auto acts = p.si.on_timer(*t);
    for (auto& m : sent(acts)) {
      EXPECT_EQ(m.type, MessageType::HELLO);
      tx_times.push_back(to_seconds(*t));
    }
    if (auto* d = find_action<TunnelDown>(acts)) {
      down_at = to_seconds(*t);
      reason = d->reason;
    }
  }
  EXPECT_EQ(tx_times, (std::vector<double>{60, 61, 63, 67, 75}));
  ASSERT_TRUE(down_at);
  EXPECT_DOUBLE_EQ(*down_at, 83.0);
  EXPECT_EQ(reason, DownReason::DeadPeer);
  EXPECT_EQ(p.si.cc_state(), CcState::Dead);
  EXPECT_EQ(p.si.stats().retransmits, 4u);
}

TEST(Reliability, DataReceiptPushesHello) {
  Pair p;
  p.establish();
  auto wire = p.sc.encapsulate_frame({ppp::proto::kLcp, {1, 1, 0, 4}}, std::chrono::seconds(59));
  p.si.decapsulate(wire, std::chrono::seconds(59));
  ASSERT_TRUE(p.si.next_deadline());
  EXPECT_EQ(*p.si.next_deadline(), std::chrono::seconds(119));
}

TEST(Reliability, HelloDisabled) {
  TunnelConfig c;
  c.keepalive.hello_interval = Duration::zero();
  Pair p(c, c);
  p.establish();
  EXPECT_FALSE(p.si.next_deadline());
}

TEST(Reliability, HelloAckedKeepsTunnelUp) {
  Pair p;
  p.establish();
  for (int i = 0; i < 5; ++i) {
    auto t = *p.si.next_deadline();
    auto hello = p.si.on_timer(t);
    ASSERT_EQ(sent(hello).size(), 1u);
    p.pump(hello, {}, t);
  }
  EXPECT_EQ(p.si.cc_state(), CcState::Established);
  EXPECT_EQ(*p.si.next_deadline(), std::chrono::seconds(360));
}

TEST(Reliability, LostMessageRetransmittedThenAcked) {
  TunnelEndpoint si(Role::SI, {});
  TunnelEndpoint sc(Role::SC, {});
  auto first = si.si_start(SimTime{0});  // lost
  ASSERT_EQ(*si.next_deadline(), std::chrono::seconds(1));
  auto again = si.on_timer(std::chrono::seconds(1));
  auto msgs = sent(again);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].header.ns, sent(first)[0].header.ns);
  EXPECT_TRUE(std::get<SendControl>(again[0]).retransmission);
  auto reply = sc.handle_control(msgs[0], std::chrono::seconds(1));
  si.handle_control(sent(reply)[0], std::chrono::seconds(1));
  EXPECT_EQ(si.cc_state(), CcState::Established);
}

TEST(Reliability, DuplicateIsReAckedWithZlb) {
  TunnelEndpoint si(Role::SI, {});
  TunnelEndpoint sc(Role::SC, {});
  auto sccrq = sent(si.si_start(SimTime{0}))[0];
  sc.handle_control(sccrq, SimTime{0});
  auto dup = sent(sc.handle_control(sccrq, SimTime{0}), true);
  ASSERT_EQ(dup.size(), 1u);
  EXPECT_EQ(dup[0].type, MessageType::ZLB);
  EXPECT_EQ(dup[0].header.nr, 1);
  EXPECT_EQ(sc.cc_state(), CcState::WaitCtlConn);
}

TEST(Reliability, SequenceNumbersIncrementZlbDoesNot) {
  Pair p;
  p.establish();
  // SI sent SCCRQ, SCCCN, ICRQ, ICCN; SC sent SCCRP, ICRP.
  EXPECT_EQ(p.si.next_ns(), 4);
  EXPECT_EQ(p.sc.next_ns(), 2);
  EXPECT_EQ(p.si.expected_nr(), 2);
  EXPECT_EQ(p.sc.expected_nr(), 4);
}

TEST(Reliability, OutOfOrderDropped) {
  Pair p;
  p.establish();
  auto hello = ControlMessage::make(MessageType::HELLO, p.sc.local_tunnel_id(), 0);
  hello.header.ns = static_cast<std::uint16_t>(p.sc.expected_nr() + 1);
  hello.header.nr = p.sc.next_ns();
  auto acts = p.sc.handle_control(hello, SimTime{0});
  EXPECT_TRUE(sent(acts, true).empty());
  EXPECT_EQ(p.sc.expected_nr(), 4);
}

TEST(Reliability, WindowLimitsInFlight) {
  TunnelConfig c;
  c.receive_window = 1;
  Pair p({}, c);
  auto sccrq = sent(p.si.si_start(SimTime{0}))[0];
  auto sccrp = sent(p.sc.handle_control(sccrq, SimTime{0}))[0];
  auto acts = p.si.handle_control(sccrp, SimTime{0});
  auto msgs = sent(acts);
  ASSERT_EQ(msgs.size(), 1u);  // SCCCN only; ICRQ waits for window space
  EXPECT_EQ(msgs[0].type, MessageType::SCCCN);
  EXPECT_EQ(p.si.outstanding(), 2u);
  auto zlb = sent(p.sc.handle_control(msgs[0], SimTime{0}), true);
  ASSERT_EQ(zlb[0].type, MessageType::ZLB);
  auto next = sent(p.si.handle_control(zlb[0], SimTime{0}));
  ASSERT_EQ(next.size(), 1u);
  EXPECT_EQ(next[0].type, MessageType::ICRQ);
}

TEST(Teardown, AdminSendsStopCcnOnceAndIsIdempotent) {
  Pair p;
  p.establish();
  auto acts = p.si.teardown(DownReason::Admin, SimTime{0});
  auto msgs = sent(acts);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].type, MessageType::StopCCN);
  EXPECT_EQ(result_of(msgs[0]), l2tp::result::kClearConnection);
  ASSERT_NE(find_action<TunnelDown>(acts), nullptr);
  EXPECT_EQ(p.si.cc_state(), CcState::Stopping);
  EXPECT_TRUE(p.si.teardown(DownReason::Admin, SimTime{0}).empty());

  p.pump(acts, {}, SimTime{0});
  EXPECT_EQ(p.si.cc_state(), CcState::Dead);
  EXPECT_EQ(p.sc.cc_state(), CcState::Dead);
  EXPECT_EQ(p.downs, std::vector<DownReason>{DownReason::PeerStop});
  EXPECT_TRUE(p.si.teardown(DownReason::Admin, SimTime{0}).empty());
}

TEST(Teardown, DeadPeerIsLocalOnly) {
  Pair p;
  p.establish();
  auto acts = p.si.teardown(DownReason::DeadPeer, SimTime{0});
  EXPECT_TRUE(sent(acts, true).empty());
  EXPECT_EQ(p.si.cc_state(), CcState::Dead);
}

TEST(Teardown, StopCcnUnackedStillGoesDead) {
  Pair p;
  p.establish();
  p.si.teardown(DownReason::Admin, SimTime{0});
  int downs = 0;
  while (auto t = p.si.next_deadline()) {
    auto acts = p.si.on_timer(*t);
    if (find_action<TunnelDown>(acts)) ++downs;
  }
  EXPECT_EQ(p.si.cc_state(), CcState::Dead);
  EXPECT_EQ(downs, 0);
}

TEST(Teardown, CdnClosesTunnel) {
  Pair p;
  p.establish();
  auto cdn = ControlMessage::make(MessageType::CDN, p.sc.local_tunnel_id(), p.sc.local_session_id(),
                                  {l2tp::Avp::u32(AvpType::ResultCode, 0x00010000),
                                   l2tp::Avp::u16(AvpType::AssignedSessionId, p.si.local_session_id())});
  cdn.header.ns = p.sc.expected_nr();
  cdn.header.nr = p.sc.next_ns();
  auto acts = p.sc.handle_control(cdn, SimTime{0});
  ASSERT_NE(find_action<TunnelDown>(acts), nullptr);
  EXPECT_EQ(find_action<TunnelDown>(acts)->reason, DownReason::SessionClosed);
  EXPECT_EQ(sent(acts)[0].type, MessageType::StopCCN);
}

Bytes ipv6_packet(std::size_t size) {
  Bytes b(size, 0);
  b[0] = 0x60;
  return b;
}

Bytes ipv4_packet(std::size_t size) {
  Bytes b(size, 0);
  b[0] = 0x45;
  return b;
}

TEST(DataPlane, SessionNotUp) {
  TunnelEndpoint si(Role::SI, {});
  try {
    si.encapsulate(ipv6_packet(100), Af::V6, SimTime{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SessionNotUp);
  }
}

TEST(DataPlane, MtuBoundary) {
  TunnelConfig c;
  c.payload_af = Af::V4;
  Pair p(c, c);
  p.establish();
  EXPECT_EQ(p.si.ppp_mtu(), 1460u);
  EXPECT_NO_THROW(p.si.encapsulate(ipv4_packet(1460), Af::V4, SimTime{0}));
  try {
    p.si.encapsulate(ipv4_packet(1461), Af::V4, SimTime{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PacketTooBig);
  }
}

TEST(DataPlane, WrongAddressFamilyCounted) {
  Pair p;  // IPv6 payload softwire
  p.establish();
  EXPECT_THROW(p.si.encapsulate(ipv4_packet(60), Af::V4, SimTime{0}), Error);
  EXPECT_THROW(p.si.encapsulate(ipv4_packet(60), Af::V6, SimTime{0}), Error);
  EXPECT_EQ(p.si.stats().wrong_af_rejected, 2u);
  EXPECT_EQ(p.si.stats().data_tx, 0u);
}

TEST(DataPlane, RoundTripAndStats) {
  Pair p;
  p.establish();
  auto pkt = ipv6_packet(1280);
  pkt[100] = 0x5a;
  auto wire = p.si.encapsulate(pkt, Af::V6, SimTime{0});
  auto hdr = l2tp::decode_header(wire);
  EXPECT_FALSE(hdr.header.is_control);
  EXPECT_EQ(hdr.header.tunnel_id, p.sc.local_tunnel_id());
  EXPECT_EQ(hdr.header.session_id, p.sc.local_session_id());
  EXPECT_EQ(wire.size(), 8u + 2u + 1280u);
  auto frame = p.sc.decapsulate(wire, SimTime{0});
  EXPECT_EQ(frame.protocol, ppp::proto::kIpv6);
  EXPECT_EQ(frame.payload, pkt);
  EXPECT_EQ(p.si.stats().v6.octets_out, 1280u);
  EXPECT_EQ(p.si.stats().v6.packets_out, 1u);
  EXPECT_EQ(p.sc.stats().v6.octets_in, 1280u);
  EXPECT_EQ(p.sc.stats().v4, AfCounters{});
}

TEST(DataPlane, WrongFamilyOnReceive) {
  Pair p;
  p.establish();
  auto wire = p.si.encapsulate_frame({ppp::proto::kIpv6, ipv6_packet(40)}, SimTime{0});
  // Re-tag the PPP protocol as IPv4 after the header (8 bytes).
  wire[8] = 0x00;
  wire[9] = 0x21;
  EXPECT_THROW(p.sc.decapsulate(wire, SimTime{0}), Error);
  EXPECT_EQ(p.sc.stats().wrong_af_rejected, 1u);
}

TEST(KeepaliveConfig, EchoIntervalBounds) {
  KeepaliveConfig k;
  k.lcp_echo_enabled = true;
  k.lcp_echo_interval = std::chrono::seconds(9);
  EXPECT_THROW(k.validate(), Error);
  k.lcp_echo_interval = std::chrono::seconds(10);
  EXPECT_NO_THROW(k.validate());
  k.lcp_echo_interval = std::chrono::seconds(60);
  EXPECT_NO_THROW(k.validate());
  k.lcp_echo_interval = std::chrono::seconds(61);
  EXPECT_THROW(k.validate(), Error);
  k.hello_interval = std::chrono::seconds(30);
  k.lcp_echo_interval = std::chrono::seconds(31);
  EXPECT_THROW(k.validate(), Error);
  TunnelConfig cfg;
  cfg.keepalive = k;
  EXPECT_THROW(TunnelEndpoint(Role::SI, cfg), Error);
}

}  // namespace
}  // namespace swforge::tunnel

/* Copyright 2026 The gradsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gradsim/error.hpp"
#include "gradsim/simnet.hpp"

namespace gradsim::sim {
namespace {

// Records every delivery and optionally answers with a fixed-size reply.
class Recorder : public Process {
 public:
  struct Got {
    Time time;
    NodeId from;
    std::size_t bytes;
  };

  void on_message(Simulator& sim, const Message& msg) override {
    got.push_back({sim.now(), msg.from, msg.payload.size()});
    if (reply_bytes > 0) {
      sim.send(msg.to, msg.from, msg.channel,
               std::vector<std::uint8_t>(reply_bytes, 0));
    }
  }
  void on_send_failed(Simulator& sim, const Message& msg) override {
    failed.push_back({sim.now(), msg.to, msg.payload.size()});
  }
  std::string waiting_on(NodeId) const override {
    return expect_more ? "waiting for a message" : "";
  }

  std::vector<Got> got;
  std::vector<Got> failed;
  std::size_t reply_bytes = 0;
  bool expect_more = false;
};

TEST(Simnet, DelayIsStartupPlusPerByte) {
  Simulator sim(2, {1.0, 0.001, Straggler::none(), 0});
  Recorder r;
  sim.attach(1, &r);
  sim.send(0, 1, 0, std::vector<std::uint8_t>(1000, 0));
  const Time t = sim.run_until([&] { return !r.got.empty(); });
  EXPECT_DOUBLE_EQ(t, 2.0);
  EXPECT_DOUBLE_EQ(r.got[0].time, 2.0);
}

TEST(Simnet, ZeroCostDeliversImmediately) {
  Simulator sim(2, {});
  Recorder r;
  sim.attach(1, &r);
  sim.send(0, 1, 0, {1, 2, 3});
  EXPECT_EQ(sim.run_until([&] { return !r.got.empty(); }), 0.0);
}

TEST(Simnet, FixedSlowSetMultipliesDelay) {
  Simulator sim(3, {1.0, 0.0, Straggler::fixed_slow_set({2}, 10.0), 0});
  EXPECT_DOUBLE_EQ(sim.base_delay(0, 1, 8), 1.0);
  EXPECT_DOUBLE_EQ(sim.base_delay(0, 2, 8), 10.0);
}

TEST(Simnet, EmptyRunTakesNoTime) {
  Simulator sim(4, {1.0, 1.0});
  EXPECT_EQ(sim.run_until([] { return true; }), 0.0);
  EXPECT_EQ(sim.now(), 0.0);
}

TEST(Simnet, DeadlockNamesWaitingNodes) {
  Simulator sim(3, {});
  Recorder a, b;
  b.expect_more = true;
  sim.attach(0, &a);
  sim.attach(2, &b);
  try {
    sim.run_until([] { return false; });
    FAIL() << "expected DeadlockError";
  } catch (const DeadlockError& e) {
    EXPECT_EQ(e.waiting_nodes(), (std::vector<std::uint32_t>{2}));
  }
}

TEST(Simnet, DeadlineRaisesTimeout) {
  Simulator sim(2, {5.0, 0.0});
  Recorder r;
  sim.attach(1, &r);
  sim.send(0, 1, 0, {});
  EXPECT_THROW(sim.run_until([&] { return !r.got.empty(); }, 1.0), Timeout);
}

TEST(Straggler, ZeroTailProbabilityNeverDelays) {
  auto s = Straggler::exponential_tail(3.0, 0.0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    ASSERT_EQ(sample_straggler_tail(s, 42, i), 0.0);
  }
}

TEST(Straggler, FullTailMeanIsInverseRate) {
  const double rate = 4.0;
  auto s = Straggler::exponential_tail(rate, 1.0);
  const std::uint64_t n = 100000;
  double sum = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) sum += sample_straggler_tail(s, 7, i);
  const double mean = sum / static_cast<double>(n);
  EXPECT_NEAR(mean, 1.0 / rate, 0.02 / rate);
}

TEST(Straggler, PureFunctionOfSeedAndIndex) {
  auto s = Straggler::exponential_tail(1.0, 0.5);
  for (std::uint64_t i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_straggler_tail(s, 9, i), sample_straggler_tail(s, 9, i));
  }
}

TEST(Straggler, InvalidParametersRejected) {
  EXPECT_THROW(Straggler::exponential_tail(0.0, 0.5).validate(), InvalidArgument);
  EXPECT_THROW(Straggler::exponential_tail(1.0, 1.5).validate(), InvalidArgument);
  EXPECT_THROW(Simulator(2, {-1.0, 0.0}), InvalidArgument);
}

TEST(Simnet, CrashedReceiverDropsAndNotifiesSender) {
  Simulator sim(2, {1.0, 0.0}, {0.5, true});
  Recorder sender, receiver;
  sim.attach(0, &sender);
  sim.attach(1, &receiver);
  sim.inject_failure(1, 0.25, FailureKind::kCrash);
  sim.send(0, 1, 0, {1, 2});
  sim.run_until([&] { return !sender.failed.empty(); });
  EXPECT_TRUE(receiver.got.empty());
  EXPECT_DOUBLE_EQ(sender.failed[0].time, 1.5);
  EXPECT_EQ(sim.messages_dropped(), 1u);
  EXPECT_EQ(sim.trace().count(EventKind::kDrop), 1u);
  EXPECT_FALSE(sim.alive(1));
}

TEST(Simnet, CrashedNodeCannotSend) {
  Simulator sim(2, {});
  sim.inject_failure(0, 0.0, FailureKind::kCrash);
  while (sim.step()) {
  }
  EXPECT_THROW(sim.send(0, 1, 0, {}), DeadNodeError);
}

TEST(Simnet, SlowFailureScalesDelay) {
  Simulator sim(2, {1.0, 0.0});
  sim.inject_failure(1, 0.0, FailureKind::kSlow, 3.0);
  while (sim.step()) {
  }
  EXPECT_DOUBLE_EQ(sim.base_delay(0, 1, 0), 3.0);
  EXPECT_DOUBLE_EQ(sim.base_delay(1, 0, 0), 3.0);
}

// Ping-pong across several nodes with stragglers on, for the properties
// below.
Trace ping_pong(std::uint64_t seed) {
  LatencyModel lat{0.1, 1e-4, Straggler::exponential_tail(2.0, 0.5), seed};
  Simulator sim(4, lat);
  std::vector<Recorder> rs(4);
  for (NodeId i = 0; i < 4; ++i) {
    rs[i].reply_bytes = (i == 0) ? 0 : 16 * (i + 1);
    sim.attach(i, &rs[i]);
  }
  for (int round = 0; round < 20; ++round) {
    for (NodeId i = 1; i < 4; ++i) {
      sim.send(0, i, 0, std::vector<std::uint8_t>(64 + round, 0));
    }
    const std::size_t want = 3 * (round + 1);
    sim.run_until([&] { return rs[0].got.size() == want; });
  }
  return sim.trace();
}

TEST(Simnet, SameSeedSameTrace) {
  EXPECT_EQ(ping_pong(5).records(), ping_pong(5).records());
  EXPECT_NE(ping_pong(5).to_string(), ping_pong(6).to_string());
}

TEST(Simnet, ClockIsMonotone) {
  auto trace = ping_pong(11);
  for (std::size_t i = 1; i < trace.records().size(); ++i) {
    ASSERT_LE(trace.records()[i - 1].time, trace.records()[i].time);
  }
}

TEST(Simnet, MessagesAreConserved) {
  LatencyModel lat{0.1, 0.0, Straggler::exponential_tail(2.0, 0.5), 3};
  Simulator sim(3, lat);
  Recorder a, b, c;
  sim.attach(0, &a);
  sim.attach(1, &b);
  sim.attach(2, &c);
  sim.inject_failure(2, 0.15, FailureKind::kCrash);
  for (int i = 0; i < 50; ++i) {
    sim.send(0, 1 + i % 2, 0, std::vector<std::uint8_t>(i, 0));
    EXPECT_EQ(sim.messages_sent(), sim.messages_delivered() +
                                       sim.messages_dropped() +
                                       sim.messages_in_flight());
  }
  while (sim.step()) {
  }
  EXPECT_EQ(sim.messages_in_flight(), 0u);
  EXPECT_EQ(sim.messages_sent(), sim.messages_delivered() + sim.messages_dropped());
  EXPECT_EQ(sim.bytes_sent(), sim.trace().bytes_sent());
  EXPECT_GT(sim.messages_dropped(), 0u);
}

TEST(Simnet, TiesBreakBySchedulingOrder) {
  Simulator sim(2, {1.0, 0.0});
  Recorder r;
  sim.attach(1, &r);
  sim.send(0, 1, 0, std::vector<std::uint8_t>(1, 0));
  sim.send(0, 1, 0, std::vector<std::uint8_t>(2, 0));
  sim.send(0, 1, 0, std::vector<std::uint8_t>(3, 0));
  while (sim.step()) {
  }
  ASSERT_EQ(r.got.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.got[i].bytes, i + 1);
}

TEST(Trace, LineFormat) {
  Simulator sim(2, {0.5, 0.0});
  Recorder r;
  sim.attach(1, &r);
  sim.send(0, 1, 0, std::vector<std::uint8_t>(12, 0));
  while (sim.step()) {
  }
  EXPECT_EQ(sim.trace().to_string(),
            "0.000000000,0,send,0,1,12\n0.500000000,0,deliver,0,1,12\n");
}

}  // namespace
}  // namespace gradsim::sim

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "fixtures.hpp"
#include "kdn/controller.hpp"
#include "kdn/errors.hpp"
#include "kdn/random.hpp"

using namespace kdn;

namespace {

SplitPolicy toy_policy(double r) { return SplitPolicy{{{r, 1.0 - r}, {1.0}}}; }

const TrafficMatrix kToyTraffic{{300.0, 100.0}};

std::shared_ptr<const MlpModel> zero_model(const Topology& t) {
  auto m = std::make_shared<MlpModel>(MlpModel::zeros(t.pair_count() + t.total_attachments(), 4, t.pair_count()));
  m->meta["topology_hash"] = topology_hash(t);
  return m;
}

}  // namespace

TEST(Controller, ApplyAppendsHistory) {
  Controller c(kdn::test::toy(), toy_policy(0.5));
  EXPECT_TRUE(c.history().empty());
  c.apply_policy(toy_policy(0.2), PolicySource::operator_input);
  c.apply_policy(toy_policy(0.2), PolicySource::kplane);
  const auto h = c.history();
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].source, PolicySource::operator_input);
  EXPECT_EQ(h[1].source, PolicySource::kplane);
  EXPECT_EQ(h[1].policy, toy_policy(0.2));
  EXPECT_LE(h[0].timestamp, h[1].timestamp);
  EXPECT_EQ(c.active_policy(), toy_policy(0.2));
  EXPECT_EQ(c.initial_policy(), toy_policy(0.5));
}

TEST(Controller, InvalidPolicyLeavesStateUntouched) {
  Controller c(kdn::test::toy(), toy_policy(0.5));
  c.apply_policy(toy_policy(0.1), PolicySource::operator_input);
  const std::string before = c.state_hash();
  EXPECT_THROW(c.apply_policy(SplitPolicy{{{0.6, 0.6}, {1.0}}}, PolicySource::operator_input), Error);
  EXPECT_THROW(c.apply_policy(SplitPolicy{{{1.0}, {1.0}}}, PolicySource::operator_input), Error);
  EXPECT_THROW(c.apply_policy(SplitPolicy{{{-0.1, 1.1}, {1.0}}}, PolicySource::operator_input), Error);
  EXPECT_EQ(c.state_hash(), before);
  EXPECT_EQ(c.history().size(), 1u);
  EXPECT_THROW(Controller(kdn::test::toy(), SplitPolicy{{{0.5, 0.4}, {1.0}}}), Error);
}

TEST(Controller, MeasureMatchesDirectSimulation) {
  const Topology t = gen_topology(4);
  const RoutingTable rt(t);
  const auto [tm, pol] = draw_stable_inputs(rt, 8, kDefaultDemandRange, kDefaultRhoMax, 1000);
  Controller c(t, kdn::test::single_attachment_policy(t));
  c.apply_policy(pol, PolicySource::operator_input);
  EXPECT_EQ(c.measure(tm), simulate_analytic(rt, tm, pol));
  DesConfig des;
  des.horizon_packets = 20000;
  des.seed = 3;
  EXPECT_EQ(c.measure(tm, Backend::des, des), simulate_des(rt, tm, pol, des).delays);
}

TEST(Controller, WhatIfNeedsModel) {
  Controller c(kdn::test::toy(), toy_policy(0.5));
  try {
    c.what_if(toy_policy(0.3), kToyTraffic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::state);
  }
}

TEST(Controller, RejectsForeignModel) {
  Controller c(kdn::test::toy(), toy_policy(0.5));
  EXPECT_THROW(c.bind_model(zero_model(kdn::test::toy(500.0))), Error);
  auto wrong_shape = std::make_shared<MlpModel>(MlpModel::zeros(4, 2, 2));
  EXPECT_THROW(c.bind_model(wrong_shape), Error);
  EXPECT_EQ(c.model(), nullptr);
  EXPECT_NO_THROW(c.bind_model(zero_model(kdn::test::toy())));
}

TEST(Controller, WhatIfEqualsPredictAndHasNoSideEffects) {
  const auto& o = kdn::test::trained_overlay();
  Controller c(o.topo, gen_policy(1, o.topo));
  c.bind_model(std::make_shared<MlpModel>(o.model));
  c.set_intent(parse_intent("minimize mean_delay\ndelay(o0->o1) < 20 ms", o.topo));
  const std::string before = c.state_hash();
  const RoutingTable rt(o.topo);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto [tm, cand] = draw_stable_inputs(rt, substream_seed(31, s), kDefaultDemandRange, kDefaultRhoMax, 1000);
    const WhatIfResult r = c.what_if(cand, tm);
    EXPECT_EQ(r.predicted, delays_from_row(predict(o.model, feature_row(tm, cand)).row(0)));
    ASSERT_TRUE(r.objective.has_value());
    EXPECT_EQ(r.objective->total, render(*c.intent()).evaluate(r.predicted, link_loads(rt, tm, cand)).total);
  }
  EXPECT_EQ(c.state_hash(), before);
  EXPECT_TRUE(c.history().empty());
}

TEST(Controller, WhatIfAccuracyTracksHeldOutError) {
  const auto& o = kdn::test::trained_overlay();
  Controller c(o.topo, gen_policy(1, o.topo));
  c.bind_model(std::make_shared<MlpModel>(o.model));
  const RoutingTable rt(o.topo);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto [tm, cand] = draw_stable_inputs(rt, substream_seed(4242, s), kDefaultDemandRange, kDefaultRhoMax, 1000);
    const PathDelayVector truth = simulate_analytic(rt, tm, cand);
    const PathDelayVector pred = c.what_if(cand, tm).predicted;
    for (std::size_t p = 0; p < truth.delay_s.size(); ++p, ++n) sum += std::abs(pred.delay_s[p] - truth.delay_s[p]) / truth.delay_s[p];
  }
  EXPECT_LE(sum / double(n), 2.0 * o.test_metrics.mean_rel_err);
}

TEST(Controller, SnapshotRoundTripReplaysHistory) {
  const Topology t = kdn::test::toy();
  Controller c(t, toy_policy(0.5));
  c.apply_policy(toy_policy(0.25), PolicySource::operator_input);
  c.apply_policy(toy_policy(0.75), PolicySource::kplane);
  c.set_intent(parse_intent("minimize max_delay\ndelay(oA->oB) < 9 ms", t));
  const auto back = Controller::from_snapshot(nlohmann::json::parse(c.snapshot().dump()), t);
  EXPECT_EQ(back->snapshot(), c.snapshot());
  EXPECT_EQ(back->state_hash(), c.state_hash());
  EXPECT_EQ(back->intent(), c.intent());

  // Replaying the recorded history from the initial policy reproduces the active one.
  Controller replay(t, back->initial_policy());
  for (const auto& rec : back->history()) replay.apply_policy(rec.policy, rec.source);
  EXPECT_EQ(replay.active_policy(), c.active_policy());

  EXPECT_THROW(Controller::from_snapshot(c.snapshot(), kdn::test::toy(500.0)), Error);
  nlohmann::json bad = c.snapshot();
  bad["kind"] = "topology";
  EXPECT_THROW(Controller::from_snapshot(bad, t), Error);
}

TEST(Controller, ConcurrentReadersSeeWholePolicies) {
  Controller c(kdn::test::toy(), toy_policy(0.0));
  std::atomic<bool> stop{false};
  std::atomic<std::size_t> torn{0};
  std::vector<std::thread> readers;
  for (int i = 0; i < 4; ++i)
    readers.emplace_back([&] {
      while (!stop) {
        const SplitPolicy p = c.active_policy();
        if (std::abs(p.ratios[0][0] + p.ratios[0][1] - 1.0) > 1e-12) ++torn;
        c.history();
      }
    });
  for (int k = 1; k <= 500; ++k) c.apply_policy(toy_policy(k / 500.0), PolicySource::operator_input);
  stop = true;
  for (auto& r : readers) r.join();
  EXPECT_EQ(torn.load(), 0u);
  EXPECT_EQ(c.history().size(), 500u);
}

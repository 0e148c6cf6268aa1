#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kdn/errors.hpp"
#include "kdn/intent.hpp"
#include "kdn/random.hpp"

using namespace kdn;

namespace {

const Topology& topo() {
  static const Topology t = gen_topology(1);
  return t;
}

ParseError parse_error(const std::string& text) {
  try {
    parse_intent(text, topo());
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no error for: " << text;
  return ParseError(ParseFailure::syntax, 0, 0, "");
}

PathDelayVector delays(double v) { return {std::vector<double>(topo().pair_count(), v)}; }

LinkLoadReport loads(double u) {
  LinkLoadReport r;
  r.load_pps.assign(topo().links().size(), 0.0);
  r.utilization.assign(topo().links().size(), u);
  return r;
}

}  // namespace

TEST(Parse, ObjectiveOnly) {
  const Intent i = parse_intent("minimize mean_delay", topo());
  EXPECT_EQ(i.objective, ObjectiveKind::mean_delay);
  EXPECT_TRUE(i.constraints.empty());
  EXPECT_EQ(parse_intent("  # comment\nminimize max_delay # trailing\n", topo()).objective, ObjectiveKind::max_delay);
}

TEST(Parse, DelayConstraintInMilliseconds) {
  const Intent i = parse_intent("minimize mean_delay\ndelay(o0->o1) < 10 ms", topo());
  ASSERT_EQ(i.constraints.size(), 1u);
  const Constraint& c = i.constraints[0];
  EXPECT_EQ(c.kind, ConstraintKind::pair_delay);
  EXPECT_EQ(c.pair, topo().pair_index(0, 1));
  EXPECT_DOUBLE_EQ(c.bound, 0.010);
  EXPECT_EQ(c.strictness, Strictness::less);
  EXPECT_EQ(parse_intent("minimize mean_delay delay ( o3 -> o2 ) <= 2.5e-2 s", topo()).constraints[0].bound, 0.025);
}

TEST(Parse, UtilConstraint) {
  const std::string link = topo().link_name(topo().attachments(2)[0]);
  const Intent i = parse_intent("minimize max_delay\nutil(" + link + ") <= 0.8", topo());
  ASSERT_EQ(i.constraints.size(), 1u);
  EXPECT_EQ(i.constraints[0].kind, ConstraintKind::link_util);
  EXPECT_EQ(i.constraints[0].link, topo().attachments(2)[0]);
  EXPECT_EQ(i.constraints[0].strictness, Strictness::less_equal);
}

TEST(Parse, Errors) {
  EXPECT_EQ(parse_error("minimize mean_delay\nminimize max_delay").failure(), ParseFailure::duplicate_objective);
  const ParseError dup = parse_error("minimize mean_delay\nminimize max_delay");
  EXPECT_EQ(dup.line(), 2u);
  EXPECT_EQ(dup.column(), 1u);
  const ParseError unknown = parse_error("minimize mean_delay\ndelay(o0 -> o99) < 3 ms");
  EXPECT_EQ(unknown.failure(), ParseFailure::unknown_identifier);
  EXPECT_EQ(unknown.line(), 2u);
  EXPECT_EQ(unknown.column(), 13u);
  EXPECT_EQ(parse_error("minimize mean_delay\nutil(nope_u1) < 0.5").failure(), ParseFailure::unknown_identifier);
  EXPECT_EQ(parse_error("delay(o0->o1) < 3 ms").failure(), ParseFailure::syntax);
  EXPECT_EQ(parse_error("minimize mean_delay\ndelay(o0->o1) < 3").failure(), ParseFailure::syntax);
  EXPECT_EQ(parse_error("minimize mean_delay\ndelay(o0->o1) > 3 ms").failure(), ParseFailure::syntax);
  EXPECT_EQ(parse_error("minimize throughput").failure(), ParseFailure::syntax);
  EXPECT_EQ(parse_error("minimize mean_delay\ndelay(o1->o1) < 3 ms").failure(), ParseFailure::syntax);
  EXPECT_EQ(parse_error("").failure(), ParseFailure::syntax);
  EXPECT_EQ(parse_error("minimize mean_delay $").failure(), ParseFailure::syntax);
  const std::string link = topo().link_name(0);
  EXPECT_EQ(parse_error("minimize mean_delay\nutil(" + link + ") < 1.5").failure(), ParseFailure::syntax);
  EXPECT_NE(std::string(dup.what()).find("line 2, column 1"), std::string::npos);
}

TEST(PrettyPrint, RoundTripIsIdempotent) {
  const std::string l0 = topo().link_name(topo().attachments(0)[1]);
  const std::string l1 = topo().link_name(40);
  const std::vector<std::string> corpus = {
      "minimize mean_delay",
      "minimize max_delay",
      "minimize mean_delay\ndelay(o0->o1) < 10 ms",
      "minimize mean_delay\ndelay(o0->o1) <= 10 ms",
      "minimize max_delay delay(o2 -> o7) < 0.02 s",
      "minimize mean_delay\nutil(" + l0 + ") < 0.9",
      "minimize mean_delay\nutil(" + l1 + ") <= 1",
      "# ops request\nminimize mean_delay\ndelay(o11->o0) < 33.3 ms # tight",
      "minimize mean_delay\ndelay(o0->o1) < 10 ms\ndelay(o1->o0) < 10 ms",
      "minimize max_delay\ndelay(o4->o5) < 1e-2 s\nutil(" + l0 + ") < 0.75",
      "minimize mean_delay   delay( o3->o9 )<7ms",
      "minimize mean_delay\ndelay(o5->o6) < 0.1 ms",
      "minimize mean_delay\ndelay(o5->o6) < 12345 ms",
      "minimize max_delay\nutil(" + l1 + ") < 0.5\nutil(" + l0 + ") < 0.6",
      "minimize mean_delay\ndelay(o8->o10) <= 2.5e1 ms",
      "minimize mean_delay\ndelay(o0->o2) < 10 ms\ndelay(o0->o2) < 5 ms",
      "\n\n  minimize   max_delay\n\n",
      "minimize mean_delay\ndelay(o9->o1) < 0.3333333333333333 s",
      "minimize mean_delay\nutil(" + l0 + ") <= 0.123456789",
      "minimize max_delay\ndelay(o6->o3) < 15 ms\nutil(" + l1 + ") <= 0.95\ndelay(o3->o6) <= 15 ms",
  };
  ASSERT_EQ(corpus.size(), 20u);
  for (const auto& text : corpus) {
    const Intent a = parse_intent(text, topo());
    const std::string canon = to_text(a, topo());
    const Intent b = parse_intent(canon, topo());
    EXPECT_EQ(a, b) << text;
    EXPECT_EQ(to_text(b, topo()), canon);
  }
}

TEST(Render, FormattingDoesNotMatter) {
  const Intent a = parse_intent("minimize mean_delay\ndelay(o0->o1) < 10 ms", topo());
  const Intent b = parse_intent("# same\nminimize    mean_delay delay ( o0 -> o1 ) < 0.01 s", topo());
  EXPECT_EQ(a, b);
  const auto va = render(a).evaluate(delays(0.02), loads(0.1));
  const auto vb = render(b).evaluate(delays(0.02), loads(0.1));
  EXPECT_EQ(va.total, vb.total);
}

TEST(Render, PenaltyArithmetic) {
  const ObjectiveSpec none = render(parse_intent("minimize max_delay", topo()));
  PathDelayVector d = delays(0.004);
  d.delay_s[5] = 0.009;
  EXPECT_EQ(none.evaluate(d, loads(0)).total, 0.009);

  const ObjectiveSpec spec = render(parse_intent("minimize mean_delay\ndelay(o0->o1) < 10 ms", topo()));
  const auto slack = spec.evaluate(delays(0.005), loads(0));
  EXPECT_EQ(slack.penalty, 0.0);
  EXPECT_TRUE(slack.verdicts[0].satisfied);
  EXPECT_EQ(slack.total, slack.base);

  const auto over = spec.evaluate(delays(0.011), loads(0));
  EXPECT_NEAR(over.penalty, 1e6 * 1e-3 * 1e-3, 1e-9);
  EXPECT_NEAR(over.total, 0.011 + 1.0, 1e-9);
  EXPECT_FALSE(over.verdicts[0].satisfied);
  EXPECT_GT(over.penalty, kInfeasiblePenalty);

  const ObjectiveSpec util = render(parse_intent("minimize mean_delay\nutil(" + topo().link_name(3) + ") <= 0.5", topo()), 10.0);
  EXPECT_NEAR(util.evaluate(delays(0.001), loads(0.7)).penalty, 10.0 * 0.2 * 0.2, 1e-12);
  EXPECT_TRUE(util.evaluate(delays(0.001), loads(0.5)).verdicts[0].satisfied);
}

TEST(Render, MonotoneInViolation) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t pair = rng.below(topo().pair_count());
    const double bound = rng.uniform(0.001, 0.05);
    Intent i;
    i.objective = rng.below(2) ? ObjectiveKind::mean_delay : ObjectiveKind::max_delay;
    i.constraints.push_back({ConstraintKind::pair_delay, pair, 0, bound, Strictness::less});
    const LinkId link = rng.below(topo().links().size());
    const double ub = rng.uniform(0.1, 1.0);
    i.constraints.push_back({ConstraintKind::link_util, 0, link, ub, Strictness::less_equal});
    const ObjectiveSpec spec = render(i, rng.uniform(1.0, 1e7));

    PathDelayVector d = delays(rng.uniform(0.0005, 0.05));
    LinkLoadReport l = loads(rng.uniform(0, 0.9));
    d.delay_s[pair] = bound + rng.uniform(0.0, 0.05);
    const double before = spec.evaluate(d, l).total;
    d.delay_s[pair] += rng.uniform(1e-6, 0.02);
    const double after = spec.evaluate(d, l).total;
    EXPECT_GT(after, before);

    l.utilization[link] = ub + rng.uniform(0.0, 0.5);
    const double u_before = spec.evaluate(d, l).total;
    l.utilization[link] += rng.uniform(1e-6, 0.5);
    EXPECT_GT(spec.evaluate(d, l).total, u_before);
  }
}

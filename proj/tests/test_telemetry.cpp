#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "fixtures.hpp"
#include "kdn/errors.hpp"
#include "kdn/telemetry.hpp"

using namespace kdn;
namespace fs = std::filesystem;

namespace {

std::string stripped(const Store& s, const Topology& t) {
  std::string out;
  for (const auto& sample : s.samples()) {
    auto j = to_json(sample, topology_hash(t));
    j.erase("created_at");
    out += j.dump() + "\n";
  }
  return out;
}

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("kdn_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  fs::path p = dir / name;
  fs::remove(p);
  return p;
}

CollectConfig analytic(std::size_t n, std::uint64_t seed) {
  CollectConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Collect, ZeroSamplesLeavesStoreUnchanged) {
  const Topology t = gen_topology(1);
  Store s;
  EXPECT_EQ(collect(t, analytic(0, 1), s), 0u);
  EXPECT_TRUE(s.empty());
  EXPECT_FALSE(s.topology_hash().has_value());
}

TEST(Collect, LargeStore) {
  const Topology t = gen_topology(1);
  Store s;
  EXPECT_EQ(collect(t, analytic(9600, 1), s), 9600u);
  EXPECT_EQ(s.size(), 9600u);
  EXPECT_EQ(to_dataset(s, t).rows(), 9600u);
  for (std::size_t i = 0; i < s.size(); i += 97) {
    EXPECT_EQ(s.samples()[i].sample_id, i);
    EXPECT_LT(link_loads(t, s.samples()[i].tm, s.samples()[i].pol).max_utilization(), kDefaultRhoMax);
  }
}

TEST(Collect, DeterministicAndIndependentOfThreads) {
  const Topology t = gen_topology(2);
  Store a, b, c;
  auto cfg = analytic(64, 5);
  cfg.threads = 1;
  collect(t, cfg, a);
  collect(t, cfg, b);
  cfg.threads = 4;
  collect(t, cfg, c);
  EXPECT_EQ(stripped(a, t), stripped(b, t));
  EXPECT_EQ(stripped(a, t), stripped(c, t));
  Store d;
  collect(t, analytic(64, 6), d);
  EXPECT_NE(stripped(a, t), stripped(d, t));
}

TEST(Collect, SampleDependsOnlyOnSeedAndIndex) {
  const Topology t = gen_topology(2);
  Store small, large;
  collect(t, analytic(5, 9), small);
  collect(t, analytic(20, 9), large);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(small.samples()[i].tm, large.samples()[i].tm);
    EXPECT_EQ(small.samples()[i].delays, large.samples()[i].delays);
  }
}

TEST(Collect, ResamplingBudgetExhausted) {
  const Topology t = gen_topology(2);
  auto cfg = analytic(3, 1);
  cfg.demand_pps = {5000, 6000};
  cfg.max_attempts = 5;
  Store s;
  try {
    collect(t, cfg, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::instability);
  }
  EXPECT_TRUE(s.empty());
}

TEST(Store, RejectsForeignTopology) {
  Store s;
  collect(gen_topology(1), analytic(2, 1), s);
  EXPECT_THROW(collect(gen_topology(2), analytic(2, 1), s), Error);
  EXPECT_THROW(to_dataset(s, gen_topology(2)), Error);
}

TEST(Store, JsonlRoundTripAndResimulation) {
  const Topology t = gen_topology(3);
  const auto path = temp_path("rt.samples.jsonl").string();
  {
    Store s = Store::open(path);
    collect(t, analytic(12, 4), s);
    auto cfg = analytic(3, 5);
    cfg.backend = Backend::des;
    cfg.des_horizon = 20000;
    collect(t, cfg, s);
  }
  const Store back = Store::open(path);
  ASSERT_EQ(back.size(), 15u);
  EXPECT_EQ(back.topology_hash().value(), topology_hash(t));
  const RoutingTable rt(t);
  for (const auto& s : back.samples()) {
    const PathDelayVector again = resimulate(rt, s, 20000);
    ASSERT_EQ(again.delay_s.size(), s.delays.delay_s.size());
    for (std::size_t p = 0; p < again.delay_s.size(); ++p) {
      if (std::isnan(s.delays.delay_s[p])) {
        EXPECT_TRUE(std::isnan(again.delay_s[p]));
        continue;
      }
      EXPECT_EQ(again.delay_s[p], s.delays.delay_s[p]);
    }
  }
  EXPECT_EQ(back.samples()[13].backend, Backend::des);
  // Appending after reopen keeps ids sequential.
  Store more = Store::open(path);
  collect(t, analytic(1, 77), more);
  EXPECT_EQ(Store::open(path).samples().back().sample_id, 15u);
}

TEST(Store, RejectsCorruptFile) {
  const auto path = temp_path("bad.samples.jsonl");
  std::ofstream(path) << "{not json\n";
  try {
    Store::open(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
}

TEST(Dataset, ColumnCountsFollowTopology) {
  const Topology t = gen_topology(1);
  Store s;
  collect(t, analytic(1, 1), s);
  const Dataset ds = to_dataset(s, t);
  EXPECT_EQ(std::size_t(ds.X.cols()), 132 + t.total_attachments());
  EXPECT_EQ(ds.Y.cols(), 132);
  EXPECT_EQ(ds.feature_names, feature_names(t));
  EXPECT_EQ(ds.feature_names.front(), "demand:o0->o1");
  EXPECT_EQ(ds.feature_names[132].rfind("ratio:o0_", 0), 0u);
  EXPECT_EQ(feature_names(gen_topology(1)), feature_names(t));
}

TEST(Dataset, RowsFollowSampleOrder) {
  const Topology t = gen_topology(1);
  Store s;
  collect(t, analytic(7, 2), s);
  const Dataset ds = to_dataset(s, t);
  ASSERT_EQ(ds.rows(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(ds.sample_ids[i], i);
    const auto& sample = s.samples()[i];
    EXPECT_EQ(ds.X.row(Eigen::Index(i)), feature_row(sample.tm, sample.pol));
    EXPECT_EQ(delays_from_row(ds.Y.row(Eigen::Index(i))), sample.delays);
  }
}

TEST(Dataset, JsonRoundTrip) {
  const Topology t = gen_topology(1);
  Store s;
  collect(t, analytic(4, 2), s);
  const Dataset ds = to_dataset(s, t);
  const Dataset back = dataset_from_json(nlohmann::json::parse(to_json(ds).dump()));
  EXPECT_EQ(back.X, ds.X);
  EXPECT_EQ(back.Y, ds.Y);
  EXPECT_EQ(back.feature_names, ds.feature_names);
  EXPECT_EQ(back.sample_ids, ds.sample_ids);
}

TEST(Split, SizesDisjointAndSeeded) {
  const Topology t = gen_topology(1);
  Store s;
  collect(t, analytic(9900, 3), s);
  const Dataset ds = to_dataset(s, t);
  const auto [train, test] = split(ds, 9600, 300, 11);
  EXPECT_EQ(train.rows(), 9600u);
  EXPECT_EQ(test.rows(), 300u);
  std::set<std::uint64_t> ids(train.sample_ids.begin(), train.sample_ids.end());
  for (auto id : test.sample_ids) EXPECT_FALSE(ids.count(id));
  const auto [train2, test2] = split(ds, 9600, 300, 11);
  EXPECT_EQ(train.sample_ids, train2.sample_ids);
  EXPECT_EQ(test.sample_ids, test2.sample_ids);
  EXPECT_NE(split(ds, 9600, 300, 12).second.sample_ids, test.sample_ids);
}

TEST(Split, EmptyTrainAllowedOversizeRejected) {
  const Topology t = gen_topology(1);
  Store s;
  collect(t, analytic(10, 3), s);
  const Dataset ds = to_dataset(s, t);
  const auto [train, test] = split(ds, 0, 10, 1);
  EXPECT_EQ(train.rows(), 0u);
  EXPECT_EQ(test.rows(), 10u);
  try {
    split(ds, 8, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_data);
  }
}

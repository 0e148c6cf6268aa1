#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kdn/kplane.hpp"
#include "kdn/netmodel.hpp"
#include "kdn/telemetry.hpp"

using namespace kdn;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("kdn_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(KDN_CLI) + " " + args + " >>" + path("cli.log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& p, const std::string& text) { std::ofstream(p) << text; }

// Small topology, store and model shared by the tests in this file.
void prepare() {
  static bool done = false;
  if (done) return;
  ASSERT_EQ(run("topo gen --overlay 4 --underlay 6 --links 12 --seed 2 --out " + path("t")), 0);
  ASSERT_EQ(run("dataset gen --topo " + path("t/topology.json") + " --store " + path("s.samples.jsonl") +
                " -n 400 --seed 3 --out " + path("d")),
            0);
  ASSERT_EQ(run("train --topo " + path("t/topology.json") + " --store " + path("s.samples.jsonl") +
                " --train-size 300 --test-size 100 --epochs 40 --hidden 16 --out " + path("m")),
            0);
  done = true;
}

}  // namespace

TEST(Cli, WorkflowProducesArtifacts) {
  prepare();
  const std::string topo = " --topo " + path("t/topology.json");
  EXPECT_TRUE(fs::exists(path("d/dataset.json")));
  EXPECT_TRUE(fs::exists(path("m/model.json")));
  EXPECT_TRUE(fs::exists(path("m/metrics.json")));
  EXPECT_EQ(Store::open(path("s.samples.jsonl")).size(), 400u);

  EXPECT_EQ(run("eval" + topo + " --store " + path("s.samples.jsonl") + " --model " + path("m/model.json") +
                " --train-size 300 --test-size 100 --out " + path("e")),
            0);
  EXPECT_TRUE(fs::exists(path("e/predictions.csv")));

  write(path("intent.txt"), "minimize mean_delay\n");
  EXPECT_EQ(run("optimize" + topo + " --mode oracle --intent " + path("intent.txt") + " --budget 200 --out " + path("o")), 0);
  const auto res = read_json_file(path("o/optimization.json"));
  EXPECT_EQ(res.at("kind"), "optimization_result");
  EXPECT_EQ(res.at("mode"), "oracle");

  EXPECT_EQ(run("optimize" + topo + " --model " + path("m/model.json") + " --intent " + path("intent.txt") +
                " --budget 200 --out " + path("o2")),
            0);
  EXPECT_EQ(read_json_file(path("o2/optimization.json")).at("mode"), "surrogate");

  fs::copy_file(path("s.samples.jsonl"), path("loop.samples.jsonl"));
  EXPECT_EQ(run("intent apply" + topo + " --model " + path("m/model.json") + " --intent " + path("intent.txt") +
                " --policy " + path("o/policy.json") + " --traffic " + path("o/traffic.json") + " --store " +
                path("loop.samples.jsonl") + " --budget 200 --out " + path("a")),
            0);
  EXPECT_TRUE(fs::exists(path("a/closed_loop.json")));
  EXPECT_TRUE(fs::exists(path("a/controller_state.json")));
  EXPECT_EQ(Store::open(path("loop.samples.jsonl")).size(), 401u);

  EXPECT_EQ(run("intent apply" + topo + " --model " + path("m/model.json") + " --intent " + path("intent.txt") +
                " --state " + path("a/controller_state.json") + " --traffic " + path("o/traffic.json") +
                " --budget 200 --out " + path("a2")),
            0);
  EXPECT_EQ(read_json_file(path("a2/controller_state.json")).at("history").size(), 2u);
}

TEST(Cli, WhatIfMatchesLibraryPrediction) {
  prepare();
  const std::string topo = " --topo " + path("t/topology.json");
  write(path("intent.txt"), "minimize mean_delay\n");
  ASSERT_EQ(run("optimize" + topo + " --mode oracle --intent " + path("intent.txt") + " --budget 16 --out " + path("w0")), 0);
  ASSERT_EQ(run("whatif" + topo + " --model " + path("m/model.json") + " --policy " + path("w0/policy.json") +
                " --traffic " + path("w0/traffic.json") + " --out " + path("w")),
            0);
  const Topology t = topology_from_json(read_json_file(path("t/topology.json")));
  const MlpModel m = model_from_json(read_json_file(path("m/model.json")));
  const SplitPolicy pol = policy_from_json(read_json_file(path("w0/policy.json")), t);
  const TrafficMatrix tm = traffic_from_json(read_json_file(path("w0/traffic.json")), t);
  const auto pred = predict(m, feature_row(tm, pol));
  const auto j = read_json_file(path("w/whatif.json"));
  for (std::size_t p = 0; p < t.pair_count(); ++p)
    EXPECT_EQ(j.at("predicted_delay_s").at(t.pair_name(p)).get<double>(), pred(0, Eigen::Index(p)));
}

TEST(Cli, RunConfigRerunIsByteIdentical) {
  prepare();
  ASSERT_TRUE(fs::exists(path("m/run_config.json")));
  const auto cfg = read_json_file(path("m/run_config.json"));
  EXPECT_EQ(cfg.at("kind"), "run_config");
  ASSERT_EQ(run("rerun " + path("m/run_config.json") + " --out " + path("m_again")), 0);
  EXPECT_EQ(slurp(path("m/model.json")), slurp(path("m_again/model.json")));
  EXPECT_EQ(slurp(path("m/metrics.json")), slurp(path("m_again/metrics.json")));
}

TEST(Cli, IntentCheck) {
  prepare();
  write(path("i1.txt"), "# x\nminimize  max_delay delay(o0->o1) < 0.02 s\n");
  EXPECT_EQ(run("intent check --topo " + path("t/topology.json") + " --intent " + path("i1.txt") + " --out " + path("ic")), 0);
  write(path("i2.txt"), "minimize mean_delay\nminimize max_delay\n");
  EXPECT_EQ(run("intent check --topo " + path("t/topology.json") + " --intent " + path("i2.txt") + " --out " + path("ic")), 3);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("train --no-such-flag"), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run("topo gen --overlay 3 --underlay 2 --links 1 --out " + path("bad")), 2);
  write(path("junk.json"), "{\"kind\": \"nope\"}");
  EXPECT_EQ(run("dataset gen --topo " + path("junk.json") + " --store " + path("x.samples.jsonl") + " -n 1 --out " + path("bad")), 3);
  EXPECT_EQ(run("dataset gen --topo " + path("missing.json") + " --store " + path("x.samples.jsonl") + " -n 1 --out " + path("bad")), 3);
}

TEST(Cli, VnfPipeline) {
  ASSERT_EQ(run("vnf gen --profile switch-like -n 300 --noise-free --out " + path("v")), 0);
  ASSERT_EQ(run("vnf train --data " + path("v/vnf_dataset.json") + " --train-size 250 --test-size 50 --epochs 30 --out " + path("vt")), 0);
  const std::string cdf = slurp(path("vt/error_cdf.csv"));
  EXPECT_EQ(cdf.rfind("error,cumulative_fraction\n", 0), 0u);
  EXPECT_TRUE(fs::exists(path("vt/vnf_metrics.json")));
  EXPECT_EQ(run("vnf eval --data " + path("v/vnf_dataset.json") + " --model " + path("vt/model.json") +
                " --train-size 250 --test-size 50 --out " + path("ve")),
            0);
  EXPECT_EQ(run("vnf gen --profile router -n 10 --out " + path("v")), 2);
}

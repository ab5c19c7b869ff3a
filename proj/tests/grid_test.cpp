#include "evgrid/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "evgrid/errors.hpp"

namespace evgrid {
namespace {

Network parse(const std::string& text, const NetworkOptions& opt = {}) {
  std::istringstream in(text);
  return parse_network(in, opt);
}

const char kTwoNode[] =
    "node,parent,r_pu,x_pu,k_spaces,m_cap\n"
    "1,0,0.01,0.01,10,8\n"
    "2,1,0.005,0.005,10,8\n";

TEST(GridTest, LoadsTwoNodeLine) {
  Network net = parse(kTwoNode);
  EXPECT_EQ(net.node_count, 2);
  EXPECT_DOUBLE_EQ(net.paths.cum_r[1], 0.01);
  EXPECT_DOUBLE_EQ(net.paths.cum_r[2], 0.015);
  EXPECT_EQ(net.paths.path_edges[2], (std::vector<int>{1, 2}));
  EXPECT_TRUE(is_line(net));
}

TEST(GridTest, SingleNode) {
  Network net = parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,0,0.02,0.01,5,inf\n");
  EXPECT_EQ(net.node_count, 1);
  ASSERT_EQ(net.paths.path_edges[1].size(), 1u);
  EXPECT_TRUE(std::isinf(net.m_cap[1]));
}

TEST(GridTest, CommentsAndBlankLinesIgnored) {
  Network net = parse("# feeder\nnode,parent,r_pu,x_pu,k_spaces,m_cap\n\n# row\n1,0,0.02,0.01,5,3\n");
  EXPECT_EQ(net.node_count, 1);
}

TEST(GridTest, SelfParentIsCycle) {
  EXPECT_THROW(parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,1,0.01,0.01,1,1\n"), TopologyError);
}

TEST(GridTest, TwoCycleDetected) {
  EXPECT_THROW(parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,2,0.01,0.01,1,1\n2,1,0.01,0.01,1,1\n"),
               TopologyError);
}

TEST(GridTest, UnknownParent) {
  EXPECT_THROW(parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,7,0.01,0.01,1,1\n"), TopologyError);
}

TEST(GridTest, ParseErrorCarriesLine) {
  try {
    parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,0,0.01,0.01,1,1\n2,1,abc,0.01,1,1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(GridTest, NonpositiveParameters) {
  EXPECT_THROW(parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,0,0,0.01,1,1\n"), ParameterError);
  EXPECT_THROW(parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,0,0.01,0.01,0,1\n"), ParameterError);
  EXPECT_THROW(parse("node,parent,r_pu,x_pu,k_spaces,m_cap\n1,0,0.01,0.01,1,-2\n"), ParameterError);
}

TEST(GridTest, Delta) {
  Network net = parse(kTwoNode);
  EXPECT_NEAR(delta(net, 1), 0.095, 1e-15);
  NetworkOptions tight;
  tight.v_lo = 1.0;
  EXPECT_EQ(delta(parse(kTwoNode, tight), 2), 0.0);
  NetworkOptions one_pct;
  one_pct.v_lo = 0.9801;
  EXPECT_NEAR(delta(parse(kTwoNode, one_pct), 1), 0.00995, 1e-15);
}

TEST(GridTest, VoltageDropPercentSetsSquaredBound) {
  NetworkOptions opt;
  opt.voltage_drop_pct = 0.1;
  Network net = parse(kTwoNode, opt);
  EXPECT_NEAR(net.v_lo[2], 0.81, 1e-15);
  EXPECT_NEAR(delta(net, 2), 0.095, 1e-15);
}

TEST(GridTest, ExclusionReattachesChildren) {
  NetworkOptions opt;
  opt.exclude = {2};
  Network net = parse(
      "node,parent,r_pu,x_pu,k_spaces,m_cap\n1,0,0.01,0.01,1,1\n2,1,0.02,0.01,1,1\n3,2,0.03,0.01,1,1\n", opt);
  ASSERT_EQ(net.node_count, 2);
  EXPECT_EQ(net.label[2], 3);
  EXPECT_EQ(net.parent[2], 1);
  EXPECT_NEAR(net.r[2], 0.05, 1e-15);
  EXPECT_NEAR(net.paths.cum_r[2], 0.06, 1e-15);
}

TEST(GridTest, RoundTrip) {
  const std::string text =
      "node,parent,r_pu,x_pu,k_spaces,m_cap\n"
      "4,0,0.013,0.007,12,inf\n"
      "9,4,0.0021,0,3,2.5\n"
      "2,4,0.1,0.2,1,1\n";
  Network net = parse(text);
  std::ostringstream out;
  write_network(out, net);
  Network again = parse(out.str());
  std::ostringstream out2;
  write_network(out2, again);
  EXPECT_EQ(out.str(), out2.str());
  auto sorted_lines = [](const std::string& s) {
    std::vector<std::string> v;
    std::istringstream in(s);
    std::string l;
    while (std::getline(in, l)) v.push_back(l);
    std::sort(v.begin(), v.end());
    return v;
  };
  EXPECT_EQ(sorted_lines(out.str()), sorted_lines(text));
}

TEST(GridProperty, PathTablesOnRandomTrees) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Network net = random_tree(25, seed, 0.001, 0.02);
    EXPECT_EQ(net.paths.subtree_nodes[0].size(), static_cast<size_t>(net.size()));
    for (int k = 1; k < net.size(); ++k) {
      EXPECT_DOUBLE_EQ(net.paths.cum_r[k], net.paths.cum_r[net.parent[k]] + net.r[k]);
      EXPECT_GT(net.paths.cum_r[k], net.paths.cum_r[net.parent[k]]);
      if (net.children[k].empty()) EXPECT_EQ(net.paths.subtree_nodes[k], std::vector<int>{k});
      EXPECT_EQ(net.paths.path_edges[k].back(), k);
    }
    auto c = shared_resistance(net);
    for (int k = 1; k < net.size(); ++k) EXPECT_DOUBLE_EQ(c[k][k], net.paths.cum_r[k]);
  }
}

}  // namespace
}  // namespace evgrid

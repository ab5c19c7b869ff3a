#include "evgrid/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "evgrid/errors.hpp"
#include "evgrid/rng.hpp"

namespace evgrid {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& field, int line, const char* name) {
  std::string t = trim(field);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw ParseError(std::string("bad value for ") + name + ": '" + t + "'", line);
  }
  return v;
}

int parse_int(const std::string& field, int line, const char* name) {
  std::string t = trim(field);
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(std::string("bad integer for ") + name + ": '" + t + "'", line);
  }
  return v;
}

std::string fmt_shortest(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<NetworkRow> parse_network_rows(std::istream& in) {
  std::vector<NetworkRow> rows;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!header_seen) {
      const std::vector<std::string> expect{"node", "parent", "r_pu", "x_pu", "k_spaces", "m_cap"};
      if (f.size() != expect.size()) throw ParseError("expected header " "node,parent,r_pu,x_pu,k_spaces,m_cap", lineno);
      for (size_t i = 0; i < f.size(); ++i) {
        if (trim(f[i]) != expect[i]) throw ParseError("unexpected header field '" + trim(f[i]) + "'", lineno);
      }
      header_seen = true;
      continue;
    }
    if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), lineno);
    NetworkRow row;
    row.node = parse_int(f[0], lineno, "node");
    row.parent = parse_int(f[1], lineno, "parent");
    row.r = parse_double(f[2], lineno, "r_pu");
    row.x = parse_double(f[3], lineno, "x_pu");
    row.k_spaces = parse_double(f[4], lineno, "k_spaces");
    row.m_cap = parse_double(f[5], lineno, "m_cap");
    if (row.node <= 0) throw ParseError("node ids must be positive", lineno);
    rows.push_back(row);
  }
  if (!header_seen) throw ParseError("missing header", lineno);
  return rows;
}

Network build_network(const std::vector<NetworkRow>& input_rows, const NetworkOptions& options) {
  if (input_rows.empty()) throw TopologyError("network has no nodes");
  std::map<int, NetworkRow> by_id;
  for (const auto& row : input_rows) {
    if (!by_id.emplace(row.node, row).second) {
      throw TopologyError("duplicate node id " + std::to_string(row.node));
    }
  }
  for (const auto& [id, row] : by_id) {
    if (row.parent == id) throw TopologyError("cycle: node " + std::to_string(id) + " is its own parent");
    if (row.parent != 0 && !by_id.count(row.parent)) {
      throw TopologyError("node " + std::to_string(id) + " has unknown parent " + std::to_string(row.parent));
    }
  }
  // Cycle / reachability check on the source graph.
  for (const auto& [id, row] : by_id) {
    int cur = id;
    size_t steps = 0;
    while (cur != 0) {
      cur = by_id.at(cur).parent;
      if (++steps > by_id.size()) {
        throw TopologyError("cycle through node " + std::to_string(id) + "; node does not reach the root");
      }
    }
  }

  std::set<int> excluded(options.exclude.begin(), options.exclude.end());
  for (int e : excluded) {
    auto it = by_id.find(e);
    if (it == by_id.end()) throw TopologyError("excluded node " + std::to_string(e) + " not in network");
    NetworkRow gone = it->second;
    for (auto& [id, row] : by_id) {
      if (row.parent == e) {
        row.parent = gone.parent;
        row.r += gone.r;
        row.x += gone.x;
      }
    }
    by_id.erase(it);
  }
  if (by_id.empty()) throw TopologyError("every node was excluded");

  for (const auto& [id, row] : by_id) {
    if (!(row.r > 0)) throw ParameterError("node " + std::to_string(id) + ": r_pu must be positive");
    if (!(row.x >= 0)) throw ParameterError("node " + std::to_string(id) + ": x_pu must be nonnegative");
    if (!(row.k_spaces > 0)) throw ParameterError("node " + std::to_string(id) + ": k_spaces must be positive");
    if (!(row.m_cap > 0)) throw ParameterError("node " + std::to_string(id) + ": m_cap must be positive");
  }

  double v_lo = options.v_lo;
  if (options.voltage_drop_pct) {
    double pct = *options.voltage_drop_pct;
    if (!(pct >= 0 && pct < 1)) throw ParameterError("voltage_drop_pct must lie in [0,1)");
    double v = (1.0 - pct) * std::sqrt(options.w00);
    v_lo = v * v;
  }
  if (!(v_lo > 0 && v_lo <= options.w00 && options.w00 <= options.v_hi)) {
    throw ParameterError("voltage bounds must satisfy 0 < v_lo <= w00 <= v_hi");
  }

  // Renumber so parents precede children (BFS from the root).
  std::map<int, std::vector<int>> kids;
  for (const auto& [id, row] : by_id) kids[row.parent].push_back(id);
  std::vector<int> bfs;
  std::vector<int> frontier{0};
  while (!frontier.empty()) {
    std::vector<int> next;
    for (int p : frontier) {
      auto it = kids.find(p);
      if (it == kids.end()) continue;
      for (int c : it->second) {
        bfs.push_back(c);
        next.push_back(c);
      }
    }
    frontier = std::move(next);
  }
  std::map<int, int> index;
  index[0] = 0;
  for (size_t k = 0; k < bfs.size(); ++k) index[bfs[k]] = static_cast<int>(k) + 1;

  Network net;
  net.node_count = static_cast<int>(bfs.size());
  net.w00 = options.w00;
  const int n = net.size();
  net.parent.assign(n, -1);
  net.r.assign(n, 0.0);
  net.x.assign(n, 0.0);
  net.v_lo.assign(n, v_lo);
  net.v_hi.assign(n, options.v_hi);
  net.k_spaces.assign(n, 0.0);
  net.m_cap.assign(n, 0.0);
  net.label.assign(n, 0);
  net.children.assign(n, {});
  for (int src : bfs) {
    const NetworkRow& row = by_id.at(src);
    int k = index.at(src);
    net.parent[k] = index.at(row.parent);
    net.r[k] = row.r;
    net.x[k] = row.x;
    net.k_spaces[k] = row.k_spaces;
    net.m_cap[k] = row.m_cap;
    net.label[k] = src;
    net.children[net.parent[k]].push_back(k);
    net.order.push_back(k);
  }
  net.v_lo[0] = net.v_hi[0] = net.w00;

  PathTables& t = net.paths;
  t.path_edges.assign(n, {});
  t.subtree_nodes.assign(n, {});
  t.cum_r.assign(n, 0.0);
  for (int k : net.order) {
    int p = net.parent[k];
    t.path_edges[k] = t.path_edges[p];
    t.path_edges[k].push_back(k);
    t.cum_r[k] = t.cum_r[p] + net.r[k];
  }
  for (int k = 0; k < n; ++k) t.subtree_nodes[k].push_back(k);
  for (auto it = net.order.rbegin(); it != net.order.rend(); ++it) {
    int k = *it;
    int p = net.parent[k];
    auto& dst = t.subtree_nodes[p];
    dst.insert(dst.end(), t.subtree_nodes[k].begin(), t.subtree_nodes[k].end());
  }
  return net;
}

Network parse_network(std::istream& in, const NetworkOptions& options) {
  return build_network(parse_network_rows(in), options);
}

Network load_network(const std::string& path, const NetworkOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open network file '" + path + "'");
  return parse_network(in, options);
}

void write_network(std::ostream& out, const Network& net) {
  out << "node,parent,r_pu,x_pu,k_spaces,m_cap\n";
  for (int k = 1; k < net.size(); ++k) {
    out << net.label[k] << ',' << net.label[net.parent[k]] << ',' << fmt_shortest(net.r[k]) << ','
        << fmt_shortest(net.x[k]) << ',' << fmt_shortest(net.k_spaces[k]) << ','
        << fmt_shortest(net.m_cap[k]) << '\n';
  }
}

Network make_line(const std::vector<double>& r, const std::vector<double>& x, double k_spaces,
                  double m_cap, const NetworkOptions& options) {
  if (r.size() != x.size()) throw ParameterError("make_line: r and x sizes differ");
  std::vector<NetworkRow> rows;
  for (size_t k = 0; k < r.size(); ++k) {
    rows.push_back({static_cast<int>(k) + 1, static_cast<int>(k), r[k], x[k], k_spaces, m_cap});
  }
  return build_network(rows, options);
}

Network random_tree(int node_count, std::uint64_t seed, double r_lo, double r_hi,
                    const NetworkOptions& options) {
  if (node_count < 1) throw ParameterError("random_tree: node_count must be positive");
  Philox rng(seed, stream_key(0, 0, StreamPurpose::kInstance));
  std::vector<NetworkRow> rows;
  for (int k = 1; k <= node_count; ++k) {
    int parent = static_cast<int>(rng.uniform() * k);
    double r = r_lo + (r_hi - r_lo) * rng.uniform();
    double x = r * (0.5 + rng.uniform());
    rows.push_back({k, std::min(parent, k - 1), r, x, 10.0, 100.0});
  }
  return build_network(rows, options);
}

double delta(const Network& net, int node) { return 0.5 * (net.w00 - net.v_lo.at(node)); }

bool is_line(const Network& net) {
  for (int k = 0; k < net.size(); ++k) {
    if (net.children[k].size() > 1) return false;
  }
  return true;
}

std::vector<std::vector<double>> shared_resistance(const Network& net) {
  const int n = net.size();
  std::vector<std::vector<double>> c(n, std::vector<double>(n, 0.0));
  for (int k = 1; k < n; ++k) {
    const auto& pk = net.paths.path_edges[k];
    for (int m = 1; m < n; ++m) {
      const auto& pm = net.paths.path_edges[m];
      double s = 0.0;
      for (size_t e = 0; e < std::min(pk.size(), pm.size()) && pk[e] == pm[e]; ++e) s += net.r[pk[e]];
      c[k][m] = s;
    }
  }
  return c;
}

}  // namespace evgrid

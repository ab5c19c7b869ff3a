#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace evgrid {

// Edge (parent(k), k) is identified by its child k.
struct PathTables {
  std::vector<std::vector<int>> path_edges;     // P(k), root first
  std::vector<std::vector<int>> subtree_nodes;  // N(k), k first
  std::vector<double> cum_r;                    // accumulated resistance to the feeder
};

// Radial feeder. Index 0 is the root; per-node vectors have size I+1 and
// slot 0 holds placeholders. Voltage bounds are squared magnitudes.
struct Network {
  int node_count = 0;
  double w00 = 1.0;
  std::vector<int> parent;
  std::vector<double> r;
  std::vector<double> x;
  std::vector<double> v_lo;
  std::vector<double> v_hi;
  std::vector<double> k_spaces;  // may be +inf
  std::vector<double> m_cap;     // may be +inf
  std::vector<int> label;        // id in the source file
  std::vector<std::vector<int>> children;
  std::vector<int> order;  // root-to-leaf order of nodes 1..I
  PathTables paths;

  int size() const { return node_count + 1; }
};

struct NetworkRow {
  int node = 0;
  int parent = 0;
  double r = 0.0;
  double x = 0.0;
  double k_spaces = 0.0;
  double m_cap = 0.0;
};

struct NetworkOptions {
  double w00 = 1.0;
  double v_lo = 0.81;
  double v_hi = 1.21;
  // Sets v_lo = ((1 - pct) * sqrt(w00))^2 on every node.
  std::optional<double> voltage_drop_pct;
  // Source ids removed at ingestion (generator / PV buses). Children of a
  // removed bus are reattached to its parent with series impedance.
  std::vector<int> exclude;
};

Network build_network(const std::vector<NetworkRow>& rows,
                      const NetworkOptions& options = {});
std::vector<NetworkRow> parse_network_rows(std::istream& in);
Network parse_network(std::istream& in, const NetworkOptions& options = {});
Network load_network(const std::string& path, const NetworkOptions& options = {});
void write_network(std::ostream& out, const Network& net);

// Line 0-1-2-...-I with the given per-edge impedances.
Network make_line(const std::vector<double>& r, const std::vector<double>& x,
                  double k_spaces, double m_cap,
                  const NetworkOptions& options = {});

// Random radial tree: node k attaches to a uniformly chosen earlier node.
Network random_tree(int node_count, std::uint64_t seed, double r_lo, double r_hi,
                    const NetworkOptions& options = {});

// (w00 - v_lo[k]) / 2
double delta(const Network& net, int node);

bool is_line(const Network& net);

// Resistance shared by the feeder paths of k and m: cum_r of their deepest
// common ancestor. Row/column 0 are zero.
std::vector<std::vector<double>> shared_resistance(const Network& net);

}  // namespace evgrid

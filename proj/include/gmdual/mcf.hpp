#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

#include "errors.hpp"

// Minimum cost flow by successive shortest paths with node potentials.
// Costs are real, capacities and supplies integral, so optimal flows are
// integral. Potentials satisfy cost(a) - pi(tail) + pi(head) >= 0 on every
// residual arc on return.

namespace gmdual {
namespace mcf {

struct arc_spec {
   std::size_t tail;
   std::size_t head;
   std::int64_t capacity;
   double cost;
};

struct flow_network {
   std::size_t num_nodes = 0;
   std::vector<arc_spec> arcs;
   std::vector<std::int64_t> supply;

   std::size_t add_node()
   {
      supply.push_back(0);
      return num_nodes++;
   }
   std::size_t add_arc(const std::size_t tail, const std::size_t head, const std::int64_t capacity, const double cost)
   {
      assert(tail < num_nodes && head < num_nodes && capacity >= 0);
      arcs.push_back({tail, head, capacity, cost});
      return arcs.size() - 1;
   }
};

struct flow_solution {
   std::vector<std::int64_t> flow;      // per input arc
   std::vector<double> potential;       // per node
   double objective = 0.0;
};

struct solve_options {
   const std::vector<double>* initial_potentials = nullptr;
   // if routing gets stuck (deficit unreachable), keep the partial flow and
   // current feasible potentials instead of throwing
   bool best_effort = false;
};

class ssp_solver {
public:
   explicit ssp_solver(const flow_network& net)
      : n_(net.num_nodes), excess_(net.supply), first_(n_ + 1, 0)
   {
      assert(net.supply.size() == n_);
      const std::size_t m = net.arcs.size();
      head_.reserve(2 * m); residual_.reserve(2 * m); cost_.reserve(2 * m);
      std::vector<std::size_t> degree(n_, 0);
      for(const auto& a : net.arcs) { ++degree[a.tail]; ++degree[a.head]; }
      for(std::size_t v = 0; v < n_; ++v) { first_[v + 1] = first_[v] + degree[v]; }
      std::vector<std::size_t> pos(first_.begin(), first_.end() - 1);
      head_.resize(2 * m); residual_.resize(2 * m); cost_.resize(2 * m); twin_.resize(2 * m);
      arc_of_input_.resize(m);
      for(std::size_t i = 0; i < m; ++i) {
         const auto& a = net.arcs[i];
         const std::size_t fwd = pos[a.tail]++;
         const std::size_t bwd = pos[a.head]++;
         head_[fwd] = a.head; residual_[fwd] = a.capacity; cost_[fwd] = a.cost; twin_[fwd] = bwd;
         head_[bwd] = a.tail; residual_[bwd] = 0; cost_[bwd] = -a.cost; twin_[bwd] = fwd;
         arc_of_input_[i] = fwd;
      }
      node_of_arc_.resize(2 * m);
      for(std::size_t v = 0; v < n_; ++v)
         for(std::size_t e = first_[v]; e < first_[v + 1]; ++e) node_of_arc_[e] = v;
      potential_.assign(n_, 0.0);
   }

   // returns false iff some excess could not be routed (only with best_effort)
   bool run(const solve_options& opts)
   {
      if(opts.initial_potentials != nullptr) {
         assert(opts.initial_potentials->size() == n_);
         potential_ = *opts.initial_potentials;
      }
      if(!potentials_feasible()) { init_potentials_bellman_ford(); }

      std::int64_t total = 0;
      for(const auto e : excess_) total += e;
      if(total != 0) throw infeasible_error("flow supplies do not balance");

      for(std::size_t s = 0; s < n_; ++s) {
         while(excess_[s] > 0) {
            if(!augment_from(s)) {
               if(opts.best_effort) return false;
               throw infeasible_error("min cost flow: no feasible flow");
            }
         }
      }
      return true;
   }

   flow_solution extract(const flow_network& net) const
   {
      flow_solution sol;
      sol.flow.resize(net.arcs.size());
      sol.potential = potential_;
      sol.objective = 0.0;
      for(std::size_t i = 0; i < net.arcs.size(); ++i) {
         const std::size_t fwd = arc_of_input_[i];
         sol.flow[i] = net.arcs[i].capacity - residual_[fwd];
         sol.objective += static_cast<double>(sol.flow[i]) * net.arcs[i].cost;
      }
      return sol;
   }

private:
   static constexpr double inf = std::numeric_limits<double>::infinity();

   bool potentials_feasible() const
   {
      for(std::size_t e = 0; e < head_.size(); ++e) {
         if(residual_[e] > 0 && reduced_cost(e) < -1e-12) return false;
      }
      return true;
   }

   double reduced_cost(const std::size_t e) const
   {
      return cost_[e] - potential_[node_of_arc_[e]] + potential_[head_[e]];
   }

   void init_potentials_bellman_ford()
   {
      potential_.assign(n_, 0.0);
      for(std::size_t round = 0; round + 1 < n_; ++round) {
         bool changed = false;
         for(std::size_t e = 0; e < head_.size(); ++e) {
            if(residual_[e] == 0) continue;
            const double through = -potential_[node_of_arc_[e]] + cost_[e] + potential_[head_[e]];
            if(through < -1e-12) {
               potential_[head_[e]] -= through;
               changed = true;
            }
         }
         if(!changed) return;
      }
      // one more pass to detect negative cycles (cannot happen for the
      // networks built here; all cycles through zero-flow arcs)
      for(std::size_t e = 0; e < head_.size(); ++e) {
         if(residual_[e] > 0 && reduced_cost(e) < -1e-9)
            throw solver_error("min cost flow: negative cycle in input");
      }
   }

   bool augment_from(const std::size_t source)
   {
      assert(excess_[source] > 0);
      dist_.assign(n_, inf);
      parent_arc_.assign(n_, no_arc);
      visited_.assign(n_, false);
      using qentry = std::pair<double, std::size_t>;
      std::priority_queue<qentry, std::vector<qentry>, std::greater<qentry>> queue;
      dist_[source] = 0.0;
      queue.push({0.0, source});
      std::size_t target = no_node;
      while(!queue.empty()) {
         const auto [d, v] = queue.top();
         queue.pop();
         if(visited_[v]) continue;
         visited_[v] = true;
         if(excess_[v] < 0) { target = v; break; }
         for(std::size_t e = first_[v]; e < first_[v + 1]; ++e) {
            if(residual_[e] == 0) continue;
            const double rc = std::max(0.0, reduced_cost(e));
            const std::size_t w = head_[e];
            if(!visited_[w] && d + rc < dist_[w] - 1e-15) {
               dist_[w] = d + rc;
               parent_arc_[w] = e;
               queue.push({dist_[w], w});
            }
         }
      }
      if(target == no_node) return false;

      const double dt = dist_[target];
      for(std::size_t v = 0; v < n_; ++v) {
         potential_[v] -= std::min(visited_[v] || dist_[v] < inf ? dist_[v] : dt, dt);
      }
      std::int64_t push = std::min(excess_[source], -excess_[target]);
      for(std::size_t v = target; v != source; v = node_of_arc_[parent_arc_[v]])
         push = std::min(push, residual_[parent_arc_[v]]);
      assert(push > 0);
      for(std::size_t v = target; v != source; v = node_of_arc_[parent_arc_[v]]) {
         const std::size_t e = parent_arc_[v];
         residual_[e] -= push;
         residual_[twin_[e]] += push;
      }
      excess_[source] -= push;
      excess_[target] += push;
      return true;
   }

   static constexpr std::size_t no_arc = std::numeric_limits<std::size_t>::max();
   static constexpr std::size_t no_node = std::numeric_limits<std::size_t>::max();

   std::size_t n_;
   std::vector<std::int64_t> excess_;
   std::vector<std::size_t> first_;          // CSR offsets into arc arrays
   std::vector<std::size_t> head_, twin_, node_of_arc_, arc_of_input_;
   std::vector<std::int64_t> residual_;
   std::vector<double> cost_;
   std::vector<double> potential_;
   std::vector<double> dist_;
   std::vector<std::size_t> parent_arc_;
   std::vector<char> visited_;
};

inline flow_solution solve(const flow_network& net, const solve_options& opts = {})
{
   ssp_solver solver(net);
   solver.run(opts);
   return solver.extract(net);
}

// as in the spec of flow_solution: cost(a) - pi(tail) + pi(head) >= 0 on residual arcs
inline bool reduced_cost_optimal(const flow_network& net, const flow_solution& sol, const double tol = 1e-9)
{
   for(std::size_t i = 0; i < net.arcs.size(); ++i) {
      const auto& a = net.arcs[i];
      const double rc = a.cost - sol.potential[a.tail] + sol.potential[a.head];
      if(sol.flow[i] < a.capacity && rc < -tol) return false;
      if(sol.flow[i] > 0 && -rc < -tol) return false;
   }
   return true;
}

enum class assignment_mode { injective, bijection };

// node potentials certifying the matching in the convention
//   theta(u,l) + pi(u) - psi(l) <= 0 if matched, >= 0 if unmatched,
//   psi(l) <= tau for matched labels, >= tau for unmatched ones.
struct assignment_result {
   std::vector<std::size_t> matched_label;   // per node, label id
   std::vector<double> pi;                   // per node
   std::vector<double> psi;                  // per label
   double tau = 0.0;
   double objective = 0.0;
};

constexpr std::size_t unmatched = std::numeric_limits<std::size_t>::max();

// costs given row-wise: labels[u] lists the label ids node u may take,
// costs[u] the corresponding values.
inline assignment_result solve_assignment(const std::vector<std::vector<std::size_t>>& labels,
                                          const std::vector<std::vector<double>>& costs,
                                          const std::size_t num_labels, const assignment_mode mode)
{
   const std::size_t n = labels.size();
   assert(costs.size() == n);
   if(mode == assignment_mode::bijection && n != num_labels)
      throw not_bijective_error("bijection requires equally many nodes and labels");
   if(num_labels < n)
      throw infeasible_error("fewer labels than nodes, no injective assignment");

   flow_network net;
   for(std::size_t u = 0; u < n; ++u) { net.add_node(); net.supply[u] = 1; }
   for(std::size_t l = 0; l < num_labels; ++l) net.add_node();
   const std::size_t sink = net.add_node();
   net.supply[sink] = -static_cast<std::int64_t>(n);

   std::vector<std::array<std::size_t, 2>> arc_range(n);
   for(std::size_t u = 0; u < n; ++u) {
      arc_range[u][0] = net.arcs.size();
      assert(labels[u].size() == costs[u].size());
      for(std::size_t k = 0; k < labels[u].size(); ++k) {
         assert(labels[u][k] < num_labels);
         net.add_arc(u, n + labels[u][k], 1, costs[u][k]);
      }
      arc_range[u][1] = net.arcs.size();
   }
   for(std::size_t l = 0; l < num_labels; ++l) net.add_arc(n + l, sink, 1, 0.0);

   flow_solution sol;
   try {
      sol = solve(net);
   } catch(const infeasible_error&) {
      if(mode == assignment_mode::bijection)
         throw not_bijective_error("no perfect matching exists");
      throw;
   }

   assignment_result res;
   res.matched_label.assign(n, unmatched);
   res.objective = sol.objective;
   for(std::size_t u = 0; u < n; ++u) {
      for(std::size_t a = arc_range[u][0]; a < arc_range[u][1]; ++a) {
         if(sol.flow[a] == 1) res.matched_label[u] = net.arcs[a].head - n;
      }
      assert(res.matched_label[u] != unmatched);
   }
   res.pi.resize(n);
   res.psi.resize(num_labels);
   for(std::size_t u = 0; u < n; ++u) res.pi[u] = -sol.potential[u];
   for(std::size_t l = 0; l < num_labels; ++l) res.psi[l] = -sol.potential[n + l];
   res.tau = -sol.potential[sink];
   return res;
}

} // namespace mcf
} // namespace gmdual

#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <limits>
#include <vector>

#include "engine.hpp"
#include "factor_graph.hpp"
#include "instance.hpp"

// Primal extraction. Interleaved greedy rounding fixes one node between its
// receive and send step using the live reparametrized costs; the flow based
// rounding solves the bipartite matching over all linear reparametrized mass.
// Candidate energies are always evaluated against the original instance costs.

namespace gmdual {

// label for node u minimizing reparametrized unary plus pairwise costs to the
// already fixed nodes, excluding labels already taken; ties go to the lowest
// label id. Returns no_label if every label of u is taken.
inline std::size_t interleaved_round(factor_graph& g, const graph_matching_instance& inst, const std::size_t u,
                                     const assignment& partial)
{
   const auto& ls = inst.label_set(u);
   std::vector<char> taken(g.side_num_labels[0], 0);
   for(std::size_t v = 0; v < partial.size(); ++v)
      if(partial[v] != assignment::unassigned) taken[partial[v]] = 1;

   const simplex_factor& node = g.simplex[g.node_factor_of[0][u]];
   double best = std::numeric_limits<double>::infinity();
   std::size_t best_label = no_label;
   for(std::size_t p = 0; p < ls.size(); ++p) {
      if(taken[ls[p]]) continue;
      double c = node.cost[p];
      bool feasible = true;
      for(const std::size_t eid : g.incident_edges({factor_kind::simplex, g.node_factor_of[0][u]})) {
         const factor_edge& e = g.edges[eid];
         if(e.kind != coupling_kind::node_edge) continue;
         const pairwise_factor& pw = g.pairwise[e.b.index];
         const std::size_t other = e.slot == 0 ? pw.v : pw.u;
         if(partial[other] == assignment::unassigned) continue;
         const std::size_t po = inst.label_position(other, partial[other]);
         assert(po != no_label);
         const std::size_t pu = e.slot == 0 ? p : po;
         const std::size_t pv = e.slot == 0 ? po : p;
         if(pw.is_forbidden(pu, pv)) { feasible = false; break; }
         c += pw.at(pu, pv);
      }
      if(feasible && c < best) {
         best = c;
         best_label = ls[p];
      }
   }
   return best_label;
}

// injective assignment minimizing the summed linear reparametrized costs:
// node unaries plus, where present, the flow factor rows, the label factor
// entries and the inverse node entries
inline assignment mcf_round(factor_graph& g, const graph_matching_instance& inst)
{
   std::vector<std::vector<double>> cost(inst.num_nodes());
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      const auto& ls = inst.label_set(u);
      cost[u] = g.simplex[g.node_factor_of[0][u]].cost;
      assert(cost[u].size() == ls.size());
      if(g.flow) {
         for(std::size_t p = 0; p < ls.size(); ++p) {
            const std::size_t fp = g.flow->position_of(u, ls[p]);
            if(fp != flow_factor::no_position) cost[u][p] += g.flow->row_costs(u)[fp];
         }
      }
      for(std::size_t p = 0; p < ls.size(); ++p) {
         const std::size_t s = ls[p];
         if(!g.label_factor_of.empty() && g.label_factor_of[s] != no_label) {
            const label_factor& lf = g.labels[g.label_factor_of[s]];
            const auto it = std::lower_bound(lf.nodes.begin(), lf.nodes.end(), u);
            assert(it != lf.nodes.end() && *it == u);
            cost[u][p] += lf.cost[static_cast<std::size_t>(it - lf.nodes.begin())];
         }
         if(!g.node_factor_of[1].empty()) {
            const simplex_factor& inv = g.simplex[g.node_factor_of[1][s]];
            const std::size_t q = [&] {
               const auto& nodes = g.side_label_sets[1][s];
               const auto it = std::lower_bound(nodes.begin(), nodes.end(), u);
               assert(it != nodes.end() && *it == u);
               return static_cast<std::size_t>(it - nodes.begin());
            }();
            cost[u][p] += inv.cost[q];
         }
      }
   }
   const auto res = mcf::solve_assignment(inst.label_sets(), cost, inst.num_labels(), mcf::assignment_mode::injective);
   assignment a(inst.num_nodes());
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) a[u] = res.matched_label[u];
   return a;
}

// pass-level state for the engine's rounding hooks
class rounder {
public:
   rounder(factor_graph& g, const graph_matching_instance& inst) : g_(g), inst_(inst) {}

   void begin_pass()
   {
      partial_ = assignment(inst_.num_nodes());
      failed_ = false;
   }

   void at_factor(const factor_id& f)
   {
      if(f.kind != factor_kind::simplex || g_.simplex[f.index].inverse_side) return;
      if(failed_) return;
      const std::size_t u = g_.simplex[f.index].node;
      const std::size_t l = interleaved_round(g_, inst_, u, partial_);
      if(l == no_label) { failed_ = true; return; }
      partial_[u] = l;
   }

   void end_pass(dual_state& state)
   {
      if(!failed_ && partial_.total() && inst_.feasible(partial_)) consider(partial_, state);
      try {
         consider(mcf_round(g_, inst_), state);
      } catch(const infeasible_error&) {
         // no injective assignment from the current reparametrization
      }
   }

private:
   void consider(const assignment& a, dual_state& state) const
   {
      const double e = inst_.energy(a);
      if(e < state.best_energy) {
         state.best_energy = e;
         state.best_assignment = a;
      }
   }

   factor_graph& g_;
   const graph_matching_instance& inst_;
   assignment partial_;
   bool failed_ = false;
};

} // namespace gmdual

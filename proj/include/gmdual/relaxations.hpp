#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "engine.hpp"
#include "factor_graph.hpp"
#include "instance.hpp"

// Builders turning an instance into the factor graphs of the five
// decompositions, and the factor orders / neighborhoods of the eight derived
// algorithms. The visit order follows u_1 < ... < u_n < M < s_1 < ... with
// u < uv < v for edge factors, extended to a total order by sort keys.

namespace gmdual {

enum class method { gm_o, gm_i, amp_o, amp_i, amp_c, amcf_o, amcf_i, amcf_c };

inline const char* to_string(const method m)
{
   switch(m) {
      case method::gm_o: return "gm-o";
      case method::gm_i: return "gm-i";
      case method::amp_o: return "amp-o";
      case method::amp_i: return "amp-i";
      case method::amp_c: return "amp-c";
      case method::amcf_o: return "amcf-o";
      case method::amcf_i: return "amcf-i";
      case method::amcf_c: return "amcf-c";
   }
   return "?";
}

inline method parse_method(const std::string& name)
{
   for(const method m : {method::gm_o, method::gm_i, method::amp_o, method::amp_i, method::amp_c,
                         method::amcf_o, method::amcf_i, method::amcf_c})
      if(name == to_string(m)) return m;
   throw solver_error("unknown method '" + name + "'");
}

inline bool uses_inverse_instance(const method m) { return m == method::gm_i || m == method::amp_i || m == method::amcf_i; }
inline bool coupled(const method m) { return m == method::amp_c || m == method::amcf_c; }
inline bool needs_bijection(const method m) { return uses_inverse_instance(m) || coupled(m); }

namespace detail {

inline void add_local_polytope(factor_graph& g, const graph_matching_instance& inst, const bool inverse_side,
                               const double cost_scale)
{
   const std::size_t side = inverse_side ? 1 : 0;
   g.side_label_sets[side] = inst.label_sets();
   g.side_num_labels[side] = inst.num_labels();
   g.node_factor_of[side].resize(inst.num_nodes());

   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      simplex_factor f;
      f.node = u;
      f.inverse_side = inverse_side;
      f.cost = inst.unary_costs(u);
      for(double& c : f.cost) c *= cost_scale;
      g.node_factor_of[side][u] = g.simplex.size();
      g.simplex.push_back(std::move(f));
   }

   for(const auto& e : inst.edges()) {
      pairwise_factor f;
      f.u = e.u;
      f.v = e.v;
      f.inverse_side = inverse_side;
      f.dim_u = inst.label_set(e.u).size();
      f.dim_v = inst.label_set(e.v).size();
      f.cost.assign(f.dim_u * f.dim_v, 0.0);
      e.costs.for_each([&](const std::size_t pu, const std::size_t pv, const double c) {
         f.at(pu, pv) += c * cost_scale;
      });
      // forbid equal labels; feasible assignments never take them
      const auto& lsu = inst.label_set(e.u);
      const auto& lsv = inst.label_set(e.v);
      for(std::size_t pu = 0; pu < lsu.size(); ++pu) {
         const std::size_t pv = inst.label_position(e.v, lsu[pu]);
         if(pv != no_label) f.forbid(pu, pv);
      }
      const std::size_t idx = g.pairwise.size();
      g.pairwise.push_back(std::move(f));
      g.pairwise_of[side][{e.u, e.v}] = idx;
      g.add_edge({coupling_kind::node_edge, {factor_kind::simplex, g.node_factor_of[side][e.u]},
                  {factor_kind::pairwise, idx}, 0});
      g.add_edge({coupling_kind::node_edge, {factor_kind::simplex, g.node_factor_of[side][e.v]},
                  {factor_kind::pairwise, idx}, 1});
   }
}

// zero-cost pairwise factor with forbidden diagonal, used for the uniqueness
// fill-in edges of (R1) and for triangle edges added by tightening
inline std::size_t add_uniqueness_edge(factor_graph& g, const std::size_t u, const std::size_t v)
{
   assert(u < v);
   assert(g.pairwise_of[0].count({u, v}) == 0);
   pairwise_factor f;
   f.u = u;
   f.v = v;
   f.inverse_side = false;
   f.dim_u = g.side_label_sets[0][u].size();
   f.dim_v = g.side_label_sets[0][v].size();
   f.cost.assign(f.dim_u * f.dim_v, 0.0);
   const auto& lsu = g.side_label_sets[0][u];
   const auto& lsv = g.side_label_sets[0][v];
   for(std::size_t pu = 0; pu < lsu.size(); ++pu) {
      const auto it = std::lower_bound(lsv.begin(), lsv.end(), lsu[pu]);
      if(it != lsv.end() && *it == lsu[pu]) f.forbid(pu, static_cast<std::size_t>(it - lsv.begin()));
   }
   const std::size_t idx = g.pairwise.size();
   g.pairwise.push_back(std::move(f));
   g.pairwise_of[0][{u, v}] = idx;
   g.add_edge({coupling_kind::node_edge, {factor_kind::simplex, g.node_factor_of[0][u]},
               {factor_kind::pairwise, idx}, 0});
   g.add_edge({coupling_kind::node_edge, {factor_kind::simplex, g.node_factor_of[0][v]},
               {factor_kind::pairwise, idx}, 1});
   return idx;
}

inline bool share_a_label(const graph_matching_instance& inst, const std::size_t u, const std::size_t v)
{
   const auto& a = inst.label_set(u);
   const auto& b = inst.label_set(v);
   std::size_t i = 0, j = 0;
   while(i < a.size() && j < b.size()) {
      if(a[i] == b[j]) return true;
      a[i] < b[j] ? ++i : ++j;
   }
   return false;
}

} // namespace detail

// (R1): plain CRF over the edge set extended by a uniqueness edge for every
// node pair with a common label
inline factor_graph build_r1(const graph_matching_instance& inst)
{
   factor_graph g;
   detail::add_local_polytope(g, inst, false, 1.0);
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      for(std::size_t v = u + 1; v < inst.num_nodes(); ++v) {
         if(g.pairwise_of[0].count({u, v})) continue;
         if(detail::share_a_label(inst, u, v)) detail::add_uniqueness_edge(g, u, v);
      }
   }
   return g;
}

// (R2): local polytope plus one label factor per label with a dummy
// non-assignment entry
inline factor_graph build_r2(const graph_matching_instance& inst)
{
   factor_graph g;
   detail::add_local_polytope(g, inst, false, 1.0);
   g.label_factor_of.assign(inst.num_labels(), no_label);
   for(std::size_t s = 0; s < inst.num_labels(); ++s) {
      label_factor f;
      f.label = s;
      for(std::size_t u = 0; u < inst.num_nodes(); ++u)
         if(inst.label_position(u, s) != no_label) f.nodes.push_back(u);
      f.cost.assign(f.nodes.size() + 1, 0.0);
      const std::size_t idx = g.labels.size();
      g.label_factor_of[s] = idx;
      g.labels.push_back(std::move(f));
      for(std::size_t k = 0; k < g.labels[idx].nodes.size(); ++k) {
         const std::size_t u = g.labels[idx].nodes[k];
         factor_edge e{coupling_kind::node_label, {factor_kind::simplex, g.node_factor_of[0][u]},
                       {factor_kind::label, idx}, 0};
         e.pos_a = inst.label_position(u, s);
         e.pos_b = k;
         g.add_edge(e);
      }
   }
   return g;
}

// (R3): local polytope plus the linear assignment factor
inline factor_graph build_r3(const graph_matching_instance& inst)
{
   factor_graph g;
   detail::add_local_polytope(g, inst, false, 1.0);
   g.flow.emplace(inst.label_sets(), inst.num_labels(), mcf::assignment_mode::injective);
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      factor_edge e{coupling_kind::node_flow, {factor_kind::simplex, g.node_factor_of[0][u]}, {factor_kind::flow, 0}, 0};
      e.entity = u;
      g.add_edge(e);
   }
   return g;
}

// (R4): original and inverse local polytopes, costs split equally, node
// factors coupled to their inverse counterparts
inline factor_graph build_r4(const graph_matching_instance& inst)
{
   const graph_matching_instance inverse = build_inverse(inst);
   factor_graph g;
   detail::add_local_polytope(g, inst, false, 0.5);
   detail::add_local_polytope(g, inverse, true, 0.5);
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      const auto& ls = inst.label_set(u);
      for(std::size_t p = 0; p < ls.size(); ++p) {
         const std::size_t s = ls[p];
         factor_edge e{coupling_kind::node_node, {factor_kind::simplex, g.node_factor_of[0][u]},
                       {factor_kind::simplex, g.node_factor_of[1][s]}, 0};
         e.pos_a = p;
         e.pos_b = inverse.label_position(s, u);
         assert(e.pos_b != no_label);
         g.add_edge(e);
      }
   }
   return g;
}

// (R5): both local polytopes with the flow factor mediating the coupling
inline factor_graph build_r5(const graph_matching_instance& inst)
{
   const graph_matching_instance inverse = build_inverse(inst);
   factor_graph g;
   detail::add_local_polytope(g, inst, false, 0.5);
   detail::add_local_polytope(g, inverse, true, 0.5);
   g.flow.emplace(inst.label_sets(), inst.num_labels(), mcf::assignment_mode::bijection);
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      factor_edge e{coupling_kind::node_flow, {factor_kind::simplex, g.node_factor_of[0][u]}, {factor_kind::flow, 0}, 0};
      e.entity = u;
      g.add_edge(e);
   }
   for(std::size_t s = 0; s < inst.num_labels(); ++s) {
      factor_edge e{coupling_kind::label_flow, {factor_kind::simplex, g.node_factor_of[1][s]}, {factor_kind::flow, 0}, 0};
      e.entity = s;
      g.add_edge(e);
   }
   return g;
}

inline factor_graph build_relaxation(const method m, const graph_matching_instance& inst)
{
   switch(m) {
      case method::gm_o:
      case method::gm_i: return build_r1(inst);
      case method::amp_o:
      case method::amp_i: return build_r2(inst);
      case method::amp_c: return build_r4(inst);
      case method::amcf_o:
      case method::amcf_i: return build_r3(inst);
      case method::amcf_c: return build_r5(inst);
   }
   assert(false);
   return {};
}

namespace detail {

inline double order_key(const factor_graph& g, const factor_id& f)
{
   const double n0 = static_cast<double>(g.node_factor_of[0].size());
   switch(f.kind) {
      case factor_kind::simplex: {
         const auto& s = g.simplex[f.index];
         return s.inverse_side ? n0 + static_cast<double>(s.node) : static_cast<double>(s.node);
      }
      case factor_kind::pairwise: {
         const auto& p = g.pairwise[f.index];
         const double base = p.inverse_side ? n0 : 0.0;
         return base + 0.5 * static_cast<double>(p.u + p.v);
      }
      case factor_kind::label: return n0 + static_cast<double>(g.labels[f.index].label);
      case factor_kind::flow: return n0 - 0.5;
      case factor_kind::triplet: {
         const auto& t = g.triplets[f.index];
         return 0.25 * static_cast<double>(t.nodes[1] + 3 * t.nodes[2]);
      }
   }
   assert(false);
   return 0.0;
}

inline int kind_rank(const factor_kind k)
{
   switch(k) {
      case factor_kind::simplex: return 0;
      case factor_kind::pairwise: return 1;
      case factor_kind::flow: return 2;
      case factor_kind::label: return 3;
      case factor_kind::triplet: return 4;
   }
   return 5;
}

} // namespace detail

// Table 1: the visited factors and their receive/send neighborhoods. The flow
// factor never receives from node factors directly (they push to it during
// their own send step); with the reversal this also makes nodes receive
// singleton messages from the flow factor on alternating passes.
inline schedule build_schedule(const method m, const factor_graph& g)
{
   const bool amcf_family = m == method::amcf_o || m == method::amcf_i || m == method::amcf_c;

   std::vector<factor_id> visited;
   for(std::size_t i = 0; i < g.simplex.size(); ++i) visited.push_back({factor_kind::simplex, i});
   for(std::size_t i = 0; i < g.labels.size(); ++i) visited.push_back({factor_kind::label, i});
   for(std::size_t i = 0; i < g.triplets.size(); ++i) visited.push_back({factor_kind::triplet, i});
   if(g.flow) visited.push_back({factor_kind::flow, 0});

   std::sort(visited.begin(), visited.end(), [&](const factor_id& a, const factor_id& b) {
      const double ka = detail::order_key(g, a);
      const double kb = detail::order_key(g, b);
      if(ka != kb) return ka < kb;
      if(a.kind != b.kind) return detail::kind_rank(a.kind) < detail::kind_rank(b.kind);
      return a.index < b.index;
   });

   schedule s;
   for(const factor_id& f : visited) {
      schedule::entry entry;
      entry.factor = f;
      const double key = detail::order_key(g, f);
      for(const std::size_t eid : g.incident_edges(f)) {
         const factor_id j = g.edges[eid].other(f);
         const bool precedes = detail::order_key(g, j) < key;
         const bool receive =
            precedes && (!amcf_family || j.kind == factor_kind::pairwise || j.kind == factor_kind::triplet);
         (receive ? entry.receive_edges : entry.send_edges).push_back(eid);
      }
      s.entries.push_back(std::move(entry));
   }
   return s;
}

} // namespace gmdual

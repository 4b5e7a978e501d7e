#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <set>
#include <vector>

#include "factor_graph.hpp"
#include "instance.hpp"
#include "relaxations.hpp"

// Cutting plane tightening: search triangles of the extended edge set whose
// joint minimum exceeds the sum of the independent edge minima (the triangle
// consistency gap, computed on the current reparametrized costs) and add
// zero-initialized triplet factors for the best ones.

namespace gmdual {

struct triplet_candidate {
   std::array<std::size_t, 3> nodes;   // ascending
   double score;
};

struct duplicate_triplet_error : solver_error {
   using solver_error::solver_error;
};

namespace detail {

// costs and mask of the pair (u,v) as seen by a triangle: the pairwise factor
// if present, otherwise an implicit zero matrix with forbidden diagonal
struct triangle_edge_view {
   const pairwise_factor* factor = nullptr;
   const std::vector<std::size_t>* labels_u = nullptr;
   const std::vector<std::size_t>* labels_v = nullptr;

   double cost(const std::size_t pu, const std::size_t pv) const { return factor ? factor->at(pu, pv) : 0.0; }
   bool forbidden(const std::size_t pu, const std::size_t pv) const
   {
      if(factor) return factor->is_forbidden(pu, pv);
      return (*labels_u)[pu] == (*labels_v)[pv];
   }
   double min() const
   {
      double m = infinite_cost;
      for(std::size_t pu = 0; pu < labels_u->size(); ++pu)
         for(std::size_t pv = 0; pv < labels_v->size(); ++pv)
            if(!forbidden(pu, pv)) m = std::min(m, cost(pu, pv));
      return m;
   }
};

inline triangle_edge_view edge_view(const factor_graph& g, const std::size_t u, const std::size_t v)
{
   triangle_edge_view view;
   view.labels_u = &g.side_label_sets[0][u];
   view.labels_v = &g.side_label_sets[0][v];
   const auto it = g.pairwise_of[0].find({u, v});
   if(it != g.pairwise_of[0].end()) view.factor = &g.pairwise[it->second];
   return view;
}

inline double triangle_gap(const factor_graph& g, const std::size_t u, const std::size_t v, const std::size_t w)
{
   const triangle_edge_view uv = edge_view(g, u, v);
   const triangle_edge_view uw = edge_view(g, u, w);
   const triangle_edge_view vw = edge_view(g, v, w);
   const auto& lsu = g.side_label_sets[0][u];
   const auto& lsv = g.side_label_sets[0][v];
   const auto& lsw = g.side_label_sets[0][w];

   double joint = infinite_cost;
   for(std::size_t pu = 0; pu < lsu.size(); ++pu) {
      for(std::size_t pv = 0; pv < lsv.size(); ++pv) {
         if(uv.forbidden(pu, pv)) continue;
         const double c_uv = uv.cost(pu, pv);
         for(std::size_t pw = 0; pw < lsw.size(); ++pw) {
            if(uw.forbidden(pu, pw) || vw.forbidden(pv, pw)) continue;
            joint = std::min(joint, c_uv + uw.cost(pu, pw) + vw.cost(pv, pw));
         }
      }
   }
   if(joint == infinite_cost) return 0.0;   // no consistent state, nothing a triplet could express
   const double independent = uv.min() + uw.min() + vw.min();
   return joint - independent;
}

} // namespace detail

// up to budget node triplets ranked by the consistency gap; only triangles of
// the extended edge set (instance edges plus pairs sharing a label) qualify
inline std::vector<triplet_candidate> find_violated_cycles(const factor_graph& g,
                                                           const graph_matching_instance& inst,
                                                           const std::size_t budget)
{
   std::vector<triplet_candidate> candidates;
   if(budget == 0) return candidates;

   const std::size_t n = inst.num_nodes();
   std::vector<std::vector<char>> connected(n, std::vector<char>(n, 0));
   for(std::size_t u = 0; u < n; ++u) {
      for(std::size_t v = u + 1; v < n; ++v) {
         if(g.pairwise_of[0].count({u, v}) || detail::share_a_label(inst, u, v)) {
            connected[u][v] = connected[v][u] = 1;
         }
      }
   }
   std::set<std::array<std::size_t, 3>> existing;
   for(const auto& t : g.triplets) existing.insert(t.nodes);

   for(std::size_t u = 0; u < n; ++u) {
      for(std::size_t v = u + 1; v < n; ++v) {
         if(!connected[u][v]) continue;
         for(std::size_t w = v + 1; w < n; ++w) {
            if(!connected[u][w] || !connected[v][w]) continue;
            if(existing.count({u, v, w})) continue;
            const double gap = detail::triangle_gap(g, u, v, w);
            if(gap > 1e-9) candidates.push_back({{u, v, w}, gap});
         }
      }
   }
   std::sort(candidates.begin(), candidates.end(), [](const triplet_candidate& a, const triplet_candidate& b) {
      if(a.score != b.score) return a.score > b.score;
      return a.nodes < b.nodes;
   });
   if(candidates.size() > budget) candidates.resize(budget);
   return candidates;
}

// inserts zero-cost triplet factors coupled to their three pairwise factors,
// creating missing uniqueness edges on demand; bound-neutral at insertion
inline std::size_t add_triplets(factor_graph& g, const std::vector<triplet_candidate>& candidates)
{
   std::set<std::array<std::size_t, 3>> existing;
   for(const auto& t : g.triplets) existing.insert(t.nodes);

   for(const auto& cand : candidates) {
      const auto [u, v, w] = cand.nodes;
      assert(u < v && v < w);
      if(existing.count(cand.nodes)) throw duplicate_triplet_error("triplet already present");
      existing.insert(cand.nodes);

      const auto pair_factor = [&](const std::size_t a, const std::size_t b) {
         const auto it = g.pairwise_of[0].find({a, b});
         if(it != g.pairwise_of[0].end()) return it->second;
         return detail::add_uniqueness_edge(g, a, b);
      };
      const std::array<std::size_t, 3> pw = {pair_factor(u, v), pair_factor(u, w), pair_factor(v, w)};

      triplet_factor t;
      t.nodes = cand.nodes;
      t.dims = {g.side_label_sets[0][u].size(), g.side_label_sets[0][v].size(), g.side_label_sets[0][w].size()};
      t.cost.assign(t.dims[0] * t.dims[1] * t.dims[2], 0.0);
      t.forbidden.assign(t.cost.size(), 0);
      for(std::size_t pu = 0; pu < t.dims[0]; ++pu)
         for(std::size_t pv = 0; pv < t.dims[1]; ++pv)
            for(std::size_t pz = 0; pz < t.dims[2]; ++pz) {
               const bool bad = g.pairwise[pw[0]].is_forbidden(pu, pv) || g.pairwise[pw[1]].is_forbidden(pu, pz)
                             || g.pairwise[pw[2]].is_forbidden(pv, pz);
               if(bad) t.forbidden[t.flat(pu, pv, pz)] = 1;
            }
      const std::size_t idx = g.triplets.size();
      g.triplets.push_back(std::move(t));
      for(std::uint8_t slot = 0; slot < 3; ++slot)
         g.add_edge({coupling_kind::edge_triplet, {factor_kind::pairwise, pw[slot]}, {factor_kind::triplet, idx}, slot});
   }
   return candidates.size();
}

} // namespace gmdual

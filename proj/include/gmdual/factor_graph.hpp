#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "factors.hpp"
#include "instance.hpp"

// Factor graph of a decomposition: factors plus factor-edges carrying the
// coupling maps, represented implicitly by kind-specific message routines.
// A message delta is subtracted from the sender and added to the receiver;
// it is admissible iff delta(s) <= 0 where the sender's optimum projects to 1
// and >= 0 elsewhere, and the optimum stays optimal afterwards.

namespace gmdual {

enum class factor_kind : std::uint8_t { simplex, pairwise, label, flow, triplet };

struct factor_id {
   factor_kind kind = factor_kind::simplex;
   std::size_t index = 0;
   friend bool operator==(const factor_id& a, const factor_id& b)
   {
      return a.kind == b.kind && a.index == b.index;
   }
   friend bool operator<(const factor_id& a, const factor_id& b)
   {
      return a.kind != b.kind ? a.kind < b.kind : a.index < b.index;
   }
};

enum class coupling_kind : std::uint8_t {
   node_edge,     // simplex <-> pairwise, vector over the endpoint's labels
   node_label,    // simplex <-> label factor, scalar
   node_node,     // original simplex <-> inverse simplex, scalar
   node_flow,     // simplex <-> flow row, vector over the node's labels
   label_flow,    // inverse simplex <-> flow column, vector over the label's nodes
   edge_triplet,  // pairwise <-> triplet, vector over the pair's states
};

struct factor_edge {
   coupling_kind kind;
   factor_id a, b;
   std::uint8_t slot = 0;         // node_edge: 1 iff a is the second endpoint; edge_triplet: pair slot
   std::size_t pos_a = 0;         // scalar couplings: position within a's cost vector
   std::size_t pos_b = 0;         // scalar couplings: position within b's cost vector
   std::size_t entity = 0;        // node_flow: node id; label_flow: label id

   factor_id other(const factor_id& f) const { return f == a ? b : a; }
};

struct message_batch {
   factor_id sender;
   double sender_min_before = 0.0;
   std::size_t sender_state_before = 0;            // flat state index, unused for flow
   std::vector<std::size_t> matching_before;       // flow sender only
   std::vector<std::pair<std::size_t, std::vector<double>>> deltas;   // (edge id, delta)
};

// called twice per batch: before the costs are updated and after
using message_observer = std::function<void(const message_batch&, bool before)>;

class factor_graph {
public:
   std::vector<simplex_factor> simplex;
   std::vector<pairwise_factor> pairwise;
   std::vector<label_factor> labels;
   std::vector<triplet_factor> triplets;
   std::optional<flow_factor> flow;
   std::vector<factor_edge> edges;

   // side 0 is the graph's own (primary) instance, side 1 the inverse one
   std::array<std::vector<std::vector<std::size_t>>, 2> side_label_sets;
   std::array<std::size_t, 2> side_num_labels{0, 0};
   std::array<std::vector<std::size_t>, 2> node_factor_of;   // node -> simplex index
   std::array<std::map<std::pair<std::size_t, std::size_t>, std::size_t>, 2> pairwise_of;
   std::vector<std::size_t> label_factor_of;                 // label -> label factor index

   std::size_t num_factors() const
   {
      return simplex.size() + pairwise.size() + labels.size() + triplets.size() + (flow ? 1 : 0);
   }

   std::size_t add_edge(factor_edge e)
   {
      edges.push_back(e);
      adjacency_valid_ = false;
      return edges.size() - 1;
   }

   const std::vector<std::size_t>& incident_edges(const factor_id& f) const
   {
      ensure_adjacency();
      return adjacency_.at(f);
   }

   // --- per factor dispatch --------------------------------------------------

   factor_optimum optimize(const factor_id& f)
   {
      switch(f.kind) {
         case factor_kind::simplex: return simplex[f.index].optimize();
         case factor_kind::pairwise: return pairwise[f.index].optimize();
         case factor_kind::label: return labels[f.index].optimize();
         case factor_kind::triplet: return triplets[f.index].optimize();
         case factor_kind::flow: return flow->optimize();
      }
      assert(false);
      return {};
   }

   double dual_bound()
   {
      double lb = 0.0;
      for(auto& f : simplex) lb += f.optimize().value;
      for(auto& f : pairwise) lb += f.optimize().value;
      for(auto& f : labels) lb += f.optimize().value;
      for(auto& f : triplets) lb += f.optimize().value;
      if(flow) lb += flow->optimize().value;
      return lb;
   }

   std::size_t coupling_dimension(const std::size_t edge_id) const
   {
      const factor_edge& e = edges[edge_id];
      switch(e.kind) {
         case coupling_kind::node_edge: {
            const auto& pw = pairwise[e.b.index];
            return e.slot == 0 ? pw.dim_u : pw.dim_v;
         }
         case coupling_kind::node_label:
         case coupling_kind::node_node: return 1;
         case coupling_kind::node_flow: return simplex[e.a.index].size();
         case coupling_kind::label_flow: return simplex[e.a.index].size();
         case coupling_kind::edge_triplet: return pairwise[e.a.index].size();
      }
      assert(false);
      return 0;
   }

   // binary image nu = A_(i,j) x_i of a sender state under the coupling map
   std::vector<char> coupling_image(const std::size_t edge_id, const factor_id& sender,
                                    const std::size_t sender_state,
                                    const std::vector<std::size_t>* flow_matching = nullptr) const
   {
      const factor_edge& e = edges[edge_id];
      std::vector<char> nu(coupling_dimension(edge_id), 0);
      switch(e.kind) {
         case coupling_kind::node_edge: {
            if(sender == e.a) {
               nu[sender_state] = 1;
            } else {
               const auto& pw = pairwise[e.b.index];
               const std::size_t pu = sender_state / pw.dim_v;
               const std::size_t pv = sender_state % pw.dim_v;
               nu[e.slot == 0 ? pu : pv] = 1;
            }
            break;
         }
         case coupling_kind::node_label: {
            if(sender == e.a) nu[0] = sender_state == e.pos_a;
            else nu[0] = sender_state == e.pos_b;
            break;
         }
         case coupling_kind::node_node: {
            if(sender == e.a) nu[0] = sender_state == e.pos_a;
            else nu[0] = sender_state == e.pos_b;
            break;
         }
         case coupling_kind::node_flow:
         case coupling_kind::label_flow: {
            if(sender == e.a) {
               nu[sender_state] = 1;
            } else {
               assert(flow_matching != nullptr);
               if(e.kind == coupling_kind::node_flow) {
                  const std::size_t l = (*flow_matching)[e.entity];
                  const std::size_t p = flow->position_of(e.entity, l);
                  nu[p] = 1;
               } else {
                  // the inverse simplex over X'_l lists original nodes; mark the matched one
                  const auto& nodes = flow->column_nodes(e.entity);
                  for(std::size_t j = 0; j < nodes.size(); ++j)
                     if((*flow_matching)[nodes[j]] == e.entity) nu[j] = 1;
               }
            }
            break;
         }
         case coupling_kind::edge_triplet: {
            if(sender == e.a) {
               nu[sender_state] = 1;
            } else {
               const auto& t = triplets[e.b.index];
               const auto s = t.unflatten(sender_state);
               const auto& pw = pairwise[e.a.index];
               std::size_t pu = 0, pv = 0;
               if(e.slot == 0) { pu = s[0]; pv = s[1]; }
               else if(e.slot == 1) { pu = s[0]; pv = s[2]; }
               else { pu = s[1]; pv = s[2]; }
               nu[pu * pw.dim_v + pv] = 1;
            }
            break;
         }
      }
      return nu;
   }

   // adds sign * delta to the given factor along the coupling of edge_id
   void apply_delta(const std::size_t edge_id, const factor_id& target, const std::vector<double>& delta, const double sign)
   {
      const factor_edge& e = edges[edge_id];
      switch(e.kind) {
         case coupling_kind::node_edge: {
            if(target == e.a) {
               auto& s = simplex[e.a.index];
               assert(delta.size() == s.size());
               for(std::size_t i = 0; i < delta.size(); ++i) s.cost[i] += sign * delta[i];
            } else {
               auto& pw = pairwise[e.b.index];
               if(e.slot == 0) {
                  assert(delta.size() == pw.dim_u);
                  for(std::size_t pu = 0; pu < pw.dim_u; ++pu)
                     for(std::size_t pv = 0; pv < pw.dim_v; ++pv) pw.at(pu, pv) += sign * delta[pu];
               } else {
                  assert(delta.size() == pw.dim_v);
                  for(std::size_t pu = 0; pu < pw.dim_u; ++pu)
                     for(std::size_t pv = 0; pv < pw.dim_v; ++pv) pw.at(pu, pv) += sign * delta[pv];
               }
            }
            break;
         }
         case coupling_kind::node_label: {
            assert(delta.size() == 1);
            if(target == e.a) simplex[e.a.index].cost[e.pos_a] += sign * delta[0];
            else labels[e.b.index].cost[e.pos_b] += sign * delta[0];
            break;
         }
         case coupling_kind::node_node: {
            assert(delta.size() == 1);
            if(target == e.a) simplex[e.a.index].cost[e.pos_a] += sign * delta[0];
            else simplex[e.b.index].cost[e.pos_b] += sign * delta[0];
            break;
         }
         case coupling_kind::node_flow: {
            if(target == e.a) {
               auto& s = simplex[e.a.index];
               assert(delta.size() == s.size());
               for(std::size_t i = 0; i < delta.size(); ++i) s.cost[i] += sign * delta[i];
            } else {
               assert(sign > 0);   // pushes into the flow factor go through add_to_row
               flow->add_to_row(e.entity, delta);
            }
            break;
         }
         case coupling_kind::label_flow: {
            if(target == e.a) {
               auto& s = simplex[e.a.index];
               assert(delta.size() == s.size());
               for(std::size_t i = 0; i < delta.size(); ++i) s.cost[i] += sign * delta[i];
            } else {
               assert(false);   // column pushes into the flow factor are never scheduled
            }
            break;
         }
         case coupling_kind::edge_triplet: {
            if(target == e.a) {
               auto& pw = pairwise[e.a.index];
               assert(delta.size() == pw.size());
               for(std::size_t i = 0; i < delta.size(); ++i) pw.cost[i] += sign * delta[i];
            } else {
               auto& t = triplets[e.b.index];
               for(std::size_t i = 0; i < t.size(); ++i) {
                  const auto s = t.unflatten(i);
                  std::size_t pu = 0, pv = 0;
                  const auto& pw = pairwise[e.a.index];
                  if(e.slot == 0) { pu = s[0]; pv = s[1]; }
                  else if(e.slot == 1) { pu = s[0]; pv = s[2]; }
                  else { pu = s[1]; pv = s[2]; }
                  t.cost[i] += sign * delta[pu * pw.dim_v + pv];
               }
            }
            break;
         }
      }
   }

   // --- Procedure 1: send maximal admissible messages from one factor -------

   void send_messages(const factor_id& sender, const std::vector<std::size_t>& edge_ids,
                      const message_observer* observer = nullptr)
   {
      if(edge_ids.empty()) return;
      switch(sender.kind) {
         case factor_kind::simplex: send_from_simplex_like(sender, edge_ids, observer); break;
         case factor_kind::label: send_from_simplex_like(sender, edge_ids, observer); break;
         case factor_kind::pairwise: {
            for(const std::size_t eid : edge_ids) send_from_pairwise(sender, eid, observer);
            break;
         }
         case factor_kind::triplet: {
            // sequential singleton sends, no division
            for(const std::size_t eid : edge_ids) send_from_triplet(sender, eid, observer);
            break;
         }
         case factor_kind::flow: send_from_flow(edge_ids, observer); break;
      }
   }

   // total reparametrized cost of a feasible primary-side labeling across all
   // factors; equals the original energy after any number of reparametrizations
   double decomposed_cost(const assignment& x) const
   {
      const auto pos0 = [&](const std::size_t u, const std::size_t s) {
         const auto& ls = side_label_sets[0][u];
         const auto it = std::lower_bound(ls.begin(), ls.end(), s);
         assert(it != ls.end() && *it == s);
         return static_cast<std::size_t>(it - ls.begin());
      };
      std::vector<std::size_t> inverse_of(side_num_labels[0], no_label);
      for(std::size_t u = 0; u < x.size(); ++u) {
         assert(x[u] != assignment::unassigned);
         inverse_of[x[u]] = u;
      }
      const auto pos1 = [&](const std::size_t s, const std::size_t u) {
         const auto& ls = side_label_sets[1][s];
         const auto it = std::lower_bound(ls.begin(), ls.end(), u);
         assert(it != ls.end() && *it == u);
         return static_cast<std::size_t>(it - ls.begin());
      };

      double total = 0.0;
      for(const auto& f : simplex) {
         if(!f.inverse_side) {
            total += f.cost[pos0(f.node, x[f.node])];
         } else {
            const std::size_t u = inverse_of[f.node];
            assert(u != no_label);   // bijective builds only
            total += f.cost[pos1(f.node, u)];
         }
      }
      for(const auto& f : pairwise) {
         std::size_t pu = 0, pv = 0;
         if(!f.inverse_side) {
            pu = pos0(f.u, x[f.u]);
            pv = pos0(f.v, x[f.v]);
         } else {
            pu = pos1(f.u, inverse_of[f.u]);
            pv = pos1(f.v, inverse_of[f.v]);
         }
         assert(!f.is_forbidden(pu, pv));
         total += f.at(pu, pv);
      }
      for(const auto& f : labels) {
         const std::size_t u = f.label < inverse_of.size() ? inverse_of[f.label] : no_label;
         if(u == no_label) {
            total += f.cost[f.dummy_index()];
         } else {
            const auto it = std::lower_bound(f.nodes.begin(), f.nodes.end(), u);
            assert(it != f.nodes.end() && *it == u);
            total += f.cost[static_cast<std::size_t>(it - f.nodes.begin())];
         }
      }
      for(const auto& f : triplets) {
         const std::size_t pu = pos0(f.nodes[0], x[f.nodes[0]]);
         const std::size_t pv = pos0(f.nodes[1], x[f.nodes[1]]);
         const std::size_t pw = pos0(f.nodes[2], x[f.nodes[2]]);
         total += f.cost[f.flat(pu, pv, pw)];
      }
      if(flow) {
         for(std::size_t u = 0; u < flow->num_nodes(); ++u) {
            const std::size_t p = flow->position_of(u, x[u]);
            assert(p != flow_factor::no_position);
            total += flow->row_costs(u)[p];
         }
      }
      return total;
   }

private:
   void emit(const message_batch& batch, const message_observer* observer, const bool before) const
   {
      if(observer && *observer) (*observer)(batch, before);
   }

   void send_from_simplex_like(const factor_id& sender, const std::vector<std::size_t>& edge_ids,
                               const message_observer* observer)
   {
      const std::vector<double>& cost =
         sender.kind == factor_kind::label ? labels[sender.index].cost : simplex[sender.index].cost;
      const double scale = 1.0 / static_cast<double>(edge_ids.size());
      const bool singleton = edge_ids.size() == 1;
      const std::size_t arg = detail::argmin_lowest(cost);

      message_batch batch;
      batch.sender = sender;
      batch.sender_min_before = cost[arg];
      batch.sender_state_before = arg;

      std::vector<double> vector_delta;   // shared by all vector-coupled recipients
      for(const std::size_t eid : edge_ids) {
         const factor_edge& e = edges[eid];
         switch(e.kind) {
            case coupling_kind::node_edge:
            case coupling_kind::node_flow:
            case coupling_kind::label_flow: {
               assert(e.a == sender);
               if(vector_delta.empty()) {
                  vector_delta.resize(cost.size());
                  for(std::size_t i = 0; i < cost.size(); ++i) vector_delta[i] = (cost[i] - cost[arg]) * scale;
               }
               batch.deltas.emplace_back(eid, vector_delta);
               break;
            }
            case coupling_kind::node_label:
            case coupling_kind::node_node: {
               const std::size_t p = sender == e.a ? e.pos_a : e.pos_b;
               double m = 0.0;
               if(singleton) {
                  const double rest = detail::min_excluding(cost, p);
                  m = rest == infinite_cost ? 0.0 : cost[p] - rest;
               } else {
                  m = (cost[p] - cost[arg]) * scale;
               }
               batch.deltas.emplace_back(eid, std::vector<double>{m});
               break;
            }
            default: assert(false);
         }
      }

      emit(batch, observer, true);
      for(const auto& [eid, delta] : batch.deltas) {
         apply_delta(eid, sender, delta, -1.0);
         apply_delta(eid, edges[eid].other(sender), delta, +1.0);
      }
      emit(batch, observer, false);
   }

   void send_from_pairwise(const factor_id& sender, const std::size_t eid, const message_observer* observer)
   {
      auto& pw = pairwise[sender.index];
      const factor_edge& e = edges[eid];
      message_batch batch;
      batch.sender = sender;
      const auto opt = pw.optimize();
      batch.sender_min_before = opt.value;
      batch.sender_state_before = opt.state;

      if(e.kind == coupling_kind::node_edge) {
         assert(e.b == sender);
         batch.deltas.emplace_back(eid, pw.msg_to_node(e.slot == 0));
      } else {
         assert(e.kind == coupling_kind::edge_triplet && e.a == sender);
         batch.deltas.emplace_back(eid, pw.msg_to_triplet(1.0));
      }

      emit(batch, observer, true);
      apply_delta(eid, sender, batch.deltas[0].second, -1.0);
      apply_delta(eid, e.other(sender), batch.deltas[0].second, +1.0);
      emit(batch, observer, false);
   }

   void send_from_triplet(const factor_id& sender, const std::size_t eid, const message_observer* observer)
   {
      auto& t = triplets[sender.index];
      const factor_edge& e = edges[eid];
      assert(e.kind == coupling_kind::edge_triplet && e.b == sender);
      message_batch batch;
      batch.sender = sender;
      const auto opt = t.optimize();
      batch.sender_min_before = opt.value;
      batch.sender_state_before = opt.state;
      batch.deltas.emplace_back(eid, t.msg_to_edge(e.slot));

      emit(batch, observer, true);
      apply_delta(eid, sender, batch.deltas[0].second, -1.0);
      apply_delta(eid, e.other(sender), batch.deltas[0].second, +1.0);
      emit(batch, observer, false);
   }

   void send_from_flow(const std::vector<std::size_t>& edge_ids, const message_observer* observer)
   {
      std::vector<std::size_t> node_edges, label_edges;
      for(const std::size_t eid : edge_ids) {
         if(edges[eid].kind == coupling_kind::node_flow) node_edges.push_back(eid);
         else { assert(edges[eid].kind == coupling_kind::label_flow); label_edges.push_back(eid); }
      }
      if(!node_edges.empty()) send_from_flow_side(flow_factor::side::nodes, node_edges, observer);
      if(!label_edges.empty()) send_from_flow_side(flow_factor::side::labels, label_edges, observer);
   }

   void send_from_flow_side(const flow_factor::side s, const std::vector<std::size_t>& edge_ids,
                            const message_observer* observer)
   {
      std::vector<std::size_t> J;
      J.reserve(edge_ids.size());
      for(const std::size_t eid : edge_ids) J.push_back(edges[eid].entity);

      message_batch batch;
      batch.sender = {factor_kind::flow, 0};
      batch.sender_min_before = flow->optimize().value;
      batch.matching_before = flow->matching();

      auto deltas = flow->adjustment_messages(s, J);
      assert(deltas.size() == edge_ids.size());
      for(std::size_t k = 0; k < edge_ids.size(); ++k)
         batch.deltas.emplace_back(edge_ids[k], std::move(deltas[k]));

      emit(batch, observer, true);
      for(std::size_t k = 0; k < edge_ids.size(); ++k) {
         const auto& [eid, delta] = batch.deltas[k];
         if(s == flow_factor::side::nodes) flow->subtract_from_row(edges[eid].entity, delta);
         else flow->subtract_from_column(edges[eid].entity, delta);
         apply_delta(eid, edges[eid].a, delta, +1.0);
      }
      emit(batch, observer, false);
   }

   void ensure_adjacency() const
   {
      if(adjacency_valid_) return;
      adjacency_.clear();
      for(std::size_t i = 0; i < edges.size(); ++i) {
         adjacency_[edges[i].a].push_back(i);
         adjacency_[edges[i].b].push_back(i);
      }
      adjacency_valid_ = true;
   }

   mutable bool adjacency_valid_ = false;
   mutable std::map<factor_id, std::vector<std::size_t>> adjacency_;
};

// admissibility of a message for a simplex-style cost vector under the
// identity coupling: correct sign pattern and x* stays optimal for theta - delta
inline bool check_admissible(const std::vector<double>& delta, const std::vector<double>& theta,
                             const std::size_t x_star, const double tol = 1e-9)
{
   assert(delta.size() == theta.size());
   for(std::size_t s = 0; s < delta.size(); ++s) {
      if(s == x_star ? delta[s] > tol : delta[s] < -tol) return false;
   }
   double new_min = infinite_cost;
   for(std::size_t s = 0; s < delta.size(); ++s) new_min = std::min(new_min, theta[s] - delta[s]);
   return theta[x_star] - delta[x_star] <= new_min + tol;
}

} // namespace gmdual

#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <limits>
#include <vector>

#include "errors.hpp"
#include "mcf.hpp"

// The concrete subproblems of the decompositions: simplex (node), pairwise
// (edge), label, flow (linear assignment) and triplet factors, together with
// their optimize routines and the closed-form pieces of the message
// computations. Forbidden states are kept as masks and skipped in all minima;
// no infinities are ever stored.

namespace gmdual {

constexpr double infinite_cost = std::numeric_limits<double>::infinity();

namespace detail {

inline std::size_t argmin_lowest(const std::vector<double>& v)
{
   assert(!v.empty());
   std::size_t best = 0;
   for(std::size_t i = 1; i < v.size(); ++i)
      if(v[i] < v[best]) best = i;
   return best;
}

inline double min_excluding(const std::vector<double>& v, const std::size_t skip)
{
   double m = infinite_cost;
   for(std::size_t i = 0; i < v.size(); ++i)
      if(i != skip) m = std::min(m, v[i]);
   return m;
}

} // namespace detail

struct factor_optimum {
   double value = 0.0;
   std::size_t state = 0;   // flat state index, factor-kind specific
};

// ---------------------------------------------------------------------------

struct simplex_factor {
   std::vector<double> cost;
   std::size_t node = 0;        // id within its side's graph
   bool inverse_side = false;

   std::size_t size() const { return cost.size(); }

   factor_optimum optimize() const
   {
      const std::size_t a = detail::argmin_lowest(cost);
      return {cost[a], a};
   }

   // Delta = (theta - min theta) * scale per coupled copy
   std::vector<double> msg_to_edges(const double scale) const
   {
      const double m = cost[detail::argmin_lowest(cost)];
      std::vector<double> delta(cost.size());
      for(std::size_t i = 0; i < cost.size(); ++i) delta[i] = (cost[i] - m) * scale;
      return delta;
   }

   // scalar message touching only entry p. Singleton messages take the
   // minimum over the remaining entries, full sends the global minimum.
   double msg_to_scalar(const std::size_t p, const bool exclude_target, const double scale) const
   {
      assert(p < cost.size());
      if(exclude_target) {
         const double m = detail::min_excluding(cost, p);
         if(m == infinite_cost) return 0.0;   // single-entry factor, nothing to compare against
         return (cost[p] - m) * scale;
      }
      const double m = cost[detail::argmin_lowest(cost)];
      return (cost[p] - m) * scale;
   }
};

// ---------------------------------------------------------------------------

struct label_factor {
   std::size_t label = 0;
   std::vector<std::size_t> nodes;   // ascending node ids which may take this label
   std::vector<double> cost;         // nodes.size()+1 entries, last one is the dummy '#'

   std::size_t size() const { return cost.size(); }
   std::size_t dummy_index() const { return cost.size() - 1; }

   factor_optimum optimize() const
   {
      const std::size_t a = detail::argmin_lowest(cost);
      return {cost[a], a};
   }

   double msg_to_scalar(const std::size_t p, const bool exclude_target, const double scale) const
   {
      assert(p + 1 < cost.size());   // the dummy is never coupled
      if(exclude_target) {
         return (cost[p] - detail::min_excluding(cost, p)) * scale;
      }
      return (cost[p] - cost[detail::argmin_lowest(cost)]) * scale;
   }
};

// ---------------------------------------------------------------------------

struct pairwise_factor {
   std::size_t u = 0, v = 0;    // node ids, u < v (side-local)
   std::size_t dim_u = 0, dim_v = 0;
   bool inverse_side = false;
   std::vector<double> cost;        // row major, dim_u x dim_v
   std::vector<char> forbidden;     // same layout; empty when nothing is forbidden

   std::size_t size() const { return cost.size(); }
   std::size_t flat(const std::size_t pu, const std::size_t pv) const { return pu * dim_v + pv; }
   bool is_forbidden(const std::size_t pu, const std::size_t pv) const
   {
      return !forbidden.empty() && forbidden[flat(pu, pv)];
   }
   double& at(const std::size_t pu, const std::size_t pv) { return cost[flat(pu, pv)]; }
   double at(const std::size_t pu, const std::size_t pv) const { return cost[flat(pu, pv)]; }

   void forbid(const std::size_t pu, const std::size_t pv)
   {
      if(forbidden.empty()) forbidden.assign(cost.size(), 0);
      forbidden[flat(pu, pv)] = 1;
      cost[flat(pu, pv)] = 0.0;
   }

   factor_optimum optimize() const
   {
      double best = infinite_cost;
      std::size_t best_state = 0;
      for(std::size_t i = 0; i < cost.size(); ++i) {
         if(!forbidden.empty() && forbidden[i]) continue;
         if(cost[i] < best) { best = cost[i]; best_state = i; }
      }
      if(best == infinite_cost) throw infeasible_error("pairwise factor with all states forbidden");
      return {best, best_state};
   }

   // min marginal onto one endpoint; all-forbidden rows give infinite_cost
   std::vector<double> min_marginal(const bool onto_u) const
   {
      std::vector<double> marg(onto_u ? dim_u : dim_v, infinite_cost);
      for(std::size_t pu = 0; pu < dim_u; ++pu) {
         for(std::size_t pv = 0; pv < dim_v; ++pv) {
            if(is_forbidden(pu, pv)) continue;
            double& m = marg[onto_u ? pu : pv];
            m = std::min(m, at(pu, pv));
         }
      }
      return marg;
   }

   // Delta(x_u) = min-marginal - global min; labels whose every partner is
   // forbidden are treated as excluded and receive 0
   std::vector<double> msg_to_node(const bool onto_u) const
   {
      std::vector<double> delta = min_marginal(onto_u);
      double global = infinite_cost;
      for(const double d : delta) global = std::min(global, d);
      if(global == infinite_cost) throw infeasible_error("pairwise factor with all states forbidden");
      for(double& d : delta) d = (d == infinite_cost) ? 0.0 : d - global;
      return delta;
   }

   // full state vector towards a triplet; forbidden entries stay untouched
   std::vector<double> msg_to_triplet(const double scale) const
   {
      const double global = optimize().value;
      std::vector<double> delta(cost.size(), 0.0);
      for(std::size_t i = 0; i < cost.size(); ++i) {
         if(!forbidden.empty() && forbidden[i]) continue;
         delta[i] = (cost[i] - global) * scale;
      }
      return delta;
   }
};

// ---------------------------------------------------------------------------

struct triplet_factor {
   std::array<std::size_t, 3> nodes{};   // ascending
   std::array<std::size_t, 3> dims{};
   std::vector<double> cost;
   std::vector<char> forbidden;

   std::size_t size() const { return cost.size(); }
   std::size_t flat(const std::size_t pu, const std::size_t pv, const std::size_t pw) const
   {
      return (pu * dims[1] + pv) * dims[2] + pw;
   }
   bool is_forbidden(const std::size_t i) const { return !forbidden.empty() && forbidden[i]; }

   factor_optimum optimize() const
   {
      double best = infinite_cost;
      std::size_t best_state = 0;
      for(std::size_t i = 0; i < cost.size(); ++i) {
         if(is_forbidden(i)) continue;
         if(cost[i] < best) { best = cost[i]; best_state = i; }
      }
      if(best == infinite_cost) throw infeasible_error("triplet factor with all states forbidden");
      return {best, best_state};
   }

   std::array<std::size_t, 3> unflatten(std::size_t i) const
   {
      const std::size_t pw = i % dims[2];
      i /= dims[2];
      return {i / dims[1], i % dims[1], pw};
   }

   // pair slot 0: (u,v), 1: (u,w), 2: (v,w); Delta = min over the third - global min
   std::vector<double> msg_to_edge(const std::size_t pair_slot) const
   {
      const std::array<std::size_t, 2> kept = pair_slot == 0 ? std::array<std::size_t, 2>{0, 1}
                                            : pair_slot == 1 ? std::array<std::size_t, 2>{0, 2}
                                                             : std::array<std::size_t, 2>{1, 2};
      std::vector<double> marg(dims[kept[0]] * dims[kept[1]], infinite_cost);
      for(std::size_t i = 0; i < cost.size(); ++i) {
         if(is_forbidden(i)) continue;
         const auto s = unflatten(i);
         double& m = marg[s[kept[0]] * dims[kept[1]] + s[kept[1]]];
         m = std::min(m, cost[i]);
      }
      double global = infinite_cost;
      for(const double d : marg) global = std::min(global, d);
      for(double& d : marg) d = (d == infinite_cost) ? 0.0 : d - global;
      return marg;
   }
};

// ---------------------------------------------------------------------------

// Linear assignment subproblem solved by min cost flow, with the certifying
// node potentials cached. Certificate convention:
//   cost(u,l) + pi(u) - psi(l) <= 0 if matched, >= 0 otherwise,
//   psi(l) <= tau for matched labels, >= tau for unmatched ones.
class flow_factor {
public:
   flow_factor() = default;
   flow_factor(std::vector<std::vector<std::size_t>> labels, const std::size_t num_labels, const mcf::assignment_mode mode)
      : labels_(std::move(labels)), num_labels_(num_labels), mode_(mode)
   {
      cost_.resize(labels_.size());
      for(std::size_t u = 0; u < labels_.size(); ++u) cost_[u].assign(labels_[u].size(), 0.0);
      columns_.resize(num_labels_);
      column_pos_.resize(num_labels_);
      for(std::size_t u = 0; u < labels_.size(); ++u) {
         for(std::size_t k = 0; k < labels_[u].size(); ++k) {
            columns_[labels_[u][k]].push_back(u);
            column_pos_[labels_[u][k]].push_back(k);
         }
      }
   }

   std::size_t num_nodes() const { return labels_.size(); }
   std::size_t num_labels() const { return num_labels_; }
   mcf::assignment_mode mode() const { return mode_; }
   const std::vector<std::size_t>& row_labels(const std::size_t u) const { return labels_[u]; }
   const std::vector<double>& row_costs(const std::size_t u) const { return cost_[u]; }
   const std::vector<std::size_t>& column_nodes(const std::size_t l) const { return columns_[l]; }

   void add_to_row(const std::size_t u, const std::vector<double>& delta)
   {
      assert(delta.size() == cost_[u].size());
      for(std::size_t k = 0; k < delta.size(); ++k) cost_[u][k] += delta[k];
      solved_ = false;
   }

   void invalidate() { solved_ = false; }

   void ensure_solved()
   {
      if(solved_) return;
      const auto res = mcf::solve_assignment(labels_, cost_, num_labels_, mode_);
      matching_ = res.matched_label;
      pi_ = res.pi;
      psi_ = res.psi;
      tau_ = res.tau;
      value_ = res.objective;
      solved_ = true;
      assert(certificate_valid(1e-6));
   }

   factor_optimum optimize()
   {
      ensure_solved();
      return {value_, 0};
   }

   const std::vector<std::size_t>& matching()
   {
      ensure_solved();
      return matching_;
   }

   double matching_cost(const std::vector<std::size_t>& matched_label) const
   {
      double val = 0.0;
      for(std::size_t u = 0; u < num_nodes(); ++u) {
         const auto pos = position_of(u, matched_label[u]);
         assert(pos != no_position);
         val += cost_[u][pos];
      }
      return val;
   }

   bool certificate_valid(const double tol) const
   {
      if(!solved_) return false;
      std::vector<char> label_matched(num_labels_, 0);
      for(std::size_t u = 0; u < num_nodes(); ++u) {
         assert(matching_[u] != mcf::unmatched);
         label_matched[matching_[u]] = 1;
      }
      for(std::size_t u = 0; u < num_nodes(); ++u) {
         for(std::size_t k = 0; k < labels_[u].size(); ++k) {
            const double r = cost_[u][k] + pi_[u] - psi_[labels_[u][k]];
            if(matching_[u] == labels_[u][k]) {
               if(r > tol) return false;
            } else if(r < -tol) {
               return false;
            }
         }
      }
      for(std::size_t l = 0; l < num_labels_; ++l) {
         if(label_matched[l] ? psi_[l] > tau_ + tol : psi_[l] < tau_ - tol) return false;
      }
      return true;
   }

   // Maximal admissible messages from the flow factor to the node factors of
   // one side, restricted to rows (side V) or columns (side L) in J. Solves
   // the restricted dual adjustment problem as a min cost flow over the
   // certificate constraints; the returned deltas are
   //   m(u,l) = cost(u,l) + pi*(u) - psi*(l)
   // and subtracting them leaves every touched entry at psi* - pi*.
   enum class side { nodes, labels };

   std::vector<std::vector<double>> adjustment_messages(const side s, const std::vector<std::size_t>& J)
   {
      ensure_solved();
      const std::size_t n = num_nodes();
      const std::size_t m = num_labels_;
      mcf::flow_network net;
      for(std::size_t i = 0; i < n + m + 1; ++i) net.add_node();
      const std::size_t sink = n + m;

      std::vector<char> label_matched(m, 0);
      for(std::size_t u = 0; u < n; ++u) label_matched[matching_[u]] = 1;

      const std::int64_t cap = std::numeric_limits<std::int64_t>::max() / 4;
      for(std::size_t u = 0; u < n; ++u) {
         for(std::size_t k = 0; k < labels_[u].size(); ++k) {
            const std::size_t l = labels_[u][k];
            if(matching_[u] == l)
               net.add_arc(u, n + l, cap, -cost_[u][k]);
            else
               net.add_arc(n + l, u, cap, cost_[u][k]);
         }
      }
      for(std::size_t l = 0; l < m; ++l) {
         if(label_matched[l])
            net.add_arc(n + l, sink, cap, 0.0);
         else
            net.add_arc(sink, n + l, cap, 0.0);
      }

      if(s == side::nodes) {
         for(const std::size_t u : J) {
            const std::int64_t w = static_cast<std::int64_t>(labels_[u].size()) - 1;
            net.supply[u] += w * w;
            for(const std::size_t l : labels_[u])
               if(l != matching_[u]) net.supply[n + l] -= w;
         }
      } else {
         for(const std::size_t l : J) {
            assert(label_matched[l]);   // side L sends only exist in the coupled (bijective) relaxation
            const std::int64_t w = static_cast<std::int64_t>(columns_[l].size()) - 1;
            net.supply[n + l] -= w * w;
            for(const std::size_t u : columns_[l])
               if(matching_[u] != l) net.supply[u] += w;
         }
      }

      std::vector<double> initial(n + m + 1);
      for(std::size_t u = 0; u < n; ++u) initial[u] = pi_[u];
      for(std::size_t l = 0; l < m; ++l) initial[n + l] = psi_[l];
      initial[sink] = tau_;

      mcf::ssp_solver solver(net);
      mcf::solve_options opts;
      opts.initial_potentials = &initial;
      opts.best_effort = true;   // the restricted dual may be unbounded on
                                 // structurally excluded assignment pairs
      solver.run(opts);
      const auto sol = solver.extract(net);

      std::vector<double> new_pi(sol.potential.begin(), sol.potential.begin() + n);
      std::vector<double> new_psi(sol.potential.begin() + n, sol.potential.begin() + n + m);
      const double new_tau = sol.potential[sink];

      std::vector<std::vector<double>> deltas;
      deltas.reserve(J.size());
      if(s == side::nodes) {
         for(const std::size_t u : J) {
            std::vector<double> d(labels_[u].size());
            for(std::size_t k = 0; k < labels_[u].size(); ++k)
               d[k] = cost_[u][k] + new_pi[u] - new_psi[labels_[u][k]];
            deltas.push_back(std::move(d));
         }
      } else {
         for(const std::size_t l : J) {
            std::vector<double> d(columns_[l].size());
            for(std::size_t j = 0; j < columns_[l].size(); ++j) {
               const std::size_t u = columns_[l][j];
               d[j] = cost_[u][column_pos_[l][j]] + new_pi[u] - new_psi[l];
            }
            deltas.push_back(std::move(d));
         }
      }

      pi_ = std::move(new_pi);
      psi_ = std::move(new_psi);
      tau_ = new_tau;
      return deltas;
   }

   // applies a delta produced by adjustment_messages; keeps the certificate
   void subtract_from_row(const std::size_t u, const std::vector<double>& delta)
   {
      assert(delta.size() == cost_[u].size());
      for(std::size_t k = 0; k < delta.size(); ++k) cost_[u][k] -= delta[k];
      value_ = matching_cost(matching_);
      assert(certificate_valid(1e-6));
   }

   void subtract_from_column(const std::size_t l, const std::vector<double>& delta)
   {
      assert(delta.size() == columns_[l].size());
      for(std::size_t j = 0; j < columns_[l].size(); ++j)
         cost_[columns_[l][j]][column_pos_[l][j]] -= delta[j];
      value_ = matching_cost(matching_);
      assert(certificate_valid(1e-6));
   }

   const std::vector<double>& pi() const { return pi_; }
   const std::vector<double>& psi() const { return psi_; }
   double tau() const { return tau_; }

   static constexpr std::size_t no_position = std::numeric_limits<std::size_t>::max();
   std::size_t position_of(const std::size_t u, const std::size_t l) const
   {
      const auto& ls = labels_[u];
      const auto it = std::lower_bound(ls.begin(), ls.end(), l);
      if(it == ls.end() || *it != l) return no_position;
      return static_cast<std::size_t>(it - ls.begin());
   }

private:
   std::vector<std::vector<std::size_t>> labels_;
   std::vector<std::vector<double>> cost_;
   std::vector<std::vector<std::size_t>> columns_;      // label -> nodes
   std::vector<std::vector<std::size_t>> column_pos_;   // label -> position within the node row
   std::size_t num_labels_ = 0;
   mcf::assignment_mode mode_ = mcf::assignment_mode::injective;

   bool solved_ = false;
   std::vector<std::size_t> matching_;
   std::vector<double> pi_, psi_;
   double tau_ = 0.0;
   double value_ = 0.0;
};

} // namespace gmdual

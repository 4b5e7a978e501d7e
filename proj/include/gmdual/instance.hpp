#pragma once

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "mcf.hpp"

namespace gmdual {

constexpr std::size_t no_label = std::numeric_limits<std::size_t>::max();

struct assignment {
   static constexpr std::size_t unassigned = no_label;
   std::vector<std::size_t> label_of;

   explicit assignment(const std::size_t num_nodes = 0) : label_of(num_nodes, unassigned) {}
   std::size_t size() const { return label_of.size(); }
   std::size_t& operator[](const std::size_t u) { return label_of[u]; }
   std::size_t operator[](const std::size_t u) const { return label_of[u]; }
   bool total() const
   {
      return std::none_of(label_of.begin(), label_of.end(), [](const std::size_t l) { return l == unassigned; });
   }
};

// pairwise costs of one edge over label set positions; sparse by default,
// dense matrix when more than half the entries are populated
class pairwise_cost_table {
public:
   pairwise_cost_table() = default;
   pairwise_cost_table(const std::size_t dim_u, const std::size_t dim_v) : dim_u_(dim_u), dim_v_(dim_v) {}

   std::size_t dim_u() const { return dim_u_; }
   std::size_t dim_v() const { return dim_v_; }

   void add(const std::size_t pu, const std::size_t pv, const double c)
   {
      assert(pu < dim_u_ && pv < dim_v_);
      if(dense_.empty()) {
         sparse_.emplace_back(key(pu, pv), c);
         if(2 * sparse_.size() > dim_u_ * dim_v_) densify();
      } else {
         dense_[key(pu, pv)] += c;
      }
   }

   double operator()(const std::size_t pu, const std::size_t pv) const
   {
      assert(pu < dim_u_ && pv < dim_v_);
      if(!dense_.empty()) return dense_[key(pu, pv)];
      double c = 0.0;
      for(const auto& [k, v] : sparse_)
         if(k == key(pu, pv)) c += v;
      return c;
   }

   bool has_entry(const std::size_t pu, const std::size_t pv) const
   {
      if(!dense_.empty()) return dense_[key(pu, pv)] != 0.0;
      for(const auto& [k, v] : sparse_)
         if(k == key(pu, pv)) return true;
      return false;
   }

   bool is_dense() const { return !dense_.empty(); }
   std::size_t entry_count() const { return is_dense() ? dim_u_ * dim_v_ : sparse_.size(); }

   template<typename FUNC>
   void for_each(FUNC&& f) const
   {
      if(!dense_.empty()) {
         for(std::size_t pu = 0; pu < dim_u_; ++pu)
            for(std::size_t pv = 0; pv < dim_v_; ++pv)
               if(dense_[key(pu, pv)] != 0.0) f(pu, pv, dense_[key(pu, pv)]);
      } else {
         for(const auto& [k, v] : sparse_) f(k / dim_v_, k % dim_v_, v);
      }
   }

private:
   std::size_t key(const std::size_t pu, const std::size_t pv) const { return pu * dim_v_ + pv; }
   void densify()
   {
      dense_.assign(dim_u_ * dim_v_, 0.0);
      for(const auto& [k, v] : sparse_) dense_[k] += v;
      sparse_.clear();
      sparse_.shrink_to_fit();
   }

   std::size_t dim_u_ = 0, dim_v_ = 0;
   std::vector<std::pair<std::size_t, double>> sparse_;
   std::vector<double> dense_;
};

class graph_matching_instance {
public:
   struct edge {
      std::size_t u, v;   // u < v
      pairwise_cost_table costs;   // indexed by label set positions
   };

   graph_matching_instance() = default;
   graph_matching_instance(const std::size_t num_nodes, const std::size_t num_labels)
      : num_labels_(num_labels), label_sets_(num_nodes), unary_(num_nodes) {}

   std::size_t num_nodes() const { return label_sets_.size(); }
   std::size_t num_labels() const { return num_labels_; }
   std::size_t num_edges() const { return edges_.size(); }

   const std::vector<std::size_t>& label_set(const std::size_t u) const { return label_sets_[u]; }
   const std::vector<double>& unary_costs(const std::size_t u) const { return unary_[u]; }
   const std::vector<std::vector<std::size_t>>& label_sets() const { return label_sets_; }
   const std::vector<std::vector<double>>& unary_costs() const { return unary_; }
   const std::vector<edge>& edges() const { return edges_; }

   // position of label s in X_u, or no_label
   std::size_t label_position(const std::size_t u, const std::size_t s) const
   {
      const auto& ls = label_sets_[u];
      const auto it = std::lower_bound(ls.begin(), ls.end(), s);
      if(it == ls.end() || *it != s) return no_label;
      return static_cast<std::size_t>(it - ls.begin());
   }

   void add_label(const std::size_t u, const std::size_t s, const double cost)
   {
      assert(u < num_nodes() && s < num_labels_);
      auto& ls = label_sets_[u];
      const auto it = std::lower_bound(ls.begin(), ls.end(), s);
      if(it != ls.end() && *it == s) throw solver_error("label declared twice for a node");
      const auto pos = it - ls.begin();
      ls.insert(it, s);
      unary_[u].insert(unary_[u].begin() + pos, cost);
   }

   void add_unary_cost(const std::size_t u, const std::size_t s, const double cost)
   {
      const std::size_t p = label_position(u, s);
      assert(p != no_label);
      unary_[u][p] += cost;
   }

   // creates the edge if absent; (s,t) are label ids at (u,v)
   void add_pairwise_cost(std::size_t u, std::size_t v, std::size_t s, std::size_t t, const double cost)
   {
      assert(u != v);
      if(u > v) { std::swap(u, v); std::swap(s, t); }
      const std::size_t pu = label_position(u, s);
      const std::size_t pv = label_position(v, t);
      assert(pu != no_label && pv != no_label);
      edge& e = get_or_create_edge(u, v);
      e.costs.add(pu, pv, cost);
   }

   std::optional<std::size_t> find_edge(std::size_t u, std::size_t v) const
   {
      if(u > v) std::swap(u, v);
      const auto it = edge_index_.find({u, v});
      if(it == edge_index_.end()) return std::nullopt;
      return it->second;
   }

   double pairwise_cost(std::size_t u, std::size_t v, std::size_t s, std::size_t t) const
   {
      if(u > v) { std::swap(u, v); std::swap(s, t); }
      const auto eid = find_edge(u, v);
      if(!eid) return 0.0;
      const edge& e = edges_[*eid];
      const std::size_t pu = label_position(u, s);
      const std::size_t pv = label_position(v, t);
      if(pu == no_label || pv == no_label) return 0.0;
      return e.costs(pu, pv);
   }

   bool feasible(const assignment& a) const
   {
      if(a.size() != num_nodes()) return false;
      std::vector<char> taken(num_labels_, 0);
      for(std::size_t u = 0; u < num_nodes(); ++u) {
         const std::size_t s = a[u];
         if(s == assignment::unassigned) return false;
         if(label_position(u, s) == no_label) return false;
         if(taken[s]) return false;
         taken[s] = 1;
      }
      return true;
   }

   double energy(const assignment& a) const
   {
      if(!feasible(a)) throw infeasible_assignment_error("assignment violates injectivity or label sets");
      double e = 0.0;
      for(std::size_t u = 0; u < num_nodes(); ++u) e += unary_[u][label_position(u, a[u])];
      for(const auto& ed : edges_) {
         const std::size_t pu = label_position(ed.u, a[ed.u]);
         const std::size_t pv = label_position(ed.v, a[ed.v]);
         e += ed.costs(pu, pv);
      }
      return e;
   }

   // injective assignment ignoring pairwise costs; also the feasibility test
   bool injectively_feasible() const
   {
      if(num_labels_ < num_nodes()) return false;
      for(const auto& ls : label_sets_)
         if(ls.empty()) return false;
      try {
         mcf::solve_assignment(label_sets_, unary_, num_labels_, mcf::assignment_mode::injective);
      } catch(const infeasible_error&) {
         return false;
      }
      return true;
   }

   bool bijection_feasible() const
   {
      if(num_labels_ != num_nodes()) return false;
      return injectively_feasible();
   }

private:
   edge& get_or_create_edge(const std::size_t u, const std::size_t v)
   {
      const auto it = edge_index_.find({u, v});
      if(it != edge_index_.end()) return edges_[it->second];
      edge_index_.emplace(std::make_pair(u, v), edges_.size());
      edges_.push_back({u, v, pairwise_cost_table(label_sets_[u].size(), label_sets_[v].size())});
      return edges_.back();
   }

   std::size_t num_labels_ = 0;
   std::vector<std::vector<std::size_t>> label_sets_;
   std::vector<std::vector<double>> unary_;
   std::vector<edge> edges_;
   std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_index_;
};

inline graph_matching_instance build_inverse(const graph_matching_instance& inst)
{
   if(!inst.bijection_feasible())
      throw not_bijective_error("inverse problem requires |L| = |V| and a perfect matching");

   const std::size_t n = inst.num_nodes();
   graph_matching_instance inv(inst.num_labels(), n);
   for(std::size_t u = 0; u < n; ++u) {
      const auto& ls = inst.label_set(u);
      for(std::size_t k = 0; k < ls.size(); ++k) inv.add_label(ls[k], u, inst.unary_costs(u)[k]);
   }
   for(const auto& e : inst.edges()) {
      const auto& lsu = inst.label_set(e.u);
      const auto& lsv = inst.label_set(e.v);
      e.costs.for_each([&](const std::size_t pu, const std::size_t pv, const double c) {
         const std::size_t s = lsu[pu];
         const std::size_t t = lsv[pv];
         if(s == t) return;   // infeasible for any assignment, never contributes
         inv.add_pairwise_cost(s, t, e.u, e.v, c);
      });
   }
   return inv;
}

inline assignment invert_assignment(const assignment& a, const std::size_t num_labels)
{
   assignment inv(num_labels);
   for(std::size_t u = 0; u < a.size(); ++u) {
      assert(a[u] != assignment::unassigned && a[u] < num_labels);
      inv[a[u]] = u;
   }
   return inv;
}

// --- instance file format ---------------------------------------------------
//
//   c <comment>            (also '#')
//   p <#nodes> <#labels> <#assignments> <#edges>
//   a <aid> <node> <label> <cost>
//   e <aid1> <aid2> <cost>

namespace detail {

inline double parse_finite_double(const std::string& tok, const std::size_t line)
{
   try {
      std::size_t consumed = 0;
      const double v = std::stod(tok, &consumed);
      if(consumed != tok.size()) throw parse_error("trailing characters in number '" + tok + "'", line);
      if(!std::isfinite(v)) throw parse_error("non-finite cost literal '" + tok + "'", line);
      return v;
   } catch(const std::invalid_argument&) {
      throw parse_error("expected a number, got '" + tok + "'", line);
   } catch(const std::out_of_range&) {
      throw parse_error("non-finite cost literal '" + tok + "'", line);
   }
}

inline std::size_t parse_index(const std::string& tok, const std::size_t line)
{
   std::size_t v = 0;
   const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
   if(res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw parse_error("expected a non-negative integer, got '" + tok + "'", line);
   return v;
}

} // namespace detail

inline graph_matching_instance parse_instance(std::istream& in)
{
   std::string line;
   std::size_t line_number = 0;
   bool have_problem_line = false;
   std::size_t num_nodes = 0, num_labels = 0;

   struct pending_assignment { std::size_t node, label; double cost; };
   std::map<std::size_t, pending_assignment> assignments;   // by aid
   struct pending_edge { std::size_t a1, a2; double cost; std::size_t line; };
   std::vector<pending_edge> edge_lines;
   std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen_pairs;   // (node,label) -> line
   std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen_edges;   // (aid,aid) -> line

   while(std::getline(in, line)) {
      ++line_number;
      std::istringstream ss(line);
      std::vector<std::string> tok;
      std::string t;
      while(ss >> t) tok.push_back(t);
      if(tok.empty() || tok[0] == "c" || tok[0][0] == '#') continue;
      if(tok[0] == "p") {
         if(have_problem_line) throw parse_error("second problem line", line_number);
         if(tok.size() != 5) throw parse_error("problem line needs 4 numbers", line_number);
         num_nodes = detail::parse_index(tok[1], line_number);
         num_labels = detail::parse_index(tok[2], line_number);
         have_problem_line = true;
      } else if(tok[0] == "a") {
         if(!have_problem_line) throw parse_error("assignment before problem line", line_number);
         if(tok.size() != 5) throw parse_error("assignment line needs 4 fields", line_number);
         const std::size_t aid = detail::parse_index(tok[1], line_number);
         const std::size_t node = detail::parse_index(tok[2], line_number);
         const std::size_t label = detail::parse_index(tok[3], line_number);
         const double cost = detail::parse_finite_double(tok[4], line_number);
         if(node >= num_nodes) throw parse_error("node id " + tok[2] + " out of range", line_number);
         if(label >= num_labels) throw parse_error("label id " + tok[3] + " out of range", line_number);
         if(assignments.count(aid)) throw parse_error("duplicate assignment id " + tok[1], line_number);
         if(seen_pairs.count({node, label}))
            throw parse_error("assignment (" + tok[2] + "," + tok[3] + ") declared twice", line_number);
         assignments[aid] = {node, label, cost};
         seen_pairs[{node, label}] = line_number;
      } else if(tok[0] == "e") {
         if(tok.size() != 4) throw parse_error("edge line needs 3 fields", line_number);
         const std::size_t a1 = detail::parse_index(tok[1], line_number);
         const std::size_t a2 = detail::parse_index(tok[2], line_number);
         const double cost = detail::parse_finite_double(tok[3], line_number);
         edge_lines.push_back({a1, a2, cost, line_number});
      } else {
         throw parse_error("unknown line type '" + tok[0] + "'", line_number);
      }
   }
   if(!have_problem_line) throw parse_error("missing problem line", line_number == 0 ? 1 : line_number);

   graph_matching_instance inst(num_nodes, num_labels);
   for(const auto& [aid, a] : assignments) inst.add_label(a.node, a.label, a.cost);

   for(const auto& e : edge_lines) {
      const auto it1 = assignments.find(e.a1);
      const auto it2 = assignments.find(e.a2);
      if(it1 == assignments.end()) throw parse_error("edge references undeclared assignment id " + std::to_string(e.a1), e.line);
      if(it2 == assignments.end()) throw parse_error("edge references undeclared assignment id " + std::to_string(e.a2), e.line);
      const auto key = std::minmax(e.a1, e.a2);
      if(e.a1 == e.a2 || seen_edges.count({key.first, key.second}))
         throw parse_error("duplicate edge between assignments " + std::to_string(e.a1) + " and " + std::to_string(e.a2), e.line);
      seen_edges[{key.first, key.second}] = e.line;
      const auto& a1 = it1->second;
      const auto& a2 = it2->second;
      if(a1.node == a2.node) throw parse_error("edge between assignments of the same node", e.line);
      if(a1.label == a2.label) throw parse_error("edge between assignments with the same label", e.line);
      inst.add_pairwise_cost(a1.node, a2.node, a1.label, a2.label, e.cost);
   }
   return inst;
}

inline void serialize_instance(const graph_matching_instance& inst, std::ostream& out)
{
   std::size_t num_assignments = 0;
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) num_assignments += inst.label_set(u).size();
   std::size_t num_edge_entries = 0;
   for(const auto& e : inst.edges()) {
      e.costs.for_each([&](std::size_t, std::size_t, double) { ++num_edge_entries; });
   }
   out.precision(17);
   out << "p " << inst.num_nodes() << " " << inst.num_labels() << " " << num_assignments << " " << num_edge_entries << "\n";
   std::map<std::pair<std::size_t, std::size_t>, std::size_t> aid_of;
   std::size_t aid = 0;
   for(std::size_t u = 0; u < inst.num_nodes(); ++u) {
      const auto& ls = inst.label_set(u);
      for(std::size_t k = 0; k < ls.size(); ++k) {
         aid_of[{u, ls[k]}] = aid;
         out << "a " << aid << " " << u << " " << ls[k] << " " << inst.unary_costs(u)[k] << "\n";
         ++aid;
      }
   }
   for(const auto& e : inst.edges()) {
      e.costs.for_each([&](const std::size_t pu, const std::size_t pv, const double c) {
         const std::size_t s = inst.label_set(e.u)[pu];
         const std::size_t t = inst.label_set(e.v)[pv];
         out << "e " << aid_of.at({e.u, s}) << " " << aid_of.at({e.v, t}) << " " << c << "\n";
      });
   }
}

} // namespace gmdual

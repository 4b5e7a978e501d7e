#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "engine.hpp"
#include "factor_graph.hpp"
#include "instance.hpp"

// Brute-force exact solver and the run auditor used by tests and acceptance
// checks: every emitted message is checked for admissibility, the dual bound
// for monotonicity and the decomposition for energy preservation.

namespace gmdual {

struct brute_force_result {
   assignment best;
   double energy = 0.0;
   std::size_t labelings_enumerated = 0;
};

inline brute_force_result brute_force(const graph_matching_instance& inst, const std::size_t max_labelings = 10'000'000)
{
   const std::size_t n = inst.num_nodes();
   // edges keyed by their later endpoint so partial costs accumulate incrementally
   std::vector<std::vector<const graph_matching_instance::edge*>> edges_at(n);
   for(const auto& e : inst.edges()) edges_at[e.v].push_back(&e);

   brute_force_result result;
   result.best = assignment(n);
   result.energy = std::numeric_limits<double>::infinity();
   std::vector<char> taken(inst.num_labels(), 0);
   assignment current(n);
   std::size_t steps = 0;

   const auto recurse = [&](const auto& self, const std::size_t u, const double cost_so_far) -> void {
      if(++steps > 20 * max_labelings) throw too_large_error("brute force enumeration too large");
      if(u == n) {
         if(++result.labelings_enumerated > max_labelings)
            throw too_large_error("more than " + std::to_string(max_labelings) + " injective labelings");
         if(cost_so_far < result.energy) {
            result.energy = cost_so_far;
            result.best = current;
         }
         return;
      }
      const auto& ls = inst.label_set(u);
      for(std::size_t p = 0; p < ls.size(); ++p) {
         const std::size_t s = ls[p];
         if(taken[s]) continue;
         double c = cost_so_far + inst.unary_costs(u)[p];
         for(const auto* e : edges_at[u]) {
            const std::size_t pu = inst.label_position(e->u, current[e->u]);
            c += e->costs(pu, p);
         }
         taken[s] = 1;
         current[u] = s;
         self(self, u + 1, c);
         current[u] = assignment::unassigned;
         taken[s] = 0;
      }
   };
   recurse(recurse, 0, 0.0);
   if(result.labelings_enumerated == 0) throw infeasible_error("no feasible labeling exists");
   return result;
}

// random feasible labelings by greedy extension over shuffled choices
inline std::vector<assignment> sample_feasible_labelings(const graph_matching_instance& inst, const std::size_t count,
                                                         const unsigned seed)
{
   std::mt19937 rng(seed);
   std::vector<assignment> out;
   for(std::size_t attempt = 0; attempt < 50 * count && out.size() < count; ++attempt) {
      assignment a(inst.num_nodes());
      std::vector<char> taken(inst.num_labels(), 0);
      bool ok = true;
      for(std::size_t u = 0; u < inst.num_nodes() && ok; ++u) {
         std::vector<std::size_t> options;
         for(const std::size_t s : inst.label_set(u))
            if(!taken[s]) options.push_back(s);
         if(options.empty()) { ok = false; break; }
         const std::size_t s = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
         a[u] = s;
         taken[s] = 1;
      }
      if(ok) out.push_back(std::move(a));
   }
   return out;
}

struct audit_report {
   bool clean = true;
   std::string first_violation;
   std::size_t messages_checked = 0;
   std::size_t energy_checks = 0;
   std::size_t bound_checks = 0;
   double final_lower_bound = 0.0;

   void violation(const std::string& what)
   {
      if(clean) {
         clean = false;
         first_violation = what;
      }
   }
};

// message observer asserting Definition-1 admissibility and per-update bound
// monotonicity; tolerances follow the acceptance criteria
class message_auditor {
public:
   message_auditor(factor_graph& g, audit_report& report) : g_(g), report_(report) {}

   void operator()(const message_batch& batch, const bool before)
   {
      if(before) {
         ++report_.messages_checked;
         check_signs(batch);
         touched_ = touched_factors(batch);
         bound_before_ = 0.0;
         for(const auto& f : touched_) bound_before_ += g_.optimize(f).value;
      } else {
         const double sender_at_old_optimum = state_value(batch);
         const double sender_new_min = g_.optimize(batch.sender).value;
         if(sender_at_old_optimum > sender_new_min + 1e-9 * (1.0 + std::abs(sender_new_min)))
            report_.violation("optimum not preserved by message from " + describe(batch.sender));
         double bound_after = 0.0;
         for(const auto& f : touched_) bound_after += g_.optimize(f).value;
         ++report_.bound_checks;
         if(bound_after < bound_before_ - 1e-9)
            report_.violation("dual bound decreased by " + std::to_string(bound_before_ - bound_after) + " at message from "
                              + describe(batch.sender));
      }
   }

private:
   static std::string describe(const factor_id& f)
   {
      std::ostringstream ss;
      ss << static_cast<int>(f.kind) << ":" << f.index;
      return ss.str();
   }

   std::vector<factor_id> touched_factors(const message_batch& batch) const
   {
      std::vector<factor_id> touched{batch.sender};
      for(const auto& [eid, delta] : batch.deltas) {
         const factor_id other = g_.edges[eid].other(batch.sender);
         if(std::find(touched.begin(), touched.end(), other) == touched.end()) touched.push_back(other);
      }
      return touched;
   }

   void check_signs(const message_batch& batch)
   {
      for(const auto& [eid, delta] : batch.deltas) {
         const auto nu = g_.coupling_image(eid, batch.sender, batch.sender_state_before,
                                           batch.matching_before.empty() ? nullptr : &batch.matching_before);
         assert(nu.size() == delta.size());
         for(std::size_t k = 0; k < delta.size(); ++k) {
            if(nu[k] ? delta[k] > 1e-9 : delta[k] < -1e-9) {
               report_.violation("sign pattern violated on edge " + std::to_string(eid));
               return;
            }
         }
      }
   }

   double state_value(const message_batch& batch) const
   {
      switch(batch.sender.kind) {
         case factor_kind::simplex: return g_.simplex[batch.sender.index].cost[batch.sender_state_before];
         case factor_kind::label: return g_.labels[batch.sender.index].cost[batch.sender_state_before];
         case factor_kind::pairwise: return g_.pairwise[batch.sender.index].cost[batch.sender_state_before];
         case factor_kind::triplet: return g_.triplets[batch.sender.index].cost[batch.sender_state_before];
         case factor_kind::flow: return g_.flow->matching_cost(batch.matching_before);
      }
      assert(false);
      return 0.0;
   }

   factor_graph& g_;
   audit_report& report_;
   std::vector<factor_id> touched_;
   double bound_before_ = 0.0;
};

} // namespace gmdual

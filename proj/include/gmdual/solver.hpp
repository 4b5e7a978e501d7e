#pragma once

#include <cassert>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include "engine.hpp"
#include "instance.hpp"
#include "oracle.hpp"
#include "relaxations.hpp"
#include "rounding.hpp"
#include "tighten.hpp"

// Ties everything together: relaxation choice, schedule, rounding and
// tightening. Assignments and energies are always reported in terms of the
// original instance, also for the inverse-problem methods.

namespace gmdual {

struct solve_result {
   method used = method::amp_o;
   double lower_bound = -std::numeric_limits<double>::infinity();
   double upper_bound = std::numeric_limits<double>::infinity();
   assignment best;
   std::size_t iterations = 0;

   double gap() const { return upper_bound - lower_bound; }
};

using progress_callback = std::function<void(std::size_t, double, double, double)>;

inline solve_result solve(const graph_matching_instance& inst, const method m, const solve_options& opts,
                          const progress_callback& progress = {}, const message_observer& observer = {})
{
   solve_result result;
   result.used = m;

   if(inst.num_nodes() == 0) {
      result.lower_bound = result.upper_bound = 0.0;
      result.best = assignment(0);
      return result;
   }
   if(!inst.injectively_feasible()) throw infeasible_error("instance admits no injective assignment");

   graph_matching_instance inverse_storage;
   if(uses_inverse_instance(m)) inverse_storage = build_inverse(inst);
   const graph_matching_instance& side = uses_inverse_instance(m) ? inverse_storage : inst;

   factor_graph g = build_relaxation(m, side);
   schedule s = build_schedule(m, g);

   rounder r(g, side);
   engine_hooks hooks;
   hooks.round_begin_pass = [&] { r.begin_pass(); };
   hooks.round_at_factor = [&](const factor_id& f) { r.at_factor(f); };
   hooks.round_end_pass = [&](dual_state& st) { r.end_pass(st); };
   hooks.progress = progress;
   hooks.observe_message = observer;
   // triangle separation runs over the graph's own node set; the inverse-only
   // builds carry no original-graph triangles, so they are left untightened
   if(opts.tighten && !uses_inverse_instance(m)) {
      hooks.on_stall = [&](dual_state& st) {
         const auto candidates = find_violated_cycles(g, side, opts.tighten_budget);
         if(candidates.empty()) return false;
         add_triplets(g, candidates);
         const bool forward = s.forward;
         s = build_schedule(m, g);
         if(!forward) s.reverse();
         return true;
      };
   }

   dual_state state = run(g, s, opts, hooks);
   if(!state.best_assignment) {
      try {
         const assignment a = mcf_round(g, side);
         const double e = side.energy(a);
         if(e < state.best_energy) {
            state.best_energy = e;
            state.best_assignment = a;
         }
      } catch(const infeasible_error&) {
      }
   }

   result.lower_bound = state.lower_bound;
   result.iterations = state.iteration;
   if(state.best_assignment) {
      const assignment& side_best = *state.best_assignment;
      result.best = uses_inverse_instance(m) ? invert_assignment(side_best, side.num_labels()) : side_best;
      result.upper_bound = inst.energy(result.best);
      assert(std::abs(result.upper_bound - state.best_energy) <= 1e-6 * (1.0 + std::abs(state.best_energy)));
   }
   return result;
}

// runs the solver with per-update admissibility, monotonicity and
// energy-preservation checks enabled
inline audit_report audit_run(const graph_matching_instance& inst, const method m, const solve_options& opts,
                              const std::size_t num_labelings = 100, const unsigned seed = 1)
{
   audit_report report;
   if(inst.num_nodes() == 0) return report;
   if(!inst.injectively_feasible()) throw infeasible_error("instance admits no injective assignment");

   graph_matching_instance inverse_storage;
   if(uses_inverse_instance(m)) inverse_storage = build_inverse(inst);
   const graph_matching_instance& side = uses_inverse_instance(m) ? inverse_storage : inst;

   factor_graph g = build_relaxation(m, side);
   schedule s = build_schedule(m, g);
   const auto labelings = sample_feasible_labelings(side, num_labelings, seed);
   std::vector<double> energies;
   energies.reserve(labelings.size());
   for(const auto& a : labelings) energies.push_back(side.energy(a));

   message_auditor auditor(g, report);
   rounder r(g, side);
   engine_hooks hooks;
   hooks.observe_message = [&](const message_batch& b, const bool before) { auditor(b, before); };
   hooks.round_begin_pass = [&] { r.begin_pass(); };
   hooks.round_at_factor = [&](const factor_id& f) { r.at_factor(f); };
   hooks.round_end_pass = [&](dual_state& st) { r.end_pass(st); };
   hooks.progress = [&](const std::size_t iter, double, double, double) {
      if(iter % 10 != 0) return;
      for(std::size_t i = 0; i < labelings.size(); ++i) {
         ++report.energy_checks;
         const double decomposed = g.decomposed_cost(labelings[i]);
         if(std::abs(decomposed - energies[i]) > 1e-9 * (1.0 + std::abs(energies[i])))
            report.violation("decomposed cost deviates from energy by " + std::to_string(decomposed - energies[i]));
      }
   };
   if(opts.tighten && !uses_inverse_instance(m)) {
      hooks.on_stall = [&](dual_state& st) {
         const auto candidates = find_violated_cycles(g, side, opts.tighten_budget);
         if(candidates.empty()) return false;
         const double before = g.dual_bound();
         add_triplets(g, candidates);
         const double after = g.dual_bound();
         if(std::abs(after - before) > 1e-9) report.violation("triplet insertion changed the bound");
         const bool forward = s.forward;
         s = build_schedule(m, g);
         if(!forward) s.reverse();
         return true;
      };
   }

   const dual_state state = run(g, s, opts, hooks);
   report.final_lower_bound = state.lower_bound;
   return report;
}

} // namespace gmdual

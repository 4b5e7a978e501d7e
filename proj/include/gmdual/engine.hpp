#pragma once

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "factor_graph.hpp"

// The generic dual ascent loop: traverse a factor order, let every visited
// factor first receive from part of its neighborhood and then send to the
// rest, reverse the order after each pass. Receiving from j means j sends a
// singleton message to the visited factor.

namespace gmdual {

struct schedule {
   struct entry {
      factor_id factor;
      std::vector<std::size_t> receive_edges;
      std::vector<std::size_t> send_edges;
   };
   std::vector<entry> entries;
   bool forward = true;

   void reverse()
   {
      std::reverse(entries.begin(), entries.end());
      for(auto& e : entries) std::swap(e.receive_edges, e.send_edges);
      forward = !forward;
   }
};

struct solve_options {
   std::size_t max_iterations = 1000;
   double gap_tolerance = 1e-8;        // absolute primal/dual gap
   std::size_t round_every = 5;        // 0 disables rounding
   bool tighten = true;
   std::size_t tighten_budget = 50;    // triplets per tightening round
   double stall_tolerance = 1e-8;
   std::size_t stall_window = 10;
};

struct dual_state {
   double lower_bound = -std::numeric_limits<double>::infinity();
   std::size_t iteration = 0;
   std::optional<assignment> best_assignment;
   double best_energy = std::numeric_limits<double>::infinity();
   std::size_t stall_count = 0;

   double gap() const { return best_energy - lower_bound; }
};

struct engine_hooks {
   // iteration, elapsed seconds, lower bound, best upper bound
   std::function<void(std::size_t, double, double, double)> progress;
   // rounding, interleaved between receive and send (Eq. 11 placement)
   std::function<void()> round_begin_pass;
   std::function<void(const factor_id&)> round_at_factor;
   std::function<void(dual_state&)> round_end_pass;
   // called when the dual stalls; return true if the relaxation was tightened
   // (graph and schedule changed), false to terminate
   std::function<bool(dual_state&)> on_stall;
   // per-message observer for audits
   message_observer observe_message;
};

inline dual_state run(factor_graph& g, schedule& s, const solve_options& opts, const engine_hooks& hooks = {})
{
   dual_state state;
   const auto start = std::chrono::steady_clock::now();
   const message_observer* observer = hooks.observe_message ? &hooks.observe_message : nullptr;

   state.lower_bound = g.dual_bound();

   for(std::size_t iter = 1; iter <= opts.max_iterations; ++iter) {
      state.iteration = iter;
      const bool rounding_pass = opts.round_every > 0 && iter % opts.round_every == 0 && hooks.round_at_factor;

      if(rounding_pass && hooks.round_begin_pass) hooks.round_begin_pass();
      for(const auto& entry : s.entries) {
         for(const std::size_t eid : entry.receive_edges)
            g.send_messages(g.edges[eid].other(entry.factor), {eid}, observer);
         if(rounding_pass) hooks.round_at_factor(entry.factor);
         g.send_messages(entry.factor, entry.send_edges, observer);
      }
      if(rounding_pass && hooks.round_end_pass) hooks.round_end_pass(state);

      const double lb = g.dual_bound();
      assert(lb >= state.lower_bound - 1e-6 * (1.0 + std::abs(state.lower_bound)));
      const double improvement = lb - state.lower_bound;
      state.lower_bound = std::max(state.lower_bound, lb);

      if(hooks.progress) {
         const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
         hooks.progress(iter, elapsed, state.lower_bound, state.best_energy);
      }

      if(state.gap() <= opts.gap_tolerance) break;

      if(improvement < opts.stall_tolerance) {
         if(++state.stall_count >= opts.stall_window) {
            state.stall_count = 0;
            if(!opts.tighten || !hooks.on_stall || !hooks.on_stall(state)) break;
         }
      } else {
         state.stall_count = 0;
      }

      s.reverse();
   }
   return state;
}

} // namespace gmdual

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gmdual/oracle.hpp"
#include "gmdual/solver.hpp"

// Command line driver: load an instance, pick one of the eight methods, run
// dual ascent with rounding and tightening, print per-iteration progress and
// write the solution. Exit codes: 0 success, 1 usage or parse error, 2
// infeasible instance.

namespace {

gmdual::graph_matching_instance load(const std::string& path)
{
   if(path == "-") return gmdual::parse_instance(std::cin);
   std::ifstream file(path);
   if(!file) throw gmdual::solver_error("cannot open instance file '" + path + "'");
   return gmdual::parse_instance(file);
}

void write_solution(const std::string& path, const gmdual::assignment& a, const double energy)
{
   std::ofstream out(path);
   if(!out) throw gmdual::solver_error("cannot open output file '" + path + "'");
   for(std::size_t u = 0; u < a.size(); ++u) out << u << " " << a[u] << "\n";
   out << "# energy " << energy << "\n";
}

} // namespace

int main(int argc, char** argv)
{
   CLI::App app{"Lagrangean decomposition solver for graph matching (quadratic assignment) problems"};

   std::string method_name = "amp-c";
   std::string input_path;
   std::string output_path;
   gmdual::solve_options opts;
   std::string tighten_flag = "on";
   unsigned seed = 0;
   bool run_oracle = false;

   app.add_option("instance", input_path, "instance file ('-' for stdin)")->required();
   app.add_option("--method", method_name, "one of gm-o, gm-i, amp-o, amp-i, amp-c, amcf-o, amcf-i, amcf-c")
      ->check(CLI::IsMember({"gm-o", "gm-i", "amp-o", "amp-i", "amp-c", "amcf-o", "amcf-i", "amcf-c"}));
   app.add_option("--max-iter", opts.max_iterations, "iteration limit")->capture_default_str();
   app.add_option("--gap-tol", opts.gap_tolerance, "absolute primal/dual gap for early exit")->capture_default_str();
   app.add_option("--round-every", opts.round_every, "rounding frequency in iterations, 0 disables")->capture_default_str();
   app.add_option("--tighten", tighten_flag, "cutting plane tightening")->check(CLI::IsMember({"on", "off"}));
   app.add_option("--tighten-budget", opts.tighten_budget, "triplets per tightening round")->capture_default_str();
   app.add_option("--seed", seed, "reserved; the pipeline is deterministic");
   app.add_option("--output", output_path, "solution file path");
   app.add_flag("--oracle", run_oracle, "solve exactly by enumeration instead (tiny instances only)");

   try {
      app.parse(argc, argv);
   } catch(const CLI::ParseError& e) {
      return app.exit(e) == 0 ? 0 : 1;
   }

   try {
      const gmdual::graph_matching_instance inst = load(input_path);
      std::printf("c instance: %zu nodes, %zu labels, %zu edges\n", inst.num_nodes(), inst.num_labels(),
                  inst.num_edges());

      if(run_oracle) {
         const auto exact = gmdual::brute_force(inst);
         std::printf("oracle optimum=%.10g (%zu labelings enumerated)\n", exact.energy, exact.labelings_enumerated);
         for(std::size_t u = 0; u < exact.best.size(); ++u) std::printf("%zu %zu\n", u, exact.best[u]);
         if(!output_path.empty()) write_solution(output_path, exact.best, exact.energy);
         return 0;
      }

      opts.tighten = tighten_flag == "on";
      const gmdual::method m = gmdual::parse_method(method_name);
      const auto progress = [](const std::size_t iter, const double t, const double lb, const double ub) {
         std::printf("iter=%zu t=%.3f lb=%.10g ub=%.10g\n", iter, t, lb, ub);
      };
      const auto result = gmdual::solve(inst, m, opts, progress);

      std::printf("method=%s iterations=%zu\n", gmdual::to_string(m), result.iterations);
      std::printf("lower bound = %.10g\n", result.lower_bound);
      std::printf("upper bound = %.10g\n", result.upper_bound);
      std::printf("gap         = %.10g\n", result.gap());
      if(!output_path.empty() && result.best.size() == inst.num_nodes())
         write_solution(output_path, result.best, result.upper_bound);
      return 0;
   } catch(const gmdual::parse_error& e) {
      std::fprintf(stderr, "%s: %s\n", input_path.c_str(), e.what());
      return 1;
   } catch(const gmdual::infeasible_error& e) {
      std::fprintf(stderr, "infeasible: %s\n", e.what());
      return 2;
   } catch(const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
   }
}

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmdual {

struct solver_error : std::runtime_error {
   using std::runtime_error::runtime_error;
};

// no feasible flow / matching / assignment
struct infeasible_error : solver_error {
   using solver_error::solver_error;
};

// inverse problem or coupled relaxation requested but |L| != |V| or no perfect matching
struct not_bijective_error : infeasible_error {
   using infeasible_error::infeasible_error;
};

struct infeasible_assignment_error : solver_error {
   using solver_error::solver_error;
};

struct too_large_error : solver_error {
   using solver_error::solver_error;
};

struct parse_error : solver_error {
   parse_error(const std::string& msg, const std::size_t line)
      : solver_error("parse error in line " + std::to_string(line) + ": " + msg), line_number(line) {}
   std::size_t line_number;
};

} // namespace gmdual

#pragma once

// Small dense two-phase simplex for the meal planner's relaxation bounds.
// Sized for tens of variables and rows; not a general-purpose solver.

#include <cstddef>
#include <vector>

namespace onlc::detail {

enum class RowSense { Less, Greater, Equal };

struct LpRow {
    std::vector<double> coeffs;
    RowSense sense = RowSense::Less;
    double rhs = 0.0;
};

//! minimize cost . x  subject to rows, x >= 0.
struct LpProblem {
    std::size_t variables = 0;
    std::vector<double> cost;
    std::vector<LpRow> rows;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double value = 0.0;
    std::vector<double> x;
};

LpResult solve_lp(const LpProblem &problem);

} // namespace onlc::detail

#include "lp.hpp"

#include <cmath>
#include <limits>

namespace onlc::detail {

namespace {

constexpr double kEps = 1e-9;
constexpr int kMaxIterations = 5000;

class Tableau {
public:
    Tableau(std::size_t rows, std::size_t cols)
        : rows_{rows}, cols_{cols}, data_((rows + 1) * (cols + 1), 0.0), basis_(rows, 0) {}

    double &at(std::size_t r, std::size_t c) { return data_[r * (cols_ + 1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * (cols_ + 1) + c]; }
    double &rhs(std::size_t r) { return at(r, cols_); }
    // Row `rows_` holds reduced costs; its last entry is -objective.
    double &reduced(std::size_t c) { return at(rows_, c); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::vector<std::size_t> &basis() { return basis_; }

    void pivot(std::size_t pr, std::size_t pc) {
        const double p = at(pr, pc);
        for (std::size_t c = 0; c <= cols_; ++c) {
            at(pr, c) /= p;
        }
        for (std::size_t r = 0; r <= rows_; ++r) {
            if (r == pr) {
                continue;
            }
            const double f = at(r, pc);
            if (f == 0.0) {
                continue;
            }
            for (std::size_t c = 0; c <= cols_; ++c) {
                at(r, c) -= f * at(pr, c);
            }
        }
        basis_[pr] = pc;
    }

    // Minimizes over columns [0, active). Returns false when unbounded.
    bool optimize(std::size_t active) {
        int degenerate = 0;
        for (int it = 0; it < kMaxIterations; ++it) {
            std::size_t pc = active;
            double best = -kEps;
            for (std::size_t c = 0; c < active; ++c) {
                const double rc = reduced(c);
                // Bland's rule after a run of degenerate pivots avoids cycling.
                if (degenerate > 50 ? rc < -kEps : rc < best) {
                    pc = c;
                    best = rc;
                    if (degenerate > 50) {
                        break;
                    }
                }
            }
            if (pc == active) {
                return true;
            }
            std::size_t pr = rows_;
            double ratio = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < rows_; ++r) {
                const double a = at(r, pc);
                if (a > kEps) {
                    const double q = rhs(r) / a;
                    if (q < ratio - kEps || (q < ratio + kEps && pr < rows_ && basis_[r] < basis_[pr])) {
                        ratio = q;
                        pr = r;
                    }
                }
            }
            if (pr == rows_) {
                return false;
            }
            degenerate = ratio < kEps ? degenerate + 1 : 0;
            pivot(pr, pc);
        }
        return true;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
    std::vector<std::size_t> basis_;
};

} // namespace

LpResult solve_lp(const LpProblem &problem) {
    const std::size_t n = problem.variables;
    const std::size_t m = problem.rows.size();
    std::size_t extra = 0;
    std::size_t artificial = 0;
    for (const auto &row : problem.rows) {
        const bool flip = row.rhs < 0.0;
        RowSense s = row.sense;
        if (flip && s != RowSense::Equal) {
            s = s == RowSense::Less ? RowSense::Greater : RowSense::Less;
        }
        extra += s == RowSense::Equal ? 0 : 1;
        artificial += s == RowSense::Less ? 0 : 1;
    }
    const std::size_t art_begin = n + extra;
    Tableau t{m, art_begin + artificial};

    std::size_t next_extra = n;
    std::size_t next_art = art_begin;
    for (std::size_t r = 0; r < m; ++r) {
        const auto &row = problem.rows[r];
        const double sign = row.rhs < 0.0 ? -1.0 : 1.0;
        RowSense s = row.sense;
        if (sign < 0.0 && s != RowSense::Equal) {
            s = s == RowSense::Less ? RowSense::Greater : RowSense::Less;
        }
        for (std::size_t c = 0; c < n; ++c) {
            t.at(r, c) = sign * row.coeffs[c];
        }
        t.rhs(r) = sign * row.rhs;
        if (s == RowSense::Less) {
            t.at(r, next_extra) = 1.0;
            t.basis()[r] = next_extra++;
        } else {
            if (s == RowSense::Greater) {
                t.at(r, next_extra++) = -1.0;
            }
            t.at(r, next_art) = 1.0;
            t.basis()[r] = next_art++;
        }
    }

    LpResult result;
    if (artificial > 0) {
        // Phase 1: minimize the sum of artificials.
        for (std::size_t r = 0; r < m; ++r) {
            if (t.basis()[r] >= art_begin) {
                for (std::size_t c = 0; c <= t.cols(); ++c) {
                    if (c < art_begin || c == t.cols()) {
                        t.at(m, c) -= t.at(r, c);
                    }
                }
            }
        }
        t.optimize(t.cols());
        if (-t.at(m, t.cols()) > 1e-7) {
            result.status = LpStatus::Infeasible;
            return result;
        }
        // Move zero-level artificials out of the basis where possible.
        for (std::size_t r = 0; r < m; ++r) {
            if (t.basis()[r] < art_begin) {
                continue;
            }
            for (std::size_t c = 0; c < art_begin; ++c) {
                if (std::abs(t.at(r, c)) > kEps) {
                    t.pivot(r, c);
                    break;
                }
            }
        }
    }

    // Phase 2 reduced costs.
    for (std::size_t c = 0; c <= t.cols(); ++c) {
        t.at(m, c) = c < n ? problem.cost[c] : 0.0;
    }
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t b = t.basis()[r];
        const double cb = b < n ? problem.cost[b] : 0.0;
        if (cb != 0.0) {
            for (std::size_t c = 0; c <= t.cols(); ++c) {
                t.at(m, c) -= cb * t.at(r, c);
            }
        }
    }
    if (!t.optimize(art_begin)) {
        result.status = LpStatus::Unbounded;
        return result;
    }
    result.status = LpStatus::Optimal;
    result.x.assign(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        if (t.basis()[r] < n) {
            result.x[t.basis()[r]] = t.rhs(r);
        }
    }
    result.value = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        result.value += problem.cost[c] * result.x[c];
    }
    return result;
}

} // namespace onlc::detail

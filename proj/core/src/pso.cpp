#include "onlc/pso.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <random>

namespace onlc {

void PsoConfig::validate() const {
    if (particles < 2) {
        throw ConfigError(fmt::format("swarm needs at least 2 particles, got {}", particles));
    }
    if (!(inertia > 0.0 && inertia < 1.0)) {
        throw ConfigError(fmt::format("inertia must lie in (0, 1), got {}", inertia));
    }
    if (!(velocity_clamp > 0.0) || cognitive < 0.0 || social < 0.0) {
        throw ConfigError("invalid PSO coefficients");
    }
}

PsoResult pso_minimize(std::span<const Bounds> box, const ObjectiveFn &objective,
                       const PsoConfig &config) {
    config.validate();
    const std::size_t dims = box.size();
    for (const auto &b : box) {
        if (!(b.lo <= b.hi)) {
            throw ConfigError(fmt::format("infeasible bounds [{}, {}]", b.lo, b.hi));
        }
    }

    std::mt19937_64 rng{config.seed};
    std::uniform_real_distribution<double> unit{0.0, 1.0};

    std::vector<double> vmax(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        vmax[d] = config.velocity_clamp * box[d].width();
    }

    const std::size_t n = config.particles;
    std::vector<double> pos(n * dims);
    std::vector<double> vel(n * dims);
    std::vector<double> best_pos(n * dims);
    std::vector<double> best_cost(n, std::numeric_limits<double>::infinity());

    PsoResult result;
    result.cost = std::numeric_limits<double>::infinity();
    result.position.assign(dims, 0.0);

    auto evaluate = [&](std::size_t p) {
        const std::span<const double> x{pos.data() + p * dims, dims};
        const double c = objective(x);
        ++result.evaluations;
        if (c < best_cost[p]) {
            best_cost[p] = c;
            std::copy(x.begin(), x.end(), best_pos.begin() + static_cast<std::ptrdiff_t>(p * dims));
        }
        if (c < result.cost) {
            result.cost = c;
            std::copy(x.begin(), x.end(), result.position.begin());
        }
    };

    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t d = 0; d < dims; ++d) {
            pos[p * dims + d] = box[d].lo + unit(rng) * box[d].width();
            vel[p * dims + d] = (2.0 * unit(rng) - 1.0) * vmax[d];
        }
        evaluate(p);
    }
    result.best_cost_history.push_back(result.cost);

    // Personal best with the lowest cost among p and its ring neighbours.
    auto leader = [&](std::size_t p) -> const double * {
        if (config.neighbours == 0 || 2 * config.neighbours + 1 >= n) {
            return result.position.data();
        }
        std::size_t best = p;
        for (std::size_t j = 1; j <= config.neighbours; ++j) {
            for (std::size_t q : {(p + j) % n, (p + n - j) % n}) {
                if (best_cost[q] < best_cost[best]) {
                    best = q;
                }
            }
        }
        return best_pos.data() + best * dims;
    };

    std::vector<double> social(dims);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        for (std::size_t p = 0; p < n; ++p) {
            const double *lead = leader(p);
            std::copy(lead, lead + dims, social.begin());
            for (std::size_t d = 0; d < dims; ++d) {
                const std::size_t k = p * dims + d;
                const double r1 = unit(rng);
                const double r2 = unit(rng);
                double v = config.inertia * vel[k] +
                           config.cognitive * r1 * (best_pos[k] - pos[k]) +
                           config.social * r2 * (social[d] - pos[k]);
                v = std::clamp(v, -vmax[d], vmax[d]);
                double x = pos[k] + v;
                if (x < box[d].lo) {
                    x = box[d].lo;
                    v = 0.0;
                } else if (x > box[d].hi) {
                    x = box[d].hi;
                    v = 0.0;
                }
                pos[k] = x;
                vel[k] = v;
            }
            evaluate(p);
        }
        result.best_cost_history.push_back(result.cost);
    }
    return result;
}

} // namespace onlc

#pragma once

#include "onlc/data.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace onlc {

//! Particle swarm with inertia weight. Defaults are the
//! constriction-equivalent settings (w = 0.729, c1 = c2 = 1.49445) on a
//! ring neighbourhood, which resists collapsing onto the first basin found.
struct PsoConfig {
    std::size_t particles = 40;
    std::size_t iterations = 200;
    double inertia = 0.729;
    double cognitive = 1.49445;
    double social = 1.49445;
    //! Per-dimension velocity limit as a fraction of the box width.
    double velocity_clamp = 0.2;
    //! Ring radius of each particle's social neighbourhood; 0 follows the
    //! global best.
    std::size_t neighbours = 1;
    std::uint64_t seed = 1;

    //! Throws ConfigError unless particles >= 2 and 0 < inertia < 1.
    void validate() const;
};

struct PsoResult {
    std::vector<double> position;
    double cost = 0.0;
    //! Best cost after initialization (entry 0) and after each iteration.
    std::vector<double> best_cost_history;
    std::size_t evaluations = 0;
};

using ObjectiveFn = std::function<double(std::span<const double>)>;

//! Minimizes `objective` over the box. Positions are clamped to the box, so
//! every evaluated point lies inside it. Deterministic in `config.seed`.
PsoResult pso_minimize(std::span<const Bounds> box, const ObjectiveFn &objective,
                       const PsoConfig &config);

} // namespace onlc

#pragma once

#include "onlc/data.hpp"
#include "onlc/pso.hpp"
#include "onlc/twin.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace onlc {

//! Lifestyle prescription for one day. intake_calories is derived from the
//! macros at 4/9/4 kcal/g and is never set independently.
struct Suggestion {
    double net_carb = 0.0;
    double fat = 0.0;
    double fiber = 0.0;
    double protein = 0.0;
    double intake_calories = 0.0;
    double activity_calories = 0.0;
    double steps = 0.0;

    static Suggestion make(double net_carb, double fat, double fiber, double protein,
                           double activity_calories, double steps);
    //! Decision vector in DecisionVariable order.
    static Suggestion from_decision(std::span<const double> x);
    std::array<double, kDecisionCount> decision() const;

    double keto_ratio() const { return onlc::keto_ratio(net_carb, fat, protein); }

    //! Features for the twin, with yesterday's (or the predicted) state.
    FeatureVector features(double glucose, double weight, double ketone) const;

    bool operator==(const Suggestion &) const = default;
};

nlohmann::json to_json(const Suggestion &s);
Suggestion suggestion_from_json(const nlohmann::json &j);
nlohmann::json to_json(const PredictedOutcome &p);
PredictedOutcome outcome_from_json(const nlohmann::json &j);

//! Search space for one diet group. Activity calories carry an extra
//! coupled limit: activity < intake + activity_margin.
struct ConstraintBox {
    DietGroup diet = DietGroup::Keto;
    std::array<Bounds, kDecisionCount> bounds{};
    double activity_margin = 500.0;

    const Bounds &operator[](DecisionVariable v) const {
        return bounds[static_cast<std::size_t>(v)];
    }
    Bounds &operator[](DecisionVariable v) { return bounds[static_cast<std::size_t>(v)]; }

    //! Replaces bounds with per-patient exceptions.
    ConstraintBox with_overrides(const std::map<DecisionVariable, Bounds> &overrides) const;

    //! Throws ConfigError when any lo > hi.
    void validate() const;

    bool contains(const Suggestion &s) const;

    //! Maps an in-box decision vector to a suggestion, lowering activity
    //! calories onto the coupled limit when needed.
    Suggestion repair(std::span<const double> x) const;
};

//! Diet-group defaults. Keto: net carb 20-50, fat 90-200, fiber 20-50,
//! protein 30-110. Low-fat: net carb 195-300, fat 20-55, fiber 20-50,
//! protein 100-160. Both: steps 0-30000, activity 0 to max intake + 500.
ConstraintBox default_box(DietGroup diet);
ConstraintBox box_for(const PatientProfile &profile);

//! Nurse penalty multipliers, each in [1, 1000].
struct Penalties {
    double glucose = 1.0;
    double weight = 1.0;
    double ketone = 1.0;

    void validate() const;
    Penalties scaled(double alpha) const { return {glucose * alpha, weight * alpha, ketone * alpha}; }
    bool operator==(const Penalties &) const = default;
};

nlohmann::json to_json(const Penalties &p);
Penalties penalties_from_json(const nlohmann::json &j);

//! Binary tuning gates; 1 keeps the objective term, 0 drops it.
struct Gates {
    int glucose = 1;
    int weight = 1;
    int ketone = 1;

    bool operator==(const Gates &) const = default;
};

//! glucose gate off when 70 <= G <= 130; weight gate off when the weight
//! does not rise or reaches the goal; ketone gate off unless a keto patient
//! is below ratio 1.5.
Gates gates(const PredictedOutcome &predicted, double prev_weight, const PatientProfile &profile,
            double keto_ratio);

//! One day's gated, penalized cost.
double gated_cost(const PredictedOutcome &predicted, const Gates &g, const Penalties &m,
                  double keto_ratio);

//! Rolls the plant forward `horizon` days holding the suggestion fixed and
//! sums the gated, penalized terms.
double objective(const Suggestion &suggestion, const Plant &plant, const DailyRecord &prev,
                 const PatientProfile &profile, const Penalties &penalties, std::size_t horizon);

struct ControllerConfig {
    PsoConfig pso;
    std::size_t horizon = 1;

    void validate() const;
};

nlohmann::json to_json(const ControllerConfig &c);
ControllerConfig controller_config_from_json(const nlohmann::json &j);

struct OptimizeResult {
    Suggestion suggestion;
    //! First-day forecast for the chosen suggestion.
    PredictedOutcome predicted;
    Gates gates;
    double cost = 0.0;
    std::vector<double> best_cost_history;
    std::size_t evaluations = 0;
};

//! Searches the patient's constraint box for the suggestion minimizing the
//! objective. Deterministic in config.pso.seed.
OptimizeResult optimize(const Plant &plant, const DailyRecord &prev, const PatientProfile &profile,
                        const Penalties &penalties, const ControllerConfig &config);

//! Audit document for one controller run.
nlohmann::json run_log(const OptimizeResult &result, const ControllerConfig &config);

} // namespace onlc

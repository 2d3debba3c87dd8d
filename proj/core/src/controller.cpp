#include "onlc/controller.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace onlc {

namespace {

constexpr double kGlucoseLow = 70.0;
constexpr double kGlucoseHigh = 130.0;
constexpr double kKetoTarget = 1.5;
constexpr double kMaxSteps = 30000.0;

double number(const nlohmann::json &j, const char *key) {
    if (!j.contains(key) || !j[key].is_number()) {
        throw ValidationError(fmt::format("missing numeric field '{}'", key));
    }
    return j[key].get<double>();
}

} // namespace

Suggestion Suggestion::make(double net_carb, double fat, double fiber, double protein,
                            double activity_calories, double steps) {
    Suggestion s;
    s.net_carb = net_carb;
    s.fat = fat;
    s.fiber = fiber;
    s.protein = protein;
    s.intake_calories = macro_calories(net_carb, fat, protein);
    s.activity_calories = activity_calories;
    s.steps = steps;
    return s;
}

Suggestion Suggestion::from_decision(std::span<const double> x) {
    if (x.size() != kDecisionCount) {
        throw DomainError("decision vector needs 6 entries");
    }
    return make(x[0], x[1], x[2], x[3], x[4], x[5]);
}

std::array<double, kDecisionCount> Suggestion::decision() const {
    return {net_carb, fat, fiber, protein, activity_calories, steps};
}

FeatureVector Suggestion::features(double glucose, double weight, double ketone) const {
    return {net_carb, fat, fiber, protein, activity_calories, steps, glucose, weight, ketone};
}

nlohmann::json to_json(const Suggestion &s) {
    return {{"net_carb", s.net_carb},
            {"fat", s.fat},
            {"fiber", s.fiber},
            {"protein", s.protein},
            {"intake_calories", s.intake_calories},
            {"activity_calories", s.activity_calories},
            {"steps", s.steps}};
}

Suggestion suggestion_from_json(const nlohmann::json &j) {
    Suggestion s = Suggestion::make(number(j, "net_carb"), number(j, "fat"), number(j, "fiber"),
                                    number(j, "protein"), number(j, "activity_calories"),
                                    number(j, "steps"));
    if (j.contains("intake_calories")) {
        // Stored value wins so replays stay bit-exact.
        s.intake_calories = number(j, "intake_calories");
    }
    return s;
}

nlohmann::json to_json(const PredictedOutcome &p) {
    return {{"glucose", p.glucose}, {"weight", p.weight}, {"ketone", p.ketone}};
}

PredictedOutcome outcome_from_json(const nlohmann::json &j) {
    return {number(j, "glucose"), number(j, "weight"), number(j, "ketone")};
}

// ---------------------------------------------------------------------------

ConstraintBox ConstraintBox::with_overrides(
    const std::map<DecisionVariable, Bounds> &overrides) const {
    ConstraintBox out = *this;
    for (const auto &[var, b] : overrides) {
        out[var] = b;
    }
    return out;
}

void ConstraintBox::validate() const {
    for (std::size_t i = 0; i < kDecisionCount; ++i) {
        const auto &b = bounds[i];
        if (!(b.lo <= b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi)) {
            throw ConfigError(fmt::format("infeasible bounds for {}: [{}, {}]",
                                          to_string(static_cast<DecisionVariable>(i)), b.lo, b.hi));
        }
    }
}

bool ConstraintBox::contains(const Suggestion &s) const {
    const auto x = s.decision();
    for (std::size_t i = 0; i < kDecisionCount; ++i) {
        if (!bounds[i].contains(x[i])) {
            return false;
        }
    }
    return s.activity_calories <= s.intake_calories + activity_margin &&
           std::abs(s.intake_calories - macro_calories(s.net_carb, s.fat, s.protein)) <= 1.0;
}

Suggestion ConstraintBox::repair(std::span<const double> x) const {
    Suggestion s = Suggestion::from_decision(x);
    const double limit = s.intake_calories + activity_margin;
    if (s.activity_calories > limit) {
        s.activity_calories = std::max((*this)[DecisionVariable::ActivityCalories].lo, limit);
    }
    return s;
}

ConstraintBox default_box(DietGroup diet) {
    ConstraintBox box;
    box.diet = diet;
    using V = DecisionVariable;
    if (diet == DietGroup::Keto) {
        box[V::NetCarb] = {20.0, 50.0};
        box[V::Fat] = {90.0, 200.0};
        box[V::Fiber] = {20.0, 50.0};
        box[V::Protein] = {30.0, 110.0};
    } else {
        box[V::NetCarb] = {195.0, 300.0};
        box[V::Fat] = {20.0, 55.0};
        box[V::Fiber] = {20.0, 50.0};
        box[V::Protein] = {100.0, 160.0};
    }
    const double max_intake =
        macro_calories(box[V::NetCarb].hi, box[V::Fat].hi, box[V::Protein].hi);
    box[V::ActivityCalories] = {0.0, max_intake + box.activity_margin};
    box[V::Steps] = {0.0, kMaxSteps};
    return box;
}

ConstraintBox box_for(const PatientProfile &profile) {
    return default_box(profile.diet).with_overrides(profile.constraint_overrides);
}

// ---------------------------------------------------------------------------

void Penalties::validate() const {
    for (double m : {glucose, weight, ketone}) {
        if (!(m >= 1.0 && m <= 1000.0)) {
            throw ValidationError(fmt::format("penalty {} outside [1, 1000]", m));
        }
    }
}

nlohmann::json to_json(const Penalties &p) {
    return {{"m1", p.glucose}, {"m2", p.weight}, {"m3", p.ketone}};
}

Penalties penalties_from_json(const nlohmann::json &j) {
    Penalties p{number(j, "m1"), number(j, "m2"), number(j, "m3")};
    p.validate();
    return p;
}

Gates gates(const PredictedOutcome &predicted, double prev_weight, const PatientProfile &profile,
            double keto_ratio) {
    Gates g;
    g.glucose = (predicted.glucose >= kGlucoseLow && predicted.glucose <= kGlucoseHigh) ? 0 : 1;
    g.weight = (prev_weight - predicted.weight >= 0.0 || predicted.weight <= profile.weight_goal)
                   ? 0
                   : 1;
    g.ketone = (profile.diet != DietGroup::Keto || keto_ratio >= kKetoTarget) ? 0 : 1;
    return g;
}

double gated_cost(const PredictedOutcome &predicted, const Gates &g, const Penalties &m,
                  double keto_ratio) {
    double cost = 0.0;
    if (g.glucose != 0) {
        cost += m.glucose * predicted.glucose;
    }
    if (g.weight != 0) {
        cost += m.weight * predicted.weight;
    }
    if (g.ketone != 0) {
        // Distributed so that decimal inputs such as K = 1.2 give exact
        // products (500 * (1.5 - 1.2) would carry the error of 1.5 - 1.2).
        cost += m.ketone * kKetoTarget - m.ketone * keto_ratio;
    }
    return cost;
}

double objective(const Suggestion &suggestion, const Plant &plant, const DailyRecord &prev,
                 const PatientProfile &profile, const Penalties &penalties, std::size_t horizon) {
    if (horizon == 0) {
        throw ConfigError("objective horizon must be at least one day");
    }
    const double k = suggestion.keto_ratio();
    double glucose = prev.at(Field::Glucose);
    double weight = prev.at(Field::Weight);
    double ketone = prev.at(Field::Ketone);
    double cost = 0.0;
    for (std::size_t day = 0; day < horizon; ++day) {
        const PredictedOutcome next = plant(suggestion.features(glucose, weight, ketone));
        if (!std::isfinite(next.glucose) || !std::isfinite(next.weight) ||
            !std::isfinite(next.ketone)) {
            throw DomainError("plant produced a non-finite prediction");
        }
        cost += gated_cost(next, gates(next, weight, profile, k), penalties, k);
        glucose = next.glucose;
        weight = next.weight;
        ketone = next.ketone;
    }
    return cost;
}

// ---------------------------------------------------------------------------

void ControllerConfig::validate() const {
    pso.validate();
    if (horizon < 1) {
        throw ConfigError("horizon must be at least one day");
    }
}

nlohmann::json to_json(const ControllerConfig &c) {
    return {{"particles", c.pso.particles},
            {"iterations", c.pso.iterations},
            {"inertia", c.pso.inertia},
            {"cognitive", c.pso.cognitive},
            {"social", c.pso.social},
            {"velocity_clamp", c.pso.velocity_clamp},
            {"neighbours", c.pso.neighbours},
            {"seed", c.pso.seed},
            {"horizon", c.horizon}};
}

ControllerConfig controller_config_from_json(const nlohmann::json &j) {
    ControllerConfig c;
    try {
        c.pso.particles = j.value("particles", c.pso.particles);
        c.pso.iterations = j.value("iterations", c.pso.iterations);
        c.pso.inertia = j.value("inertia", c.pso.inertia);
        c.pso.cognitive = j.value("cognitive", c.pso.cognitive);
        c.pso.social = j.value("social", c.pso.social);
        c.pso.velocity_clamp = j.value("velocity_clamp", c.pso.velocity_clamp);
        c.pso.neighbours = j.value("neighbours", c.pso.neighbours);
        c.pso.seed = j.value("seed", c.pso.seed);
        c.horizon = j.value("horizon", c.horizon);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(fmt::format("invalid controller config: {}", e.what()));
    }
    c.validate();
    return c;
}

OptimizeResult optimize(const Plant &plant, const DailyRecord &prev, const PatientProfile &profile,
                        const Penalties &penalties, const ControllerConfig &config) {
    config.validate();
    penalties.validate();
    const ConstraintBox box = box_for(profile);
    box.validate();

    auto cost_of = [&](std::span<const double> x) {
        return objective(box.repair(x), plant, prev, profile, penalties, config.horizon);
    };
    const PsoResult pso = pso_minimize(box.bounds, cost_of, config.pso);

    OptimizeResult out;
    out.suggestion = box.repair(pso.position);
    out.cost = pso.cost;
    out.best_cost_history = pso.best_cost_history;
    out.evaluations = pso.evaluations;
    out.predicted = plant(out.suggestion.features(prev.at(Field::Glucose), prev.at(Field::Weight),
                                                  prev.at(Field::Ketone)));
    out.gates = gates(out.predicted, prev.at(Field::Weight), profile,
                      out.suggestion.keto_ratio());
    return out;
}

nlohmann::json run_log(const OptimizeResult &result, const ControllerConfig &config) {
    return {{"seed", config.pso.seed},
            {"config", to_json(config)},
            {"best_cost_history", result.best_cost_history},
            {"evaluations", result.evaluations},
            {"suggestion", to_json(result.suggestion)},
            {"predicted", to_json(result.predicted)},
            {"gates", {result.gates.glucose, result.gates.weight, result.gates.ketone}},
            {"cost", result.cost}};
}

} // namespace onlc

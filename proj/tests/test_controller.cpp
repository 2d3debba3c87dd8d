#include "onlc/controller.hpp"
#include "onlc/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace onlc;
using V = DecisionVariable;

namespace {

PatientProfile keto_patient() {
    return PatientProfile::make("k1", DietGroup::Keto, ConditionGroup::ObeseT2D, Arm::AI, 199.2, 1800,
                                60, 90.0);
}

PatientProfile low_fat_patient() {
    return PatientProfile::make("l1", DietGroup::LowFat, ConditionGroup::ObeseKidneyT2D, Arm::AI, 240,
                                1900, 100, std::nullopt, 55.0);
}

DailyRecord last_observation() {
    DailyRecord r{Date{2023, 1, 5}};
    r.set(Field::NetCarb, 39);
    r.set(Field::Fat, 45.2);
    r.set(Field::Fiber, 0);
    r.set(Field::Protein, 104.1);
    r.set(Field::IntakeCalories, 1064);
    r.set(Field::ActivityCalories, 1009);
    r.set(Field::Steps, 5253);
    r.set(Field::Glucose, 134);
    r.set(Field::Ketone, 0.2);
    r.set(Field::Weight, 199.2);
    return r;
}

// Closed-form stand-in for the twin with the qualitative shape of the
// simulator: carbs raise glucose, steps and fiber lower it, energy balance
// drives weight, a high keto ratio raises ketone.
PredictedOutcome analytic(const FeatureVector &f) {
    const double k = keto_ratio(f.net_carb, f.fat, f.protein);
    return {40 + 0.3 * f.net_carb - 2.0 * f.steps / 1000 - 0.4 * f.fiber + 0.6 * f.prev_glucose,
            f.prev_weight + (macro_calories(f.net_carb, f.fat, f.protein) - f.activity_calories - 1700) / 3500,
            0.1 + 3.2 * k * k / (k * k + 1)};
}

} // namespace

TEST_CASE("the example forecast satisfies every gate") {
    const auto g = gates({110, 197.6, 2.4}, 199.2, keto_patient(), 1.5);
    CHECK(g == Gates{0, 0, 0});
}

TEST_CASE("gate rules") {
    const auto keto = keto_patient();
    CHECK(gates({134, 197.6, 2.4}, 199.2, keto, 1.5).glucose == 1);
    CHECK(gates({70, 197.6, 2.4}, 199.2, keto, 1.5).glucose == 0);
    CHECK(gates({130, 197.6, 2.4}, 199.2, keto, 1.5).glucose == 0);
    CHECK(gates({69.999, 197.6, 2.4}, 199.2, keto, 1.5).glucose == 1);

    CHECK(gates({110, 199.2, 2.4}, 199.2, keto, 1.5).weight == 0);
    CHECK(gates({110, 199.3, 2.4}, 199.2, keto, 1.5).weight == 1);
    // Past the goal, a small rise is not penalized.
    CHECK(gates({110, 159.0, 2.4}, 158.0, keto, 1.5).weight == 0);

    CHECK(gates({110, 197.6, 2.4}, 199.2, keto, 1.2).ketone == 1);
    CHECK(gates({110, 197.6, 2.4}, 199.2, keto, 1.6).ketone == 0);
    for (double k : {0.0, 0.3, 1.2, 5.0}) {
        CHECK(gates({110, 197.6, 2.4}, 199.2, low_fat_patient(), k).ketone == 0);
    }
}

TEST_CASE("objective fixtures are exact") {
    const Penalties m{10, 1, 500};
    CHECK(gated_cost({110, 197.6, 2.4}, Gates{0, 0, 0}, m, 1.5) == 0.0);
    CHECK(gated_cost({140, 197.6, 2.4}, Gates{1, 0, 0}, m, 1.5) == 1400.0);
    CHECK(gated_cost({110, 197.6, 2.4}, Gates{0, 0, 1}, m, 1.2) == 150.0);

    // The same numbers through the gate rules.
    const auto keto = keto_patient();
    const PredictedOutcome high{140, 197.6, 2.4};
    CHECK(gated_cost(high, gates(high, 199.2, keto, 1.5), m, 1.5) == 1400.0);
    const PredictedOutcome fine{110, 197.6, 2.4};
    CHECK(gated_cost(fine, gates(fine, 199.2, keto, 1.2), m, 1.2) == 150.0);
}

TEST_CASE("a closed gate makes the cost independent of its multiplier") {
    std::mt19937_64 rng{3};
    std::uniform_real_distribution<double> m{1, 1000};
    for (int i = 0; i < 200; ++i) {
        const PredictedOutcome p{60 + 200 * (m(rng) / 1000), 150 + m(rng) / 10, 1.0};
        const Gates g{i % 2, (i / 2) % 2, (i / 4) % 2};
        const Penalties a{m(rng), m(rng), m(rng)};
        Penalties b = a;
        if (g.glucose == 0) {
            b.glucose = m(rng);
        }
        if (g.weight == 0) {
            b.weight = m(rng);
        }
        if (g.ketone == 0) {
            b.ketone = m(rng);
        }
        CHECK(gated_cost(p, g, a, 0.7) == gated_cost(p, g, b, 0.7));
    }
}

TEST_CASE("the objective rolls the plant over the horizon") {
    const auto profile = keto_patient();
    const auto prev = last_observation();
    const auto s = Suggestion::make(30, 135, 25, 60, 1008, 6000);
    const Penalties m{3, 2, 7};
    const Plant plant = analytic;

    double g = prev.at(Field::Glucose), w = prev.at(Field::Weight), k = prev.at(Field::Ketone);
    double expected = 0.0;
    for (int day = 0; day < 3; ++day) {
        const auto next = analytic(s.features(g, w, k));
        expected += gated_cost(next, gates(next, w, profile, s.keto_ratio()), m, s.keto_ratio());
        g = next.glucose;
        w = next.weight;
        k = next.ketone;
    }
    CHECK(objective(s, plant, prev, profile, m, 3) == expected);
    CHECK_THROWS_AS(objective(s, plant, prev, profile, m, 0), ConfigError);

    const Plant broken = [](const FeatureVector &) { return PredictedOutcome{NAN, 1, 1}; };
    CHECK_THROWS_AS(objective(s, broken, prev, profile, m, 1), DomainError);
}

TEST_CASE("default constraint boxes") {
    const auto keto = default_box(DietGroup::Keto);
    CHECK(keto[V::NetCarb] == Bounds{20, 50});
    CHECK(keto[V::Fat] == Bounds{90, 200});
    CHECK(keto[V::Fiber] == Bounds{20, 50});
    CHECK(keto[V::Protein] == Bounds{30, 110});
    CHECK(keto[V::Steps] == Bounds{0, 30000});
    CHECK(keto[V::ActivityCalories] == Bounds{0, 4 * 50 + 9 * 200 + 4 * 110 + 500});

    const auto low = default_box(DietGroup::LowFat);
    CHECK(low[V::NetCarb] == Bounds{195, 300});
    CHECK(low[V::Fat] == Bounds{20, 55});
    CHECK(low[V::Fiber] == Bounds{20, 50});
    CHECK(low[V::Protein] == Bounds{100, 160});

    auto p = keto_patient();
    p.constraint_overrides[V::Protein] = {40, 90};
    const auto merged = box_for(p);
    CHECK(merged[V::Protein] == Bounds{40, 90});
    CHECK(merged[V::Fat] == Bounds{90, 200});

    p.constraint_overrides[V::Fat] = {300, 100};
    CHECK_THROWS_AS(box_for(p).validate(), ConfigError);
    CHECK_THROWS_AS(optimize(analytic, last_observation(), p, {}, ControllerConfig{}), ConfigError);
}

TEST_CASE("suggestions derive intake from macros and repair the activity limit") {
    const auto s = Suggestion::make(30, 135, 25, 60, 1008, 6000);
    CHECK(s.intake_calories == 4 * 30 + 9 * 135 + 4 * 60);
    CHECK(s.keto_ratio() == 1.5);

    const auto box = default_box(DietGroup::Keto);
    const std::array<double, 6> x{20, 90, 20, 30, 3000, 100};
    const auto fixed = box.repair(x);
    CHECK(fixed.activity_calories == fixed.intake_calories + 500);
    CHECK(box.contains(fixed));
    CHECK(suggestion_from_json(to_json(s)) == s);
}

TEST_CASE("optimized suggestions always lie in the box") {
    std::mt19937_64 rng{12};
    std::uniform_real_distribution<double> u{0, 1};
    ControllerConfig config;
    config.pso.particles = 12;
    config.pso.iterations = 25;
    for (int i = 0; i < 1000; ++i) {
        auto profile = i % 2 == 0 ? keto_patient() : low_fat_patient();
        if (i % 5 == 0) {
            profile.constraint_overrides[V::Protein] = {profile.diet == DietGroup::Keto ? 40.0 : 110.0,
                                                        profile.diet == DietGroup::Keto ? 90.0 : 140.0};
        }
        auto prev = last_observation();
        prev.set(Field::Glucose, 70 + 150 * u(rng));
        prev.set(Field::Weight, 150 + 100 * u(rng));
        const Penalties m{1 + 999 * u(rng), 1 + 999 * u(rng), 1 + 999 * u(rng)};
        config.pso.seed = static_cast<std::uint64_t>(i);
        const auto r = optimize(analytic, prev, profile, m, config);
        CHECK(box_for(profile).contains(r.suggestion));
        CHECK(std::abs(r.suggestion.intake_calories -
                       macro_calories(r.suggestion.net_carb, r.suggestion.fat, r.suggestion.protein)) <= 1.0);
    }
}

TEST_CASE("the reported cost is the objective of the returned suggestion") {
    const auto profile = keto_patient();
    const auto prev = last_observation();
    const Penalties m{10, 5, 500};
    ControllerConfig config;
    config.horizon = 2;
    const auto r = optimize(analytic, prev, profile, m, config);
    CHECK(r.cost == objective(r.suggestion, analytic, prev, profile, m, 2));
    CHECK(r.predicted == analytic(r.suggestion.features(134, 199.2, 0.2)));
    CHECK(r.gates == gates(r.predicted, 199.2, profile, r.suggestion.keto_ratio()));
    for (std::size_t i = 1; i < r.best_cost_history.size(); ++i) {
        CHECK(r.best_cost_history[i] <= r.best_cost_history[i - 1]);
    }
    const auto again = optimize(analytic, prev, profile, m, config);
    CHECK(again.suggestion == r.suggestion);

    const auto log = run_log(r, config);
    CHECK(log["seed"] == config.pso.seed);
    CHECK(log["cost"] == r.cost);
    CHECK(log["best_cost_history"].size() == config.pso.iterations + 1);
}

TEST_CASE("scaling every multiplier keeps the chosen suggestion") {
    const auto prev = last_observation();
    for (const auto &profile : {keto_patient(), low_fat_patient()}) {
        const Penalties m{10, 3, 100};
        ControllerConfig config;
        config.pso.seed = 5;
        const auto base = optimize(analytic, prev, profile, m, config);
        for (double alpha : {2.0, 4.0, 8.0}) {
            const auto scaled = optimize(analytic, prev, profile, m.scaled(alpha), config);
            CHECK(scaled.suggestion == base.suggestion);
            CHECK(scaled.cost == doctest::Approx(alpha * base.cost).epsilon(1e-12));
        }
    }
}

TEST_CASE("controller settings are validated") {
    ControllerConfig config;
    config.horizon = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    CHECK_THROWS_AS(controller_config_from_json({{"particles", 1}}), ConfigError);
    const auto c = controller_config_from_json({{"particles", 10}, {"horizon", 2}, {"seed", 9}});
    CHECK(c.pso.particles == 10);
    CHECK(c.horizon == 2);
    CHECK(controller_config_from_json(to_json(c)).pso.seed == 9);
    CHECK_THROWS_AS(Penalties({0.5, 1, 1}).validate(), ValidationError);
    CHECK_THROWS_AS(Penalties({1, 1001, 1}).validate(), ValidationError);
    CHECK(penalties_from_json(to_json(Penalties{10, 1, 500})) == Penalties{10, 1, 500});
}

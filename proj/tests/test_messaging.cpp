#include "onlc/errors.hpp"
#include "onlc/messaging.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace onlc;
using V = DecisionVariable;

namespace {

PatientProfile keto_patient(double calorie_goal = 1800) {
    return PatientProfile::make("k1", DietGroup::Keto, ConditionGroup::ObeseT2D, Arm::AI, 199.2,
                                calorie_goal, 60, 90.0);
}

FoodItem item(std::string name, FoodGroup g, double carb, double fat, double fiber, double protein,
              int max_servings = 8) {
    return {std::move(name), g, "1 serving", carb, fat, fiber, protein,
            macro_calories(carb, fat, protein), max_servings};
}

double deviation(const MacroTotals &t, const Suggestion &s) {
    return std::abs(t.net_carb - s.net_carb) / s.net_carb + std::abs(t.fat - s.fat) / s.fat +
           std::abs(t.protein - s.protein) / s.protein;
}

struct Best {
    bool found = false;
    std::size_t groups = 0;
    double dev = INFINITY;
};

// Every plan with at most one item per group, by exhaustive enumeration.
Best brute_force(const std::vector<FoodItem> &catalog, const Suggestion &s,
                 const PatientProfile &profile, const PlannerOptions &options) {
    std::map<FoodGroup, std::vector<const FoodItem *>> groups;
    for (const auto &it : catalog) {
        groups[it.group].push_back(&it);
    }
    std::vector<std::vector<MealItem>> choices;
    for (const auto &[g, members] : groups) {
        std::vector<MealItem> opts{{FoodItem{}, 0}};
        for (const FoodItem *it : members) {
            for (int k = 1; k <= std::min(it->max_servings, options.max_servings); ++k) {
                opts.push_back({*it, k});
            }
        }
        choices.push_back(std::move(opts));
    }
    Best best;
    std::vector<std::size_t> idx(choices.size(), 0);
    while (true) {
        std::vector<MealItem> items;
        for (std::size_t g = 0; g < choices.size(); ++g) {
            if (choices[g][idx[g]].servings > 0) {
                items.push_back(choices[g][idx[g]]);
            }
        }
        const auto plan = MealPlan::from_items(items);
        if (verify_plan(plan, s, profile, options).empty()) {
            const auto groups_used = plan.distinct_groups();
            const double dev = deviation(plan.totals, s);
            if (!best.found || groups_used > best.groups ||
                (groups_used == best.groups && dev < best.dev)) {
                best = {true, groups_used, dev};
            }
        }
        std::size_t g = 0;
        while (g < idx.size() && ++idx[g] == choices[g].size()) {
            idx[g++] = 0;
        }
        if (g == idx.size()) {
            break;
        }
    }
    return best;
}

std::vector<MotivationalMessage> domain_messages(MessageDomain d, int n) {
    std::vector<MotivationalMessage> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({std::string{to_string(d)} + "-" + std::to_string(i), d, "text"});
    }
    return out;
}

} // namespace

TEST_CASE("the shipped catalog and pool are valid") {
    const auto &catalog = shipped_catalog();
    CHECK(catalog.size() >= kFoodGroupCount);
    std::array<bool, kFoodGroupCount> seen{};
    for (const auto &it : catalog) {
        CHECK_NOTHROW(it.validate());
        seen[static_cast<std::size_t>(it.group)] = true;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

    const auto &pool = MessagePool::shipped();
    for (auto d : {MessageDomain::PositiveFeedback, MessageDomain::Carbohydrate, MessageDomain::Protein,
                   MessageDomain::Fat, MessageDomain::Fiber, MessageDomain::OverallNutrition,
                   MessageDomain::SelfMonitoring, MessageDomain::Exercise}) {
        const auto n = std::count_if(pool.messages.begin(), pool.messages.end(),
                                     [&](const auto &m) { return m.domain == d; });
        CHECK(n >= 2);
        CHECK(message_domain_from(to_string(d)) == d);
    }
}

TEST_CASE("catalog validation rejects inconsistent items") {
    auto bad = item("x", FoodGroup::Fruits, 10, 1, 1, 1);
    bad.calories = 200;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = item("x", FoodGroup::Fruits, -1, 1, 1, 1);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = item("x", FoodGroup::Fruits, 10, 1, 1, 1, 0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(food_group_from("candy"), ConfigError);
    CHECK_THROWS_AS(catalog_from_json({{"items", {{{"name", "x"}}}}}), ConfigError);
    CHECK_THROWS_AS(MessagePool::from_json({{"messages", {{{"id", "a"}, {"domain", "nope"}, {"text", ""}}}}}),
                    ConfigError);
}

TEST_CASE("plans built from the shipped catalog are found and verified") {
    std::mt19937_64 rng{21};
    const auto &catalog = shipped_catalog();
    std::map<FoodGroup, std::vector<const FoodItem *>> groups;
    for (const auto &it : catalog) {
        groups[it.group].push_back(&it);
    }
    for (int trial = 0; trial < 40; ++trial) {
        // A known whole-serving plan makes the target feasible by construction.
        std::vector<MealItem> items;
        for (const auto &[g, members] : groups) {
            if (std::uniform_int_distribution<int>{0, 3}(rng) == 0) {
                continue;
            }
            const FoodItem *it = members[std::uniform_int_distribution<std::size_t>{0, members.size() - 1}(rng)];
            items.push_back({*it, std::uniform_int_distribution<int>{1, 3}(rng)});
        }
        const auto known = MealPlan::from_items(items);
        if (known.totals.net_carb <= 0 || known.totals.fat <= 0 || known.totals.protein <= 0) {
            continue;
        }
        const auto s = Suggestion::make(known.totals.net_carb, known.totals.fat, known.totals.fiber,
                                        known.totals.protein, 500, 8000);
        auto profile = keto_patient(known.totals.calories + 50);
        profile.constraint_overrides[V::Fiber] = {0, known.totals.fiber + 20};
        const auto plan = plan_meals(s, catalog, profile);
        const auto failures = verify_plan(plan, s, profile);
        CHECK_MESSAGE(failures.empty(), (failures.empty() ? "" : failures.front()));
        CHECK(plan.distinct_groups() >= known.distinct_groups());
        CHECK(plan.distinct_groups() == plan.items.size());
    }
}

TEST_CASE("on small catalogs the planner matches exhaustive search") {
    std::mt19937_64 rng{22};
    std::uniform_int_distribution<int> macro{0, 12};
    const std::array<FoodGroup, 3> used{FoodGroup::LeanMeat, FoodGroup::Vegetables, FoodGroup::NutsSeeds};
    int feasible = 0, infeasible = 0;
    PlannerOptions options;
    options.max_servings = 3;
    options.tolerance = 0.15;
    options.node_budget = 100000;
    for (int trial = 0; trial < 120; ++trial) {
        std::vector<FoodItem> catalog;
        for (auto g : used) {
            for (int k = 0; k < 2; ++k) {
                catalog.push_back(item(std::string{to_string(g)} + std::to_string(k), g, macro(rng),
                                       macro(rng), macro(rng) / 3.0, macro(rng) + 1));
            }
        }
        const auto s = Suggestion::make(5 + macro(rng) * 3, 5 + macro(rng) * 3, 10, 5 + macro(rng) * 3,
                                        500, 8000);
        auto profile = keto_patient(300 + 40 * macro(rng));
        profile.constraint_overrides[V::Fiber] = {0, 30};
        const auto oracle = brute_force(catalog, s, profile, options);
        if (!oracle.found) {
            CHECK_THROWS_AS(plan_meals(s, catalog, profile, options), InfeasibleError);
            ++infeasible;
            continue;
        }
        const auto plan = plan_meals(s, catalog, profile, options);
        CHECK(verify_plan(plan, s, profile, options).empty());
        CHECK(plan.distinct_groups() == oracle.groups);
        CHECK(deviation(plan.totals, s) == doctest::Approx(oracle.dev).epsilon(1e-9));
        ++feasible;
    }
    CHECK(feasible >= 15);
    CHECK(infeasible >= 15);
}

TEST_CASE("infeasible targets name the binding constraint") {
    const auto &catalog = shipped_catalog();
    const auto s = Suggestion::make(30, 135, 25, 60, 1008, 6000);

    try {
        plan_meals(s, catalog, keto_patient(300));
        FAIL("expected infeasibility");
    } catch (const InfeasibleError &e) {
        CHECK(e.binding() == "calories");
    }
    try {
        plan_meals(Suggestion::make(30, 135, 25, 60000, 1008, 6000), catalog, keto_patient(1e6));
        FAIL("expected infeasibility");
    } catch (const InfeasibleError &e) {
        CHECK(e.binding() == "protein");
    }
    auto fibrous = keto_patient();
    fibrous.constraint_overrides[V::Fiber] = {5000, 6000};
    try {
        plan_meals(s, catalog, fibrous);
        FAIL("expected infeasibility");
    } catch (const InfeasibleError &e) {
        CHECK(e.binding() == "fiber");
    }
    Suggestion negative = s;
    negative.fat = -5;
    try {
        plan_meals(negative, catalog, keto_patient());
        FAIL("expected infeasibility");
    } catch (const InfeasibleError &e) {
        CHECK(e.binding() == "fat");
    }

    PlannerOptions bad;
    bad.max_servings = 0;
    CHECK_THROWS_AS(plan_meals(s, catalog, keto_patient(), bad), ConfigError);
}

TEST_CASE("verify_plan recomputes from the items") {
    const auto s = Suggestion::make(20, 20, 10, 20, 500, 8000);
    auto profile = keto_patient(1000);
    profile.constraint_overrides[V::Fiber] = {0, 50};
    const auto a = item("a", FoodGroup::LeanMeat, 10, 10, 5, 10);
    auto plan = MealPlan::from_items({{a, 2}});
    CHECK(verify_plan(plan, s, profile).empty());
    // Doctored totals do not fool the check.
    plan.items[0].servings = 3;
    CHECK_FALSE(verify_plan(plan, s, profile).empty());
    const auto twice = MealPlan::from_items({{a, 1}, {item("b", FoodGroup::LeanMeat, 10, 10, 5, 10), 1}});
    CHECK_FALSE(verify_plan(twice, s, profile).empty());
    CHECK_FALSE(verify_plan(MealPlan::from_items({{a, 9}}), s, profile).empty());
}

TEST_CASE("step goal is the nearest-rank 70th percentile of the last ten days") {
    std::vector<double> ten;
    for (int i = 0; i < 10; ++i) {
        ten.push_back(3000 + 1000 * i);
    }
    CHECK(step_goal(ten) == 9000);

    std::mt19937_64 rng{30};
    std::uniform_int_distribution<int> steps{0, 20000};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> h(1 + trial % 25);
        for (auto &x : h) {
            x = steps(rng);
        }
        std::vector<double> window(h.end() - static_cast<std::ptrdiff_t>(std::min<std::size_t>(h.size(), 10)),
                                   h.end());
        std::sort(window.begin(), window.end());
        const auto rank = static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(window.size())));
        CHECK(step_goal(h) == window[rank - 1]);

        // Order inside the window does not matter.
        std::vector<double> shuffled = h;
        std::shuffle(shuffled.end() - static_cast<std::ptrdiff_t>(std::min<std::size_t>(h.size(), 10)),
                     shuffled.end(), rng);
        CHECK(step_goal(shuffled) == step_goal(h));
    }
    CHECK(step_goal(std::vector<double>{4200}) == 4200);
    CHECK_THROWS_AS(step_goal(std::vector<double>{}), DomainError);
}

TEST_CASE("the motivational domain follows the most important violation") {
    const auto &pool = MessagePool::shipped();
    const Date today{2023, 3, 1};
    CHECK(pick_motivation({}, pool, {}, today).domain == MessageDomain::PositiveFeedback);

    const Violation steps{Check::Steps, "steps", 4000, ">= 6000", Importance::LowImportance};
    CHECK(pick_motivation(std::vector{steps}, pool, {}, today).domain == MessageDomain::Exercise);

    const Violation protein{Check::MinProtein, "protein", 40, ">= 60", Importance::ModeratelyImportant};
    CHECK(pick_motivation(std::vector{steps, protein}, pool, {}, today).domain == MessageDomain::Protein);

    const Violation carb{Check::NetCarbRange, "net_carb", 70, "20-50", Importance::VeryImportant};
    const Violation glucose{Check::GlucoseRange, "glucose", 160, "70-130", Importance::VeryImportant};
    CHECK(pick_motivation(std::vector{carb, glucose}, pool, {}, today).domain ==
          MessageDomain::Carbohydrate);
    CHECK(pick_motivation(std::vector{glucose, carb}, pool, {}, today).domain ==
          MessageDomain::SelfMonitoring);
}

TEST_CASE("no message repeats within fourteen days while the pool allows it") {
    std::mt19937_64 rng{31};
    const auto &pool = MessagePool::shipped();
    const std::array<Violation, 3> options{
        Violation{Check::Steps, "steps", 1, "", Importance::LowImportance},
        Violation{Check::MinProtein, "protein", 1, "", Importance::ModeratelyImportant},
        Violation{Check::GlucoseRange, "glucose", 1, "", Importance::VeryImportant}};
    MessageHistory history;
    Date day{2023, 1, 1};
    std::map<std::string, Date> last_sent;
    for (int i = 0; i < 365; ++i, day += 1) {
        std::vector<Violation> v;
        const int pick = std::uniform_int_distribution<int>{0, 3}(rng);
        if (pick < 3) {
            v.push_back(options[static_cast<std::size_t>(pick)]);
        }
        const auto m = pick_motivation(v, pool, history, day);
        if (auto it = last_sent.find(m.id); it != last_sent.end()) {
            CHECK(day - it->second >= kNoRepeatDays);
        }
        last_sent[m.id] = day;
        history.sent.push_back({day, m.id});
    }
}

TEST_CASE("a small domain falls back to the least recently used message") {
    MessagePool pool;
    pool.messages = domain_messages(MessageDomain::PositiveFeedback, 2);
    MessageHistory history;
    Date day{2023, 1, 1};
    std::vector<std::string> sent;
    for (int i = 0; i < 6; ++i, day += 1) {
        const auto m = pick_motivation({}, pool, history, day);
        history.sent.push_back({day, m.id});
        sent.push_back(m.id);
    }
    // Alternates: the older of the two is always chosen.
    for (std::size_t i = 2; i < sent.size(); ++i) {
        CHECK(sent[i] == sent[i - 2]);
        CHECK(sent[i] != sent[i - 1]);
    }
    const Violation steps{Check::Steps, "steps", 1, "", Importance::LowImportance};
    CHECK_THROWS_AS(pick_motivation(std::vector{steps}, pool, history, day), DomainError);
}

TEST_CASE("the daily message has its three parts") {
    FoodItem seeds = item("sunflower seeds", FoodGroup::NutsSeeds, 3, 14, 3, 6);
    seeds.serving = "1/4 cup";
    const auto plan = MealPlan::from_items({{seeds, 4}, {item("chicken", FoodGroup::LeanMeat, 0, 3, 0, 21), 1}});
    const MotivationalMessage mot{"fb-1", MessageDomain::Fiber, "Add a handful of greens."};
    const auto msg = compose(plan, mot, 9000);
    CHECK(msg.text.find("Meal plan") != std::string::npos);
    CHECK(msg.text.find("Motivation\nAdd a handful of greens.") != std::string::npos);
    CHECK(msg.text.find("Aim for 9000 steps today.") != std::string::npos);
    CHECK(msg.text.find("4 servings of (1/4 cup) sunflower seeds") != std::string::npos);
    CHECK(msg.text.find("1 serving of (1 serving) chicken") != std::string::npos);
    // Rows follow the food-group order, not insertion order.
    CHECK(msg.text.find("Lean-Fat Meat") < msg.text.find("Nuts and Seeds"));

    const auto back = daily_message_from_json(to_json(msg));
    CHECK(back.text == msg.text);
    CHECK(back.motivation == msg.motivation);
    CHECK(back.step_goal == 9000);
    CHECK(back.plan.items.size() == 2);

    const auto keep = compose(MealPlan{}, mot, 7000, "calories bound");
    CHECK(keep.text.find("keep your current meals") != std::string::npos);
    CHECK(keep.text.find("calories bound") != std::string::npos);
}

#include "onlc/messaging.hpp"
#include "onlc/embedded_data.hpp"
#include "onlc/errors.hpp"

#include "lp.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace onlc {

namespace {

constexpr double kSlack = 1e-9;

constexpr std::array<FoodGroup, kFoodGroupCount> kAllFoodGroups{
    FoodGroup::LeanMeat,   FoodGroup::MediumFatMeat, FoodGroup::HighFatMeat, FoodGroup::Vegetables,
    FoodGroup::Fruits,     FoodGroup::WholeMilk,     FoodGroup::NutsSeeds,   FoodGroup::SaturatedFats};

constexpr std::array<MessageDomain, 8> kAllDomains{
    MessageDomain::PositiveFeedback, MessageDomain::Carbohydrate,     MessageDomain::Protein,
    MessageDomain::Fat,              MessageDomain::Fiber,            MessageDomain::OverallNutrition,
    MessageDomain::SelfMonitoring,   MessageDomain::Exercise};

} // namespace

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

std::string_view to_string(FoodGroup g) {
    switch (g) {
    case FoodGroup::LeanMeat:
        return "lean-meat";
    case FoodGroup::MediumFatMeat:
        return "medium-fat-meat";
    case FoodGroup::HighFatMeat:
        return "high-fat-meat";
    case FoodGroup::Vegetables:
        return "vegetables";
    case FoodGroup::Fruits:
        return "fruits";
    case FoodGroup::WholeMilk:
        return "whole-milk";
    case FoodGroup::NutsSeeds:
        return "nuts-seeds";
    case FoodGroup::SaturatedFats:
        return "saturated-fats";
    }
    return "?";
}

std::string_view display_name(FoodGroup g) {
    switch (g) {
    case FoodGroup::LeanMeat:
        return "Lean-Fat Meat and Substitutes";
    case FoodGroup::MediumFatMeat:
        return "Medium-Fat Meat and Substitutes";
    case FoodGroup::HighFatMeat:
        return "High-Fat Meat and Substitutes";
    case FoodGroup::Vegetables:
        return "Vegetables";
    case FoodGroup::Fruits:
        return "Fruits";
    case FoodGroup::WholeMilk:
        return "Whole Milk";
    case FoodGroup::NutsSeeds:
        return "Nuts and Seeds";
    case FoodGroup::SaturatedFats:
        return "Saturated Fats";
    }
    return "?";
}

FoodGroup food_group_from(std::string_view s) {
    for (FoodGroup g : kAllFoodGroups) {
        if (s == to_string(g)) {
            return g;
        }
    }
    throw ConfigError(fmt::format("unknown food group '{}'", s));
}

void FoodItem::validate() const {
    for (double v : {net_carb, fat, fiber, protein, calories}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError(fmt::format("food item '{}' has a negative or invalid value", name));
        }
    }
    if (max_servings < 1) {
        throw ConfigError(fmt::format("food item '{}' allows no servings", name));
    }
    const double rebuilt = macro_calories(net_carb, fat, protein);
    if (std::abs(calories - rebuilt) > 0.2 * std::max(rebuilt, 1.0)) {
        throw ConfigError(fmt::format("food item '{}': {} kcal is not within 20% of {} kcal", name,
                                      calories, rebuilt));
    }
}

std::vector<FoodItem> catalog_from_json(const nlohmann::json &j) {
    std::vector<FoodItem> items;
    try {
        for (const auto &e : j.at("items")) {
            FoodItem item;
            item.name = e.at("name").get<std::string>();
            item.group = food_group_from(e.at("group").get<std::string>());
            item.serving = e.at("serving").get<std::string>();
            item.net_carb = e.at("net_carb").get<double>();
            item.fat = e.at("fat").get<double>();
            item.fiber = e.at("fiber").get<double>();
            item.protein = e.at("protein").get<double>();
            item.calories = e.at("calories").get<double>();
            item.max_servings = e.value("max_servings", 8);
            item.validate();
            items.push_back(std::move(item));
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ConfigError(fmt::format("invalid food catalog: {}", ex.what()));
    }
    return items;
}

const std::vector<FoodItem> &shipped_catalog() {
    static const std::vector<FoodItem> catalog =
        catalog_from_json(nlohmann::json::parse(embedded::food_catalog_json()));
    return catalog;
}

std::size_t MealPlan::distinct_groups() const {
    std::array<bool, kFoodGroupCount> seen{};
    for (const auto &mi : items) {
        seen[static_cast<std::size_t>(mi.item.group)] = true;
    }
    return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

MealPlan MealPlan::from_items(std::vector<MealItem> items) {
    MealPlan plan;
    for (const auto &mi : items) {
        const double s = mi.servings;
        plan.totals.net_carb += s * mi.item.net_carb;
        plan.totals.fat += s * mi.item.fat;
        plan.totals.fiber += s * mi.item.fiber;
        plan.totals.protein += s * mi.item.protein;
        plan.totals.calories += s * mi.item.calories;
    }
    plan.items = std::move(items);
    return plan;
}

nlohmann::json to_json(const MealPlan &plan) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto &mi : plan.items) {
        items.push_back({{"name", mi.item.name},
                         {"group", to_string(mi.item.group)},
                         {"serving", mi.item.serving},
                         {"servings", mi.servings},
                         {"per_serving",
                          {{"net_carb", mi.item.net_carb},
                           {"fat", mi.item.fat},
                           {"fiber", mi.item.fiber},
                           {"protein", mi.item.protein},
                           {"calories", mi.item.calories}}},
                         {"max_servings", mi.item.max_servings}});
    }
    return {{"items", std::move(items)},
            {"totals",
             {{"net_carb", plan.totals.net_carb},
              {"fat", plan.totals.fat},
              {"fiber", plan.totals.fiber},
              {"protein", plan.totals.protein},
              {"calories", plan.totals.calories}}}};
}

MealPlan meal_plan_from_json(const nlohmann::json &j) {
    std::vector<MealItem> items;
    try {
        for (const auto &e : j.at("items")) {
            MealItem mi;
            mi.item.name = e.at("name").get<std::string>();
            mi.item.group = food_group_from(e.at("group").get<std::string>());
            mi.item.serving = e.at("serving").get<std::string>();
            const auto &per = e.at("per_serving");
            mi.item.net_carb = per.at("net_carb").get<double>();
            mi.item.fat = per.at("fat").get<double>();
            mi.item.fiber = per.at("fiber").get<double>();
            mi.item.protein = per.at("protein").get<double>();
            mi.item.calories = per.at("calories").get<double>();
            mi.item.max_servings = e.value("max_servings", 8);
            mi.servings = e.at("servings").get<int>();
            items.push_back(std::move(mi));
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ValidationError(fmt::format("invalid meal plan: {}", ex.what()));
    }
    return MealPlan::from_items(std::move(items));
}

// ---------------------------------------------------------------------------
// Planner
// ---------------------------------------------------------------------------

namespace {

// Quantities tracked by the search: net carb, fat, fiber, protein, calories.
constexpr std::size_t kQ = 5;
using Amounts = std::array<double, kQ>;
// Quantities with a target: net carb, fat, protein.
constexpr std::array<std::size_t, 3> kTargeted{0, 1, 3};

Amounts amounts_of(const FoodItem &item) {
    return {item.net_carb, item.fat, item.fiber, item.protein, item.calories};
}

std::string_view quantity_name(std::size_t q) {
    static constexpr std::array<std::string_view, kQ> names{"net_carb", "fat", "fiber", "protein",
                                                            "calories"};
    return names[q];
}

struct Limits {
    Amounts lo{};
    Amounts hi{};
    std::array<double, 3> target{};
};

double relative(double gap, double target) { return target > 0.0 ? gap / target : gap; }

class Search {
public:
    Search(const Limits &limits, std::span<const FoodItem> catalog, const PlannerOptions &options)
        : limits_{limits}, options_{options} {
        for (FoodGroup g : kAllFoodGroups) {
            std::vector<const FoodItem *> members;
            for (const auto &item : catalog) {
                if (item.group == g) {
                    item.validate();
                    members.push_back(&item);
                }
            }
            if (!members.empty()) {
                groups_.push_back(std::move(members));
            }
        }
    }

    void relax(std::size_t q) {
        limits_.lo[q] = 0.0;
        limits_.hi[q] = std::numeric_limits<double>::infinity();
    }

    //! Most of each quantity the whole catalog can supply.
    Amounts capacity() const {
        Amounts total{};
        for (const auto &members : groups_) {
            for (std::size_t q = 0; q < kQ; ++q) {
                double most = 0.0;
                for (const FoodItem *item : members) {
                    most = std::max(most, amounts_of(*item)[q] * cap(*item));
                }
                total[q] += most;
            }
        }
        return total;
    }

    //! Continuous relaxation from group g on: servings may be fractional and
    //! a group's items share one unit of "serving budget". Its optimum is a
    //! lower bound on the deviation of every completion.
    detail::LpResult relaxation(std::size_t g, const Amounts &t) const {
        std::vector<const FoodItem *> vars;
        std::vector<std::size_t> var_group;
        for (std::size_t k = g; k < groups_.size(); ++k) {
            for (const FoodItem *item : groups_[k]) {
                vars.push_back(item);
                var_group.push_back(k);
            }
        }
        const std::size_t nx = vars.size();
        const std::size_t n = nx + 6;
        detail::LpProblem lp;
        lp.variables = n;
        lp.cost.assign(n, 0.0);
        for (std::size_t i = 0; i < 3; ++i) {
            const double w = relative(1.0, limits_.target[i]);
            lp.cost[nx + 2 * i] = w;
            lp.cost[nx + 2 * i + 1] = w;
        }
        for (std::size_t k = g; k < groups_.size(); ++k) {
            detail::LpRow row{std::vector<double>(n, 0.0), detail::RowSense::Less, 1.0};
            for (std::size_t j = 0; j < nx; ++j) {
                if (var_group[j] == k) {
                    row.coeffs[j] = 1.0 / cap(*vars[j]);
                }
            }
            lp.rows.push_back(std::move(row));
        }
        for (std::size_t q = 0; q < kQ; ++q) {
            std::vector<double> coeffs(n, 0.0);
            for (std::size_t j = 0; j < nx; ++j) {
                coeffs[j] = amounts_of(*vars[j])[q];
            }
            if (limits_.lo[q] > 0.0) {
                lp.rows.push_back({coeffs, detail::RowSense::Greater, limits_.lo[q] - t[q]});
            }
            if (std::isfinite(limits_.hi[q])) {
                lp.rows.push_back({coeffs, detail::RowSense::Less, limits_.hi[q] - t[q]});
            }
        }
        for (std::size_t i = 0; i < 3; ++i) {
            const std::size_t q = kTargeted[i];
            std::vector<double> coeffs(n, 0.0);
            for (std::size_t j = 0; j < nx; ++j) {
                coeffs[j] = amounts_of(*vars[j])[q];
            }
            coeffs[nx + 2 * i] = -1.0;
            coeffs[nx + 2 * i + 1] = 1.0;
            lp.rows.push_back({std::move(coeffs), detail::RowSense::Equal, limits_.target[i] - t[q]});
        }
        auto result = detail::solve_lp(lp);
        result.x.resize(nx);
        return result;
    }

    bool feasible_relaxation() const {
        return relaxation(0, Amounts{}).status == detail::LpStatus::Optimal;
    }

    void run() { visit(0, Amounts{}, 0); }

    bool found() const { return found_; }
    const std::vector<std::pair<const FoodItem *, int>> &best() const { return best_; }

private:
    int cap(const FoodItem &item) const { return std::min(item.max_servings, options_.max_servings); }

    double deviation(const Amounts &t) const {
        double d = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            d += relative(std::abs(t[kTargeted[i]] - limits_.target[i]), limits_.target[i]);
        }
        return d;
    }

    bool exact(const Amounts &t) const {
        for (std::size_t q = 0; q < kQ; ++q) {
            if (t[q] < limits_.lo[q] - kSlack || t[q] > limits_.hi[q] + kSlack) {
                return false;
            }
        }
        return true;
    }

    void visit(std::size_t g, const Amounts &t, std::size_t used) {
        if (nodes_ >= options_.node_budget || done_) {
            return;
        }
        const std::size_t reachable = used + (groups_.size() - g);
        if (found_ && reachable < best_groups_) {
            return;
        }
        if (g == groups_.size()) {
            if (!exact(t)) {
                return;
            }
            const double dev = deviation(t);
            if (!found_ || used > best_groups_ || dev < best_dev_ - kSlack) {
                found_ = true;
                best_groups_ = used;
                best_dev_ = dev;
                best_ = chosen_;
                done_ = used == groups_.size() && dev <= kSlack;
            }
            return;
        }
        ++nodes_;
        const auto lp = relaxation(g, t);
        if (lp.status != detail::LpStatus::Optimal) {
            return;
        }
        if (found_ && reachable == best_groups_ && lp.value >= best_dev_ - kSlack) {
            return;
        }

        // Children: items the relaxation uses first, servings nearest its
        // value first; leaving the group out comes last.
        const auto &members = groups_[g];
        std::vector<std::size_t> order(members.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return lp.x[a] > lp.x[b]; });
        for (std::size_t i : order) {
            const FoodItem &item = *members[i];
            const Amounts per = amounts_of(item);
            const int c = cap(item);
            const int start = std::clamp(static_cast<int>(std::lround(lp.x[i])), 1, c);
            for (int step = 0; step < 2 * c; ++step) {
                const int s = step % 2 == 0 ? start + step / 2 : start - (step + 1) / 2;
                if (s < 1 || s > c || (step > 0 && s == start)) {
                    continue;
                }
                Amounts next = t;
                bool over = false;
                for (std::size_t q = 0; q < kQ; ++q) {
                    next[q] += s * per[q];
                    over = over || next[q] > limits_.hi[q] + kSlack;
                }
                if (over) {
                    continue;
                }
                chosen_.emplace_back(&item, s);
                visit(g + 1, next, used + 1);
                chosen_.pop_back();
            }
        }
        visit(g + 1, t, used);
    }

    Limits limits_;
    const PlannerOptions &options_;
    std::vector<std::vector<const FoodItem *>> groups_;

    std::vector<std::pair<const FoodItem *, int>> chosen_;
    std::vector<std::pair<const FoodItem *, int>> best_;
    std::size_t best_groups_ = 0;
    double best_dev_ = std::numeric_limits<double>::infinity();
    bool found_ = false;
    bool done_ = false;
    std::size_t nodes_ = 0;
};

} // namespace

MealPlan plan_meals(const Suggestion &suggestion, std::span<const FoodItem> catalog,
                    const PatientProfile &profile, const PlannerOptions &options) {
    if (!(options.tolerance >= 0.0) || options.max_servings < 1 || options.node_budget < 1) {
        throw ConfigError("invalid planner options");
    }
    if (!(profile.calorie_goal > 0.0)) {
        throw ConfigError(fmt::format("profile '{}' has no calorie goal", profile.id));
    }
    const std::array<double, 3> targets{suggestion.net_carb, suggestion.fat, suggestion.protein};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(targets[i] >= 0.0) || !std::isfinite(targets[i])) {
            const auto name = quantity_name(kTargeted[i]);
            throw InfeasibleError(std::string{name}, fmt::format("{} target {} would need negative "
                                                                 "servings",
                                                                 name, targets[i]));
        }
    }
    const Bounds fiber = box_for(profile)[DecisionVariable::Fiber];

    Limits limits;
    limits.target = targets;
    for (std::size_t i = 0; i < 3; ++i) {
        limits.lo[kTargeted[i]] = (1.0 - options.tolerance) * targets[i];
        limits.hi[kTargeted[i]] = (1.0 + options.tolerance) * targets[i];
    }
    limits.lo[2] = fiber.lo;
    limits.hi[2] = fiber.hi;
    limits.lo[4] = 0.0;
    limits.hi[4] = profile.calorie_goal;

    Search search{limits, catalog, options};
    const Amounts supply = search.capacity();
    for (std::size_t q = 0; q < kQ; ++q) {
        if (supply[q] < limits.lo[q] - kSlack) {
            throw InfeasibleError(std::string{quantity_name(q)},
                                  fmt::format("the catalog cannot supply {} g of {}", limits.lo[q],
                                              quantity_name(q)));
        }
    }
    if (!search.feasible_relaxation()) {
        Search no_calories = search;
        no_calories.relax(4);
        if (no_calories.feasible_relaxation()) {
            throw InfeasibleError("calories",
                                  fmt::format("the macro targets cannot be met within the calorie "
                                              "goal of {} kcal",
                                              profile.calorie_goal));
        }
        no_calories.relax(2);
        if (no_calories.feasible_relaxation()) {
            throw InfeasibleError("fiber", fmt::format("the macro targets cannot be met with fiber "
                                                       "in [{}, {}] g",
                                                       fiber.lo, fiber.hi));
        }
        throw InfeasibleError("macros", "the catalog cannot meet the net carb, fat and protein "
                                        "targets together");
    }
    search.run();
    if (!search.found()) {
        throw InfeasibleError("servings", "no whole-serving combination of one item per food "
                                          "group meets the targets");
    }
    std::vector<MealItem> items;
    for (const auto &[item, servings] : search.best()) {
        items.push_back({*item, servings});
    }
    return MealPlan::from_items(std::move(items));
}

std::vector<std::string> verify_plan(const MealPlan &plan, const Suggestion &suggestion,
                                     const PatientProfile &profile, const PlannerOptions &options) {
    std::vector<std::string> failures;
    std::array<int, kFoodGroupCount> per_group{};
    double carb = 0.0;
    double fat = 0.0;
    double fiber = 0.0;
    double protein = 0.0;
    double calories = 0.0;
    for (const auto &mi : plan.items) {
        if (mi.servings < 1 || mi.servings > std::min(mi.item.max_servings, options.max_servings)) {
            failures.push_back(fmt::format("{}: {} servings outside [1, {}]", mi.item.name,
                                           mi.servings,
                                           std::min(mi.item.max_servings, options.max_servings)));
        }
        if (++per_group[static_cast<std::size_t>(mi.item.group)] > 1) {
            failures.push_back(fmt::format("more than one item from {}", to_string(mi.item.group)));
        }
        carb += mi.servings * mi.item.net_carb;
        fat += mi.servings * mi.item.fat;
        fiber += mi.servings * mi.item.fiber;
        protein += mi.servings * mi.item.protein;
        calories += mi.servings * mi.item.calories;
    }
    auto within = [&](const char *name, double total, double target) {
        if (std::abs(total - target) > options.tolerance * target + kSlack) {
            failures.push_back(fmt::format("{} {} not within {}% of {}", name, total,
                                           100.0 * options.tolerance, target));
        }
    };
    within("net_carb", carb, suggestion.net_carb);
    within("fat", fat, suggestion.fat);
    within("protein", protein, suggestion.protein);
    const Bounds box = box_for(profile)[DecisionVariable::Fiber];
    if (fiber < box.lo - kSlack || fiber > box.hi + kSlack) {
        failures.push_back(fmt::format("fiber {} outside [{}, {}]", fiber, box.lo, box.hi));
    }
    if (calories > profile.calorie_goal + kSlack) {
        failures.push_back(fmt::format("calories {} above goal {}", calories, profile.calorie_goal));
    }
    const auto &t = plan.totals;
    if (std::abs(t.net_carb - carb) > 1e-6 || std::abs(t.fat - fat) > 1e-6 ||
        std::abs(t.fiber - fiber) > 1e-6 || std::abs(t.protein - protein) > 1e-6 ||
        std::abs(t.calories - calories) > 1e-6) {
        failures.emplace_back("reported totals differ from the items");
    }
    return failures;
}

// ---------------------------------------------------------------------------
// Motivation
// ---------------------------------------------------------------------------

std::string_view to_string(MessageDomain d) {
    switch (d) {
    case MessageDomain::PositiveFeedback:
        return "positive-feedback";
    case MessageDomain::Carbohydrate:
        return "carbohydrate";
    case MessageDomain::Protein:
        return "protein";
    case MessageDomain::Fat:
        return "fat";
    case MessageDomain::Fiber:
        return "fiber";
    case MessageDomain::OverallNutrition:
        return "overall-nutrition";
    case MessageDomain::SelfMonitoring:
        return "self-monitoring";
    case MessageDomain::Exercise:
        return "exercise";
    }
    return "?";
}

MessageDomain message_domain_from(std::string_view s) {
    for (MessageDomain d : kAllDomains) {
        if (s == to_string(d)) {
            return d;
        }
    }
    throw ConfigError(fmt::format("unknown message domain '{}'", s));
}

MessageDomain domain_for(Check check) {
    switch (check) {
    case Check::NetCarbRange:
    case Check::CarbShare:
        return MessageDomain::Carbohydrate;
    case Check::KetoRatio:
    case Check::MinFat:
    case Check::MaxFat:
    case Check::BloodKetone:
        return MessageDomain::Fat;
    case Check::MinProtein:
        return MessageDomain::Protein;
    case Check::CalorieGoal:
        return MessageDomain::OverallNutrition;
    case Check::WeightSwing:
    case Check::GlucoseRange:
        return MessageDomain::SelfMonitoring;
    case Check::ActivityCalories:
    case Check::Steps:
        return MessageDomain::Exercise;
    }
    return MessageDomain::PositiveFeedback;
}

MessagePool MessagePool::from_json(const nlohmann::json &j) {
    MessagePool pool;
    try {
        for (const auto &e : j.at("messages")) {
            pool.messages.push_back({e.at("id").get<std::string>(),
                                     message_domain_from(e.at("domain").get<std::string>()),
                                     e.at("text").get<std::string>()});
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ConfigError(fmt::format("invalid message pool: {}", ex.what()));
    }
    return pool;
}

const MessagePool &MessagePool::shipped() {
    static const MessagePool pool = from_json(nlohmann::json::parse(embedded::message_pool_json()));
    return pool;
}

MotivationalMessage pick_motivation(std::span<const Violation> violations,
                                    const MessagePool &pool, const MessageHistory &history,
                                    Date today) {
    MessageDomain domain = MessageDomain::PositiveFeedback;
    const Violation *top = nullptr;
    for (const auto &v : violations) {
        if (top == nullptr || v.importance < top->importance) {
            top = &v;
        }
    }
    if (top != nullptr) {
        domain = domain_for(top->check);
    }

    const MotivationalMessage *fresh = nullptr;
    std::optional<Date> fresh_last;
    const MotivationalMessage *oldest = nullptr;
    std::optional<Date> oldest_last;
    // Never-sent sorts before any date.
    auto earlier = [](const std::optional<Date> &a, const std::optional<Date> &b) {
        return !a ? b.has_value() : (b && *a < *b);
    };
    for (const auto &m : pool.messages) {
        if (m.domain != domain) {
            continue;
        }
        std::optional<Date> last;
        for (const auto &e : history.sent) {
            if (e.message_id == m.id && (!last || *last < e.date)) {
                last = e.date;
            }
        }
        if (oldest == nullptr || earlier(last, oldest_last)) {
            oldest = &m;
            oldest_last = last;
        }
        const bool eligible = !last || today - *last >= kNoRepeatDays;
        if (eligible && (fresh == nullptr || earlier(last, fresh_last))) {
            fresh = &m;
            fresh_last = last;
        }
    }
    if (oldest == nullptr) {
        throw DomainError(fmt::format("message pool has no '{}' messages", to_string(domain)));
    }
    return fresh != nullptr ? *fresh : *oldest;
}

// ---------------------------------------------------------------------------
// Step goal and composition
// ---------------------------------------------------------------------------

double step_goal(std::span<const double> steps_history) {
    if (steps_history.empty()) {
        throw DomainError("step goal needs at least one day of steps");
    }
    const std::size_t n = std::min<std::size_t>(steps_history.size(), 10);
    std::vector<double> window(steps_history.end() - static_cast<std::ptrdiff_t>(n),
                               steps_history.end());
    // ceil(0.7 n)-th order statistic, 1-based.
    const std::size_t rank = (7 * n + 9) / 10;
    std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                     window.end());
    return window[rank - 1];
}

DailyMessage compose(const MealPlan &plan, const MotivationalMessage &motivation, double goal,
                     std::string plan_note) {
    DailyMessage msg;
    msg.plan = plan;
    msg.plan_note = std::move(plan_note);
    msg.motivation = motivation;
    msg.step_goal = goal;

    std::string text = "Meal plan\n";
    if (plan.empty()) {
        text += "No meal change: keep your current meals today.\n";
        if (!msg.plan_note.empty()) {
            text += fmt::format("({})\n", msg.plan_note);
        }
    } else {
        std::size_t width = std::string_view{"Food Group"}.size();
        for (const auto &mi : plan.items) {
            width = std::max(width, display_name(mi.item.group).size());
        }
        text += fmt::format("{:<{}}  {}\n", "Food Group", width, "Meal Plan Example");
        std::vector<const MealItem *> rows;
        for (const auto &mi : plan.items) {
            rows.push_back(&mi);
        }
        std::stable_sort(rows.begin(), rows.end(), [](const MealItem *a, const MealItem *b) {
            return a->item.group < b->item.group;
        });
        for (const MealItem *mi : rows) {
            text += fmt::format("{:<{}}  {} {} of ({}) {}\n", display_name(mi->item.group), width,
                                mi->servings, mi->servings == 1 ? "serving" : "servings",
                                mi->item.serving, mi->item.name);
        }
    }
    text += fmt::format("\nMotivation\n{}\n", motivation.text);
    text += fmt::format("\nStep goal\nAim for {:.0f} steps today.\n", goal);
    msg.text = std::move(text);
    return msg;
}

nlohmann::json to_json(const DailyMessage &message) {
    return {{"meal_plan", to_json(message.plan)},
            {"meal_plan_note", message.plan_note},
            {"motivation",
             {{"id", message.motivation.id},
              {"domain", to_string(message.motivation.domain)},
              {"text", message.motivation.text}}},
            {"step_goal", message.step_goal},
            {"text", message.text}};
}

DailyMessage daily_message_from_json(const nlohmann::json &j) {
    DailyMessage m;
    m.plan = meal_plan_from_json(j.at("meal_plan"));
    m.plan_note = j.value("meal_plan_note", "");
    const auto &mot = j.at("motivation");
    m.motivation.id = mot.at("id").get<std::string>();
    m.motivation.domain = message_domain_from(mot.at("domain").get<std::string>());
    m.motivation.text = mot.at("text").get<std::string>();
    m.step_goal = j.at("step_goal").get<double>();
    m.text = j.at("text").get<std::string>();
    return m;
}

} // namespace onlc

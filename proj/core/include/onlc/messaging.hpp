#pragma once

#include "onlc/controller.hpp"
#include "onlc/data.hpp"
#include "onlc/date.hpp"
#include "onlc/scoring.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace onlc {

// ---------------------------------------------------------------------------
// Food catalog and meal plans
// ---------------------------------------------------------------------------

enum class FoodGroup : std::uint8_t {
    LeanMeat,
    MediumFatMeat,
    HighFatMeat,
    Vegetables,
    Fruits,
    WholeMilk,
    NutsSeeds,
    SaturatedFats,
};

inline constexpr std::size_t kFoodGroupCount = 8;

//! Identifier such as "lean-meat".
std::string_view to_string(FoodGroup g);
//! Row label of the rendered meal plan.
std::string_view display_name(FoodGroup g);
FoodGroup food_group_from(std::string_view s);

struct FoodItem {
    std::string name;
    FoodGroup group = FoodGroup::LeanMeat;
    std::string serving;
    double net_carb = 0.0;
    double fat = 0.0;
    double fiber = 0.0;
    double protein = 0.0;
    double calories = 0.0;
    int max_servings = 8;

    //! Nonnegative macros, calories within 20% of the 4/9/4 reconstruction,
    //! 1 <= max_servings. Throws ConfigError.
    void validate() const;
    bool operator==(const FoodItem &) const = default;
};

std::vector<FoodItem> catalog_from_json(const nlohmann::json &j);
const std::vector<FoodItem> &shipped_catalog();

struct MealItem {
    FoodItem item;
    int servings = 0;
};

struct MacroTotals {
    double net_carb = 0.0;
    double fat = 0.0;
    double fiber = 0.0;
    double protein = 0.0;
    double calories = 0.0;
};

struct MealPlan {
    std::vector<MealItem> items;
    MacroTotals totals;

    bool empty() const { return items.empty(); }
    std::size_t distinct_groups() const;
    //! Recomputes totals from items.
    static MealPlan from_items(std::vector<MealItem> items);
};

nlohmann::json to_json(const MealPlan &plan);
MealPlan meal_plan_from_json(const nlohmann::json &j);

struct PlannerOptions {
    //! Relative window on net carb, fat and protein.
    double tolerance = 0.10;
    //! Serving cap applied on top of each item's own limit.
    int max_servings = 8;
    //! Relaxations solved before the search settles for the best plan so
    //! far. Feasibility and infeasibility verdicts do not depend on it unless
    //! the budget runs out first.
    std::size_t node_budget = 400;
};

//! Picks at most one item per food group with integer servings so that
//! net carb, fat and protein fall within the tolerance of the suggestion,
//! fiber lies in the patient's box and calories stay at or below the
//! calorie goal. Among feasible plans, the most food groups win, then the
//! smallest summed relative macro deviation. Branch and bound with linear
//! relaxation bounds; the deviation tie-break is the best found within the
//! node budget. Throws InfeasibleError naming the binding constraint.
MealPlan plan_meals(const Suggestion &suggestion, std::span<const FoodItem> catalog,
                    const PatientProfile &profile, const PlannerOptions &options = {});

//! Constraint failures of a plan, recomputed from the items alone. Empty
//! when the plan is valid.
std::vector<std::string> verify_plan(const MealPlan &plan, const Suggestion &suggestion,
                                     const PatientProfile &profile,
                                     const PlannerOptions &options = {});

// ---------------------------------------------------------------------------
// Motivational messages
// ---------------------------------------------------------------------------

enum class MessageDomain : std::uint8_t {
    PositiveFeedback,
    Carbohydrate,
    Protein,
    Fat,
    Fiber,
    OverallNutrition,
    SelfMonitoring,
    Exercise,
};

std::string_view to_string(MessageDomain d);
MessageDomain message_domain_from(std::string_view s);

//! Domain addressing a failed boundary row.
MessageDomain domain_for(Check check);

struct MotivationalMessage {
    std::string id;
    MessageDomain domain = MessageDomain::PositiveFeedback;
    std::string text;

    bool operator==(const MotivationalMessage &) const = default;
};

struct MessagePool {
    std::vector<MotivationalMessage> messages;

    static MessagePool from_json(const nlohmann::json &j);
    static const MessagePool &shipped();
};

//! Messages already sent to one patient.
struct MessageHistory {
    struct Entry {
        Date date;
        std::string message_id;
    };
    std::vector<Entry> sent;
};

inline constexpr int kNoRepeatDays = 14;

//! Domain of the most important violation (table order breaks ties), or
//! positive feedback when there is none. Within the domain, the least
//! recently used message not sent in the last 14 days; if every message was
//! sent in that window, the least recently used one.
MotivationalMessage pick_motivation(std::span<const Violation> violations,
                                    const MessagePool &pool, const MessageHistory &history,
                                    Date today);

// ---------------------------------------------------------------------------
// Step goal and composition
// ---------------------------------------------------------------------------

//! Nearest-rank 70th percentile of the last (up to) ten entries. Throws
//! DomainError for an empty history.
double step_goal(std::span<const double> steps_history);

struct DailyMessage {
    //! Empty plan: keep the current meals.
    MealPlan plan;
    //! Why no plan was produced, when the planner reported infeasibility.
    std::string plan_note;
    MotivationalMessage motivation;
    double step_goal = 0.0;
    std::string text;
};

DailyMessage compose(const MealPlan &plan, const MotivationalMessage &motivation, double goal,
                     std::string plan_note = {});

nlohmann::json to_json(const DailyMessage &message);
DailyMessage daily_message_from_json(const nlohmann::json &j);

} // namespace onlc

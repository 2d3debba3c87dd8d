#pragma once

#include "onlc/date.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace onlc {

// ---------------------------------------------------------------------------
// Daily self-monitoring record
// ---------------------------------------------------------------------------

//! Measured quantities of one day, in canonical CSV column order.
//! Units: macros in grams, energy in kcal, glucose mg/dL, ketone mmol/L,
//! weight lbs.
enum class Field : std::uint8_t {
    NetCarb,
    Fat,
    Fiber,
    Protein,
    IntakeCalories,
    ActivityCalories,
    Steps,
    Glucose,
    Ketone,
    Weight,
};

inline constexpr std::size_t kFieldCount = 10;

inline constexpr std::array<Field, kFieldCount> kAllFields{
    Field::NetCarb,          Field::Fat,   Field::Fiber,   Field::Protein, Field::IntakeCalories,
    Field::ActivityCalories, Field::Steps, Field::Glucose, Field::Ketone,  Field::Weight};

//! CSV header name of a field.
std::string_view field_name(Field field);
std::optional<Field> field_from_name(std::string_view name);

//! Glucose, weight and ketone must be strictly positive; the rest nonnegative.
bool requires_positive(Field field);

enum class Origin : std::uint8_t { Missing, Observed, Imputed };

struct DailyRecord {
    Date date;
    std::array<double, kFieldCount> values{};
    std::array<Origin, kFieldCount> origin{};

    DailyRecord() = default;
    explicit DailyRecord(Date day) : date{day} {}

    bool has(Field f) const { return origin[index(f)] != Origin::Missing; }
    bool observed(Field f) const { return origin[index(f)] == Origin::Observed; }
    Origin origin_of(Field f) const { return origin[index(f)]; }

    std::optional<double> value(Field f) const {
        if (!has(f)) {
            return std::nullopt;
        }
        return values[index(f)];
    }

    //! Value of a present field; throws DomainError when missing.
    double at(Field f) const;

    void set(Field f, double v, Origin o = Origin::Observed) {
        values[index(f)] = v;
        origin[index(f)] = o;
    }

    void clear(Field f) {
        values[index(f)] = 0.0;
        origin[index(f)] = Origin::Missing;
    }

    //! True when every field is observed or imputed.
    bool complete() const;

    bool operator==(const DailyRecord &) const = default;

    static constexpr std::size_t index(Field f) { return static_cast<std::size_t>(f); }
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

//! Parses the canonical CSV format: a header naming `date` and every field
//! (any column order), then one row per day. Empty cells are missing values.
//! The result is sorted by date. Throws ParseError (with line number) for
//! malformed cells and IngestionError for duplicate dates.
std::vector<DailyRecord> parse_records(std::istream &csv);
std::vector<DailyRecord> parse_records(std::string_view csv);

//! Writes records in canonical column order. Imputed values are written as
//! empty cells unless `include_imputed` is set, so a re-parse never turns an
//! imputed value into an observation.
void write_records(std::ostream &out, std::span<const DailyRecord> records,
                   bool include_imputed = false);
std::string format_records(std::span<const DailyRecord> records, bool include_imputed = false);

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

enum class ImputeMethod : std::uint8_t {
    //! Linear interpolation in calendar time between the nearest observed
    //! neighbours; boundaries take the nearest observation.
    Linear,
    //! Last observation carried forward; leading gaps take the first one.
    CarryForward,
};

struct ImputePolicy {
    ImputeMethod method = ImputeMethod::Linear;
    //! Fields that must end up present. A required field with no observation
    //! anywhere raises ImputationError; other all-missing fields stay missing.
    std::vector<Field> required{kAllFields.begin(), kAllFields.end()};
};

//! Fills missing values from observed ones only. Observed values are never
//! altered, so the operation is idempotent. Input must be date-sorted.
std::vector<DailyRecord> impute(std::span<const DailyRecord> records,
                                const ImputePolicy &policy = {});

// ---------------------------------------------------------------------------
// Closed-form domain formulas
// ---------------------------------------------------------------------------

//! Ketogenic ratio: fat / (net carb + protein), net carb = carb - fiber.
double keto_ratio(double net_carb, double fat, double protein);

//! Target weight, 80% of the weight at study start.
double weight_goal(double baseline_weight);

//! Energy of a macro split at 4/9/4 kcal per gram of carb/fat/protein.
double macro_calories(double net_carb, double fat, double protein);

// ---------------------------------------------------------------------------
// Patient profile
// ---------------------------------------------------------------------------

enum class DietGroup : std::uint8_t { Keto, LowFat };
enum class ConditionGroup : std::uint8_t { ObeseT2D, ObeseKidneyT2D };
enum class Arm : std::uint8_t { AI, NonAI };

std::string_view to_string(DietGroup g);
std::string_view to_string(ConditionGroup g);
std::string_view to_string(Arm a);
DietGroup diet_group_from(std::string_view s);
ConditionGroup condition_group_from(std::string_view s);
Arm arm_from(std::string_view s);

//! One of the four diet x condition fine-tuning groups.
struct GroupKey {
    DietGroup diet = DietGroup::Keto;
    ConditionGroup condition = ConditionGroup::ObeseT2D;

    //! Stable identifier, e.g. "keto.obese-t2d".
    std::string id() const;
    static GroupKey parse(std::string_view id);

    auto operator<=>(const GroupKey &) const = default;
};

inline constexpr std::array<GroupKey, 4> kAllGroups{
    GroupKey{DietGroup::Keto, ConditionGroup::ObeseT2D},
    GroupKey{DietGroup::Keto, ConditionGroup::ObeseKidneyT2D},
    GroupKey{DietGroup::LowFat, ConditionGroup::ObeseT2D},
    GroupKey{DietGroup::LowFat, ConditionGroup::ObeseKidneyT2D}};

//! Controller decision variables, shared by the constraint boxes and the
//! per-patient overrides.
enum class DecisionVariable : std::uint8_t {
    NetCarb,
    Fat,
    Fiber,
    Protein,
    ActivityCalories,
    Steps,
};

inline constexpr std::size_t kDecisionCount = 6;

std::string_view to_string(DecisionVariable v);
DecisionVariable decision_variable_from(std::string_view s);

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const { return x >= lo && x <= hi; }
    double width() const { return hi - lo; }
    bool operator==(const Bounds &) const = default;
};

struct PatientProfile {
    std::string id;
    DietGroup diet = DietGroup::Keto;
    ConditionGroup condition = ConditionGroup::ObeseT2D;
    Arm arm = Arm::NonAI;
    double baseline_weight = 0.0;
    double weight_goal = 0.0;
    double calorie_goal = 0.0;
    double min_protein = 0.0;
    //! Keto boundary "fat >= minimum fat".
    std::optional<double> min_fat;
    //! Low-fat boundary "fat < maximum fat".
    std::optional<double> max_fat;
    std::map<DecisionVariable, Bounds> constraint_overrides;

    GroupKey group() const { return {diet, condition}; }

    //! Builds a profile with weight_goal = weight_goal(baseline_weight).
    static PatientProfile make(std::string id, DietGroup diet, ConditionGroup condition, Arm arm,
                               double baseline_weight, double calorie_goal, double min_protein,
                               std::optional<double> min_fat = std::nullopt,
                               std::optional<double> max_fat = std::nullopt);

    bool operator==(const PatientProfile &) const = default;
};

// JSON forms used by the service event log and the HTTP API.
nlohmann::json to_json(const DailyRecord &record);
DailyRecord record_from_json(const nlohmann::json &j);
nlohmann::json to_json(const PatientProfile &profile);
PatientProfile profile_from_json(const nlohmann::json &j);

} // namespace onlc

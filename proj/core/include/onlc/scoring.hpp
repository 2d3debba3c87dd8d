#pragma once

#include "onlc/controller.hpp"
#include "onlc/data.hpp"
#include "onlc/twin.hpp"

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
// Nurse ratings
// ---------------------------------------------------------------------------

enum class Rating : std::uint8_t { Bad, Okay, Good, VeryGood };

inline constexpr std::array<Rating, 4> kAllRatings{Rating::Bad, Rating::Okay, Rating::Good,
                                                   Rating::VeryGood};

//! Bad 1000, Okay 500, Good 100, VeryGood 1.
double rating_to_score(Rating rating);
//! Rating whose score is nearest to `score`.
Rating score_to_rating(double score);

std::string_view to_string(Rating rating);
//! Accepts "bad", "okay", "good", "very-good" (case-insensitive, '_' or ' '
//! for '-'). Throws ValidationError otherwise.
Rating rating_from(std::string_view s);

//! Objective terms a nurse rating can target.
enum class Term : std::uint8_t { Glucose, Weight, Ketone };

std::string_view to_string(Term t);
Term term_from(std::string_view s);

//! Applies the rated score to each flagged term (all three when none are
//! flagged); unflagged terms keep their value in `base`.
Penalties penalties_from_rating(Rating rating, std::span<const Term> flagged,
                                const Penalties &base = {});

// ---------------------------------------------------------------------------
// Hard boundaries
// ---------------------------------------------------------------------------

enum class Importance : std::uint8_t { VeryImportant, ModeratelyImportant, LowImportance };

std::string_view to_string(Importance i);

//! Predicate kinds used by the boundary tables.
enum class Check : std::uint8_t {
    NetCarbRange,     // 20-50 g
    CarbShare,        // < 65% of calories from carb
    KetoRatio,        // >= 1.5
    WeightSwing,      // within 5 lbs of the reference weight
    GlucoseRange,     // 70-130 mg/dL
    MinProtein,       // >= profile minimum
    MinFat,           // >= profile minimum (keto)
    MaxFat,           // < profile maximum (low-fat)
    CalorieGoal,      // <= profile calorie goal
    BloodKetone,      // >= 0.5 mmol/L
    ActivityCalories, // < intake + 500 kcal
    Steps,            // >= 6000
};

std::string_view to_string(Check c);

struct BoundaryRow {
    Check check;
    std::string_view variable;
    Importance importance;
    std::string_view boundary;
};

struct BoundaryTable {
    DietGroup diet;
    std::vector<BoundaryRow> rows;
};

//! Keto: ten rows. Low-fat: eight rows. Row order is the printed order.
const BoundaryTable &boundary_table(DietGroup diet);

nlohmann::json to_json(const BoundaryTable &table);

//! Values under review. Absent values skip the rows that need them.
struct ScoringInput {
    std::array<std::optional<double>, kFieldCount> values{};
    //! Reference for the weight-swing rule, normally the last observed weight.
    std::optional<double> reference_weight;

    std::optional<double> get(Field f) const { return values[DailyRecord::index(f)]; }
    void put(Field f, double v) { values[DailyRecord::index(f)] = v; }

    static ScoringInput from_record(const DailyRecord &record,
                                    std::optional<double> reference_weight = std::nullopt);
    //! Suggested lifestyle plus its forecast, the two rows a nurse reviews.
    static ScoringInput from_suggestion(const Suggestion &suggestion,
                                        const PredictedOutcome &predicted,
                                        double reference_weight);
};

struct Violation {
    Check check;
    std::string variable;
    double observed = 0.0;
    std::string boundary;
    Importance importance = Importance::LowImportance;

    bool operator==(const Violation &) const = default;
};

nlohmann::json to_json(const Violation &v);
Violation violation_from_json(const nlohmann::json &j);

//! One entry per failed row of the profile's diet table, in table order.
//! Throws ConfigError when a relative rule needs a profile goal that is
//! not set (calorie goal, keto minimum fat, low-fat maximum fat).
std::vector<Violation> check_boundaries(const ScoringInput &input, const PatientProfile &profile);

// ---------------------------------------------------------------------------
// Penalty lookup
// ---------------------------------------------------------------------------

//! Value interval mapped to a penalty. An absent `hi` is unbounded.
struct PenaltyBand {
    double lo = 0.0;
    std::optional<double> hi;
    bool lo_closed = true;
    bool hi_closed = true;
    double penalty = 1.0;

    bool contains(double x) const;
    //! Representative point used by the linear fit. Unbounded bands use
    //! lo plus half the width of their neighbour.
    double midpoint(double neighbour_width) const;

    bool operator==(const PenaltyBand &) const = default;
};

//! Least-squares line over one side of the satisfied band, clamped to
//! [1, 1000].
struct LinearPenalty {
    double slope = 0.0;
    double intercept = 0.0;
    //! Largest |fit - band penalty| over the fitted midpoints.
    double residual = 0.0;

    double operator()(double x) const;
    bool operator==(const LinearPenalty &) const = default;
};

//! Throws FitError with fewer than two bands.
LinearPenalty fit_linear_penalty(std::span<const PenaltyBand> side);

//! Bands of one variable, sorted and non-overlapping. The band with the
//! smallest penalty is the satisfied region; bands below and above it are
//! the two sides. A side with at least two bands gets a linear fallback.
struct PenaltyEntry {
    std::vector<PenaltyBand> bands;
    std::optional<LinearPenalty> below;
    std::optional<LinearPenalty> above;

    std::size_t satisfied_index() const;
    //! Band penalty, else the side's linear fallback. Throws CoverageError
    //! naming `variable` when neither applies.
    double penalty(double x, std::string_view variable) const;
    void refit();
    //! Sorted, non-overlapping, penalties in [1, 1000]. Throws ConfigError.
    void validate(std::string_view variable) const;
};

//! Versioned snapshot; edits produce a new version.
struct PenaltyLookup {
    int version = 1;
    //! Keyed by predicted glucose (mg/dL).
    PenaltyEntry glucose;
    //! Keyed by |predicted weight - reference weight| (lbs).
    PenaltyEntry weight;
    //! Keyed by the suggestion's keto ratio.
    PenaltyEntry keto_ratio;

    void validate() const;
    static PenaltyLookup from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;
    //! The shipped table, loaded from the embedded fixture.
    static const PenaltyLookup &shipped();
};

//! Automated multipliers from the lookup. The ketone term is 1 for
//! patients not on the keto diet.
Penalties auto_penalties(const PredictedOutcome &predicted, double keto_ratio,
                         double reference_weight, const PatientProfile &profile,
                         const PenaltyLookup &lookup);

} // namespace onlc

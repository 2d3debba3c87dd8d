#include "onlc/scoring.hpp"
#include "onlc/embedded_data.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace onlc {

namespace {

constexpr double kMinPenalty = 1.0;
constexpr double kMaxPenalty = 1000.0;

std::string normalize_token(std::string_view s) {
    std::string out;
    for (char ch : s) {
        if (ch == '_' || ch == ' ') {
            ch = '-';
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Ratings
// ---------------------------------------------------------------------------

double rating_to_score(Rating rating) {
    switch (rating) {
    case Rating::Bad:
        return 1000.0;
    case Rating::Okay:
        return 500.0;
    case Rating::Good:
        return 100.0;
    case Rating::VeryGood:
        return 1.0;
    }
    throw DomainError("unknown rating");
}

Rating score_to_rating(double score) {
    Rating best = Rating::Bad;
    double best_distance = std::numeric_limits<double>::infinity();
    for (Rating r : kAllRatings) {
        const double d = std::abs(rating_to_score(r) - score);
        if (d < best_distance) {
            best = r;
            best_distance = d;
        }
    }
    return best;
}

std::string_view to_string(Rating rating) {
    switch (rating) {
    case Rating::Bad:
        return "bad";
    case Rating::Okay:
        return "okay";
    case Rating::Good:
        return "good";
    case Rating::VeryGood:
        return "very-good";
    }
    return "?";
}

Rating rating_from(std::string_view s) {
    const std::string key = normalize_token(s);
    for (Rating r : kAllRatings) {
        if (key == to_string(r)) {
            return r;
        }
    }
    if (key == "verygood") {
        return Rating::VeryGood;
    }
    throw ValidationError(fmt::format("unknown rating '{}'", s));
}

std::string_view to_string(Term t) {
    switch (t) {
    case Term::Glucose:
        return "glucose";
    case Term::Weight:
        return "weight";
    case Term::Ketone:
        return "ketone";
    }
    return "?";
}

Term term_from(std::string_view s) {
    const std::string key = normalize_token(s);
    for (Term t : {Term::Glucose, Term::Weight, Term::Ketone}) {
        if (key == to_string(t)) {
            return t;
        }
    }
    throw ValidationError(fmt::format("unknown objective term '{}'", s));
}

Penalties penalties_from_rating(Rating rating, std::span<const Term> flagged,
                                const Penalties &base) {
    const double score = rating_to_score(rating);
    if (flagged.empty()) {
        return {score, score, score};
    }
    Penalties p = base;
    for (Term t : flagged) {
        switch (t) {
        case Term::Glucose:
            p.glucose = score;
            break;
        case Term::Weight:
            p.weight = score;
            break;
        case Term::Ketone:
            p.ketone = score;
            break;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Boundaries
// ---------------------------------------------------------------------------

std::string_view to_string(Importance i) {
    switch (i) {
    case Importance::VeryImportant:
        return "very-important";
    case Importance::ModeratelyImportant:
        return "moderately-important";
    case Importance::LowImportance:
        return "low-importance";
    }
    return "?";
}

std::string_view to_string(Check c) {
    switch (c) {
    case Check::NetCarbRange:
        return "net-carb-range";
    case Check::CarbShare:
        return "carb-share";
    case Check::KetoRatio:
        return "keto-ratio";
    case Check::WeightSwing:
        return "weight-swing";
    case Check::GlucoseRange:
        return "glucose-range";
    case Check::MinProtein:
        return "min-protein";
    case Check::MinFat:
        return "min-fat";
    case Check::MaxFat:
        return "max-fat";
    case Check::CalorieGoal:
        return "calorie-goal";
    case Check::BloodKetone:
        return "blood-ketone";
    case Check::ActivityCalories:
        return "activity-calories";
    case Check::Steps:
        return "steps";
    }
    return "?";
}

namespace {

Check check_from(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(Check::Steps); ++i) {
        const auto c = static_cast<Check>(i);
        if (s == to_string(c)) {
            return c;
        }
    }
    throw ValidationError(fmt::format("unknown boundary check '{}'", s));
}

Importance importance_from(std::string_view s) {
    for (Importance i : {Importance::VeryImportant, Importance::ModeratelyImportant,
                         Importance::LowImportance}) {
        if (s == to_string(i)) {
            return i;
        }
    }
    throw ValidationError(fmt::format("unknown importance '{}'", s));
}

} // namespace

const BoundaryTable &boundary_table(DietGroup diet) {
    using I = Importance;
    static const BoundaryTable keto{
        DietGroup::Keto,
        {
            {Check::NetCarbRange, "net_carb", I::VeryImportant, "20-50"},
            {Check::KetoRatio, "keto_ratio", I::VeryImportant, "≥ 1.5"},
            {Check::WeightSwing, "weight", I::VeryImportant, "± 5 lbs."},
            {Check::GlucoseRange, "glucose", I::VeryImportant, "70-130"},
            {Check::MinProtein, "protein", I::ModeratelyImportant, "≥ minimum protein"},
            {Check::MinFat, "fat", I::ModeratelyImportant, "≥ minimum fat"},
            {Check::CalorieGoal, "intake_calories", I::ModeratelyImportant,
             "Lower than calorie goal"},
            {Check::BloodKetone, "ketone", I::ModeratelyImportant, "≥ 0.5"},
            {Check::ActivityCalories, "activity_calories", I::LowImportance,
             "< 500 kcal + intake calories"},
            {Check::Steps, "steps", I::LowImportance, "≥ 6000"},
        }};
    static const BoundaryTable low_fat{
        DietGroup::LowFat,
        {
            {Check::CarbShare, "net_carb", I::ModeratelyImportant, "< 65% calories from carb"},
            {Check::MinProtein, "protein", I::ModeratelyImportant, "≥ minimum protein"},
            {Check::MaxFat, "fat", I::VeryImportant, "< maximum fat"},
            {Check::CalorieGoal, "intake_calories", I::VeryImportant, "Lower than calorie goal"},
            {Check::ActivityCalories, "activity_calories", I::LowImportance,
             "< 500 kcal + intake calories"},
            {Check::Steps, "steps", I::LowImportance, "≥ 6000"},
            {Check::WeightSwing, "weight", I::VeryImportant, "± 5 lbs."},
            {Check::GlucoseRange, "glucose", I::VeryImportant, "70-130"},
        }};
    return diet == DietGroup::Keto ? keto : low_fat;
}

nlohmann::json to_json(const BoundaryTable &table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &row : table.rows) {
        rows.push_back({{"check", to_string(row.check)},
                        {"variable", row.variable},
                        {"importance", to_string(row.importance)},
                        {"boundary", row.boundary}});
    }
    return {{"diet", to_string(table.diet)}, {"rows", std::move(rows)}};
}

ScoringInput ScoringInput::from_record(const DailyRecord &record,
                                       std::optional<double> reference_weight) {
    ScoringInput in;
    for (Field f : kAllFields) {
        in.values[DailyRecord::index(f)] = record.value(f);
    }
    in.reference_weight = reference_weight;
    return in;
}

ScoringInput ScoringInput::from_suggestion(const Suggestion &suggestion,
                                           const PredictedOutcome &predicted,
                                           double reference_weight) {
    ScoringInput in;
    in.put(Field::NetCarb, suggestion.net_carb);
    in.put(Field::Fat, suggestion.fat);
    in.put(Field::Fiber, suggestion.fiber);
    in.put(Field::Protein, suggestion.protein);
    in.put(Field::IntakeCalories, suggestion.intake_calories);
    in.put(Field::ActivityCalories, suggestion.activity_calories);
    in.put(Field::Steps, suggestion.steps);
    in.put(Field::Glucose, predicted.glucose);
    in.put(Field::Weight, predicted.weight);
    in.put(Field::Ketone, predicted.ketone);
    in.reference_weight = reference_weight;
    return in;
}

nlohmann::json to_json(const Violation &v) {
    return {{"check", to_string(v.check)},
            {"variable", v.variable},
            {"observed", v.observed},
            {"boundary", v.boundary},
            {"importance", to_string(v.importance)}};
}

Violation violation_from_json(const nlohmann::json &j) {
    try {
        return {check_from(j.at("check").get<std::string>()), j.at("variable").get<std::string>(),
                j.at("observed").get<double>(), j.at("boundary").get<std::string>(),
                importance_from(j.at("importance").get<std::string>())};
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(fmt::format("invalid violation: {}", e.what()));
    }
}

std::vector<Violation> check_boundaries(const ScoringInput &in, const PatientProfile &profile) {
    const auto carb = in.get(Field::NetCarb);
    const auto fat = in.get(Field::Fat);
    const auto protein = in.get(Field::Protein);
    std::optional<double> intake = in.get(Field::IntakeCalories);
    if (!intake && carb && fat && protein) {
        intake = macro_calories(*carb, *fat, *protein);
    }

    std::vector<Violation> out;
    for (const auto &row : boundary_table(profile.diet).rows) {
        std::optional<double> observed;
        std::string boundary{row.boundary};
        bool ok = true;
        switch (row.check) {
        case Check::NetCarbRange:
            if ((observed = carb)) {
                ok = *observed >= 20.0 && *observed <= 50.0;
            }
            break;
        case Check::CarbShare:
            if (carb && intake) {
                observed = *intake > 0.0 ? 4.0 * *carb / *intake : (*carb > 0.0 ? 1.0 : 0.0);
                ok = *observed < 0.65;
            }
            break;
        case Check::KetoRatio:
            if (carb && fat && protein && *carb + *protein > 0.0) {
                observed = keto_ratio(*carb, *fat, *protein);
                ok = *observed >= 1.5;
            }
            break;
        case Check::WeightSwing:
            if (const auto w = in.get(Field::Weight); w && in.reference_weight) {
                observed = w;
                ok = std::abs(*w - *in.reference_weight) <= 5.0;
                boundary = fmt::format("{} ({} ± 5)", row.boundary, *in.reference_weight);
            }
            break;
        case Check::GlucoseRange:
            if ((observed = in.get(Field::Glucose))) {
                ok = *observed >= 70.0 && *observed <= 130.0;
            }
            break;
        case Check::MinProtein:
            if ((observed = protein)) {
                ok = *observed >= profile.min_protein;
                boundary = fmt::format("≥ {} g", profile.min_protein);
            }
            break;
        case Check::MinFat:
            if (!profile.min_fat) {
                throw ConfigError(
                    fmt::format("profile '{}' needs min_fat for the keto fat rule", profile.id));
            }
            if ((observed = fat)) {
                ok = *observed >= *profile.min_fat;
                boundary = fmt::format("≥ {} g", *profile.min_fat);
            }
            break;
        case Check::MaxFat:
            if (!profile.max_fat) {
                throw ConfigError(
                    fmt::format("profile '{}' needs max_fat for the low-fat fat rule", profile.id));
            }
            if ((observed = fat)) {
                ok = *observed < *profile.max_fat;
                boundary = fmt::format("< {} g", *profile.max_fat);
            }
            break;
        case Check::CalorieGoal:
            if (!(profile.calorie_goal > 0.0)) {
                throw ConfigError(fmt::format("profile '{}' has no calorie goal", profile.id));
            }
            if ((observed = intake)) {
                ok = *observed <= profile.calorie_goal;
                boundary = fmt::format("≤ {} kcal", profile.calorie_goal);
            }
            break;
        case Check::BloodKetone:
            if ((observed = in.get(Field::Ketone))) {
                ok = *observed >= 0.5;
            }
            break;
        case Check::ActivityCalories:
            if ((observed = in.get(Field::ActivityCalories)) && intake) {
                ok = *observed < *intake + 500.0;
                boundary = fmt::format("< {} kcal", *intake + 500.0);
            } else {
                observed.reset();
            }
            break;
        case Check::Steps:
            if ((observed = in.get(Field::Steps))) {
                ok = *observed >= 6000.0;
            }
            break;
        }
        if (observed && !ok) {
            out.push_back({row.check, std::string{row.variable}, *observed, boundary,
                           row.importance});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Penalty lookup
// ---------------------------------------------------------------------------

bool PenaltyBand::contains(double x) const {
    const bool above_lo = lo_closed ? x >= lo : x > lo;
    const bool below_hi = !hi || (hi_closed ? x <= *hi : x < *hi);
    return above_lo && below_hi;
}

double PenaltyBand::midpoint(double neighbour_width) const {
    return hi ? 0.5 * (lo + *hi) : lo + 0.5 * neighbour_width;
}

double LinearPenalty::operator()(double x) const {
    return std::clamp(slope * x + intercept, kMinPenalty, kMaxPenalty);
}

LinearPenalty fit_linear_penalty(std::span<const PenaltyBand> side) {
    if (side.size() < 2) {
        throw FitError("a linear penalty needs at least two bands");
    }
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < side.size(); ++i) {
        double neighbour = 0.0;
        if (!side[i].hi) {
            const auto &prev = side[i == 0 ? 1 : i - 1];
            neighbour = prev.hi ? *prev.hi - prev.lo : 0.0;
        }
        xs.push_back(side[i].midpoint(neighbour));
        ys.push_back(side[i].penalty);
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i] / n;
        my += ys[i] / n;
    }
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (!(sxx > 0.0)) {
        throw FitError("band midpoints coincide");
    }
    LinearPenalty fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        fit.residual = std::max(fit.residual, std::abs(fit(xs[i]) - ys[i]));
    }
    return fit;
}

std::size_t PenaltyEntry::satisfied_index() const {
    if (bands.empty()) {
        throw ConfigError("penalty entry has no bands");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < bands.size(); ++i) {
        if (bands[i].penalty < bands[best].penalty) {
            best = i;
        }
    }
    return best;
}

double PenaltyEntry::penalty(double x, std::string_view variable) const {
    if (std::isfinite(x)) {
        for (const auto &band : bands) {
            if (band.contains(x)) {
                return band.penalty;
            }
        }
        const auto &ok = bands[satisfied_index()];
        const auto &fallback = x < ok.lo ? below : above;
        if (fallback) {
            return (*fallback)(x);
        }
    }
    throw CoverageError(std::string{variable},
                        fmt::format("{} value {} is outside the penalty lookup", variable, x));
}

void PenaltyEntry::refit() {
    const std::size_t s = satisfied_index();
    const std::span<const PenaltyBand> all{bands};
    below.reset();
    above.reset();
    if (s >= 2) {
        below = fit_linear_penalty(all.subspan(0, s));
    }
    if (bands.size() - s - 1 >= 2) {
        above = fit_linear_penalty(all.subspan(s + 1));
    }
}

void PenaltyEntry::validate(std::string_view variable) const {
    if (bands.empty()) {
        throw ConfigError(fmt::format("penalty lookup for {} has no bands", variable));
    }
    for (std::size_t i = 0; i < bands.size(); ++i) {
        const auto &b = bands[i];
        if (!(b.penalty >= kMinPenalty && b.penalty <= kMaxPenalty)) {
            throw ConfigError(fmt::format("{} band penalty {} outside [1, 1000]", variable,
                                          b.penalty));
        }
        if (!std::isfinite(b.lo) || (b.hi && !(*b.hi >= b.lo))) {
            throw ConfigError(fmt::format("{} band {} has invalid limits", variable, i));
        }
        if (i + 1 < bands.size()) {
            const auto &next = bands[i + 1];
            if (!b.hi) {
                throw ConfigError(fmt::format("{} unbounded band is not last", variable));
            }
            const bool overlap = next.lo < *b.hi || (next.lo == *b.hi && b.hi_closed && next.lo_closed);
            if (overlap) {
                throw ConfigError(fmt::format("{} bands {} and {} overlap", variable, i, i + 1));
            }
        }
    }
}

namespace {

PenaltyEntry entry_from_json(const nlohmann::json &j, std::string_view variable) {
    PenaltyEntry e;
    try {
        for (const auto &b : j.at("bands")) {
            PenaltyBand band;
            band.lo = b.at("lo").get<double>();
            if (b.contains("hi") && !b["hi"].is_null()) {
                band.hi = b["hi"].get<double>();
            }
            band.lo_closed = b.value("lo_closed", true);
            band.hi_closed = b.value("hi_closed", true);
            band.penalty = b.at("penalty").get<double>();
            e.bands.push_back(band);
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ConfigError(fmt::format("invalid penalty lookup for {}: {}", variable, ex.what()));
    }
    e.validate(variable);
    e.refit();
    return e;
}

nlohmann::json entry_to_json(const PenaltyEntry &e) {
    nlohmann::json bands = nlohmann::json::array();
    for (const auto &b : e.bands) {
        bands.push_back({{"lo", b.lo},
                         {"hi", b.hi ? nlohmann::json(*b.hi) : nlohmann::json(nullptr)},
                         {"lo_closed", b.lo_closed},
                         {"hi_closed", b.hi_closed},
                         {"penalty", b.penalty}});
    }
    nlohmann::json out{{"bands", std::move(bands)}};
    auto fit_json = [](const std::optional<LinearPenalty> &fit) {
        if (!fit) {
            return nlohmann::json(nullptr);
        }
        return nlohmann::json{
            {"slope", fit->slope}, {"intercept", fit->intercept}, {"residual", fit->residual}};
    };
    out["linear_below"] = fit_json(e.below);
    out["linear_above"] = fit_json(e.above);
    return out;
}

} // namespace

void PenaltyLookup::validate() const {
    glucose.validate("glucose");
    weight.validate("weight");
    keto_ratio.validate("keto_ratio");
}

PenaltyLookup PenaltyLookup::from_json(const nlohmann::json &j) {
    if (!j.is_object()) {
        throw ConfigError("penalty lookup must be a JSON object");
    }
    PenaltyLookup lookup;
    lookup.version = j.value("version", 1);
    for (const char *key : {"glucose", "weight", "keto_ratio"}) {
        if (!j.contains(key)) {
            throw ConfigError(fmt::format("penalty lookup lacks '{}'", key));
        }
    }
    lookup.glucose = entry_from_json(j["glucose"], "glucose");
    lookup.weight = entry_from_json(j["weight"], "weight");
    lookup.keto_ratio = entry_from_json(j["keto_ratio"], "keto_ratio");
    return lookup;
}

nlohmann::json PenaltyLookup::to_json() const {
    return {{"version", version},
            {"glucose", entry_to_json(glucose)},
            {"weight", entry_to_json(weight)},
            {"keto_ratio", entry_to_json(keto_ratio)}};
}

const PenaltyLookup &PenaltyLookup::shipped() {
    static const PenaltyLookup lookup =
        from_json(nlohmann::json::parse(embedded::penalty_lookup_json()));
    return lookup;
}

Penalties auto_penalties(const PredictedOutcome &predicted, double keto_ratio,
                         double reference_weight, const PatientProfile &profile,
                         const PenaltyLookup &lookup) {
    Penalties p;
    p.glucose = lookup.glucose.penalty(predicted.glucose, "glucose");
    p.weight = lookup.weight.penalty(std::abs(predicted.weight - reference_weight), "weight");
    p.ketone = profile.diet == DietGroup::Keto
                   ? lookup.keto_ratio.penalty(keto_ratio, "keto_ratio")
                   : 1.0;
    return p;
}

} // namespace onlc

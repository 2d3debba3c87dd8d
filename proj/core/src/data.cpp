#include "onlc/data.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace onlc {

namespace {

constexpr std::array<std::string_view, kFieldCount> kFieldNames{
    "net_carb",          "fat",   "fiber",   "protein", "intake_calories",
    "activity_calories", "steps", "glucose", "ketone",  "weight"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

double parse_number(std::string_view cell, std::size_t line, std::string_view column) {
    double value = 0.0;
    const auto *first = cell.data();
    const auto *last = first + cell.size();
    if (!cell.empty() && cell.front() == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        throw ParseError(line, fmt::format("malformed number '{}' in column {}", cell, column));
    }
    return value;
}

void sort_and_check_unique(std::vector<DailyRecord> &records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const DailyRecord &a, const DailyRecord &b) { return a.date < b.date; });
    const auto dup = std::adjacent_find(
        records.begin(), records.end(),
        [](const DailyRecord &a, const DailyRecord &b) { return a.date == b.date; });
    if (dup != records.end()) {
        throw IngestionError(fmt::format("duplicate date {}", dup->date.iso()));
    }
}

} // namespace

std::string_view field_name(Field field) { return kFieldNames[DailyRecord::index(field)]; }

std::optional<Field> field_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kFieldCount; ++i) {
        if (kFieldNames[i] == name) {
            return kAllFields[i];
        }
    }
    return std::nullopt;
}

bool requires_positive(Field field) {
    return field == Field::Glucose || field == Field::Weight || field == Field::Ketone;
}

double DailyRecord::at(Field f) const {
    if (!has(f)) {
        throw DomainError(
            fmt::format("record {} has no value for {}", date.iso(), field_name(f)));
    }
    return values[index(f)];
}

bool DailyRecord::complete() const {
    return std::none_of(origin.begin(), origin.end(),
                        [](Origin o) { return o == Origin::Missing; });
}

std::vector<DailyRecord> parse_records(std::istream &csv) {
    std::vector<DailyRecord> records;
    std::string line;
    std::size_t line_no = 0;

    // Header.
    std::optional<std::size_t> date_col;
    std::array<std::optional<std::size_t>, kFieldCount> field_col{};
    std::size_t column_count = 0;
    while (std::getline(csv, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        std::string_view header = line;
        if (header.starts_with("\xEF\xBB\xBF")) {
            header.remove_prefix(3);
        }
        const auto cells = split_csv(header);
        column_count = cells.size();
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c] == "date") {
                date_col = c;
            } else if (auto f = field_from_name(cells[c])) {
                if (field_col[DailyRecord::index(*f)]) {
                    throw ParseError(line_no, fmt::format("duplicate column {}", cells[c]));
                }
                field_col[DailyRecord::index(*f)] = c;
            } else {
                throw ParseError(line_no, fmt::format("unknown column '{}'", cells[c]));
            }
        }
        if (!date_col) {
            throw ParseError(line_no, "header has no date column");
        }
        for (std::size_t i = 0; i < kFieldCount; ++i) {
            if (!field_col[i]) {
                throw ParseError(line_no, fmt::format("header is missing column {}",
                                                      kFieldNames[i]));
            }
        }
        break;
    }
    if (!date_col) {
        return records;
    }

    while (std::getline(csv, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != column_count) {
            throw ParseError(line_no, fmt::format("expected {} cells, found {}", column_count,
                                                  cells.size()));
        }
        DailyRecord rec;
        try {
            rec.date = Date::parse(cells[*date_col]);
        } catch (const DomainError &e) {
            throw ParseError(line_no, e.what());
        }
        for (std::size_t i = 0; i < kFieldCount; ++i) {
            const auto cell = cells[*field_col[i]];
            if (cell.empty()) {
                continue;
            }
            const Field f = kAllFields[i];
            const double v = parse_number(cell, line_no, kFieldNames[i]);
            if (v < 0.0 || (requires_positive(f) && v == 0.0)) {
                throw ParseError(line_no, fmt::format("{} out of range: {}", kFieldNames[i], v));
            }
            rec.set(f, v);
        }
        records.push_back(rec);
    }
    sort_and_check_unique(records);
    return records;
}

std::vector<DailyRecord> parse_records(std::string_view csv) {
    std::istringstream in{std::string{csv}};
    return parse_records(in);
}

void write_records(std::ostream &out, std::span<const DailyRecord> records,
                   bool include_imputed) {
    out << "date";
    for (auto name : kFieldNames) {
        out << ',' << name;
    }
    out << '\n';
    for (const auto &rec : records) {
        out << rec.date.iso();
        for (auto f : kAllFields) {
            out << ',';
            const auto o = rec.origin_of(f);
            if (o == Origin::Observed || (o == Origin::Imputed && include_imputed)) {
                out << fmt::format("{}", rec.values[DailyRecord::index(f)]);
            }
        }
        out << '\n';
    }
}

std::string format_records(std::span<const DailyRecord> records, bool include_imputed) {
    std::ostringstream out;
    write_records(out, records, include_imputed);
    return out.str();
}

std::vector<DailyRecord> impute(std::span<const DailyRecord> records,
                                const ImputePolicy &policy) {
    std::vector<DailyRecord> out(records.begin(), records.end());
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (!(out[i - 1].date < out[i].date)) {
            throw DomainError("impute requires strictly date-sorted records");
        }
    }

    for (auto f : kAllFields) {
        const auto k = DailyRecord::index(f);
        std::vector<std::size_t> anchors;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].origin[k] == Origin::Observed) {
                anchors.push_back(i);
            }
        }
        if (anchors.empty()) {
            const bool required =
                std::find(policy.required.begin(), policy.required.end(), f) !=
                policy.required.end();
            if (required && !out.empty()) {
                throw ImputationError(
                    fmt::format("no observed value for required field {}", field_name(f)));
            }
            continue;
        }

        std::size_t next = 0; // index into anchors of the first anchor >= i
        for (std::size_t i = 0; i < out.size(); ++i) {
            while (next < anchors.size() && anchors[next] < i) {
                ++next;
            }
            if (out[i].origin[k] == Origin::Observed) {
                continue;
            }
            double v = 0.0;
            if (next == 0) {
                v = out[anchors.front()].values[k];
            } else if (next == anchors.size()) {
                v = out[anchors.back()].values[k];
            } else {
                const auto &left = out[anchors[next - 1]];
                const auto &right = out[anchors[next]];
                if (policy.method == ImputeMethod::CarryForward) {
                    v = left.values[k];
                } else {
                    const double span = static_cast<double>(right.date - left.date);
                    const double t = static_cast<double>(out[i].date - left.date) / span;
                    v = left.values[k] + t * (right.values[k] - left.values[k]);
                }
            }
            out[i].set(f, v, Origin::Imputed);
        }
    }
    return out;
}

double keto_ratio(double net_carb, double fat, double protein) {
    if (net_carb < 0.0 || fat < 0.0 || protein < 0.0) {
        throw DomainError("keto_ratio: macros must be nonnegative");
    }
    const double denom = net_carb + protein;
    if (!(denom > 0.0)) {
        throw DomainError("keto_ratio: net carb + protein must be positive");
    }
    return fat / denom;
}

double weight_goal(double baseline_weight) {
    if (!(baseline_weight > 0.0) || !std::isfinite(baseline_weight)) {
        throw DomainError("weight_goal: baseline weight must be positive");
    }
    return 0.8 * baseline_weight;
}

double macro_calories(double net_carb, double fat, double protein) {
    return 4.0 * net_carb + 9.0 * fat + 4.0 * protein;
}

// ---------------------------------------------------------------------------

std::string_view to_string(DietGroup g) { return g == DietGroup::Keto ? "keto" : "low-fat"; }

std::string_view to_string(ConditionGroup g) {
    return g == ConditionGroup::ObeseT2D ? "obese-t2d" : "obese-kidney-t2d";
}

std::string_view to_string(Arm a) { return a == Arm::AI ? "ai" : "non-ai"; }

DietGroup diet_group_from(std::string_view s) {
    if (s == "keto") {
        return DietGroup::Keto;
    }
    if (s == "low-fat") {
        return DietGroup::LowFat;
    }
    throw ValidationError(fmt::format("unknown diet group '{}'", s));
}

ConditionGroup condition_group_from(std::string_view s) {
    if (s == "obese-t2d") {
        return ConditionGroup::ObeseT2D;
    }
    if (s == "obese-kidney-t2d") {
        return ConditionGroup::ObeseKidneyT2D;
    }
    throw ValidationError(fmt::format("unknown condition group '{}'", s));
}

Arm arm_from(std::string_view s) {
    if (s == "ai") {
        return Arm::AI;
    }
    if (s == "non-ai") {
        return Arm::NonAI;
    }
    throw ValidationError(fmt::format("unknown arm '{}'", s));
}

std::string GroupKey::id() const { return fmt::format("{}.{}", to_string(diet), to_string(condition)); }

GroupKey GroupKey::parse(std::string_view id) {
    const auto dot = id.find('.');
    if (dot == std::string_view::npos) {
        throw ValidationError(fmt::format("malformed group id '{}'", id));
    }
    return {diet_group_from(id.substr(0, dot)), condition_group_from(id.substr(dot + 1))};
}

namespace {
constexpr std::array<std::string_view, kDecisionCount> kDecisionNames{
    "net_carb", "fat", "fiber", "protein", "activity_calories", "steps"};
}

std::string_view to_string(DecisionVariable v) {
    return kDecisionNames[static_cast<std::size_t>(v)];
}

DecisionVariable decision_variable_from(std::string_view s) {
    for (std::size_t i = 0; i < kDecisionCount; ++i) {
        if (kDecisionNames[i] == s) {
            return static_cast<DecisionVariable>(i);
        }
    }
    throw ValidationError(fmt::format("unknown decision variable '{}'", s));
}

PatientProfile PatientProfile::make(std::string id, DietGroup diet, ConditionGroup condition,
                                    Arm arm, double baseline_weight, double calorie_goal,
                                    double min_protein, std::optional<double> min_fat,
                                    std::optional<double> max_fat) {
    PatientProfile p;
    p.id = std::move(id);
    p.diet = diet;
    p.condition = condition;
    p.arm = arm;
    p.baseline_weight = baseline_weight;
    p.weight_goal = onlc::weight_goal(baseline_weight);
    p.calorie_goal = calorie_goal;
    p.min_protein = min_protein;
    p.min_fat = min_fat;
    p.max_fat = max_fat;
    return p;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const DailyRecord &record) {
    nlohmann::json j;
    j["date"] = record.date.iso();
    auto imputed = nlohmann::json::array();
    for (auto f : kAllFields) {
        if (!record.has(f)) {
            continue;
        }
        j[std::string{field_name(f)}] = record.values[DailyRecord::index(f)];
        if (record.origin_of(f) == Origin::Imputed) {
            imputed.push_back(field_name(f));
        }
    }
    if (!imputed.empty()) {
        j["imputed"] = imputed;
    }
    return j;
}

DailyRecord record_from_json(const nlohmann::json &j) {
    if (!j.is_object() || !j.contains("date") || !j["date"].is_string()) {
        throw ValidationError("record requires a string 'date'");
    }
    DailyRecord rec;
    try {
        rec.date = Date::parse(j["date"].get<std::string>());
    } catch (const DomainError &e) {
        throw ValidationError(e.what());
    }
    for (auto f : kAllFields) {
        const std::string name{field_name(f)};
        if (!j.contains(name) || j[name].is_null()) {
            continue;
        }
        if (!j[name].is_number()) {
            throw ValidationError(fmt::format("field {} must be a number", name));
        }
        const double v = j[name].get<double>();
        if (!std::isfinite(v) || v < 0.0 || (requires_positive(f) && v == 0.0)) {
            throw ValidationError(fmt::format("field {} out of range: {}", name, v));
        }
        rec.set(f, v);
    }
    if (j.contains("imputed")) {
        for (const auto &name : j["imputed"]) {
            const auto f = field_from_name(name.get<std::string>());
            if (!f || !rec.has(*f)) {
                throw ValidationError("imputed flag names an absent field");
            }
            rec.origin[DailyRecord::index(*f)] = Origin::Imputed;
        }
    }
    return rec;
}

nlohmann::json to_json(const PatientProfile &p) {
    nlohmann::json j{{"id", p.id},
                     {"diet_group", to_string(p.diet)},
                     {"condition_group", to_string(p.condition)},
                     {"arm", to_string(p.arm)},
                     {"baseline_weight", p.baseline_weight},
                     {"weight_goal", p.weight_goal},
                     {"calorie_goal", p.calorie_goal},
                     {"min_protein", p.min_protein}};
    if (p.min_fat) {
        j["min_fat"] = *p.min_fat;
    }
    if (p.max_fat) {
        j["max_fat"] = *p.max_fat;
    }
    if (!p.constraint_overrides.empty()) {
        auto o = nlohmann::json::object();
        for (const auto &[var, b] : p.constraint_overrides) {
            o[std::string{to_string(var)}] = {b.lo, b.hi};
        }
        j["constraint_overrides"] = o;
    }
    return j;
}

PatientProfile profile_from_json(const nlohmann::json &j) {
    try {
        PatientProfile p;
        p.id = j.at("id").get<std::string>();
        if (p.id.empty()) {
            throw ValidationError("profile id must be nonempty");
        }
        p.diet = diet_group_from(j.at("diet_group").get<std::string>());
        p.condition = condition_group_from(j.at("condition_group").get<std::string>());
        p.arm = arm_from(j.at("arm").get<std::string>());
        p.baseline_weight = j.at("baseline_weight").get<double>();
        if (!(p.baseline_weight > 0.0)) {
            throw ValidationError("baseline_weight must be positive");
        }
        p.weight_goal = j.contains("weight_goal") ? j["weight_goal"].get<double>()
                                                  : weight_goal(p.baseline_weight);
        p.calorie_goal = j.at("calorie_goal").get<double>();
        p.min_protein = j.value("min_protein", 0.0);
        if (j.contains("min_fat")) {
            p.min_fat = j["min_fat"].get<double>();
        }
        if (j.contains("max_fat")) {
            p.max_fat = j["max_fat"].get<double>();
        }
        if (j.contains("constraint_overrides")) {
            for (const auto &[name, b] : j["constraint_overrides"].items()) {
                p.constraint_overrides[decision_variable_from(name)] =
                    Bounds{b.at(0).get<double>(), b.at(1).get<double>()};
            }
        }
        return p;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(fmt::format("invalid profile: {}", e.what()));
    }
}

} // namespace onlc

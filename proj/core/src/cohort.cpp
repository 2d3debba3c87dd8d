#include "onlc/cohort.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace onlc {

using nlohmann::json;

Suggestion Habit::as_suggestion() const {
    return Suggestion::make(net_carb, fat, fiber, protein, activity_calories, steps);
}

double Physiology::steady_glucose(const Suggestion &b) const {
    return (glucose_intercept + carb_sensitivity * b.net_carb - step_effect * b.steps / 1000.0 -
            fiber_effect * b.fiber) /
           (1.0 - glucose_persistence);
}

namespace {

constexpr double kGlucoseMin = 40.0;
constexpr double kGlucoseMax = 600.0;
constexpr double kKetoneMin = 0.05;
constexpr double kKetoneMax = 8.0;
constexpr double kWeightMin = 80.0;

double ketone_target(const Physiology &ph, double ratio) {
    const double r2 = ratio * ratio;
    return ph.ketone_gain * (0.1 + 3.2 * r2 / (r2 + 1.0));
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64 &rng, double lo, double hi) {
    return std::uniform_real_distribution<double>{lo, hi}(rng);
}

double gauss(std::mt19937_64 &rng) { return std::normal_distribution<double>{0.0, 1.0}(rng); }

double round_to(double x, double step) { return std::round(x / step) * step; }

} // namespace

json CohortConfig::to_json() const {
    return {{"adherence", adherence},
            {"habit_noise", habit_noise},
            {"missing_ketone_rate", missing_ketone_rate},
            {"missing_glucose_rate", missing_glucose_rate},
            {"glucose_noise", glucose_noise},
            {"weight_noise", weight_noise},
            {"ketone_noise", ketone_noise}};
}

CohortConfig CohortConfig::from_json(const json &j) {
    CohortConfig c;
    c.adherence = j.value("adherence", c.adherence);
    c.habit_noise = j.value("habit_noise", c.habit_noise);
    c.missing_ketone_rate = j.value("missing_ketone_rate", c.missing_ketone_rate);
    c.missing_glucose_rate = j.value("missing_glucose_rate", c.missing_glucose_rate);
    c.glucose_noise = j.value("glucose_noise", c.glucose_noise);
    c.weight_noise = j.value("weight_noise", c.weight_noise);
    c.ketone_noise = j.value("ketone_noise", c.ketone_noise);
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(c.adherence) || !in01(c.missing_ketone_rate) || !in01(c.missing_glucose_rate) ||
        c.habit_noise < 0.0 || c.glucose_noise < 0.0 || c.weight_noise < 0.0 ||
        c.ketone_noise < 0.0) {
        throw ConfigError("cohort settings out of range");
    }
    return c;
}

std::vector<SyntheticPatient> generate_cohort(std::size_t n, std::uint64_t seed,
                                              const CohortConfig &config) {
    if (n < 2 || n % 2 != 0) {
        throw ConfigError(fmt::format("cohort size must be even and at least 2, got {}", n));
    }
    std::vector<SyntheticPatient> cohort;
    cohort.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SyntheticPatient p;
        p.seed = splitmix(seed ^ splitmix(i + 1));
        std::mt19937_64 rng{p.seed};

        // Arms alternate and groups cycle per pair, so every group has
        // patients in both arms.
        const GroupKey group = kAllGroups[(i / 2) % kAllGroups.size()];
        const Arm arm = i % 2 == 0 ? Arm::AI : Arm::NonAI;
        const bool keto = group.diet == DietGroup::Keto;
        const bool kidney = group.condition == ConditionGroup::ObeseKidneyT2D;

        Habit &h = p.habit;
        if (keto) {
            h.net_carb = uniform(rng, 35, 70);
            h.fat = uniform(rng, 60, 110);
            h.fiber = uniform(rng, 10, 22);
            h.protein = uniform(rng, 70, 110);
        } else {
            h.net_carb = uniform(rng, 220, 320);
            h.fat = uniform(rng, 55, 90);
            h.fiber = uniform(rng, 12, 25);
            h.protein = uniform(rng, 60, 100);
        }
        h.activity_calories = uniform(rng, 300, 800);
        h.steps = uniform(rng, 3000, 7000);
        const Suggestion habit = h.as_suggestion();

        Physiology &ph = p.physiology;
        ph.carb_sensitivity = uniform(rng, 0.06, 0.12);
        ph.step_effect = uniform(rng, 1.0, 2.0);
        ph.glucose_persistence = uniform(rng, 0.5, 0.7);
        ph.fiber_effect = uniform(rng, 0.2, 0.5);
        if (kidney) {
            ph.carb_sensitivity *= 1.15;
            ph.glucose_persistence = std::min(0.7, ph.glucose_persistence + 0.05);
        }
        const double target_glucose = uniform(rng, 125, 175);
        ph.glucose_intercept = target_glucose * (1.0 - ph.glucose_persistence) -
                               ph.carb_sensitivity * habit.net_carb +
                               ph.step_effect * habit.steps / 1000.0 + ph.fiber_effect * habit.fiber;
        ph.energy_balance = uniform(rng, 0.8, 1.2);
        const double surplus = uniform(rng, 100, 250);
        ph.basal_calories = habit.intake_calories - habit.activity_calories - surplus;
        ph.ketone_rate = uniform(rng, 0.3, 0.6);
        ph.ketone_gain = uniform(rng, 0.8, 1.2);
        ph.glucose_noise = config.glucose_noise;
        ph.weight_noise = config.weight_noise;
        ph.ketone_noise = config.ketone_noise;

        const double baseline = round_to(uniform(rng, 190, 260), 0.1);
        const double calorie_goal = round_to(uniform(rng, 1600, 2000), 50);
        const std::string id = fmt::format("p{:03}", i + 1);
        if (keto) {
            p.profile = PatientProfile::make(id, group.diet, group.condition, arm, baseline,
                                             calorie_goal, round_to(uniform(rng, 50, 70), 5), 90.0);
        } else {
            p.profile = PatientProfile::make(id, group.diet, group.condition, arm, baseline,
                                             calorie_goal, 100.0, std::nullopt, 55.0);
        }

        p.habit_noise = config.habit_noise;
        p.adherence = config.adherence;
        p.missing_ketone_rate = config.missing_ketone_rate;
        p.missing_glucose_rate = config.missing_glucose_rate;
        p.initial_glucose = target_glucose;
        p.initial_ketone = ketone_target(ph, habit.keto_ratio());
        cohort.push_back(std::move(p));
    }
    return cohort;
}

PatientState PatientState::start(const SyntheticPatient &patient, Date first_day) {
    PatientState s;
    s.initialized = true;
    s.date = first_day;
    s.glucose = patient.initial_glucose;
    s.weight = patient.profile.baseline_weight;
    s.ketone = patient.initial_ketone;
    s.behaviour_rng.seed(splitmix(patient.seed ^ 0xb5ull));
    s.physiology_rng.seed(splitmix(patient.seed ^ 0x9full));
    s.missing_rng.seed(splitmix(patient.seed ^ 0x3dull));
    return s;
}

Suggestion habitual_behaviour(const SyntheticPatient &patient, PatientState &state) {
    if (!state.initialized) {
        throw UsageError("simulator state is not initialized");
    }
    const auto &h = patient.habit;
    auto jitter = [&](double x) { return x * std::exp(patient.habit_noise * gauss(state.behaviour_rng)); };
    // Every draw is taken unconditionally so the stream stays aligned.
    const double c = jitter(h.net_carb);
    const double f = jitter(h.fat);
    const double fi = jitter(h.fiber);
    const double p = jitter(h.protein);
    const double a = jitter(h.activity_calories);
    const double s = jitter(h.steps);
    return Suggestion::make(c, f, fi, p, a, std::round(s));
}

Suggestion blend(const Suggestion &habit, const Suggestion &advice, double adherence) {
    auto mix = [&](double h, double a) { return h + adherence * (a - h); };
    return Suggestion::make(mix(habit.net_carb, advice.net_carb), mix(habit.fat, advice.fat),
                            mix(habit.fiber, advice.fiber), mix(habit.protein, advice.protein),
                            mix(habit.activity_calories, advice.activity_calories),
                            std::round(mix(habit.steps, advice.steps)));
}

DailyRecord simulate_day(const SyntheticPatient &patient, const Suggestion &b, PatientState &state) {
    if (!state.initialized) {
        throw UsageError("simulator state is not initialized");
    }
    DailyRecord rec{state.date};
    rec.set(Field::NetCarb, b.net_carb);
    rec.set(Field::Fat, b.fat);
    rec.set(Field::Fiber, b.fiber);
    rec.set(Field::Protein, b.protein);
    rec.set(Field::IntakeCalories, b.intake_calories);
    rec.set(Field::ActivityCalories, b.activity_calories);
    rec.set(Field::Steps, b.steps);
    rec.set(Field::Glucose, state.glucose);
    rec.set(Field::Ketone, state.ketone);
    rec.set(Field::Weight, state.weight);

    std::uniform_real_distribution<double> u{0.0, 1.0};
    const double miss_ketone = u(state.missing_rng);
    const double miss_glucose = u(state.missing_rng);
    if (miss_ketone < patient.missing_ketone_rate) {
        rec.clear(Field::Ketone);
    }
    if (miss_glucose < patient.missing_glucose_rate) {
        rec.clear(Field::Glucose);
    }

    const auto &ph = patient.physiology;
    const double eg = gauss(state.physiology_rng);
    const double ew = gauss(state.physiology_rng);
    const double ek = gauss(state.physiology_rng);

    const double g = ph.glucose_intercept + ph.carb_sensitivity * b.net_carb -
                     ph.step_effect * b.steps / 1000.0 - ph.fiber_effect * b.fiber +
                     ph.glucose_persistence * state.glucose + ph.glucose_noise * eg;
    const double w = state.weight +
                     ph.energy_balance * (b.intake_calories - b.activity_calories - ph.basal_calories) /
                         3500.0 +
                     ph.weight_noise * ew;
    const double k = state.ketone + ph.ketone_rate * (ketone_target(ph, b.keto_ratio()) - state.ketone) +
                     ph.ketone_noise * ek;

    state.glucose = std::clamp(g, kGlucoseMin, kGlucoseMax);
    state.weight = std::max(w, kWeightMin);
    state.ketone = std::clamp(k, kKetoneMin, kKetoneMax);
    state.date += 1;
    return rec;
}

std::vector<PatientSeries> simulate_habitual(std::span<const SyntheticPatient> cohort, Date first_day,
                                             int days) {
    std::vector<PatientSeries> out;
    out.reserve(cohort.size());
    for (const auto &p : cohort) {
        auto state = PatientState::start(p, first_day);
        PatientSeries s{p.profile.id, {}};
        for (int d = 0; d < days; ++d) {
            s.records.push_back(simulate_day(p, habitual_behaviour(p, state), state));
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trial
// ---------------------------------------------------------------------------

void TrialConfig::validate() const {
    if (patients < 2 || patients % 2 != 0) {
        throw ConfigError("trial needs an even number of patients");
    }
    if (month_days < 7 || observation_months < 1 || months <= observation_months) {
        throw ConfigError("trial needs observation months followed by intervention months");
    }
    if (service.scoring_mode != ScoringMode::Auto) {
        throw ConfigError("a simulated trial has no nurse; scoring_mode must be auto");
    }
}

json TrialConfig::to_json() const {
    return {{"patients", patients},
            {"seed", seed},
            {"month_days", month_days},
            {"observation_months", observation_months},
            {"months", months},
            {"start", start.iso()},
            {"cohort", cohort.to_json()},
            {"service", service.to_json()},
            {"controller_enabled", controller_enabled}};
}

TrialConfig TrialConfig::from_json(const json &j) {
    TrialConfig c;
    try {
        c.patients = j.value("patients", c.patients);
        c.seed = j.value("seed", c.seed);
        c.month_days = j.value("month_days", c.month_days);
        c.observation_months = j.value("observation_months", c.observation_months);
        c.months = j.value("months", c.months);
        if (j.contains("start")) {
            c.start = Date::parse(j["start"].get<std::string>());
        }
        if (j.contains("cohort")) {
            c.cohort = CohortConfig::from_json(j["cohort"]);
        }
        if (j.contains("service")) {
            c.service = ServiceConfig::from_json(j["service"]);
        }
        c.controller_enabled = j.value("controller_enabled", c.controller_enabled);
    } catch (const json::exception &e) {
        throw ConfigError(fmt::format("invalid trial config: {}", e.what()));
    } catch (const DomainError &e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

namespace {

ArmSummary summarize(const TrialResult &r, Arm arm) {
    ArmSummary s;
    const Date last_obs = r.config.start + (r.config.observation_days() - 1);
    double weight_sum = 0.0;
    double glucose_sum = 0.0;
    std::size_t in_range = 0;
    std::size_t glucose_n = 0;
    for (const auto &p : r.cohort) {
        if (p.profile.arm != arm) {
            continue;
        }
        const auto &recs = r.records.at(p.profile.id);
        ++s.patients;
        double before = 0.0;
        for (const auto &rec : recs) {
            if (rec.date == last_obs) {
                before = rec.at(Field::Weight);
            }
            if (rec.date > last_obs && rec.observed(Field::Glucose)) {
                const double g = rec.at(Field::Glucose);
                glucose_sum += g;
                in_range += (g >= 70.0 && g <= 130.0) ? 1 : 0;
                ++glucose_n;
            }
        }
        weight_sum += recs.back().at(Field::Weight) - before;
    }
    if (s.patients > 0) {
        s.mean_weight_change = weight_sum / static_cast<double>(s.patients);
    }
    if (glucose_n > 0) {
        s.glucose_in_range = static_cast<double>(in_range) / static_cast<double>(glucose_n);
        s.mean_glucose = glucose_sum / static_cast<double>(glucose_n);
    }
    return s;
}

GridPoint grid_point(const PredictionEntry &p) {
    return {std::clamp(p.reference_glucose, 1.0, 600.0), std::clamp(p.predicted.glucose, 1.0, 600.0)};
}

} // namespace

TrialResult run_trial(const TrialConfig &config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();

    TrialResult result;
    result.config = config;
    result.cohort = generate_cohort(config.patients, config.seed, config.cohort);

    ServiceConfig sc = config.service;
    sc.suggest_on_ingest = false;
    Service service{sc};

    std::vector<PatientState> states;
    for (const auto &p : result.cohort) {
        service.register_patient(p.profile);
        states.push_back(PatientState::start(p, config.start));
    }

    const int total = config.total_days();
    const int observation = config.observation_days();
    std::map<std::string, Suggestion> advice;

    for (int d = 0; d < total; ++d) {
        const Date today = config.start + d;
        for (std::size_t i = 0; i < result.cohort.size(); ++i) {
            const auto &p = result.cohort[i];
            const Suggestion habit = habitual_behaviour(p, states[i]);
            Suggestion behaviour = habit;
            if (auto it = advice.find(p.profile.id); it != advice.end()) {
                behaviour = blend(habit, it->second, p.adherence);
            }
            auto rec = simulate_day(p, behaviour, states[i]);
            service.ingest_record(p.profile.id, rec);
            result.records[p.profile.id].push_back(std::move(rec));
        }

        if (d == observation - 1) {
            result.training = service.train_models(today);
        } else if (d >= observation && (d - (observation - 1)) % 7 == 0) {
            for (const auto &g : kAllGroups) {
                if (!service.model(g)) {
                    continue;
                }
                auto report = service.retrain(g, today);
                if (report.latest_target && *report.latest_target > today) {
                    result.audit_failures.push_back(fmt::format(
                        "{} week {} trained on {}", g.id(), today.iso(), report.latest_target->iso()));
                }
                const auto m = service.model(g);
                if (m->training.trained_through && *m->training.trained_through > today) {
                    result.audit_failures.push_back(fmt::format(
                        "{} model trained through {} on {}", g.id(),
                        m->training.trained_through->iso(), today.iso()));
                }
                result.retrains.push_back(std::move(report));
            }
        }

        advice.clear();
        if (config.controller_enabled && d >= observation - 1 && d < total - 1) {
            for (const auto &p : result.cohort) {
                if (p.profile.arm != Arm::AI) {
                    continue;
                }
                const auto item = service.request_suggestion(p.profile.id, today + 1);
                advice[p.profile.id] = item.suggestion;
                ++result.suggestions;
                if (item.message && item.message->plan.empty()) {
                    ++result.plans_without_meals;
                }
            }
        }
    }

    const Date first_intervention = config.start + observation;
    std::vector<GridPoint> all;
    std::map<std::string, std::vector<GridPoint>> by_group;
    std::vector<std::vector<GridPoint>> by_month(
        static_cast<std::size_t>(config.months - config.observation_months));
    for (const auto &g : kAllGroups) {
        for (const auto &e : service.predictions(g)) {
            if (e.date < first_intervention) {
                continue;
            }
            const auto pt = grid_point(e);
            all.push_back(pt);
            by_group[g.id()].push_back(pt);
            const auto month = static_cast<std::size_t>((e.date - first_intervention) / config.month_days);
            by_month.at(month).push_back(pt);
            result.predictions.push_back(e);
        }
    }
    result.zones = zone_report(all);
    for (const auto &[gid, pts] : by_group) {
        result.zones_by_group[gid] = zone_report(pts);
    }
    for (const auto &pts : by_month) {
        result.monthly_zone_a.push_back(pts.empty() ? 0.0 : zone_a_fraction(pts));
    }
    result.ai = summarize(result, Arm::AI);
    result.non_ai = summarize(result, Arm::NonAI);
    result.events = service.events();
    result.state_json = service.state_json();
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

json summary_json(const TrialResult &r) {
    auto arm = [](const ArmSummary &s) {
        return json{{"patients", s.patients},
                    {"mean_weight_change", s.mean_weight_change},
                    {"glucose_in_range", s.glucose_in_range},
                    {"mean_glucose", s.mean_glucose}};
    };
    json groups = json::object();
    for (const auto &[gid, z] : r.zones_by_group) {
        groups[gid] = to_json(z);
    }
    json retrains = json::array();
    for (const auto &rr : r.retrains) {
        retrains.push_back(to_json(rr));
    }
    return {{"seed", r.config.seed},
            {"patients", r.config.patients},
            {"days", r.config.total_days()},
            {"twin",
             {{"zone_a_fraction", r.zones.total ? r.zones.zone_a_fraction() : 0.0},
              {"zones", to_json(r.zones)},
              {"by_group", groups},
              {"monthly_zone_a", r.monthly_zone_a},
              {"training", to_json(r.training)}}},
            {"arms", {{"ai", arm(r.ai)}, {"non_ai", arm(r.non_ai)}}},
            {"suggestions", r.suggestions},
            {"plans_without_meals", r.plans_without_meals},
            {"retrains", retrains},
            {"audit_failures", r.audit_failures},
            {"events", r.events.size()},
            {"seconds", r.seconds}};
}

void write_trial_outputs(const TrialResult &r, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir / "records");
    auto open = [](const std::filesystem::path &p) {
        std::ofstream out(p, std::ios::binary);
        if (!out) {
            throw Error(fmt::format("cannot write {}", p.string()));
        }
        return out;
    };
    {
        auto out = open(dir / "summary.json");
        out << summary_json(r).dump(2) << '\n';
    }
    {
        auto out = open(dir / "config.json");
        out << r.config.to_json().dump(2) << '\n';
    }
    for (const auto &[id, recs] : r.records) {
        auto out = open(dir / "records" / (id + ".csv"));
        write_records(out, recs);
    }
    {
        auto out = open(dir / "predictions.csv");
        out << "patient_id,date,reference,predicted,zone\n";
        for (const auto &p : r.predictions) {
            const auto pt = grid_point(p);
            out << fmt::format("{},{},{},{},{}\n", p.patient_id, p.date.iso(), pt.reference,
                               pt.predicted, to_char(clarke_zone(pt)));
        }
    }
    {
        auto out = open(dir / "events.ndjson");
        for (const auto &e : r.events) {
            out << to_json(e).dump() << '\n';
        }
    }
}

} // namespace onlc

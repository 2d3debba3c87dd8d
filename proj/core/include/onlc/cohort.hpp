#pragma once

#include "onlc/controller.hpp"
#include "onlc/data.hpp"
#include "onlc/evaluation.hpp"
#include "onlc/service.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace onlc {

//! Daily lifestyle a patient drifts back to without guidance.
struct Habit {
    double net_carb = 0.0;
    double fat = 0.0;
    double fiber = 0.0;
    double protein = 0.0;
    double activity_calories = 0.0;
    double steps = 0.0;

    Suggestion as_suggestion() const;
};

//! Generator coefficients of one synthetic patient.
//!
//!   G' = a0 + a1*carb - a2*steps/1000 - a4*fiber + a3*G + e_G
//!   W' = W + ebf*(intake - activity - basal)/3500 + e_W
//!   K' = K + rho*(gain*(0.1 + 3.2*r^2/(r^2 + 1)) - K) + e_K,  r = keto ratio
struct Physiology {
    double glucose_intercept = 0.0;   // a0
    double carb_sensitivity = 0.0;    // a1, mg/dL per g net carb
    double step_effect = 0.0;         // a2, mg/dL per 1000 steps
    double glucose_persistence = 0.0; // a3
    double fiber_effect = 0.0;        // a4, mg/dL per g fiber
    double energy_balance = 1.0;      // ebf
    double basal_calories = 0.0;
    double ketone_rate = 0.5;   // rho
    double ketone_gain = 1.0;
    double glucose_noise = 0.0; // standard deviations
    double weight_noise = 0.0;
    double ketone_noise = 0.0;

    //! Fixed point of the glucose recursion under constant behaviour.
    double steady_glucose(const Suggestion &behaviour) const;
};

struct SyntheticPatient {
    PatientProfile profile;
    Physiology physiology;
    Habit habit;
    //! Relative day-to-day spread around the habit.
    double habit_noise = 0.0;
    //! Share of the gap between habit and suggestion a patient closes.
    double adherence = 0.7;
    double missing_ketone_rate = 0.0;
    double missing_glucose_rate = 0.0;
    double initial_glucose = 0.0;
    double initial_ketone = 0.0;
    std::uint64_t seed = 0;
};

struct CohortConfig {
    double adherence = 0.7;
    double habit_noise = 0.12;
    double missing_ketone_rate = 0.15;
    double missing_glucose_rate = 0.02;
    double glucose_noise = 8.0;
    double weight_noise = 0.08;
    double ketone_noise = 0.05;

    nlohmann::json to_json() const;
    static CohortConfig from_json(const nlohmann::json &j);
};

//! n patients, half in each arm, spread over the four diet x condition
//! groups with both arms represented in each. Throws ConfigError unless n
//! is even and at least 2.
std::vector<SyntheticPatient> generate_cohort(std::size_t n, std::uint64_t seed,
                                              const CohortConfig &config = {});

//! Simulator state of one patient. Behaviour, physiology and missingness
//! draw from separate streams, so what a patient does never shifts the
//! noise another quantity sees.
struct PatientState {
    bool initialized = false;
    Date date;
    double glucose = 0.0;
    double weight = 0.0;
    double ketone = 0.0;
    std::mt19937_64 behaviour_rng;
    std::mt19937_64 physiology_rng;
    std::mt19937_64 missing_rng;

    static PatientState start(const SyntheticPatient &patient, Date first_day);
};

//! Today's habitual lifestyle with day-to-day noise. Throws UsageError on an
//! uninitialized state.
Suggestion habitual_behaviour(const SyntheticPatient &patient, PatientState &state);

//! habit + adherence * (advice - habit), macros and activity alike.
Suggestion blend(const Suggestion &habit, const Suggestion &advice, double adherence);

//! Emits the record of state.date (the given behaviour plus today's
//! measurements, some possibly missing) and advances the state one day.
//! Throws UsageError on an uninitialized state.
DailyRecord simulate_day(const SyntheticPatient &patient, const Suggestion &behaviour,
                         PatientState &state);

//! Habit-only records for the first `days` days of every patient.
std::vector<PatientSeries> simulate_habitual(std::span<const SyntheticPatient> cohort, Date first_day,
                                             int days);

// ---------------------------------------------------------------------------
// Simulated trial
// ---------------------------------------------------------------------------

struct TrialConfig {
    std::size_t patients = 20;
    std::uint64_t seed = 1;
    int month_days = 28;
    int observation_months = 3;
    int months = 6;
    Date start{2023, 1, 2};
    CohortConfig cohort;
    //! The trial always scores automatically and requests suggestions itself.
    ServiceConfig service;
    //! When off, the AI arm keeps its habits (used to check arm blinding).
    bool controller_enabled = true;

    int total_days() const { return months * month_days; }
    int observation_days() const { return observation_months * month_days; }
    void validate() const;

    nlohmann::json to_json() const;
    static TrialConfig from_json(const nlohmann::json &j);
};

struct ArmSummary {
    std::size_t patients = 0;
    //! Mean of (last weight - weight on the last observation day).
    double mean_weight_change = 0.0;
    //! Share of observed intervention-period glucose values in [70, 130].
    double glucose_in_range = 0.0;
    double mean_glucose = 0.0;
};

struct TrialResult {
    TrialConfig config;
    std::vector<SyntheticPatient> cohort;
    std::map<std::string, std::vector<DailyRecord>> records;
    //! Twin forecasts logged during the intervention months.
    std::vector<PredictionEntry> predictions;
    ZoneReport zones;
    std::map<std::string, ZoneReport> zones_by_group;
    //! Zone-A fraction per intervention month.
    std::vector<double> monthly_zone_a;
    ArmSummary ai;
    ArmSummary non_ai;
    TrainReport training;
    std::vector<RetrainReport> retrains;
    //! Violations of the no-future-data rule; empty on a clean run.
    std::vector<std::string> audit_failures;
    std::size_t suggestions = 0;
    std::size_t plans_without_meals = 0;
    std::vector<Event> events;
    std::string state_json;
    double seconds = 0.0;
};

//! Observation months on habits, pre-training and per-group fine-tuning at
//! the end of them, then daily AI suggestions with weekly retraining. The
//! service is driven in-process exactly as the API drives it.
TrialResult run_trial(const TrialConfig &config);

nlohmann::json summary_json(const TrialResult &result);

//! summary.json, records/<patient>.csv, predictions.csv, events.ndjson and
//! config.json under `dir`.
void write_trial_outputs(const TrialResult &result, const std::filesystem::path &dir);

} // namespace onlc

#pragma once

#include "onlc/data.hpp"
#include "onlc/mlp.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace onlc {

//! Bumped whenever the feature order or meaning changes.
inline constexpr int kFeatureSchemaVersion = 1;
inline constexpr std::size_t kFeatureCount = 9;
inline constexpr std::size_t kOutputCount = 3;

//! Inputs of the digital twin for day t, in physical units. The three
//! `prev_*` entries are the day-t measurements; the outcome is day t+1.
struct FeatureVector {
    double net_carb = 0.0;
    double fat = 0.0;
    double fiber = 0.0;
    double protein = 0.0;
    double activity_calories = 0.0;
    double steps = 0.0;
    double prev_glucose = 0.0;
    double prev_weight = 0.0;
    double prev_ketone = 0.0;

    std::array<double, kFeatureCount> to_array() const;
    static FeatureVector from_array(std::span<const double> values);
    //! Requires every used field of the record to be present.
    static FeatureVector from_record(const DailyRecord &record);
    bool finite() const;

    bool operator==(const FeatureVector &) const = default;
};

const std::array<std::string_view, kFeatureCount> &feature_names();

//! Next-day forecast in physical units.
struct PredictedOutcome {
    double glucose = 0.0;
    double weight = 0.0;
    double ketone = 0.0;

    bool operator==(const PredictedOutcome &) const = default;
};

//! Per-column affine standardization: z = (x - mean) / scale.
//!
//! A column with (near) zero spread in the fitting data gets scale 0: it
//! normalizes to 0 and denormalizes to its mean, so a constant target is
//! reproduced exactly instead of being approached by gradient descent.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> scale;

    //! Fits on a row-major matrix. Entries whose mask is zero are ignored.
    static Normalizer fit(std::span<const double> rows, std::size_t columns,
                          std::span<const double> mask = {});

    double normalize(std::size_t column, double x) const {
        return scale[column] == 0.0 ? 0.0 : (x - mean[column]) / scale[column];
    }
    double denormalize(std::size_t column, double z) const { return z * scale[column] + mean[column]; }

    bool operator==(const Normalizer &) const = default;
};

enum class ProvenanceKind : std::uint8_t { PooledPretrained, FineTuned };

struct Provenance {
    ProvenanceKind kind = ProvenanceKind::PooledPretrained;
    std::optional<GroupKey> group;
    //! Fingerprint of the pooled model a fine-tuned model started from.
    std::string pretrained_fingerprint;

    bool operator==(const Provenance &) const = default;
};

struct TrainingMetadata {
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    //! Latest target date used for training so far.
    std::optional<Date> trained_through;
    std::optional<Date> last_retrain;

    bool operator==(const TrainingMetadata &) const = default;
};

//! Trained predictive twin: a three-hidden-layer network plus the
//! normalization that maps physical units to network space.
//!
//! The weight head predicts the day-over-day change; predict() adds the
//! previous weight back so callers always see absolute weight.
struct TwinModel {
    nn::Mlp network;
    Normalizer input_norm;
    Normalizer output_norm;
    Provenance provenance;
    TrainingMetadata training;
    //! Model this one was retrained from; not serialized.
    std::shared_ptr<const TwinModel> previous;

    //! Stable hash of architecture, weights and normalization.
    std::string fingerprint() const;

    //! Versioned JSON document; byte-stable for identical weights.
    nlohmann::json to_json() const;
    static TwinModel from_json(const nlohmann::json &j);

    //! Structural equality, ignoring the history link.
    bool same_parameters(const TwinModel &other) const;
};

struct TwinConfig {
    std::vector<std::size_t> hidden{32, 32, 16};
    double pretrain_learning_rate = 1e-3;
    double finetune_learning_rate = 1e-4;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    double validation_fraction = 0.2;
    std::size_t max_epochs = 2000;
    //! Fine-tuning and weekly retraining epoch cap; 0 means max_epochs.
    std::size_t finetune_max_epochs = 0;
    //! Epochs without validation improvement before stopping.
    std::size_t patience = 100;
    std::uint64_t seed = 1;

    std::size_t finetune_epochs() const { return finetune_max_epochs == 0 ? max_epochs : finetune_max_epochs; }
};

nlohmann::json to_json(const TwinConfig &config);
TwinConfig twin_config_from_json(const nlohmann::json &j);

//! A patient's daily records (date-sorted, typically already imputed).
struct PatientSeries {
    std::string patient_id;
    std::vector<DailyRecord> records;
};

//! Day-t features and day-t+1 targets (glucose, weight change, ketone).
struct TrainingPair {
    std::string patient_id;
    Date target_date;
    FeatureVector features;
    std::array<double, kOutputCount> targets{};
    //! Ketone targets that were not observed are masked out.
    std::array<double, kOutputCount> mask{1.0, 1.0, 1.0};
};

//! Builds pairs from consecutive calendar days, ordered by
//! (patient id, target date) regardless of input order. Pairs whose
//! target date falls outside [first_target, last_target] are skipped.
std::vector<TrainingPair> make_pairs(std::span<const PatientSeries> series,
                                     std::optional<Date> first_target = std::nullopt,
                                     std::optional<Date> last_target = std::nullopt);

//! Pre-trains a pooled model on every patient's data.
//! Throws TrainingError on an empty dataset or divergence.
TwinModel pretrain(std::span<const PatientSeries> pooled, const TwinConfig &config);
TwinModel pretrain_pairs(std::span<const TrainingPair> pairs, const TwinConfig &config);

//! Fine-tunes a copy of `pretrained` on one diet-condition group. The
//! returned model never has a higher loss on the group data than the input.
TwinModel finetune(const TwinModel &pretrained, std::span<const PatientSeries> group_records,
                   GroupKey group, const TwinConfig &config);
TwinModel finetune_pairs(const TwinModel &pretrained, std::span<const TrainingPair> pairs,
                         GroupKey group, const TwinConfig &config);

//! Continues training on the week ending at `week_end` (the seven days
//! week_end-6 .. week_end). Records dated week_end-7 are used only as
//! features for the first pair. An empty week leaves the weights unchanged
//! and advances the retrain date. Throws OverlapError when the week starts
//! inside the span already trained on.
TwinModel weekly_retrain(const TwinModel &model, Date week_end,
                         std::span<const PatientSeries> week_records, const TwinConfig &config);

//! Pure forward pass. Throws DomainError for non-finite features.
PredictedOutcome predict(const TwinModel &model, const FeatureVector &features);

//! Mean masked squared error of the model on pairs, in normalized units.
double evaluate_loss(const TwinModel &model, std::span<const TrainingPair> pairs);

//! Callable view of a model, used as the controller's plant.
using Plant = std::function<PredictedOutcome(const FeatureVector &)>;
Plant make_plant(std::shared_ptr<const TwinModel> model);

} // namespace onlc

#pragma once

#include "onlc/controller.hpp"
#include "onlc/data.hpp"
#include "onlc/evaluation.hpp"
#include "onlc/messaging.hpp"
#include "onlc/scoring.hpp"
#include "onlc/twin.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

namespace onlc {

enum class ScoringMode : std::uint8_t { Auto, Manual };
enum class ItemStatus : std::uint8_t { PendingReview, Scored, Dispatched };

std::string_view to_string(ScoringMode m);
ScoringMode scoring_mode_from(std::string_view s);
std::string_view to_string(ItemStatus s);
ItemStatus item_status_from(std::string_view s);

struct ServiceConfig {
    ScoringMode scoring_mode = ScoringMode::Auto;
    //! Ingesting a record for an AI-arm patient requests the next day's
    //! suggestion once a group model exists.
    bool suggest_on_ingest = true;
    TwinConfig twin;
    ControllerConfig controller;
    PlannerOptions planner;
    //! Events between snapshots; 0 disables snapshots.
    std::size_t snapshot_every = 1000;
    //! Event log root; empty keeps the log in memory only.
    std::filesystem::path data_dir;
    //! Static bearer token required by the HTTP API when non-empty.
    std::string token;
    //! Directory served at / by the HTTP API when non-empty.
    std::filesystem::path console_dir;

    static ServiceConfig from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;
};

//! One AI suggestion awaiting or past nurse review.
struct ReviewItem {
    std::string id;
    std::string patient_id;
    //! Day the suggestion is meant for.
    Date date;
    DailyRecord last_record;
    Suggestion suggestion;
    PredictedOutcome predicted;
    std::optional<double> last_keto_ratio;
    double suggested_keto_ratio = 0.0;
    //! Failed boundary rows of the last observation.
    std::vector<Violation> violations;
    //! Failed boundary rows of the suggestion and its forecast.
    std::vector<Violation> suggestion_violations;
    //! Multipliers the controller ran with.
    Penalties penalties_used;
    Gates gates;
    double cost = 0.0;
    std::uint64_t controller_seed = 0;
    std::string model_fingerprint;

    ItemStatus status = ItemStatus::PendingReview;
    std::optional<Rating> rating;
    std::vector<Term> flagged;
    //! Multipliers handed to the patient's next controller run.
    std::optional<Penalties> assigned;
    std::string scored_by;
    std::optional<DailyMessage> message;
};

nlohmann::json to_json(const ReviewItem &item);
ReviewItem review_item_from_json(const nlohmann::json &j);

struct Event {
    std::uint64_t seq = 0;
    std::string type;
    //! "patient/<id>", "groups" or "config".
    std::string stream;
    nlohmann::json data;
};

nlohmann::json to_json(const Event &e);
Event event_from_json(const nlohmann::json &j);

struct PredictionEntry {
    std::string patient_id;
    Date date;
    double reference_glucose = 0.0;
    PredictedOutcome predicted;
    std::string model_fingerprint;
};

struct RetrainReport {
    GroupKey group;
    Date week_end;
    std::size_t samples = 0;
    std::optional<Date> latest_target;
    double loss_before = 0.0;
    double loss_after = 0.0;
    std::string fingerprint_before;
    std::string fingerprint_after;
    bool cached = false;
};

nlohmann::json to_json(const RetrainReport &r);
RetrainReport retrain_report_from_json(const nlohmann::json &j);

struct TrainReport {
    Date through;
    std::size_t pooled_samples = 0;
    std::string pooled_fingerprint;
    std::map<std::string, std::string> group_fingerprints;
};

nlohmann::json to_json(const TrainReport &r);

struct IngestAck {
    std::uint64_t seq = 0;
    std::optional<std::string> item_id;
};

//! Event-sourced facade over the pipeline. Every command validates, turns
//! its outcome into events, persists them and applies them; replaying the
//! same events through the same apply step rebuilds identical state.
//!
//! Commands are serialized. Queries take a shared lock and never observe a
//! half-applied event.
class Service {
public:
    //! Opens the log under config.data_dir (replaying it) or starts empty.
    explicit Service(ServiceConfig config);
    ~Service();

    Service(const Service &) = delete;
    Service &operator=(const Service &) = delete;

    //! In-memory service rebuilt from events.
    static std::unique_ptr<Service> replay(ServiceConfig config, std::span<const Event> events);

    // Commands ---------------------------------------------------------------

    PatientProfile register_patient(const PatientProfile &profile);
    IngestAck ingest_record(const std::string &patient_id, const DailyRecord &record);
    //! Runs the controller for an AI-arm patient. Throws PreconditionError
    //! without a group model or records, ValidationError for non-AI patients.
    ReviewItem request_suggestion(const std::string &patient_id, Date for_date);
    ReviewItem score_item(const std::string &item_id, Rating rating, std::span<const Term> flagged,
                          const std::map<Term, double> &overrides = {});
    ReviewItem dispatch_item(const std::string &item_id);
    //! Pre-trains on every patient's records up to `through`, then
    //! fine-tunes one model per group.
    TrainReport train_models(Date through);
    //! Weekly retrain of one group; repeated calls for the same week return
    //! the cached report. Defaults to the group's latest record date.
    RetrainReport retrain(GroupKey group, std::optional<Date> week_end = std::nullopt);
    PenaltyLookup update_lookup(const nlohmann::json &lookup);

    // Queries ----------------------------------------------------------------

    std::vector<PatientProfile> patients() const;
    PatientProfile patient(const std::string &patient_id) const;
    std::vector<DailyRecord> records(const std::string &patient_id) const;
    std::vector<ReviewItem> review_queue(std::optional<ItemStatus> status = ItemStatus::PendingReview,
                                         std::optional<std::string> patient_id = std::nullopt) const;
    ReviewItem item(const std::string &item_id) const;
    DailyMessage daily_message(const std::string &patient_id, Date date) const;
    ZoneReport metrics(GroupKey group) const;
    std::vector<PredictionEntry> predictions(std::optional<GroupKey> group = std::nullopt) const;
    std::vector<RetrainReport> retrain_reports(GroupKey group) const;
    Penalties next_penalties(const std::string &patient_id) const;
    PenaltyLookup lookup() const;
    std::shared_ptr<const TwinModel> model(GroupKey group) const;
    std::shared_ptr<const TwinModel> pooled_model() const;
    const ServiceConfig &config() const { return config_; }

    std::vector<Event> events() const;
    std::uint64_t last_seq() const;
    //! Canonical dump of all derived state; byte-identical across replays.
    std::string state_json() const;

    struct State;

private:
    void commit(std::vector<Event> events);
    void load();
    ReviewItem suggest_locked(const std::string &patient_id, Date for_date);
    ReviewItem score_locked(const std::string &item_id, std::optional<Rating> rating,
                            std::span<const Term> flagged, const std::map<Term, double> &overrides);
    ReviewItem dispatch_locked(const std::string &item_id);

    ServiceConfig config_;
    std::unique_ptr<State> state_;
    std::vector<Event> log_;
    mutable std::shared_mutex state_mutex_;
    std::mutex command_mutex_;
};

} // namespace onlc

#include "onlc/cohort.hpp"
#include "onlc/errors.hpp"
#include "onlc/service.hpp"

#include <doctest.h>

#include <filesystem>

using namespace onlc;

namespace {

const Date kStart{2023, 1, 2};
constexpr int kHistory = 30;

ServiceConfig test_config(ScoringMode mode = ScoringMode::Manual) {
    ServiceConfig c;
    c.scoring_mode = mode;
    c.suggest_on_ingest = false;
    c.twin.max_epochs = 120;
    c.twin.patience = 20;
    c.controller.pso.particles = 10;
    c.controller.pso.iterations = 15;
    return c;
}

struct World {
    std::vector<SyntheticPatient> cohort;
    std::vector<PatientSeries> series;
};

// Eight patients, two per group, with 40 habitual days; the first 30 are
// ingested up front and the rest are fed in by the tests.
const World &world() {
    static const World w = [] {
        World out;
        out.cohort = generate_cohort(8, 4);
        out.series = simulate_habitual(out.cohort, kStart, kHistory + 10);
        return out;
    }();
    return w;
}

void populate(Service &s, int days = kHistory) {
    for (const auto &p : world().cohort) {
        s.register_patient(p.profile);
    }
    for (const auto &ser : world().series) {
        for (int d = 0; d < days; ++d) {
            s.ingest_record(ser.patient_id, ser.records[static_cast<std::size_t>(d)]);
        }
    }
}

const SyntheticPatient &first(Arm arm) {
    for (const auto &p : world().cohort) {
        if (p.profile.arm == arm) {
            return p;
        }
    }
    throw std::logic_error("no patient in arm");
}

const DailyRecord &record_of(const std::string &id, int day) {
    for (const auto &s : world().series) {
        if (s.patient_id == id) {
            return s.records[static_cast<std::size_t>(day)];
        }
    }
    throw std::logic_error("no series");
}

} // namespace

TEST_CASE("registration validates and rejects duplicates") {
    Service s{test_config()};
    const auto p = first(Arm::AI).profile;
    CHECK(s.register_patient(p) == p);
    CHECK_THROWS_AS(s.register_patient(p), ConflictError);

    auto bad = p;
    bad.id = "has space";
    CHECK_THROWS_AS(s.register_patient(bad), ValidationError);
    bad = p;
    bad.id = "other";
    bad.min_fat.reset();
    CHECK_THROWS_AS(s.register_patient(bad), ValidationError);
    bad = p;
    bad.id = "other";
    bad.calorie_goal = 0;
    CHECK_THROWS_AS(s.register_patient(bad), ValidationError);

    CHECK_THROWS_AS(s.patient("nobody"), NotFoundError);
    CHECK(s.patients().size() == 1);
}

TEST_CASE("ingestion rejects conflicts and out-of-range values") {
    Service s{test_config()};
    const auto &p = first(Arm::NonAI);
    s.register_patient(p.profile);
    const auto &rec = record_of(p.profile.id, 0);
    s.ingest_record(p.profile.id, rec);
    CHECK_THROWS_AS(s.ingest_record(p.profile.id, rec), ConflictError);
    auto neg = record_of(p.profile.id, 1);
    neg.set(Field::Steps, -5);
    CHECK_THROWS_AS(s.ingest_record(p.profile.id, neg), ValidationError);
    CHECK_THROWS_AS(s.ingest_record("nobody", rec), NotFoundError);
    CHECK(s.records(p.profile.id).size() == 1);
}

TEST_CASE("suggestions need a model, an AI patient and prior records") {
    Service s{test_config()};
    populate(s);
    const auto ai = first(Arm::AI).profile.id;
    const auto non_ai = first(Arm::NonAI).profile.id;
    CHECK_THROWS_AS(s.request_suggestion(ai, kStart + kHistory), PreconditionError);
    s.train_models(kStart + (kHistory - 1));
    CHECK_THROWS_AS(s.request_suggestion(non_ai, kStart + kHistory), ValidationError);
    CHECK_THROWS_AS(s.request_suggestion(ai, kStart - 5), PreconditionError);
    CHECK_THROWS_AS(s.train_models(kStart + 3), ConflictError);
    CHECK(s.model(first(Arm::AI).profile.group()) != nullptr);
    CHECK(s.pooled_model() != nullptr);
}

TEST_CASE("nurse review: rating, dispatch and the next controller run") {
    Service s{test_config()};
    populate(s);
    s.train_models(kStart + (kHistory - 1));
    const auto &patient = first(Arm::AI);
    const auto id = patient.profile.id;
    const Date day = kStart + kHistory;

    const auto item = s.request_suggestion(id, day);
    CHECK(item.status == ItemStatus::PendingReview);
    CHECK(s.review_queue().size() == 1);
    CHECK(s.request_suggestion(id, day).id == item.id);
    CHECK(box_for(patient.profile).contains(item.suggestion));
    CHECK(item.last_record.date == day - 1);
    CHECK_THROWS_AS(s.dispatch_item(item.id), PreconditionError);
    CHECK_THROWS_AS(s.daily_message(id, day), PreconditionError);
    CHECK_THROWS_AS(s.item("item-999999"), NotFoundError);

    // Bad with glucose flagged: glucose to 1000, the others from the base.
    const std::vector<Term> glucose{Term::Glucose};
    const auto scored = s.score_item(item.id, Rating::Bad, glucose);
    REQUIRE(scored.assigned);
    CHECK(scored.assigned->glucose == 1000);
    CHECK(scored.status == ItemStatus::Scored);
    CHECK(s.next_penalties(id) == *scored.assigned);
    CHECK_THROWS_AS(s.score_item(item.id, Rating::Good, {}), ConflictError);

    const auto sent = s.dispatch_item(item.id);
    CHECK(sent.status == ItemStatus::Dispatched);
    REQUIRE(sent.message);
    CHECK(sent.message->text.find("Meal plan") != std::string::npos);
    CHECK(sent.message->text.find("Motivation") != std::string::npos);
    CHECK(sent.message->text.find("Step goal") != std::string::npos);
    CHECK(s.daily_message(id, day).text == sent.message->text);
    CHECK_THROWS_AS(s.dispatch_item(item.id), ConflictError);
    CHECK(s.review_queue().empty());

    // The stored multipliers drive the next run.
    s.ingest_record(id, record_of(id, kHistory));
    const auto next = s.request_suggestion(id, day + 1);
    CHECK(next.penalties_used == *scored.assigned);

    // VeryGood with nothing flagged sets all three to 1.
    const auto good = s.score_item(next.id, Rating::VeryGood, {});
    CHECK(*good.assigned == Penalties{1, 1, 1});

    // Overrides win over the rating.
    s.ingest_record(id, record_of(id, kHistory + 1));
    const auto third = s.request_suggestion(id, day + 2);
    CHECK(third.penalties_used == Penalties{1, 1, 1});
    const auto overridden = s.score_item(third.id, Rating::Okay, {}, {{Term::Ketone, 42.0}});
    CHECK(*overridden.assigned == Penalties{500, 500, 42});
    CHECK_THROWS_AS(s.score_item(s.request_suggestion(id, day + 3).id, Rating::Okay, {}, {{Term::Weight, 5000.0}}),
                    ValidationError);
}

TEST_CASE("auto mode scores and dispatches from the lookup") {
    auto config = test_config(ScoringMode::Auto);
    config.suggest_on_ingest = true;
    Service s{config};
    populate(s);
    s.train_models(kStart + (kHistory - 1));
    std::size_t dispatched = 0, pending = 0;
    for (const auto &p : world().cohort) {
        const auto ack = s.ingest_record(p.profile.id, record_of(p.profile.id, kHistory));
        if (p.profile.arm == Arm::NonAI) {
            CHECK_FALSE(ack.item_id);
            continue;
        }
        REQUIRE(ack.item_id);
        const auto item = s.item(*ack.item_id);
        CHECK(item.date == kStart + kHistory + 1);
        if (item.status == ItemStatus::Dispatched) {
            ++dispatched;
            CHECK(item.scored_by == "auto");
            CHECK(item.message);
        } else {
            // Outside the lookup: waits for a nurse.
            CHECK(item.status == ItemStatus::PendingReview);
            ++pending;
        }
    }
    CHECK(dispatched + pending == 4);
}

TEST_CASE("predictions, metrics and cached weekly retrains") {
    Service s{test_config()};
    populate(s);
    const auto group = first(Arm::AI).profile.group();
    CHECK_THROWS_AS(s.metrics(group), PreconditionError);
    CHECK_THROWS_AS(s.retrain(group), PreconditionError);
    s.train_models(kStart + (kHistory - 1));
    for (const auto &ser : world().series) {
        for (int d = kHistory; d < kHistory + 10; ++d) {
            s.ingest_record(ser.patient_id, ser.records[static_cast<std::size_t>(d)]);
        }
    }
    const auto preds = s.predictions(group);
    REQUIRE_FALSE(preds.empty());
    for (const auto &p : preds) {
        CHECK(p.date >= kStart + kHistory);
        CHECK(p.model_fingerprint == s.model(group)->fingerprint());
    }
    CHECK(s.metrics(group).total == preds.size());

    const Date week_end = kStart + (kHistory + 6);
    const auto first_run = s.retrain(group, week_end);
    CHECK_FALSE(first_run.cached);
    CHECK(first_run.samples > 0);
    REQUIRE(first_run.latest_target);
    CHECK(*first_run.latest_target <= week_end);
    CHECK(first_run.loss_after <= first_run.loss_before);
    const auto again = s.retrain(group, week_end);
    CHECK(again.cached);
    CHECK(again.fingerprint_after == first_run.fingerprint_after);
    CHECK(s.retrain_reports(group).size() == 1);
    CHECK(s.model(group)->fingerprint() == first_run.fingerprint_after);
}

TEST_CASE("penalty lookup updates are validated and versioned") {
    Service s{test_config()};
    const auto before = s.lookup();
    auto j = before.to_json();
    const auto next = s.update_lookup(j);
    CHECK(next.version == before.version + 1);
    CHECK(s.lookup().version == next.version);
    CHECK_THROWS_AS(s.update_lookup({{"nonsense", true}}), ValidationError);
}

TEST_CASE("replaying the event log rebuilds identical state") {
    Service s{test_config()};
    populate(s);
    s.train_models(kStart + (kHistory - 1));
    const auto id = first(Arm::AI).profile.id;
    const auto item = s.request_suggestion(id, kStart + kHistory);
    s.score_item(item.id, Rating::Good, {});
    s.dispatch_item(item.id);

    const auto events = s.events();
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].seq == i + 1);
        CHECK(event_from_json(to_json(events[i])).data == events[i].data);
    }
    const auto copy = Service::replay(test_config(), events);
    CHECK(copy->state_json() == s.state_json());
    CHECK(copy->last_seq() == s.last_seq());

    auto gap = events;
    gap.erase(gap.begin() + 1);
    CHECK_THROWS_AS(Service::replay(test_config(), gap), ConfigError);
}

TEST_CASE("a data directory survives a restart") {
    const auto dir = std::filesystem::temp_directory_path() / "onlc_service_test";
    std::filesystem::remove_all(dir);
    auto config = test_config();
    config.data_dir = dir;
    config.snapshot_every = 50;
    std::string state;
    std::uint64_t seq = 0;
    {
        Service s{config};
        populate(s, 10);
        state = s.state_json();
        seq = s.last_seq();
    }
    {
        Service s{config};
        CHECK(s.state_json() == state);
        CHECK(s.last_seq() == seq);
        // New commands continue the sequence.
        const auto &p = world().cohort.front();
        const auto ack = s.ingest_record(p.profile.id, record_of(p.profile.id, 10));
        CHECK(ack.seq == seq + 1);
    }
    std::filesystem::remove_all(dir);
}

#include "onlc/service.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace onlc {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Enums and plain JSON forms
// ---------------------------------------------------------------------------

std::string_view to_string(ScoringMode m) { return m == ScoringMode::Auto ? "auto" : "manual"; }

ScoringMode scoring_mode_from(std::string_view s) {
    if (s == "auto") {
        return ScoringMode::Auto;
    }
    if (s == "manual") {
        return ScoringMode::Manual;
    }
    throw ConfigError(fmt::format("unknown scoring mode '{}'", s));
}

std::string_view to_string(ItemStatus s) {
    switch (s) {
    case ItemStatus::PendingReview:
        return "pending-review";
    case ItemStatus::Scored:
        return "scored";
    case ItemStatus::Dispatched:
        return "dispatched";
    }
    return "pending-review";
}

ItemStatus item_status_from(std::string_view s) {
    for (auto st : {ItemStatus::PendingReview, ItemStatus::Scored, ItemStatus::Dispatched}) {
        if (to_string(st) == s) {
            return st;
        }
    }
    throw ValidationError(fmt::format("unknown item status '{}'", s));
}

namespace {

json planner_to_json(const PlannerOptions &p) {
    return {{"tolerance", p.tolerance},
            {"max_servings", p.max_servings},
            {"node_budget", p.node_budget}};
}

PlannerOptions planner_from_json(const json &j) {
    PlannerOptions p;
    p.tolerance = j.value("tolerance", p.tolerance);
    p.max_servings = j.value("max_servings", p.max_servings);
    p.node_budget = j.value("node_budget", p.node_budget);
    if (!(p.tolerance > 0.0 && p.tolerance < 1.0) || p.max_servings < 1 || p.node_budget < 1) {
        throw ConfigError("planner options out of range");
    }
    return p;
}

json gates_to_json(const Gates &g) {
    return {{"glucose", g.glucose}, {"weight", g.weight}, {"ketone", g.ketone}};
}

Gates gates_from_json(const json &j) {
    return {j.at("glucose").get<int>(), j.at("weight").get<int>(), j.at("ketone").get<int>()};
}

json optional_date(const std::optional<Date> &d) { return d ? json(d->iso()) : json(nullptr); }

std::optional<Date> date_from(const json &j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return Date::parse(j.get<std::string>());
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

bool valid_patient_id(std::string_view id) {
    if (id.empty() || id.size() > 64) {
        return false;
    }
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               c == '-' || c == '_' || c == '.';
    }) && id.front() != '.';
}

} // namespace

ServiceConfig ServiceConfig::from_json(const json &j) {
    ServiceConfig c;
    try {
        if (j.contains("scoring_mode")) {
            c.scoring_mode = scoring_mode_from(j["scoring_mode"].get<std::string>());
        }
        c.suggest_on_ingest = j.value("suggest_on_ingest", c.suggest_on_ingest);
        if (j.contains("twin")) {
            c.twin = twin_config_from_json(j["twin"]);
        }
        if (j.contains("controller")) {
            c.controller = controller_config_from_json(j["controller"]);
        }
        if (j.contains("planner")) {
            c.planner = planner_from_json(j["planner"]);
        }
        c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
        c.data_dir = j.value("data_dir", std::string{});
        c.token = j.value("token", std::string{});
        c.console_dir = j.value("console_dir", std::string{});
    } catch (const json::exception &e) {
        throw ConfigError(fmt::format("invalid service config: {}", e.what()));
    }
    return c;
}

json ServiceConfig::to_json() const {
    return {{"scoring_mode", to_string(scoring_mode)},
            {"suggest_on_ingest", suggest_on_ingest},
            {"twin", onlc::to_json(twin)},
            {"controller", onlc::to_json(controller)},
            {"planner", planner_to_json(planner)},
            {"snapshot_every", snapshot_every},
            {"data_dir", data_dir.string()},
            {"console_dir", console_dir.string()}};
}

json to_json(const ReviewItem &item) {
    json violations = json::array();
    for (const auto &v : item.violations) {
        violations.push_back(to_json(v));
    }
    json suggestion_violations = json::array();
    for (const auto &v : item.suggestion_violations) {
        suggestion_violations.push_back(to_json(v));
    }
    json flagged = json::array();
    for (auto t : item.flagged) {
        flagged.push_back(to_string(t));
    }
    return {{"id", item.id},
            {"patient_id", item.patient_id},
            {"date", item.date.iso()},
            {"last_record", to_json(item.last_record)},
            {"suggestion", to_json(item.suggestion)},
            {"predicted", to_json(item.predicted)},
            {"last_keto_ratio",
             item.last_keto_ratio ? json(*item.last_keto_ratio) : json(nullptr)},
            {"suggested_keto_ratio", item.suggested_keto_ratio},
            {"violations", std::move(violations)},
            {"suggestion_violations", std::move(suggestion_violations)},
            {"penalties_used", to_json(item.penalties_used)},
            {"gates", gates_to_json(item.gates)},
            {"cost", item.cost},
            {"controller_seed", item.controller_seed},
            {"model_fingerprint", item.model_fingerprint},
            {"status", to_string(item.status)},
            {"rating", item.rating ? json(to_string(*item.rating)) : json(nullptr)},
            {"flagged", std::move(flagged)},
            {"assigned", item.assigned ? to_json(*item.assigned) : json(nullptr)},
            {"scored_by", item.scored_by},
            {"message", item.message ? to_json(*item.message) : json(nullptr)}};
}

ReviewItem review_item_from_json(const json &j) {
    ReviewItem item;
    item.id = j.at("id").get<std::string>();
    item.patient_id = j.at("patient_id").get<std::string>();
    item.date = Date::parse(j.at("date").get<std::string>());
    item.last_record = record_from_json(j.at("last_record"));
    item.suggestion = suggestion_from_json(j.at("suggestion"));
    item.predicted = outcome_from_json(j.at("predicted"));
    if (!j.at("last_keto_ratio").is_null()) {
        item.last_keto_ratio = j["last_keto_ratio"].get<double>();
    }
    item.suggested_keto_ratio = j.at("suggested_keto_ratio").get<double>();
    for (const auto &v : j.at("violations")) {
        item.violations.push_back(violation_from_json(v));
    }
    for (const auto &v : j.at("suggestion_violations")) {
        item.suggestion_violations.push_back(violation_from_json(v));
    }
    item.penalties_used = penalties_from_json(j.at("penalties_used"));
    item.gates = gates_from_json(j.at("gates"));
    item.cost = j.at("cost").get<double>();
    item.controller_seed = j.at("controller_seed").get<std::uint64_t>();
    item.model_fingerprint = j.at("model_fingerprint").get<std::string>();
    item.status = item_status_from(j.at("status").get<std::string>());
    if (!j.at("rating").is_null()) {
        item.rating = rating_from(j["rating"].get<std::string>());
    }
    for (const auto &t : j.at("flagged")) {
        item.flagged.push_back(term_from(t.get<std::string>()));
    }
    if (!j.at("assigned").is_null()) {
        item.assigned = penalties_from_json(j["assigned"]);
    }
    item.scored_by = j.at("scored_by").get<std::string>();
    if (!j.at("message").is_null()) {
        item.message = daily_message_from_json(j["message"]);
    }
    return item;
}

json to_json(const Event &e) {
    return {{"seq", e.seq}, {"type", e.type}, {"stream", e.stream}, {"data", e.data}};
}

Event event_from_json(const json &j) {
    try {
        return {j.at("seq").get<std::uint64_t>(), j.at("type").get<std::string>(),
                j.at("stream").get<std::string>(), j.at("data")};
    } catch (const json::exception &e) {
        throw ConfigError(fmt::format("malformed event: {}", e.what()));
    }
}

json to_json(const RetrainReport &r) {
    return {{"group", r.group.id()},
            {"week_end", r.week_end.iso()},
            {"samples", r.samples},
            {"latest_target", optional_date(r.latest_target)},
            {"loss_before", r.loss_before},
            {"loss_after", r.loss_after},
            {"fingerprint_before", r.fingerprint_before},
            {"fingerprint_after", r.fingerprint_after},
            {"cached", r.cached}};
}

RetrainReport retrain_report_from_json(const json &j) {
    RetrainReport r;
    r.group = GroupKey::parse(j.at("group").get<std::string>());
    r.week_end = Date::parse(j.at("week_end").get<std::string>());
    r.samples = j.at("samples").get<std::size_t>();
    r.latest_target = date_from(j.at("latest_target"));
    r.loss_before = j.at("loss_before").get<double>();
    r.loss_after = j.at("loss_after").get<double>();
    r.fingerprint_before = j.at("fingerprint_before").get<std::string>();
    r.fingerprint_after = j.at("fingerprint_after").get<std::string>();
    r.cached = j.value("cached", false);
    return r;
}

json to_json(const TrainReport &r) {
    return {{"through", r.through.iso()},
            {"pooled_samples", r.pooled_samples},
            {"pooled_fingerprint", r.pooled_fingerprint},
            {"groups", r.group_fingerprints}};
}

// ---------------------------------------------------------------------------
// State and the apply step
// ---------------------------------------------------------------------------

namespace {

struct PatientEntry {
    PatientProfile profile;
    std::map<Date, DailyRecord> records;
    Penalties next;
    MessageHistory history;
    std::map<Date, std::string> items_by_date;
};

struct GroupEntry {
    std::shared_ptr<const TwinModel> model;
    std::map<Date, RetrainReport> retrains;
    std::vector<PredictionEntry> predictions;
};

json prediction_to_json(const PredictionEntry &p) {
    return {{"patient_id", p.patient_id},
            {"date", p.date.iso()},
            {"reference_glucose", p.reference_glucose},
            {"predicted", to_json(p.predicted)},
            {"model", p.model_fingerprint}};
}

PredictionEntry prediction_from_json(const json &j) {
    return {j.at("patient_id").get<std::string>(), Date::parse(j.at("date").get<std::string>()),
            j.at("reference_glucose").get<double>(), outcome_from_json(j.at("predicted")),
            j.at("model").get<std::string>()};
}

std::shared_ptr<const TwinModel> model_from(const json &j,
                                            std::shared_ptr<const TwinModel> previous = {}) {
    auto m = std::make_shared<TwinModel>(TwinModel::from_json(j));
    m->previous = std::move(previous);
    return m;
}

} // namespace

struct Service::State {
    std::uint64_t seq = 0;
    std::map<std::string, PatientEntry> patients;
    std::map<std::string, ReviewItem> items;
    std::map<std::string, GroupEntry> groups;
    std::shared_ptr<const TwinModel> pooled;
    PenaltyLookup lookup = PenaltyLookup::shipped();
    std::uint64_t next_item = 1;
    std::optional<Date> trained_through;

    PatientEntry &patient(const std::string &id) {
        auto it = patients.find(id);
        if (it == patients.end()) {
            throw NotFoundError(fmt::format("unknown patient '{}'", id));
        }
        return it->second;
    }
    const PatientEntry &patient(const std::string &id) const {
        return const_cast<State *>(this)->patient(id);
    }
    ReviewItem &item(const std::string &id) {
        auto it = items.find(id);
        if (it == items.end()) {
            throw NotFoundError(fmt::format("unknown review item '{}'", id));
        }
        return it->second;
    }
    const ReviewItem &item(const std::string &id) const {
        return const_cast<State *>(this)->item(id);
    }
    std::shared_ptr<const TwinModel> model(const GroupKey &g) const {
        auto it = groups.find(g.id());
        return it == groups.end() ? nullptr : it->second.model;
    }

    void apply(const Event &e) {
        if (e.seq != seq + 1) {
            throw ConfigError(fmt::format("event sequence gap: expected {}, got {}", seq + 1, e.seq));
        }
        const json &d = e.data;
        if (e.type == "patient_registered") {
            auto profile = profile_from_json(d.at("profile"));
            const std::string id = profile.id;
            patients[id].profile = std::move(profile);
        } else if (e.type == "record_ingested") {
            auto &p = patient(d.at("patient").get<std::string>());
            auto rec = record_from_json(d.at("record"));
            const Date day = rec.date;
            p.records[day] = std::move(rec);
            if (d.contains("prediction") && !d["prediction"].is_null()) {
                auto entry = prediction_from_json(d["prediction"]);
                groups[p.profile.group().id()].predictions.push_back(std::move(entry));
            }
        } else if (e.type == "suggestion_created") {
            auto item = review_item_from_json(d.at("item"));
            auto &p = patient(item.patient_id);
            p.items_by_date[item.date] = item.id;
            next_item = std::max(next_item, d.at("next_item").get<std::uint64_t>());
            items[item.id] = std::move(item);
        } else if (e.type == "item_scored") {
            auto &item = this->item(d.at("id").get<std::string>());
            item.status = ItemStatus::Scored;
            item.rating = d.at("rating").is_null()
                              ? std::nullopt
                              : std::optional{rating_from(d["rating"].get<std::string>())};
            item.flagged.clear();
            for (const auto &t : d.at("flagged")) {
                item.flagged.push_back(term_from(t.get<std::string>()));
            }
            item.assigned = penalties_from_json(d.at("penalties"));
            item.scored_by = d.at("scored_by").get<std::string>();
            patient(item.patient_id).next = *item.assigned;
        } else if (e.type == "item_dispatched") {
            auto &item = this->item(d.at("id").get<std::string>());
            item.status = ItemStatus::Dispatched;
            item.message = daily_message_from_json(d.at("message"));
            patient(item.patient_id).history.sent.push_back({item.date, item.message->motivation.id});
        } else if (e.type == "models_trained") {
            pooled = model_from(d.at("pooled"));
            for (const auto &[gid, mj] : d.at("groups").items()) {
                auto &g = groups[gid];
                g.model = model_from(mj, g.model);
            }
            trained_through = Date::parse(d.at("through").get<std::string>());
        } else if (e.type == "group_retrained") {
            auto &g = groups[d.at("group").get<std::string>()];
            g.model = model_from(d.at("model"), g.model);
            auto report = retrain_report_from_json(d.at("report"));
            g.retrains[report.week_end] = report;
        } else if (e.type == "lookup_updated") {
            lookup = PenaltyLookup::from_json(d.at("lookup"));
        } else {
            throw ConfigError(fmt::format("unknown event type '{}'", e.type));
        }
        seq = e.seq;
    }

    //! Full models are needed to restore from a snapshot; the canonical
    //! comparison form carries fingerprints only.
    json to_json(bool full_models) const {
        auto model_json = [&](const std::shared_ptr<const TwinModel> &m) -> json {
            if (!m) {
                return nullptr;
            }
            return full_models ? m->to_json() : json(m->fingerprint());
        };
        json pj = json::object();
        for (const auto &[id, p] : patients) {
            json recs = json::array();
            for (const auto &[day, r] : p.records) {
                recs.push_back(onlc::to_json(r));
            }
            json hist = json::array();
            for (const auto &h : p.history.sent) {
                hist.push_back({h.date.iso(), h.message_id});
            }
            json by_date = json::object();
            for (const auto &[day, item] : p.items_by_date) {
                by_date[day.iso()] = item;
            }
            pj[id] = {{"profile", onlc::to_json(p.profile)},
                      {"records", std::move(recs)},
                      {"next_penalties", onlc::to_json(p.next)},
                      {"history", std::move(hist)},
                      {"items_by_date", std::move(by_date)}};
        }
        json ij = json::object();
        for (const auto &[id, item] : items) {
            ij[id] = onlc::to_json(item);
        }
        json gj = json::object();
        for (const auto &[id, g] : groups) {
            json retrains = json::array();
            for (const auto &[day, r] : g.retrains) {
                retrains.push_back(onlc::to_json(r));
            }
            json preds = json::array();
            for (const auto &p : g.predictions) {
                preds.push_back(prediction_to_json(p));
            }
            gj[id] = {{"model", model_json(g.model)},
                      {"retrains", std::move(retrains)},
                      {"predictions", std::move(preds)}};
        }
        return {{"seq", seq},
                {"patients", std::move(pj)},
                {"items", std::move(ij)},
                {"groups", std::move(gj)},
                {"pooled", model_json(pooled)},
                {"lookup", lookup.to_json()},
                {"next_item", next_item},
                {"trained_through", optional_date(trained_through)}};
    }

    static State from_json(const json &j) {
        State s;
        s.seq = j.at("seq").get<std::uint64_t>();
        for (const auto &[id, pj] : j.at("patients").items()) {
            PatientEntry p;
            p.profile = profile_from_json(pj.at("profile"));
            for (const auto &r : pj.at("records")) {
                auto rec = record_from_json(r);
                p.records[rec.date] = std::move(rec);
            }
            p.next = penalties_from_json(pj.at("next_penalties"));
            for (const auto &h : pj.at("history")) {
                p.history.sent.push_back(
                    {Date::parse(h.at(0).get<std::string>()), h.at(1).get<std::string>()});
            }
            for (const auto &[day, item] : pj.at("items_by_date").items()) {
                p.items_by_date[Date::parse(day)] = item.get<std::string>();
            }
            s.patients[id] = std::move(p);
        }
        for (const auto &[id, ij] : j.at("items").items()) {
            s.items[id] = review_item_from_json(ij);
        }
        for (const auto &[id, gj] : j.at("groups").items()) {
            GroupEntry g;
            if (!gj.at("model").is_null()) {
                g.model = model_from(gj["model"]);
            }
            for (const auto &r : gj.at("retrains")) {
                auto report = retrain_report_from_json(r);
                g.retrains[report.week_end] = report;
            }
            for (const auto &p : gj.at("predictions")) {
                g.predictions.push_back(prediction_from_json(p));
            }
            s.groups[id] = std::move(g);
        }
        if (!j.at("pooled").is_null()) {
            s.pooled = model_from(j["pooled"]);
        }
        s.lookup = PenaltyLookup::from_json(j.at("lookup"));
        s.next_item = j.at("next_item").get<std::uint64_t>();
        s.trained_through = date_from(j.at("trained_through"));
        return s;
    }
};

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

fs::path stream_file(const fs::path &root, const std::string &stream) {
    std::string name = stream;
    std::replace(name.begin(), name.end(), '/', '-');
    return root / "events" / (name + ".ndjson");
}

void append_line(const fs::path &file, const std::string &line) {
    std::ofstream out(file, std::ios::app | std::ios::binary);
    out << line << '\n';
    out.flush();
    if (!out) {
        throw Error(fmt::format("cannot append to {}", file.string()));
    }
}

void write_atomically(const fs::path &file, const std::string &content) {
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        out << content;
        out.flush();
        if (!out) {
            throw Error(fmt::format("cannot write {}", tmp.string()));
        }
    }
    fs::rename(tmp, file);
}

// Same-day state for the controller and the twin: the latest record on or
// before `through`, with gaps carried forward from earlier observations.
std::optional<DailyRecord> latest_state(const PatientEntry &p, Date through) {
    std::vector<DailyRecord> recs;
    for (const auto &[day, r] : p.records) {
        if (day > through) {
            break;
        }
        recs.push_back(r);
    }
    if (recs.empty()) {
        return std::nullopt;
    }
    auto filled = impute(recs, ImputePolicy{ImputeMethod::CarryForward, {}});
    auto last = filled.back();
    for (auto f : {Field::NetCarb, Field::Fat, Field::Fiber, Field::Protein, Field::ActivityCalories,
                   Field::Steps, Field::Glucose, Field::Weight, Field::Ketone}) {
        if (!last.has(f)) {
            return std::nullopt;
        }
    }
    return last;
}

// Linearly imputed series restricted to [from, through].
PatientSeries training_series(const PatientEntry &p, std::optional<Date> from, Date through) {
    std::vector<DailyRecord> recs;
    for (const auto &[day, r] : p.records) {
        if (day > through) {
            break;
        }
        recs.push_back(r);
    }
    PatientSeries s{p.profile.id, {}};
    if (recs.empty()) {
        return s;
    }
    for (auto &r : impute(recs, ImputePolicy{ImputeMethod::Linear, {}})) {
        if (!from || r.date >= *from) {
            s.records.push_back(std::move(r));
        }
    }
    return s;
}

void check_record(const DailyRecord &r) {
    for (auto f : kAllFields) {
        if (!r.has(f)) {
            continue;
        }
        const double v = r.values[DailyRecord::index(f)];
        if (!std::isfinite(v) || v < 0.0 || (requires_positive(f) && v == 0.0)) {
            throw ValidationError(fmt::format("field {} out of range: {}", field_name(f), v));
        }
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

Service::Service(ServiceConfig config) : config_{std::move(config)}, state_{std::make_unique<State>()} {
    config_.controller.validate();
    if (!config_.data_dir.empty()) {
        fs::create_directories(config_.data_dir / "events");
        load();
    }
}

Service::~Service() = default;

std::unique_ptr<Service> Service::replay(ServiceConfig config, std::span<const Event> events) {
    config.data_dir.clear();
    auto svc = std::make_unique<Service>(std::move(config));
    for (const auto &e : events) {
        svc->state_->apply(e);
        svc->log_.push_back(e);
    }
    return svc;
}

void Service::load() {
    std::vector<Event> events;
    for (const auto &entry : fs::directory_iterator(config_.data_dir / "events")) {
        if (entry.path().extension() != ".ndjson") {
            continue;
        }
        std::ifstream in(entry.path(), std::ios::binary);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            try {
                events.push_back(event_from_json(json::parse(line)));
            } catch (const json::parse_error &) {
                // A torn final line from an interrupted append carries no
                // committed state; anything else is corruption.
                if (in.peek() != std::char_traits<char>::eof()) {
                    throw ConfigError(fmt::format("corrupt event log {}", entry.path().string()));
                }
            }
        }
    }
    std::sort(events.begin(), events.end(),
              [](const Event &a, const Event &b) { return a.seq < b.seq; });

    const fs::path snap = config_.data_dir / "snapshot.json";
    std::uint64_t from = 0;
    if (fs::exists(snap)) {
        std::ifstream in(snap, std::ios::binary);
        const auto j = json::parse(in);
        const auto s = j.at("state").get<json>();
        const std::uint64_t snap_seq = s.at("seq").get<std::uint64_t>();
        if (snap_seq <= (events.empty() ? 0 : events.back().seq)) {
            *state_ = State::from_json(s);
            from = snap_seq;
        }
    }
    for (const auto &e : events) {
        if (e.seq > from) {
            state_->apply(e);
        }
    }
    log_ = std::move(events);
}

void Service::commit(std::vector<Event> events) {
    for (auto &e : events) {
        e.seq = state_->seq + 1;
        if (!config_.data_dir.empty()) {
            append_line(stream_file(config_.data_dir, e.stream), to_json(e).dump());
        }
        {
            std::unique_lock lock{state_mutex_};
            state_->apply(e);
            log_.push_back(e);
        }
        if (!config_.data_dir.empty() && config_.snapshot_every > 0 &&
            e.seq % config_.snapshot_every == 0) {
            json snap;
            {
                std::shared_lock lock{state_mutex_};
                snap = {{"state", state_->to_json(true)}};
            }
            write_atomically(config_.data_dir / "snapshot.json", snap.dump());
        }
    }
}

PatientProfile Service::register_patient(const PatientProfile &profile) {
    std::lock_guard cmd{command_mutex_};
    if (!valid_patient_id(profile.id)) {
        throw ValidationError(fmt::format("invalid patient id '{}'", profile.id));
    }
    if (state_->patients.contains(profile.id)) {
        throw ConflictError(fmt::format("patient '{}' already registered", profile.id));
    }
    if (!(profile.baseline_weight > 0.0) || !(profile.calorie_goal > 0.0)) {
        throw ValidationError("baseline weight and calorie goal must be positive");
    }
    if (profile.diet == DietGroup::Keto && !profile.min_fat) {
        throw ValidationError("keto profiles need min_fat");
    }
    if (profile.diet == DietGroup::LowFat && !profile.max_fat) {
        throw ValidationError("low-fat profiles need max_fat");
    }
    try {
        box_for(profile).validate();
    } catch (const ConfigError &e) {
        throw ValidationError(e.what());
    }
    commit({Event{0, "patient_registered", "patient/" + profile.id, {{"profile", to_json(profile)}}}});
    return profile;
}

IngestAck Service::ingest_record(const std::string &patient_id, const DailyRecord &record) {
    std::lock_guard cmd{command_mutex_};
    const auto &p = state_->patient(patient_id);
    check_record(record);
    if (p.records.contains(record.date)) {
        throw ConflictError(
            fmt::format("record for {} on {} already ingested", patient_id, record.date.iso()));
    }

    json prediction = nullptr;
    const auto model = state_->model(p.profile.group());
    if (model && record.observed(Field::Glucose) && p.records.contains(record.date - 1)) {
        if (auto prev = latest_state(p, record.date - 1)) {
            const auto out = predict(*model, FeatureVector::from_record(*prev));
            prediction = prediction_to_json({patient_id, record.date, record.at(Field::Glucose),
                                             out, model->fingerprint()});
        }
    }
    commit({Event{0, "record_ingested", "patient/" + patient_id,
                  {{"patient", patient_id}, {"record", to_json(record)}, {"prediction", prediction}}}});
    IngestAck ack{state_->seq, std::nullopt};

    const auto &entry = state_->patient(patient_id);
    if (config_.suggest_on_ingest && entry.profile.arm == Arm::AI && model &&
        entry.records.rbegin()->first == record.date) {
        try {
            ack.item_id = suggest_locked(patient_id, record.date + 1).id;
        } catch (const PreconditionError &) {
            // Not enough history for a forecast yet.
        }
    }
    return ack;
}

ReviewItem Service::request_suggestion(const std::string &patient_id, Date for_date) {
    std::lock_guard cmd{command_mutex_};
    return suggest_locked(patient_id, for_date);
}

ReviewItem Service::suggest_locked(const std::string &patient_id, Date for_date) {
    const auto &p = state_->patient(patient_id);
    if (p.profile.arm != Arm::AI) {
        throw ValidationError(fmt::format("patient '{}' is not in the AI arm", patient_id));
    }
    if (auto it = p.items_by_date.find(for_date); it != p.items_by_date.end()) {
        return state_->item(it->second);
    }
    const auto model = state_->model(p.profile.group());
    if (!model) {
        throw PreconditionError(
            fmt::format("no trained model for group {}", p.profile.group().id()));
    }
    const auto prev = latest_state(p, for_date - 1);
    if (!prev) {
        throw PreconditionError(
            fmt::format("patient '{}' has no complete state before {}", patient_id, for_date.iso()));
    }

    ControllerConfig cc = config_.controller;
    cc.pso.seed = config_.controller.pso.seed ^ fnv1a(patient_id) ^
                  (static_cast<std::uint64_t>(for_date.serial()) * 0x9e3779b97f4a7c15ull);
    const auto result = optimize(make_plant(model), *prev, p.profile, p.next, cc);

    ReviewItem item;
    item.id = fmt::format("item-{:06}", state_->next_item);
    item.patient_id = patient_id;
    item.date = for_date;
    // The raw record, so the reviewer sees what was actually logged.
    item.last_record = std::prev(p.records.upper_bound(for_date - 1))->second;
    item.suggestion = result.suggestion;
    item.predicted = result.predicted;
    if (item.last_record.has(Field::NetCarb) && item.last_record.has(Field::Fat) &&
        item.last_record.has(Field::Protein)) {
        const double denom = item.last_record.at(Field::NetCarb) + item.last_record.at(Field::Protein);
        if (denom > 0.0) {
            item.last_keto_ratio = keto_ratio(item.last_record.at(Field::NetCarb),
                                              item.last_record.at(Field::Fat),
                                              item.last_record.at(Field::Protein));
        }
    }
    item.suggested_keto_ratio = result.suggestion.keto_ratio();

    std::optional<double> reference;
    auto it = p.records.find(item.last_record.date);
    if (it != p.records.begin()) {
        reference = std::prev(it)->second.value(Field::Weight);
    }
    item.violations = check_boundaries(ScoringInput::from_record(item.last_record, reference), p.profile);
    item.suggestion_violations = check_boundaries(
        ScoringInput::from_suggestion(result.suggestion, result.predicted, prev->at(Field::Weight)),
        p.profile);
    item.penalties_used = p.next;
    item.gates = result.gates;
    item.cost = result.cost;
    item.controller_seed = cc.pso.seed;
    item.model_fingerprint = model->fingerprint();

    commit({Event{0, "suggestion_created", "patient/" + patient_id,
                  {{"item", to_json(item)}, {"next_item", state_->next_item + 1}}}});

    if (config_.scoring_mode == ScoringMode::Auto) {
        const auto scored = score_locked(item.id, std::nullopt, {}, {});
        if (scored.status == ItemStatus::Scored) {
            return dispatch_locked(item.id);
        }
    }
    return state_->item(item.id);
}

ReviewItem Service::score_item(const std::string &item_id, Rating rating,
                               std::span<const Term> flagged,
                               const std::map<Term, double> &overrides) {
    std::lock_guard cmd{command_mutex_};
    return score_locked(item_id, rating, flagged, overrides);
}

ReviewItem Service::score_locked(const std::string &item_id, std::optional<Rating> rating,
                                 std::span<const Term> flagged,
                                 const std::map<Term, double> &overrides) {
    const ReviewItem &item = state_->item(item_id);
    if (item.status != ItemStatus::PendingReview) {
        throw ConflictError(fmt::format("item {} is already {}", item_id, to_string(item.status)));
    }
    const auto &p = state_->patient(item.patient_id);
    const double reference = item.last_record.value(Field::Weight).value_or(item.predicted.weight);

    // Manual rating over the lookup, the lookup over its linear fallback.
    std::optional<Penalties> from_lookup;
    try {
        from_lookup = auto_penalties(item.predicted, item.suggested_keto_ratio, reference, p.profile,
                                     state_->lookup);
    } catch (const CoverageError &) {
    }

    Penalties assigned;
    if (rating) {
        assigned = penalties_from_rating(*rating, flagged, from_lookup.value_or(item.penalties_used));
        for (const auto &[term, value] : overrides) {
            switch (term) {
            case Term::Glucose:
                assigned.glucose = value;
                break;
            case Term::Weight:
                assigned.weight = value;
                break;
            case Term::Ketone:
                assigned.ketone = value;
                break;
            }
        }
        assigned.validate();
    } else if (from_lookup) {
        assigned = *from_lookup;
    } else {
        // Outside the lookup: leave it for the nurse.
        return item;
    }

    json flagged_json = json::array();
    for (auto t : flagged) {
        flagged_json.push_back(to_string(t));
    }
    commit({Event{0, "item_scored", "patient/" + item.patient_id,
                  {{"id", item_id},
                   {"rating", rating ? json(to_string(*rating)) : json(nullptr)},
                   {"flagged", std::move(flagged_json)},
                   {"penalties", to_json(assigned)},
                   {"scored_by", rating ? "nurse" : "auto"}}}});
    return state_->item(item_id);
}

ReviewItem Service::dispatch_item(const std::string &item_id) {
    std::lock_guard cmd{command_mutex_};
    return dispatch_locked(item_id);
}

ReviewItem Service::dispatch_locked(const std::string &item_id) {
    const ReviewItem &item = state_->item(item_id);
    if (item.status == ItemStatus::Dispatched) {
        throw ConflictError(fmt::format("item {} was already dispatched", item_id));
    }
    if (item.status != ItemStatus::Scored) {
        throw PreconditionError(fmt::format("item {} has not been scored", item_id));
    }
    const auto &p = state_->patient(item.patient_id);

    MealPlan plan;
    std::string note;
    try {
        plan = plan_meals(item.suggestion, shipped_catalog(), p.profile, config_.planner);
    } catch (const InfeasibleError &e) {
        note = fmt::format("no meal plan meets the {} constraint", e.binding());
    }
    const auto motivation =
        pick_motivation(item.violations, MessagePool::shipped(), p.history, item.date);

    std::vector<double> steps;
    for (auto it = p.records.rbegin(); it != p.records.rend() && steps.size() < 10; ++it) {
        if (it->first < item.date && it->second.has(Field::Steps)) {
            steps.push_back(it->second.at(Field::Steps));
        }
    }
    std::reverse(steps.begin(), steps.end());
    const double goal = steps.empty() ? std::round(item.suggestion.steps) : step_goal(steps);

    const auto message = compose(plan, motivation, goal, note);
    commit({Event{0, "item_dispatched", "patient/" + item.patient_id,
                  {{"id", item_id}, {"message", to_json(message)}}}});
    return state_->item(item_id);
}

TrainReport Service::train_models(Date through) {
    std::lock_guard cmd{command_mutex_};
    if (state_->trained_through && through < *state_->trained_through) {
        throw ConflictError(fmt::format("models already trained through {}",
                                        state_->trained_through->iso()));
    }
    std::vector<PatientSeries> pooled;
    std::map<std::string, std::vector<PatientSeries>> by_group;
    for (const auto &[id, p] : state_->patients) {
        auto s = training_series(p, std::nullopt, through);
        if (s.records.empty()) {
            continue;
        }
        by_group[p.profile.group().id()].push_back(s);
        pooled.push_back(std::move(s));
    }
    TrainReport report;
    report.through = through;
    TwinModel base;
    try {
        base = pretrain(pooled, config_.twin);
    } catch (const TrainingError &e) {
        throw PreconditionError(e.what());
    }
    report.pooled_samples = base.training.samples;
    report.pooled_fingerprint = base.fingerprint();

    json groups = json::object();
    for (const auto &[gid, series] : by_group) {
        try {
            auto tuned = finetune(base, series, GroupKey::parse(gid), config_.twin);
            report.group_fingerprints[gid] = tuned.fingerprint();
            groups[gid] = tuned.to_json();
        } catch (const TrainingError &) {
            // A group without day pairs keeps no model.
        }
    }
    commit({Event{0, "models_trained", "groups",
                  {{"through", through.iso()}, {"pooled", base.to_json()}, {"groups", groups}}}});
    return report;
}

RetrainReport Service::retrain(GroupKey group, std::optional<Date> week_end) {
    std::lock_guard cmd{command_mutex_};
    const auto model = state_->model(group);
    if (!model) {
        throw PreconditionError(fmt::format("no trained model for group {}", group.id()));
    }
    if (!week_end) {
        for (const auto &[id, p] : state_->patients) {
            if (p.profile.group() == group && !p.records.empty()) {
                const Date last = p.records.rbegin()->first;
                week_end = week_end ? std::max(*week_end, last) : last;
            }
        }
        if (!week_end) {
            throw PreconditionError(fmt::format("group {} has no records", group.id()));
        }
    }
    const auto &g = state_->groups.at(group.id());
    if (auto it = g.retrains.find(*week_end); it != g.retrains.end()) {
        auto cached = it->second;
        cached.cached = true;
        return cached;
    }

    std::vector<PatientSeries> week;
    for (const auto &[id, p] : state_->patients) {
        if (p.profile.group() == group) {
            auto s = training_series(p, *week_end - 7, *week_end);
            if (!s.records.empty()) {
                week.push_back(std::move(s));
            }
        }
    }
    TwinModel next;
    try {
        next = weekly_retrain(*model, *week_end, week, config_.twin);
    } catch (const OverlapError &e) {
        throw ConflictError(e.what());
    }
    const auto pairs = make_pairs(week, *week_end - 6, *week_end);

    RetrainReport report;
    report.group = group;
    report.week_end = *week_end;
    report.samples = pairs.size();
    for (const auto &pr : pairs) {
        report.latest_target =
            report.latest_target ? std::max(*report.latest_target, pr.target_date) : pr.target_date;
    }
    if (!pairs.empty()) {
        report.loss_before = evaluate_loss(*model, pairs);
        report.loss_after = evaluate_loss(next, pairs);
    }
    report.fingerprint_before = model->fingerprint();
    report.fingerprint_after = next.fingerprint();
    commit({Event{0, "group_retrained", "groups",
                  {{"group", group.id()}, {"model", next.to_json()}, {"report", to_json(report)}}}});
    return report;
}

PenaltyLookup Service::update_lookup(const json &lookup) {
    std::lock_guard cmd{command_mutex_};
    PenaltyLookup next;
    try {
        next = PenaltyLookup::from_json(lookup);
        next.validate();
    } catch (const ConfigError &e) {
        throw ValidationError(e.what());
    }
    next.version = state_->lookup.version + 1;
    commit({Event{0, "lookup_updated", "config", {{"lookup", next.to_json()}}}});
    return next;
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

std::vector<PatientProfile> Service::patients() const {
    std::shared_lock lock{state_mutex_};
    std::vector<PatientProfile> out;
    for (const auto &[id, p] : state_->patients) {
        out.push_back(p.profile);
    }
    return out;
}

PatientProfile Service::patient(const std::string &patient_id) const {
    std::shared_lock lock{state_mutex_};
    return state_->patient(patient_id).profile;
}

std::vector<DailyRecord> Service::records(const std::string &patient_id) const {
    std::shared_lock lock{state_mutex_};
    std::vector<DailyRecord> out;
    for (const auto &[day, r] : state_->patient(patient_id).records) {
        out.push_back(r);
    }
    return out;
}

std::vector<ReviewItem> Service::review_queue(std::optional<ItemStatus> status,
                                              std::optional<std::string> patient_id) const {
    std::shared_lock lock{state_mutex_};
    if (patient_id) {
        state_->patient(*patient_id);
    }
    std::vector<ReviewItem> out;
    for (const auto &[id, item] : state_->items) {
        if ((!status || item.status == *status) && (!patient_id || item.patient_id == *patient_id)) {
            out.push_back(item);
        }
    }
    return out;
}

ReviewItem Service::item(const std::string &item_id) const {
    std::shared_lock lock{state_mutex_};
    return state_->item(item_id);
}

DailyMessage Service::daily_message(const std::string &patient_id, Date date) const {
    std::shared_lock lock{state_mutex_};
    const auto &p = state_->patient(patient_id);
    auto it = p.items_by_date.find(date);
    if (it == p.items_by_date.end()) {
        throw NotFoundError(fmt::format("no suggestion for {} on {}", patient_id, date.iso()));
    }
    const auto &item = state_->item(it->second);
    if (!item.message) {
        throw PreconditionError(fmt::format("suggestion {} has not been dispatched", item.id));
    }
    return *item.message;
}

ZoneReport Service::metrics(GroupKey group) const {
    std::shared_lock lock{state_mutex_};
    std::vector<GridPoint> points;
    if (auto it = state_->groups.find(group.id()); it != state_->groups.end()) {
        for (const auto &p : it->second.predictions) {
            points.push_back({std::clamp(p.reference_glucose, 1.0, 600.0),
                              std::clamp(p.predicted.glucose, 1.0, 600.0)});
        }
    }
    if (points.empty()) {
        throw PreconditionError(fmt::format("no predictions logged for group {}", group.id()));
    }
    return zone_report(points);
}

std::vector<PredictionEntry> Service::predictions(std::optional<GroupKey> group) const {
    std::shared_lock lock{state_mutex_};
    std::vector<PredictionEntry> out;
    for (const auto &[id, g] : state_->groups) {
        if (!group || group->id() == id) {
            out.insert(out.end(), g.predictions.begin(), g.predictions.end());
        }
    }
    return out;
}

std::vector<RetrainReport> Service::retrain_reports(GroupKey group) const {
    std::shared_lock lock{state_mutex_};
    std::vector<RetrainReport> out;
    if (auto it = state_->groups.find(group.id()); it != state_->groups.end()) {
        for (const auto &[day, r] : it->second.retrains) {
            out.push_back(r);
        }
    }
    return out;
}

Penalties Service::next_penalties(const std::string &patient_id) const {
    std::shared_lock lock{state_mutex_};
    return state_->patient(patient_id).next;
}

PenaltyLookup Service::lookup() const {
    std::shared_lock lock{state_mutex_};
    return state_->lookup;
}

std::shared_ptr<const TwinModel> Service::model(GroupKey group) const {
    std::shared_lock lock{state_mutex_};
    return state_->model(group);
}

std::shared_ptr<const TwinModel> Service::pooled_model() const {
    std::shared_lock lock{state_mutex_};
    return state_->pooled;
}

std::vector<Event> Service::events() const {
    std::shared_lock lock{state_mutex_};
    return log_;
}

std::uint64_t Service::last_seq() const {
    std::shared_lock lock{state_mutex_};
    return state_->seq;
}

std::string Service::state_json() const {
    std::shared_lock lock{state_mutex_};
    return state_->to_json(false).dump();
}

} // namespace onlc

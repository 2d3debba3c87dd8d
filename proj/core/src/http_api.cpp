#include "onlc/http_api.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <functional>

namespace onlc {

using nlohmann::json;

namespace {

void send(httplib::Response &res, int status, const json &body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response &res, int status, std::string_view code, std::string_view message) {
    send(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request &req) {
    if (req.body.empty()) {
        return json::object();
    }
    try {
        return json::parse(req.body);
    } catch (const json::parse_error &e) {
        throw ValidationError(fmt::format("request body is not JSON: {}", e.what()));
    }
}

Date date_param(const std::string &s) {
    try {
        return Date::parse(s);
    } catch (const DomainError &e) {
        throw ValidationError(e.what());
    }
}

GroupKey group_param(const std::string &s) {
    try {
        return GroupKey::parse(s);
    } catch (const Error &) {
        throw NotFoundError(fmt::format("unknown group '{}'", s));
    }
}

json model_summary(const TwinModel &m) {
    json j{{"fingerprint", m.fingerprint()},
           {"provenance",
            {{"kind", m.provenance.kind == ProvenanceKind::FineTuned ? "fine-tuned" : "pooled"},
             {"group", m.provenance.group ? json(m.provenance.group->id()) : json(nullptr)},
             {"pretrained_fingerprint", m.provenance.pretrained_fingerprint}}},
           {"training",
            {{"epochs", m.training.epochs},
             {"samples", m.training.samples},
             {"train_loss", m.training.train_loss},
             {"validation_loss", m.training.validation_loss},
             {"trained_through",
              m.training.trained_through ? json(m.training.trained_through->iso()) : json(nullptr)},
             {"last_retrain",
              m.training.last_retrain ? json(m.training.last_retrain->iso()) : json(nullptr)}}}};
    std::size_t history = 0;
    for (auto p = m.previous; p; p = p->previous) {
        ++history;
    }
    j["history_length"] = history;
    return j;
}

json prediction_json(const PredictionEntry &p) {
    return {{"patient_id", p.patient_id},
            {"date", p.date.iso()},
            {"reference_glucose", p.reference_glucose},
            {"predicted", to_json(p.predicted)},
            {"model", p.model_fingerprint}};
}

} // namespace

struct HttpApi::Impl {
    Service &service;
    httplib::Server server;

    explicit Impl(Service &s) : service{s} { routes(); }

    using Handler = std::function<void(const httplib::Request &, httplib::Response &)>;

    // Maps library errors onto status codes; the handler body never sees HTTP.
    Handler guarded(Handler h) {
        return [this, h = std::move(h)](const httplib::Request &req, httplib::Response &res) {
            const auto &token = service.config().token;
            if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
                send_error(res, 401, "unauthorized", "missing or wrong bearer token");
                return;
            }
            try {
                h(req, res);
            } catch (const NotFoundError &e) {
                send_error(res, 404, "not_found", e.what());
            } catch (const ConflictError &e) {
                send_error(res, 409, "conflict", e.what());
            } catch (const OverlapError &e) {
                send_error(res, 409, "conflict", e.what());
            } catch (const PreconditionError &e) {
                send_error(res, 412, "precondition_failed", e.what());
            } catch (const ValidationError &e) {
                send_error(res, 422, "invalid", e.what());
            } catch (const ConfigError &e) {
                send_error(res, 422, "invalid", e.what());
            } catch (const ParseError &e) {
                send_error(res, 422, "invalid", e.what());
            } catch (const IngestionError &e) {
                send_error(res, 422, "invalid", e.what());
            } catch (const DomainError &e) {
                send_error(res, 422, "invalid", e.what());
            } catch (const json::exception &e) {
                send_error(res, 422, "invalid", e.what());
            } catch (const std::exception &e) {
                send_error(res, 500, "internal", e.what());
            }
        };
    }

    void routes() {
        server.Get("/v1/health", [this](const httplib::Request &, httplib::Response &res) {
            send(res, 200, {{"status", "ok"}, {"seq", service.last_seq()}});
        });

        server.Get("/v1/patients", guarded([this](const auto &, auto &res) {
                       json out = json::array();
                       for (const auto &p : service.patients()) {
                           out.push_back(to_json(p));
                       }
                       send(res, 200, out);
                   }));

        server.Post("/v1/patients", guarded([this](const auto &req, auto &res) {
                        const auto profile = service.register_patient(profile_from_json(parse_body(req)));
                        send(res, 201, to_json(profile));
                    }));

        server.Get("/v1/patients/:id", guarded([this](const auto &req, auto &res) {
                       send(res, 200, to_json(service.patient(req.path_params.at("id"))));
                   }));

        server.Get("/v1/patients/:id/records", guarded([this](const auto &req, auto &res) {
                       json out = json::array();
                       for (const auto &r : service.records(req.path_params.at("id"))) {
                           out.push_back(to_json(r));
                       }
                       send(res, 200, out);
                   }));

        // A single record object, an array of them, or canonical CSV text.
        server.Post("/v1/patients/:id/records", guarded([this](const auto &req, auto &res) {
                        const auto &id = req.path_params.at("id");
                        std::vector<DailyRecord> records;
                        if (req.get_header_value("Content-Type").starts_with("text/csv")) {
                            records = parse_records(std::string_view{req.body});
                        } else {
                            const auto body = parse_body(req);
                            if (body.is_array()) {
                                for (const auto &r : body) {
                                    records.push_back(record_from_json(r));
                                }
                            } else {
                                records.push_back(record_from_json(body));
                            }
                        }
                        json acks = json::array();
                        for (const auto &r : records) {
                            const auto ack = service.ingest_record(id, r);
                            acks.push_back({{"date", r.date.iso()},
                                            {"seq", ack.seq},
                                            {"item_id", ack.item_id ? json(*ack.item_id) : json(nullptr)}});
                        }
                        send(res, 201, {{"ingested", acks}});
                    }));

        server.Post("/v1/patients/:id/suggestions", guarded([this](const auto &req, auto &res) {
                        const auto body = parse_body(req);
                        if (!body.contains("date")) {
                            throw ValidationError("suggestion request needs a 'date'");
                        }
                        const auto item = service.request_suggestion(
                            req.path_params.at("id"), date_param(body["date"].template get<std::string>()));
                        send(res, 201, to_json(item));
                    }));

        server.Get("/v1/patients/:id/messages/:date", guarded([this](const auto &req, auto &res) {
                       const auto msg = service.daily_message(req.path_params.at("id"),
                                                              date_param(req.path_params.at("date")));
                       send(res, 200, to_json(msg));
                   }));

        server.Get("/v1/patients/:id/penalties", guarded([this](const auto &req, auto &res) {
                       send(res, 200, to_json(service.next_penalties(req.path_params.at("id"))));
                   }));

        server.Get("/v1/review-queue", guarded([this](const auto &req, auto &res) {
                       std::optional<ItemStatus> status = ItemStatus::PendingReview;
                       if (req.has_param("status")) {
                           const auto s = req.get_param_value("status");
                           status = s == "all" ? std::nullopt : std::optional{item_status_from(s)};
                       }
                       std::optional<std::string> patient;
                       if (req.has_param("patient")) {
                           patient = req.get_param_value("patient");
                       }
                       json out = json::array();
                       for (const auto &item : service.review_queue(status, patient)) {
                           out.push_back(to_json(item));
                       }
                       send(res, 200, out);
                   }));

        server.Get("/v1/review-items/:id", guarded([this](const auto &req, auto &res) {
                       send(res, 200, to_json(service.item(req.path_params.at("id"))));
                   }));

        server.Post("/v1/review-items/:id/score", guarded([this](const auto &req, auto &res) {
                        const auto body = parse_body(req);
                        if (!body.contains("rating") || !body["rating"].is_string()) {
                            throw ValidationError("score needs a string 'rating'");
                        }
                        const Rating rating = rating_from(body["rating"].template get<std::string>());
                        std::vector<Term> flagged;
                        for (const auto &t : body.value("flagged", json::array())) {
                            flagged.push_back(term_from(t.template get<std::string>()));
                        }
                        std::map<Term, double> overrides;
                        if (body.contains("overrides")) {
                            const auto &o = body["overrides"];
                            const std::pair<const char *, Term> keys[] = {
                                {"m1", Term::Glucose}, {"m2", Term::Weight}, {"m3", Term::Ketone}};
                            for (const auto &[key, term] : keys) {
                                if (o.contains(key)) {
                                    overrides[term] = o[key].template get<double>();
                                }
                            }
                        }
                        const auto item =
                            service.score_item(req.path_params.at("id"), rating, flagged, overrides);
                        send(res, 200, to_json(item));
                    }));

        server.Post("/v1/review-items/:id/dispatch", guarded([this](const auto &req, auto &res) {
                        send(res, 200, to_json(service.dispatch_item(req.path_params.at("id"))));
                    }));

        server.Post("/v1/models/train", guarded([this](const auto &req, auto &res) {
                        const auto body = parse_body(req);
                        if (!body.contains("through")) {
                            throw ValidationError("training needs a 'through' date");
                        }
                        const auto report =
                            service.train_models(date_param(body["through"].template get<std::string>()));
                        send(res, 201, to_json(report));
                    }));

        server.Post("/v1/groups/:group/retrain", guarded([this](const auto &req, auto &res) {
                        const auto body = parse_body(req);
                        std::optional<Date> week_end;
                        if (body.contains("week_end")) {
                            week_end = date_param(body["week_end"].template get<std::string>());
                        }
                        const auto report =
                            service.retrain(group_param(req.path_params.at("group")), week_end);
                        send(res, report.cached ? 200 : 201, to_json(report));
                    }));

        server.Get("/v1/groups/:group/metrics", guarded([this](const auto &req, auto &res) {
                       const auto group = group_param(req.path_params.at("group"));
                       const auto report = service.metrics(group);
                       json j = to_json(report);
                       j["group"] = group.id();
                       send(res, 200, j);
                   }));

        server.Get("/v1/groups/:group/predictions", guarded([this](const auto &req, auto &res) {
                       json out = json::array();
                       for (const auto &p : service.predictions(group_param(req.path_params.at("group")))) {
                           out.push_back(prediction_json(p));
                       }
                       send(res, 200, out);
                   }));

        server.Get("/v1/groups/:group/model", guarded([this](const auto &req, auto &res) {
                       const auto group = group_param(req.path_params.at("group"));
                       const auto model = service.model(group);
                       if (!model) {
                           throw NotFoundError(fmt::format("no model for group {}", group.id()));
                       }
                       json j = model_summary(*model);
                       json retrains = json::array();
                       for (const auto &r : service.retrain_reports(group)) {
                           retrains.push_back(to_json(r));
                       }
                       j["retrains"] = retrains;
                       send(res, 200, j);
                   }));

        server.Get("/v1/boundaries/:diet", guarded([](const auto &req, auto &res) {
                       DietGroup diet;
                       try {
                           diet = diet_group_from(req.path_params.at("diet"));
                       } catch (const Error &) {
                           throw NotFoundError(
                               fmt::format("unknown diet group '{}'", req.path_params.at("diet")));
                       }
                       send(res, 200, to_json(boundary_table(diet)));
                   }));

        server.Get("/v1/config/penalty-lookup", guarded([this](const auto &, auto &res) {
                       send(res, 200, service.lookup().to_json());
                   }));

        server.Put("/v1/config/penalty-lookup", guarded([this](const auto &req, auto &res) {
                       send(res, 200, service.update_lookup(parse_body(req)).to_json());
                   }));

        server.Get("/v1/events", guarded([this](const auto &req, auto &res) {
                       std::uint64_t after = 0;
                       if (req.has_param("after")) {
                           try {
                               after = std::stoull(req.get_param_value("after"));
                           } catch (const std::exception &) {
                               throw ValidationError("'after' must be a sequence number");
                           }
                       }
                       json out = json::array();
                       for (const auto &e : service.events()) {
                           if (e.seq > after) {
                               out.push_back(to_json(e));
                           }
                       }
                       send(res, 200, out);
                   }));

        if (!service.config().console_dir.empty()) {
            server.set_mount_point("/", service.config().console_dir.string());
        }
        server.set_error_handler([](const httplib::Request &req, httplib::Response &res) {
            if (res.status == 404 && res.body.empty()) {
                send_error(res, 404, "not_found", fmt::format("no route for {} {}", req.method, req.path));
            }
        });
    }
};

HttpApi::HttpApi(Service &service) : impl_{std::make_unique<Impl>(service)} {}

HttpApi::~HttpApi() { stop(); }

bool HttpApi::listen(const std::string &host, int port) { return impl_->server.listen(host, port); }

int HttpApi::bind_any(const std::string &host) { return impl_->server.bind_to_any_port(host); }

bool HttpApi::serve() { return impl_->server.listen_after_bind(); }

void HttpApi::stop() {
    if (impl_ && impl_->server.is_running()) {
        impl_->server.stop();
    }
}

bool HttpApi::running() const { return impl_->server.is_running(); }

} // namespace onlc

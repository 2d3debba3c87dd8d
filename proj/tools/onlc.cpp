#include "onlc/cohort.hpp"
#include "onlc/errors.hpp"
#include "onlc/evaluation.hpp"
#include "onlc/http_api.hpp"
#include "onlc/service.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using nlohmann::json;

json read_json(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw onlc::ConfigError(fmt::format("cannot open {}", path));
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw onlc::ConfigError(fmt::format("{}: {}", path, e.what()));
    }
}

// Reads `reference,predicted` rows (header required, extra columns ignored).
std::vector<onlc::GridPoint> read_points(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw onlc::ParseError(1, "empty input");
    }
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            header.push_back(cell);
        }
    }
    const auto col = [&](std::string_view name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        throw onlc::ParseError(1, fmt::format("missing column '{}'", name));
    };
    const auto ref = col("reference");
    const auto pred = col("predicted");
    std::vector<onlc::GridPoint> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() <= std::max(ref, pred)) {
            throw onlc::ParseError(line_no, "too few cells");
        }
        try {
            points.push_back({std::stod(cells[ref]), std::stod(cells[pred])});
        } catch (const std::exception &) {
            throw onlc::ParseError(line_no, "malformed number");
        }
    }
    return points;
}

onlc::HttpApi *g_api = nullptr;

void on_signal(int) {
    if (g_api != nullptr) {
        g_api->stop();
    }
}

int run_trial_cmd(const std::string &config_path, std::uint64_t seed, const std::string &out_dir) {
    onlc::TrialConfig config;
    if (!config_path.empty()) {
        config = onlc::TrialConfig::from_json(read_json(config_path));
    }
    config.seed = seed;
    const auto result = onlc::run_trial(config);
    onlc::write_trial_outputs(result, out_dir);
    const auto summary = onlc::summary_json(result);
    std::cout << fmt::format("seed {}: zone A {:.4f}, weight change ai {:+.2f} / non-ai {:+.2f} lbs, "
                             "glucose in range ai {:.3f} / non-ai {:.3f}, {:.1f} s\n",
                             seed, summary["twin"]["zone_a_fraction"].get<double>(),
                             result.ai.mean_weight_change, result.non_ai.mean_weight_change,
                             result.ai.glucose_in_range, result.non_ai.glucose_in_range,
                             result.seconds);
    return result.audit_failures.empty() ? 0 : 3;
}

int serve_cmd(const std::string &config_path, int port, const std::string &host) {
    onlc::ServiceConfig config;
    if (!config_path.empty()) {
        config = onlc::ServiceConfig::from_json(read_json(config_path));
    }
    if (const char *dir = std::getenv("ONLC_DATA_DIR"); dir != nullptr && *dir != '\0') {
        config.data_dir = dir;
    }
    onlc::Service service{config};
    onlc::HttpApi api{service};
    g_api = &api;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << fmt::format("listening on {}:{} (events: {}, seq {})\n", host, port,
                             config.data_dir.empty() ? "memory" : config.data_dir.string(),
                             service.last_seq());
    const bool ok = api.listen(host, port);
    g_api = nullptr;
    if (!ok) {
        std::cerr << fmt::format("cannot listen on {}:{}\n", host, port);
        return 1;
    }
    return 0;
}

int clarke_cmd(const std::string &input, const std::string &output) {
    std::vector<onlc::GridPoint> points;
    if (input == "-") {
        points = read_points(std::cin);
    } else {
        std::ifstream in(input, std::ios::binary);
        if (!in) {
            throw onlc::ConfigError(fmt::format("cannot open {}", input));
        }
        points = read_points(in);
    }
    if (output == "-") {
        onlc::write_grid_csv(std::cout, points);
    } else {
        std::ofstream out(output, std::ios::binary);
        onlc::write_grid_csv(out, points);
    }
    std::cerr << onlc::to_json(onlc::zone_report(points)).dump() << '\n';
    return 0;
}

int replay_cmd(const std::string &data_dir) {
    onlc::ServiceConfig config;
    config.data_dir = data_dir;
    config.snapshot_every = 0;
    onlc::Service service{config};
    const auto events = service.events();
    const auto fresh = onlc::Service::replay(onlc::ServiceConfig{}, events);
    const bool same = fresh->state_json() == service.state_json();
    std::cout << fmt::format("{} events, replay {}\n", events.size(), same ? "identical" : "DIFFERS");
    return same ? 0 : 4;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Nutrition lifestyle controller: simulated trials and the review service"};
    app.require_subcommand(1);

    std::string trial_config;
    std::uint64_t seed = 1;
    std::string out_dir;
    auto *trial = app.add_subcommand("run-trial", "Run a simulated six-month trial");
    trial->add_option("--config", trial_config, "Trial configuration (JSON)");
    trial->add_option("--seed", seed, "Cohort and simulation seed");
    trial->add_option("--out", out_dir, "Output directory")->required();

    std::string serve_config;
    int port = 8080;
    std::string host = "127.0.0.1";
    auto *serve = app.add_subcommand("serve", "Serve the /v1 JSON API (ONLC_DATA_DIR overrides storage)");
    serve->add_option("--config", serve_config, "Service configuration (JSON)");
    serve->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
    serve->add_option("--host", host, "Bind address");

    std::string grid_in = "-";
    std::string grid_out = "-";
    auto *grid = app.add_subcommand("clarke-grid",
                                    "Classify reference,predicted CSV rows into Clarke zones");
    grid->add_option("--in", grid_in, "Input CSV, '-' for stdin");
    grid->add_option("--out", grid_out, "Output CSV, '-' for stdout");

    std::string replay_dir;
    auto *replay = app.add_subcommand("replay", "Rebuild state from an event log and compare");
    replay->add_option("--data-dir", replay_dir, "Event log root")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*trial) {
            return run_trial_cmd(trial_config, seed, out_dir);
        }
        if (*serve) {
            return serve_cmd(serve_config, port, host);
        }
        if (*grid) {
            return clarke_cmd(grid_in, grid_out);
        }
        if (*replay) {
            return replay_cmd(replay_dir);
        }
    } catch (const onlc::ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

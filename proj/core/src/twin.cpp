#include "onlc/twin.hpp"
#include "onlc/errors.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace onlc {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "net_carb", "fat",          "fiber",       "protein",    "activity_calories",
    "steps",    "prev_glucose", "prev_weight", "prev_ketone"};

constexpr std::array<std::string_view, kOutputCount> kOutputNames{"glucose", "weight_change",
                                                                  "ketone"};

constexpr std::size_t kWeightOutput = 1;
constexpr std::size_t kKetoneOutput = 2;

// Row-major training matrices in network (normalized) space.
struct Dataset {
    std::vector<double> inputs;
    std::vector<double> targets;
    std::vector<double> mask;
    std::size_t rows = 0;

    nn::BatchView view() const { return {inputs, targets, mask, rows}; }
};

Dataset build_dataset(const TwinModel &model, std::span<const TrainingPair> pairs,
                      std::span<const std::size_t> indices) {
    Dataset d;
    d.rows = indices.size();
    d.inputs.reserve(d.rows * kFeatureCount);
    d.targets.reserve(d.rows * kOutputCount);
    d.mask.reserve(d.rows * kOutputCount);
    for (auto idx : indices) {
        const auto &p = pairs[idx];
        const auto x = p.features.to_array();
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            d.inputs.push_back(model.input_norm.normalize(c, x[c]));
        }
        for (std::size_t k = 0; k < kOutputCount; ++k) {
            d.targets.push_back(p.mask[k] != 0.0 ? model.output_norm.normalize(k, p.targets[k])
                                                 : 0.0);
            d.mask.push_back(p.mask[k]);
        }
    }
    return d;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

struct TrainOutcome {
    std::size_t epochs = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

// Mini-batch gradient descent with momentum and early stopping on the
// validation split. The best parameters seen (including the starting point)
// are restored at the end.
TrainOutcome train_network(nn::Mlp &net, std::span<const TrainingPair> pairs,
                           const TwinModel &norms, double learning_rate, std::size_t max_epochs,
                           const TwinConfig &config, std::uint64_t seed) {
    std::mt19937_64 rng{seed};
    auto order = iota_indices(pairs.size());
    std::shuffle(order.begin(), order.end(), rng);

    auto val_count = static_cast<std::size_t>(
        std::floor(config.validation_fraction * static_cast<double>(pairs.size())));
    if (val_count >= pairs.size()) {
        val_count = 0;
    }
    const std::span<const std::size_t> val_idx{order.data(), val_count};
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(val_count),
                                       order.end());
    std::sort(train_idx.begin(), train_idx.end());

    const Dataset train = build_dataset(norms, pairs, train_idx);
    const Dataset val = build_dataset(norms, pairs, val_idx);
    const bool has_val = val.rows > 0;
    auto monitor = [&](const nn::Mlp &m) {
        return has_val ? m.loss(val.view()) : m.loss(train.view());
    };

    TrainOutcome out;
    out.train_loss = net.loss(train.view());
    double best = monitor(net);
    out.validation_loss = best;
    std::vector<double> best_params = net.parameters();
    std::size_t since_best = 0;

    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
    std::vector<double> velocity(net.parameter_count(), 0.0);
    std::vector<double> grad;
    std::vector<double> bx;
    std::vector<double> bt;
    std::vector<double> bm;
    auto epoch_order = iota_indices(train.rows);

    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        std::shuffle(epoch_order.begin(), epoch_order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < train.rows; start += batch) {
            const std::size_t rows = std::min(batch, train.rows - start);
            bx.resize(rows * kFeatureCount);
            bt.resize(rows * kOutputCount);
            bm.resize(rows * kOutputCount);
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t src = epoch_order[start + r];
                std::copy_n(train.inputs.begin() + static_cast<std::ptrdiff_t>(src * kFeatureCount),
                            kFeatureCount, bx.begin() + static_cast<std::ptrdiff_t>(r * kFeatureCount));
                std::copy_n(train.targets.begin() + static_cast<std::ptrdiff_t>(src * kOutputCount),
                            kOutputCount, bt.begin() + static_cast<std::ptrdiff_t>(r * kOutputCount));
                std::copy_n(train.mask.begin() + static_cast<std::ptrdiff_t>(src * kOutputCount),
                            kOutputCount, bm.begin() + static_cast<std::ptrdiff_t>(r * kOutputCount));
            }
            const double loss = net.loss_and_gradient({bx, bt, bm, rows}, grad);
            epoch_loss += loss * static_cast<double>(rows);
            for (std::size_t i = 0; i < velocity.size(); ++i) {
                velocity[i] = config.momentum * velocity[i] - learning_rate * grad[i];
            }
            net.add_to_parameters(velocity);
        }
        epoch_loss /= static_cast<double>(train.rows);
        out.epochs = epoch;
        if (!std::isfinite(epoch_loss)) {
            throw TrainingError(fmt::format("training diverged at epoch {}", epoch));
        }

        const double current = monitor(net);
        if (!std::isfinite(current)) {
            throw TrainingError(fmt::format("training diverged at epoch {}", epoch));
        }
        if (current < best) {
            best = current;
            best_params = net.parameters();
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    net.set_parameters(best_params);
    out.train_loss = net.loss(train.view());
    out.validation_loss = best;
    return out;
}

void require_architecture(const TwinModel &model, const TwinConfig &config) {
    std::vector<std::size_t> expected{kFeatureCount};
    expected.insert(expected.end(), config.hidden.begin(), config.hidden.end());
    expected.push_back(kOutputCount);
    if (model.network.widths() != expected) {
        throw IncompatibleModelError(
            fmt::format("model architecture {} does not match configured {}",
                        fmt::join(model.network.widths(), "-"), fmt::join(expected, "-")));
    }
}

std::optional<Date> latest_target(std::span<const TrainingPair> pairs,
                                  std::optional<Date> current) {
    for (const auto &p : pairs) {
        if (!current || *current < p.target_date) {
            current = p.target_date;
        }
    }
    return current;
}

// Copies `base` and continues training on `pairs`. The loss on `pairs` never
// increases relative to `base`.
TwinModel continue_training(const TwinModel &base, std::span<const TrainingPair> pairs,
                            const TwinConfig &config, std::uint64_t seed) {
    TwinModel model = base;
    model.previous.reset();
    const auto all = iota_indices(pairs.size());
    const Dataset full = build_dataset(model, pairs, all);
    const double before = model.network.loss(full.view());

    const auto outcome = train_network(model.network, pairs, model,
                                       config.finetune_learning_rate, config.finetune_epochs(),
                                       config, seed);
    const double after = model.network.loss(full.view());
    if (after > before) {
        model.network = base.network;
    }
    model.training.epochs = outcome.epochs;
    model.training.seed = seed;
    model.training.samples = pairs.size();
    model.training.train_loss = std::min(before, after);
    model.training.validation_loss = outcome.validation_loss;
    model.training.trained_through = latest_target(pairs, base.training.trained_through);
    return model;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

nlohmann::json normalizer_json(const Normalizer &n) {
    return {{"mean", n.mean}, {"scale", n.scale}};
}

nlohmann::json parameters_json(const TwinModel &m) {
    auto layers = nlohmann::json::array();
    for (const auto &layer : m.network.layers()) {
        layers.push_back({{"inputs", layer.inputs},
                          {"outputs", layer.outputs},
                          {"weights", layer.weights},
                          {"bias", layer.bias}});
    }
    return {{"layers", layers},
            {"input_norm", normalizer_json(m.input_norm)},
            {"output_norm", normalizer_json(m.output_norm)}};
}

} // namespace

// ---------------------------------------------------------------------------

std::array<double, kFeatureCount> FeatureVector::to_array() const {
    return {net_carb, fat, fiber, protein, activity_calories, steps, prev_glucose, prev_weight,
            prev_ketone};
}

FeatureVector FeatureVector::from_array(std::span<const double> v) {
    if (v.size() != kFeatureCount) {
        throw DomainError("feature vector needs 9 entries");
    }
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
}

FeatureVector FeatureVector::from_record(const DailyRecord &r) {
    return {r.at(Field::NetCarb),          r.at(Field::Fat),   r.at(Field::Fiber),
            r.at(Field::Protein),          r.at(Field::ActivityCalories),
            r.at(Field::Steps),            r.at(Field::Glucose), r.at(Field::Weight),
            r.at(Field::Ketone)};
}

bool FeatureVector::finite() const {
    const auto a = to_array();
    return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

const std::array<std::string_view, kFeatureCount> &feature_names() { return kFeatureNames; }

Normalizer Normalizer::fit(std::span<const double> rows, std::size_t columns,
                           std::span<const double> mask) {
    if (columns == 0 || rows.size() % columns != 0 || (!mask.empty() && mask.size() != rows.size())) {
        throw DomainError("Normalizer::fit: shape mismatch");
    }
    const std::size_t n = rows.size() / columns;
    Normalizer out;
    out.mean.assign(columns, 0.0);
    out.scale.assign(columns, 1.0);
    for (std::size_t c = 0; c < columns; ++c) {
        double sum = 0.0;
        double count = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (mask.empty() || mask[r * columns + c] != 0.0) {
                sum += rows[r * columns + c];
                count += 1.0;
            }
        }
        if (count == 0.0) {
            continue;
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (mask.empty() || mask[r * columns + c] != 0.0) {
                const double d = rows[r * columns + c] - mean;
                ss += d * d;
            }
        }
        const double sd = std::sqrt(ss / count);
        out.mean[c] = mean;
        out.scale[c] = sd > 1e-8 * std::max(1.0, std::abs(mean)) ? sd : 0.0;
    }
    return out;
}

std::vector<TrainingPair> make_pairs(std::span<const PatientSeries> series,
                                     std::optional<Date> first_target,
                                     std::optional<Date> last_target) {
    std::vector<TrainingPair> pairs;
    for (const auto &s : series) {
        for (std::size_t i = 0; i + 1 < s.records.size(); ++i) {
            const auto &today = s.records[i];
            const auto &next = s.records[i + 1];
            if (next.date - today.date != 1) {
                continue;
            }
            if ((first_target && next.date < *first_target) ||
                (last_target && *last_target < next.date)) {
                continue;
            }
            const bool features_ok =
                std::all_of(kAllFields.begin(), kAllFields.end(), [&](Field f) {
                    return f == Field::IntakeCalories || today.has(f);
                });
            if (!features_ok || !next.has(Field::Glucose) || !next.has(Field::Weight)) {
                continue;
            }
            TrainingPair p;
            p.patient_id = s.patient_id;
            p.target_date = next.date;
            p.features = FeatureVector::from_record(today);
            p.targets[0] = next.at(Field::Glucose);
            p.targets[kWeightOutput] = next.at(Field::Weight) - today.at(Field::Weight);
            if (next.observed(Field::Ketone)) {
                p.targets[kKetoneOutput] = next.at(Field::Ketone);
            } else {
                p.mask[kKetoneOutput] = 0.0;
            }
            pairs.push_back(std::move(p));
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const TrainingPair &a, const TrainingPair &b) {
        return std::tie(a.patient_id, a.target_date) < std::tie(b.patient_id, b.target_date);
    });
    return pairs;
}

TwinModel pretrain(std::span<const PatientSeries> pooled, const TwinConfig &config) {
    const auto pairs = make_pairs(pooled);
    return pretrain_pairs(pairs, config);
}

TwinModel pretrain_pairs(std::span<const TrainingPair> pairs, const TwinConfig &config) {
    if (pairs.empty()) {
        throw TrainingError("no trainable day pairs in the pooled dataset");
    }
    if (config.hidden.size() != 3) {
        throw ConfigError("the twin uses exactly three hidden layers");
    }
    std::vector<std::size_t> widths{kFeatureCount};
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(kOutputCount);

    TwinModel model;
    model.network = nn::Mlp::glorot(widths, config.seed);
    model.provenance = Provenance{ProvenanceKind::PooledPretrained, std::nullopt, {}};

    // Normalization comes from the training split only; reproduce the split
    // the trainer will draw.
    std::mt19937_64 split_rng{config.seed ^ 0x9e3779b97f4a7c15ull};
    const std::uint64_t train_seed = split_rng();
    {
        std::mt19937_64 rng{train_seed};
        auto order = iota_indices(pairs.size());
        std::shuffle(order.begin(), order.end(), rng);
        auto val_count = static_cast<std::size_t>(
            std::floor(config.validation_fraction * static_cast<double>(pairs.size())));
        if (val_count >= pairs.size()) {
            val_count = 0;
        }
        std::vector<double> x;
        std::vector<double> y;
        std::vector<double> m;
        for (std::size_t i = val_count; i < order.size(); ++i) {
            const auto &p = pairs[order[i]];
            const auto f = p.features.to_array();
            x.insert(x.end(), f.begin(), f.end());
            y.insert(y.end(), p.targets.begin(), p.targets.end());
            m.insert(m.end(), p.mask.begin(), p.mask.end());
        }
        model.input_norm = Normalizer::fit(x, kFeatureCount);
        model.output_norm = Normalizer::fit(y, kOutputCount, m);
    }

    const auto outcome = train_network(model.network, pairs, model,
                                       config.pretrain_learning_rate, config.max_epochs, config,
                                       train_seed);
    model.training.epochs = outcome.epochs;
    model.training.seed = config.seed;
    model.training.samples = pairs.size();
    model.training.train_loss = outcome.train_loss;
    model.training.validation_loss = outcome.validation_loss;
    model.training.trained_through = latest_target(pairs, std::nullopt);
    model.training.last_retrain = model.training.trained_through;
    return model;
}

TwinModel finetune(const TwinModel &pretrained, std::span<const PatientSeries> group_records,
                   GroupKey group, const TwinConfig &config) {
    const auto pairs = make_pairs(group_records);
    return finetune_pairs(pretrained, pairs, group, config);
}

TwinModel finetune_pairs(const TwinModel &pretrained, std::span<const TrainingPair> pairs,
                         GroupKey group, const TwinConfig &config) {
    require_architecture(pretrained, config);
    if (pairs.empty()) {
        throw TrainingError("no trainable day pairs for fine-tuning");
    }
    TwinModel model = continue_training(pretrained, pairs, config, config.seed);
    model.provenance.kind = ProvenanceKind::FineTuned;
    model.provenance.group = group;
    model.provenance.pretrained_fingerprint =
        pretrained.provenance.kind == ProvenanceKind::PooledPretrained
            ? pretrained.fingerprint()
            : pretrained.provenance.pretrained_fingerprint;
    model.training.last_retrain = model.training.trained_through;
    return model;
}

TwinModel weekly_retrain(const TwinModel &model, Date week_end,
                         std::span<const PatientSeries> week_records, const TwinConfig &config) {
    require_architecture(model, config);
    const Date context_day = week_end - 7;
    if (model.training.trained_through && context_day < *model.training.trained_through) {
        throw OverlapError(fmt::format("week ending {} overlaps training through {}",
                                       week_end.iso(), model.training.trained_through->iso()));
    }
    for (const auto &s : week_records) {
        for (const auto &r : s.records) {
            if (r.date < context_day || week_end < r.date) {
                throw DomainError(fmt::format("record {} lies outside the week ending {}",
                                              r.date.iso(), week_end.iso()));
            }
        }
    }
    const auto pairs = make_pairs(week_records, week_end - 6, week_end);

    TwinModel next;
    if (pairs.empty()) {
        next = model;
        next.previous.reset();
    } else {
        // Seed varies per week so repeated retrains do not reuse one shuffle.
        const std::uint64_t seed =
            config.seed + static_cast<std::uint64_t>(week_end.serial()) * 0x9e3779b9ull;
        next = continue_training(model, pairs, config, seed);
    }
    next.training.trained_through = week_end;
    next.training.last_retrain = week_end;
    next.previous = std::make_shared<const TwinModel>(model);
    return next;
}

PredictedOutcome predict(const TwinModel &model, const FeatureVector &features) {
    if (!features.finite()) {
        throw DomainError("predict: non-finite feature");
    }
    const auto raw = features.to_array();
    std::array<double, kFeatureCount> z{};
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
        z[c] = model.input_norm.normalize(c, raw[c]);
    }
    std::array<double, kOutputCount> y{};
    model.network.forward(z, y);
    PredictedOutcome out;
    out.glucose = model.output_norm.denormalize(0, y[0]);
    out.weight = features.prev_weight + model.output_norm.denormalize(kWeightOutput, y[kWeightOutput]);
    out.ketone = model.output_norm.denormalize(kKetoneOutput, y[kKetoneOutput]);
    return out;
}

double evaluate_loss(const TwinModel &model, std::span<const TrainingPair> pairs) {
    if (pairs.empty()) {
        throw DomainError("evaluate_loss: no pairs");
    }
    const auto idx = iota_indices(pairs.size());
    const Dataset d = build_dataset(model, pairs, idx);
    return model.network.loss(d.view());
}

Plant make_plant(std::shared_ptr<const TwinModel> model) {
    return [model = std::move(model)](const FeatureVector &f) { return predict(*model, f); };
}

// ---------------------------------------------------------------------------

std::string TwinModel::fingerprint() const {
    return fmt::format("{:016x}", fnv1a(parameters_json(*this).dump()));
}

bool TwinModel::same_parameters(const TwinModel &other) const {
    return network == other.network && input_norm == other.input_norm &&
           output_norm == other.output_norm && provenance == other.provenance &&
           training == other.training;
}

nlohmann::json TwinModel::to_json() const {
    nlohmann::json j = parameters_json(*this);
    j["format"] = "onlc-twin";
    j["version"] = 1;
    j["feature_schema"] = kFeatureSchemaVersion;
    j["features"] = kFeatureNames;
    j["outputs"] = kOutputNames;
    j["activation"] = "tanh";
    j["weight_output"] = "change";
    nlohmann::json prov{{"kind", provenance.kind == ProvenanceKind::PooledPretrained
                                     ? "pooled-pretrained"
                                     : "fine-tuned"}};
    if (provenance.group) {
        prov["group"] = provenance.group->id();
    }
    if (!provenance.pretrained_fingerprint.empty()) {
        prov["pretrained_fingerprint"] = provenance.pretrained_fingerprint;
    }
    j["provenance"] = prov;
    nlohmann::json t{{"epochs", training.epochs},
                     {"seed", training.seed},
                     {"samples", training.samples},
                     {"train_loss", training.train_loss},
                     {"validation_loss", training.validation_loss}};
    if (training.trained_through) {
        t["trained_through"] = training.trained_through->iso();
    }
    if (training.last_retrain) {
        t["last_retrain"] = training.last_retrain->iso();
    }
    j["training"] = t;
    return j;
}

TwinModel TwinModel::from_json(const nlohmann::json &j) {
    try {
        if (j.at("format") != "onlc-twin" || j.at("version") != 1) {
            throw ValidationError("not an onlc-twin v1 document");
        }
        if (j.at("feature_schema") != kFeatureSchemaVersion) {
            throw IncompatibleModelError("unsupported feature schema version");
        }
        TwinModel m;
        for (const auto &lj : j.at("layers")) {
            nn::DenseLayer layer;
            layer.inputs = lj.at("inputs").get<std::size_t>();
            layer.outputs = lj.at("outputs").get<std::size_t>();
            layer.weights = lj.at("weights").get<std::vector<double>>();
            layer.bias = lj.at("bias").get<std::vector<double>>();
            if (layer.weights.size() != layer.inputs * layer.outputs ||
                layer.bias.size() != layer.outputs) {
                throw ValidationError("layer shape mismatch");
            }
            m.network.layers().push_back(std::move(layer));
        }
        const auto widths = m.network.widths();
        if (widths.size() != 5 || widths.front() != kFeatureCount || widths.back() != kOutputCount) {
            throw IncompatibleModelError("twin documents must have three hidden layers");
        }
        for (std::size_t l = 1; l < m.network.layers().size(); ++l) {
            if (m.network.layers()[l].inputs != m.network.layers()[l - 1].outputs) {
                throw ValidationError("layers do not chain");
            }
        }
        auto norm = [](const nlohmann::json &nj, std::size_t n) {
            Normalizer out{nj.at("mean").get<std::vector<double>>(),
                           nj.at("scale").get<std::vector<double>>()};
            if (out.mean.size() != n || out.scale.size() != n) {
                throw ValidationError("normalizer size mismatch");
            }
            return out;
        };
        m.input_norm = norm(j.at("input_norm"), kFeatureCount);
        m.output_norm = norm(j.at("output_norm"), kOutputCount);
        const auto &prov = j.at("provenance");
        m.provenance.kind = prov.at("kind") == "fine-tuned" ? ProvenanceKind::FineTuned
                                                            : ProvenanceKind::PooledPretrained;
        if (prov.contains("group")) {
            m.provenance.group = GroupKey::parse(prov["group"].get<std::string>());
        }
        m.provenance.pretrained_fingerprint = prov.value("pretrained_fingerprint", "");
        const auto &t = j.at("training");
        m.training.epochs = t.at("epochs").get<std::size_t>();
        m.training.seed = t.at("seed").get<std::uint64_t>();
        m.training.samples = t.at("samples").get<std::size_t>();
        m.training.train_loss = t.at("train_loss").get<double>();
        m.training.validation_loss = t.at("validation_loss").get<double>();
        if (t.contains("trained_through")) {
            m.training.trained_through = Date::parse(t["trained_through"].get<std::string>());
        }
        if (t.contains("last_retrain")) {
            m.training.last_retrain = Date::parse(t["last_retrain"].get<std::string>());
        }
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(fmt::format("invalid twin document: {}", e.what()));
    }
}

nlohmann::json to_json(const TwinConfig &c) {
    return {{"hidden", c.hidden},
            {"pretrain_learning_rate", c.pretrain_learning_rate},
            {"finetune_learning_rate", c.finetune_learning_rate},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"validation_fraction", c.validation_fraction},
            {"max_epochs", c.max_epochs},
            {"finetune_max_epochs", c.finetune_max_epochs},
            {"patience", c.patience},
            {"seed", c.seed}};
}

TwinConfig twin_config_from_json(const nlohmann::json &j) {
    TwinConfig c;
    try {
        c.hidden = j.value("hidden", c.hidden);
        c.pretrain_learning_rate = j.value("pretrain_learning_rate", c.pretrain_learning_rate);
        c.finetune_learning_rate = j.value("finetune_learning_rate", c.finetune_learning_rate);
        c.momentum = j.value("momentum", c.momentum);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.finetune_max_epochs = j.value("finetune_max_epochs", c.finetune_max_epochs);
        c.patience = j.value("patience", c.patience);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(fmt::format("invalid twin config: {}", e.what()));
    }
    if (c.hidden.size() != 3) {
        throw ConfigError("twin config: exactly three hidden layers required");
    }
    if (!(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0) || c.batch_size == 0) {
        throw ConfigError("twin config: invalid validation fraction or batch size");
    }
    return c;
}

} // namespace onlc

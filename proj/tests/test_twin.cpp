#include "onlc/errors.hpp"
#include "onlc/twin.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace onlc;

namespace {

// Toy ground truth for the twin: a linear glucose recursion with an optional
// additive drift, energy-balance weight and a saturating ketone response.
struct Generator {
    double noise = 3.0;
    double drift_per_day = 0.0;
    int drift_start = 1 << 30;

    double glucose_next(const DailyRecord &r, int day, double z) const {
        const double drift = day >= drift_start ? drift_per_day * (day - drift_start + 1) : 0.0;
        return 45 + 0.12 * r.at(Field::NetCarb) - 1.5 * r.at(Field::Steps) / 1000 -
               0.3 * r.at(Field::Fiber) + 0.6 * r.at(Field::Glucose) + drift + noise * z;
    }
};

std::vector<PatientSeries> simulate(const Generator &gen, int patients, int first_day, int days,
                                    std::uint64_t seed) {
    std::vector<PatientSeries> out;
    for (int p = 0; p < patients; ++p) {
        std::mt19937_64 rng{seed * 1000 + static_cast<std::uint64_t>(p)};
        std::normal_distribution<double> z;
        std::uniform_real_distribution<double> u{0.0, 1.0};
        PatientSeries s;
        s.patient_id = "p" + std::to_string(p);
        // Burn in from day 0 so every window starts from the same trajectory.
        double g = 150;
        double w = 220 + 10 * p;
        double k = 0.4;
        for (int d = 0; d < first_day + days; ++d) {
            DailyRecord r{Date{2023, 1, 2} + d};
            const double carb = 40 + 200 * u(rng);
            const double fat = 50 + 100 * u(rng);
            const double protein = 60 + 50 * u(rng);
            r.set(Field::NetCarb, carb);
            r.set(Field::Fat, fat);
            r.set(Field::Fiber, 10 + 20 * u(rng));
            r.set(Field::Protein, protein);
            r.set(Field::IntakeCalories, macro_calories(carb, fat, protein));
            r.set(Field::ActivityCalories, 300 + 500 * u(rng));
            r.set(Field::Steps, 2000 + 8000 * u(rng));
            r.set(Field::Glucose, g);
            r.set(Field::Weight, w);
            r.set(Field::Ketone, k);
            const double ratio = keto_ratio(carb, fat, protein);
            const double gz = z(rng);
            const double wz = z(rng);
            g = std::clamp(gen.glucose_next(r, d, gz), 40.0, 600.0);
            w += (r.at(Field::IntakeCalories) - r.at(Field::ActivityCalories) - 1500) / 3500 + 0.05 * wz;
            k = std::max(0.05, k + 0.5 * (0.1 + 3.2 * ratio * ratio / (ratio * ratio + 1) - k));
            if (d >= first_day) {
                s.records.push_back(r);
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

TwinConfig quick_config() {
    TwinConfig c;
    c.max_epochs = 400;
    c.patience = 40;
    return c;
}

double glucose_rmse(const TwinModel &m, std::span<const TrainingPair> pairs) {
    double ss = 0.0;
    for (const auto &p : pairs) {
        const double e = predict(m, p.features).glucose - p.targets[0];
        ss += e * e;
    }
    return std::sqrt(ss / static_cast<double>(pairs.size()));
}

} // namespace

TEST_CASE("pairs join consecutive days and mask unobserved ketone") {
    auto series = simulate(Generator{}, 1, 0, 5, 1);
    auto &recs = series[0].records;
    recs[3].set(Field::Ketone, recs[3].at(Field::Ketone), Origin::Imputed);
    recs.erase(recs.begin() + 1); // gap: day 0 has no successor
    const auto pairs = make_pairs(series);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].target_date == recs[2].date);
    CHECK(pairs[0].mask[2] == 0.0);
    CHECK(pairs[1].mask[2] == 1.0);
    CHECK(pairs[1].targets[1] == recs[3].at(Field::Weight) - recs[2].at(Field::Weight));
    CHECK(make_pairs(series, recs[3].date).size() == 1);
    CHECK(make_pairs(series, std::nullopt, recs[2].date).size() == 1);
}

TEST_CASE("normalization round-trips and ignores masked entries") {
    std::mt19937_64 rng{2};
    std::normal_distribution<double> z{50.0, 20.0};
    std::vector<double> rows(3 * 40);
    for (auto &v : rows) {
        v = z(rng);
    }
    const auto n = Normalizer::fit(rows, 3);
    for (double x : rows) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(n.denormalize(c, n.normalize(c, x)) == doctest::Approx(x).epsilon(1e-9));
        }
    }
    std::vector<double> data{1, 100, 3, 100, 5, 7};
    std::vector<double> mask{1, 1, 1, 1, 1, 0};
    const auto masked = Normalizer::fit(data, 2, mask);
    CHECK(masked.mean[0] == 3.0);
    CHECK(masked.mean[1] == 100.0);
    CHECK(masked.scale[1] == 0.0);
    CHECK(masked.normalize(1, 100.0) == 0.0);
    CHECK(masked.denormalize(1, 0.7) == 100.0);
}

TEST_CASE("pre-training recovers a linear map to within twice the noise floor") {
    std::mt19937_64 rng{21};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    std::normal_distribution<double> z;
    const double sg = 4.0, sw = 0.2, sk = 0.1;
    auto make = [&](int n) {
        std::vector<TrainingPair> pairs;
        for (int i = 0; i < n; ++i) {
            TrainingPair p;
            p.patient_id = "lin";
            p.target_date = Date{2023, 1, 1} + i;
            p.features = {20 + 250 * u(rng), 30 + 150 * u(rng), 5 + 30 * u(rng), 50 + 80 * u(rng),
                          200 + 600 * u(rng), 1000 + 12000 * u(rng), 80 + 120 * u(rng),
                          180 + 80 * u(rng), 0.1 + 2 * u(rng)};
            const auto &f = p.features;
            p.targets[0] = 30 + 0.15 * f.net_carb - 1.2 * f.steps / 1000 + 0.55 * f.prev_glucose + sg * z(rng);
            p.targets[1] = 0.004 * (f.fat - 100) - 0.001 * (f.activity_calories - 400) + sw * z(rng);
            p.targets[2] = 0.2 + 0.3 * f.prev_ketone + 0.004 * f.fat + sk * z(rng);
            pairs.push_back(p);
        }
        return pairs;
    };
    const auto train = make(800);
    const auto test = make(200);
    TwinConfig config;
    config.max_epochs = 600;
    config.patience = 60;
    const auto model = pretrain_pairs(train, config);
    CHECK(model.provenance.kind == ProvenanceKind::PooledPretrained);
    CHECK(model.training.train_loss < 1.0);

    double eg = 0, ew = 0, ek = 0;
    for (const auto &p : test) {
        const auto y = predict(model, p.features);
        eg += std::pow(y.glucose - p.targets[0], 2);
        ew += std::pow(y.weight - p.features.prev_weight - p.targets[1], 2);
        ek += std::pow(y.ketone - p.targets[2], 2);
    }
    const double n = static_cast<double>(test.size());
    CHECK(std::sqrt(eg / n) <= 2 * sg);
    CHECK(std::sqrt(ew / n) <= 2 * sw);
    CHECK(std::sqrt(ek / n) <= 2 * sk);
}

TEST_CASE("a constant target is learned to within 1e-3") {
    auto series = simulate(Generator{}, 1, 0, 40, 3);
    for (auto &r : series[0].records) {
        r.set(Field::Glucose, 120);
        r.set(Field::Weight, 200);
        r.set(Field::Ketone, 0.5);
    }
    TwinConfig config;
    const auto model = pretrain(series, config);
    for (const auto &p : make_pairs(series)) {
        const auto y = predict(model, p.features);
        CHECK(std::abs(y.glucose - 120) <= 1e-3);
        CHECK(std::abs(y.weight - 200) <= 1e-3);
        CHECK(std::abs(y.ketone - 0.5) <= 1e-3);
    }
}

TEST_CASE("training is deterministic and independent of storage order") {
    const auto series = simulate(Generator{}, 3, 0, 30, 4);
    const auto config = quick_config();
    const auto a = pretrain(series, config);
    const auto b = pretrain(series, config);
    CHECK(a.same_parameters(b));
    CHECK(a.fingerprint() == b.fingerprint());

    auto shuffled = series;
    std::reverse(shuffled.begin(), shuffled.end());
    for (auto &s : shuffled) {
        std::reverse(s.records.begin(), s.records.end());
        std::sort(s.records.begin(), s.records.end(),
                  [](const DailyRecord &x, const DailyRecord &y) { return x.date < y.date; });
    }
    const auto c = pretrain(shuffled, config);
    CHECK(c.same_parameters(a));

    auto other = config;
    other.seed = 2;
    CHECK_FALSE(pretrain(series, other).same_parameters(a));
}

TEST_CASE("pre-training lowers the loss from initialization") {
    const auto series = simulate(Generator{}, 3, 0, 30, 5);
    auto config = quick_config();
    const auto pairs = make_pairs(series);
    const auto trained = pretrain_pairs(pairs, config);
    config.max_epochs = 0;
    const auto untrained = pretrain_pairs(pairs, config);
    CHECK(evaluate_loss(trained, pairs) < evaluate_loss(untrained, pairs));
}

TEST_CASE("pre-training rejects empty data and bad architectures") {
    CHECK_THROWS_AS(pretrain(std::vector<PatientSeries>{}, TwinConfig{}), TrainingError);
    auto series = simulate(Generator{}, 1, 0, 1, 1);
    CHECK_THROWS_AS(pretrain(series, TwinConfig{}), TrainingError);
    auto config = TwinConfig{};
    config.hidden = {8, 8};
    CHECK_THROWS_AS(pretrain(simulate(Generator{}, 1, 0, 5, 1), config), ConfigError);
}

TEST_CASE("an overfit model reproduces the example forecast") {
    // The suggestion of the worked example and a cluster around it, with a
    // smooth target surface passing through the printed forecast.
    const FeatureVector centre{30, 135, 25, 60, 1008, 6000, 134, 199.2, 0.2};
    std::mt19937_64 rng{6};
    std::uniform_real_distribution<double> j{-1.0, 1.0};
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 120; ++i) {
        TrainingPair p;
        p.patient_id = "a3";
        p.target_date = Date{2023, 1, 1} + i;
        auto f = centre;
        if (i > 0) {
            f.net_carb += 5 * j(rng);
            f.fat += 15 * j(rng);
            f.protein += 8 * j(rng);
            f.steps += 800 * j(rng);
            f.prev_glucose += 10 * j(rng);
        }
        p.features = f;
        p.targets[0] = 110 + 0.8 * (f.net_carb - 30) - 0.002 * (f.steps - 6000) + 0.3 * (f.prev_glucose - 134);
        p.targets[1] = -1.6 + 0.005 * (f.fat - 135);
        p.targets[2] = 2.4 + 0.01 * (f.fat - 135) - 0.02 * (f.net_carb - 30);
        pairs.push_back(p);
    }
    TwinConfig config;
    config.pretrain_learning_rate = 5e-3;
    config.patience = 200;
    const auto model = pretrain_pairs(pairs, config);
    const auto y = predict(model, centre);
    CHECK(std::abs(y.glucose - 110) <= 1.0);
    CHECK(std::abs(y.ketone - 2.4) <= 0.1);
    CHECK(std::abs(y.weight - 197.6) <= 0.5);
}

TEST_CASE("prediction is pure and zero normalized input yields the output bias") {
    const auto series = simulate(Generator{}, 2, 0, 20, 7);
    auto model = pretrain(series, quick_config());
    const FeatureVector f{40, 100, 20, 80, 500, 6000, 140, 210, 0.4};
    CHECK(predict(model, f) == predict(model, f));

    auto &layers = model.network.layers();
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        std::fill(layers[l].bias.begin(), layers[l].bias.end(), 0.0);
    }
    const auto mean = FeatureVector::from_array(model.input_norm.mean);
    const auto y = predict(model, mean);
    const auto &b = layers.back().bias;
    CHECK(y.glucose == doctest::Approx(model.output_norm.denormalize(0, b[0])).epsilon(1e-12));
    CHECK(y.weight - mean.prev_weight ==
          doctest::Approx(model.output_norm.denormalize(1, b[1])).epsilon(1e-9));
    CHECK(y.ketone == doctest::Approx(model.output_norm.denormalize(2, b[2])).epsilon(1e-12));

    auto bad = f;
    bad.fat = std::nan("");
    CHECK_THROWS_AS(predict(model, bad), DomainError);
    bad.fat = INFINITY;
    CHECK_THROWS_AS(predict(model, bad), DomainError);
}

TEST_CASE("fine-tuning starts from the prior and never loses ground on the group") {
    const auto pooled = simulate(Generator{}, 4, 0, 30, 8);
    const auto config = quick_config();
    const auto base = pretrain(pooled, config);
    const auto snapshot = base;
    const GroupKey group{DietGroup::LowFat, ConditionGroup::ObeseKidneyT2D};
    const std::vector<PatientSeries> members(pooled.begin(), pooled.begin() + 2);

    const auto tuned = finetune(base, members, group, config);
    CHECK(base.same_parameters(snapshot));
    CHECK(tuned.provenance.kind == ProvenanceKind::FineTuned);
    CHECK(tuned.provenance.group == group);
    CHECK(tuned.provenance.pretrained_fingerprint == base.fingerprint());
    const auto pairs = make_pairs(members);
    CHECK(evaluate_loss(tuned, pairs) <= evaluate_loss(base, pairs));

    // Re-tuning a tuned model keeps pointing at the pooled origin.
    const auto again = finetune(tuned, members, group, config);
    CHECK(again.provenance.pretrained_fingerprint == base.fingerprint());

    // Fine-tuning on the pooled set itself.
    const auto all_pairs = make_pairs(pooled);
    const auto self = finetune(base, pooled, group, config);
    CHECK(evaluate_loss(self, all_pairs) <= evaluate_loss(base, all_pairs));
}

TEST_CASE("zero fine-tune epochs leave the network untouched") {
    const auto pooled = simulate(Generator{}, 2, 0, 20, 9);
    const auto base = pretrain(pooled, quick_config());
    TwinConfig config = quick_config();
    config.max_epochs = 0;
    const auto tuned = finetune(base, pooled, GroupKey{}, config);
    CHECK(tuned.network == base.network);
    CHECK(tuned.input_norm == base.input_norm);
    CHECK(tuned.output_norm == base.output_norm);
}

TEST_CASE("fine-tuning checks the architecture and the data") {
    const auto pooled = simulate(Generator{}, 2, 0, 20, 10);
    const auto base = pretrain(pooled, quick_config());
    auto other = quick_config();
    other.hidden = {16, 16, 8};
    CHECK_THROWS_AS(finetune(base, pooled, GroupKey{}, other), IncompatibleModelError);
    CHECK_THROWS_AS(finetune(base, std::vector<PatientSeries>{}, GroupKey{}, quick_config()),
                    TrainingError);
}

TEST_CASE("model JSON is byte-stable and restores the same parameters") {
    const auto pooled = simulate(Generator{}, 2, 0, 20, 11);
    const auto base = pretrain(pooled, quick_config());
    const auto tuned = finetune(base, pooled, GroupKey{DietGroup::Keto, ConditionGroup::ObeseT2D},
                                quick_config());
    for (const auto *m : {&base, &tuned}) {
        const auto doc = m->to_json();
        const auto back = TwinModel::from_json(doc);
        CHECK(back.same_parameters(*m));
        CHECK(back.fingerprint() == m->fingerprint());
        CHECK(back.to_json().dump() == doc.dump());
    }
}

TEST_CASE("weekly retraining advances the date and keeps the history") {
    const auto history = simulate(Generator{}, 3, 0, 28, 12);
    const auto config = quick_config();
    const auto base = pretrain(history, config);
    const Date through = *base.training.trained_through;

    const Date week_end = through + 7;
    const auto week = simulate(Generator{}, 3, 27, 8, 12);
    const auto next = weekly_retrain(base, week_end, week, config);
    CHECK(next.training.last_retrain == week_end);
    CHECK(next.training.trained_through == week_end);
    REQUIRE(next.previous != nullptr);
    CHECK(next.previous->same_parameters(base));
    CHECK(weekly_retrain(base, week_end, week, config).same_parameters(next));

    CHECK_THROWS_AS(weekly_retrain(next, week_end, week, config), OverlapError);
    CHECK_THROWS_AS(weekly_retrain(next, week_end + 3, {}, config), OverlapError);

    const auto empty = weekly_retrain(next, week_end + 7, {}, config);
    CHECK(empty.network == next.network);
    CHECK(empty.training.last_retrain == week_end + 7);

    const auto stray = simulate(Generator{}, 1, 0, 30, 1);
    CHECK_THROWS_AS(weekly_retrain(next, week_end + 7, stray, config), DomainError);
}

TEST_CASE("weekly retraining tracks a drifting patient better than a frozen model") {
    Generator gen;
    gen.noise = 2.0;
    gen.drift_per_day = 0.8;
    const int observation = 84;
    gen.drift_start = observation;
    const int patients = 3;
    const auto config = TwinConfig{};

    const auto history = simulate(gen, patients, 0, observation, 13);
    const auto frozen = pretrain(history, config);
    auto model = frozen;

    int better = 0;
    for (int k = 1; k <= 12; ++k) {
        // Retrain on the previous week (plus its context day), then score the next one.
        const int prev_start = observation + 7 * (k - 1);
        const auto prev_week = simulate(gen, patients, prev_start - 1, 8, 13);
        model = weekly_retrain(model, prev_week[0].records.back().date, prev_week, config);

        const auto next_week = simulate(gen, patients, prev_start + 6, 8, 13);
        const auto pairs = make_pairs(next_week);
        REQUIRE(pairs.size() == 7 * patients);
        const double adapted = glucose_rmse(model, pairs);
        const double stale = glucose_rmse(frozen, pairs);
        MESSAGE("week " << k << ": retrained " << adapted << " frozen " << stale);
        better += adapted < stale ? 1 : 0;
    }
    CHECK(better >= 9);
}

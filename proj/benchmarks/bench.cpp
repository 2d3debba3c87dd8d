#include "onlc/cohort.hpp"
#include "onlc/controller.hpp"
#include "onlc/errors.hpp"
#include "onlc/evaluation.hpp"
#include "onlc/messaging.hpp"
#include "onlc/mlp.hpp"
#include "onlc/pso.hpp"
#include "onlc/twin.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace onlc;

namespace {

const Date kStart{2023, 1, 2};

struct Fixture {
    std::vector<SyntheticPatient> cohort;
    std::vector<PatientSeries> series;
    Plant plant;
};

// A lightly trained pooled twin; accuracy is irrelevant to timing.
const Fixture &fixture() {
    static const Fixture f = [] {
        Fixture out;
        out.cohort = generate_cohort(8, 3);
        out.series = simulate_habitual(out.cohort, kStart, 40);
        TwinConfig config;
        config.max_epochs = 30;
        out.plant = make_plant(std::make_shared<const TwinModel>(pretrain(out.series, config)));
        return out;
    }();
    return f;
}

void BM_MlpForward(benchmark::State &state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const std::vector<std::size_t> widths{10, width, width, width, 3};
    const auto net = nn::Mlp::glorot(widths, 7);
    std::vector<double> in(10, 0.5), out(3);
    for (auto _ : state) {
        net.forward(in, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_MlpForward)->Arg(16)->Arg(64)->Arg(256);

void BM_PsoSphere(benchmark::State &state) {
    const std::vector<Bounds> box(6, Bounds{-5.0, 5.0});
    PsoConfig config;
    const ObjectiveFn sphere = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) {
            s += v * v;
        }
        return s;
    };
    for (auto _ : state) {
        benchmark::DoNotOptimize(pso_minimize(box, sphere, config).cost);
    }
}
BENCHMARK(BM_PsoSphere)->Unit(benchmark::kMillisecond);

void BM_ControllerOptimize(benchmark::State &state) {
    const auto &f = fixture();
    const auto &patient = f.cohort.front();
    DailyRecord prev = f.series.front().records.back();
    prev.set(Field::Glucose, patient.initial_glucose);
    prev.set(Field::Ketone, patient.initial_ketone);
    ControllerConfig config;
    for (auto _ : state) {
        benchmark::DoNotOptimize(optimize(f.plant, prev, patient.profile, Penalties{}, config).cost);
    }
}
BENCHMARK(BM_ControllerOptimize)->Unit(benchmark::kMillisecond);

void BM_PlanMeals(benchmark::State &state) {
    const auto &patient = fixture().cohort.front();
    const auto target = patient.habit.as_suggestion();
    for (auto _ : state) {
        try {
            benchmark::DoNotOptimize(plan_meals(target, shipped_catalog(), patient.profile).items.size());
        } catch (const InfeasibleError &) {
        }
    }
}
BENCHMARK(BM_PlanMeals)->Unit(benchmark::kMicrosecond);

void BM_ClarkeZone(benchmark::State &state) {
    std::mt19937_64 rng{5};
    std::uniform_real_distribution<double> u{0.0, 400.0};
    std::vector<GridPoint> points(4096);
    for (auto &p : points) {
        p = {u(rng), u(rng)};
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(zone_report(points).total);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(points.size()));
}
BENCHMARK(BM_ClarkeZone);

} // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "gpenkf/design.hpp"
#include "gpenkf/enkf.hpp"
#include "gpenkf/experiments.hpp"
#include "gpenkf/gp.hpp"
#include "gpenkf/markers.hpp"
#include "gpenkf/mms.hpp"
#include "gpenkf/random.hpp"

using namespace gpenkf;

namespace {

const experiments::ToyProblem& toy() {
    static const experiments::ToyProblem problem;
    return problem;
}

const gp::EmulatorBank& toy_bank() {
    static const gp::EmulatorBank bank = toy().emulator(50, 1);
    return bank;
}

mms::TissueParams midpoint_params() { return mms::TissueParams::from_vector(ParameterSpace::mms().midpoint()); }

void BM_CellSimulation(benchmark::State& state) {
    const mms::TissueParams p = midpoint_params();
    const mms::PacingProtocol protocol;
    for (auto _ : state) benchmark::DoNotOptimize(mms::simulate_cell(p.cell, protocol));
}
BENCHMARK(BM_CellSimulation)->Unit(benchmark::kMillisecond);

void BM_CableOutputs(benchmark::State& state) {
    const mms::TissueParams p = midpoint_params();
    const mms::Geometry g = mms::Geometry::cable();
    const mms::PacingProtocol protocol;
    for (auto _ : state) benchmark::DoNotOptimize(mms::s1s2_outputs(p, g, protocol));
}
BENCHMARK(BM_CableOutputs)->Unit(benchmark::kMillisecond);

void BM_GpFit(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(toy().emulator(n, 7));
}
BENCHMARK(BM_GpFit)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_PredictBank(benchmark::State& state) {
    const gp::EmulatorBank& bank = toy_bank();
    Rng rng(3);
    Eigen::MatrixXd thetas(2, state.range(0));
    for (Eigen::Index i = 0; i < thetas.size(); ++i) thetas.data()[i] = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(gp::predict_bank(bank, thetas));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictBank)->Arg(100)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_EnkfToy(benchmark::State& state) {
    const ObservationSet obs = toy().observations(2);
    EnkfConfig cfg = toy().enkf_config(4);
    cfg.ensemble_size = state.range(0);
    cfg.iterations = static_cast<int>(state.range(1));
    const gp::EmulatorBank& bank = toy_bank();
    for (auto _ : state) benchmark::DoNotOptimize(run_enkf(cfg, bank, obs));
}
BENCHMARK(BM_EnkfToy)->Args({500, 1})->Args({500, 50})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

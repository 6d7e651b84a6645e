// Microbenchmarks for the hot paths: forward evaluation, loss + gradient
// tape, agent state assembly, and TD updates, all at the default desk-scale
// dimensions (hidden 64, feature 16, 16 candidate slots, Q-net 128/64).

#include <benchmark/benchmark.h>

#include <vector>

#include "pseudopilot/autodiff.hpp"
#include "pseudopilot/losses.hpp"
#include "pseudopilot/model.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/pseudo.hpp"
#include "pseudopilot/rl.hpp"
#include "pseudopilot/rng.hpp"
#include "pseudopilot/tensor.hpp"

namespace {

using namespace pseudopilot;

constexpr std::size_t kInputDim = 2;
constexpr int kClasses = 4;

Tensor random_inputs(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor x(n, dim);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

std::vector<int> cycle_labels(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % kClasses);
  return y;
}

Model desk_model(Rng& rng) {
  ModelSpec spec = make_model_spec(kInputDim, {64}, 16, kClasses);
  spec.classifier.margin = 0.5;
  return init_model(spec, rng);
}

void BM_FeaturesEval(benchmark::State& state) {
  Rng rng(1);
  const Model m = desk_model(rng);
  const Tensor x = random_inputs(32, kInputDim, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(features_eval(m, x));
  }
}
BENCHMARK(BM_FeaturesEval);

void BM_ClassProbsEval(benchmark::State& state) {
  Rng rng(2);
  const Model m = desk_model(rng);
  const Tensor x = random_inputs(32, kInputDim, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(class_probs_eval(m, x));
  }
}
BENCHMARK(BM_ClassProbsEval);

void BM_TargetMarginLossForward(benchmark::State& state) {
  Rng rng(3);
  const Model m = desk_model(rng);
  const Tensor xs = random_inputs(32, kInputDim, rng);
  const std::vector<int> ys = cycle_labels(32);
  const Tensor xt = random_inputs(12, kInputDim, rng);
  const std::vector<int> yt = cycle_labels(12);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(t.scalar(target_margin_loss(t, m, xs, ys, xt, yt)));
  }
}
BENCHMARK(BM_TargetMarginLossForward);

// One full training step's autodiff cost: combined objective, then
// gradients for every parameter.
void BM_CombinedLossBackward(benchmark::State& state) {
  Rng rng(4);
  const Model m = desk_model(rng);
  const Tensor xs = random_inputs(32, kInputDim, rng);
  const std::vector<int> ys = cycle_labels(32);
  const Tensor xt = random_inputs(12, kInputDim, rng);
  const std::vector<int> yt = cycle_labels(12);
  const Tensor xu = random_inputs(32, kInputDim, rng);
  for (auto _ : state) {
    Tape t;
    const Value loss = combined_loss(t, m, xs, ys, xt, yt, xu, 0.1);
    benchmark::DoNotOptimize(t.gradients(loss, m.params));
  }
}
BENCHMARK(BM_CombinedLossBackward);

void BM_SgdStep(benchmark::State& state) {
  Rng rng(5);
  Model m = desk_model(rng);
  const Tensor xs = random_inputs(32, kInputDim, rng);
  const std::vector<int> ys = cycle_labels(32);
  Tape t;
  const Value loss = cross_entropy_loss(t, m, xs, ys);
  const GradMap grads = t.gradients(loss, m.params);
  const OptimConfig cfg;  // base_lr 0.01, momentum 0.9, weight_decay 5e-4
  for (auto _ : state) {
    sgd_step(m.params, grads, cfg, 0.5);
  }
}
BENCHMARK(BM_SgdStep);

void BM_BuildState(benchmark::State& state) {
  Rng rng(6);
  const Model m = desk_model(rng);
  const StateLayout layout{16, kClasses, 16};
  const Tensor labeled_x = random_inputs(12, kInputDim, rng);
  const std::vector<int> labeled_y = cycle_labels(12);
  const Tensor xu = random_inputs(200, kInputDim, rng);
  std::vector<PseudoLabel> cands;
  for (std::size_t i = 0; i < layout.capacity; ++i)
    cands.push_back(PseudoLabel{i * 3, static_cast<int>(i % kClasses), 0.9});
  const PseudoPool pool = init_candidate_set(cands, layout.capacity, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_state(layout, pool, m, labeled_x, labeled_y, xu));
  }
}
BENCHMARK(BM_BuildState);

void BM_SelectAction(benchmark::State& state) {
  Rng rng(7);
  const StateLayout layout{16, kClasses, 16};
  const QNet q = init_qnet(layout, 128, 64, rng);
  const Tensor s = random_inputs(1, layout.total_len(), rng);
  const std::vector<bool> occupied(layout.capacity, true);
  for (auto _ : state) {
    benchmark::DoNotOptimize(select_action(q, s, occupied, 0.0, rng));
  }
}
BENCHMARK(BM_SelectAction);

void BM_QUpdate(benchmark::State& state) {
  Rng rng(8);
  const StateLayout layout{16, kClasses, 16};
  QNet q = init_qnet(layout, 128, 64, rng);
  std::vector<Transition> batch;
  for (int i = 0; i < 32; ++i) {
    Transition t;
    t.state = random_inputs(1, layout.total_len(), rng);
    t.next_state = random_inputs(1, layout.total_len(), rng);
    t.action = rng.uniform_index(layout.capacity);
    t.reward = rng.uniform() < 0.5 ? 1.0 : -1.0;
    t.terminal = rng.uniform() < 0.25;
    batch.push_back(t);
  }
  const OptimConfig cfg{3e-5, 0.9, 0.0, 0.0, 0.75};
  for (auto _ : state) {
    benchmark::DoNotOptimize(q_update(q, batch, 0.9, cfg));
  }
}
BENCHMARK(BM_QUpdate);

}  // namespace

BENCHMARK_MAIN();

// Parallel vs serial per-sample loss kernel.
#include <vector>

#include <benchmark/benchmark.h>

#include "morphloss/batch.hpp"
#include "morphloss/synthdata.hpp"

using namespace morphloss;

namespace {

struct Fixture {
  MorphableModel model = build_synthetic_model(512, 20, 42);
  std::vector<Prediction> preds;
  std::vector<GroundTruth> gts;
  std::vector<ViewSet> views;

  explicit Fixture(std::size_t n) {
    Rng rng(7);
    const ViewSamplingConfig poses;
    for (std::size_t i = 0; i < n; ++i) {
      const ShapeParams p = sample_params(model, rng);
      const CameraPose pose = sample_view_pose(poses, rng);
      gts.push_back({synthesize(model, p), pose});
      Prediction pred;
      pred.alpha = Eigen::VectorXd::Zero(20);
      preds.push_back(pred);
      views.push_back(sample_views(poses, 4, rng));
    }
  }

  std::vector<LossJob> jobs() const {
    std::vector<LossJob> out;
    for (std::size_t i = 0; i < preds.size(); ++i) out.push_back({&preds[i], &gts[i], &views[i]});
    return out;
  }
};

const Fixture& fixture() {
  static const Fixture f(32);
  return f;
}

template <bool Parallel>
void BM_Batch(benchmark::State& state) {
  const auto kind = static_cast<LossKind>(state.range(0));
  const Fixture& f = fixture();
  const LossInputs in{&f.model, Calibration{}, {}};
  const auto jobs = f.jobs();
  for (auto _ : state) {
    auto r = Parallel ? evaluate_batch(kind, in, jobs) : evaluate_batch_serial(kind, in, jobs);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(jobs.size()));
  state.SetLabel(std::string(to_string(kind)) + ", threads " + std::to_string(Parallel ? max_threads() : 1));
}

void loss_args(benchmark::internal::Benchmark* b) {
  for (LossKind k : kAllLosses) b->Arg(static_cast<int>(k));
}

}  // namespace

BENCHMARK(BM_Batch<false>)->Name("serial")->Apply(loss_args);
BENCHMARK(BM_Batch<true>)->Name("openmp")->Apply(loss_args);

BENCHMARK_MAIN();

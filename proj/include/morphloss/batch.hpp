#pragma once

#include <cstddef>
#include <vector>

#include "morphloss/losses.hpp"

namespace morphloss {

/// One per-sample loss evaluation. Pointers are borrowed for the call.
struct LossJob {
  const Prediction* pred = nullptr;
  const GroundTruth* gt = nullptr;
  const ViewSet* views = nullptr;  // Mrl only
};

/// Evaluates every job, in parallel when OpenMP is available. Results are
/// written by index, so the output does not depend on the thread schedule.
/// The first failing job (lowest index) is rethrown after the loop.
std::vector<LossReport> evaluate_batch(LossKind kind, const LossInputs& in, const std::vector<LossJob>& jobs);

/// Plain loop over the same jobs; the reference the parallel kernel is tested against.
std::vector<LossReport> evaluate_batch_serial(LossKind kind, const LossInputs& in, const std::vector<LossJob>& jobs);

/// Mean of the reports in index order (fixed reduction order).
LossReport mean_report(const std::vector<LossReport>& reports);

int max_threads();

}  // namespace morphloss

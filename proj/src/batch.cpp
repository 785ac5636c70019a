#include "morphloss/batch.hpp"

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace morphloss {

namespace {

const ViewSet& views_of(const LossJob& job) {
  static const ViewSet kEmpty;
  return job.views ? *job.views : kEmpty;
}

}  // namespace

std::vector<LossReport> evaluate_batch(LossKind kind, const LossInputs& in, const std::vector<LossJob>& jobs) {
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
  std::vector<LossReport> out(jobs.size());
  std::vector<std::exception_ptr> failures(jobs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    try {
      out[static_cast<std::size_t>(i)] = evaluate_loss(kind, in, *job.pred, *job.gt, views_of(job));
    } catch (...) {
      failures[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

std::vector<LossReport> evaluate_batch_serial(LossKind kind, const LossInputs& in, const std::vector<LossJob>& jobs) {
  std::vector<LossReport> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(evaluate_loss(kind, in, *job.pred, *job.gt, views_of(job)));
  return out;
}

LossReport mean_report(const std::vector<LossReport>& reports) {
  LossReport total;
  for (const auto& r : reports) total += r;
  if (!reports.empty()) total *= 1.0 / static_cast<double>(reports.size());
  return total;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace morphloss

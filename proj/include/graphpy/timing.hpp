#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

#include "graphpy/error.hpp"

namespace graphpy {

using Clock = std::chrono::steady_clock;

// Accumulates time spent inside kernel bodies.  Nested scopes (a composite
// kernel calling primitives) are counted once, by the outermost scope.
class KernelClock {
 public:
  std::int64_t kernel_ns() const noexcept { return ns_; }
  void reset() noexcept { ns_ = 0; }

 private:
  friend class ScopedKernelTimer;
  std::int64_t ns_ = 0;
  int depth_ = 0;
};

class ScopedKernelTimer {
 public:
  explicit ScopedKernelTimer(KernelClock* clock) : clock_(clock) {
    if (clock_ && clock_->depth_++ == 0) start_ = Clock::now();
  }
  ~ScopedKernelTimer() {
    if (clock_ && --clock_->depth_ == 0)
      clock_->ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start_).count();
  }
  ScopedKernelTimer(const ScopedKernelTimer&) = delete;
  ScopedKernelTimer& operator=(const ScopedKernelTimer&) = delete;

 private:
  KernelClock* clock_;
  Clock::time_point start_{};
};

// One epoch split into time inside kernel bodies and everything else.
struct EpochTiming {
  std::int64_t epoch = 0;
  std::int64_t orchestration_ns = 0;
  std::int64_t kernel_ns = 0;

  double overhead_ratio() const {
    const auto total = orchestration_ns + kernel_ns;
    return total == 0 ? 1.0 : static_cast<double>(orchestration_ns) / static_cast<double>(total);
  }
};

// Brackets one epoch; the kernel clock must be the one the session's kernels
// report into.
class EpochProfiler {
 public:
  explicit EpochProfiler(KernelClock& clock) : clock_(clock) {}

  void begin(std::int64_t epoch) {
    epoch_ = epoch;
    kernel_start_ = clock_.kernel_ns();
    wall_start_ = Clock::now();
  }

  EpochTiming end() const {
    const auto wall_end = Clock::now();
    if (wall_end < wall_start_) fail(ErrorCode::clock, "clock went backwards");
    const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(wall_end - wall_start_).count();
    const auto kernel = clock_.kernel_ns() - kernel_start_;
    if (kernel < 0 || kernel > wall) fail(ErrorCode::clock, "kernel time exceeds epoch wall time");
    return {epoch_, wall - kernel, kernel};
  }

 private:
  KernelClock& clock_;
  std::int64_t epoch_ = 0;
  std::int64_t kernel_start_ = 0;
  Clock::time_point wall_start_{};
};

struct OverheadReport {
  std::int64_t framework_overhead_ns = 0;  // sum of per-epoch orchestration time
  std::int64_t kernel_ns = 0;
  std::vector<double> ratios;

  double overhead_ratio() const {
    const auto total = framework_overhead_ns + kernel_ns;
    return total == 0 ? 1.0 : static_cast<double>(framework_overhead_ns) / static_cast<double>(total);
  }
};

inline OverheadReport overhead_report(const std::vector<EpochTiming>& timings) {
  OverheadReport r;
  for (const auto& t : timings) {
    if (t.orchestration_ns < 0 || t.kernel_ns < 0) fail(ErrorCode::clock, "negative epoch timing");
    r.framework_overhead_ns += t.orchestration_ns;
    r.kernel_ns += t.kernel_ns;
    r.ratios.push_back(t.overhead_ratio());
  }
  return r;
}

}  // namespace graphpy

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace meshspm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error taxonomy maps onto CLI exit codes: validation 2, numerical 3, I/O 4.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int default_worker_count() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Runs fn(worker, item) for item in [0, count) across `workers` threads with
// a static stride-W assignment; `worker` indexes per-thread scratch state.
// Work items must be independent; any state they share must be mergeable in
// a schedule-independent way (disjoint slots or integer counters). The first
// exception thrown by any worker is rethrown here.
inline void parallel_for(int count, int workers,
                         const std::function<void(int, int)>& fn) {
  if (count <= 0) return;
  if (workers < 1) workers = 1;
  if (workers > count) workers = count;
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(0, i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  auto run = [&](int w) {
    try {
      for (int i = w; i < count; i += workers) fn(w, i);
    } catch (...) {
      errors[static_cast<size_t>(w)] = std::current_exception();
    }
  };
  pool.reserve(static_cast<size_t>(workers) - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace meshspm

#pragma once

#include <exception>
#include <mutex>
#include <type_traits>
#include <vector>

// Index-addressed map with an OpenMP variant and a serial reference. Results
// land in slot i regardless of which thread computed them, so any reduction
// done afterwards in index order is independent of the thread count.

namespace cleve {

enum class Exec { kParallel, kSerial };

template <typename F>
auto map_indexed(std::size_t n, F&& f, Exec exec = Exec::kParallel) {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<R> out(n);
  if (exec == Exec::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = f(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace cleve

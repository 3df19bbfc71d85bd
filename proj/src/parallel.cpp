#include "gastro/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "gastro/error.hpp"

namespace gastro {

std::string_view ToString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kOutOfModel: return "out of model";
    case ErrorKind::kNumerical: return "numerical error";
    case ErrorKind::kInsufficientData: return "insufficient data";
    case ErrorKind::kNonConvergence: return "non-convergence";
    case ErrorKind::kInitializationFailure: return "initialization failure";
    case ErrorKind::kRegistrationFailure: return "registration failure";
    case ErrorKind::kReconstructionFailure: return "reconstruction failure";
    case ErrorKind::kDegenerateConfiguration: return "degenerate configuration";
    case ErrorKind::kInvalidScene: return "invalid scene";
    case ErrorKind::kAtlasOverflow: return "atlas overflow";
    case ErrorKind::kExport: return "export error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

int WorkerCount() {
  if (const char* env = std::getenv("GASTRO_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void ParallelFor(std::size_t begin, std::size_t end,
                 const std::function<void(std::size_t)>& fn) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(WorkerCount()), count);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= end) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(end);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gastro

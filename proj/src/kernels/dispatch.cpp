#include <atomic>
#include <cstdlib>
#include <string_view>

#include "mmrkit/kernels.hpp"

namespace mmr::kernels {
namespace {

const KernelTable* select_default() noexcept {
  const char* env = std::getenv("MMRKIT_SIMD");
  const std::string_view choice = env ? env : "";
  if (choice == "scalar") return &scalar_table();
  if (const KernelTable* avx = avx2_table()) return avx;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> current{select_default()};
  return current;
}

}  // namespace

const KernelTable& active() noexcept {
  return *slot().load(std::memory_order_acquire);
}

void set_active(const KernelTable& table) noexcept {
  slot().store(&table, std::memory_order_release);
}

}  // namespace mmr::kernels

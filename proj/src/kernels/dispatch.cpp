#include <atomic>
#include <cstdlib>
#include <string>

#include "dfkd/kernels/kernels.hpp"

namespace dfkd::kernels {

#if defined(DFKD_HAVE_AVX2)
const KernelTable* avx2_table_impl();
#endif

const KernelTable* avx2_table() {
#if defined(DFKD_HAVE_AVX2)
  return avx2_table_impl();
#else
  return nullptr;
#endif
}

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("DFKD_SIMD"); env && std::string(env) == "scalar")
    return &scalar_table();
  if (avx2_table() && cpu_supports_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  for (const KernelTable* t : available_tables()) {
    if (name == t->name) {
      current().store(t);
      return true;
    }
  }
  return false;
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (avx2_table() && cpu_supports_avx2()) out.push_back(avx2_table());
  return out;
}

}  // namespace dfkd::kernels

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <string>

#include "cass/kernels.hpp"

namespace cass::kernels {

const KernelTable* avx2_table_impl();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* select_initial() {
    const KernelTable* best = avx2_table() ? avx2_table() : &scalar_table();
    if (const char* forced = std::getenv("CASS_KERNELS")) {
        const std::string name(forced);
        if (name == "scalar") return &scalar_table();
        if (name == "avx2" && avx2_table()) return avx2_table();
        std::cerr << "warning: CASS_KERNELS=" << name << " unavailable, using " << best->name
                  << "\n";
    }
    return best;
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{select_initial()};
    return slot;
}

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable* table = cpu_has_avx2_fma() ? avx2_table_impl() : nullptr;
    return table;
}

std::vector<const KernelTable*> available_tables() {
    std::vector<const KernelTable*> out{&scalar_table()};
    if (avx2_table()) out.push_back(avx2_table());
    return out;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

bool set_active(std::string_view name) {
    for (const KernelTable* t : available_tables()) {
        if (t->name == name) {
            active_slot().store(t, std::memory_order_relaxed);
            return true;
        }
    }
    return false;
}

}  // namespace cass::kernels

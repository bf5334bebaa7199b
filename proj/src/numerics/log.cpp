#include "cass/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace cass::log {
namespace {
std::atomic<std::size_t> g_count{0};
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void warn(std::string_view msg) {
    ++g_count;
    if (g_quiet.load()) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "warning: " << msg << '\n';
}

std::size_t warning_count() { return g_count.load(); }

void set_quiet(bool quiet) { g_quiet.store(quiet); }

}  // namespace cass::log

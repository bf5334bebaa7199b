#pragma once

#include <cstddef>
#include <string_view>

namespace cass::log {

// Writes "warning: <msg>" to stderr unless warnings are silenced.
void warn(std::string_view msg);

// Warnings emitted so far in this process (including silenced ones).
std::size_t warning_count();

void set_quiet(bool quiet);

}  // namespace cass::log

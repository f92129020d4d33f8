#pragma once

#include <functional>
#include <string>

namespace mmrank {

using WarningHandler = std::function<void(const std::string&)>;

// Emits a non-fatal diagnostic. Default handler prints to stderr.
void warn(const std::string& message);

// Replaces the active handler and returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);

}  // namespace mmrank

#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace kdn {

// Shared stderr logger. Level comes from KDN_LOG (trace, debug, info, warn,
// error, off); default is warn.
spdlog::logger& log();

}  // namespace kdn

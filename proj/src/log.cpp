#include "kdn/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace kdn {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = std::make_shared<spdlog::logger>("kdn", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    const char* env = std::getenv("KDN_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    l->set_pattern("[%l] %v");
    return l;
  }();
  return *logger;
}

}  // namespace kdn

#pragma once

#include <memory>

#include <spdlog/logger.h>

namespace exciteid {

/// Library-wide logger. Defaults to a stderr sink named "exciteid"; callers may
/// swap it (tests install a ring-buffer sink to inspect warnings).
std::shared_ptr<spdlog::logger> logger();
void set_logger(std::shared_ptr<spdlog::logger> lg);

}  // namespace exciteid

#include "exciteid/log.hpp"

#include <mutex>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace exciteid {
namespace {

std::mutex g_mutex;
std::shared_ptr<spdlog::logger> g_logger;

}  // namespace

std::shared_ptr<spdlog::logger> logger() {
  std::lock_guard lock(g_mutex);
  if (!g_logger) {
    g_logger = std::make_shared<spdlog::logger>(
        "exciteid", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
    g_logger->set_level(spdlog::level::info);
  }
  return g_logger;
}

void set_logger(std::shared_ptr<spdlog::logger> lg) {
  std::lock_guard lock(g_mutex);
  g_logger = std::move(lg);
}

}  // namespace exciteid

#include "drhg/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace drhg {

void init_logging() {
    static const bool once = [] {
        auto logger = spdlog::stderr_color_mt("drhg");
        logger->set_pattern("[%H:%M:%S] [%l] %v");
        spdlog::set_default_logger(logger);
        return true;
    }();
    (void)once;
    const char* env = std::getenv("DRHG_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

}  // namespace drhg

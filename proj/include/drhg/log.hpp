#pragma once

#include <spdlog/spdlog.h>

namespace drhg {

/// Routes the default logger to stderr at the level named by DRHG_LOG
/// (error, info, debug; info when unset). Safe to call more than once.
void init_logging();

}  // namespace drhg

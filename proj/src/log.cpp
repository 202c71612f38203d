/*
 * Copyright 2026 The semloc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "semloc/log.hpp"

#include <fmt/core.h>

#include <atomic>
#include <mutex>

namespace semloc {
namespace {

std::atomic<LogLevel> g_level{LogLevel::kWarn};
std::mutex g_mutex;

void emit(LogLevel level, const char* tag, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(g_level.load())) return;
  std::lock_guard lock(g_mutex);
  fmt::print(stderr, "[{}] {}\n", tag, message);
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warn(const std::string& message) { emit(LogLevel::kWarn, "warn", message); }
void log_info(const std::string& message) { emit(LogLevel::kInfo, "info", message); }
void log_debug(const std::string& message) { emit(LogLevel::kDebug, "debug", message); }

}  // namespace semloc

/* Copyright 2026 The SST Parsing Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "sst/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sst {
namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::kInfo)};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

void emit(LogLevel level, const char* prefix, std::string_view message) {
  if (static_cast<int>(level) < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << prefix << message << '\n';
}

}  // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }

void log_info(std::string_view message) { emit(LogLevel::kInfo, "[info] ", message); }

void log_warning(std::string_view message) {
  g_warnings.fetch_add(1);
  emit(LogLevel::kWarning, "[warn] ", message);
}

void log_warning_once(std::string_view key, std::string_view message) {
  static std::set<std::string, std::less<>> seen;
  bool first = false;
  {
    std::lock_guard<std::mutex> lock(g_mutex);
    first = seen.emplace(key).second;
  }
  if (first) {
    log_warning(message);
  } else {
    g_warnings.fetch_add(1);
  }
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::size_t warning_count() { return g_warnings.load(); }

}  // namespace sst

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

#pragma once

#include <cstddef>
#include <string_view>

namespace sst {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3 };

void set_log_level(LogLevel level);
void log_info(std::string_view message);
void log_warning(std::string_view message);
/// Counts like log_warning but prints only the first message for `key`.
void log_warning_once(std::string_view key, std::string_view message);

/// Number of warnings emitted by this process so far (tests use it to
/// observe degenerate-input warnings).
std::size_t warning_count();

/// Keeps large freed blocks inside the process heap (glibc) so per-step
/// tensor buffers are reused instead of being remapped and page-faulted.
void tune_allocator();

}  // namespace sst

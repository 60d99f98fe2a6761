// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#define LLMPC_VERSION_MAJOR 0
#define LLMPC_VERSION_MINOR 1
#define LLMPC_VERSION_PATCH 0
#define LLMPC_VERSION_STRING "0.1.0"

namespace llmpc {
inline const char* version() { return LLMPC_VERSION_STRING; }
}  // namespace llmpc

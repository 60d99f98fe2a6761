// Copyright (c) 2025 The llmpc Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header: the whole modeling library in one include.

#pragma once

#include "llmpc/attention.hpp"
#include "llmpc/breakdown.hpp"
#include "llmpc/chipcost.hpp"
#include "llmpc/common.hpp"
#include "llmpc/engine.hpp"
#include "llmpc/eventsim.hpp"
#include "llmpc/kvconfig.hpp"
#include "llmpc/llmpc_version.hpp"
#include "llmpc/moe.hpp"
#include "llmpc/network.hpp"
#include "llmpc/parallelism.hpp"
#include "llmpc/roofline.hpp"
#include "llmpc/sysdesc.hpp"
#include "llmpc/validation.hpp"
#include "llmpc/workload.hpp"

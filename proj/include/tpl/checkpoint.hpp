// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoints: <stem>.json manifest (dims, roles, layout) plus
// <stem>.bin flat little-endian 64-bit float buffers, one per named
// parameter. Byte-for-byte reproducible for identical parameters.

#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "tpl/params.hpp"

namespace tpl {

void save_checkpoint(const std::string& stem, const nlohmann::json& meta,
                     const std::vector<ParamRef>& params);

// Fills the given parameters in place; the manifest must cover exactly the
// same names with identical shapes. Returns the stored meta block.
nlohmann::json load_checkpoint(const std::string& stem, const std::vector<ParamRef>& params);

// Read just the meta block (model config etc.) without touching parameters.
nlohmann::json peek_checkpoint_meta(const std::string& stem);

}  // namespace tpl

// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   "TAR1"  u32 version  u32 config_len  config text
//   repeated until EOF:
//     u32 name_len  name  u32 rank  u32 dims[rank]  f32 payload (row-major)
//
// All integers and floats are little-endian. Model arrays use the names of
// for_each_tensor; optimizer moments are stored as `adam.m.<name>` and
// `adam.v.<name>`, the step counter as the one-element array `adam.step`.

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "nexttensor/config.hpp"
#include "nexttensor/model.hpp"
#include "nexttensor/train.hpp"

namespace nxt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Config config;
  ModelParams<float> params;
  std::optional<OptimizerState> optimizer;
};

/// Writes to `path` atomically (temp file, then rename). Throws FileError.
void save_checkpoint(const std::string& path, const Config& config, const ModelParams<float>& params,
                     const OptimizerState* optimizer = nullptr);

/// Throws FileError on unreadable files, wrong magic or version, truncated
/// data, unknown or missing arrays, and shapes that disagree with the
/// embedded config.
Checkpoint load_checkpoint(const std::string& path);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace nxt

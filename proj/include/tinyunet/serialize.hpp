// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "tinyunet/model.hpp"

namespace tinyunet {

inline constexpr char kWeightMagic[4] = {'U', 'L', 'W', '1'};
inline constexpr char kTensorMagic[4] = {'U', 'L', 'T', '1'};
inline constexpr std::uint32_t kWeightVersion = 1;

/// CRC-32 (IEEE 802.3 polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Serializes a model to the ULW1 layout (see docs/weight-format.md).
std::string encode_model(const Model& model);
Model decode_model(std::string_view bytes);

/// Writes atomically (temp file + rename). Returns bytes written.
std::uint64_t save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

/// Standalone float tensor file: "ULT1", rank, extents, payload, CRC32.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

/// Whole-file helpers shared by the loaders.
std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace tinyunet

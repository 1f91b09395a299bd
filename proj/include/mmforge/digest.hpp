// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace mmforge {

/// Incremental SHA-256. Fields fed through `update_field` are length-prefixed
/// so that concatenation boundaries cannot collide.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::uint8_t> bytes);
    Sha256& update(std::string_view text);
    Sha256& update_field(std::string_view text);

    std::string hex();

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// First 8 bytes of SHA-256, big-endian. Used for hash-ordered partitioning.
std::uint64_t hash64(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace mmforge

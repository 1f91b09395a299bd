// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mmforge/jsonl.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmforge {

enum class ImageFormat { png, jpeg, webp };

std::string_view to_string(ImageFormat f) noexcept;
std::optional<ImageFormat> parse_image_format(std::string_view name) noexcept;
std::optional<ImageFormat> sniff_image_format(std::span<const std::uint8_t> bytes) noexcept;

/// 8-bit single-channel raster, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct DecodedImage {
    ImageFormat format;
    int width = 0;
    int height = 0;
    /// SHA-256 over the decoded 8-bit BGR raster and its dimensions.
    std::string image_id;
    GrayImage gray;
};

/// Throws Error(undecodable_image) for anything that is not PNG, JPEG or WebP.
DecodedImage decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

struct ImageRef {
    std::string image_id;
    std::string uri;
    int width = 0;
    int height = 0;
    ImageFormat format = ImageFormat::png;

    bool operator==(const ImageRef&) const = default;
};

json to_json(const ImageRef& ref);
ImageRef image_ref_from_json(const json& j);

/// Content-addressed image directory: `<root>/<id[0..2)>/<id>.<ext>`.
class ImageStore {
public:
    explicit ImageStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    /// Decodes, stores the original container bytes if absent, and returns the
    /// reference plus the decoded image.
    std::pair<ImageRef, DecodedImage> put(std::span<const std::uint8_t> bytes);

    std::vector<std::uint8_t> read(const ImageRef& ref) const;
    std::filesystem::path path_of(const ImageRef& ref) const;

private:
    std::filesystem::path root_;
};

std::string mime_type(ImageFormat f) noexcept;

}  // namespace mmforge

// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/image.hpp"

#include "mmforge/digest.hpp"
#include "mmforge/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <functional>
#include <thread>

namespace mmforge {

std::string_view to_string(ImageFormat f) noexcept {
    switch (f) {
    case ImageFormat::png: return "PNG";
    case ImageFormat::jpeg: return "JPEG";
    case ImageFormat::webp: return "WebP";
    }
    return "PNG";
}

std::optional<ImageFormat> parse_image_format(std::string_view name) noexcept {
    if (name == "PNG") return ImageFormat::png;
    if (name == "JPEG") return ImageFormat::jpeg;
    if (name == "WebP") return ImageFormat::webp;
    return std::nullopt;
}

std::optional<ImageFormat> sniff_image_format(std::span<const std::uint8_t> b) noexcept {
    if (b.size() >= 8 && b[0] == 0x89 && b[1] == 'P' && b[2] == 'N' && b[3] == 'G')
        return ImageFormat::png;
    if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF)
        return ImageFormat::jpeg;
    if (b.size() >= 12 && b[0] == 'R' && b[1] == 'I' && b[2] == 'F' && b[3] == 'F' && b[8] == 'W' &&
        b[9] == 'E' && b[10] == 'B' && b[11] == 'P')
        return ImageFormat::webp;
    return std::nullopt;
}

std::string mime_type(ImageFormat f) noexcept {
    switch (f) {
    case ImageFormat::png: return "image/png";
    case ImageFormat::jpeg: return "image/jpeg";
    case ImageFormat::webp: return "image/webp";
    }
    return "application/octet-stream";
}

namespace {

std::string_view extension(ImageFormat f) {
    switch (f) {
    case ImageFormat::png: return ".png";
    case ImageFormat::jpeg: return ".jpg";
    case ImageFormat::webp: return ".webp";
    }
    return ".bin";
}

}  // namespace

DecodedImage decode_image(std::span<const std::uint8_t> bytes) {
    const auto format = sniff_image_format(bytes);
    if (!format)
        throw Error(ErrorKind::undecodable_image, "unrecognized container");
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat bgr;
    try {
        bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        throw Error(ErrorKind::undecodable_image, e.what());
    }
    if (bgr.empty() || bgr.type() != CV_8UC3)
        throw Error(ErrorKind::undecodable_image, "decoder rejected image");

    DecodedImage out;
    out.format = *format;
    out.width = bgr.cols;
    out.height = bgr.rows;
    out.gray.width = bgr.cols;
    out.gray.height = bgr.rows;
    out.gray.pixels.resize(static_cast<std::size_t>(bgr.cols) * bgr.rows);

    Sha256 h;
    h.update_field("mmforge-pixels-v1");
    h.update_field(std::to_string(bgr.cols) + "x" + std::to_string(bgr.rows) + "x3");
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<std::uint8_t>(y);
        h.update(std::span<const std::uint8_t>(row, static_cast<std::size_t>(bgr.cols) * 3));
        auto* dst = out.gray.pixels.data() + static_cast<std::size_t>(y) * bgr.cols;
        for (int x = 0; x < bgr.cols; ++x) {
            const unsigned b = row[3 * x], g = row[3 * x + 1], r = row[3 * x + 2];
            dst[x] = static_cast<std::uint8_t>((r * 299 + g * 587 + b * 114 + 500) / 1000);
        }
    }
    out.image_id = h.hex();
    return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        throw Error(ErrorKind::unreadable, "not a readable file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::unreadable, "cannot open " + path.string());
    try {
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    } catch (const std::ios_base::failure& e) {
        throw Error(ErrorKind::unreadable, path.string() + ": " + e.what());
    }
}

json to_json(const ImageRef& ref) {
    return json{{"image_id", ref.image_id},
                {"uri", ref.uri},
                {"width", ref.width},
                {"height", ref.height},
                {"format", to_string(ref.format)}};
}

ImageRef image_ref_from_json(const json& j) {
    try {
        ImageRef ref;
        ref.image_id = j.at("image_id").get<std::string>();
        ref.uri = j.at("uri").get<std::string>();
        ref.width = j.at("width").get<int>();
        ref.height = j.at("height").get<int>();
        const auto f = parse_image_format(j.at("format").get<std::string>());
        if (!f)
            throw Error(ErrorKind::malformed, "unknown image format " + j.at("format").dump());
        ref.format = *f;
        return ref;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("image reference: ") + e.what());
    }
}

ImageStore::ImageStore(std::filesystem::path root) : root_(std::move(root)) {}

std::pair<ImageRef, DecodedImage> ImageStore::put(std::span<const std::uint8_t> bytes) {
    auto decoded = decode_image(bytes);
    ImageRef ref;
    ref.image_id = decoded.image_id;
    ref.width = decoded.width;
    ref.height = decoded.height;
    ref.format = decoded.format;
    ref.uri = decoded.image_id.substr(0, 2) + "/" + decoded.image_id + std::string(extension(decoded.format));
    const auto dst = root_ / ref.uri;
    if (!std::filesystem::exists(dst)) {
        std::filesystem::create_directories(dst.parent_path());
        const auto tmp = dst.string() + ".tmp." +
                         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            if (!out)
                throw Error(ErrorKind::unreadable, "cannot write " + tmp);
        }
        std::filesystem::rename(tmp, dst);
    }
    return {std::move(ref), std::move(decoded)};
}

std::filesystem::path ImageStore::path_of(const ImageRef& ref) const { return root_ / ref.uri; }

std::vector<std::uint8_t> ImageStore::read(const ImageRef& ref) const { return read_bytes(path_of(ref)); }

}  // namespace mmforge

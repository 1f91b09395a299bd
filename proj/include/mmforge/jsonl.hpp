// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace mmforge {

using json = nlohmann::ordered_json;

/// Calls `fn(line, line_number)` for every non-blank line. Line numbers start at 1.
void for_each_line(std::istream& in, const std::function<void(std::string_view, std::size_t)>& fn);

std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Compact single-line serialization used for every JSONL artifact.
std::string dump_line(const json& value);

/// Writes to `<path>.tmp` and renames over `path` on commit; an uncommitted
/// writer removes its temporary file on destruction.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(std::filesystem::path path);
    ~AtomicFileWriter();
    AtomicFileWriter(const AtomicFileWriter&) = delete;
    AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

    std::ostream& stream() { return out_; }
    void write_line(const json& value);
    void commit();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

void write_text_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mmforge

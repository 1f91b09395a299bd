// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmforge/jsonl.hpp"

#include "mmforge/error.hpp"

#include <sstream>

namespace mmforge {

void for_each_line(std::istream& in, const std::function<void(std::string_view, std::size_t)>& fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        fn(line, number);
    }
    if (in.bad())
        throw Error(ErrorKind::unreadable, "stream read failed at line " + std::to_string(number));
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::unreadable, "cannot open " + path.string());
    std::vector<json> rows;
    for_each_line(in, [&](std::string_view line, std::size_t n) {
        try {
            rows.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::malformed,
                        path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    });
    return rows;
}

std::string dump_line(const json& value) {
    return value.dump(-1, ' ', false, json::error_handler_t::strict);
}

AtomicFileWriter::AtomicFileWriter(std::filesystem::path path)
    : path_(std::move(path)), tmp_(path_.string() + ".tmp") {
    if (path_.has_parent_path())
        std::filesystem::create_directories(path_.parent_path());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_)
        throw Error(ErrorKind::unreadable, "cannot write " + tmp_.string());
}

AtomicFileWriter::~AtomicFileWriter() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_, ec);
    }
}

void AtomicFileWriter::write_line(const json& value) {
    out_ << dump_line(value) << '\n';
}

void AtomicFileWriter::commit() {
    out_.flush();
    if (!out_)
        throw Error(ErrorKind::unreadable, "write failed for " + tmp_.string());
    out_.close();
    std::filesystem::rename(tmp_, path_);
    committed_ = true;
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    AtomicFileWriter w(path);
    w.stream() << text;
    w.commit();
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::unreadable, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace mmforge

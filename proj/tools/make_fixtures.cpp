// Copyright (C) 2026 The mm-forge Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the deterministic fixture corpus: 200 raw rows over five source
// shapes, their images, a seed file and a sample config.

#include "mmforge/error.hpp"
#include "mmforge/jsonl.hpp"
#include "mmforge/rng.hpp"
#include "mmforge/taxonomy.hpp"

#include <CLI11.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mmforge::json;
using mmforge::Rng;

namespace {

constexpr std::uint64_t kSeed = 20241119;
constexpr int kBaseImages = 100;
constexpr int kVariants = 6;
constexpr int kSeedImages = 30;

struct LeafTags {
    const char* path;
    std::array<const char*, 3> tags;
};

constexpr std::array<LeafTags, 14> kSeedLeaves{{
    {"Coarse Perception/Image Scene/Identify structures", {"building", "street", "sky"}},
    {"Coarse Perception/Image Scene/Identify people", {"person", "street", "building"}},
    {"Coarse Perception/Image Topic/Describe image", {"sky", "tree", "grass"}},
    {"Coarse Perception/Image Quality/Assess composition", {"mountain", "sky", "flower"}},
    {"Fine-grained Perception (single-instance)/OCR/Recognize text in images", {"text", "document", "screen"}},
    {"Fine-grained Perception (single-instance)/Attribute Recognition/Recognize formulas/tables/charts",
     {"chart", "document", "text"}},
    {"Fine-grained Perception (single-instance)/Object Localization/Determine coordinates",
     {"ball", "table", "computer"}},
    {"Fine-grained Perception (cross-instance)/Spatial Relationship/Determine relative position",
     {"table", "book", "phone"}},
    {"Fine-grained Perception (cross-instance)/Action Recognition/Recognize animal actions", {"dog", "cat", "bird"}},
    {"Fine-grained Perception (cross-instance)/Attribute Comparison/Compare material", {"table", "bicycle", "car"}},
    {"Relation Reasoning/Physical Relation/Identify spatial/ mechanical/ cause-effect relationships",
     {"bicycle", "car", "street"}},
    {"Attribute Reasoning/Physical Property Reasoning/Other physical properties", {"water", "food", "ball"}},
    {"Logic Reasoning/Structuralized Image-Text Understanding/Parse sales data", {"chart", "screen", "text"}},
    {"Logic Reasoning/Structuralized Image-Text Understanding/Parse formulas", {"document", "text", "book"}},
}};

constexpr std::array<const char*, 8> kSubjects{"a red car", "two dogs",  "a wooden table", "a city street",
                                               "a bar chart", "a bicycle", "a mountain lake", "a bowl of fruit"};
constexpr std::array<const char*, 6> kQuestions{
    "What is shown in the image?",       "What colour dominates the picture?", "How many objects can you see?",
    "Where is the largest shape placed?", "Is the scene indoors or outdoors?", "What stands out in this picture?"};

int channel(Rng& rng) { return 20 + static_cast<int>(rng.below(200)); }

cv::Mat draw_image(std::uint64_t seed, std::uint64_t index) {
    auto rng = Rng::derive(seed, "image-" + std::to_string(index));
    cv::Mat img(64, 64, CV_8UC3);
    const cv::Vec3b a(channel(rng), channel(rng), channel(rng));
    const cv::Vec3b b(channel(rng), channel(rng), channel(rng));
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const int t = (x + y) * 255 / 126;
            for (int c = 0; c < 3; ++c)
                img.at<cv::Vec3b>(y, x)[c] = static_cast<std::uint8_t>((a[c] * (255 - t) + b[c] * t) / 255);
        }
    const int shapes = 3 + static_cast<int>(rng.below(3));
    for (int s = 0; s < shapes; ++s) {
        const cv::Scalar colour(channel(rng), channel(rng), channel(rng));
        const int x = static_cast<int>(rng.below(56)), y = static_cast<int>(rng.below(56));
        const int w = 8 + static_cast<int>(rng.below(24)), h = 8 + static_cast<int>(rng.below(24));
        if (rng.below(2) == 0)
            cv::rectangle(img, cv::Rect(x, y, w, h), colour, cv::FILLED);
        else
            cv::circle(img, cv::Point(x, y), w / 2, colour, cv::FILLED);
    }
    return img;
}

void save(const cv::Mat& img, const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::vector<int> params;
    if (path.extension() == ".jpg")
        params = {cv::IMWRITE_JPEG_QUALITY, 92};
    else
        params = {cv::IMWRITE_PNG_COMPRESSION, 9};
    if (!cv::imwrite(path.string(), img, params))
        throw mmforge::Error(mmforge::ErrorKind::unreadable, "cannot write " + path.string());
}

std::string base_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%03d.%s", i, i % 10 == 9 ? "jpg" : "png");
    return buf;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
    mmforge::AtomicFileWriter w(path);
    for (const auto& r : rows)
        w.write_line(r);
    w.commit();
}

std::string pick(Rng& rng, const auto& list) { return list[rng.below(list.size())]; }

void generate(const fs::path& out, const fs::path& taxonomy_path) {
    const auto taxonomy = mmforge::load_taxonomy(taxonomy_path);
    for (const auto& leaf : kSeedLeaves)
        mmforge::resolve_tag(taxonomy, leaf.path);

    for (int i = 0; i < kBaseImages; ++i)
        save(draw_image(kSeed, static_cast<std::uint64_t>(i)), out / "images" / base_name(i));
    // Uniform brightness offsets of the first images: new bytes, same pHash.
    for (int i = 0; i < kVariants; ++i) {
        cv::Mat img = draw_image(kSeed, static_cast<std::uint64_t>(i));
        img += cv::Scalar(12, 12, 12);
        char name[32];
        std::snprintf(name, sizeof name, "img_%03d_bright.png", i);
        save(img, out / "images" / name);
    }
    for (int i = 0; i < kSeedImages; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "seed_%02d.png", i);
        save(draw_image(kSeed ^ 0x5eed, static_cast<std::uint64_t>(i)), out / "seed_images" / name);
    }

    auto rng = Rng::derive(kSeed, "rows");
    std::vector<json> llava, caption, qa, text, unified;
    for (int i = 0; i < 80; ++i) {
        json conv = json::array();
        const auto turns = 1 + rng.below(2);
        for (std::uint64_t t = 0; t < turns; ++t) {
            conv.push_back({{"from", "human"}, {"value", std::string(t == 0 ? "<image>\n" : "") + pick(rng, kQuestions)}});
            conv.push_back({{"from", "gpt"}, {"value", "It shows " + pick(rng, kSubjects) + " (item " +
                                                           std::to_string(i) + "." + std::to_string(t) + ")."}});
        }
        llava.push_back({{"id", "llava-" + std::to_string(i)}, {"image", "images/" + base_name(i)}, {"conversations", conv}});
    }
    for (int i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "images/img_%03d_bright.png", i);
        llava.push_back({{"id", "llava-bright-" + std::to_string(i)},
                         {"image", name},
                         {"conversations",
                          json::array({{{"from", "human"}, {"value", "<image>\nWhat is brighter here?"}},
                                       {{"from", "gpt"}, {"value", "The whole frame, slightly."}}})}});
    }
    for (int i = 0; i < 6; ++i)
        llava.push_back(llava[static_cast<std::size_t>(i) * 7]);

    for (int i = 60; i < 100; ++i)
        caption.push_back({{"image", "images/" + base_name(i)},
                           {"caption", "A synthetic scene with " + pick(rng, kSubjects) + " and coloured shapes, frame " +
                                           std::to_string(i) + "."}});

    for (int i = 0; i < 30; ++i) {
        const int img = 80 + (i % 20);
        qa.push_back({{"image", "images/" + base_name(img)},
                      {"question", i < 20 ? "Read the label in the corner." : "What number is printed at the top?"},
                      {"answer", "LABEL-" + std::to_string(img * 7 + i)}});
    }

    for (int i = 0; i < 25; ++i) {
        json row{{"instruction", "Summarise the following note in one sentence."},
                 {"output", "The note describes " + pick(rng, kSubjects) + " in plain words (" + std::to_string(i) + ")."}};
        if (i % 3 == 0)
            row["input"] = "Note " + std::to_string(i) + ": " + pick(rng, kSubjects) + " was observed at noon.";
        text.push_back(row);
    }

    for (int i = 0; i < 15; ++i) {
        const auto& leaf = kSeedLeaves[static_cast<std::size_t>(i) % kSeedLeaves.size()];
        unified.push_back({{"image", "images/" + base_name(i)},
                           {"turns", json::array({{{"question", pick(rng, kQuestions)},
                                                   {"answer", "Answer " + std::to_string(i) + "a: " + pick(rng, kSubjects)}},
                                                  {{"question", "Explain your reasoning."},
                                                   {"answer", "Because of the visible shapes (" + std::to_string(i) + ")."}}})},
                           {"instruction_tags", json::array({leaf.path})}});
    }

    write_jsonl(out / "sources" / "llava.jsonl", llava);
    write_jsonl(out / "sources" / "caption.jsonl", caption);
    write_jsonl(out / "sources" / "qa.jsonl", qa);
    write_jsonl(out / "sources" / "text.jsonl", text);
    write_jsonl(out / "sources" / "unified.jsonl", unified);

    std::vector<json> seed;
    for (int i = 0; i < kSeedImages * 2; ++i) {
        const auto& leaf = kSeedLeaves[static_cast<std::size_t>(i) % kSeedLeaves.size()];
        char image[40];
        std::snprintf(image, sizeof image, "seed_images/seed_%02d.png", i / 2);
        json row{{"id", "seed-" + std::to_string(i)},
                 {"image", image},
                 {"question", pick(rng, kQuestions)},
                 {"answer", "Seed answer " + std::to_string(i) + "."},
                 {"instruction_tag", leaf.path}};
        // The last rows leave tagging to the tagging service.
        if (i < 50) {
            json tags = json::array();
            for (std::size_t t = 0; t < leaf.tags.size(); ++t)
                if (t < 2 || rng.below(2) == 0)
                    tags.push_back(leaf.tags[t]);
            row["image_tags"] = tags;
        }
        seed.push_back(row);
    }
    write_jsonl(out / "seed.jsonl", seed);

    const json config{
        {"run_id", "fixture"},
        {"seed", 42},
        {"workers", 4},
        {"sources",
         json::array({{{"name", "llava"}, {"path", "sources/llava.jsonl"}, {"adapter", "llava"}, {"image_root", "."},
                       {"category", "comprehensive"}},
                      {{"name", "caption"}, {"path", "sources/caption.jsonl"}, {"adapter", "caption"},
                       {"image_root", "."}, {"category", "image_caption"}},
                      {{"name", "qa"}, {"path", "sources/qa.jsonl"}, {"adapter", "qa"}, {"image_root", "."},
                       {"category", "selective"}, {"subtype", "ocr"}},
                      {{"name", "text"}, {"path", "sources/text.jsonl"}, {"adapter", "text"},
                       {"category", "comprehensive"}},
                      {{"name", "unified"}, {"path", "sources/unified.jsonl"}, {"adapter", "unified"},
                       {"image_root", "."}, {"category", "gpt4_synthetic"}, {"subtype", "synthetic"},
                       {"provenance", "gpt4-distilled"}}})},
        {"seed_data", {{"path", "seed.jsonl"}, {"image_root", "."}}},
        {"endpoints",
         {{"generator", {{"base_url", "http://127.0.0.1:8000/v1"}, {"model", "vlm-large"}, {"max_concurrent", 8}}},
          {"judge", {{"base_url", "http://127.0.0.1:8000/v1"}, {"model", "vlm-large"}, {"max_concurrent", 8}}},
          {"scorer", {{"base_url", "http://127.0.0.1:8001/v1"}, {"model", "vlm-small"}, {"max_concurrent", 8}}},
          {"tagger", {{"base_url", "http://127.0.0.1:8002/v1"}, {"model", "tagger"}, {"max_concurrent", 8}}}}},
        {"dedup", {{"near_dup_threshold", 4}, {"loss_filter", true}, {"loss_drop_fraction", 0.05}}},
        {"synthesis",
         {{"types_per_image", 3},
          {"fewshot", 2},
          {"aggregator", "sum"},
          {"style_weights", {{"short", 1.0}, {"brief_explain", 1.0}, {"detailed_explain", 1.0}}},
          {"quality_threshold", 8},
          {"loss_drop_fraction", 0.05},
          {"budget", nullptr},
          {"max_turns", 5}}},
        {"manifests", {{"shard_size", 64}, {"budgets", json::object()}}}};
    mmforge::write_text_atomic(out / "config.json", config.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the deterministic fixture corpus"};
    std::string out = "fixture-corpus";
    std::string taxonomy = std::string(MMFORGE_ASSET_DIR) + "/taxonomy/instruction_tags.txt";
    app.add_option("-o,--out", out, "Output directory");
    app.add_option("--taxonomy", taxonomy, "Taxonomy used to validate seed tags");
    CLI11_PARSE(app, argc, argv);
    try {
        generate(out, taxonomy);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    std::cout << "fixture corpus written to " << out << '\n';
    return 0;
}

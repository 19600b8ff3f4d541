// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-image description sets: prompt templates, the provider interface, an
// offline deterministic stub provider, coverage checks and the line-oriented
// description-set file.
//
// File layout (UTF-8, LF):
//   descset v1 kind=<short|long>
//   {"id":"...","text":"...","provider":"..."}      one record per line

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crossalign/error.hpp"
#include "crossalign/rng.hpp"

namespace crossalign {

enum class PromptKind { short_form, long_form };

inline std::string_view to_string(PromptKind kind) { return kind == PromptKind::short_form ? "short" : "long"; }

inline PromptKind parse_prompt_kind(std::string_view text) {
    if (text == "short") return PromptKind::short_form;
    if (text == "long") return PromptKind::long_form;
    fail(ErrorKind::usage, "unknown prompt kind '" + std::string(text) + "' (expected short or long)");
}

inline constexpr std::string_view kLongPrompt = "Describe this image in detail.";
inline constexpr std::string_view kShortPrompt = "Write a one-sentence short description about this image.";

struct PromptTemplate {
    PromptKind kind;
    std::string_view text;
};

inline PromptTemplate prompt_template(PromptKind kind) {
    return {kind, kind == PromptKind::long_form ? kLongPrompt : kShortPrompt};
}

struct DescriptionRecord {
    std::string image_id;
    PromptKind prompt_kind = PromptKind::long_form;
    std::string text;
    std::string provider_name;

    bool operator==(const DescriptionRecord&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Records of one prompt kind, keyed (and iterated) by sorted image id.
class DescriptionSet {
public:
    explicit DescriptionSet(PromptKind kind = PromptKind::long_form) : kind_(kind) {}

    PromptKind kind() const { return kind_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const std::map<std::string, DescriptionRecord>& records() const { return records_; }

    void insert(DescriptionRecord record) {
        if (record.image_id.empty()) fail(ErrorKind::validation, "description record with empty image id");
        if (record.prompt_kind != kind_) {
            fail(ErrorKind::validation, "record '" + record.image_id + "' has prompt kind " +
                                            std::string(to_string(record.prompt_kind)) + " in a " +
                                            std::string(to_string(kind_)) + " set");
        }
        if (detail::trim(record.text).empty()) {
            fail(ErrorKind::validation, "record '" + record.image_id + "' has empty text");
        }
        const std::string id = record.image_id;
        if (!records_.emplace(id, std::move(record)).second) {
            fail(ErrorKind::validation, "duplicate image id '" + id + "'");
        }
    }

    const DescriptionRecord& at(const std::string& id) const {
        auto it = records_.find(id);
        if (it == records_.end()) fail(ErrorKind::not_found, "no description for image id '" + id + "'");
        return it->second;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(records_.size());
        for (const auto& [id, _] : records_) out.push_back(id);
        return out;
    }

    bool operator==(const DescriptionSet&) const = default;

private:
    PromptKind kind_;
    std::map<std::string, DescriptionRecord> records_;
};

/// What a provider is shown: the image identity. Pixels are not needed by the offline stub.
struct ImageRef {
    std::string id;
    std::size_t class_label = 0;
};

class DescriptionProvider {
public:
    virtual ~DescriptionProvider() = default;
    virtual std::string name() const = 0;
    virtual std::string describe(const ImageRef& image, std::string_view prompt) = 0;
};

// ---------------------------------------------------------------------------
// Synthetic class nouns. Each label maps to a made-up word built from a fixed
// syllable table plus the suffix "ite"; class_noun_label() inverts it so a
// text-only encoder can recover the class from a stub description.
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 16> kSyllables = {
    "ba", "ke", "di", "fo", "gu", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "zo", "ha", "ju"};
inline constexpr std::string_view kNounSuffix = "ite";

inline std::string class_noun(std::size_t label) {
    std::string digits;
    std::size_t v = label;
    do {
        digits.insert(0, kSyllables[v % 16]);
        v /= 16;
    } while (v > 0);
    if (label < 16) digits.insert(0, kSyllables[0]);
    return digits + std::string(kNounSuffix);
}

inline std::optional<std::size_t> class_noun_label(std::string_view word) {
    if (word.size() < 4 + kNounSuffix.size() || !word.ends_with(kNounSuffix)) return std::nullopt;
    word.remove_suffix(kNounSuffix.size());
    if (word.size() % 2 != 0 || word.size() > 2 * 15) return std::nullopt;
    std::size_t label = 0;
    for (std::size_t i = 0; i < word.size(); i += 2) {
        auto it = std::find(kSyllables.begin(), kSyllables.end(), word.substr(i, 2));
        if (it == kSyllables.end()) return std::nullopt;
        label = label * 16 + static_cast<std::size_t>(it - kSyllables.begin());
    }
    if (class_noun(label) != std::string(word) + std::string(kNounSuffix)) return std::nullopt;
    return label;
}

/// First class noun appearing in a text, if any.
inline std::optional<std::size_t> find_class_noun(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !(text[i] >= 'a' && text[i] <= 'z')) ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] >= 'a' && text[j] <= 'z') ++j;
        if (j > i) {
            if (auto label = class_noun_label(text.substr(i, j - i))) return label;
        }
        i = j;
    }
    return std::nullopt;
}

namespace detail {

inline constexpr std::array<std::string_view, 8> kSettings = {
    "It sits on a wooden table",     "The background is a grassy field", "Soft daylight falls across the scene",
    "The scene is photographed indoors", "A blue sky fills the background",  "The ground is covered with sand",
    "Shadows stretch across the floor", "The frame is slightly out of focus"};
inline constexpr std::array<std::string_view, 8> kDetails = {
    "its surface looks smooth and clean", "a few small objects are scattered nearby",
    "the colors are muted and calm",      "the lighting is warm and even",
    "the edges of the frame are dark",    "a person can be seen in the distance",
    "the texture appears rough and worn", "several reflections are visible"};

}  // namespace detail

/// Deterministic description: short = one sentence naming the class noun;
/// long = four sentences with filler clauses keyed by the image id.
inline std::string stub_description(std::string_view image_id, std::size_t class_label, PromptKind kind) {
    const std::string noun = class_noun(class_label);
    if (kind == PromptKind::short_form) return "A photo of a " + noun + " in its usual surroundings.";
    const std::uint64_t h = fnv1a(image_id);
    std::string text = "This image shows a " + noun + ". ";
    text += std::string(detail::kSettings[h % detail::kSettings.size()]) + ". ";
    text += "Looking closer, " + std::string(detail::kDetails[(h >> 8) % detail::kDetails.size()]) + ". ";
    text += "The " + noun + " is the main subject of the picture.";
    return text;
}

/// Offline stand-in for a multimodal model; answers the long template with the
/// long form and any other prompt with the short form.
class StubProvider final : public DescriptionProvider {
public:
    std::string name() const override { return "stub"; }
    std::string describe(const ImageRef& image, std::string_view prompt) override {
        const PromptKind kind = prompt == kLongPrompt ? PromptKind::long_form : PromptKind::short_form;
        return stub_description(image.id, image.class_label, kind);
    }
};

/// Invokes the provider once per image with the prompt of `kind` (or `custom_prompt`).
inline DescriptionSet build_description_set(std::span<const ImageRef> images, DescriptionProvider& provider,
                                            PromptKind kind,
                                            std::optional<std::string> custom_prompt = std::nullopt) {
    if (images.empty()) fail(ErrorKind::validation, "build_description_set: empty image id list");
    std::set<std::string_view> seen;
    for (const auto& img : images) {
        if (img.id.empty()) fail(ErrorKind::validation, "build_description_set: empty image id");
        if (!seen.insert(img.id).second) {
            fail(ErrorKind::validation, "build_description_set: duplicate image id '" + img.id + "'");
        }
    }
    const std::string prompt = custom_prompt ? *custom_prompt : std::string(prompt_template(kind).text);
    DescriptionSet set(kind);
    for (const auto& img : images) {
        std::string text;
        try {
            text = provider.describe(img, prompt);
        } catch (const std::exception& e) {
            fail(ErrorKind::provider, "provider '" + provider.name() + "' failed for image '" + img.id + "': " + e.what());
        }
        set.insert({img.id, kind, std::move(text), provider.name()});
    }
    return set;
}

struct CoverageReport {
    std::vector<std::string> missing;  // in the dataset, not described
    std::vector<std::string> orphan;   // described, not in the dataset
    bool ok() const { return missing.empty() && orphan.empty(); }
};

inline CoverageReport validate_coverage(std::span<const std::string> available_ids,
                                        std::span<const std::string> dataset_ids) {
    const std::set<std::string> have(available_ids.begin(), available_ids.end());
    const std::set<std::string> want(dataset_ids.begin(), dataset_ids.end());
    CoverageReport report;
    std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(report.missing));
    std::set_difference(have.begin(), have.end(), want.begin(), want.end(), std::back_inserter(report.orphan));
    return report;
}

inline CoverageReport validate_coverage(const DescriptionSet& set, std::span<const std::string> dataset_ids) {
    const auto ids = set.ids();
    return validate_coverage(std::span<const std::string>(ids), dataset_ids);
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

inline constexpr std::string_view kDescsetMagic = "descset v1 kind=";

inline std::string serialize_set(const DescriptionSet& set) {
    std::string out = std::string(kDescsetMagic) + std::string(to_string(set.kind())) + "\n";
    for (const auto& [id, rec] : set.records()) {
        nlohmann::ordered_json line;
        line["id"] = rec.image_id;
        line["text"] = rec.text;
        line["provider"] = rec.provider_name;
        out += line.dump() + "\n";
    }
    return out;
}

inline DescriptionSet parse_set(std::string_view content, const std::string& source = "<memory>") {
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;
    auto where = [&] { return source + ":" + std::to_string(line_no); };
    auto parse_header = [&](std::string_view text) -> std::optional<PromptKind> {
        if (!text.starts_with(kDescsetMagic)) return std::nullopt;
        const auto kind = text.substr(kDescsetMagic.size());
        if (kind == "short") return PromptKind::short_form;
        if (kind == "long") return PromptKind::long_form;
        fail(ErrorKind::format, where() + ": unknown kind '" + std::string(kind) + "' in header");
    };

    if (!std::getline(in, line)) fail(ErrorKind::format, source + ": empty file, missing descset header");
    ++line_no;
    const auto header_kind = parse_header(line);
    if (!header_kind) fail(ErrorKind::format, where() + ": expected header 'descset v1 kind=<short|long>'");
    DescriptionSet set(*header_kind);

    while (std::getline(in, line)) {
        ++line_no;
        if (auto other = parse_header(line)) {
            if (*other != set.kind()) {
                fail(ErrorKind::validation, where() + ": mixed prompt kinds in one file (" +
                                                std::string(to_string(set.kind())) + " and " +
                                                std::string(to_string(*other)) + ")");
            }
            fail(ErrorKind::format, where() + ": repeated header line");
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::format, where() + ": malformed record: " + e.what());
        }
        if (!obj.is_object() || obj.size() != 3 || !obj.contains("id") || !obj.contains("text") ||
            !obj.contains("provider") || !obj["id"].is_string() || !obj["text"].is_string() ||
            !obj["provider"].is_string()) {
            fail(ErrorKind::format, where() + ": record must be an object with exactly string keys id, text, provider");
        }
        DescriptionRecord rec{obj["id"].get<std::string>(), set.kind(), obj["text"].get<std::string>(),
                              obj["provider"].get<std::string>()};
        try {
            set.insert(std::move(rec));
        } catch (const Error& e) {
            fail(e.kind(), where() + ": " + e.message());
        }
    }
    return set;
}

inline void save_set(const DescriptionSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    out << serialize_set(set);
    if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

inline DescriptionSet load_set(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_set(buf.str(), path.string());
}

}  // namespace crossalign

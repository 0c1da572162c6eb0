#include "sexid/labels.hpp"

#include <algorithm>

#include "sexid/errors.hpp"
#include "sexid/text_util.hpp"

namespace sexid {

std::string_view to_string(Language l) noexcept {
    return l == Language::en ? "en" : "es";
}

std::string_view to_string(Source s) noexcept {
    return s == Source::twitter ? "twitter" : "gab";
}

std::string_view to_string(Task t) noexcept {
    return t == Task::task1 ? "task1" : "task2";
}

std::string_view to_string(LabelKind k) noexcept {
    switch (k) {
        case LabelKind::identification: return "identification";
        case LabelKind::categorization: return "categorization";
        case LabelKind::end_to_end: return "end_to_end";
    }
    return "?";
}

std::optional<Language> parse_language(std::string_view s) noexcept {
    if (s == "en") return Language::en;
    if (s == "es") return Language::es;
    return std::nullopt;
}

std::optional<Source> parse_source(std::string_view s) noexcept {
    if (s == "twitter") return Source::twitter;
    if (s == "gab") return Source::gab;
    return std::nullopt;
}

std::optional<Task> parse_task(std::string_view s) noexcept {
    if (s == "task1") return Task::task1;
    if (s == "task2") return Task::task2;
    return std::nullopt;
}

Language other(Language l) noexcept {
    return l == Language::en ? Language::es : Language::en;
}

bool is_task1_label(std::string_view s) noexcept {
    return s == kSexist || s == kNonSexist;
}

bool is_task2_label(std::string_view s) noexcept {
    if (s == kNonSexist) return true;
    return std::find(std::begin(kCategories), std::end(kCategories), s) != std::end(kCategories);
}

LabelSpace::LabelSpace(LabelKind kind, std::vector<std::string> labels)
    : kind_(kind), labels_(std::make_shared<const std::vector<std::string>>(std::move(labels))) {
    if (labels_->empty()) throw ArgumentError("label space must not be empty");
    for (std::size_t i = 0; i < labels_->size(); ++i)
        for (std::size_t j = i + 1; j < labels_->size(); ++j)
            if ((*labels_)[i] == (*labels_)[j])
                throw ArgumentError("duplicate label in label space: " + (*labels_)[i]);
}

LabelSpace LabelSpace::task1() {
    return LabelSpace(LabelKind::identification, {std::string(kNonSexist), std::string(kSexist)});
}

LabelSpace LabelSpace::task2_categories() {
    return LabelSpace(LabelKind::categorization, {std::begin(kCategories), std::end(kCategories)});
}

LabelSpace LabelSpace::task2_end_to_end() {
    std::vector<std::string> labels{std::string(kNonSexist)};
    labels.insert(labels.end(), std::begin(kCategories), std::end(kCategories));
    return LabelSpace(LabelKind::end_to_end, std::move(labels));
}

LabelSpace LabelSpace::for_task(Task t) {
    return t == Task::task1 ? task1() : task2_categories();
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view label) const noexcept {
    for (std::size_t i = 0; i < labels_->size(); ++i)
        if ((*labels_)[i] == label) return i;
    return std::nullopt;
}

std::size_t LabelSpace::require_index(std::string_view label) const {
    auto i = index_of(label);
    if (!i) throw ValidationError("label '" + std::string(label) + "' is not in label space {" + joined() + "}");
    return *i;
}

std::string LabelSpace::joined(char sep) const {
    return join(*labels_, std::string(1, sep));
}

std::string serialize(const LabelSpace& space) {
    return std::string(to_string(space.kind())) + ":" + space.joined();
}

LabelSpace parse_label_space(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos) throw FormatError("label space '" + std::string(text) + "' lacks a kind prefix");
    auto kind_name = text.substr(0, colon);
    LabelKind kind;
    if (kind_name == "identification") kind = LabelKind::identification;
    else if (kind_name == "categorization") kind = LabelKind::categorization;
    else if (kind_name == "end_to_end") kind = LabelKind::end_to_end;
    else throw FormatError("unknown label space kind '" + std::string(kind_name) + "'");
    return LabelSpace(kind, split(text.substr(colon + 1), ','));
}

}  // namespace sexid

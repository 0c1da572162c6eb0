#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sexid {

enum class Language { en, es };
enum class Source { twitter, gab };
enum class Task { task1, task2 };

inline constexpr Language kLanguages[] = {Language::en, Language::es};

std::string_view to_string(Language l) noexcept;
std::string_view to_string(Source s) noexcept;
std::string_view to_string(Task t) noexcept;

std::optional<Language> parse_language(std::string_view s) noexcept;
std::optional<Source> parse_source(std::string_view s) noexcept;
std::optional<Task> parse_task(std::string_view s) noexcept;

Language other(Language l) noexcept;

inline constexpr std::string_view kSexist = "sexist";
inline constexpr std::string_view kNonSexist = "non-sexist";

/// The five sexist categories, in the order the shared task lists them.
inline constexpr std::string_view kCategories[] = {
    "ideological-inequality", "stereotyping-dominance", "objectification",
    "sexual-violence",        "misogyny-non-sexual-violence",
};

bool is_task1_label(std::string_view s) noexcept;
bool is_task2_label(std::string_view s) noexcept;  // includes non-sexist

/// Which gold field an example contributes for a label space.
enum class LabelKind {
    identification,   // task 1: {non-sexist, sexist}
    categorization,   // task 2 categorizer: five sexist categories
    end_to_end,       // task 2 end-to-end: non-sexist + five categories
};

/// Ordered, immutable label set. Declaration order is significant: it is the
/// final tie-break everywhere a deterministic argmax is needed. Copies share
/// storage.
class LabelSpace {
public:
    LabelSpace(LabelKind kind, std::vector<std::string> labels);

    static LabelSpace task1();
    static LabelSpace task2_categories();
    static LabelSpace task2_end_to_end();
    static LabelSpace for_task(Task t);  // categorizer space for task2

    LabelKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return labels_->size(); }
    const std::string& operator[](std::size_t i) const { return (*labels_)[i]; }
    const std::vector<std::string>& labels() const noexcept { return *labels_; }

    std::optional<std::size_t> index_of(std::string_view label) const noexcept;
    /// Throws ValidationError naming the label when it is not in the space.
    std::size_t require_index(std::string_view label) const;
    bool contains(std::string_view label) const noexcept { return index_of(label).has_value(); }

    std::string joined(char sep = ',') const;

    friend bool operator==(const LabelSpace& a, const LabelSpace& b) noexcept {
        return a.kind_ == b.kind_ && *a.labels_ == *b.labels_;
    }

private:
    LabelKind kind_;
    std::shared_ptr<const std::vector<std::string>> labels_;
};

std::string_view to_string(LabelKind k) noexcept;

/// "kind:a,b,c" form used in model manifests.
std::string serialize(const LabelSpace& space);
LabelSpace parse_label_space(std::string_view text);

}  // namespace sexid

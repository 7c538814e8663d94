#include "openrgbt/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "openrgbt/error.hpp"

namespace openrgbt {

std::string normalize_label(std::string_view text) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!text.empty() && is_space(text.front())) {
        text.remove_prefix(1);
    }
    while (!text.empty() && is_space(text.back())) {
        text.remove_suffix(1);
    }
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> classes, std::optional<std::size_t> background_index)
    : classes_(std::move(classes)), background_(background_index) {
    if (classes_.empty()) {
        throw InvalidInput("vocabulary must contain at least one class");
    }
    if (classes_.size() > 255) {
        throw InvalidInput("vocabulary holds at most 255 classes");
    }
    std::set<std::string> seen;
    for (const auto& name : classes_) {
        const std::string key = normalize_label(name);
        if (key.empty()) {
            throw InvalidInput("vocabulary class names must be non-empty");
        }
        if (!seen.insert(key).second) {
            throw InvalidInput("duplicate vocabulary class '" + name + "'");
        }
    }
    if (background_ && *background_ >= classes_.size()) {
        throw InvalidInput("background index out of range");
    }
}

Vocabulary Vocabulary::load(const std::string& path, std::optional<std::size_t> background_index) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open vocabulary file " + path);
    }
    std::vector<std::string> classes;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const std::string key = normalize_label(line);
        if (key.empty() || key.front() == '#') {
            continue;
        }
        const auto first = line.find_first_not_of(" \t");
        const auto last = line.find_last_not_of(" \t");
        classes.push_back(line.substr(first, last - first + 1));
    }
    return Vocabulary(std::move(classes), background_index);
}

std::optional<std::size_t> Vocabulary::find(std::string_view name) const {
    const std::string key = normalize_label(name);
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (normalize_label(classes_[i]) == key) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::size_t> Vocabulary::detectable() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (!background_ || *background_ != i) {
            out.push_back(i);
        }
    }
    return out;
}

} // namespace openrgbt

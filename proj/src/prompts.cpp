#include "tinyembed/prompts.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace tinyembed {

namespace {

constexpr const char* kPlaceholder = "[X]";

size_t find_placeholder(const std::string& pattern) {
    return pattern.find(kPlaceholder);
}

}  // namespace

void PromptTemplate::validate() const {
    if (pattern.empty()) {
        throw std::invalid_argument("template '" + name + "': empty pattern");
    }
    const size_t first = find_placeholder(pattern);
    if (first == std::string::npos) {
        throw std::invalid_argument("template '" + name + "': missing [X] placeholder");
    }
    if (pattern.find(kPlaceholder, first + 1) != std::string::npos) {
        throw std::invalid_argument("template '" + name + "': more than one [X] placeholder");
    }
}

TemplatePosition classify_position(const std::string& pattern) {
    const size_t at = find_placeholder(pattern);
    if (at == std::string::npos) {
        throw std::invalid_argument("classify_position: no [X] in pattern");
    }
    for (size_t i = at + 3; i < pattern.size(); ++i) {
        if (std::isalpha(static_cast<unsigned char>(pattern[i])) != 0) {
            return TemplatePosition::wrapped;
        }
    }
    return TemplatePosition::prepended;
}

const std::vector<PromptTemplate>& builtin_templates() {
    static const std::vector<PromptTemplate> templates = [] {
        std::vector<std::pair<std::string, std::string>> raw = {
            {"EOL", "This sentence: \"[X]\" means in one word:"},
            {"PCoT", "After thinking step by step, this sentence: \"[X]\" means in one word:"},
            {"SUM", "This sentence: \"[X]\" can be summarized as:"},
            {"CCW", "This sentence: \"[X]\" belongs to the following cluster:"},
            {"CCP", "Cluster the text: \"[X]\"."},
            {"Question", "Which cluster would you assign the sentence: \"[X]\" to?"},
            {"CLS", "This sentence: \"[X]\" can be classified as:"},
        };
        std::vector<PromptTemplate> out;
        for (auto& [name, pattern] : raw) {
            PromptTemplate t{name, pattern, classify_position(pattern)};
            t.validate();
            out.push_back(std::move(t));
        }
        return out;
    }();
    return templates;
}

const PromptTemplate& lookup_template(const std::string& name) {
    for (const PromptTemplate& t : builtin_templates()) {
        if (t.name == name) {
            return t;
        }
    }
    throw std::out_of_range("unknown prompt template: " + name);
}

PromptedText apply_template(const PromptTemplate& tmpl, const std::string& text) {
    tmpl.validate();
    if (text.empty()) {
        throw std::invalid_argument("apply_template: empty text");
    }
    if (text.find(kPlaceholder) != std::string::npos) {
        throw std::invalid_argument("apply_template: text contains the literal [X], span would be ambiguous");
    }
    const size_t at = find_placeholder(tmpl.pattern);
    PromptedText out;
    out.text = tmpl.pattern.substr(0, at) + text + tmpl.pattern.substr(at + 3);
    out.content.begin = static_cast<int>(at);
    out.content.end = static_cast<int>(at + text.size());
    return out;
}

std::vector<PromptTemplate> load_templates(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("load_templates: cannot open " + path);
    }
    std::vector<PromptTemplate> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        size_t i = line.find_first_not_of(" \t");
        if (i == std::string::npos || line[i] == '#') {
            continue;
        }
        const size_t eq = line.find('=', i);
        if (eq == std::string::npos) {
            throw std::runtime_error("load_templates: line " + std::to_string(line_no) + ": expected name = \"pattern\"");
        }
        std::string name = line.substr(i, eq - i);
        while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) {
            name.pop_back();
        }
        const size_t open = line.find('"', eq);
        const size_t close = line.rfind('"');
        if (open == std::string::npos || close <= open) {
            throw std::runtime_error("load_templates: line " + std::to_string(line_no) + ": pattern must be quoted");
        }
        PromptTemplate t;
        t.name = name;
        t.pattern = line.substr(open + 1, close - open - 1);
        t.position = classify_position(t.pattern);
        t.validate();
        out.push_back(std::move(t));
    }
    return out;
}

void save_templates(const std::vector<PromptTemplate>& templates, const std::string& path) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("save_templates: cannot open " + path);
    }
    for (const PromptTemplate& t : templates) {
        f << t.name << " = \"" << t.pattern << "\"\n";
    }
}

}  // namespace tinyembed

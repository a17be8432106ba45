// Prompt template registry. Templates carry exactly one [X] placeholder;
// applying one returns the prompted string together with the character span
// of the original text, which masked pooling and the attention analysis use.
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace tinyembed {

enum class TemplatePosition { wrapped, prepended };

struct PromptTemplate {
    std::string name;
    std::string pattern;  // contains exactly one "[X]"
    TemplatePosition position = TemplatePosition::wrapped;

    void validate() const;  // throws unless exactly one placeholder and non-empty
};

struct ContentSpan {
    int begin = 0;  // byte offsets into the prompted text
    int end = 0;
};

struct PromptedText {
    std::string text;
    ContentSpan content;
};

// The seven built-in templates (six clustering prompts plus the
// classification prompt), in registry order.
const std::vector<PromptTemplate>& builtin_templates();

// Throws std::out_of_range when the name is unknown.
const PromptTemplate& lookup_template(const std::string& name);

// Replaces [X] with text. Throws if text is empty or itself contains "[X]".
PromptedText apply_template(const PromptTemplate& tmpl, const std::string& text);

// Classifies a pattern: prepended when the constant suffix after [X] carries
// no letters (the last word of the prompted string stays text-dependent),
// wrapped otherwise.
TemplatePosition classify_position(const std::string& pattern);

// Template config file: one `name = "<pattern>"` entry per line, # comments.
std::vector<PromptTemplate> load_templates(const std::string& path);
void save_templates(const std::vector<PromptTemplate>& templates, const std::string& path);

}  // namespace tinyembed

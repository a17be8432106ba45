#include <cctype>
#include <set>
#include <string>

#include "doctest.h"
#include "support.hpp"
#include "tinyembed/prompts.hpp"

using namespace tinyembed;

TEST_CASE("builtin templates match their published strings exactly") {
    CHECK(builtin_templates().size() == 7);
    CHECK(lookup_template("EOL").pattern == "This sentence: \"[X]\" means in one word:");
    CHECK(lookup_template("PCoT").pattern ==
          "After thinking step by step, this sentence: \"[X]\" means in one word:");
    CHECK(lookup_template("SUM").pattern == "This sentence: \"[X]\" can be summarized as:");
    CHECK(lookup_template("CCW").pattern == "This sentence: \"[X]\" belongs to the following cluster:");
    CHECK(lookup_template("CCP").pattern == "Cluster the text: \"[X]\".");
    CHECK(lookup_template("Question").pattern ==
          "Which cluster would you assign the sentence: \"[X]\" to?");
    CHECK(lookup_template("CLS").pattern == "This sentence: \"[X]\" can be classified as:");
}

TEST_CASE("unknown template names raise") {
    CHECK_THROWS(lookup_template("nope"));
}

TEST_CASE("apply substitutes the placeholder and reports the content span") {
    const PromptedText out = apply_template(lookup_template("CCW"), "a man is driving a car");
    CHECK(out.text == "This sentence: \"a man is driving a car\" belongs to the following cluster:");
    CHECK(out.text.substr(static_cast<size_t>(out.content.begin),
                          static_cast<size_t>(out.content.end - out.content.begin)) ==
          "a man is driving a car");

    const PromptedText eol = apply_template(lookup_template("EOL"), "x");
    CHECK(eol.text == "This sentence: \"x\" means in one word:");
}

TEST_CASE("apply rejects empty text and placeholder-bearing text") {
    CHECK_THROWS(apply_template(lookup_template("CCW"), ""));
    CHECK_THROWS(apply_template(lookup_template("CCW"), "tricky [X] span"));
}

TEST_CASE("apply is injective in the text argument") {
    std::set<std::string> seen;
    for (const std::string text : {"a", "b", "a b", "ab", "a  b"}) {
        const auto out = apply_template(lookup_template("Question"), text);
        CHECK(seen.insert(out.text).second);
    }
}

TEST_CASE("position tags: only CCP leaves the trailing words text-dependent") {
    for (const PromptTemplate& t : builtin_templates()) {
        const TemplatePosition expected =
            t.name == "CCP" ? TemplatePosition::prepended : TemplatePosition::wrapped;
        CHECK(t.position == expected);
        CHECK(classify_position(t.pattern) == expected);
    }
}

TEST_CASE("wrapped templates end with their constant suffix") {
    for (const PromptTemplate& t : builtin_templates()) {
        const auto out = apply_template(t, "some unusual content words");
        const std::string suffix = t.pattern.substr(t.pattern.find("[X]") + 3);
        CHECK(out.text.substr(out.text.size() - suffix.size()) == suffix);
        if (t.position == TemplatePosition::wrapped) {
            // the suffix carries at least one letter, so the last word is fixed
            bool has_alpha = false;
            for (char c : suffix) {
                has_alpha |= std::isalpha(static_cast<unsigned char>(c)) != 0;
            }
            CHECK(has_alpha);
        }
    }
}

TEST_CASE("template validation rejects zero or two placeholders") {
    PromptTemplate none{"bad", "no placeholder here", TemplatePosition::wrapped};
    CHECK_THROWS(none.validate());
    PromptTemplate twice{"bad", "[X] and [X]", TemplatePosition::wrapped};
    CHECK_THROWS(twice.validate());
    PromptTemplate empty{"bad", "", TemplatePosition::wrapped};
    CHECK_THROWS(empty.validate());
}

TEST_CASE("template file save/load round trip") {
    testsupport::TempDir dir("tmpl");
    save_templates(builtin_templates(), dir.file("templates.cfg"));
    const auto loaded = load_templates(dir.file("templates.cfg"));
    REQUIRE(loaded.size() == builtin_templates().size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].name == builtin_templates()[i].name);
        CHECK(loaded[i].pattern == builtin_templates()[i].pattern);
        CHECK(loaded[i].position == builtin_templates()[i].position);
    }
}

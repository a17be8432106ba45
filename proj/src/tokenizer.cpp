#include "tinyembed/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tinyembed {

namespace {

bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct_byte(unsigned char c) { return c < 128 && std::ispunct(c) != 0; }

char lower_byte(unsigned char c) { return static_cast<char>(std::tolower(c)); }

}  // namespace

int Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unk_id : it->second;
}

std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> out;
    const int n = static_cast<int>(text.size());
    int i = 0;
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space_byte(c)) {
            ++i;
            continue;
        }
        if (is_punct_byte(c)) {
            out.push_back({std::string(1, lower_byte(c)), i, i + 1});
            ++i;
            continue;
        }
        const int begin = i;
        std::string word;
        while (i < n) {
            const unsigned char w = static_cast<unsigned char>(text[i]);
            if (is_space_byte(w) || is_punct_byte(w)) {
                break;
            }
            word.push_back(lower_byte(w));
            ++i;
        }
        out.push_back({std::move(word), begin, i});
    }
    return out;
}

std::string canonical_normalize(const std::string& text) {
    std::string out;
    for (const Token& t : tokenize(text)) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += t.text;
    }
    return out;
}

Vocabulary build_vocab(std::span<const std::string> corpus, int max_size) {
    if (corpus.empty()) {
        throw std::invalid_argument("build_vocab: empty corpus");
    }
    if (max_size < 4) {
        throw std::invalid_argument("build_vocab: max_size must be >= 4");
    }

    std::unordered_map<std::string, int64_t> counts;
    for (const std::string& text : corpus) {
        for (const Token& t : tokenize(text)) {
            ++counts[t.text];
        }
    }

    std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;  // frequency ties lexicographic
    });

    Vocabulary vocab;
    vocab.id_to_token = {kPadToken, kUnkToken, kEosToken};
    const size_t n_regular = std::min(ranked.size(), static_cast<size_t>(max_size - 3));
    for (size_t i = 0; i < n_regular; ++i) {
        vocab.id_to_token.push_back(ranked[i].first);
    }
    for (int id = 0; id < static_cast<int>(vocab.id_to_token.size()); ++id) {
        vocab.token_to_id[vocab.id_to_token[id]] = id;
    }
    return vocab;
}

TokenSequence encode(const std::string& text, const Vocabulary& vocab) {
    TokenSequence seq;
    seq.tokens = tokenize(text);
    seq.ids.reserve(seq.tokens.size());
    for (const Token& t : seq.tokens) {
        seq.ids.push_back(vocab.lookup(t.text));
    }
    return seq;
}

std::string decode(std::span<const int> ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab.size()) {
            throw std::out_of_range("decode: token id " + std::to_string(id) + " out of range");
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += vocab.id_to_token[static_cast<size_t>(id)];
    }
    return out;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("save_vocab: cannot open " + path);
    }
    for (int id = 0; id < vocab.size(); ++id) {
        f << id << '\t' << vocab.id_to_token[static_cast<size_t>(id)] << '\n';
    }
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("load_vocab: cannot open " + path);
    }
    Vocabulary vocab;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("load_vocab: line " + std::to_string(line_no) + " has no tab");
        }
        const int id = std::stoi(line.substr(0, tab));
        if (id != static_cast<int>(vocab.id_to_token.size())) {
            throw std::runtime_error("load_vocab: ids must be dense and sorted, got " + std::to_string(id) +
                                     " at line " + std::to_string(line_no));
        }
        vocab.id_to_token.push_back(line.substr(tab + 1));
    }
    if (vocab.size() < 3 || vocab.id_to_token[0] != kPadToken || vocab.id_to_token[1] != kUnkToken ||
        vocab.id_to_token[2] != kEosToken) {
        throw std::runtime_error("load_vocab: missing special tokens in " + path);
    }
    for (int id = 0; id < vocab.size(); ++id) {
        vocab.token_to_id[vocab.id_to_token[static_cast<size_t>(id)]] = id;
    }
    return vocab;
}

}  // namespace tinyembed

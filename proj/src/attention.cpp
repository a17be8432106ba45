#include "tinyembed/attention.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tinyembed {

namespace {

AttentionProfile profile_from_forward(const Embedder& embedder, const std::string& text,
                                      std::optional<int> head) {
    const Embedder::Encoded encoded = embedder.encode_text(text);
    LoraRuntime runtime{embedder.adapters, false, nullptr};
    ForwardOptions opts;
    opts.want_attention = true;
    if (embedder.adapters != nullptr) {
        opts.lora = &runtime;
    }
    ForwardResult res = forward(*embedder.config, *embedder.params, encoded.ids, opts);

    const int last_layer = embedder.config->n_layers - 1;
    const auto& heads = res.attention.weights[static_cast<size_t>(last_layer)];
    const int seq = static_cast<int>(encoded.ids.size());

    AttentionProfile profile;
    profile.layer = last_layer;
    profile.aggregated_over_heads = !head.has_value();
    profile.prompted_text = encoded.prompted_text;
    profile.content = encoded.content;
    profile.weights.assign(static_cast<size_t>(seq), 0.0);
    if (head.has_value()) {
        const Matrix& map = heads[static_cast<size_t>(*head)];
        for (int j = 0; j < seq; ++j) {
            profile.weights[static_cast<size_t>(j)] = map.at(seq - 1, j);
        }
    } else {
        for (const Matrix& map : heads) {
            for (int j = 0; j < seq; ++j) {
                profile.weights[static_cast<size_t>(j)] += map.at(seq - 1, j);
            }
        }
        for (double& w : profile.weights) {
            w /= static_cast<double>(heads.size());
        }
    }

    for (const Token& token : encoded.tokens) {
        profile.tokens.push_back(token.text);
        profile.token_spans.emplace_back(token.begin, token.end);
    }
    if (encoded.eos_position.has_value()) {
        profile.tokens.push_back(kEosToken);
        profile.token_spans.emplace_back(-1, -1);
    }
    return profile;
}

}  // namespace

AttentionProfile final_token_profile(const Embedder& embedder, const std::string& text) {
    return profile_from_forward(embedder, text, std::nullopt);
}

std::vector<AttentionProfile> final_token_profile_per_head(const Embedder& embedder,
                                                           const std::string& text) {
    std::vector<AttentionProfile> out;
    for (int h = 0; h < embedder.config->n_heads; ++h) {
        out.push_back(profile_from_forward(embedder, text, h));
    }
    return out;
}

std::vector<double> profile_diff(const AttentionProfile& before, const AttentionProfile& after) {
    if (before.tokens != after.tokens) {
        throw std::invalid_argument("profile_diff: token sequences differ");
    }
    std::vector<double> deltas(before.weights.size());
    for (size_t i = 0; i < deltas.size(); ++i) {
        deltas[i] = after.weights[i] - before.weights[i];
    }
    return deltas;
}

double content_mass(const AttentionProfile& profile, const ContentSpan& span) {
    if (span.begin < 0 || span.end < span.begin ||
        span.end > static_cast<int>(profile.prompted_text.size())) {
        throw std::invalid_argument("content_mass: span outside the prompted text");
    }
    double mass = 0.0;
    for (size_t i = 0; i < profile.tokens.size(); ++i) {
        const auto& [begin, end] = profile.token_spans[i];
        if (begin >= span.begin && end <= span.end && begin >= 0) {
            mass += profile.weights[i];
        }
    }
    return mass;
}

void save_profile_csv(const AttentionProfile& profile, const std::string& path,
                      const std::string& checkpoint_id, const std::string& template_name) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << "# checkpoint=" << checkpoint_id << " template=" << template_name
        << " layer=" << profile.layer
        << " aggregated_over_heads=" << (profile.aggregated_over_heads ? "true" : "false") << "\n";
    out << "token,weight\n";
    out.precision(17);
    for (size_t i = 0; i < profile.tokens.size(); ++i) {
        std::string token = profile.tokens[i];
        if (token.find(',') != std::string::npos || token.find('"') != std::string::npos) {
            std::string quoted = "\"";
            for (char c : token) {
                if (c == '"') {
                    quoted += '"';
                }
                quoted += c;
            }
            quoted += '"';
            token = quoted;
        }
        out << token << ',' << profile.weights[i] << '\n';
    }
}

void save_profile_json(const AttentionProfile& profile, const std::string& path,
                       const std::string& checkpoint_id, const std::string& template_name) {
    nlohmann::json j;
    j["checkpoint"] = checkpoint_id;
    j["template"] = template_name;
    j["layer"] = profile.layer;
    j["aggregated_over_heads"] = profile.aggregated_over_heads;
    j["tokens"] = profile.tokens;
    j["weights"] = profile.weights;
    j["token_spans"] = profile.token_spans;
    j["prompted_text"] = profile.prompted_text;
    j["content_span"] = {profile.content.begin, profile.content.end};
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << j.dump(2) << '\n';
}

}  // namespace tinyembed

// Figure-style attention analysis: the final token's outgoing attention over
// all positions at the last layer, averaged across heads, with per-token
// labels and content-span mass.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tinyembed/embedder.hpp"
#include "tinyembed/prompts.hpp"

namespace tinyembed {

struct AttentionProfile {
    std::vector<std::string> tokens;
    std::vector<double> weights;                   // sums to 1 within 1e-5
    std::vector<std::pair<int, int>> token_spans;  // byte ranges in prompted_text
    int layer = 0;
    bool aggregated_over_heads = true;
    std::string prompted_text;
    ContentSpan content;
};

// Applies the embedder's template (when set), forwards with attention maps,
// and averages the last row of every head at the last layer.
AttentionProfile final_token_profile(const Embedder& embedder, const std::string& text);

// Per-head profiles in head order, for inspection beyond the averaged view.
std::vector<AttentionProfile> final_token_profile_per_head(const Embedder& embedder,
                                                           const std::string& text);

// after - before, elementwise. Throws when the token lists differ.
std::vector<double> profile_diff(const AttentionProfile& before, const AttentionProfile& after);

// Total attention mass on tokens lying inside [span.begin, span.end).
double content_mass(const AttentionProfile& profile, const ContentSpan& span);

void save_profile_csv(const AttentionProfile& profile, const std::string& path,
                      const std::string& checkpoint_id, const std::string& template_name);
void save_profile_json(const AttentionProfile& profile, const std::string& path,
                       const std::string& checkpoint_id, const std::string& template_name);

}  // namespace tinyembed

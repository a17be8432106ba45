// Low-rank adapters on named projection sites. The backbone stays frozen;
// only the A/B factors train. B starts at zero so a freshly attached adapter
// is exactly the base model, and merge() folds the deltas back into plain
// weights.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tinyembed/model.hpp"

namespace tinyembed {

struct LoraSpec {
    int rank = 8;
    double alpha = 16.0;
    double dropout_p = 0.05;
    std::vector<Site> sites = default_sites();

    static std::vector<Site> default_sites() {
        return {Site::q, Site::v, Site::o, Site::gate, Site::up, Site::down};
    }

    double scale() const { return alpha / static_cast<double>(rank); }
    bool adapts(Site s) const;
    void validate() const;  // throws on rank < 1, p outside [0,1), empty sites, or site k
};

struct SiteAdapter {
    Matrix a;  // rank x in_dim
    Matrix b;  // out_dim x rank
};

struct AdapterWeights {
    LoraSpec spec;
    // [layer][site] -> adapter; nullopt for unadapted sites.
    std::vector<std::array<std::optional<SiteAdapter>, kNumSites>> layers;

    int64_t trainable_count() const;
};

struct AdapterGrads {
    std::vector<std::array<std::optional<SiteAdapter>, kNumSites>> layers;
};

// Passed into forward/backward to activate the adapter path.
// dropout_rng must be set when train_mode with dropout_p > 0.
struct LoraRuntime {
    const AdapterWeights* adapters = nullptr;
    bool train_mode = false;
    std::mt19937_64* dropout_rng = nullptr;
};

struct AdaptedModel {
    ModelConfig config;
    Parameters base;  // frozen; only adapters receives optimizer updates
    AdapterWeights adapters;

    LoraRuntime eval_runtime() const { return LoraRuntime{&adapters, false, nullptr}; }
};

AdaptedModel attach(const ModelConfig& config, const Parameters& params, const LoraSpec& spec,
                    uint64_t seed);

// Plain parameters with every adapted site folded in: W' = W + (alpha/rank) B A.
Parameters merge(const AdaptedModel& adapted);

AdapterGrads zero_adapter_grads(const AdapterWeights& adapters);
void accumulate(AdapterGrads& into, const AdapterGrads& grads);

void save_adapter(const AdapterWeights& adapters, const std::string& path,
                  const std::map<std::string, std::string>& extra_meta = {});
AdapterWeights load_adapter(const std::string& path);

// In/out dims of a projection site for a given config.
std::pair<int, int> site_dims(const ModelConfig& config, Site site);

}  // namespace tinyembed

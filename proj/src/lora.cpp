#include "tinyembed/lora.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "tinyembed/checkpoint.hpp"

namespace tinyembed {

bool LoraSpec::adapts(Site s) const {
    for (Site site : sites) {
        if (site == s) {
            return true;
        }
    }
    return false;
}

void LoraSpec::validate() const {
    if (rank < 1) {
        throw std::invalid_argument("lora: rank must be >= 1");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw std::invalid_argument("lora: dropout_p must be in [0, 1)");
    }
    if (sites.empty()) {
        throw std::invalid_argument("lora: sites must be non-empty");
    }
    for (Site s : sites) {
        if (s == Site::k) {
            throw std::invalid_argument("lora: the key projection is never adapted");
        }
    }
}

std::pair<int, int> site_dims(const ModelConfig& config, Site site) {
    switch (site) {
        case Site::q:
        case Site::k:
        case Site::v:
        case Site::o:
            return {config.d_model, config.d_model};
        case Site::gate:
        case Site::up:
            return {config.d_model, config.d_ff};
        case Site::down:
            return {config.d_ff, config.d_model};
    }
    throw std::invalid_argument("site_dims: bad site");
}

int64_t AdapterWeights::trainable_count() const {
    int64_t n = 0;
    for (const auto& layer : layers) {
        for (const auto& slot : layer) {
            if (slot.has_value()) {
                n += static_cast<int64_t>(slot->a.size()) + static_cast<int64_t>(slot->b.size());
            }
        }
    }
    return n;
}

AdaptedModel attach(const ModelConfig& config, const Parameters& params, const LoraSpec& spec,
                    uint64_t seed) {
    config.validate();
    spec.validate();

    AdaptedModel model;
    model.config = config;
    model.base = params;
    model.adapters.spec = spec;
    model.adapters.layers.resize(static_cast<size_t>(config.n_layers));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    for (int l = 0; l < config.n_layers; ++l) {
        for (Site s : spec.sites) {
            const auto [in_dim, out_dim] = site_dims(config, s);
            SiteAdapter adapter;
            adapter.a = Matrix(spec.rank, in_dim);
            const double std = 1.0 / std::sqrt(static_cast<double>(in_dim));
            for (double& v : adapter.a.data) {
                v = unit_normal(rng) * std;
            }
            adapter.b = Matrix(out_dim, spec.rank);  // zero-init: attach is an exact identity
            model.adapters.layers[static_cast<size_t>(l)][static_cast<int>(s)] = std::move(adapter);
        }
    }
    return model;
}

Parameters merge(const AdaptedModel& adapted) {
    Parameters merged = adapted.base;
    const double scale = adapted.adapters.spec.scale();
    for (size_t l = 0; l < merged.layers.size(); ++l) {
        for (Site s : kAllSites) {
            const auto& slot = adapted.adapters.layers[l][static_cast<int>(s)];
            if (!slot.has_value()) {
                continue;
            }
            Matrix& w = merged.layers[l].site(s);
            const Matrix& a = slot->a;
            const Matrix& b = slot->b;
            for (int o = 0; o < w.rows; ++o) {
                for (int i = 0; i < w.cols; ++i) {
                    double delta = 0.0;
                    for (int r = 0; r < a.rows; ++r) {
                        delta += b.at(o, r) * a.at(r, i);
                    }
                    w.at(o, i) += scale * delta;
                }
            }
        }
    }
    return merged;
}

AdapterGrads zero_adapter_grads(const AdapterWeights& adapters) {
    AdapterGrads grads;
    grads.layers.resize(adapters.layers.size());
    for (size_t l = 0; l < adapters.layers.size(); ++l) {
        for (int s = 0; s < kNumSites; ++s) {
            const auto& slot = adapters.layers[l][s];
            if (slot.has_value()) {
                grads.layers[l][s] = SiteAdapter{Matrix(slot->a.rows, slot->a.cols),
                                                 Matrix(slot->b.rows, slot->b.cols)};
            }
        }
    }
    return grads;
}

void accumulate(AdapterGrads& into, const AdapterGrads& grads) {
    for (size_t l = 0; l < into.layers.size(); ++l) {
        for (int s = 0; s < kNumSites; ++s) {
            auto& dst = into.layers[l][s];
            const auto& src = grads.layers[l][s];
            if (!dst.has_value() || !src.has_value()) {
                continue;
            }
            for (size_t i = 0; i < dst->a.data.size(); ++i) {
                dst->a.data[i] += src->a.data[i];
            }
            for (size_t i = 0; i < dst->b.data.size(); ++i) {
                dst->b.data[i] += src->b.data[i];
            }
        }
    }
}

void save_adapter(const AdapterWeights& adapters, const std::string& path,
                  const std::map<std::string, std::string>& extra_meta) {
    TensorFile file;
    file.meta = extra_meta;
    file.meta["kind"] = "adapter";
    nlohmann::json spec;
    spec["rank"] = adapters.spec.rank;
    spec["alpha"] = adapters.spec.alpha;
    spec["dropout_p"] = adapters.spec.dropout_p;
    spec["sites"] = nlohmann::json::array();
    for (Site s : adapters.spec.sites) {
        spec["sites"].push_back(site_name(s));
    }
    spec["n_layers"] = adapters.layers.size();
    file.meta["lora_spec"] = spec.dump();

    for (size_t l = 0; l < adapters.layers.size(); ++l) {
        for (int s = 0; s < kNumSites; ++s) {
            const auto& slot = adapters.layers[l][s];
            if (!slot.has_value()) {
                continue;
            }
            const std::string prefix =
                "lora." + std::to_string(l) + "." + site_name(static_cast<Site>(s)) + ".";
            file.put(prefix + "A", slot->a);
            file.put(prefix + "B", slot->b);
        }
    }
    save_tensor_file(file, path);
}

AdapterWeights load_adapter(const std::string& path) {
    TensorFile file = load_tensor_file(path);
    auto it = file.meta.find("lora_spec");
    if (file.meta["kind"] != "adapter" || it == file.meta.end()) {
        throw std::runtime_error("load_adapter: " + path + " is not an adapter checkpoint");
    }
    nlohmann::json spec_json = nlohmann::json::parse(it->second);

    AdapterWeights adapters;
    adapters.spec.rank = spec_json["rank"].get<int>();
    adapters.spec.alpha = spec_json["alpha"].get<double>();
    adapters.spec.dropout_p = spec_json["dropout_p"].get<double>();
    adapters.spec.sites.clear();
    for (const auto& name : spec_json["sites"]) {
        adapters.spec.sites.push_back(site_from_name(name.get<std::string>()));
    }
    adapters.spec.validate();
    adapters.layers.resize(spec_json["n_layers"].get<size_t>());
    for (size_t l = 0; l < adapters.layers.size(); ++l) {
        for (Site s : adapters.spec.sites) {
            const std::string prefix = "lora." + std::to_string(l) + "." + site_name(s) + ".";
            auto a_it = file.tensors.find(prefix + "A");
            auto b_it = file.tensors.find(prefix + "B");
            if (a_it == file.tensors.end() || b_it == file.tensors.end()) {
                throw std::runtime_error("load_adapter: missing tensors for " + prefix);
            }
            SiteAdapter adapter;
            adapter.a = Matrix(static_cast<int>(a_it->second.shape[0]), static_cast<int>(a_it->second.shape[1]));
            adapter.a.data = a_it->second.values;
            adapter.b = Matrix(static_cast<int>(b_it->second.shape[0]), static_cast<int>(b_it->second.shape[1]));
            adapter.b.data = b_it->second.values;
            adapters.layers[l][static_cast<int>(s)] = std::move(adapter);
        }
    }
    return adapters;
}

}  // namespace tinyembed

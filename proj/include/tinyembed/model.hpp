// Toy decoder-only transformer: RMS pre-norm, rotary attention, Llama-style
// gate/up/down MLP. Forward produces final-layer hidden states and per-head
// attention maps; backward is written by hand and is checked against central
// finite differences in the test suite.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyembed/tensor.hpp"

namespace tinyembed {

struct LoraRuntime;  // defined in lora.hpp
struct AdapterWeights;

enum class Site : int { q = 0, k = 1, v = 2, o = 3, gate = 4, up = 5, down = 6 };
inline constexpr int kNumSites = 7;
inline constexpr std::array<Site, 7> kAllSites = {Site::q, Site::k, Site::v, Site::o,
                                                  Site::gate, Site::up, Site::down};

const char* site_name(Site site);
Site site_from_name(const std::string& name);  // throws on unknown name

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 0;
    int n_layers = 0;
    int n_heads = 0;
    int d_ff = 0;
    int max_seq_len = 0;
    uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;  // throws on non-positive counts or indivisible d_model
};

struct LayerParams {
    Matrix q, k, v, o;  // d_model x d_model
    Matrix gate, up;    // d_ff x d_model
    Matrix down;        // d_model x d_ff
    Vector norm1, norm2;

    Matrix& site(Site s);
    const Matrix& site(Site s) const;
};

struct Parameters {
    Matrix embedding;  // vocab_size x d_model
    std::vector<LayerParams> layers;
    Vector final_norm;
};

// [layer][head] -> seq x seq row-stochastic matrix, future entries exactly 0.
struct AttentionMaps {
    std::vector<std::vector<Matrix>> weights;
};

struct HiddenStates {
    Matrix values;  // seq x d_model, final layer after the last norm
};

// Per-layer activations retained for the backward pass.
struct LayerCache {
    Matrix x_in;     // residual stream entering the layer
    Matrix n1;       // norm1 output
    Vector inv1;     // 1/rms per position
    Matrix q_rot, k_rot, v;
    std::vector<Matrix> probs;  // per head, seq x seq
    Matrix ctx;      // concatenated head outputs (o-projection input)
    Matrix x_mid;    // after attention residual
    Matrix n2;
    Vector inv2;
    Matrix gate_pre, up_out, mlp_h;  // d_ff activations
    // Dropout scale masks for adapter input paths, per site; empty when the
    // adapter path saw no dropout (eval mode or p = 0).
    std::array<Matrix, kNumSites> adapter_mask;
};

struct ForwardCache {
    std::vector<int> ids;
    std::vector<LayerCache> layers;
    Matrix x_final;   // input to the final norm
    Vector inv_final;
};

struct ForwardOptions {
    bool want_attention = false;
    bool want_cache = false;
    const LoraRuntime* lora = nullptr;
};

struct ForwardResult {
    HiddenStates hidden;
    AttentionMaps attention;
    ForwardCache cache;
};

struct AdapterGrads;  // defined in lora.hpp

struct BackwardResult {
    Parameters params;                       // gradient for every backbone tensor
    std::shared_ptr<AdapterGrads> adapters;  // set when a LoRA runtime was supplied
};

int64_t parameter_count(const ModelConfig& config);

Parameters init_parameters(const ModelConfig& config);

ForwardResult forward(const ModelConfig& config, const Parameters& params,
                      std::span<const int> ids, const ForwardOptions& options = {});

BackwardResult backward(const ModelConfig& config, const Parameters& params,
                        const ForwardCache& cache, const Matrix& upstream,
                        const LoraRuntime* lora = nullptr);

Parameters zero_like(const ModelConfig& config);

// In-place elementwise accumulate; shapes must match.
void accumulate(Parameters& into, const Parameters& grads);

// Checkpoint round trip through the named-tensor container.
void save_model(const ModelConfig& config, const Parameters& params, const std::string& path,
                const std::map<std::string, std::string>& extra_meta = {});
std::pair<ModelConfig, Parameters> load_model(const std::string& path);

// Order-stable digest of every parameter value; used by frozen-backbone checks.
uint64_t parameter_checksum(const Parameters& params);

}  // namespace tinyembed

#pragma once

#include "brc/common.hpp"
#include "brc/tokenizer.hpp"

#include <compare>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace brc {

struct ModelConfig {
    int n_layers = 0;
    int d_model = 0;
    int n_heads = 0;
    int d_vocab = 0;
    int n_ctx = 0;
    float layer_norm_eps = 1e-5f;

    void validate() const;
};

/// Residual-stream addresses within one block:
///   resid_pre  - block input
///   resid_mid  - after the attention output is added, before the MLP
///   resid_post - after the MLP output is added
enum class SiteKind { resid_pre, resid_mid, resid_post };

const char* site_kind_name(SiteKind kind);
SiteKind site_kind_from_name(std::string_view name);

struct HookSite {
    int layer = 0;
    SiteKind kind = SiteKind::resid_post;

    auto operator<=>(const HookSite&) const = default;
    std::string to_string() const;
};

enum class TokenScope { all_tokens, final_token };

/// Adds alpha * direction to the residual stream at `site`, at every
/// position or only the last one depending on scope.
struct Intervention {
    HookSite site;
    VectorF direction;
    float alpha = 0.0f;
    TokenScope scope = TokenScope::all_tokens;
};

/// Residual activations (seq_len x d_model) recorded during a forward pass,
/// after any intervention at that site was applied.
using ActivationCache = std::map<HookSite, MatrixF>;

struct LayerWeights {
    VectorF ln1_gamma, ln1_beta;
    MatrixF attn_qkv_w;  // [d_model, 3*d_model], y = x W + b
    VectorF attn_qkv_b;
    MatrixF attn_proj_w;  // [d_model, d_model]
    VectorF attn_proj_b;
    VectorF ln2_gamma, ln2_beta;
    MatrixF mlp_fc_w;  // [d_model, 4*d_model]
    VectorF mlp_fc_b;
    MatrixF mlp_proj_w;  // [4*d_model, d_model]
    VectorF mlp_proj_b;
};

/// Immutable weights + tokenizer. Safe to share across threads; forward()
/// allocates all its scratch state per call.
struct ModelBundle {
    ModelConfig config;
    MatrixF token_embedding;     // [d_vocab, d_model]
    MatrixF position_embedding;  // [n_ctx, d_model]
    std::vector<LayerWeights> layers;
    VectorF lnf_gamma, lnf_beta;
    MatrixF unembedding;  // [d_vocab, d_model]; empty when tied to token_embedding
    BpeTokenizer tokenizer;
    uint64_t fingerprint = 0;

    const MatrixF& unembed_matrix() const {
        return unembedding.size() > 0 ? unembedding : token_embedding;
    }
    void validate_shapes() const;
};

/// Loads a GPT-2 style checkpoint: safetensors weights + JSON architecture
/// config + tokenizer vocab/merges. Missing unembedding falls back to the
/// transposed token embedding (GPT-2 ties these).
ModelBundle load_model(const std::string& weights_path, const std::string& config_path,
                       const std::string& vocab_path, const std::string& merges_path);

/// Convenience for the published single-directory layout
/// (model.safetensors, config.json, vocab.json, merges.txt).
ModelBundle load_model_dir(const std::string& model_dir);

struct ForwardResult {
    std::vector<float> logits;  // d_vocab, final position
    ActivationCache cache;
};

/// Deterministic single-sequence forward pass. Interventions are applied in
/// layer order at hook time; the cache records post-intervention values, so
/// reading the injection site witnesses the injection. Requesting read
/// sites never changes the logits.
ForwardResult forward(const ModelBundle& model, std::span<const TokenId> tokens,
                      std::span<const Intervention> interventions = {},
                      std::span<const HookSite> read_sites = {});

/// Decodes a residual vector to vocabulary logits: final layer norm, then
/// the unembedding matrix. Applied to the last layer's resid_post at the
/// final position this reproduces the model's own logits.
std::vector<float> logit_lens(const ModelBundle& model, const Eigen::Ref<const VectorF>& residual);

}  // namespace brc

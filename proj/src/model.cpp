#include "brc/model.hpp"

#include "brc/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>

namespace brc {

void ModelConfig::validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_vocab <= 0 || n_ctx <= 0)
        throw DataError("model config: all dimensions must be strictly positive");
    if (d_model % n_heads != 0)
        throw DataError("model config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    if (!(layer_norm_eps > 0.0f))
        throw DataError("model config: layer_norm_eps must be positive");
}

const char* site_kind_name(SiteKind kind) {
    switch (kind) {
        case SiteKind::resid_pre: return "resid_pre";
        case SiteKind::resid_mid: return "resid_mid";
        case SiteKind::resid_post: return "resid_post";
    }
    return "?";
}

SiteKind site_kind_from_name(std::string_view name) {
    if (name == "resid_pre" || name == "pre") return SiteKind::resid_pre;
    if (name == "resid_mid" || name == "mid") return SiteKind::resid_mid;
    if (name == "resid_post" || name == "post") return SiteKind::resid_post;
    throw ConfigError("unknown hook site kind '" + std::string(name) +
                      "' (expected resid_pre, resid_mid, or resid_post)");
}

std::string HookSite::to_string() const {
    return "L" + std::to_string(layer) + "/" + site_kind_name(kind);
}

void ModelBundle::validate_shapes() const {
    config.validate();
    auto expect = [](bool ok, const std::string& what) {
        if (!ok) throw DataError("model bundle: unexpected shape for " + what);
    };
    expect(token_embedding.rows() == config.d_vocab && token_embedding.cols() == config.d_model,
           "token embedding");
    expect(position_embedding.rows() == config.n_ctx && position_embedding.cols() == config.d_model,
           "position embedding");
    expect(static_cast<int>(layers.size()) == config.n_layers, "layer stack");
    const int d = config.d_model;
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& L = layers[i];
        const std::string tag = "layer " + std::to_string(i);
        expect(L.ln1_gamma.size() == d && L.ln1_beta.size() == d, tag + " ln_1");
        expect(L.attn_qkv_w.rows() == d && L.attn_qkv_w.cols() == 3 * d, tag + " attn qkv");
        expect(L.attn_qkv_b.size() == 3 * d, tag + " attn qkv bias");
        expect(L.attn_proj_w.rows() == d && L.attn_proj_w.cols() == d, tag + " attn proj");
        expect(L.attn_proj_b.size() == d, tag + " attn proj bias");
        expect(L.ln2_gamma.size() == d && L.ln2_beta.size() == d, tag + " ln_2");
        expect(L.mlp_fc_w.rows() == d && L.mlp_fc_w.cols() == 4 * d, tag + " mlp fc");
        expect(L.mlp_fc_b.size() == 4 * d, tag + " mlp fc bias");
        expect(L.mlp_proj_w.rows() == 4 * d && L.mlp_proj_w.cols() == d, tag + " mlp proj");
        expect(L.mlp_proj_b.size() == d, tag + " mlp proj bias");
    }
    expect(lnf_gamma.size() == d && lnf_beta.size() == d, "final layer norm");
    if (unembedding.size() > 0)
        expect(unembedding.rows() == config.d_vocab && unembedding.cols() == d, "unembedding");
}

namespace {

uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    Fnv1a hash;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        hash.update(buf, static_cast<size_t>(in.gcount()));
    }
    return hash.digest();
}

ModelConfig parse_config(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open model config: " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model config " + config_path + ": " + e.what());
    }
    auto require_int = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_number_integer())
            throw DataError("model config " + config_path + ": missing integer field '" +
                            std::string(key) + "'");
        return j[key].get<int>();
    };
    ModelConfig cfg;
    cfg.n_layers = require_int("n_layer");
    cfg.d_model = require_int("n_embd");
    cfg.n_heads = require_int("n_head");
    cfg.d_vocab = require_int("vocab_size");
    cfg.n_ctx = j.contains("n_positions") ? j["n_positions"].get<int>() : require_int("n_ctx");
    cfg.layer_norm_eps =
        j.contains("layer_norm_epsilon") ? j["layer_norm_epsilon"].get<float>() : 1e-5f;
    cfg.validate();
    return cfg;
}

}  // namespace

ModelBundle load_model(const std::string& weights_path, const std::string& config_path,
                       const std::string& vocab_path, const std::string& merges_path) {
    ModelBundle m;
    m.config = parse_config(config_path);

    const SafetensorsFile st = SafetensorsFile::open(weights_path);
    // checkpoints exported with a wrapping module carry a "transformer." prefix
    const std::string prefix = st.contains("wte.weight") ? "" : "transformer.";
    auto name = [&](const std::string& suffix) { return prefix + suffix; };

    const int d = m.config.d_model;
    m.token_embedding = st.matrix(name("wte.weight"), m.config.d_vocab, d);
    m.position_embedding = st.matrix(name("wpe.weight"), m.config.n_ctx, d);
    m.layers.reserve(static_cast<size_t>(m.config.n_layers));
    for (int l = 0; l < m.config.n_layers; ++l) {
        const std::string h = "h." + std::to_string(l) + ".";
        LayerWeights w;
        w.ln1_gamma = st.vector(name(h + "ln_1.weight"), d);
        w.ln1_beta = st.vector(name(h + "ln_1.bias"), d);
        w.attn_qkv_w = st.matrix(name(h + "attn.c_attn.weight"), d, 3 * d);
        w.attn_qkv_b = st.vector(name(h + "attn.c_attn.bias"), 3 * d);
        w.attn_proj_w = st.matrix(name(h + "attn.c_proj.weight"), d, d);
        w.attn_proj_b = st.vector(name(h + "attn.c_proj.bias"), d);
        w.ln2_gamma = st.vector(name(h + "ln_2.weight"), d);
        w.ln2_beta = st.vector(name(h + "ln_2.bias"), d);
        w.mlp_fc_w = st.matrix(name(h + "mlp.c_fc.weight"), d, 4 * d);
        w.mlp_fc_b = st.vector(name(h + "mlp.c_fc.bias"), 4 * d);
        w.mlp_proj_w = st.matrix(name(h + "mlp.c_proj.weight"), 4 * d, d);
        w.mlp_proj_b = st.vector(name(h + "mlp.c_proj.bias"), d);
        m.layers.push_back(std::move(w));
    }
    m.lnf_gamma = st.vector(name("ln_f.weight"), d);
    m.lnf_beta = st.vector(name("ln_f.bias"), d);
    if (st.contains(name("lm_head.weight")) || st.contains("lm_head.weight")) {
        const std::string key =
            st.contains("lm_head.weight") ? "lm_head.weight" : name("lm_head.weight");
        m.unembedding = st.matrix(key, m.config.d_vocab, d);
    }
    m.validate_shapes();

    m.tokenizer = BpeTokenizer::load(vocab_path, merges_path);

    Fnv1a hash;
    hash.update_value(st.fingerprint());
    hash.update_value(hash_file(config_path));
    hash.update_value(hash_file(vocab_path));
    hash.update_value(hash_file(merges_path));
    m.fingerprint = hash.digest();
    return m;
}

ModelBundle load_model_dir(const std::string& model_dir) {
    return load_model(model_dir + "/model.safetensors", model_dir + "/config.json",
                      model_dir + "/vocab.json", model_dir + "/merges.txt");
}

namespace {

void layer_norm_into(const MatrixF& x, const VectorF& gamma, const VectorF& beta, float eps,
                     MatrixF& out) {
    out.resize(x.rows(), x.cols());
    const float inv_d = 1.0f / static_cast<float>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i).array();
        const float mean = row.sum() * inv_d;
        const auto centered = row - mean;
        const float var = centered.square().sum() * inv_d;
        const float inv_std = 1.0f / std::sqrt(var + eps);
        out.row(i).array() = centered * inv_std * gamma.transpose().array() +
                             beta.transpose().array();
    }
}

void gelu_inplace(MatrixF& x) {
    // tanh approximation, as used by the GPT-2 checkpoints
    constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
    constexpr float c = 0.044715f;
    x = x.unaryExpr([](float v) {
        return 0.5f * v * (1.0f + std::tanh(k * (v + c * v * v * v)));
    });
}

void lens_into(const ModelBundle& m, const Eigen::Ref<const VectorF>& residual, VectorF& logits) {
    const auto d = residual.size();
    const float inv_d = 1.0f / static_cast<float>(d);
    const float mean = residual.sum() * inv_d;
    VectorF normed = residual.array() - mean;
    const float var = normed.squaredNorm() * inv_d;
    const float inv_std = 1.0f / std::sqrt(var + m.config.layer_norm_eps);
    normed = normed.array() * inv_std * m.lnf_gamma.array() + m.lnf_beta.array();
    logits.noalias() = m.unembed_matrix() * normed;
}

struct HookContext {
    std::span<const Intervention> interventions;
    const std::set<HookSite>* read_sites;
    ActivationCache* cache;

    void visit(HookSite site, MatrixF& x) const {
        for (const Intervention& iv : interventions) {
            if (iv.site != site || iv.alpha == 0.0f) continue;
            if (iv.scope == TokenScope::all_tokens) {
                x.rowwise() += (iv.alpha * iv.direction).transpose();
            } else {
                x.row(x.rows() - 1) += (iv.alpha * iv.direction).transpose();
            }
        }
        if (read_sites->count(site)) (*cache)[site] = x;
    }
};

}  // namespace

ForwardResult forward(const ModelBundle& model, std::span<const TokenId> tokens,
                      std::span<const Intervention> interventions,
                      std::span<const HookSite> read_sites) {
    const ModelConfig& cfg = model.config;
    const auto T = static_cast<Eigen::Index>(tokens.size());
    if (T == 0) throw DataError("forward: empty token sequence");
    if (T > cfg.n_ctx)
        throw DataError("forward: sequence length " + std::to_string(T) +
                        " exceeds context window " + std::to_string(cfg.n_ctx));
    for (const TokenId t : tokens) {
        if (t < 0 || t >= cfg.d_vocab)
            throw DataError("forward: token id " + std::to_string(t) +
                            " out of vocabulary range [0, " + std::to_string(cfg.d_vocab) + ")");
    }
    std::set<HookSite> intervened;
    for (const Intervention& iv : interventions) {
        if (iv.site.layer < 0 || iv.site.layer >= cfg.n_layers)
            throw DataError("forward: intervention layer " + std::to_string(iv.site.layer) +
                            " out of range");
        if (iv.direction.size() != cfg.d_model)
            throw DataError("forward: intervention direction has length " +
                            std::to_string(iv.direction.size()) + ", expected d_model " +
                            std::to_string(cfg.d_model));
        if (!iv.direction.allFinite() || !std::isfinite(iv.alpha))
            throw NumericError("forward: non-finite intervention at " + iv.site.to_string());
        if (!intervened.insert(iv.site).second)
            throw DataError("forward: duplicate intervention site " + iv.site.to_string());
    }
    std::set<HookSite> reads(read_sites.begin(), read_sites.end());
    for (const HookSite& s : reads) {
        if (s.layer < 0 || s.layer >= cfg.n_layers)
            throw DataError("forward: read site layer " + std::to_string(s.layer) +
                            " out of range");
    }

    ForwardResult result;
    HookContext hooks{interventions, &reads, &result.cache};

    const int d = cfg.d_model;
    const int n_heads = cfg.n_heads;
    const int d_head = d / n_heads;
    const float attn_scale = 1.0f / std::sqrt(static_cast<float>(d_head));

    MatrixF x(T, d);
    for (Eigen::Index i = 0; i < T; ++i) {
        x.row(i) = model.token_embedding.row(tokens[static_cast<size_t>(i)]) +
                   model.position_embedding.row(i);
    }

    MatrixF normed, qkv, attn_ctx, scores, mlp_hidden;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& w = model.layers[static_cast<size_t>(l)];
        hooks.visit({l, SiteKind::resid_pre}, x);

        layer_norm_into(x, w.ln1_gamma, w.ln1_beta, cfg.layer_norm_eps, normed);
        qkv.noalias() = normed * w.attn_qkv_w;
        qkv.rowwise() += w.attn_qkv_b.transpose();

        attn_ctx.resize(T, d);
        for (int h = 0; h < n_heads; ++h) {
            const auto q = qkv.block(0, h * d_head, T, d_head);
            const auto k = qkv.block(0, d + h * d_head, T, d_head);
            const auto v = qkv.block(0, 2 * d + h * d_head, T, d_head);
            scores.noalias() = q * k.transpose();
            scores *= attn_scale;
            // causal mask + row-wise softmax
            for (Eigen::Index i = 0; i < T; ++i) {
                auto row = scores.row(i).head(i + 1).array();
                const float max_v = row.maxCoeff();
                row = (row - max_v).exp();
                row /= row.sum();
                scores.row(i).tail(T - i - 1).setZero();
            }
            attn_ctx.block(0, h * d_head, T, d_head).noalias() = scores * v;
        }
        x.noalias() += attn_ctx * w.attn_proj_w;
        x.rowwise() += w.attn_proj_b.transpose();
        hooks.visit({l, SiteKind::resid_mid}, x);

        layer_norm_into(x, w.ln2_gamma, w.ln2_beta, cfg.layer_norm_eps, normed);
        mlp_hidden.noalias() = normed * w.mlp_fc_w;
        mlp_hidden.rowwise() += w.mlp_fc_b.transpose();
        gelu_inplace(mlp_hidden);
        x.noalias() += mlp_hidden * w.mlp_proj_w;
        x.rowwise() += w.mlp_proj_b.transpose();
        hooks.visit({l, SiteKind::resid_post}, x);
    }

    VectorF logits;
    lens_into(model, x.row(T - 1).transpose(), logits);
    result.logits.assign(logits.data(), logits.data() + logits.size());
    return result;
}

std::vector<float> logit_lens(const ModelBundle& model,
                              const Eigen::Ref<const VectorF>& residual) {
    if (residual.size() != model.config.d_model)
        throw DataError("logit_lens: residual has length " + std::to_string(residual.size()) +
                        ", expected d_model " + std::to_string(model.config.d_model));
    if (!residual.allFinite()) throw NumericError("logit_lens: non-finite residual");
    VectorF logits;
    lens_into(model, residual, logits);
    return std::vector<float>(logits.data(), logits.data() + logits.size());
}

}  // namespace brc

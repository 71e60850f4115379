// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WAVEDIFF_UNET_HPP
#define WAVEDIFF_UNET_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavediff/nn.hpp"

// Composable 1D U-Net: a recursive block structure with pluggable
// shape-preserving items per resolution, plus the conditioning plugins
// (noise-level features, text embeddings, classifier-free guidance) and the
// learned front/back transform.
namespace wavediff::unet {

using nn::Conv1d;
using nn::ConvTranspose1d;
using nn::GroupNorm;
using nn::Linear;
using nn::ParamRegistry;
using nn::Tensor;

struct UNetConfig {
    int64_t in_channels = 1;
    int64_t out_channels = 0;  // 0 -> in_channels
    std::vector<int64_t> channels;
    std::vector<int64_t> factors;
    std::vector<int64_t> items;         // resnet count per level
    std::vector<int> attentions;        // 0/1 per level
    std::vector<int> cross_attentions;  // 0/1 per level
    int64_t attention_features = 64;    // per-head dim
    int64_t attention_heads = 8;
    int64_t modulation_features = 0;  // 0 disables modulation items
    int64_t embedding_features = 0;   // token embedding dim E (cross attention)
    std::vector<int64_t> inject_channels;  // per level, 0 = no inject item
    int64_t training_length = 0;           // declared length at the U-Net input
    int64_t max_attention_context = 2048;

    int levels() const { return static_cast<int>(channels.size()); }
    int64_t resolved_out_channels() const { return out_channels > 0 ? out_channels : in_channels; }

    int64_t total_downsampling() const {
        int64_t f = 1;
        for (int64_t v : factors) f *= v;
        return f;
    }
};

/// Length entering level `i`, i.e. after the transforms of all outer levels.
inline int64_t attention_context_at(const UNetConfig& cfg, int level) {
    int64_t len = cfg.training_length;
    for (int j = 0; j < level; ++j) len /= cfg.factors[j];
    return len;
}

inline void validate_config(const UNetConfig& cfg) {
    const size_t n = cfg.channels.size();
    if (n == 0) throw std::invalid_argument("unet: at least one level required");
    if (cfg.factors.size() != n || cfg.items.size() != n || cfg.attentions.size() != n ||
        cfg.cross_attentions.size() != n) {
        throw std::invalid_argument("unet: per-level lists must have equal length");
    }
    if (!cfg.inject_channels.empty() && cfg.inject_channels.size() != n) {
        throw std::invalid_argument("unet: inject_channels must be empty or one entry per level");
    }
    if (cfg.in_channels < 1) throw std::invalid_argument("unet: in_channels must be >= 1");
    if (cfg.training_length < 1) throw std::invalid_argument("unet: training_length must be set");

    int64_t len = cfg.training_length;
    for (size_t i = 0; i < n; ++i) {
        if (cfg.channels[i] < 1) throw std::invalid_argument("unet: channels must be positive");
        if (cfg.items[i] < 0) throw std::invalid_argument("unet: negative item count");
        if (cfg.factors[i] < 1) throw std::invalid_argument("unet: factors must be >= 1");
        if (len % cfg.factors[i] != 0) {
            throw std::invalid_argument("unet: level " + std::to_string(i) + " factor " +
                                        std::to_string(cfg.factors[i]) +
                                        " does not divide its input length " + std::to_string(len));
        }
        if (cfg.attentions[i] || cfg.cross_attentions[i]) {
            const int64_t context = attention_context_at(cfg, static_cast<int>(i));
            if (context > cfg.max_attention_context) {
                throw std::invalid_argument(
                    "unet: attention context " + std::to_string(context) + " at level " +
                    std::to_string(i) + " exceeds the limit of " +
                    std::to_string(cfg.max_attention_context) +
                    " for declared length " + std::to_string(cfg.training_length));
            }
            if (cfg.attention_heads < 1 || cfg.attention_features < 1) {
                throw std::invalid_argument("unet: attention dims must be positive");
            }
        }
        if (cfg.cross_attentions[i] && cfg.embedding_features < 1) {
            throw std::invalid_argument("unet: cross attention at level " + std::to_string(i) +
                                        " requires embedding_features");
        }
        len /= cfg.factors[i];
    }
    if (cfg.modulation_features != 0 &&
        (cfg.modulation_features < 2 || cfg.modulation_features % 2 != 0)) {
        throw std::invalid_argument("unet: modulation_features must be even and >= 2");
    }
}

/// The three conditioning contexts of a forward pass.
template <typename T>
struct Conditioning {
    Tensor<T> features;               // [B, Dmod]; undefined if absent
    Tensor<T> embedding;              // [B, S, E]; undefined if absent
    std::map<int, Tensor<T>> inject;  // level -> [B, C_inj, L_level]
};

// ---------------------------------------------------------------------------
// items

template <typename T>
struct Item {
    virtual ~Item() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>& cond, int level) = 0;
};

template <typename T>
struct ResnetItem final : Item<T> {
    GroupNorm<T> gn1, gn2;
    Conv1d<T> conv1, conv2;

    ResnetItem(ParamRegistry<T>& reg, const std::string& p, int64_t ch, Rng& rng)
        : gn1(reg, p + ".gn1", ch, rng),
          gn2(reg, p + ".gn2", ch, rng),
          conv1(reg, p + ".conv1", ch, ch, 3, 1, 1, rng),
          conv2(reg, p + ".conv2", ch, ch, 3, 1, 1, rng) {}

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>&, int) override {
        auto h = conv1.forward(nn::silu(gn1.forward(x)));
        h = conv2.forward(nn::silu(gn2.forward(h)));
        return nn::add(x, h);
    }
};

/// Per-channel scale/shift from the feature vector; the producing MLP's last
/// layer is zero-initialized so the item starts as the identity.
template <typename T>
struct ModulationItem final : Item<T> {
    Linear<T> l1, l2;
    int64_t channels;

    ModulationItem(ParamRegistry<T>& reg, const std::string& p, int64_t ch, int64_t feat, Rng& rng)
        : l1(reg, p + ".l1", feat, feat, rng),
          l2(reg, p + ".l2", feat, 2 * ch, rng, /*zero_init=*/true),
          channels(ch) {}

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>& cond, int level) override {
        if (!cond.features.defined()) {
            throw std::invalid_argument("modulation item at level " + std::to_string(level) +
                                        " needs feature conditioning");
        }
        auto sh = l2.forward(nn::silu(l1.forward(cond.features)));  // [B, 2C]
        const int64_t B = sh.dim(0);
        auto as3 = nn::reshape(sh, {B, 2 * channels, 1});
        auto s = nn::reshape(nn::slice_channels(as3, 0, channels), {B, channels});
        auto h = nn::reshape(nn::slice_channels(as3, channels, 2 * channels), {B, channels});
        return nn::scale_shift_channels(x, s, h);
    }
};

template <typename T>
struct AttentionItem final : Item<T> {
    GroupNorm<T> gn;
    Conv1d<T> qkv, out;
    int64_t heads;
    int64_t inner;

    AttentionItem(ParamRegistry<T>& reg, const std::string& p, int64_t ch, int64_t heads_,
                  int64_t head_features, Rng& rng)
        : gn(reg, p + ".gn", ch, rng),
          qkv(reg, p + ".qkv", ch, 3 * heads_ * head_features, 1, 1, 0, rng),
          out(reg, p + ".out", heads_ * head_features, ch, 1, 1, 0, rng, /*zero_init=*/true),
          heads(heads_),
          inner(heads_ * head_features) {}

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>&, int) override {
        auto h = qkv.forward(gn.forward(x));  // [B, 3D, L]
        auto q = nn::heads_to_rows(nn::slice_channels(h, 0, inner), heads);
        auto k = nn::heads_to_rows(nn::slice_channels(h, inner, 2 * inner), heads);
        auto v = nn::heads_to_rows(nn::slice_channels(h, 2 * inner, 3 * inner), heads);
        auto attncd = nn::rows_to_heads(nn::attention_rows(q, k, v), heads);
        return nn::add(x, out.forward(attncd));
    }
};

template <typename T>
struct CrossAttentionItem final : Item<T> {
    GroupNorm<T> gn;
    Conv1d<T> to_q;
    Linear<T> to_k, to_v;
    Conv1d<T> out;
    int64_t heads;

    CrossAttentionItem(ParamRegistry<T>& reg, const std::string& p, int64_t ch, int64_t emb_dim,
                       int64_t heads_, int64_t head_features, Rng& rng)
        : gn(reg, p + ".gn", ch, rng),
          to_q(reg, p + ".q", ch, heads_ * head_features, 1, 1, 0, rng),
          to_k(reg, p + ".k", emb_dim, heads_ * head_features, rng),
          to_v(reg, p + ".v", emb_dim, heads_ * head_features, rng),
          out(reg, p + ".out", heads_ * head_features, ch, 1, 1, 0, rng, /*zero_init=*/true),
          heads(heads_) {}

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>& cond, int level) override {
        if (!cond.embedding.defined()) {
            throw std::invalid_argument("cross-attention item at level " + std::to_string(level) +
                                        " needs an embedding");
        }
        const auto& emb = cond.embedding;  // [B, S, E]
        const int64_t B = emb.dim(0), S = emb.dim(1), E = emb.dim(2);
        auto q = nn::heads_to_rows(to_q.forward(gn.forward(x)), heads);
        auto flat = nn::reshape(emb, {B * S, E});
        auto k = nn::seq_to_rows(nn::reshape(to_k.forward(flat), {B, S, to_k.w.dim(1)}), heads);
        auto v = nn::seq_to_rows(nn::reshape(to_v.forward(flat), {B, S, to_v.w.dim(1)}), heads);
        auto attncd = nn::rows_to_heads(nn::attention_rows(q, k, v), heads);
        return nn::add(x, out.forward(attncd));
    }
};

template <typename T>
struct FeedForwardItem final : Item<T> {
    GroupNorm<T> gn;
    Conv1d<T> up, down;

    FeedForwardItem(ParamRegistry<T>& reg, const std::string& p, int64_t ch, Rng& rng)
        : gn(reg, p + ".gn", ch, rng),
          up(reg, p + ".up", ch, 2 * ch, 1, 1, 0, rng),
          down(reg, p + ".down", 2 * ch, ch, 1, 1, 0, rng) {}

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>&, int) override {
        return nn::add(x, down.forward(nn::silu(up.forward(gn.forward(x)))));
    }
};

/// Adds a zero-initialized projection of externally provided channels.
template <typename T>
struct InjectItem final : Item<T> {
    Conv1d<T> proj;

    InjectItem(ParamRegistry<T>& reg, const std::string& p, int64_t ch, int64_t inject_ch, Rng& rng)
        : proj(reg, p + ".proj", inject_ch, ch, 1, 1, 0, rng, /*zero_init=*/true) {}

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>& cond, int level) override {
        auto it = cond.inject.find(level);
        if (it == cond.inject.end()) {
            throw std::invalid_argument("inject item at level " + std::to_string(level) +
                                        " needs conditioning channels");
        }
        if (it->second.dim(2) != x.dim(2)) {
            throw std::invalid_argument(
                "inject channels at level " + std::to_string(level) + " have length " +
                std::to_string(it->second.dim(2)) + ", expected " + std::to_string(x.dim(2)));
        }
        return nn::add(x, proj.forward(it->second));
    }
};

// ---------------------------------------------------------------------------
// block / unet

template <typename T>
struct Block {
    int level = 0;
    Conv1d<T> down;
    ConvTranspose1d<T> up;
    Conv1d<T> skip;
    std::vector<std::unique_ptr<Item<T>>> items_down, items_up;
    std::unique_ptr<Block<T>> inner;

    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>& cond) {
        auto d = down.forward(x);
        for (auto& item : items_down) d = item->forward(d, cond, level);
        auto mid = inner ? inner->forward(d, cond) : d;
        for (auto& item : items_up) mid = item->forward(mid, cond, level);
        auto u = up.forward(mid);
        return skip.forward(nn::concat_channels(x, u));
    }
};

template <typename T>
struct UNet {
    UNetConfig cfg;
    std::unique_ptr<Block<T>> root;
    std::optional<Conv1d<T>> head;  // present iff out_channels != in_channels

    /// x [B, in_channels, L] -> [B, out_channels, L]
    Tensor<T> forward(const Tensor<T>& x, const Conditioning<T>& cond) {
        if (x.rank() != 3 || x.dim(1) != cfg.in_channels) {
            throw std::invalid_argument("unet: expected input [B, " +
                                        std::to_string(cfg.in_channels) + ", L], got " +
                                        nn::shape_str(x.shape()));
        }
        if (x.dim(2) % cfg.total_downsampling() != 0) {
            throw std::invalid_argument("unet: length " + std::to_string(x.dim(2)) +
                                        " not divisible by total downsampling " +
                                        std::to_string(cfg.total_downsampling()));
        }
        auto y = root->forward(x, cond);
        return head ? head->forward(y) : y;
    }
};

namespace detail {

template <typename T>
void build_items(std::vector<std::unique_ptr<Item<T>>>& stack, const UNetConfig& cfg, int level,
                 const std::string& prefix, ParamRegistry<T>& reg, Rng& rng) {
    const int64_t ch = cfg.channels[level];
    int res = 0, mod = 0;
    if (!cfg.inject_channels.empty() && cfg.inject_channels[level] > 0) {
        stack.push_back(std::make_unique<InjectItem<T>>(reg, prefix + ".inj0", ch,
                                                        cfg.inject_channels[level], rng));
    }
    for (int64_t i = 0; i < cfg.items[level]; ++i) {
        stack.push_back(
            std::make_unique<ResnetItem<T>>(reg, prefix + ".res" + std::to_string(res++), ch, rng));
        if (cfg.modulation_features > 0) {
            stack.push_back(std::make_unique<ModulationItem<T>>(
                reg, prefix + ".mod" + std::to_string(mod++), ch, cfg.modulation_features, rng));
        }
    }
    if (cfg.attentions[level]) {
        stack.push_back(std::make_unique<AttentionItem<T>>(
            reg, prefix + ".att0", ch, cfg.attention_heads, cfg.attention_features, rng));
    }
    if (cfg.cross_attentions[level]) {
        stack.push_back(std::make_unique<CrossAttentionItem<T>>(
            reg, prefix + ".xatt0", ch, cfg.embedding_features, cfg.attention_heads,
            cfg.attention_features, rng));
    }
    if (cfg.attentions[level] || cfg.cross_attentions[level]) {
        stack.push_back(std::make_unique<FeedForwardItem<T>>(reg, prefix + ".ff0", ch, rng));
    }
}

template <typename T>
std::unique_ptr<Block<T>> build_block(const UNetConfig& cfg, int level, int64_t in_ch,
                                      const std::string& prefix, ParamRegistry<T>& reg, Rng& rng) {
    auto block = std::make_unique<Block<T>>();
    block->level = level;
    const int64_t ch = cfg.channels[level];
    const int64_t f = cfg.factors[level];
    // kernel 3f / stride f / pad f keeps (L) -> (L/f) -> (L) exact for any f
    block->down = Conv1d<T>(reg, prefix + ".down", in_ch, ch, 3 * f, f, f, rng);
    build_items(block->items_down, cfg, level, prefix + ".d", reg, rng);
    if (level + 1 < cfg.levels()) {
        block->inner = build_block(cfg, level + 1, ch, prefix + ".b" + std::to_string(level + 1),
                                   reg, rng);
    }
    build_items(block->items_up, cfg, level, prefix + ".u", reg, rng);
    block->up = ConvTranspose1d<T>(reg, prefix + ".up", ch, in_ch, 3 * f, f, f, rng);
    block->skip = Conv1d<T>(reg, prefix + ".skip", 2 * in_ch, in_ch, 1, 1, 0, rng);
    return block;
}

}  // namespace detail

/// Deterministic construction: (config, rng seed) fully determine parameters.
template <typename T>
UNet<T> build_unet(const UNetConfig& cfg, ParamRegistry<T>& reg, Rng& rng,
                   const std::string& prefix = "unet") {
    validate_config(cfg);
    UNet<T> net;
    net.cfg = cfg;
    net.root = detail::build_block(cfg, 0, cfg.in_channels, prefix + ".b0", reg, rng);
    if (cfg.resolved_out_channels() != cfg.in_channels) {
        net.head = Conv1d<T>(reg, prefix + ".head", cfg.in_channels, cfg.resolved_out_channels(),
                             1, 1, 0, rng);
    }
    return net;
}

// ---------------------------------------------------------------------------
// plugins

/// Noise level -> feature vector via learned Fourier features and an MLP.
template <typename T>
struct TimeConditioning {
    Tensor<T> freqs;  // [Dmod/2], learned
    Linear<T> l1, l2;
    int64_t features = 0;

    TimeConditioning() = default;
    TimeConditioning(ParamRegistry<T>& reg, const std::string& prefix, int64_t feature_dim,
                     Rng& rng)
        : features(feature_dim) {
        if (feature_dim < 2 || feature_dim % 2 != 0) {
            throw std::invalid_argument("time conditioning: feature dim must be even and >= 2");
        }
        freqs = reg.create(prefix + ".freqs", {feature_dim / 2}, nn::Init::normal, rng);
        l1 = Linear<T>(reg, prefix + ".l1", feature_dim, feature_dim, rng);
        l2 = Linear<T>(reg, prefix + ".l2", feature_dim, feature_dim, rng);
    }

    /// Pre-MLP features: concat(sin(2 pi w t), cos(2 pi w t)), t one scalar per
    /// batch element. The 2 pi factor is folded in here; the learned w can
    /// absorb any rescaling.
    Tensor<T> fourier(const Tensor<T>& t) const {
        auto arg = nn::scale(nn::outer(t, freqs), static_cast<T>(6.283185307179586));
        return nn::concat_lastdim2(nn::sin_op(arg), nn::cos_op(arg));
    }

    Tensor<T> forward(const Tensor<T>& t) const {
        return l2.forward(nn::silu(l1.forward(fourier(t))));
    }
};

/// Whitespace tokenizer + hashed bucket lookup, padded with the learned fixed
/// embedding that classifier-free guidance also uses as its mask.
template <typename T>
struct TextConditioner {
    Tensor<T> vocab;  // [V, E]
    Tensor<T> fixed;  // [S, E]
    int64_t vocab_size = 0;
    int64_t max_length = 0;
    int64_t features = 0;

    TextConditioner() = default;
    TextConditioner(ParamRegistry<T>& reg, const std::string& prefix, int64_t vocab_size_,
                    int64_t max_length_, int64_t features_, Rng& rng)
        : vocab_size(vocab_size_), max_length(max_length_), features(features_) {
        vocab = reg.create(prefix + ".vocab", {vocab_size_, features_}, nn::Init::normal, rng);
        fixed = reg.create(prefix + ".fixed", {max_length_, features_}, nn::Init::normal, rng);
    }

    static std::vector<std::string> tokenize(const std::string& text) {
        std::vector<std::string> tokens;
        std::string cur;
        for (char c : text) {
            if (c == ' ' || c == '\t' || c == '\n' || c == ',') {
                if (!cur.empty()) tokens.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) tokens.push_back(std::move(cur));
        return tokens;
    }

    int64_t bucket(const std::string& token) const {
        uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : token) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return static_cast<int64_t>(h % static_cast<uint64_t>(vocab_size));
    }

    /// [B, S, E]; slots beyond the token count (or whole rows under
    /// cfg_mask) take the fixed embedding.
    Tensor<T> embed(const std::vector<std::string>& texts,
                    const std::vector<uint8_t>& cfg_mask = {}) const {
        const int64_t B = static_cast<int64_t>(texts.size());
        if (!cfg_mask.empty() && static_cast<int64_t>(cfg_mask.size()) != B) {
            throw std::invalid_argument("text embed: cfg mask size mismatch");
        }
        std::vector<int64_t> token_idx(B * max_length, 0);
        std::vector<int64_t> fixed_idx(B * max_length, 0);
        std::vector<uint8_t> use_fixed(B * max_length, 0);
        for (int64_t b = 0; b < B; ++b) {
            const auto tokens = tokenize(texts[b]);
            const bool masked = !cfg_mask.empty() && cfg_mask[b];
            for (int64_t s = 0; s < max_length; ++s) {
                fixed_idx[b * max_length + s] = s;
                if (masked || s >= static_cast<int64_t>(tokens.size())) {
                    use_fixed[b * max_length + s] = 1;
                } else {
                    token_idx[b * max_length + s] = bucket(tokens[s]);
                }
            }
        }
        auto from_vocab = nn::embedding_lookup(vocab, token_idx, B, max_length);
        auto from_fixed = nn::embedding_lookup(fixed, fixed_idx, B, max_length);
        return nn::where_slots(use_fixed, from_fixed, from_vocab);
    }

    /// The fully-masked embedding batch used by CFG.
    Tensor<T> masked_batch(int64_t B) const {
        return embed(std::vector<std::string>(B, std::string()), {});
    }
};

/// Classifier-free guidance: y = y_masked + (y_cond - y_masked) * lambda.
/// lambda 0 and 1 short-circuit to a single forward so they are bit-exact.
template <typename T>
Tensor<T> cfg_forward(UNet<T>& net, const Tensor<T>& x, const Conditioning<T>& conditioned,
                      const Conditioning<T>& masked, double lambda) {
    if (!conditioned.embedding.defined() || !masked.embedding.defined()) {
        throw std::invalid_argument("cfg_forward: both embeddings must be provided");
    }
    if (lambda == 0.0) return net.forward(x, masked);
    if (lambda == 1.0) return net.forward(x, conditioned);
    auto y_m = net.forward(x, masked);
    auto y_e = net.forward(x, conditioned);
    return nn::add(y_m, nn::scale(nn::sub(y_e, y_m), static_cast<T>(lambda)));
}

// ---------------------------------------------------------------------------
// pre/post transforms

/// Learned front/back transform: a strided conv trades length for channels,
/// a transposed conv restores it.
template <typename T>
struct LearnedTransform {
    Conv1d<T> front;           // in -> filters
    ConvTranspose1d<T> back;   // filters -> out
    int64_t stride = 1;

    LearnedTransform() = default;
    LearnedTransform(ParamRegistry<T>& reg, const std::string& prefix, int64_t in_ch,
                     int64_t out_ch, int64_t num_filters, int64_t window_length, int64_t stride_,
                     Rng& rng)
        : stride(stride_) {
        if (window_length < stride_) {
            throw std::invalid_argument("learned transform: window_length must be >= stride");
        }
        if ((window_length - stride_) % 2 != 0) {
            throw std::invalid_argument(
                "learned transform: window_length - stride must be even for aligned framing");
        }
        const int64_t pad = (window_length - stride_) / 2;
        front = Conv1d<T>(reg, prefix + ".front", in_ch, num_filters, window_length, stride_, pad,
                          rng);
        back = ConvTranspose1d<T>(reg, prefix + ".back", num_filters, out_ch, window_length,
                                  stride_, pad, rng);
    }

    Tensor<T> encode(const Tensor<T>& x) const {
        if (x.dim(2) % stride != 0) {
            throw std::invalid_argument("learned transform: length " + std::to_string(x.dim(2)) +
                                        " not divisible by stride " + std::to_string(stride));
        }
        return front.forward(x);
    }

    Tensor<T> decode(const Tensor<T>& h) const { return back.forward(h); }
};

/// For stride == window_length and num_filters == in_ch * window_length the
/// disjoint frames admit an exactly invertible pair: front rows form an
/// orthogonal basis and back is its transpose.
template <typename T>
void init_learned_transform_orthonormal(LearnedTransform<T>& lt, Rng& rng) {
    const int64_t F = lt.front.w.dim(0);
    const int64_t C = lt.front.w.dim(1);
    const int64_t K = lt.front.w.dim(2);
    const int64_t N = C * K;
    if (lt.front.stride != K || F != N) {
        throw std::invalid_argument(
            "orthonormal init requires stride == window_length and num_filters == in_ch * window");
    }
    // Gram-Schmidt on a random Gaussian matrix
    std::vector<std::vector<double>> q(N, std::vector<double>(N));
    for (auto& row : q) {
        for (auto& v : row) v = rng.normal();
    }
    for (int64_t i = 0; i < N; ++i) {
        for (int64_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int64_t k = 0; k < N; ++k) dot += q[i][k] * q[j][k];
            for (int64_t k = 0; k < N; ++k) q[i][k] -= dot * q[j][k];
        }
        double norm = 0.0;
        for (int64_t k = 0; k < N; ++k) norm += q[i][k] * q[i][k];
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw std::runtime_error("orthonormal init: degenerate basis");
        for (int64_t k = 0; k < N; ++k) q[i][k] /= norm;
    }
    for (int64_t f = 0; f < F; ++f) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t k = 0; k < K; ++k) {
                lt.front.w.data()[(f * C + c) * K + k] = static_cast<T>(q[f][c * K + k]);
                lt.back.w.data()[(f * C + c) * K + k] = static_cast<T>(q[f][c * K + k]);
            }
        }
    }
    std::fill(lt.front.b.data().begin(), lt.front.b.data().end(), T(0));
    std::fill(lt.back.b.data().begin(), lt.back.b.data().end(), T(0));
}

/// Chunk-to-channel patching as a differentiable permutation, matching the
/// layout of signal::patch.
template <typename T>
Tensor<T> patch_op(const Tensor<T>& x, int64_t p) {
    if (x.rank() != 3) throw std::invalid_argument("patch_op expects rank 3");
    if (p < 1 || x.dim(2) % p != 0) {
        throw std::invalid_argument("patch_op: patch size must divide the length");
    }
    const int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2), Ls = L / p;
    auto xn = x.node();
    auto out = nn::detail::make_op<T>({B, C * p, Ls}, {x}, [xn, B, C, L, p, Ls](nn::Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t c = 0; c < C; ++c) {
                for (int64_t j = 0; j < p; ++j) {
                    for (int64_t t = 0; t < Ls; ++t) {
                        xn->grad[(b * C + c) * L + t * p + j] +=
                            self.grad[(b * C * p + c * p + j) * Ls + t];
                    }
                }
            }
        }
    });
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t j = 0; j < p; ++j) {
                for (int64_t t = 0; t < Ls; ++t) {
                    out.data()[(b * C * p + c * p + j) * Ls + t] =
                        xn->value[(b * C + c) * L + t * p + j];
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> unpatch_op(const Tensor<T>& x, int64_t p) {
    if (x.rank() != 3) throw std::invalid_argument("unpatch_op expects rank 3");
    if (p < 1 || x.dim(1) % p != 0) {
        throw std::invalid_argument("unpatch_op: channel count must be divisible by patch size");
    }
    const int64_t B = x.dim(0), Cp = x.dim(1), Ls = x.dim(2), C = Cp / p, L = Ls * p;
    auto xn = x.node();
    auto out = nn::detail::make_op<T>({B, C, L}, {x}, [xn, B, C, L, p, Ls](nn::Node<T>& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t c = 0; c < C; ++c) {
                for (int64_t j = 0; j < p; ++j) {
                    for (int64_t t = 0; t < Ls; ++t) {
                        xn->grad[(b * C * p + c * p + j) * Ls + t] +=
                            self.grad[(b * C + c) * L + t * p + j];
                    }
                }
            }
        }
    });
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t j = 0; j < p; ++j) {
                for (int64_t t = 0; t < Ls; ++t) {
                    out.data()[(b * C + c) * L + t * p + j] =
                        xn->value[(b * C * p + c * p + j) * Ls + t];
                }
            }
        }
    }
    return out;
}

}  // namespace wavediff::unet

#endif  // WAVEDIFF_UNET_HPP

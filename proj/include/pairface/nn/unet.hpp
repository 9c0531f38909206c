#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pairface/common.hpp"
#include "pairface/nn/layers.hpp"
#include "pairface/tensor.hpp"

namespace pairface {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct UNetConfig {
    int in_channels = 3;
    int out_channels = 3;
    int base_width = 64;     // channel ladder base; 64-128-256-512-... capped at 8x
    int encoder_blocks = 8;  // 256 / 2^8 = 1 at the bottleneck
    int decoder_blocks = 8;
    NormKind norm = NormKind::batch;
    int dropout_blocks = 3;  // dropout on the first decoder blocks, train mode only
    float dropout_rate = 0.5f;

    void validate() const {
        if (encoder_blocks != decoder_blocks)
            throw Error("unet config: encoder_blocks must equal decoder_blocks");
        if (encoder_blocks < 1) throw Error("unet config: needs at least one block");
        if (dropout_blocks > decoder_blocks)
            throw Error("unet config: dropout_blocks exceeds decoder_blocks");
        if (base_width < 1 || in_channels < 1 || out_channels < 1)
            throw Error("unet config: non-positive dimension");
        if (dropout_rate < 0.0f || dropout_rate >= 1.0f)
            throw Error("unet config: dropout_rate outside [0, 1)");
    }

    // Output width of encoder block b (1-based).
    int width(int b) const { return base_width * std::min(1 << (b - 1), 8); }
};

// Per-pass activation record. Keeping it outside the generator lets a
// training step backpropagate several passes (main + identity) independently.
struct GenCache {
    std::vector<Tensor> enc_in, enc_conv_out, enc_norm_out, enc_out;
    std::vector<Tensor> dec_in, dec_tconv_out, dec_norm_out, dec_out;
    std::vector<Tensor> dropout_masks;  // empty tensor when block has no dropout
};

// ---------------------------------------------------------------------------
// U-Net generator: conv(4,2,1) encoder ladder, mirrored transposed-conv
// decoder with skip concatenation, tanh output head. Norms are skipped on
// the first and innermost encoder blocks and on the head (a 1x1 bottleneck
// norm would reduce that block's output to its bias and cut gradient flow).
// ---------------------------------------------------------------------------

class Generator {
public:
    Generator(const UNetConfig& cfg, std::mt19937_64 init_eng, std::mt19937_64 dropout_eng)
        : cfg_(cfg), dropout_eng_(dropout_eng) {
        cfg_.validate();
        const int n = cfg_.encoder_blocks;
        for (int b = 1; b <= n; ++b) {
            const int in_c = b == 1 ? cfg_.in_channels : cfg_.width(b - 1);
            enc_.push_back(EncBlock{
                Conv2d("enc" + std::to_string(b) + ".conv", in_c, cfg_.width(b), 4, 2, 1),
                std::nullopt});
            if (b != 1 && b != n)
                enc_.back().norm.emplace("enc" + std::to_string(b) + ".norm", cfg_.norm, cfg_.width(b));
        }
        for (int b = 1; b <= n; ++b) {
            const bool head = b == n;
            const int in_c = b == 1 ? cfg_.width(n) : 2 * cfg_.width(n - b + 1);
            const int out_c = head ? cfg_.out_channels : cfg_.width(n - b);
            dec_.push_back(DecBlock{
                TConv2d("dec" + std::to_string(b) + ".tconv", in_c, out_c, 4, 2, 1),
                std::nullopt, !head && b <= cfg_.dropout_blocks, head});
            if (!head)
                dec_.back().norm.emplace("dec" + std::to_string(b) + ".norm", cfg_.norm, out_c);
        }
        for (auto& e : enc_) e.conv.init(init_eng);
        for (auto& e : enc_)
            if (e.norm) e.norm->init(init_eng);
        for (auto& d : dec_) d.tconv.init(init_eng);
        for (auto& d : dec_)
            if (d.norm) d.norm->init(init_eng);
    }

    const UNetConfig& config() const { return cfg_; }

    // Eval-mode forward: deterministic, no dropout.
    Tensor forward(const Tensor& x) const {
        GenCache scratch;
        return const_cast<Generator*>(this)->run(x, scratch, /*train=*/false, /*dropout=*/false);
    }

    // Training forward; the cache feeds backward().
    Tensor forward_train(const Tensor& x, GenCache& cache, bool use_dropout = true) {
        return run(x, cache, /*train=*/true, use_dropout);
    }

    // Backpropagate grad wrt the output of the pass recorded in `cache`.
    // Accumulates parameter gradients (unless disabled) and returns grad wrt x.
    Tensor backward(const GenCache& cache, const Tensor& grad_output, bool param_grads = true) {
        const int n = cfg_.encoder_blocks;
        std::vector<Tensor> skip_grads(n);  // grad wrt enc_out[i]
        Tensor g = grad_output;
        for (int j = n - 1; j >= 0; --j) {
            const DecBlock& blk = dec_[j];
            if (blk.head) {
                g = tanh_backward_from_output(cache.dec_out[j], g);
            } else {
                if (!cache.dropout_masks[j].empty()) g = apply_mask(g, cache.dropout_masks[j]);
                g = relu_backward(cache.dec_norm_out[j], g);
                if (blk.norm) g = blk.norm->backward(cache.dec_tconv_out[j], g, param_grads);
            }
            g = blk.tconv.backward(cache.dec_in[j], g, param_grads);
            if (j == 0) {
                skip_grads[n - 1] = g;  // D1's input is the bottleneck activation
            } else {
                // split concat(dec_out[j-1], enc_out[n-1-j])
                const Tensor& prev = cache.dec_out[j - 1];
                Tensor g_prev(prev.shape());
                std::copy(g.data(), g.data() + prev.size(), g_prev.data());
                const Tensor& skip = cache.enc_out[n - 1 - j];
                Tensor g_skip(skip.shape());
                std::copy(g.data() + prev.size(), g.data() + prev.size() + skip.size(),
                          g_skip.data());
                skip_grads[n - 1 - j] = std::move(g_skip);
                g = std::move(g_prev);
            }
        }
        // Walk the encoder down from the bottleneck. At block i the incoming
        // grad is the sum of what block i+1 backpropagated and the skip
        // consumption of enc_out[i].
        Tensor upstream = std::move(skip_grads[n - 1]);
        for (int i = n - 1; i >= 0; --i) {
            if (i < n - 1) upstream.add_(skip_grads[i]);
            const EncBlock& blk = enc_[i];
            Tensor gb = leaky_relu_backward(cache.enc_norm_out[i], upstream);
            if (blk.norm) gb = blk.norm->backward(cache.enc_conv_out[i], gb, param_grads);
            upstream = blk.conv.backward(cache.enc_in[i], gb, param_grads);
        }
        return upstream;  // grad wrt x
    }

    std::vector<ParamPtr> parameters() const {
        std::vector<ParamPtr> out;
        for (const auto& e : enc_) {
            auto p = e.conv.params();
            out.insert(out.end(), p.begin(), p.end());
            if (e.norm) {
                auto q = e.norm->params();
                out.insert(out.end(), q.begin(), q.end());
            }
        }
        for (const auto& d : dec_) {
            auto p = d.tconv.params();
            out.insert(out.end(), p.begin(), p.end());
            if (d.norm) {
                auto q = d.norm->params();
                out.insert(out.end(), q.begin(), q.end());
            }
        }
        return out;
    }

    // Non-learnable tensors (batch-norm running statistics).
    std::vector<std::pair<std::string, Tensor*>> buffers() {
        std::vector<std::pair<std::string, Tensor*>> out;
        int b = 1;
        for (auto& e : enc_) {
            if (e.norm && e.norm->kind == NormKind::batch) {
                out.emplace_back("enc" + std::to_string(b) + ".norm.running_mean", &e.norm->running_mean);
                out.emplace_back("enc" + std::to_string(b) + ".norm.running_var", &e.norm->running_var);
            }
            ++b;
        }
        b = 1;
        for (auto& d : dec_) {
            if (d.norm && d.norm->kind == NormKind::batch) {
                out.emplace_back("dec" + std::to_string(b) + ".norm.running_mean", &d.norm->running_mean);
                out.emplace_back("dec" + std::to_string(b) + ".norm.running_var", &d.norm->running_var);
            }
            ++b;
        }
        return out;
    }

    std::int64_t parameter_count() const { return count_scalars(parameters()); }

    // Scalar parameter count of one encoder block, for ladder regression tests.
    std::int64_t encoder_block_parameter_count(int b) const {
        const EncBlock& e = enc_.at(static_cast<std::size_t>(b - 1));
        std::int64_t n = count_scalars(e.conv.params());
        if (e.norm) n += count_scalars(e.norm->params());
        return n;
    }

    std::mt19937_64& dropout_engine() { return dropout_eng_; }

    // Parameter-carrying layers of decoder block b (1-based), used for
    // weight sharing: [tconv.weight, tconv.bias, norm.gamma, norm.beta].
    std::vector<ParamPtr*> decoder_block_param_slots(int b) {
        DecBlock& d = dec_.at(static_cast<std::size_t>(b - 1));
        std::vector<ParamPtr*> out{&d.tconv.weight, &d.tconv.bias};
        if (d.norm) {
            out.push_back(&d.norm->gamma);
            out.push_back(&d.norm->beta);
        }
        return out;
    }

    std::vector<ParamPtr*> encoder_block_param_slots(int b) {
        EncBlock& e = enc_.at(static_cast<std::size_t>(b - 1));
        std::vector<ParamPtr*> out{&e.conv.weight, &e.conv.bias};
        if (e.norm) {
            out.push_back(&e.norm->gamma);
            out.push_back(&e.norm->beta);
        }
        return out;
    }

private:
    struct EncBlock {
        Conv2d conv;
        std::optional<Norm2d> norm;
    };
    struct DecBlock {
        TConv2d tconv;
        std::optional<Norm2d> norm;
        bool dropout = false;
        bool head = false;
    };

    Tensor run(const Tensor& x, GenCache& cache, bool train, bool use_dropout) {
        const int n = cfg_.encoder_blocks;
        if (x.rank() != 3 || x.channels() != cfg_.in_channels)
            throw ShapeMismatch("generator: expected {" + std::to_string(cfg_.in_channels) +
                                ",H,W} input");
        const int factor = 1 << n;
        if (x.height() % factor != 0 || x.width() % factor != 0 || x.height() < factor ||
            x.width() < factor)
            throw ShapeMismatch("generator: spatial size must be divisible by 2^" +
                                std::to_string(n));

        cache = GenCache{};
        cache.enc_in.reserve(n);
        Tensor cur = x;
        for (int i = 0; i < n; ++i) {
            cache.enc_in.push_back(cur);
            Tensor conv_out = enc_[i].conv.forward(cur);
            cache.enc_conv_out.push_back(conv_out);
            Tensor norm_out =
                enc_[i].norm ? enc_[i].norm->forward(conv_out, train) : std::move(conv_out);
            cache.enc_norm_out.push_back(norm_out);
            cur = leaky_relu(norm_out);
            cache.enc_out.push_back(cur);
        }
        cache.dropout_masks.assign(n, Tensor());
        for (int j = 0; j < n; ++j) {
            Tensor in = j == 0 ? cache.enc_out[n - 1]
                               : concat_channels(cache.dec_out[j - 1], cache.enc_out[n - 1 - j]);
            cache.dec_in.push_back(in);
            Tensor tconv_out = dec_[j].tconv.forward(in);
            cache.dec_tconv_out.push_back(tconv_out);
            if (dec_[j].head) {
                cache.dec_norm_out.push_back(Tensor());
                Tensor out = tanh_act(tconv_out);
                cache.dec_out.push_back(out);
            } else {
                Tensor norm_out =
                    dec_[j].norm ? dec_[j].norm->forward(tconv_out, train) : std::move(tconv_out);
                cache.dec_norm_out.push_back(norm_out);
                Tensor act = relu(norm_out);
                if (train && use_dropout && dec_[j].dropout && cfg_.dropout_rate > 0.0f) {
                    Tensor mask = dropout_mask(act.shape(), cfg_.dropout_rate, dropout_eng_);
                    act = apply_mask(act, mask);
                    cache.dropout_masks[j] = std::move(mask);
                }
                cache.dec_out.push_back(act);
            }
        }
        return cache.dec_out.back();
    }

    UNetConfig cfg_;
    std::vector<EncBlock> enc_;
    std::vector<DecBlock> dec_;
    std::mt19937_64 dropout_eng_;
};

inline std::int64_t count_parameters(const Generator& g) { return g.parameter_count(); }

// ---------------------------------------------------------------------------
// Pairwise assembly: two U-Nets with optional literal sharing of parameter
// storage between designated blocks.
// ---------------------------------------------------------------------------

enum class ShareSite { decoder_head, encoder_tail };
enum class ShareUnit { block, layer };

struct PairwiseConfig {
    UNetConfig unet;
    int share_blocks = 0;  // 0 or 2
    ShareSite share_site = ShareSite::decoder_head;
    ShareUnit share_unit = ShareUnit::block;

    void validate() const {
        unet.validate();
        if (share_blocks != 0 && share_blocks != 2)
            throw Error("pairwise config: share_blocks must be 0 or 2");
    }
};

class PairwiseGenerator {
public:
    PairwiseGenerator(const PairwiseConfig& cfg, const RngService& rng)
        : cfg_(cfg),
          left_(cfg.unet, rng.stream("g1.init"), rng.stream("g1.dropout")),
          right_(cfg.unet, rng.stream("g2.init"), rng.stream("g2.dropout")) {
        cfg_.validate();
        if (cfg_.share_blocks > 0) bind_shared_storage();
    }

    Generator& left() { return left_; }
    Generator& right() { return right_; }
    const Generator& left() const { return left_; }
    const Generator& right() const { return right_; }

    bool sharing_enabled() const { return cfg_.share_blocks > 0; }
    const PairwiseConfig& config() const { return cfg_; }

    std::pair<Tensor, Tensor> forward(const Tensor& x_left, const Tensor& x_right) const {
        return {left_.forward(x_left), right_.forward(x_right)};
    }

    // With literal shared storage this is an assertion; after loading
    // checkpoints saved as independent tensors it re-binds the storage.
    void sync_shared_blocks() {
        if (!sharing_enabled()) throw SharingDisabled();
        for (auto [l, r] : shared_slots())
            if (l->get() != r->get()) **r = **l, *r = *l;
    }

    // Max |left - right| over shared parameters, by value.
    double max_shared_divergence() {
        if (!sharing_enabled()) throw SharingDisabled();
        double m = 0.0;
        for (auto [l, r] : shared_slots()) {
            const Tensor& a = (*l)->value;
            const Tensor& b = (*r)->value;
            for (std::size_t i = 0; i < a.size(); ++i)
                m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
        }
        return m;
    }

    // Unique parameter list; shared storage appears once.
    std::vector<ParamPtr> parameters() const {
        std::vector<ParamPtr> out = left_.parameters();
        auto r = right_.parameters();
        out.insert(out.end(), r.begin(), r.end());
        dedup_params(out);
        return out;
    }

private:
    std::vector<std::pair<ParamPtr*, ParamPtr*>> shared_slots() {
        std::vector<std::pair<ParamPtr*, ParamPtr*>> out;
        const int n = cfg_.unet.decoder_blocks;
        auto block_slots = [&](int b) {
            return cfg_.share_site == ShareSite::decoder_head
                       ? std::make_pair(left_.decoder_block_param_slots(b),
                                        right_.decoder_block_param_slots(b))
                       : std::make_pair(left_.encoder_block_param_slots(n - cfg_.share_blocks + b),
                                        right_.encoder_block_param_slots(n - cfg_.share_blocks + b));
        };
        if (cfg_.share_unit == ShareUnit::block) {
            for (int b = 1; b <= cfg_.share_blocks; ++b) {
                auto [ls, rs] = block_slots(b);
                for (std::size_t i = 0; i < ls.size(); ++i) out.emplace_back(ls[i], rs[i]);
            }
        } else {
            // "two layers": the first two parameter-carrying layers of the
            // first designated block (its conv and its norm).
            auto [ls, rs] = block_slots(1);
            for (std::size_t i = 0; i < ls.size() && i < 4; ++i) out.emplace_back(ls[i], rs[i]);
        }
        return out;
    }

    void bind_shared_storage() {
        for (auto [l, r] : shared_slots()) *r = *l;
    }

    PairwiseConfig cfg_;
    Generator left_;
    Generator right_;
};

}  // namespace pairface

#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pairface/common.hpp"
#include "pairface/nn/layers.hpp"
#include "pairface/nn/patchgrid.hpp"
#include "pairface/tensor.hpp"

namespace pairface {

struct ConvLayerSpec {
    int kernel;
    int stride;
};

// Receptive field and cumulative stride of one output unit of a conv stack:
// rf <- rf + (k-1)*jump, jump <- jump*s, layer by layer.
inline std::pair<int, int> receptive_field(const std::vector<ConvLayerSpec>& layers) {
    if (layers.empty()) throw Error("receptive_field: empty layer list");
    int rf = 1, jump = 1;
    for (const auto& l : layers) {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    return {rf, jump};
}

// ---------------------------------------------------------------------------
// 70x70 PatchGAN: C64-C128-C256-C512 ladder with kernels/strides
// (4,2)(4,2)(4,2)(4,1) plus a (4,1) 1-channel head; all padding 1. Maps a
// (conditioned) 256x256 input to a 30x30 grid of raw logits.
// ---------------------------------------------------------------------------

struct PatchDiscConfig {
    int image_channels = 3;
    bool conditional = true;  // concat side-pose condition with the candidate
    std::vector<int> layer_widths = {64, 128, 256, 512};
    int target_rf = 70;
    NormKind norm = NormKind::instance;

    int in_channels() const { return conditional ? 2 * image_channels : image_channels; }

    std::vector<ConvLayerSpec> ladder() const {
        std::vector<ConvLayerSpec> specs;
        for (std::size_t i = 0; i < layer_widths.size(); ++i)
            specs.push_back({4, i + 1 < layer_widths.size() ? 2 : 1});
        specs.push_back({4, 1});  // logit head
        return specs;
    }
};

struct DiscCache {
    Tensor input;  // (conditioned) stack fed to the first conv
    std::vector<Tensor> conv_in, conv_out, norm_out;
};

class PatchDiscriminator {
public:
    PatchDiscriminator(const PatchDiscConfig& cfg, std::mt19937_64 init_eng) : cfg_(cfg) {
        if (cfg_.layer_widths.size() < 2) throw Error("patch discriminator: ladder too short");
        auto [rf, stride] = receptive_field(cfg_.ladder());
        if (rf != cfg_.target_rf)
            throw Error("patch discriminator: ladder receptive field " + std::to_string(rf) +
                        " != configured target " + std::to_string(cfg_.target_rf));
        rf_ = rf;
        stride_ = stride;

        const auto specs = cfg_.ladder();
        int in_c = cfg_.in_channels();
        for (std::size_t i = 0; i < cfg_.layer_widths.size(); ++i) {
            const int out_c = cfg_.layer_widths[i];
            convs_.emplace_back("disc" + std::to_string(i + 1) + ".conv", in_c, out_c,
                                specs[i].kernel, specs[i].stride, 1);
            // instance norm on middle layers only (not the first, not the head)
            if (i == 0)
                norms_.emplace_back(std::nullopt);
            else
                norms_.emplace_back(
                    Norm2d("disc" + std::to_string(i + 1) + ".norm", cfg_.norm, out_c));
            in_c = out_c;
        }
        convs_.emplace_back("disc_head.conv", in_c, 1, specs.back().kernel, specs.back().stride, 1);
        norms_.emplace_back(std::nullopt);

        for (auto& c : convs_) c.init(init_eng);
        for (auto& nrm : norms_)
            if (nrm) nrm->init(init_eng);
    }

    const PatchDiscConfig& config() const { return cfg_; }
    int rf() const { return rf_; }
    int rf_stride() const { return stride_; }

    PatchGrid forward(const Tensor& condition, const Tensor& candidate) const {
        DiscCache scratch;
        return const_cast<PatchDiscriminator*>(this)->run(condition, candidate, scratch, false);
    }

    PatchGrid forward_train(const Tensor& condition, const Tensor& candidate, DiscCache& cache) {
        return run(condition, candidate, cache, true);
    }

    // Returns grads wrt (condition, candidate); condition grad is zero when
    // the discriminator is unconditional.
    std::pair<Tensor, Tensor> backward(const DiscCache& cache, const Tensor& grad_logits,
                                       bool param_grads = true) {
        Tensor g({1, grad_logits.dim(0), grad_logits.dim(1)});
        std::copy(grad_logits.data(), grad_logits.data() + grad_logits.size(), g.data());
        for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
            const bool head = i + 1 == static_cast<int>(convs_.size());
            if (!head) {
                g = leaky_relu_backward(cache.norm_out[i], g);
                if (norms_[i]) g = norms_[i]->backward(cache.conv_out[i], g, param_grads);
            }
            g = convs_[i].backward(cache.conv_in[i], g, param_grads);
        }
        const int c = cfg_.image_channels;
        Tensor g_cond({c, g.height(), g.width()});
        Tensor g_cand({c, g.height(), g.width()});
        if (cfg_.conditional) {
            std::copy(g.data(), g.data() + g_cond.size(), g_cond.data());
            std::copy(g.data() + g_cond.size(), g.data() + g_cond.size() + g_cand.size(),
                      g_cand.data());
        } else {
            std::copy(g.data(), g.data() + g_cand.size(), g_cand.data());
        }
        return {std::move(g_cond), std::move(g_cand)};
    }

    std::vector<ParamPtr> parameters() const {
        std::vector<ParamPtr> out;
        for (const auto& c : convs_) {
            auto p = c.params();
            out.insert(out.end(), p.begin(), p.end());
        }
        for (const auto& nrm : norms_)
            if (nrm) {
                auto p = nrm->params();
                out.insert(out.end(), p.begin(), p.end());
            }
        return out;
    }

    std::vector<std::pair<std::string, Tensor*>> buffers() {
        std::vector<std::pair<std::string, Tensor*>> out;
        for (std::size_t i = 0; i < norms_.size(); ++i)
            if (norms_[i] && norms_[i]->kind == NormKind::batch) {
                out.emplace_back("disc" + std::to_string(i + 1) + ".norm.running_mean",
                                 &norms_[i]->running_mean);
                out.emplace_back("disc" + std::to_string(i + 1) + ".norm.running_var",
                                 &norms_[i]->running_var);
            }
        return out;
    }

private:
    PatchGrid run(const Tensor& condition, const Tensor& candidate, DiscCache& cache, bool train) {
        if (candidate.rank() != 3 || candidate.channels() != cfg_.image_channels)
            throw ShapeMismatch("discriminator: candidate channels");
        Tensor x;
        if (cfg_.conditional) {
            if (!condition.same_shape(candidate))
                throw ShapeMismatch("discriminator: condition and candidate shapes differ");
            x = concat_channels(condition, candidate);
        } else {
            x = candidate;
        }
        cache = DiscCache{};
        cache.input = x;
        Tensor cur = std::move(x);
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            const bool head = i + 1 == convs_.size();
            cache.conv_in.push_back(cur);
            Tensor conv_out = convs_[i].forward(cur);
            cache.conv_out.push_back(conv_out);
            if (head) {
                cache.norm_out.push_back(Tensor());
                cur = std::move(conv_out);
            } else {
                Tensor norm_out =
                    norms_[i] ? norms_[i]->forward(conv_out, train) : std::move(conv_out);
                cache.norm_out.push_back(norm_out);
                cur = leaky_relu(norm_out);
            }
        }
        PatchGrid grid;
        grid.logits = Tensor({cur.height(), cur.width()});
        std::copy(cur.data(), cur.data() + cur.size(), grid.logits.data());
        grid.rf_size = rf_;
        grid.rf_stride = stride_;
        return grid;
    }

    PatchDiscConfig cfg_;
    std::vector<Conv2d> convs_;
    std::vector<std::optional<Norm2d>> norms_;
    int rf_ = 0, stride_ = 0;
};

}  // namespace pairface

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pairface/common.hpp"
#include "pairface/nn/patchgrid.hpp"
#include "pairface/tensor.hpp"

namespace pairface {

// ---------------------------------------------------------------------------
// Loss weights and per-term breakdowns
// ---------------------------------------------------------------------------

struct LossWeights {
    double adv = 0.0;
    double l1 = 0.0;
    double gdl = 0.0;
    double sym = 0.0;
    double id = 0.0;
    double pair = 0.0;

    void validate() const {
        const double w[] = {adv, l1, gdl, sym, id, pair};
        double sum = 0.0;
        for (double v : w) {
            if (v < 0.0) throw Error("loss weights must be non-negative");
            sum += v;
        }
        if (sum <= 0.0) throw Error("at least one loss weight must be positive");
    }
};

struct GdlConfig {
    int alpha = 1;           // exponent on the gradient difference; 1 or 2 in shipped presets
    bool normalized = true;  // divide by the number of valid neighbor pairs
};

struct LossTerm {
    std::string name;
    double raw = 0.0;
    double weight = 0.0;
    double weighted = 0.0;
};

struct LossBreakdown {
    std::vector<LossTerm> terms;  // only terms that were actually computed
    double total = 0.0;

    const LossTerm* find(const std::string& name) const {
        for (const auto& t : terms)
            if (t.name == name) return &t;
        return nullptr;
    }

    bool finite() const {
        if (!std::isfinite(total)) return false;
        for (const auto& t : terms)
            if (!std::isfinite(t.raw) || !std::isfinite(t.weighted)) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Numerically stable sigmoid cross-entropy pieces (raw logits in, no NaN for
// finite inputs):  -log(sigmoid(x)) = softplus(-x),  -log(1-sigmoid(x)) = softplus(x)
// ---------------------------------------------------------------------------

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// ---------------------------------------------------------------------------
// Adversarial losses over the patch grid (mean over patches)
// ---------------------------------------------------------------------------

// Non-saturating generator objective: minimizing drives D(G(x)) -> 1.
inline double adversarial_g_loss(const PatchGrid& fake_logits) {
    double sum = 0.0;
    for (std::size_t i = 0; i < fake_logits.logits.size(); ++i)
        sum += softplus(-static_cast<double>(fake_logits.logits[i]));
    return sum / static_cast<double>(fake_logits.patches());
}

// d(adversarial_g_loss)/d(logits)
inline Tensor adversarial_g_loss_grad(const PatchGrid& fake_logits) {
    Tensor g = Tensor::zeros_like(fake_logits.logits);
    const double inv_n = 1.0 / static_cast<double>(fake_logits.patches());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<float>((sigmoid(fake_logits.logits[i]) - 1.0) * inv_n);
    return g;
}

// Discriminator objective with the standard real-data term, halved so D and G
// learn at comparable rates.
inline double adversarial_d_loss(const PatchGrid& real_logits, const PatchGrid& fake_logits) {
    real_logits.logits.require_same_shape(fake_logits.logits, "adversarial_d_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < real_logits.logits.size(); ++i) {
        sum += softplus(-static_cast<double>(real_logits.logits[i]));
        sum += softplus(static_cast<double>(fake_logits.logits[i]));
    }
    return sum / (2.0 * static_cast<double>(real_logits.patches()));
}

struct DiscLossGrads {
    Tensor real;  // d loss / d real logits
    Tensor fake;  // d loss / d fake logits
};

inline DiscLossGrads adversarial_d_loss_grad(const PatchGrid& real_logits,
                                             const PatchGrid& fake_logits) {
    real_logits.logits.require_same_shape(fake_logits.logits, "adversarial_d_loss_grad");
    DiscLossGrads g{Tensor::zeros_like(real_logits.logits), Tensor::zeros_like(fake_logits.logits)};
    const double inv = 1.0 / (2.0 * static_cast<double>(real_logits.patches()));
    for (std::size_t i = 0; i < g.real.size(); ++i) {
        g.real[i] = static_cast<float>((sigmoid(real_logits.logits[i]) - 1.0) * inv);
        g.fake[i] = static_cast<float>(sigmoid(fake_logits.logits[i]) * inv);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Pixel losses. All mean over channels so gray and color images score
// comparably; |.| subgradient at 0 is 0.
// ---------------------------------------------------------------------------

namespace detail {
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

// Mean absolute error over all pixels.
inline double l1_loss(const Tensor& ground_truth, const Tensor& generated) {
    ground_truth.require_same_shape(generated, "l1_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i)
        sum += std::abs(static_cast<double>(ground_truth[i]) - generated[i]);
    return sum / static_cast<double>(generated.size());
}

// d(l1_loss)/d(generated)
inline Tensor l1_loss_grad(const Tensor& ground_truth, const Tensor& generated) {
    ground_truth.require_same_shape(generated, "l1_loss_grad");
    Tensor g = Tensor::zeros_like(generated);
    const double inv = 1.0 / static_cast<double>(generated.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<float>(detail::sign(static_cast<double>(generated[i]) - ground_truth[i]) * inv);
    return g;
}

namespace detail {
inline std::size_t gdl_pair_count(int w, int h) {
    return static_cast<std::size_t>(w - 1) * h + static_cast<std::size_t>(w) * (h - 1);
}
}  // namespace detail

// Penalty on the mismatch of neighboring-pixel differences between generated
// and ground-truth images. Horizontal pairs (x-1, x) and vertical pairs
// (y-1, y); normalized by the valid-pair count unless cfg.normalized is off.
inline double gdl_loss(const Tensor& ground_truth, const Tensor& generated, const GdlConfig& cfg = {}) {
    ground_truth.require_same_shape(generated, "gdl_loss");
    if (generated.rank() != 3) throw ShapeMismatch("gdl_loss: expected {C,H,W}");
    const int c_n = generated.channels(), h = generated.height(), w = generated.width();
    if (w < 2 || h < 2) throw ShapeMismatch("gdl_loss: needs W,H >= 2");
    double sum = 0.0;
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 1; x < w; ++x) {
                const double dg =
                    std::abs(static_cast<double>(generated.at(c, y, x)) - generated.at(c, y, x - 1));
                const double dt = std::abs(static_cast<double>(ground_truth.at(c, y, x)) -
                                           ground_truth.at(c, y, x - 1));
                sum += std::pow(std::abs(dg - dt), cfg.alpha);
            }
        for (int y = 1; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dg =
                    std::abs(static_cast<double>(generated.at(c, y - 1, x)) - generated.at(c, y, x));
                const double dt = std::abs(static_cast<double>(ground_truth.at(c, y - 1, x)) -
                                           ground_truth.at(c, y, x));
                sum += std::pow(std::abs(dg - dt), cfg.alpha);
            }
    }
    const double denom = cfg.normalized
                             ? static_cast<double>(c_n) * static_cast<double>(detail::gdl_pair_count(w, h))
                             : static_cast<double>(c_n);
    return sum / denom;
}

// d(gdl_loss)/d(generated)
inline Tensor gdl_loss_grad(const Tensor& ground_truth, const Tensor& generated, const GdlConfig& cfg = {}) {
    ground_truth.require_same_shape(generated, "gdl_loss_grad");
    const int c_n = generated.channels(), h = generated.height(), w = generated.width();
    if (w < 2 || h < 2) throw ShapeMismatch("gdl_loss_grad: needs W,H >= 2");
    Tensor g = Tensor::zeros_like(generated);
    const double denom = cfg.normalized
                             ? static_cast<double>(c_n) * static_cast<double>(detail::gdl_pair_count(w, h))
                             : static_cast<double>(c_n);
    const double a = cfg.alpha;
    auto accumulate = [&](int c, int y0, int x0, int y1, int x1) {
        // pair (p0=earlier, p1=later) along one axis; term = | |dY| - |dGT| |^alpha
        const double dy_pair = static_cast<double>(generated.at(c, y1, x1)) - generated.at(c, y0, x0);
        const double dt_pair = static_cast<double>(ground_truth.at(c, y1, x1)) - ground_truth.at(c, y0, x0);
        const double t = std::abs(dy_pair) - std::abs(dt_pair);
        double d = a * detail::sign(t) * detail::sign(dy_pair) / denom;
        if (cfg.alpha != 1) d *= std::pow(std::abs(t), a - 1.0);
        g.at(c, y1, x1) += static_cast<float>(d);
        g.at(c, y0, x0) -= static_cast<float>(d);
    };
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 1; x < w; ++x) accumulate(c, y, x - 1, y, x);
        for (int y = 1; y < h; ++y)
            for (int x = 0; x < w; ++x) accumulate(c, y - 1, x, y, x);
    }
    return g;
}

// Mean absolute difference between each pixel and its horizontal mirror,
// over the left half of the image.
inline double symmetry_loss(const Tensor& generated) {
    if (generated.rank() != 3) throw ShapeMismatch("symmetry_loss: expected {C,H,W}");
    const int c_n = generated.channels(), h = generated.height(), w = generated.width();
    if (w % 2 != 0) throw ShapeMismatch("symmetry_loss: width must be even");
    double sum = 0.0;
    for (int c = 0; c < c_n; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x)
                sum += std::abs(static_cast<double>(generated.at(c, y, x)) -
                                generated.at(c, y, w - 1 - x));
    return sum / (static_cast<double>(c_n) * (w / 2) * h);
}

// d(symmetry_loss)/d(generated)
inline Tensor symmetry_loss_grad(const Tensor& generated) {
    const int c_n = generated.channels(), h = generated.height(), w = generated.width();
    if (w % 2 != 0) throw ShapeMismatch("symmetry_loss_grad: width must be even");
    Tensor g = Tensor::zeros_like(generated);
    const double inv = 1.0 / (static_cast<double>(c_n) * (w / 2) * h);
    for (int c = 0; c < c_n; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x) {
                const double s =
                    detail::sign(static_cast<double>(generated.at(c, y, x)) - generated.at(c, y, w - 1 - x));
                g.at(c, y, x) += static_cast<float>(s * inv);
                g.at(c, y, w - 1 - x) -= static_cast<float>(s * inv);
            }
    return g;
}

// Mean absolute difference between the two generated frontal images;
// symmetric in its arguments.
inline double pair_loss(const Tensor& generated_left, const Tensor& generated_right) {
    generated_left.require_same_shape(generated_right, "pair_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < generated_left.size(); ++i)
        sum += std::abs(static_cast<double>(generated_left[i]) - generated_right[i]);
    return sum / static_cast<double>(generated_left.size());
}

// d(pair_loss)/d(generated_left); the right gradient is its negation.
inline Tensor pair_loss_grad(const Tensor& generated_left, const Tensor& generated_right) {
    generated_left.require_same_shape(generated_right, "pair_loss_grad");
    Tensor g = Tensor::zeros_like(generated_left);
    const double inv = 1.0 / static_cast<double>(generated_left.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<float>(
            detail::sign(static_cast<double>(generated_left[i]) - generated_right[i]) * inv);
    return g;
}

// L1 between a frontal ground truth and the generator applied to it
// (the ground identity). Gradients flow through the generator when the
// trainer drives this through a cached training pass.
template <class GeneratorLike>
double identity_loss(const Tensor& ground_truth, GeneratorLike& generator) {
    return l1_loss(ground_truth, generator.forward(ground_truth));
}

// ---------------------------------------------------------------------------
// Composite generator objective
// ---------------------------------------------------------------------------

enum class CompositeMode { pix2pix, pairwise };

// One generator branch's tensors. In pairwise mode there are two branches
// (left and right); per-branch terms average across branches and the pair
// term is computed once.
struct BranchInputs {
    const Tensor* generated = nullptr;
    const Tensor* ground_truth = nullptr;
    const PatchGrid* fake_logits = nullptr;
    const Tensor* ground_identity = nullptr;  // G(ground_truth)
};

inline LossBreakdown composite_generator_loss(const std::vector<BranchInputs>& branches,
                                              const LossWeights& weights,
                                              const GdlConfig& gdl_cfg = {},
                                              CompositeMode mode = CompositeMode::pix2pix) {
    weights.validate();
    const std::size_t want = mode == CompositeMode::pairwise ? 2 : 1;
    if (branches.size() != want)
        throw MissingInput(mode == CompositeMode::pairwise ? "pairwise mode requires two branches"
                                                           : "pix2pix mode requires one branch");

    auto need = [&](const void* p, const char* term, const char* what) {
        if (p == nullptr)
            throw MissingInput(std::string(term) + " has positive weight but no " + what);
    };

    const double inv_b = 1.0 / static_cast<double>(branches.size());
    LossBreakdown out;
    auto add_term = [&](const char* name, double weight, double raw) {
        out.terms.push_back({name, raw, weight, weight * raw});
        out.total += weight * raw;
    };

    if (weights.adv > 0.0) {
        double raw = 0.0;
        for (const auto& b : branches) {
            need(b.fake_logits, "adv", "fake logits");
            raw += adversarial_g_loss(*b.fake_logits);
        }
        add_term("adv", weights.adv, raw * inv_b);
    }
    if (weights.l1 > 0.0) {
        double raw = 0.0;
        for (const auto& b : branches) {
            need(b.generated, "l1", "generated image");
            need(b.ground_truth, "l1", "ground truth");
            raw += l1_loss(*b.ground_truth, *b.generated);
        }
        add_term("l1", weights.l1, raw * inv_b);
    }
    if (weights.gdl > 0.0) {
        double raw = 0.0;
        for (const auto& b : branches) {
            need(b.generated, "gdl", "generated image");
            need(b.ground_truth, "gdl", "ground truth");
            raw += gdl_loss(*b.ground_truth, *b.generated, gdl_cfg);
        }
        add_term("gdl", weights.gdl, raw * inv_b);
    }
    if (weights.sym > 0.0) {
        double raw = 0.0;
        for (const auto& b : branches) {
            need(b.generated, "sym", "generated image");
            raw += symmetry_loss(*b.generated);
        }
        add_term("sym", weights.sym, raw * inv_b);
    }
    if (weights.id > 0.0) {
        double raw = 0.0;
        for (const auto& b : branches) {
            need(b.ground_identity, "id", "ground identity image");
            need(b.ground_truth, "id", "ground truth");
            raw += l1_loss(*b.ground_truth, *b.ground_identity);
        }
        add_term("id", weights.id, raw * inv_b);
    }
    if (weights.pair > 0.0) {
        if (mode != CompositeMode::pairwise)
            throw MissingInput("pair has positive weight but mode is not pairwise");
        need(branches[0].generated, "pair", "left generated image");
        need(branches[1].generated, "pair", "right generated image");
        add_term("pair", weights.pair, pair_loss(*branches[0].generated, *branches[1].generated));
    }
    return out;
}

}  // namespace pairface

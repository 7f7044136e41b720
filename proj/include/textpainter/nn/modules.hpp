#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "textpainter/nn/autodiff.hpp"
#include "textpainter/rng.hpp"

namespace textpainter::nn {

struct NamedParam {
    std::string name;
    Var var;
};

// Flat ordered registry of trainable tensors; registration order is the
// checkpoint order, so layer constructors must run deterministically.
class ParamList {
public:
    Var add(const std::string& name, Var v);
    const std::vector<NamedParam>& items() const { return items_; }
    Var* find(const std::string& name);
    int64_t total_numel() const;
    void zero_grad();

private:
    std::vector<NamedParam> items_;
    std::unordered_map<std::string, size_t> index_;
};

struct Linear {
    Var w, b;
    Linear() = default;
    Linear(ParamList& ps, const std::string& prefix, int in, int out, Rng& rng,
           float w_gain = 1.f, float bias_init = 0.f, bool bias = true);
    Var forward(const Var& x) const;
};

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 0;
    Conv2d() = default;
    Conv2d(ParamList& ps, const std::string& prefix, int cin, int cout, int k, int stride,
           int pad, Rng& rng, bool bias = true, float w_gain = 1.f);
    Var forward(const Var& x) const;
};

// Style-modulated convolution: a learned projection of the latent scales the
// input channels of a shared kernel, optionally followed by per-sample weight
// demodulation. No intrinsic activation.
struct ModulatedConv2d {
    Linear style;
    Var w, b;
    int pad = 0;
    bool demodulate = true;
    ModulatedConv2d() = default;
    ModulatedConv2d(ParamList& ps, const std::string& prefix, int cin, int cout, int k,
                    int style_dim, bool demodulate, Rng& rng);
    Var forward(const Var& x, const Var& wlat) const;
};

// Norm-free residual basic block: two 3x3 convs with a leaky ReLU between,
// projection shortcut when shape changes, sum scaled by 1/sqrt(2).
struct ResBlock {
    Conv2d c1, c2, skip;
    bool has_skip = false;
    ResBlock() = default;
    ResBlock(ParamList& ps, const std::string& prefix, int cin, int cout, int stride, Rng& rng);
    Var forward(const Var& x) const;
};

class Adam {
public:
    struct Slot {
        std::vector<float> m, v;
    };

    Adam(std::vector<NamedParam> params, float lr, float beta1 = 0.f, float beta2 = 0.99f,
         float eps = 1e-8f);
    void step();
    void zero_grad();
    float lr() const { return lr_; }
    void set_lr(float lr) { lr_ = lr; }
    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }

private:
    std::vector<NamedParam> params_;
    std::vector<Slot> slots_;
    float lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace textpainter::nn

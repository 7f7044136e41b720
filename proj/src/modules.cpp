#include "textpainter/nn/modules.hpp"

#include <cmath>

namespace textpainter::nn {

Var ParamList::add(const std::string& name, Var v) {
    check(index_.emplace(name, items_.size()).second, "param_duplicate",
          "parameter registered twice: " + name);
    items_.push_back({name, v});
    return v;
}

Var* ParamList::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second].var;
}

int64_t ParamList::total_numel() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p.var.numel();
    return n;
}

void ParamList::zero_grad() {
    for (auto& p : items_) p.var.zero_grad();
}

Linear::Linear(ParamList& ps, const std::string& prefix, int in, int out, Rng& rng,
               float w_gain, float bias_init, bool bias) {
    float std = w_gain / std::sqrt(static_cast<float>(in));
    w = ps.add(prefix + ".w", Var::randn({in, out}, rng, std, true));
    if (bias) b = ps.add(prefix + ".b", Var::full({out}, bias_init, true));
}

Var Linear::forward(const Var& x) const { return linear(x, w, b); }

Conv2d::Conv2d(ParamList& ps, const std::string& prefix, int cin, int cout, int k, int stride_,
               int pad_, Rng& rng, bool bias, float w_gain)
    : stride(stride_), pad(pad_) {
    float std = w_gain / std::sqrt(static_cast<float>(cin) * k * k);
    w = ps.add(prefix + ".w", Var::randn({cout, cin, k, k}, rng, std, true));
    if (bias) b = ps.add(prefix + ".b", Var::zeros({cout}, true));
}

Var Conv2d::forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }

ModulatedConv2d::ModulatedConv2d(ParamList& ps, const std::string& prefix, int cin, int cout,
                                 int k, int style_dim, bool demodulate_, Rng& rng)
    : demodulate(demodulate_) {
    pad = k / 2;
    style = Linear(ps, prefix + ".style", style_dim, cin, rng, 1.f, 1.f, true);
    float std = 1.f / std::sqrt(static_cast<float>(cin) * k * k);
    w = ps.add(prefix + ".w", Var::randn({cout, cin, k, k}, rng, std, true));
    b = ps.add(prefix + ".b", Var::zeros({cout}, true));
}

Var ModulatedConv2d::forward(const Var& x, const Var& wlat) const {
    Var s = style.forward(wlat);                 // (N, cin)
    Var wm = weight_modulate(w, s);              // (N, cout, cin, k, k)
    if (demodulate) {
        Var scale = rsqrt_(sum_last(square(wm), 2), 1e-8f);  // (N, cout)
        wm = mul_bcast_trailing(wm, scale);
    }
    Var y = conv2d_per_sample(x, wm, Var(), 1, pad);
    return add_bias_nchw(y, b);
}

ResBlock::ResBlock(ParamList& ps, const std::string& prefix, int cin, int cout, int stride,
                   Rng& rng) {
    c1 = Conv2d(ps, prefix + ".c1", cin, cout, 3, stride, 1, rng, true, std::sqrt(2.f));
    c2 = Conv2d(ps, prefix + ".c2", cout, cout, 3, 1, 1, rng, true, std::sqrt(2.f));
    has_skip = (cin != cout || stride != 1);
    if (has_skip) skip = Conv2d(ps, prefix + ".skip", cin, cout, 1, stride, 0, rng, false);
}

Var ResBlock::forward(const Var& x) const {
    Var y = c2.forward(leaky_relu(c1.forward(x)));
    Var s = has_skip ? skip.forward(x) : x;
    return leaky_relu(mul_scalar(add(s, y), 1.f / std::sqrt(2.f)));
}

Adam::Adam(std::vector<NamedParam> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        size_t n = static_cast<size_t>(params_[i].var.numel());
        slots_[i].m.assign(n, 0.f);
        slots_[i].v.assign(n, 0.f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].var;
        const auto& g = p.impl()->grad;
        if (g.empty()) continue;
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        auto& data = p.impl()->data.v;
        for (size_t j = 0; j < data.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.f - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.f - beta2_) * g[j] * g[j];
            float mh = static_cast<float>(m[j] / bc1);
            float vh = static_cast<float>(v[j] / bc2);
            data[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

}  // namespace textpainter::nn

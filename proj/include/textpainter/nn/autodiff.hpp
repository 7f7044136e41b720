#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "textpainter/nn/tensor.hpp"
#include "textpainter/rng.hpp"

namespace textpainter::nn {

struct VarImpl {
    TensorData data;
    std::vector<float> grad;
    bool requires_grad = false;
    int64_t seq = -1;
    std::vector<std::shared_ptr<VarImpl>> parents;
    std::function<void(VarImpl&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.v.size()) grad.assign(data.v.size(), 0.f);
    }
};

// Reverse-mode autodiff handle over a float tensor. Graph nodes are kept
// alive by parent links from the root being differentiated; there is no
// global tape to manage.
class Var {
public:
    Var() : impl_(nullptr) {}
    explicit Var(TensorData d, bool requires_grad = false);
    explicit Var(std::shared_ptr<VarImpl> impl) : impl_(std::move(impl)) {}

    static Var zeros(Shape s, bool requires_grad = false);
    static Var full(Shape s, float value, bool requires_grad = false);
    static Var from_vector(Shape s, std::vector<float> v, bool requires_grad = false);
    static Var randn(Shape s, Rng& rng, float stddev = 1.f, bool requires_grad = false);
    static Var scalar(float v);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->data.shape; }
    int dim(int i) const { return impl_->data.dim(i); }
    int64_t numel() const { return impl_->data.size(); }

    const std::vector<float>& values() const { return impl_->data.v; }
    std::vector<float>& values_mut() { return impl_->data.v; }
    const std::vector<float>& grad() const { return impl_->grad; }
    float item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    void zero_grad() {
        if (impl_) impl_->grad.assign(impl_->data.v.size(), 0.f);
    }

    std::shared_ptr<VarImpl> impl() const { return impl_; }

private:
    std::shared_ptr<VarImpl> impl_;
};

// Gradient recording is on by default; NoGrad disables it for its scope.
bool grad_enabled();
struct NoGrad {
    NoGrad();
    ~NoGrad();
};

// Backpropagate from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, float c);
Var mul_scalar(const Var& a, float c);
Var neg(const Var& a);
Var leaky_relu(const Var& a, float slope = 0.2f);
Var tanh_(const Var& a);
Var softplus_(const Var& a);
Var abs_(const Var& a);
Var square(const Var& a);
Var sqrt_(const Var& a);
Var rsqrt_(const Var& a, float eps);

// ---- broadcast / reduce ----
Var add_bias_nchw(const Var& x, const Var& b);           // (N,C,H,W) + (C)
Var add_rowvec(const Var& x, const Var& b);              // (N,F) + (F)
Var mul_bcast_trailing(const Var& big, const Var& small);  // small = leading dims of big
Var weight_modulate(const Var& w, const Var& s);         // (O,I,kh,kw)x(N,I)->(N,O,I,kh,kw)
Var sum_last(const Var& x, int keep_dims);               // sum trailing dims
Var sum_all(const Var& x);
Var mean_all(const Var& x);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);                  // (m,k)x(k,n)
Var bmatmul(const Var& a, const Var& b);                 // (N,p,q)x(N,q,r)
Var bmatmul_nt(const Var& a, const Var& b);              // (N,p,q)x(N,r,q)^T
Var linear(const Var& x, const Var& w, const Var& b);    // (N,f)x(f,g)+(g); b may be undefined

// ---- convolution / spatial ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv2d_per_sample(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var blur3(const Var& x);                                 // fixed [1,2,1]^2/16 depthwise, pad 1
Var upsample_nearest2(const Var& x);
Var avg_pool(const Var& x, int k);                       // non-overlapping kxk
Var global_avg_pool(const Var& x);                       // (N,C,H,W)->(N,C)
Var concat_channels(const std::vector<Var>& xs);
Var crop_hw(const Var& x, int y0, int x0, int h, int w);
Var slice_batch(const Var& x, int i);                    // (N,...)->(1,...)
Var reshape(const Var& x, Shape s);
Var nchw_to_tokens(const Var& x);                        // (N,C,H,W)->(N,H*W,C)
Var tokens_to_nchw(const Var& x, int h, int w);          // (N,H*W,C)->(N,C,H,W)

// Softmax over the last dim of (N,P,T); mask is (N,T) row-major, zero
// entries receive exactly zero weight.
Var softmax_masked(const Var& x, const std::vector<uint8_t>& mask);

Var detach(const Var& x);

// ---- reductions used as losses (double accumulation) ----
Var l1_mean(const Var& a, const Var& b);
Var mean_softplus(const Var& x, bool negate);
Var softmax_xent(const Var& logits, const std::vector<int>& labels);

}  // namespace textpainter::nn

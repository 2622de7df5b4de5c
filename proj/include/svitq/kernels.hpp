#pragma once

#include <optional>

#include "svitq/tensor.hpp"

namespace svitq::kernels {

struct ConvGeom {
    int stride = 1;
    int pad = 0;
    int groups = 1;
};

// x: (n, ci, h, w); w: (co, ci/groups, kh, kw); bias: (co) or empty
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeom& g);
Tensor conv2d_bwd_input(const Tensor& grad_y, const Tensor& w, const ConvGeom& g,
                        const std::vector<size_t>& x_shape);
Tensor conv2d_bwd_weight(const Tensor& grad_y, const Tensor& x, const ConvGeom& g,
                         const std::vector<size_t>& w_shape);
Tensor conv2d_bwd_bias(const Tensor& grad_y);

Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

// (n, c, h, w) -> (n, c, 1, 1): sum over tokens divided by token count
Tensor channel_aggregate(const Tensor& x);
// broadcast (n, c, 1, 1) over tokens and multiply elementwise
Tensor gate(const Tensor& x, const Tensor& agg);
Tensor gate_bwd_agg(const Tensor& grad_y, const Tensor& x);

// mean over (h, w) -> (n, c, 1, 1)
Tensor token_mean(const Tensor& x);
Tensor token_mean_bwd(const Tensor& grad_y, const std::vector<size_t>& x_shape);

// Leaky integrate-and-fire step: u = decay * u_prev + x; spike = u >= threshold;
// u_next = u * (1 - spike) (hard reset to zero). The surrogate derivative of
// the spike w.r.t. u is s(1-s)/tau with s = sigmoid((u - threshold)/tau); the
// reset path treats the spike as a constant.
struct LifParams {
    float threshold = 1.0f;
    float decay = 0.5f;
    float surrogate_tau = 0.25f;
};

struct LifOut {
    Tensor spike;
    Tensor u_next;
    Tensor u_pre; // membrane before reset, kept for the backward pass
};

LifOut lif_step(const Tensor& u_prev, const Tensor& x, const LifParams& p);
// returns grad w.r.t. the pre-reset membrane u; grad_x = that, grad_u_prev = decay * that
Tensor lif_step_bwd(const Tensor& grad_spike, const Tensor& grad_u_next,
                    const LifOut& out, const LifParams& p);

// logits: (n, classes); returns mean cross-entropy and writes dloss/dlogits
float softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                            Tensor* grad_logits);

} // namespace svitq::kernels

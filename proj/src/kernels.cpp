#include "svitq/kernels.hpp"

#include <cmath>

#include "svitq/error.hpp"

namespace svitq::kernels {

namespace {

void check4(const Tensor& t, const char* what) {
    if (t.shape.size() != 4) fail(ErrorCode::InvalidArgument, std::string(what) + " must be 4-d");
}

size_t out_dim(size_t in, size_t k, int pad, int stride) {
    return (in + 2 * static_cast<size_t>(pad) - k) / static_cast<size_t>(stride) + 1;
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeom& g) {
    check4(x, "conv input");
    check4(w, "conv weight");
    const size_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const size_t co = w.shape[0], cig = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const size_t groups = static_cast<size_t>(g.groups);
    if (ci % groups != 0 || co % groups != 0 || cig != ci / groups)
        fail(ErrorCode::InvalidArgument, "conv channel/group mismatch");
    const size_t oh = out_dim(h, kh, g.pad, g.stride);
    const size_t ow = out_dim(wd, kw, g.pad, g.stride);

    Tensor y({n, co, oh, ow});
    const size_t co_per_g = co / groups;
    for (size_t in = 0; in < n; ++in) {
        for (size_t oc = 0; oc < co; ++oc) {
            const size_t grp = oc / co_per_g;
            const float b = bias && !bias->empty() ? bias->data[oc] : 0.0f;
            for (size_t oy = 0; oy < oh; ++oy) {
                for (size_t ox = 0; ox < ow; ++ox) {
                    float acc = b;
                    for (size_t ic = 0; ic < cig; ++ic) {
                        const size_t xc = grp * cig + ic;
                        for (size_t ky = 0; ky < kh; ++ky) {
                            const long iy = static_cast<long>(oy) * g.stride +
                                            static_cast<long>(ky) - g.pad;
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            for (size_t kx = 0; kx < kw; ++kx) {
                                const long ix = static_cast<long>(ox) * g.stride +
                                                static_cast<long>(kx) - g.pad;
                                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                                acc += x.at4(in, xc, static_cast<size_t>(iy),
                                             static_cast<size_t>(ix)) *
                                       w.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                    y.at4(in, oc, oy, ox) = acc;
                }
            }
        }
    }
    return y;
}

Tensor conv2d_bwd_input(const Tensor& grad_y, const Tensor& w, const ConvGeom& g,
                        const std::vector<size_t>& x_shape) {
    Tensor gx(x_shape);
    const size_t n = grad_y.shape[0], co = grad_y.shape[1], oh = grad_y.shape[2],
                 ow = grad_y.shape[3];
    const size_t ci = x_shape[1], h = x_shape[2], wd = x_shape[3];
    const size_t groups = static_cast<size_t>(g.groups);
    const size_t cig = ci / groups, co_per_g = co / groups;
    const size_t kh = w.shape[2], kw = w.shape[3];
    for (size_t in = 0; in < n; ++in) {
        for (size_t oc = 0; oc < co; ++oc) {
            const size_t grp = oc / co_per_g;
            for (size_t oy = 0; oy < oh; ++oy) {
                for (size_t ox = 0; ox < ow; ++ox) {
                    const float gy = grad_y.at4(in, oc, oy, ox);
                    if (gy == 0.0f) continue;
                    for (size_t ic = 0; ic < cig; ++ic) {
                        const size_t xc = grp * cig + ic;
                        for (size_t ky = 0; ky < kh; ++ky) {
                            const long iy = static_cast<long>(oy) * g.stride +
                                            static_cast<long>(ky) - g.pad;
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            for (size_t kx = 0; kx < kw; ++kx) {
                                const long ix = static_cast<long>(ox) * g.stride +
                                                static_cast<long>(kx) - g.pad;
                                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                                gx.at4(in, xc, static_cast<size_t>(iy), static_cast<size_t>(ix)) +=
                                    gy * w.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

Tensor conv2d_bwd_weight(const Tensor& grad_y, const Tensor& x, const ConvGeom& g,
                         const std::vector<size_t>& w_shape) {
    Tensor gw(w_shape);
    const size_t n = grad_y.shape[0], co = grad_y.shape[1], oh = grad_y.shape[2],
                 ow = grad_y.shape[3];
    const size_t ci = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const size_t groups = static_cast<size_t>(g.groups);
    const size_t cig = ci / groups, co_per_g = co / groups;
    const size_t kh = w_shape[2], kw = w_shape[3];
    for (size_t in = 0; in < n; ++in) {
        for (size_t oc = 0; oc < co; ++oc) {
            const size_t grp = oc / co_per_g;
            for (size_t oy = 0; oy < oh; ++oy) {
                for (size_t ox = 0; ox < ow; ++ox) {
                    const float gy = grad_y.at4(in, oc, oy, ox);
                    if (gy == 0.0f) continue;
                    for (size_t ic = 0; ic < cig; ++ic) {
                        const size_t xc = grp * cig + ic;
                        for (size_t ky = 0; ky < kh; ++ky) {
                            const long iy = static_cast<long>(oy) * g.stride +
                                            static_cast<long>(ky) - g.pad;
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            for (size_t kx = 0; kx < kw; ++kx) {
                                const long ix = static_cast<long>(ox) * g.stride +
                                                static_cast<long>(kx) - g.pad;
                                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                                gw.at4(oc, ic, ky, kx) +=
                                    gy * x.at4(in, xc, static_cast<size_t>(iy),
                                               static_cast<size_t>(ix));
                            }
                        }
                    }
                }
            }
        }
    }
    return gw;
}

Tensor conv2d_bwd_bias(const Tensor& grad_y) {
    const size_t n = grad_y.shape[0], co = grad_y.shape[1], oh = grad_y.shape[2],
                 ow = grad_y.shape[3];
    Tensor gb({co});
    for (size_t in = 0; in < n; ++in)
        for (size_t oc = 0; oc < co; ++oc)
            for (size_t oy = 0; oy < oh; ++oy)
                for (size_t ox = 0; ox < ow; ++ox) gb.data[oc] += grad_y.at4(in, oc, oy, ox);
    return gb;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) fail(ErrorCode::InvalidArgument, "add shape mismatch");
    Tensor y(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] + b.data[i];
    return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) fail(ErrorCode::InvalidArgument, "hadamard shape mismatch");
    Tensor y(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] * b.data[i];
    return y;
}

Tensor scale(const Tensor& a, float s) {
    Tensor y(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] * s;
    return y;
}

Tensor channel_aggregate(const Tensor& x) {
    check4(x, "channel_aggregate input");
    const size_t n = x.shape[0], c = x.shape[1], tokens = x.shape[2] * x.shape[3];
    Tensor y({n, c, 1, 1});
    const float inv = 1.0f / static_cast<float>(tokens);
    for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic) {
            float acc = 0.0f;
            const float* p = &x.data[(in * c + ic) * tokens];
            for (size_t t = 0; t < tokens; ++t) acc += p[t];
            y.at4(in, ic, 0, 0) = acc * inv;
        }
    return y;
}

Tensor gate(const Tensor& x, const Tensor& agg) {
    check4(x, "gate input");
    const size_t n = x.shape[0], c = x.shape[1], tokens = x.shape[2] * x.shape[3];
    Tensor y(x.shape);
    for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic) {
            const float s = agg.at4(in, ic, 0, 0);
            const float* p = &x.data[(in * c + ic) * tokens];
            float* q = &y.data[(in * c + ic) * tokens];
            for (size_t t = 0; t < tokens; ++t) q[t] = p[t] * s;
        }
    return y;
}

Tensor gate_bwd_agg(const Tensor& grad_y, const Tensor& x) {
    const size_t n = x.shape[0], c = x.shape[1], tokens = x.shape[2] * x.shape[3];
    Tensor g({n, c, 1, 1});
    for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic) {
            const float* gy = &grad_y.data[(in * c + ic) * tokens];
            const float* px = &x.data[(in * c + ic) * tokens];
            float acc = 0.0f;
            for (size_t t = 0; t < tokens; ++t) acc += gy[t] * px[t];
            g.at4(in, ic, 0, 0) = acc;
        }
    return g;
}

Tensor token_mean(const Tensor& x) { return channel_aggregate(x); }

Tensor token_mean_bwd(const Tensor& grad_y, const std::vector<size_t>& x_shape) {
    const size_t n = x_shape[0], c = x_shape[1], tokens = x_shape[2] * x_shape[3];
    Tensor gx(x_shape);
    const float inv = 1.0f / static_cast<float>(tokens);
    for (size_t in = 0; in < n; ++in)
        for (size_t ic = 0; ic < c; ++ic) {
            const float g = grad_y.data[(in * c + ic)] * inv;
            float* p = &gx.data[(in * c + ic) * tokens];
            for (size_t t = 0; t < tokens; ++t) p[t] = g;
        }
    return gx;
}

LifOut lif_step(const Tensor& u_prev, const Tensor& x, const LifParams& p) {
    if (!u_prev.empty() && u_prev.shape != x.shape)
        fail(ErrorCode::InvalidArgument, "lif state shape mismatch");
    LifOut out;
    out.spike = Tensor(x.shape);
    out.u_next = Tensor(x.shape);
    out.u_pre = Tensor(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) {
        const float u = (u_prev.empty() ? 0.0f : p.decay * u_prev.data[i]) + x.data[i];
        const float s = u >= p.threshold ? 1.0f : 0.0f;
        out.u_pre.data[i] = u;
        out.spike.data[i] = s;
        out.u_next.data[i] = u * (1.0f - s);
    }
    return out;
}

Tensor lif_step_bwd(const Tensor& grad_spike, const Tensor& grad_u_next, const LifOut& out,
                    const LifParams& p) {
    Tensor gu(out.u_pre.shape);
    const float inv_tau = 1.0f / p.surrogate_tau;
    for (size_t i = 0; i < gu.numel(); ++i) {
        const float u = out.u_pre.data[i];
        const float s = 1.0f / (1.0f + std::exp(-(u - p.threshold) * inv_tau));
        const float surrogate = s * (1.0f - s) * inv_tau;
        float g = 0.0f;
        if (!grad_spike.empty()) g += grad_spike.data[i] * surrogate;
        // reset path with the spike detached
        if (!grad_u_next.empty()) g += grad_u_next.data[i] * (1.0f - out.spike.data[i]);
        gu.data[i] = g;
    }
    return gu;
}

float softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                            Tensor* grad_logits) {
    const size_t n = logits.shape[0], classes = logits.shape[1];
    if (labels.size() != n) fail(ErrorCode::InvalidArgument, "label count mismatch");
    if (grad_logits) *grad_logits = Tensor(logits.shape);
    double loss = 0.0;
    std::vector<double> probs(classes);
    for (size_t i = 0; i < n; ++i) {
        const float* row = &logits.data[i * classes];
        double mx = row[0];
        for (size_t c = 1; c < classes; ++c) mx = std::max<double>(mx, row[c]);
        double denom = 0.0;
        for (size_t c = 0; c < classes; ++c) {
            probs[c] = std::exp(row[c] - mx);
            denom += probs[c];
        }
        const int label = labels[i];
        loss += -(std::log(probs[static_cast<size_t>(label)] / denom));
        if (grad_logits) {
            float* gr = &grad_logits->data[i * classes];
            for (size_t c = 0; c < classes; ++c) {
                const double p = probs[c] / denom;
                gr[c] = static_cast<float>((p - (static_cast<int>(c) == label ? 1.0 : 0.0)) /
                                           static_cast<double>(n));
            }
        }
    }
    return static_cast<float>(loss / static_cast<double>(n));
}

} // namespace svitq::kernels

#include "dprune/layers.hpp"

#include <cmath>
#include <string>

namespace dprune {

namespace {

constexpr std::size_t K = Conv2dParams::kernel;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.shape().rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + t.shape().str());
}

}  // namespace

Conv2dParams::Conv2dParams(std::size_t out_channels, std::size_t in_channels)
    : weights(Shape{out_channels, in_channels, kernel, kernel}),
      bias(Shape{out_channels}),
      grad_weights(Shape{out_channels, in_channels, kernel, kernel}),
      grad_bias(Shape{out_channels}) {}

Tensor conv2d_forward(const Tensor& x, const Conv2dParams& p) {
    require_rank(x, 4, "conv2d_forward");
    const std::size_t batch = x.shape()[0], cin = x.shape()[1];
    const std::size_t h = x.shape()[2], w = x.shape()[3];
    if (cin != p.in_channels())
        throw ShapeError("conv2d_forward: input channels " + std::to_string(cin) +
                         " do not match params " + std::to_string(p.in_channels()));
    if (h < K || w < K)
        throw ShapeError("conv2d_forward: spatial extent smaller than kernel in " +
                         x.shape().str());
    const std::size_t cout = p.out_channels();
    const std::size_t oh = h - K + 1, ow = w - K + 1;

    Tensor y(Shape{batch, cout, oh, ow});
    const double* px = x.data();
    const double* pw = p.weights.data();
    const double* pb = p.bias.data();
    double* py = y.data();

    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* out = py + ((b * cout + co) * oh) * ow;
            for (std::size_t i = 0; i < oh * ow; ++i) out[i] = pb[co];
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* in = px + ((b * cin + ci) * h) * w;
                const double* ker = pw + ((co * cin + ci) * K) * K;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ky = 0; ky < K; ++ky) {
                        const double* irow = in + (oy + ky) * w;
                        const double* krow = ker + ky * K;
                        double* orow = out + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            double s = 0.0;
                            for (std::size_t kx = 0; kx < K; ++kx)
                                s += irow[ox + kx] * krow[kx];
                            orow[ox] += s;
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward(const Tensor& x, Conv2dParams& p, const Tensor& grad_out) {
    require_rank(x, 4, "conv2d_backward");
    require_rank(grad_out, 4, "conv2d_backward");
    const std::size_t batch = x.shape()[0], cin = x.shape()[1];
    const std::size_t h = x.shape()[2], w = x.shape()[3];
    const std::size_t cout = p.out_channels();
    if (cin != p.in_channels() || h < K || w < K)
        throw ShapeError("conv2d_backward: input " + x.shape().str() +
                         " inconsistent with params");
    const std::size_t oh = h - K + 1, ow = w - K + 1;
    if (grad_out.shape() != Shape{batch, cout, oh, ow})
        throw ShapeError("conv2d_backward: grad_out " + grad_out.shape().str() +
                         " does not match forward output");

    Tensor grad_x(x.shape());
    const double* px = x.data();
    const double* pw = p.weights.data();
    const double* pg = grad_out.data();
    double* pgx = grad_x.data();
    double* pgw = p.grad_weights.data();
    double* pgb = p.grad_bias.data();

    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            const double* go = pg + ((b * cout + co) * oh) * ow;
            double gb = 0.0;
            for (std::size_t i = 0; i < oh * ow; ++i) gb += go[i];
            pgb[co] += gb;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* in = px + ((b * cin + ci) * h) * w;
                double* gx = pgx + ((b * cin + ci) * h) * w;
                const double* ker = pw + ((co * cin + ci) * K) * K;
                double* gker = pgw + ((co * cin + ci) * K) * K;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const double* gorow = go + oy * ow;
                    for (std::size_t ky = 0; ky < K; ++ky) {
                        const double* irow = in + (oy + ky) * w;
                        double* gxrow = gx + (oy + ky) * w;
                        const double* krow = ker + ky * K;
                        double* gkrow = gker + ky * K;
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            double gk = 0.0;
                            const double kv = krow[kx];
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const double g = gorow[ox];
                                gk += g * irow[ox + kx];
                                gxrow[ox + kx] += g * kv;
                            }
                            gkrow[kx] += gk;
                        }
                    }
                }
            }
        }
    }
    return grad_x;
}

PoolResult maxpool2x2_forward(const Tensor& x) {
    require_rank(x, 4, "maxpool2x2_forward");
    const std::size_t batch = x.shape()[0], ch = x.shape()[1];
    const std::size_t h = x.shape()[2], w = x.shape()[3];
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("maxpool2x2_forward: odd spatial extent in " + x.shape().str());
    const std::size_t oh = h / 2, ow = w / 2;

    PoolResult r;
    r.out = Tensor(Shape{batch, ch, oh, ow});
    r.in_shape = x.shape();
    r.argmax.resize(batch * ch * oh * ow);

    const double* px = x.data();
    double* py = r.out.data();
    std::uint8_t* pa = r.argmax.data();

    for (std::size_t bc = 0; bc < batch * ch; ++bc) {
        const double* in = px + bc * h * w;
        double* out = py + bc * oh * ow;
        std::uint8_t* am = pa + bc * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double* win = in + (2 * oy) * w + 2 * ox;
                // window elements in row-major order; first maximum wins
                double best = win[0];
                std::uint8_t besti = 0;
                if (win[1] > best) { best = win[1]; besti = 1; }
                if (win[w] > best) { best = win[w]; besti = 2; }
                if (win[w + 1] > best) { best = win[w + 1]; besti = 3; }
                out[oy * ow + ox] = best;
                am[oy * ow + ox] = besti;
            }
        }
    }
    return r;
}

Tensor maxpool2x2_backward(const Tensor& grad_out, const PoolResult& cache) {
    require_rank(grad_out, 4, "maxpool2x2_backward");
    if (grad_out.shape() != cache.out.shape())
        throw ShapeError("maxpool2x2_backward: grad_out " + grad_out.shape().str() +
                         " does not match pooled shape " + cache.out.shape().str());
    const std::size_t batch = cache.in_shape[0], ch = cache.in_shape[1];
    const std::size_t h = cache.in_shape[2], w = cache.in_shape[3];
    const std::size_t oh = h / 2, ow = w / 2;

    Tensor grad_x(cache.in_shape);
    const double* pg = grad_out.data();
    const std::uint8_t* pa = cache.argmax.data();
    double* px = grad_x.data();

    for (std::size_t bc = 0; bc < batch * ch; ++bc) {
        const double* go = pg + bc * oh * ow;
        const std::uint8_t* am = pa + bc * oh * ow;
        double* gx = px + bc * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::uint8_t a = am[oy * ow + ox];
                const std::size_t iy = 2 * oy + (a >> 1);
                const std::size_t ix = 2 * ox + (a & 1);
                gx[iy * w + ix] += go[oy * ow + ox];
            }
        }
    }
    return grad_x;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    const double* px = x.data();
    double* py = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) py[i] = px[i] > 0.0 ? px[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (x.shape() != grad_out.shape())
        throw ShapeError("relu_backward: shape mismatch " + x.shape().str() + " vs " +
                         grad_out.shape().str());
    Tensor gx(x.shape());
    const double* px = x.data();
    const double* pg = grad_out.data();
    double* pgx = gx.data();
    for (std::size_t i = 0; i < x.size(); ++i) pgx[i] = px[i] > 0.0 ? pg[i] : 0.0;
    return gx;
}

Tensor dropout_forward(const Tensor& x, DropoutState& state, Rng& rng) {
    if (state.mode == Mode::eval) return x;
    const double keep = 1.0 - state.rate;
    state.mask = Tensor(x.shape());
    double* pm = state.mask.data();
    for (std::size_t i = 0; i < x.size(); ++i)
        pm[i] = rng.uniform() < state.rate ? 0.0 : 1.0 / keep;
    return mul(x, state.mask);
}

Tensor dropout_backward(const Tensor& grad_out, const DropoutState& state) {
    if (state.mode == Mode::eval) return grad_out;
    return mul(grad_out, state.mask);
}

LinearParams::LinearParams(std::size_t out_features, std::size_t in_features)
    : weights(Shape{out_features, in_features}),
      bias(Shape{out_features}),
      grad_weights(Shape{out_features, in_features}),
      grad_bias(Shape{out_features}) {}

Tensor linear_forward(const Tensor& x, const LinearParams& p) {
    require_rank(x, 2, "linear_forward");
    const std::size_t batch = x.shape()[0], in = x.shape()[1];
    if (in != p.in_features())
        throw ShapeError("linear_forward: input features " + std::to_string(in) +
                         " do not match params " + std::to_string(p.in_features()));
    const std::size_t out = p.out_features();

    Tensor y(Shape{batch, out});
    const double* px = x.data();
    const double* pw = p.weights.data();
    const double* pb = p.bias.data();
    double* py = y.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xrow = px + b * in;
        double* yrow = py + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wrow = pw + o * in;
            double s = pb[o];
            for (std::size_t i = 0; i < in; ++i) s += xrow[i] * wrow[i];
            yrow[o] = s;
        }
    }
    return y;
}

Tensor linear_backward(const Tensor& x, LinearParams& p, const Tensor& grad_out) {
    require_rank(x, 2, "linear_backward");
    require_rank(grad_out, 2, "linear_backward");
    const std::size_t batch = x.shape()[0], in = x.shape()[1];
    const std::size_t out = p.out_features();
    if (in != p.in_features() || grad_out.shape() != Shape{batch, out})
        throw ShapeError("linear_backward: shapes " + x.shape().str() + ", " +
                         grad_out.shape().str() + " inconsistent with params");

    Tensor grad_x(x.shape());
    const double* px = x.data();
    const double* pw = p.weights.data();
    const double* pg = grad_out.data();
    double* pgx = grad_x.data();
    double* pgw = p.grad_weights.data();
    double* pgb = p.grad_bias.data();

    for (std::size_t b = 0; b < batch; ++b) {
        const double* xrow = px + b * in;
        const double* grow = pg + b * out;
        double* gxrow = pgx + b * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double g = grow[o];
            if (g == 0.0) continue;
            const double* wrow = pw + o * in;
            double* gwrow = pgw + o * in;
            pgb[o] += g;
            for (std::size_t i = 0; i < in; ++i) {
                gxrow[i] += g * wrow[i];
                gwrow[i] += g * xrow[i];
            }
        }
    }
    return grad_x;
}

Tensor log_softmax_forward(const Tensor& x) {
    require_rank(x, 2, "log_softmax_forward");
    const std::size_t batch = x.shape()[0], n = x.shape()[1];
    Tensor y(x.shape());
    const double* px = x.data();
    double* py = y.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = px + b * n;
        double* yrow = py + b * n;
        double mx = row[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += std::exp(row[i] - mx);
        const double lse = std::log(sum);
        for (std::size_t i = 0; i < n; ++i) yrow[i] = row[i] - mx - lse;
    }
    return y;
}

Tensor log_softmax_backward(const Tensor& y, const Tensor& grad_out) {
    if (y.shape() != grad_out.shape())
        throw ShapeError("log_softmax_backward: shape mismatch " + y.shape().str() +
                         " vs " + grad_out.shape().str());
    const std::size_t batch = y.shape()[0], n = y.shape()[1];
    Tensor gx(y.shape());
    const double* py = y.data();
    const double* pg = grad_out.data();
    double* pgx = gx.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* yrow = py + b * n;
        const double* grow = pg + b * n;
        double* gxrow = pgx + b * n;
        double gsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) gsum += grow[i];
        for (std::size_t i = 0; i < n; ++i) gxrow[i] = grow[i] - std::exp(yrow[i]) * gsum;
    }
    return gx;
}

LossResult nll_loss(const Tensor& log_probs, std::span<const std::uint8_t> targets) {
    require_rank(log_probs, 2, "nll_loss");
    const std::size_t batch = log_probs.shape()[0], n = log_probs.shape()[1];
    if (targets.size() != batch)
        throw ShapeError("nll_loss: " + std::to_string(targets.size()) +
                         " targets for batch of " + std::to_string(batch));

    LossResult r{0.0, Tensor(log_probs.shape())};
    const double* pl = log_probs.data();
    double* pg = r.grad.data();
    const double scale = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t t = targets[b];
        if (t >= n)
            throw LabelError("nll_loss: target " + std::to_string(t) + " out of range 0.." +
                             std::to_string(n - 1));
        r.value -= pl[b * n + t] * scale;
        pg[b * n + t] = -scale;
    }
    return r;
}

}  // namespace dprune

#include "baccae/layers.hpp"

#include <cmath>

#include "baccae/error.hpp"

namespace baccae::nn {

namespace {

[[noreturn]] void mismatch(const std::string& op, const std::string& detail) {
    throw Error(ErrorKind::Dimension, op + ": " + detail);
}

void expect_rank(const std::string& op, const char* name, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        mismatch(op, std::string(name) + " must be rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

void expect_axis(const std::string& op, const char* what, std::size_t got, std::size_t want) {
    if (got != want) {
        mismatch(op, std::string(what) + " is " + std::to_string(got) + ", expected " + std::to_string(want));
    }
}

std::size_t conv_out_extent(const std::string& op, const char* axis, std::size_t in, std::size_t k,
                            const ConvGeometry& geo) {
    if (geo.stride == 0) mismatch(op, "stride must be >= 1");
    if (in + 2 * geo.padding < k) {
        mismatch(op, std::string(axis) + " axis: padded extent " + std::to_string(in + 2 * geo.padding) +
                         " smaller than kernel " + std::to_string(k));
    }
    return (in + 2 * geo.padding - k) / geo.stride + 1;
}

std::size_t convt_out_extent(const std::string& op, const char* axis, std::size_t in, std::size_t k,
                             const ConvGeometry& geo, std::size_t output_padding) {
    if (geo.stride == 0) mismatch(op, "stride must be >= 1");
    const long long full = static_cast<long long>((in - 1) * geo.stride + k + output_padding);
    const long long out = full - 2 * static_cast<long long>(geo.padding);
    if (out <= 0) mismatch(op, std::string(axis) + " axis: output extent is non-positive");
    return static_cast<std::size_t>(out);
}

// Shared index walk for a [C_out,C_in,kh,kw] convolution; visit(o, c, oy, ox, iy, ix, widx).
template <class Visit>
void for_each_tap(std::size_t c_out, std::size_t c_in, std::size_t kh, std::size_t kw, std::size_t out_h,
                  std::size_t out_w, std::size_t in_h, std::size_t in_w, const ConvGeometry& geo, Visit&& visit) {
    const auto s = static_cast<long long>(geo.stride);
    const auto p = static_cast<long long>(geo.padding);
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t c = 0; c < c_in; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::size_t widx = ((o * c_in + c) * kh + ky) * kw + kx;
                    for (std::size_t oy = 0; oy < out_h; ++oy) {
                        const long long iy = static_cast<long long>(oy) * s - p + static_cast<long long>(ky);
                        if (iy < 0 || iy >= static_cast<long long>(in_h)) continue;
                        for (std::size_t ox = 0; ox < out_w; ++ox) {
                            const long long ix = static_cast<long long>(ox) * s - p + static_cast<long long>(kx);
                            if (ix < 0 || ix >= static_cast<long long>(in_w)) continue;
                            visit(o, c, oy, ox, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), widx);
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvGeometry& geo) {
    const std::string op = "conv2d";
    expect_rank(op, "input", input, 3);
    expect_rank(op, "weights", weights, 4);
    expect_rank(op, "bias", bias, 1);
    expect_axis(op, "weights in-channel axis", weights.dim(1), input.dim(0));
    expect_axis(op, "bias length", bias.dim(0), weights.dim(0));
    const std::size_t c_out = weights.dim(0), c_in = input.dim(0);
    const std::size_t kh = weights.dim(2), kw = weights.dim(3);
    const std::size_t out_h = conv_out_extent(op, "height", input.dim(1), kh, geo);
    const std::size_t out_w = conv_out_extent(op, "width", input.dim(2), kw, geo);

    Tensor out({c_out, out_h, out_w});
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t i = 0; i < out_h * out_w; ++i) out[o * out_h * out_w + i] = bias[o];
    }
    for_each_tap(c_out, c_in, kh, kw, out_h, out_w, input.dim(1), input.dim(2), geo,
                 [&](std::size_t o, std::size_t c, std::size_t oy, std::size_t ox, std::size_t iy, std::size_t ix,
                     std::size_t widx) { out.at(o, oy, ox) += weights[widx] * input.at(c, iy, ix); });
    return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          const ConvGeometry& geo) {
    const std::string op = "conv2d_backward";
    expect_rank(op, "grad_out", grad_out, 3);
    expect_rank(op, "input", input, 3);
    expect_rank(op, "weights", weights, 4);
    expect_axis(op, "weights in-channel axis", weights.dim(1), input.dim(0));
    expect_axis(op, "grad_out channel axis", grad_out.dim(0), weights.dim(0));
    const std::size_t c_out = weights.dim(0), c_in = input.dim(0);
    const std::size_t kh = weights.dim(2), kw = weights.dim(3);
    const std::size_t out_h = conv_out_extent(op, "height", input.dim(1), kh, geo);
    const std::size_t out_w = conv_out_extent(op, "width", input.dim(2), kw, geo);
    expect_axis(op, "grad_out height", grad_out.dim(1), out_h);
    expect_axis(op, "grad_out width", grad_out.dim(2), out_w);

    ConvGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({c_out})};
    for (std::size_t o = 0; o < c_out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < out_h * out_w; ++i) acc += grad_out[o * out_h * out_w + i];
        g.bias[o] = acc;
    }
    for_each_tap(c_out, c_in, kh, kw, out_h, out_w, input.dim(1), input.dim(2), geo,
                 [&](std::size_t o, std::size_t c, std::size_t oy, std::size_t ox, std::size_t iy, std::size_t ix,
                     std::size_t widx) {
                     const double go = grad_out.at(o, oy, ox);
                     g.weights[widx] += go * input.at(c, iy, ix);
                     g.input.at(c, iy, ix) += go * weights[widx];
                 });
    return g;
}

// A transposed convolution is the adjoint of conv2d: the roles of its input and
// output swap, so the same tap walk runs with (C_out, C_in) read from [C_in,C_out,kh,kw].
Tensor conv_transpose2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        const ConvGeometry& geo) {
    const std::string op = "conv_transpose2d";
    expect_rank(op, "input", input, 3);
    expect_rank(op, "weights", weights, 4);
    expect_rank(op, "bias", bias, 1);
    expect_axis(op, "weights in-channel axis", weights.dim(0), input.dim(0));
    expect_axis(op, "bias length", bias.dim(0), weights.dim(1));
    const std::size_t c_in = input.dim(0), c_out = weights.dim(1);
    const std::size_t kh = weights.dim(2), kw = weights.dim(3);
    const std::size_t out_h = convt_out_extent(op, "height", input.dim(1), kh, geo, geo.output_padding_h);
    const std::size_t out_w = convt_out_extent(op, "width", input.dim(2), kw, geo, geo.output_padding_w);

    Tensor out({c_out, out_h, out_w});
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t i = 0; i < out_h * out_w; ++i) out[o * out_h * out_w + i] = bias[o];
    }
    // Walk as a conv from `out` (as input) to `input` (as output); weight index
    // layout [C_in,C_out,kh,kw] matches for_each_tap's [o,c,ky,kx] with o=C_in.
    for_each_tap(c_in, c_out, kh, kw, input.dim(1), input.dim(2), out_h, out_w, geo,
                 [&](std::size_t ci, std::size_t co, std::size_t y, std::size_t x, std::size_t oy, std::size_t ox,
                     std::size_t widx) { out.at(co, oy, ox) += weights[widx] * input.at(ci, y, x); });
    return out;
}

ConvGrads conv_transpose2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                                    const ConvGeometry& geo) {
    const std::string op = "conv_transpose2d_backward";
    expect_rank(op, "grad_out", grad_out, 3);
    expect_rank(op, "input", input, 3);
    expect_rank(op, "weights", weights, 4);
    expect_axis(op, "weights in-channel axis", weights.dim(0), input.dim(0));
    expect_axis(op, "grad_out channel axis", grad_out.dim(0), weights.dim(1));
    const std::size_t c_in = input.dim(0), c_out = weights.dim(1);
    const std::size_t kh = weights.dim(2), kw = weights.dim(3);
    const std::size_t out_h = convt_out_extent(op, "height", input.dim(1), kh, geo, geo.output_padding_h);
    const std::size_t out_w = convt_out_extent(op, "width", input.dim(2), kw, geo, geo.output_padding_w);
    expect_axis(op, "grad_out height", grad_out.dim(1), out_h);
    expect_axis(op, "grad_out width", grad_out.dim(2), out_w);

    ConvGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({c_out})};
    for (std::size_t o = 0; o < c_out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < out_h * out_w; ++i) acc += grad_out[o * out_h * out_w + i];
        g.bias[o] = acc;
    }
    for_each_tap(c_in, c_out, kh, kw, input.dim(1), input.dim(2), out_h, out_w, geo,
                 [&](std::size_t ci, std::size_t co, std::size_t y, std::size_t x, std::size_t oy, std::size_t ox,
                     std::size_t widx) {
                     const double go = grad_out.at(co, oy, ox);
                     g.weights[widx] += go * input.at(ci, y, x);
                     g.input.at(ci, y, x) += go * weights[widx];
                 });
    return g;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    const std::string op = "dense";
    expect_rank(op, "weights", weights, 2);
    expect_rank(op, "bias", bias, 1);
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    expect_axis(op, "input length", input.size(), n);
    expect_axis(op, "bias length", bias.dim(0), m);
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = bias[i];
        const double* row = weights.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * input[j];
        out[i] = acc;
    }
    return out;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights) {
    const std::string op = "dense_backward";
    expect_rank(op, "weights", weights, 2);
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    expect_axis(op, "input length", input.size(), n);
    expect_axis(op, "grad_out length", grad_out.size(), m);
    DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
    for (std::size_t i = 0; i < m; ++i) {
        const double go = grad_out[i];
        g.bias[i] = go;
        const double* row = weights.data() + i * n;
        double* grow = g.weights.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            grow[j] = go * input[j];
            g.input[j] += go * row[j];
        }
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    if (!grad_out.same_shape(input)) mismatch("relu_backward", "grad_out and input shapes differ");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input[i] > 0.0)) g[i] = 0.0;
    }
    return g;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
    if (!grad_out.same_shape(output)) mismatch("sigmoid_backward", "grad_out and output shapes differ");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (1.0 - output[i]);
    return g;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        mismatch("mse_loss", "pred " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        mismatch("mse_grad", "pred " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
    }
    Tensor g(pred.shape());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

double l2_penalty(const Tensor& z, double lambda) {
    if (lambda < 0.0) throw Error(ErrorKind::Parameter, "l2 penalty weight must be non-negative");
    double acc = 0.0;
    for (double v : z.values()) acc += v * v;
    return lambda * acc;
}

Tensor l2_grad(const Tensor& z, double lambda) {
    if (lambda < 0.0) throw Error(ErrorKind::Parameter, "l2 penalty weight must be non-negative");
    Tensor g = z;
    for (auto& v : g.values()) v *= 2.0 * lambda;
    return g;
}

}  // namespace baccae::nn

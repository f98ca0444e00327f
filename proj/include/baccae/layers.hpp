#pragma once

#include "baccae/tensor.hpp"

namespace baccae::nn {

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
    // Extra rows/cols appended to a transposed convolution's output so a
    // mirrored decoder can land exactly on the encoder's input size.
    std::size_t output_padding_h = 0;
    std::size_t output_padding_w = 0;
};

// Cross-correlation of input [C_in,H,W] with weights [C_out,C_in,kh,kw] plus
// bias [C_out]; zero padding. Output [C_out,H',W'], H' = (H+2p-kh)/s + 1.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const ConvGeometry& geo);

struct ConvGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          const ConvGeometry& geo);

// Transposed convolution of input [C_in,H,W] with weights [C_in,C_out,kh,kw].
// Output [C_out,H',W'], H' = (H-1)s - 2p + kh + output_padding_h.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        const ConvGeometry& geo);

ConvGrads conv_transpose2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                                    const ConvGeometry& geo);

// y = W x + b with x [n], W [m,n], b [m].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights);

Tensor relu(const Tensor& x);
// relu'(0) is taken as 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

Tensor sigmoid(const Tensor& x);
// Takes the forward output s and returns grad_out * s(1-s).
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

double mse_loss(const Tensor& pred, const Tensor& target);
Tensor mse_grad(const Tensor& pred, const Tensor& target);

// lambda * sum z_i^2; gradient 2 lambda z.
double l2_penalty(const Tensor& z, double lambda);
Tensor l2_grad(const Tensor& z, double lambda);

}  // namespace baccae::nn

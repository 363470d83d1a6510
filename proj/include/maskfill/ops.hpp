// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "maskfill/tape.hpp"

namespace maskfill {

/// 2-d convolution with zero padding.
/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'],
/// H' = (H + 2*pad - kh) / stride + 1.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t pad);

/// max(x, slope*x); the gradient at 0 takes the positive branch.
template <typename T> Var<T> leaky_relu(Var<T> x, T slope);

/// Replicates every pixel into a factor x factor block.
template <typename T> Var<T> upsample_nearest(Var<T> x, std::size_t factor);

/// Concatenates two [N,C,H,W] tensors along C.
template <typename T> Var<T> concat_channels(Var<T> a, Var<T> b);

/// Mirror padding without edge repeat (numpy "reflect"); each pad must be < extent.
template <typename T>
Var<T> reflect_pad(Var<T> x, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right);

/// Spatial window [top, top+height) x [left, left+width).
template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> x, T factor);
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

/// Mean squared error against a constant target over every element.
template <typename T> Var<T> mse(Var<T> pred, const Tensor<T> &target);

} // namespace maskfill

#pragma once

#include <cmath>
#include <vector>

#include "d2f/autodiff.hpp"

// Bi-directional attention: row and column average profiles are squeezed
// jointly, split back per direction and turned into two sigmoid gates.
namespace d2f {

template <class T>
struct BiDirParams {
  std::size_t channels = 0;
  std::size_t reduction = 8;
  Parameter<T> squeeze_kernel;   // (C/r) x C
  Parameter<T> squeeze_bias;     // C/r
  Parameter<T> row_kernel;       // C x (C/r)
  Parameter<T> row_bias;         // C
  Parameter<T> col_kernel;       // C x (C/r)
  Parameter<T> col_bias;         // C

  // Kernels uniform in +-1/sqrt(fan_in), biases zero.
  static BiDirParams init(std::size_t channels, std::size_t reduction, Rng& rng) {
    if (reduction == 0 || channels % reduction != 0)
      throw ConfigError("bidir: channel count " + std::to_string(channels) +
                        " not divisible by reduction " + std::to_string(reduction));
    const std::size_t mid = channels / reduction;
    const double b_in = 1.0 / std::sqrt(static_cast<double>(channels));
    const double b_mid = 1.0 / std::sqrt(static_cast<double>(mid));
    BiDirParams p;
    p.channels = channels;
    p.reduction = reduction;
    p.squeeze_kernel = {"bidir.squeeze_kernel", BasicTensor<T>::uniform({mid, channels}, rng, -b_in, b_in)};
    p.squeeze_bias = {"bidir.squeeze_bias", BasicTensor<T>(Shape{mid})};
    p.row_kernel = {"bidir.row_kernel", BasicTensor<T>::uniform({channels, mid}, rng, -b_mid, b_mid)};
    p.row_bias = {"bidir.row_bias", BasicTensor<T>(Shape{channels})};
    p.col_kernel = {"bidir.col_kernel", BasicTensor<T>::uniform({channels, mid}, rng, -b_mid, b_mid)};
    p.col_bias = {"bidir.col_bias", BasicTensor<T>(Shape{channels})};
    return p;
  }

  std::vector<Parameter<T>*> parameters() {
    return {&squeeze_kernel, &squeeze_bias, &row_kernel, &row_bias, &col_kernel, &col_bias};
  }

  void check(std::size_t input_channels) const {
    const std::size_t mid = reduction ? channels / reduction : 0;
    if (input_channels != channels || reduction == 0 || channels % reduction != 0 ||
        squeeze_kernel.value.shape() != Shape{mid, channels} ||
        row_kernel.value.shape() != Shape{channels, mid} ||
        col_kernel.value.shape() != Shape{channels, mid})
      throw ShapeError("bidir: parameters do not match " + std::to_string(input_channels) +
                       " input channels");
  }
};

// Intermediate values of one forward pass.
template <class T>
struct DirectionalProfiles {
  BasicTensor<T> row_profile;   // C x H
  BasicTensor<T> col_profile;   // C x W
  BasicTensor<T> joint;         // C x (H + W)
  BasicTensor<T> squeezed;      // (C/r) x (H + W), nonnegative
  BasicTensor<T> squeezed_rows; // (C/r) x H
  BasicTensor<T> squeezed_cols; // (C/r) x W
  BasicTensor<T> row_gate;      // C x H
  BasicTensor<T> col_gate;      // C x W
};

template <class T>
struct BiDirVars {
  Var<T> out;
  Var<T> row_profile, col_profile, joint, squeezed, squeezed_rows, squeezed_cols, row_gate, col_gate;
};

template <class T>
BiDirVars<T> bidir_forward(Tape<T>& tape, Var<T> x, BiDirParams<T>& p) {
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("bidir: expected C x H x W input");
  p.check(xv.dim(0));
  const std::size_t H = xv.dim(1), W = xv.dim(2);
  BiDirVars<T> v;
  v.row_profile = ag::pool_rows(x);
  v.col_profile = ag::pool_cols(x);
  v.joint = ag::concat_cols(v.row_profile, v.col_profile);
  v.squeezed = ag::relu(ag::conv1x1(v.joint, tape.watch(p.squeeze_kernel), tape.watch(p.squeeze_bias)));
  v.squeezed_rows = ag::slice_cols(v.squeezed, 0, H);
  v.squeezed_cols = ag::slice_cols(v.squeezed, H, H + W);
  v.row_gate = ag::sigmoid(ag::conv1x1(v.squeezed_rows, tape.watch(p.row_kernel), tape.watch(p.row_bias)));
  v.col_gate = ag::sigmoid(ag::conv1x1(v.squeezed_cols, tape.watch(p.col_kernel), tape.watch(p.col_bias)));
  v.out = ag::directional_gate(x, v.row_gate, v.col_gate);
  return v;
}

template <class T>
struct BiDirResult {
  BasicTensor<T> out;
  DirectionalProfiles<T> profiles;
};

template <class T>
BiDirResult<T> bidir_forward(const BasicTensor<T>& x, BiDirParams<T>& p) {
  Tape<T> tape;
  auto v = bidir_forward(tape, tape.constant(x), p);
  return {v.out.value(),
          {v.row_profile.value(), v.col_profile.value(), v.joint.value(), v.squeezed.value(),
           v.squeezed_rows.value(), v.squeezed_cols.value(), v.row_gate.value(), v.col_gate.value()}};
}

// out[c,h] = mean over w of x[c,h,w]
template <class T>
BasicTensor<T> pool_horizontal(const BasicTensor<T>& x) {
  Tape<T> tape;
  return ag::pool_rows(tape.constant(x)).value();
}

// out[c,w] = mean over h of x[c,h,w]
template <class T>
BasicTensor<T> pool_vertical(const BasicTensor<T>& x) {
  Tape<T> tape;
  return ag::pool_cols(tape.constant(x)).value();
}

}  // namespace d2f

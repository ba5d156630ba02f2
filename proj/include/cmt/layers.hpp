#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmt/boxes.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

// ---------------------------------------------------------------------------
// Layer parameters
// ---------------------------------------------------------------------------

struct Conv2dParams {
  Tensor w;  // outC x inC x kH x kW
  Tensor b;  // outC
  std::int64_t stride = 1;
  std::int64_t pad = 0;

  std::int64_t out_channels() const { return w.dim(0); }
  std::int64_t in_channels() const { return w.dim(1); }
};

struct Deconv2dParams {
  Tensor w;  // inC x outC x kH x kW
  Tensor b;  // outC
  std::int64_t stride = 1;
  std::int64_t pad = 0;

  std::int64_t in_channels() const { return w.dim(0); }
  std::int64_t out_channels() const { return w.dim(1); }
};

struct LinearParams {
  Tensor w;  // outF x inF
  Tensor b;  // outF

  std::int64_t out_features() const { return w.dim(0); }
  std::int64_t in_features() const { return w.dim(1); }
};

// He-normal init for conv/deconv filters, Xavier for linear, biases zero.
Conv2dParams conv2d_init(std::int64_t out_c, std::int64_t in_c, std::int64_t k,
                         std::int64_t stride, std::int64_t pad, Rng& rng);
Deconv2dParams deconv2d_init(std::int64_t in_c, std::int64_t out_c, std::int64_t k,
                             std::int64_t stride, std::int64_t pad, Rng& rng);
LinearParams linear_init(std::int64_t out_f, std::int64_t in_f, Rng& rng);

// ---------------------------------------------------------------------------
// Forward / backward passes. Each backward takes the forward input (and any
// cheap cached result) explicitly; there is no autodiff graph.
// ---------------------------------------------------------------------------

/// floor((in + 2*pad - k) / stride) + 1
std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                             std::int64_t pad);
/// (in - 1)*stride - 2*pad + k
std::int64_t deconv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                               std::int64_t pad);

Tensor conv2d(const Tensor& x, const Conv2dParams& p);

struct Conv2dGrad {
  Tensor dw, db, dx;
};
Conv2dGrad conv2d_grad(const Tensor& x, const Conv2dParams& p, const Tensor& dout,
                       bool need_dx = true);

/// Transposed convolution: each input element scatters a kernel footprint into
/// the output at stride spacing; the adjoint of conv2d with the same geometry.
Tensor deconv2d(const Tensor& x, const Deconv2dParams& p);

struct Deconv2dGrad {
  Tensor dw, db, dx;
};
Deconv2dGrad deconv2d_grad(const Tensor& x, const Deconv2dParams& p, const Tensor& dout,
                           bool need_dx = true);

struct MaxPoolResult {
  Tensor y;
  std::vector<std::int64_t> argmax;  // flat index into x per output element
};
MaxPoolResult maxpool2d(const Tensor& x, std::int64_t window, std::int64_t stride);
Tensor maxpool2d_grad(const Shape& x_shape, const MaxPoolResult& fwd, const Tensor& dout);

Tensor relu(const Tensor& x);
/// Gradient passes where x > 0; defined as 0 at exactly 0.
Tensor relu_grad(const Tensor& x, const Tensor& dout);

struct RoiPoolResult {
  Tensor y;                          // C x out x out
  std::vector<std::int64_t> argmax;  // flat index into features, -1 for empty cells
};
/// Quantized max pooling of a region of a 1 x C x H x W feature map to a fixed
/// out x out grid. The roi (image coordinates) is scaled by spatial_scale and
/// rounded outward to the integer grid; empty cells yield 0.
RoiPoolResult roi_pool(const Tensor& features, const Box& roi, double spatial_scale,
                       std::int64_t out);
Tensor roi_pool_grad(const Shape& features_shape, const RoiPoolResult& fwd, const Tensor& dout);

Tensor concat_channels(const std::vector<const Tensor*>& xs);
std::vector<Tensor> concat_channels_grad(const std::vector<std::int64_t>& channels,
                                         const Tensor& dout);

/// x is N x inF (a 1-D tensor is treated as a single row). Returns N x outF.
Tensor linear(const Tensor& x, const LinearParams& p);

struct LinearGrad {
  Tensor dw, db, dx;
};
LinearGrad linear_grad(const Tensor& x, const LinearParams& p, const Tensor& dout);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct SoftmaxXentResult {
  double loss = 0.0;
  Tensor probs;
  Tensor dlogits;  // probs - onehot(label)
};
/// Numerically stabilized softmax cross-entropy over a logit vector.
SoftmaxXentResult softmax_xent(const Tensor& logits, std::int64_t label);

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};
/// loss = sum((recon - target)^2) / (2 P), gradient (recon - target) / P.
LossResult square_loss(const Tensor& recon, const Tensor& target);
/// Per coordinate 0.5 d^2 if |d| < 1 else |d| - 0.5, summed.
LossResult smooth_l1(const Tensor& pred, const Tensor& target);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct NamedParam {
  std::string name;
  Tensor* value = nullptr;
};

/// SGD with momentum and weight decay:
///   v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v
class SgdState {
 public:
  SgdState(double learning_rate, double momentum, double weight_decay);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  void step(const std::string& name, Tensor& w, const Tensor& g);
  void step_all(const std::vector<NamedParam>& params, const std::vector<Tensor>& grads);

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  std::unordered_map<std::string, Tensor> velocity_;
};

/// base_lr while epoch < drop_epoch, then base_lr / factor.
double lr_schedule(std::int64_t epoch, double base_lr, std::int64_t drop_epoch, double factor);

}  // namespace cmt

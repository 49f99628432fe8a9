#pragma once

#include "lotseg/tensor.hpp"

namespace lotseg {

/// Bilinear warp: out(p) = image sampled at p + displacement(p), with
/// out-of-bounds sample coordinates clamped to the border. Differentiable with
/// respect to both the image and the field (see warp_backward).
Grid warp(const Grid& image, const Field& field);

/// Back-propagates d_out through warp(). Either output may be null.
/// Gradients are accumulated into pre-sized outputs.
void warp_backward(const Grid& image, const Field& field, const Grid& d_out,
                   Field* d_field, Grid* d_image);

/// Smoothness regularizer: mean over all forward-difference terms (both
/// displacement components, both spatial directions, edges excluded) of the
/// squared difference. Zero exactly on constant fields.
double grad_reg(const Field& field);

/// Accumulates d_scalar * d(grad_reg)/d(field) into d_field.
void grad_reg_backward(const Field& field, double d_scalar, Field& d_field);

/// Mean squared difference between two images.
double mse(const Grid& a, const Grid& b);

/// Registration loss: mse(warp(source, field), target) + lambda * grad_reg(field).
double reg_loss(const Field& field, const Grid& source, const Grid& target, double lambda);

/// Accumulates the gradient of reg_loss with respect to the field.
void reg_loss_backward(const Field& field, const Grid& source, const Grid& target,
                       double lambda, Field& d_field);

}  // namespace lotseg

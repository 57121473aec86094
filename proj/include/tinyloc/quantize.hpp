#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <vector>

#include "tinyloc/tensor.hpp"

namespace tinyloc::quant {

// Affine int8 quantization: Q = round(x/scale + zero_point), clamped to
// [qmin, qmax]; dequantize(q) = (q − zero_point)·scale. Rounding is
// half-away-from-zero. Default integer range is unsigned [0, 255]; a signed
// [−128, 127] variant is selectable. Static (calibrated) quantization keeps
// weight columns feeding large activations at half precision and quantizes
// the rest per output row; dynamic quantization is tensor-wise on weights
// with activations quantized per call.

struct QuantParams {
  float scale = 1.0f;
  int32_t zero_point = 0;
  int32_t qmin = 0;
  int32_t qmax = 255;
};

inline QuantParams affine_params(double min_float, double max_float,
                                 int32_t qmin = 0, int32_t qmax = 255) {
  if (!(max_float > min_float))
    throw std::invalid_argument("affine_params: degenerate float range");
  if (qmax <= qmin)
    throw std::invalid_argument("affine_params: degenerate integer range");
  QuantParams qp;
  qp.qmin = qmin;
  qp.qmax = qmax;
  const double scale = (max_float - min_float) / double(qmax - qmin);
  qp.scale = static_cast<float>(scale);
  const double zp = std::round(-min_float / scale);  // half away from zero
  qp.zero_point = static_cast<int32_t>(
      std::clamp(zp, double(qmin), double(qmax)));
  return qp;
}

inline int32_t quantize_value(double x, const QuantParams& qp) {
  const double q = std::round(x / double(qp.scale) + double(qp.zero_point));
  return static_cast<int32_t>(
      std::clamp(q, double(qp.qmin), double(qp.qmax)));
}

inline double dequantize_value(int32_t q, const QuantParams& qp) {
  return double(q - qp.zero_point) * double(qp.scale);
}

// Codes are stored one byte each; signed ranges use two's complement.
inline uint8_t code_to_byte(int32_t q) {
  return static_cast<uint8_t>(q & 0xFF);
}
inline int32_t byte_to_code(uint8_t b, const QuantParams& qp) {
  return qp.qmin < 0 ? int32_t(static_cast<int8_t>(b)) : int32_t(b);
}

template <typename T>
Tensor<uint8_t> quantize_tensor(const Tensor<T>& x, const QuantParams& qp) {
  Tensor<uint8_t> q(x.shape);
  for (std::size_t i = 0; i < x.count(); ++i)
    q[i] = code_to_byte(quantize_value(double(x[i]), qp));
  return q;
}

template <typename T = float>
Tensor<T> dequantize_tensor(const Tensor<uint8_t>& q, const QuantParams& qp) {
  Tensor<T> x(q.shape);
  for (std::size_t i = 0; i < q.count(); ++i)
    x[i] = static_cast<T>(dequantize_value(byte_to_code(q[i], qp), qp));
  return x;
}

/// Column j is flagged iff max over all calibration rows of |activation_j|
/// is ≥ tau. Activations: each batch is M×D with a shared D.
inline std::vector<uint32_t> detect_outlier_columns(
    const std::vector<Tensor<float>>& calibration, double tau) {
  if (calibration.empty() || calibration[0].count() == 0)
    throw std::invalid_argument(
        "detect_outlier_columns: calibration set is empty");
  const std::size_t D = calibration[0].cols();
  std::vector<double> colmax(D, 0.0);
  for (const auto& batch : calibration) {
    if (batch.cols() != D)
      throw std::invalid_argument(
          "detect_outlier_columns: inconsistent feature dim");
    for (std::size_t r = 0; r < batch.rows(); ++r)
      for (std::size_t j = 0; j < D; ++j)
        colmax[j] = std::max(colmax[j], std::abs(double(batch.at(r, j))));
  }
  std::vector<uint32_t> out;
  for (std::size_t j = 0; j < D; ++j)
    if (colmax[j] >= tau) out.push_back(static_cast<uint32_t>(j));
  return out;
}

struct QuantizedLinear {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool per_row = true;  // vector-wise (static) vs tensor-wise (dynamic)
  Tensor<uint8_t> codes;                // out × (in − |outliers|)
  std::vector<QuantParams> params;      // out entries if per_row, else 1
  std::vector<uint32_t> outlier_cols;   // sorted, unique
  Tensor<uint16_t> outlier_half;        // out × |outliers|, binary16
  Tensor<float> bias;                   // untouched full precision

  /// Serialized weight footprint: int8 payload + 8 B per quant record
  /// (fp32 scale + int32 zero point) + 2 B per half-precision outlier
  /// weight. Bias excluded — it is identical in the fp32 layer.
  std::size_t weight_bytes() const {
    return codes.count() + 8 * params.size() + 2 * outlier_half.count();
  }
};

namespace detail {
inline std::vector<uint32_t> complement_columns(
    std::size_t in, const std::vector<uint32_t>& outliers) {
  std::vector<uint32_t> keep;
  keep.reserve(in - outliers.size());
  std::size_t oi = 0;
  for (uint32_t j = 0; j < in; ++j) {
    if (oi < outliers.size() && outliers[oi] == j)
      ++oi;
    else
      keep.push_back(j);
  }
  return keep;
}
}  // namespace detail

/// Vector-wise static quantization of one linear layer. Weight W is
/// out×in, fp32. Outlier columns (from calibration activations vs. tau)
/// are stored at half precision; every other column is quantized with one
/// QuantParams per output row.
inline QuantizedLinear static_quantize_linear(
    const Tensor<float>& W, const Tensor<float>& bias,
    const std::vector<Tensor<float>>& calibration, double tau,
    int32_t qmin = 0, int32_t qmax = 255) {
  if (calibration.empty() || calibration[0].cols() != W.cols())
    throw std::invalid_argument(
        "static_quantize_linear: calibration does not match layer input dim");
  QuantizedLinear ql;
  ql.out_features = W.rows();
  ql.in_features = W.cols();
  ql.per_row = true;
  ql.bias = bias;
  ql.outlier_cols = detect_outlier_columns(calibration, tau);
  const auto keep = detail::complement_columns(W.cols(), ql.outlier_cols);
  if (keep.empty())
    std::cerr << "tinyloc: warning: every input column is an outlier; layer "
                 "stored entirely at half precision\n";

  ql.outlier_half = Tensor<uint16_t>({W.rows(), ql.outlier_cols.size()});
  for (std::size_t r = 0; r < W.rows(); ++r)
    for (std::size_t o = 0; o < ql.outlier_cols.size(); ++o)
      ql.outlier_half.at(r, o) = float_to_half(W.at(r, ql.outlier_cols[o]));

  ql.codes = Tensor<uint8_t>({W.rows(), keep.size()});
  if (!keep.empty()) {
    ql.params.reserve(W.rows());
    for (std::size_t r = 0; r < W.rows(); ++r) {
      double lo = W.at(r, keep[0]), hi = lo;
      for (const uint32_t j : keep) {
        lo = std::min(lo, double(W.at(r, j)));
        hi = std::max(hi, double(W.at(r, j)));
      }
      if (!(hi > lo)) hi = lo + 1e-8;  // constant row: widen
      const QuantParams qp = affine_params(lo, hi, qmin, qmax);
      ql.params.push_back(qp);
      for (std::size_t c = 0; c < keep.size(); ++c)
        ql.codes.at(r, c) =
            code_to_byte(quantize_value(double(W.at(r, keep[c])), qp));
    }
  }
  return ql;
}

/// Tensor-wise quantization of the weights (dynamic scheme). No outliers;
/// one QuantParams for the whole matrix.
inline QuantizedLinear dynamic_quantize_linear(const Tensor<float>& W,
                                               const Tensor<float>& bias,
                                               int32_t qmin = 0,
                                               int32_t qmax = 255) {
  QuantizedLinear ql;
  ql.out_features = W.rows();
  ql.in_features = W.cols();
  ql.per_row = false;
  ql.bias = bias;
  double lo = W[0], hi = W[0];
  for (const float v : W.data) {
    lo = std::min(lo, double(v));
    hi = std::max(hi, double(v));
  }
  if (!(hi > lo)) hi = lo + 1e-8;
  const QuantParams qp = affine_params(lo, hi, qmin, qmax);
  ql.params = {qp};
  ql.codes = quantize_tensor(W, qp);
  ql.outlier_half = Tensor<uint16_t>({W.rows(), 0});
  return ql;
}

/// Inference product for a statically quantized layer:
/// dequantized-int8 weights over non-outlier columns + half-precision
/// weights over outlier columns + full-precision bias. x is T×in.
inline Tensor<float> mixed_matmul(const QuantizedLinear& ql,
                                  const Tensor<float>& x) {
  if (x.cols() != ql.in_features)
    throw std::invalid_argument("mixed_matmul: input dim mismatch");
  const std::size_t M = x.rows(), out = ql.out_features;
  const auto keep =
      detail::complement_columns(ql.in_features, ql.outlier_cols);
  Tensor<float> y({M, out});
  const bool biased = ql.bias.count() == out;
  for (std::size_t t = 0; t < M; ++t)
    for (std::size_t r = 0; r < out; ++r) {
      double acc = biased ? double(ql.bias[r]) : 0.0;
      const QuantParams& qp = ql.per_row ? ql.params[r] : ql.params[0];
      for (std::size_t c = 0; c < keep.size(); ++c) {
        const double w =
            dequantize_value(byte_to_code(ql.codes.at(r, c), qp), qp);
        acc += w * double(x.at(t, keep[c]));
      }
      for (std::size_t o = 0; o < ql.outlier_cols.size(); ++o)
        acc += double(half_to_float(ql.outlier_half.at(r, o))) *
               double(x.at(t, ql.outlier_cols[o]));
      y.at(t, r) = static_cast<float>(acc);
    }
  return y;
}

/// Inference product for the dynamic scheme: activations are quantized on
/// the fly from this call's min/max (range widened to include zero, ε-padded
/// when degenerate), multiplied against the int8 weights in integer
/// arithmetic, then rescaled. x is T×in.
inline Tensor<float> dynamic_matmul(const QuantizedLinear& ql,
                                    const Tensor<float>& x) {
  if (x.cols() != ql.in_features)
    throw std::invalid_argument("dynamic_matmul: input dim mismatch");
  if (ql.per_row || !ql.outlier_cols.empty())
    throw std::invalid_argument(
        "dynamic_matmul: layer was not quantized tensor-wise");
  const std::size_t M = x.rows(), out = ql.out_features,
                    in = ql.in_features;
  // per-call activation range; anchor zero so it is exactly representable
  double lo = 0.0, hi = 0.0;
  for (const float v : x.data) {
    lo = std::min(lo, double(v));
    hi = std::max(hi, double(v));
  }
  if (hi - lo < 1e-8) hi = lo + 1e-8;
  const QuantParams& wq = ql.params[0];
  const QuantParams xq = affine_params(lo, hi, wq.qmin, wq.qmax);
  Tensor<uint8_t> qx = quantize_tensor(x, xq);
  const bool biased = ql.bias.count() == out;
  Tensor<float> y({M, out});
  for (std::size_t t = 0; t < M; ++t)
    for (std::size_t r = 0; r < out; ++r) {
      int64_t acc = 0;
      for (std::size_t k = 0; k < in; ++k)
        acc += int64_t(byte_to_code(qx.at(t, k), xq) - xq.zero_point) *
               int64_t(byte_to_code(ql.codes.at(r, k), wq) - wq.zero_point);
      double v = double(acc) * double(xq.scale) * double(wq.scale);
      if (biased) v += double(ql.bias[r]);
      y.at(t, r) = static_cast<float>(v);
    }
  return y;
}

/// Dispatch on the layer's scheme.
inline Tensor<float> quantized_matmul(const QuantizedLinear& ql,
                                      const Tensor<float>& x) {
  return ql.per_row ? mixed_matmul(ql, x) : dynamic_matmul(ql, x);
}

}  // namespace tinyloc::quant

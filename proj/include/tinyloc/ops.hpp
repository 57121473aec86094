#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tinyloc/autodiff.hpp"
#include "tinyloc/tensor.hpp"

namespace tinyloc::nn {

// Op library over the tape. Matrices are row-major, time-major (T rows).
// Linear weights follow the [out][in] convention so per-output-row weight
// handling (quantization, counting) stays uniform.

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.count(); ++i) y[i] += b.value()[i];
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [](Node<T>& n) {
    for (int s = 0; s < 2; ++s) {
      auto& in = *n.inputs[s];
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[i];
    }
  }));
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.count(); ++i) y[i] -= b.value()[i];
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [](Node<T>& n) {
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[i];
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] -= n.grad[i];
    }
  }));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.count(); ++i) y[i] *= b.value()[i];
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[i] * av[i];
    }
  }));
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v *= c;
  return Var<T>(detail::make_op<T>(std::move(y), {a}, [c](Node<T>& n) {
    auto& g = n.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.count(); ++i) g[i] += c * n.grad[i];
  }));
}

/// ca*a + cb*b with scalar coefficients.
template <typename T>
Var<T> add_scaled(const Var<T>& a, const Var<T>& b, T ca, T cb) {
  check_same_shape(a.value(), b.value(), "add_scaled");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.count(); ++i)
    y[i] = ca * y[i] + cb * b.value()[i];
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [ca, cb](Node<T>& n) {
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += ca * n.grad[i];
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += cb * n.grad[i];
    }
  }));
}

/// C = A(M×K) * B(K×N)
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.rows())
    throw std::invalid_argument("matmul: inner dims " + A.shape_str() + " vs " +
                                B.shape_str());
  const std::size_t M = A.rows(), K = A.cols(), N = B.cols();
  Tensor<T> y({M, N});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      const T aik = A.at(i, k);
      for (std::size_t j = 0; j < N; ++j) y.at(i, j) += aik * B.at(k, j);
    }
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [M, K, N](Node<T>& n) {
    const auto& A = n.inputs[0]->value;
    const auto& B = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      auto& dA = n.inputs[0]->ensure_grad();  // dA = g * B^T
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          const T g = n.grad.at(i, j);
          for (std::size_t k = 0; k < K; ++k) dA.at(i, k) += g * B.at(k, j);
        }
    }
    if (n.inputs[1]->requires_grad) {
      auto& dB = n.inputs[1]->ensure_grad();  // dB = A^T * g
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          const T aik = A.at(i, k);
          for (std::size_t j = 0; j < N; ++j)
            dB.at(k, j) += aik * n.grad.at(i, j);
        }
    }
  }));
}

/// C = A(M×K) * B(N×K)^T — saves an explicit transpose for attention scores
/// and for linear layers stored [out][in].
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.cols() != B.cols())
    throw std::invalid_argument("matmul_nt: inner dims " + A.shape_str() +
                                " vs " + B.shape_str());
  const std::size_t M = A.rows(), K = A.cols(), N = B.rows();
  Tensor<T> y({M, N});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < K; ++k) acc += A.at(i, k) * B.at(j, k);
      y.at(i, j) = acc;
    }
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [M, K, N](Node<T>& n) {
    const auto& A = n.inputs[0]->value;
    const auto& B = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      auto& dA = n.inputs[0]->ensure_grad();  // dA = g * B
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          const T g = n.grad.at(i, j);
          for (std::size_t k = 0; k < K; ++k) dA.at(i, k) += g * B.at(j, k);
        }
    }
    if (n.inputs[1]->requires_grad) {
      auto& dB = n.inputs[1]->ensure_grad();  // dB = g^T * A
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) {
          const T g = n.grad.at(i, j);
          for (std::size_t k = 0; k < K; ++k) dB.at(j, k) += g * A.at(i, k);
        }
    }
  }));
}

/// y = x(T×in) * W(out×in)^T + b(out). Bias optional (pass undefined Var).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b = Var<T>()) {
  const auto& X = x.value();
  const auto& W = w.value();
  if (X.cols() != W.cols())
    throw std::invalid_argument("linear: feature dims " + X.shape_str() +
                                " vs weight " + W.shape_str());
  const std::size_t M = X.rows(), K = X.cols(), N = W.rows();
  const bool biased = b.defined();
  if (biased && b.value().count() != N)
    throw std::invalid_argument("linear: bias size mismatch");
  Tensor<T> y({M, N});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      T acc = biased ? b.value()[j] : T(0);
      for (std::size_t k = 0; k < K; ++k) acc += X.at(i, k) * W.at(j, k);
      y.at(i, j) = acc;
    }
  std::vector<Var<T>> ins = {x, w};
  if (biased) ins.push_back(b);
  return Var<T>(
      detail::make_op<T>(std::move(y), ins, [M, K, N, biased](Node<T>& n) {
        const auto& X = n.inputs[0]->value;
        const auto& W = n.inputs[1]->value;
        if (n.inputs[0]->requires_grad) {
          auto& dX = n.inputs[0]->ensure_grad();  // dX = g * W
          for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
              const T g = n.grad.at(i, j);
              for (std::size_t k = 0; k < K; ++k) dX.at(i, k) += g * W.at(j, k);
            }
        }
        if (n.inputs[1]->requires_grad) {
          auto& dW = n.inputs[1]->ensure_grad();  // dW = g^T * X
          for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
              const T g = n.grad.at(i, j);
              for (std::size_t k = 0; k < K; ++k) dW.at(j, k) += g * X.at(i, k);
            }
        }
        if (biased && n.inputs[2]->requires_grad) {
          auto& dB = n.inputs[2]->ensure_grad();
          for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) dB[j] += n.grad.at(i, j);
        }
      }));
}

/// Add a length-C row vector to every row of x (T×C).
template <typename T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& b) {
  const std::size_t M = x.value().rows(), C = x.value().cols();
  if (b.value().count() != C)
    throw std::invalid_argument("add_bias_rows: size mismatch");
  Tensor<T> y = x.value();
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < C; ++j) y.at(i, j) += b.value()[j];
  return Var<T>(detail::make_op<T>(std::move(y), {x, b}, [M, C](Node<T>& n) {
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[i];
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < C; ++j) g[j] += n.grad.at(i, j);
    }
  }));
}

namespace detail {
template <typename T>
Var<T> unary(const Var<T>& a, Tensor<T> y,
             std::function<T(T x, T y, T g)> dx) {
  return Var<T>(make_op<T>(
      std::move(y), {a}, [dx = std::move(dx)](Node<T>& n) {
        const auto& xv = n.inputs[0]->value;
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.count(); ++i)
          g[i] += dx(xv[i], n.value[i], n.grad[i]);
      }));
}
}  // namespace detail

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
  return detail::unary<T>(a, std::move(y),
                          [](T, T s, T g) { return g * s * (T(1) - s); });
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v = std::tanh(v);
  return detail::unary<T>(a, std::move(y),
                          [](T, T t, T g) { return g * (T(1) - t * t); });
}

template <typename T>
Var<T> exp_op(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v = std::exp(v);
  return detail::unary<T>(a, std::move(y), [](T, T e, T g) { return g * e; });
}

/// log(1 + e^x), computed stably.
template <typename T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data)
    v = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  return detail::unary<T>(a, std::move(y), [](T x, T, T g) {
    return g / (T(1) + std::exp(-x));  // sigmoid(x)
  });
}

/// x * sigmoid(x)
template <typename T>
Var<T> silu(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v = v / (T(1) + std::exp(-v));
  return detail::unary<T>(a, std::move(y), [](T x, T, T g) {
    const T s = T(1) / (T(1) + std::exp(-x));
    return g * (s + x * s * (T(1) - s));
  });
}

/// Row-wise softmax. With causal=true input must be square and column j > i
/// is masked out of row i (attention to the future).
template <typename T>
Var<T> softmax_rows(const Var<T>& a, bool causal = false) {
  const auto& X = a.value();
  const std::size_t M = X.rows(), N = X.cols();
  if (causal && M != N)
    throw std::invalid_argument("softmax_rows: causal mask needs square input");
  Tensor<T> y({M, N});
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t lim = causal ? i + 1 : N;
    T m = X.at(i, 0);
    for (std::size_t j = 1; j < lim; ++j) m = std::max(m, X.at(i, j));
    T z = 0;
    for (std::size_t j = 0; j < lim; ++j) {
      y.at(i, j) = std::exp(X.at(i, j) - m);
      z += y.at(i, j);
    }
    for (std::size_t j = 0; j < lim; ++j) y.at(i, j) /= z;
    // masked tail stays exactly zero
  }
  return Var<T>(
      detail::make_op<T>(std::move(y), {a}, [M, N, causal](Node<T>& n) {
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < M; ++i) {
          const std::size_t lim = causal ? i + 1 : N;
          T dot = 0;
          for (std::size_t j = 0; j < lim; ++j)
            dot += n.grad.at(i, j) * n.value.at(i, j);
          for (std::size_t j = 0; j < lim; ++j)
            g.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
      }));
}

/// Per-row layer normalization with affine gamma/beta (length = cols).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  T eps = T(1e-5)) {
  const auto& X = x.value();
  const std::size_t M = X.rows(), C = X.cols();
  if (gamma.value().count() != C || beta.value().count() != C)
    throw std::invalid_argument("layer_norm: affine size mismatch");
  Tensor<T> y({M, C});
  Tensor<T> xhat({M, C});
  Tensor<T> istd({M});
  for (std::size_t i = 0; i < M; ++i) {
    T mean = 0;
    for (std::size_t j = 0; j < C; ++j) mean += X.at(i, j);
    mean /= T(C);
    T var = 0;
    for (std::size_t j = 0; j < C; ++j) {
      const T d = X.at(i, j) - mean;
      var += d * d;
    }
    var /= T(C);
    const T is = T(1) / std::sqrt(var + eps);
    istd[i] = is;
    for (std::size_t j = 0; j < C; ++j) {
      xhat.at(i, j) = (X.at(i, j) - mean) * is;
      y.at(i, j) = gamma.value()[j] * xhat.at(i, j) + beta.value()[j];
    }
  }
  return Var<T>(detail::make_op<T>(
      std::move(y), {x, gamma, beta},
      [M, C, xhat = std::move(xhat), istd = std::move(istd)](Node<T>& n) {
        const auto& gam = n.inputs[1]->value;
        if (n.inputs[1]->requires_grad) {
          auto& dg = n.inputs[1]->ensure_grad();
          for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < C; ++j)
              dg[j] += n.grad.at(i, j) * xhat.at(i, j);
        }
        if (n.inputs[2]->requires_grad) {
          auto& db = n.inputs[2]->ensure_grad();
          for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < C; ++j) db[j] += n.grad.at(i, j);
        }
        if (n.inputs[0]->requires_grad) {
          auto& dx = n.inputs[0]->ensure_grad();
          for (std::size_t i = 0; i < M; ++i) {
            T mean_gy = 0, mean_gyx = 0;
            for (std::size_t j = 0; j < C; ++j) {
              const T gy = n.grad.at(i, j) * gam[j];
              mean_gy += gy;
              mean_gyx += gy * xhat.at(i, j);
            }
            mean_gy /= T(C);
            mean_gyx /= T(C);
            for (std::size_t j = 0; j < C; ++j) {
              const T gy = n.grad.at(i, j) * gam[j];
              dx.at(i, j) +=
                  istd[i] * (gy - mean_gy - xhat.at(i, j) * mean_gyx);
            }
          }
        }
      }));
}

/// Causal 1-D convolution over time. x: T×Cin; w: Cout×(Cin·k) laid out
/// w.at(o, i*k + j) with j indexing kernel taps oldest→current; b: Cout.
/// Output y[t][o] = b[o] + Σ_{i,j} w[o][i][j] · x[t-(k-1)+j][i], zero-padded
/// on the left.
template <typename T>
Var<T> causal_conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b,
                     std::size_t k) {
  const auto& X = x.value();
  const std::size_t Tn = X.rows(), Cin = X.cols();
  if (k == 0 || w.value().cols() != Cin * k)
    throw std::invalid_argument("causal_conv1d: weight layout mismatch");
  const std::size_t Cout = w.value().rows();
  const bool biased = b.defined();
  if (biased && b.value().count() != Cout)
    throw std::invalid_argument("causal_conv1d: bias size mismatch");
  Tensor<T> y({Tn, Cout});
  for (std::size_t t = 0; t < Tn; ++t)
    for (std::size_t o = 0; o < Cout; ++o) {
      T acc = biased ? b.value()[o] : T(0);
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t s =
            static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
        if (s < 0) continue;
        for (std::size_t i = 0; i < Cin; ++i)
          acc += w.value().at(o, i * k + j) * X.at(static_cast<std::size_t>(s), i);
      }
      y.at(t, o) = acc;
    }
  std::vector<Var<T>> ins = {x, w};
  if (biased) ins.push_back(b);
  return Var<T>(detail::make_op<T>(
      std::move(y), ins, [Tn, Cin, Cout, k, biased](Node<T>& n) {
        const auto& X = n.inputs[0]->value;
        const auto& W = n.inputs[1]->value;
        for (std::size_t t = 0; t < Tn; ++t)
          for (std::size_t o = 0; o < Cout; ++o) {
            const T g = n.grad.at(t, o);
            if (g == T(0)) continue;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) -
                                       static_cast<std::ptrdiff_t>(k - 1);
              if (s < 0) continue;
              const auto su = static_cast<std::size_t>(s);
              if (n.inputs[0]->requires_grad) {
                auto& dx = n.inputs[0]->ensure_grad();
                for (std::size_t i = 0; i < Cin; ++i)
                  dx.at(su, i) += g * W.at(o, i * k + j);
              }
              if (n.inputs[1]->requires_grad) {
                auto& dw = n.inputs[1]->ensure_grad();
                for (std::size_t i = 0; i < Cin; ++i)
                  dw.at(o, i * k + j) += g * X.at(su, i);
              }
            }
            if (biased && n.inputs[2]->requires_grad)
              n.inputs[2]->ensure_grad()[o] += g;
          }
      }));
}

/// Depthwise causal 1-D convolution: x T×C, w C×k (taps oldest→current), b C.
template <typename T>
Var<T> causal_conv1d_depthwise(const Var<T>& x, const Var<T>& w,
                               const Var<T>& b = Var<T>()) {
  const auto& X = x.value();
  const std::size_t Tn = X.rows(), C = X.cols(), k = w.value().cols();
  if (w.value().rows() != C)
    throw std::invalid_argument("depthwise conv: channel mismatch");
  const bool biased = b.defined();
  if (biased && b.value().count() != C)
    throw std::invalid_argument("depthwise conv: bias size mismatch");
  Tensor<T> y({Tn, C});
  for (std::size_t t = 0; t < Tn; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      T acc = biased ? b.value()[c] : T(0);
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t s =
            static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
        if (s >= 0) acc += w.value().at(c, j) * X.at(static_cast<std::size_t>(s), c);
      }
      y.at(t, c) = acc;
    }
  std::vector<Var<T>> ins = {x, w};
  if (biased) ins.push_back(b);
  return Var<T>(
      detail::make_op<T>(std::move(y), ins, [Tn, C, k, biased](Node<T>& n) {
        const auto& X = n.inputs[0]->value;
        const auto& W = n.inputs[1]->value;
        for (std::size_t t = 0; t < Tn; ++t)
          for (std::size_t c = 0; c < C; ++c) {
            const T g = n.grad.at(t, c);
            if (g == T(0)) continue;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) -
                                       static_cast<std::ptrdiff_t>(k - 1);
              if (s < 0) continue;
              const auto su = static_cast<std::size_t>(s);
              if (n.inputs[0]->requires_grad)
                n.inputs[0]->ensure_grad().at(su, c) += g * W.at(c, j);
              if (n.inputs[1]->requires_grad)
                n.inputs[1]->ensure_grad().at(c, j) += g * X.at(su, c);
            }
            if (biased && n.inputs[2]->requires_grad)
              n.inputs[2]->ensure_grad()[c] += g;
          }
      }));
}

/// View columns [c0, c1) of x as a new tensor.
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t c0, std::size_t c1) {
  const auto& X = x.value();
  const std::size_t M = X.rows(), C = X.cols();
  if (c0 >= c1 || c1 > C)
    throw std::invalid_argument("slice_cols: bad range");
  Tensor<T> y({M, c1 - c0});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = c0; j < c1; ++j) y.at(i, j - c0) = X.at(i, j);
  return Var<T>(detail::make_op<T>(std::move(y), {x}, [M, c0, c1](Node<T>& n) {
    auto& g = n.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = c0; j < c1; ++j)
        g.at(i, j) += n.grad.at(i, j - c0);
  }));
}

/// Horizontal concatenation [a | b] of two matrices with equal row counts.
template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rows() != B.rows())
    throw std::invalid_argument("concat_cols: row mismatch");
  const std::size_t M = A.rows(), Ca = A.cols(), Cb = B.cols();
  Tensor<T> y({M, Ca + Cb});
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < Ca; ++j) y.at(i, j) = A.at(i, j);
    for (std::size_t j = 0; j < Cb; ++j) y.at(i, Ca + j) = B.at(i, j);
  }
  return Var<T>(detail::make_op<T>(std::move(y), {a, b}, [M, Ca, Cb](Node<T>& n) {
    if (n.inputs[0]->requires_grad) {
      auto& g = n.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < Ca; ++j) g.at(i, j) += n.grad.at(i, j);
    }
    if (n.inputs[1]->requires_grad) {
      auto& g = n.inputs[1]->ensure_grad();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < Cb; ++j) g.at(i, j) += n.grad.at(i, Ca + j);
    }
  }));
}

/// Elementwise mean of same-shaped tensors.
template <typename T>
Var<T> average(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("average: empty input");
  Tensor<T> y = xs[0].value();
  for (std::size_t s = 1; s < xs.size(); ++s) {
    check_same_shape(y, xs[s].value(), "average");
    for (std::size_t i = 0; i < y.count(); ++i) y[i] += xs[s].value()[i];
  }
  const T inv = T(1) / T(xs.size());
  for (auto& v : y.data) v *= inv;
  return Var<T>(detail::make_op<T>(std::move(y), xs, [inv](Node<T>& n) {
    for (auto& in : n.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.count(); ++i) g[i] += inv * n.grad[i];
    }
  }));
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T s = 0;
  for (const auto& v : x.value().data) s += v;
  Tensor<T> y({1});
  y[0] = s;
  return Var<T>(detail::make_op<T>(std::move(y), {x}, [](Node<T>& n) {
    auto& g = n.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[0];
  }));
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  const std::size_t N = x.value().count();
  T s = 0;
  for (const auto& v : x.value().data) s += v;
  Tensor<T> y({1});
  y[0] = s / T(N);
  return Var<T>(detail::make_op<T>(std::move(y), {x}, [N](Node<T>& n) {
    auto& g = n.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < g.count(); ++i) g[i] += n.grad[0] / T(N);
  }));
}

/// Mean over rows of the cross-entropy between softmax(logits) row t and the
/// fixed target distribution row t: L = -(1/T) Σ_t Σ_k p[t,k]·log q[t,k].
/// Targets are data, not differentiated through.
template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, const Tensor<T>& targets) {
  const auto& L = logits.value();
  check_same_shape(L, targets, "cross_entropy_rows");
  const std::size_t M = L.rows(), K = L.cols();
  Tensor<T> q({M, K});  // softmax, kept for backward
  T loss = 0;
  for (std::size_t i = 0; i < M; ++i) {
    T m = L.at(i, 0);
    for (std::size_t j = 1; j < K; ++j) m = std::max(m, L.at(i, j));
    T z = 0;
    for (std::size_t j = 0; j < K; ++j) z += std::exp(L.at(i, j) - m);
    const T lse = m + std::log(z);
    for (std::size_t j = 0; j < K; ++j) {
      q.at(i, j) = std::exp(L.at(i, j) - lse);
      loss += targets.at(i, j) * (lse - L.at(i, j));
    }
  }
  Tensor<T> y({1});
  y[0] = loss / T(M);
  return Var<T>(detail::make_op<T>(
      std::move(y), {logits},
      [M, K, q = std::move(q), targets](Node<T>& n) {
        auto& g = n.inputs[0]->ensure_grad();
        const T go = n.grad[0] / T(M);
        for (std::size_t i = 0; i < M; ++i) {
          T psum = 0;
          for (std::size_t j = 0; j < K; ++j) psum += targets.at(i, j);
          for (std::size_t j = 0; j < K; ++j)
            g.at(i, j) += go * (q.at(i, j) * psum - targets.at(i, j));
        }
      }));
}

/// softmax(q·kᵀ/√d)·v with optional causal mask. q,k: T×d; v: T×dv.
template <typename T>
Var<T> scaled_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                            bool causal) {
  const T inv_sqrt_d = T(1) / std::sqrt(T(q.value().cols()));
  auto scores = scale(matmul_nt(q, k), inv_sqrt_d);
  auto attn = softmax_rows(scores, causal);
  return matmul(attn, v);
}

}  // namespace tinyloc::nn

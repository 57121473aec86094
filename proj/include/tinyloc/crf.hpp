#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tinyloc/autodiff.hpp"
#include "tinyloc/tensor.hpp"

namespace tinyloc::crf {

// Linear-chain CRF with learned start/end boundary scores. Emissions are
// T×K; a path y scores start[y0] + Σ_t emis[t][y_t] + Σ_t trans[y_{t-1}][y_t]
// + end[y_{T-1}]. All recursions run in log space with max-shifted
// log-sum-exp.

namespace detail {
template <typename T>
T logsumexp(const std::vector<T>& v) {
  T m = v[0];
  for (const T x : v) m = std::max(m, x);
  T s = 0;
  for (const T x : v) s += std::exp(x - m);
  return m + std::log(s);
}

template <typename T>
void check_shapes(const Tensor<T>& emis, const Tensor<T>& trans,
                  const Tensor<T>& start, const Tensor<T>& end) {
  const std::size_t K = emis.cols();
  if (emis.rows() == 0) throw std::invalid_argument("crf: empty sequence");
  if (trans.rows() != K || trans.cols() != K)
    throw std::invalid_argument("crf: transition shape mismatch");
  if (start.count() != K || end.count() != K)
    throw std::invalid_argument("crf: boundary shape mismatch");
}
}  // namespace detail

/// Log of the sum over all K^T paths of exp(path score).
template <typename T>
T forward_logz(const Tensor<T>& emis, const Tensor<T>& trans,
               const Tensor<T>& start, const Tensor<T>& end) {
  detail::check_shapes(emis, trans, start, end);
  const std::size_t Tn = emis.rows(), K = emis.cols();
  std::vector<T> alpha(K), next(K), cand(K);
  for (std::size_t k = 0; k < K; ++k) alpha[k] = start[k] + emis.at(0, k);
  for (std::size_t t = 1; t < Tn; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < K; ++i) cand[i] = alpha[i] + trans.at(i, k);
      next[k] = emis.at(t, k) + detail::logsumexp(cand);
    }
    alpha.swap(next);
  }
  for (std::size_t k = 0; k < K; ++k) alpha[k] += end[k];
  return detail::logsumexp(alpha);
}

/// Score of one specific label path.
template <typename T>
T path_score(const Tensor<T>& emis, const std::vector<int>& labels,
             const Tensor<T>& trans, const Tensor<T>& start,
             const Tensor<T>& end) {
  detail::check_shapes(emis, trans, start, end);
  const std::size_t Tn = emis.rows(), K = emis.cols();
  if (labels.size() != Tn)
    throw std::invalid_argument("crf: label length mismatch");
  for (const int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw std::out_of_range("crf: label out of range");
  T s = start[labels[0]] + emis.at(0, labels[0]);
  for (std::size_t t = 1; t < Tn; ++t)
    s += trans.at(labels[t - 1], labels[t]) + emis.at(t, labels[t]);
  return s + end[labels.back()];
}

/// Highest-scoring path; ties break toward the lower class index.
template <typename T>
std::vector<int> viterbi_decode(const Tensor<T>& emis, const Tensor<T>& trans,
                                const Tensor<T>& start, const Tensor<T>& end) {
  detail::check_shapes(emis, trans, start, end);
  const std::size_t Tn = emis.rows(), K = emis.cols();
  std::vector<T> best(K), next(K);
  std::vector<std::vector<int>> back(Tn, std::vector<int>(K, 0));
  for (std::size_t k = 0; k < K; ++k) best[k] = start[k] + emis.at(0, k);
  for (std::size_t t = 1; t < Tn; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      int arg = 0;
      T top = best[0] + trans.at(0, k);
      for (std::size_t i = 1; i < K; ++i) {
        const T c = best[i] + trans.at(i, k);
        if (c > top) {  // strict: earlier (lower) index wins ties
          top = c;
          arg = static_cast<int>(i);
        }
      }
      next[k] = top + emis.at(t, k);
      back[t][k] = arg;
    }
    best.swap(next);
  }
  int arg = 0;
  T top = best[0] + end[0];
  for (std::size_t k = 1; k < K; ++k) {
    const T c = best[k] + end[k];
    if (c > top) {
      top = c;
      arg = static_cast<int>(k);
    }
  }
  std::vector<int> path(Tn);
  path[Tn - 1] = arg;
  for (std::size_t t = Tn - 1; t > 0; --t) path[t - 1] = back[t][path[t]];
  return path;
}

/// Per-timestep posteriors P(y_t = k | x) via forward-backward. Rows sum to 1.
/// If alpha_out/beta_out are given they receive the log-space tables
/// (alpha includes emissions; beta[T-1] = end scores).
template <typename T>
Tensor<T> marginals(const Tensor<T>& emis, const Tensor<T>& trans,
                    const Tensor<T>& start, const Tensor<T>& end,
                    Tensor<T>* alpha_out = nullptr,
                    Tensor<T>* beta_out = nullptr, T* logz_out = nullptr) {
  detail::check_shapes(emis, trans, start, end);
  const std::size_t Tn = emis.rows(), K = emis.cols();
  Tensor<T> alpha({Tn, K}), beta({Tn, K});
  std::vector<T> cand(K);
  for (std::size_t k = 0; k < K; ++k) alpha.at(0, k) = start[k] + emis.at(0, k);
  for (std::size_t t = 1; t < Tn; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < K; ++i)
        cand[i] = alpha.at(t - 1, i) + trans.at(i, k);
      alpha.at(t, k) = emis.at(t, k) + detail::logsumexp(cand);
    }
  for (std::size_t k = 0; k < K; ++k) beta.at(Tn - 1, k) = end[k];
  for (std::size_t t = Tn - 1; t > 0; --t)
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j)
        cand[j] = trans.at(i, j) + emis.at(t, j) + beta.at(t, j);
      beta.at(t - 1, i) = detail::logsumexp(cand);
    }
  for (std::size_t k = 0; k < K; ++k) cand[k] = alpha.at(Tn - 1, k) + end[k];
  const T logz = detail::logsumexp(cand);
  Tensor<T> post({Tn, K});
  for (std::size_t t = 0; t < Tn; ++t) {
    T row = 0;
    for (std::size_t k = 0; k < K; ++k) {
      post.at(t, k) = std::exp(alpha.at(t, k) + beta.at(t, k) - logz);
      row += post.at(t, k);
    }
    for (std::size_t k = 0; k < K; ++k) post.at(t, k) /= row;  // kill drift
  }
  if (alpha_out) *alpha_out = std::move(alpha);
  if (beta_out) *beta_out = std::move(beta);
  if (logz_out) *logz_out = logz;
  return post;
}

/// Numeric negative log-likelihood: logZ − score(labels). Always ≥ 0.
template <typename T>
T nll(const Tensor<T>& emis, const std::vector<int>& labels,
      const Tensor<T>& trans, const Tensor<T>& start, const Tensor<T>& end) {
  return forward_logz(emis, trans, start, end) -
         path_score(emis, labels, trans, start, end);
}

/// Tape op for the NLL. Backward pushes (posterior − gold indicator) into
/// emissions, pairwise posteriors minus gold bigram counts into transitions,
/// and boundary posteriors minus indicators into start/end.
template <typename T>
nn::Var<T> crf_nll(const nn::Var<T>& emissions, const std::vector<int>& labels,
                   const nn::Var<T>& trans, const nn::Var<T>& start,
                   const nn::Var<T>& end) {
  const T loss = nll(emissions.value(), labels, trans.value(), start.value(),
                     end.value());
  Tensor<T> y({1});
  y[0] = loss;
  return nn::Var<T>(nn::detail::make_op<T>(
      std::move(y), {emissions, trans, start, end}, [labels](nn::Node<T>& n) {
        const auto& emis = n.inputs[0]->value;
        const auto& tr = n.inputs[1]->value;
        const auto& st = n.inputs[2]->value;
        const auto& en = n.inputs[3]->value;
        const std::size_t Tn = emis.rows(), K = emis.cols();
        Tensor<T> alpha, beta;
        T logz = 0;
        Tensor<T> post = marginals(emis, tr, st, en, &alpha, &beta, &logz);
        const T g = n.grad[0];
        if (n.inputs[0]->requires_grad) {
          auto& de = n.inputs[0]->ensure_grad();
          for (std::size_t t = 0; t < Tn; ++t)
            for (std::size_t k = 0; k < K; ++k)
              de.at(t, k) +=
                  g * (post.at(t, k) -
                       (static_cast<std::size_t>(labels[t]) == k ? T(1) : T(0)));
        }
        if (n.inputs[1]->requires_grad) {
          auto& dt = n.inputs[1]->ensure_grad();
          for (std::size_t t = 0; t + 1 < Tn; ++t) {
            for (std::size_t i = 0; i < K; ++i)
              for (std::size_t j = 0; j < K; ++j)
                dt.at(i, j) += g * std::exp(alpha.at(t, i) + tr.at(i, j) +
                                            emis.at(t + 1, j) +
                                            beta.at(t + 1, j) - logz);
            dt.at(labels[t], labels[t + 1]) -= g;
          }
        }
        if (n.inputs[2]->requires_grad) {
          auto& ds = n.inputs[2]->ensure_grad();
          for (std::size_t k = 0; k < K; ++k) ds[k] += g * post.at(0, k);
          ds[labels[0]] -= g;
        }
        if (n.inputs[3]->requires_grad) {
          auto& de2 = n.inputs[3]->ensure_grad();
          for (std::size_t k = 0; k < K; ++k)
            de2[k] += g * post.at(Tn - 1, k);
          de2[labels.back()] -= g;
        }
      }));
}

}  // namespace tinyloc::crf

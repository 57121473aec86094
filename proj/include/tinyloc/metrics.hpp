#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tinyloc/data.hpp"
#include "tinyloc/model.hpp"

namespace tinyloc::metrics {

/// Unweighted mean of per-class F1 over all K classes. A class absent from
/// both predictions and labels contributes F1 = 0 and stays in the mean —
/// the strictest convention, chosen for cross-run comparability.
inline double macro_f1(const std::vector<int>& preds,
                       const std::vector<int>& labels, std::size_t k) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("macro_f1: empty or mismatched inputs");
  if (k < 1) throw std::invalid_argument("macro_f1: need at least one class");
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], y = labels[i];
    if (p < 0 || y < 0 || std::size_t(p) >= k || std::size_t(y) >= k)
      throw std::invalid_argument("macro_f1: class id out of range at " +
                                  std::to_string(i));
    if (p == y)
      ++tp[p];
    else {
      ++fp[p];
      ++fn[y];
    }
  }
  double sum = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double denom = double(2 * tp[c] + fp[c] + fn[c]);
    sum += denom > 0 ? 2.0 * double(tp[c]) / denom : 0.0;
  }
  return sum / double(k);
}

/// Fraction of timesteps where prediction equals label.
inline double accuracy(const std::vector<int>& preds,
                       const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return double(hit) / double(preds.size());
}

struct EvalMetrics {
  double macro_f1 = 0;
  double accuracy = 0;
  std::size_t timesteps = 0;
};

/// Per-timestep evaluation of a model over a list of sequences.
inline EvalMetrics evaluate_model(
    model::EmissionModel<float>& m,
    const std::vector<data::LabeledSequence>& seqs,
    const model::ForwardHooks* hooks = nullptr) {
  if (seqs.empty())
    throw std::invalid_argument("evaluate_model: no sequences");
  std::vector<int> preds, labels;
  for (const auto& seq : seqs) {
    const auto path = m.predict(seq.features, hooks);
    preds.insert(preds.end(), path.begin(), path.end());
    labels.insert(labels.end(), seq.labels.begin(), seq.labels.end());
  }
  EvalMetrics out;
  out.macro_f1 = macro_f1(preds, labels, m.cfg.class_count);
  out.accuracy = accuracy(preds, labels);
  out.timesteps = preds.size();
  return out;
}

}  // namespace tinyloc::metrics

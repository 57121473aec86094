#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tinyloc/crf.hpp"
#include "tinyloc/data.hpp"
#include "tinyloc/metrics.hpp"
#include "tinyloc/model.hpp"
#include "tinyloc/optim.hpp"
#include "tinyloc/rng.hpp"

namespace tinyloc::train {

using data::DatasetSplit;
using data::LabeledSequence;
using model::EmissionModel;
using nn::Var;

/// Combined training objective:
///
///   loss = alpha * chain_nll(emissions, gold)
///        + (1 - alpha) * mean-per-timestep cross-entropy vs. teacher rows
///
/// At alpha == 1 this returns the plain chain NLL node itself, so a run
/// with alpha = 1 is bit-identical to training without a teacher. At
/// alpha == 0 it is pure imitation of the teacher distribution. `targets`
/// (one row per timestep, rows summing to 1) may be null only when
/// alpha == 1.
template <typename T>
Var<T> kd_loss(const Var<T>& emissions, const std::vector<int>& gold,
               const Tensor<T>* targets, double alpha, const Var<T>& trans,
               const Var<T>& start, const Var<T>& end) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("kd_loss: alpha must lie in [0, 1], got " +
                                std::to_string(alpha));
  if (alpha == 1.0) return crf::crf_nll(emissions, gold, trans, start, end);
  if (targets == nullptr)
    throw std::invalid_argument(
        "kd_loss: teacher targets are required when alpha < 1");
  if (targets->shape != emissions.value().shape)
    throw std::invalid_argument(
        "kd_loss: target rows do not match emission shape");
  const Var<T> imitation = nn::cross_entropy_rows(emissions, *targets);
  if (alpha == 0.0) return imitation;
  const Var<T> gold_nll = crf::crf_nll(emissions, gold, trans, start, end);
  return nn::add(nn::scale(gold_nll, T(alpha)),
                 nn::scale(imitation, T(1.0 - alpha)));
}

/// Per-sequence target rows produced by a trained teacher. Hard mode
/// (default) one-hot encodes the teacher's decoded path; soft mode uses the
/// teacher's per-timestep posterior marginals. The teacher is only read.
inline std::vector<Tensor<float>> teacher_targets(
    EmissionModel<float>& teacher, const std::vector<LabeledSequence>& seqs,
    bool soft = false) {
  if (seqs.empty())
    throw std::invalid_argument("teacher_targets: no sequences");
  std::vector<Tensor<float>> out;
  out.reserve(seqs.size());
  for (const auto& seq : seqs) {
    if (soft) {
      const Var<float> emis = teacher.forward(seq.features);
      out.push_back(crf::marginals(emis.value(),
                                   teacher.crf_transitions.value(),
                                   teacher.crf_start.value(),
                                   teacher.crf_end.value()));
    } else {
      const auto path = teacher.predict(seq.features);
      Tensor<float> rows =
          Tensor<float>::zeros({path.size(), teacher.cfg.class_count});
      for (std::size_t t = 0; t < path.size(); ++t)
        rows.at(t, std::size_t(path[t])) = 1.0f;
      out.push_back(std::move(rows));
    }
  }
  return out;
}

/// Picks the candidate with the highest validation macro-F1; exact ties go
/// to the model with more parameters (the stronger teacher). Returns the
/// index into `candidates`.
inline std::size_t select_teacher(
    const std::vector<EmissionModel<float>*>& candidates,
    const std::vector<LabeledSequence>& val_seqs) {
  if (candidates.empty())
    throw std::invalid_argument("select_teacher: no candidate models");
  std::size_t best = 0;
  double best_f1 = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double f1 = metrics::evaluate_model(*candidates[i], val_seqs).macro_f1;
    const bool wins =
        f1 > best_f1 ||
        (f1 == best_f1 &&
         candidates[i]->param_count() > candidates[best]->param_count());
    if (wins) {
      best = i;
      best_f1 = f1;
    }
  }
  return best;
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;  // sequences per optimizer step
  double lr = 1e-3;
  uint64_t seed = 1;
  double alpha = 1.0;          // weight on the gold-label chain loss
  bool soft_targets = false;   // teacher rows: decoded one-hots vs. marginals
  double stop_at_val_f1 = 1.0; // stop early once best val macro-F1 reaches this
  std::ostream* log = nullptr; // optional per-epoch progress sink
};

struct EpochStats {
  double train_loss = 0;  // mean per-sequence loss over the epoch
  double val_f1 = 0;
};

struct TrainResult {
  std::map<std::string, Tensor<float>> best_state;
  double best_val_f1 = -1.0;
  std::size_t best_epoch = 0;  // index into history
  std::vector<EpochStats> history;
};

/// Mini-batch Adam over whole sequences with per-epoch validation. The
/// model is left holding the weights of its best validation epoch, which
/// are also returned in `best_state`. Sequence order is reshuffled each
/// epoch from a fork of `cfg.seed`, so identical inputs give identical
/// runs. A non-finite loss aborts with a diagnostic rather than training
/// on. When `targets` is set it must hold one row-matrix per training
/// sequence (see teacher_targets); it is required for alpha < 1.
inline TrainResult train_model(EmissionModel<float>& m,
                               const std::vector<LabeledSequence>& train_seqs,
                               const std::vector<LabeledSequence>& val_seqs,
                               const TrainConfig& cfg,
                               const std::vector<Tensor<float>>* targets =
                                   nullptr) {
  if (train_seqs.empty() || val_seqs.empty())
    throw std::invalid_argument("train_model: empty training or val split");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train_model: epochs and batch_size must be >= 1");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("train_model: alpha must lie in [0, 1]");
  if (cfg.alpha < 1.0 && targets == nullptr)
    throw std::invalid_argument(
        "train_model: alpha < 1 needs teacher targets");
  if (targets != nullptr && targets->size() != train_seqs.size())
    throw std::invalid_argument(
        "train_model: one target matrix per training sequence required");

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::Adam<float> opt(m.parameters(), adam_cfg);
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(train_seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto er = rng.fork("epoch-" + std::to_string(epoch));
    er.shuffle(order);

    double epoch_loss = 0;
    for (std::size_t bstart = 0; bstart < order.size();
         bstart += cfg.batch_size) {
      const std::size_t bend =
          std::min(bstart + cfg.batch_size, order.size());
      const float inv_batch = 1.0f / float(bend - bstart);
      opt.zero_grad();
      for (std::size_t pos = bstart; pos < bend; ++pos) {
        const std::size_t idx = order[pos];
        const auto& seq = train_seqs[idx];
        const Var<float> emis = m.forward(seq.features);
        const Var<float> loss =
            kd_loss(emis, seq.labels,
                    targets != nullptr ? &(*targets)[idx] : nullptr, cfg.alpha,
                    m.crf_transitions, m.crf_start, m.crf_end);
        const float lv = loss.value()[0];
        if (!std::isfinite(lv))
          throw std::runtime_error(
              "train_model: non-finite loss at epoch " +
              std::to_string(epoch) + ", sequence " + std::to_string(idx) +
              " — lower the learning rate or check the input scaling");
        epoch_loss += double(lv);
        nn::scale(loss, inv_batch).backward();
      }
      opt.step();
    }

    const double val_f1 = metrics::evaluate_model(m, val_seqs).macro_f1;
    result.history.push_back(
        {epoch_loss / double(train_seqs.size()), val_f1});
    if (val_f1 > result.best_val_f1) {
      result.best_val_f1 = val_f1;
      result.best_epoch = epoch;
      result.best_state = m.state_dict();
    }
    if (cfg.log != nullptr)
      *cfg.log << "epoch " << epoch << ": train loss "
               << result.history.back().train_loss << ", val macro-F1 "
               << val_f1 << "\n";
    if (result.best_val_f1 >= cfg.stop_at_val_f1) break;
  }

  m.load_state(result.best_state);
  return result;
}

inline TrainResult train_model(EmissionModel<float>& m,
                               const DatasetSplit& ds, const TrainConfig& cfg,
                               const std::vector<Tensor<float>>* targets =
                                   nullptr) {
  return train_model(m, ds.train, ds.val, cfg, targets);
}

/// Trains `student` to imitate `teacher` on the training split, blending the
/// gold-label chain loss with the imitation loss by cfg.alpha. Teacher
/// target rows are computed once up front; the teacher itself is never
/// modified. Emits a warning to `warn` when the student is not actually
/// smaller than the teacher.
inline TrainResult distill_train(EmissionModel<float>& teacher,
                                 EmissionModel<float>& student,
                                 const DatasetSplit& ds, TrainConfig cfg,
                                 std::ostream* warn = &std::cerr) {
  if (student.cfg.class_count != teacher.cfg.class_count)
    throw std::invalid_argument(
        "distill_train: teacher predicts " +
        std::to_string(teacher.cfg.class_count) + " classes but student has " +
        std::to_string(student.cfg.class_count));
  if (student.cfg.input_dim != teacher.cfg.input_dim)
    throw std::invalid_argument(
        "distill_train: teacher and student expect different feature counts");
  if (warn != nullptr && student.param_count() >= teacher.param_count())
    *warn << "warning: student (" << student.param_count()
          << " params) is not smaller than teacher (" << teacher.param_count()
          << " params); distillation will not reduce size\n";
  const auto targets = teacher_targets(teacher, ds.train, cfg.soft_targets);
  return train_model(student, ds, cfg, &targets);
}

}  // namespace tinyloc::train

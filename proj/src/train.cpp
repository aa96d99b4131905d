// SPDX-License-Identifier: Apache-2.0
#include "molbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "molbench/error.hpp"
#include "molbench/metrics.hpp"
#include "molbench/rng.hpp"

namespace molbench {

void validate(const TrainConfig& c) {
  if (c.batch_size == 0) throw UsageError("batch_size must be positive");
  if (c.epochs == 0) throw UsageError("epochs must be positive");
  if (c.warmup_epochs >= c.epochs) throw UsageError("warmup_epochs must be smaller than epochs");
  if (!(c.eta_min >= 0.0) || !(c.peak_lr > c.eta_min)) throw UsageError("need peak_lr > eta_min >= 0");
  const auto& a = c.adamw;
  if (!(a.beta1 >= 0.0 && a.beta1 < 1.0 && a.beta2 >= 0.0 && a.beta2 < 1.0))
    throw UsageError("AdamW betas must lie in [0, 1)");
  if (!(a.eps > 0.0) || !(a.weight_decay >= 0.0)) throw UsageError("AdamW eps must be > 0, weight_decay >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"peak_lr", c.peak_lr},
          {"warmup_epochs", c.warmup_epochs},
          {"eta_min", c.eta_min},
          {"seed", c.seed},
          {"adamw",
           {{"beta1", c.adamw.beta1},
            {"beta2", c.adamw.beta2},
            {"eps", c.adamw.eps},
            {"weight_decay", c.adamw.weight_decay}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.peak_lr = j.value("peak_lr", c.peak_lr);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.eta_min = j.value("eta_min", c.eta_min);
    c.seed = j.value("seed", c.seed);
    if (j.contains("adamw")) {
      const auto& a = j.at("adamw");
      c.adamw.beta1 = a.value("beta1", c.adamw.beta1);
      c.adamw.beta2 = a.value("beta2", c.adamw.beta2);
      c.adamw.eps = a.value("eps", c.adamw.eps);
      c.adamw.weight_decay = a.value("weight_decay", c.adamw.weight_decay);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad training config: ") + e.what());
  }
  validate(c);
  return c;
}

LrSchedule make_schedule(const TrainConfig& c, std::size_t steps_per_epoch) {
  return {c.warmup_epochs * steps_per_epoch, c.epochs * steps_per_epoch, c.peak_lr, c.eta_min};
}

double lr_at(const LrSchedule& s, std::size_t step) {
  if (step > s.total_steps)
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " beyond " + std::to_string(s.total_steps));
  if (s.warmup_steps > 0 && step <= s.warmup_steps)
    return s.peak * static_cast<double>(std::max<std::size_t>(step, 1)) / static_cast<double>(s.warmup_steps);
  if (s.total_steps == s.warmup_steps) return s.peak;
  const double t = static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return s.eta_min + (s.peak - s.eta_min) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

void adamw_step(ad::Parameter& p, AdamWState& st, double lr, const AdamWConfig& c) {
  if (!p.trainable) return;
  if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p.name);
  if (st.m.empty()) {
    st.m = ad::Tensor(p.value.shape());
    st.v = ad::Tensor(p.value.shape());
  }
  if (!st.m.same_shape(p.value)) throw std::invalid_argument("AdamW state shape mismatch for " + p.name);
  ++st.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  auto w = p.value.values();
  const auto g = p.grad.values();
  auto m = st.m.values();
  auto v = st.v.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] *= 1.0 - lr * c.weight_decay;
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

AdamW::AdamW(std::vector<ad::Parameter*> params, AdamWConfig config)
    : params_(std::move(params)), states_(params_.size()), config_(config) {}

void AdamW::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) adamw_step(*params_[i], states_[i], lr, config_);
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

std::string checkpoint_file_name(const RunIdentity& run, std::size_t epoch) {
  return run.mt + "_" + run.ms + "_" + run.ds + "_seed" + std::to_string(run.seed) + "_epoch" + std::to_string(epoch);
}

namespace {

std::vector<ad::Parameter*> trainable_params(MtrModel& model) {
  std::vector<ad::Parameter*> out;
  for (auto& p : model.backbone().params().all())
    if (p.trainable) out.push_back(&p);
  for (auto& p : model.head().all())
    if (p.trainable) out.push_back(&p);
  return out;
}

struct Batch {
  std::vector<const EncodedSequence*> seqs;
  ad::Tensor target;
  std::vector<std::uint8_t> mask;
  std::size_t present = 0;
};

Batch make_batch(const DescriptorTable& table, std::span<const std::size_t> rows,
                 const std::vector<EncodedSequence>& encoded) {
  Batch b;
  const std::size_t p = table.num_columns();
  b.target = ad::Tensor::matrix(rows.size(), p);
  b.mask.assign(rows.size() * p, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& rec = table.rows[rows[i]];
    b.seqs.push_back(&encoded[rows[i]]);
    for (std::size_t c = 0; c < p; ++c) {
      if (!rec.present[c]) continue;
      b.target.at(i, c) = rec.descriptors[c];
      b.mask[i * p + c] = 1;
      ++b.present;
    }
  }
  return b;
}

std::string row_list(std::span<const std::size_t> rows) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < rows.size(); ++i) ss << (i ? "," : "") << rows[i];
  return ss.str();
}

}  // namespace

double mtr_loss(MtrModel& model, const DescriptorTable& table, std::span<const std::size_t> rows,
                const std::vector<EncodedSequence>& encoded, std::size_t batch_size) {
  double abs_sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto chunk = rows.subspan(start, std::min(batch_size, rows.size() - start));
    const auto b = make_batch(table, chunk, encoded);
    ad::Tape tape;
    const auto pred = model.forward(tape, b.seqs).value();
    for (std::size_t i = 0; i < b.mask.size(); ++i)
      if (b.mask[i]) abs_sum += std::abs(pred[i] - b.target[i]);
    cells += b.present;
  }
  if (cells == 0) throw DataError("validation rows have no present descriptor values");
  return abs_sum / static_cast<double>(cells);
}

std::vector<EpochCheckpoint> train_mtr(MtrModel& model, const DescriptorTable& table, const SplitPlan& split,
                                       const TrainConfig& config, const Vocabulary& vocab,
                                       const MtrOptions& options) {
  validate(config);
  table.validate();
  if (table.num_columns() != model.config().num_properties)
    throw UsageError("table has " + std::to_string(table.num_columns()) + " properties, model expects " +
                     std::to_string(model.config().num_properties));
  if (vocab.size() != model.config().vocab_size)
    throw UsageError("vocabulary size " + std::to_string(vocab.size()) + " does not match model vocab_size " +
                     std::to_string(model.config().vocab_size));
  if (split.train_indices.empty()) throw UsageError("empty training split");
  if (split.val_indices.empty()) throw UsageError("empty validation split");
  for (auto idx : {&split.train_indices, &split.val_indices})
    for (auto r : *idx)
      if (r >= table.num_rows()) throw UsageError("split index " + std::to_string(r) + " out of range");

  std::vector<EncodedSequence> encoded;
  encoded.reserve(table.num_rows());
  for (const auto& rec : table.rows)
    encoded.push_back(encode(rec.smiles, model.config().family, kMaxSequenceLength, vocab));

  const std::size_t n = split.train_indices.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const auto schedule = make_schedule(config, steps_per_epoch);
  AdamW opt(trainable_params(model), config.adamw);
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  std::vector<EpochCheckpoint> out;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = epoch_permutation(n, epoch, config.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = split.train_indices[perm[i]];

    double loss_sum = 0.0;
    std::size_t loss_cells = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++step) {
      const auto rows = std::span<const std::size_t>(order).subspan(start, std::min(config.batch_size, n - start));
      const auto b = make_batch(table, rows, encoded);
      const double lr = lr_at(schedule, step);
      if (b.present == 0) continue;
      opt.zero_grad();
      ad::Tape tape;
      const auto pred = model.forward(tape, b.seqs);
      const auto loss = ad::l1_loss(pred, b.target, b.mask);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite MTR loss at step " << step << " (epoch " << epoch << "), lr " << lr << ", batch rows ["
            << row_list(rows) << "]";
        throw NumericError(msg.str());
      }
      tape.backward(loss);
      opt.step(lr);
      loss_sum += value * static_cast<double>(b.present);
      loss_cells += b.present;
    }

    EpochCheckpoint ck;
    ck.run = options.run;
    ck.epoch = epoch;
    ck.train_loss = loss_cells ? loss_sum / static_cast<double>(loss_cells) : 0.0;
    ck.val_loss = mtr_loss(model, table, split.val_indices, encoded, config.batch_size);
    if (!std::isfinite(ck.val_loss))
      throw NumericError("non-finite validation loss after epoch " + std::to_string(epoch));
    ck.payload = model.to_checkpoint();
    ck.payload.meta = {{"mt", ck.run.mt},         {"ms", ck.run.ms},
                       {"ds", ck.run.ds},         {"seed", ck.run.seed},
                       {"epoch", epoch},          {"train_loss", ck.train_loss},
                       {"val_loss", ck.val_loss}, {"train", to_json(config)},
                       {"properties", table.column_names}};
    if (options.checkpoint_dir)
      save_checkpoint(ck.payload, *options.checkpoint_dir / checkpoint_file_name(ck.run, epoch));
    if (options.on_epoch) options.on_epoch(ck);
    out.push_back(std::move(ck));
  }
  return out;
}

namespace {

void split_features(Backbone& backbone, const TaskDataset& task, const Vocabulary& vocab,
                    std::span<const std::size_t> rows, ad::Tensor& feats, std::vector<double>& labels) {
  std::vector<EncodedSequence> seqs;
  seqs.reserve(rows.size());
  labels.clear();
  for (auto r : rows) {
    seqs.push_back(encode(task.smiles[r], backbone.config().family, kMaxSequenceLength, vocab));
    labels.push_back(task.labels[r]);
  }
  feats = backbone.pooled_features(seqs);
}

ad::Tensor gather_rows(const ad::Tensor& x, std::span<const std::size_t> rows) {
  ad::Tensor out = ad::Tensor::matrix(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.row(rows[i]).begin(), x.cols(), out.row(i).begin());
  return out;
}

double head_loss(FtHead& head, const ad::Tensor& feats, const std::vector<double>& labels, TaskKind kind,
                 std::vector<double>* outputs = nullptr) {
  const auto pred = head.apply(feats);
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    sum += kind == TaskKind::Regression ? std::abs(pred[i] - labels[i]) : ad::bce_with_logits_value(pred[i], labels[i]);
  if (outputs) outputs->assign(pred.values().begin(), pred.values().end());
  return sum / static_cast<double>(labels.size());
}

}  // namespace

FrozenFeatures compute_features(Backbone& backbone, const TaskDataset& task, const Vocabulary& vocab) {
  if (task.train.empty() || task.val.empty() || task.test.empty())
    throw UsageError("task " + task.name + " needs non-empty train, val and test splits");
  FrozenFeatures f;
  f.kind = task.kind;
  split_features(backbone, task, vocab, task.train, f.train, f.train_labels);
  split_features(backbone, task, vocab, task.val, f.val, f.val_labels);
  split_features(backbone, task, vocab, task.test, f.test, f.test_labels);
  return f;
}

std::vector<FtEpochRecord> train_ft_head(const FrozenFeatures& f, const TrainConfig& config, std::size_t iteration,
                                         std::size_t head_hidden, FtHead* trained_head) {
  validate(config);
  if (f.kind == TaskKind::Classification)
    for (const auto* labels : {&f.train_labels, &f.val_labels, &f.test_labels})
      for (double y : *labels)
        if (y != 0.0 && y != 1.0) throw DataError("classification label " + std::to_string(y) + " is not 0 or 1");

  const std::string it = std::to_string(iteration);
  const std::size_t d = f.train.cols();
  FtHead head(d, head_hidden ? head_hidden : d, derive_seed(config.seed, "ft-init:" + it));
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "ft-shuffle:" + it);

  std::vector<ad::Parameter*> params;
  for (auto& p : head.params().all()) params.push_back(&p);
  AdamW opt(params, config.adamw);

  const std::size_t n = f.train.rows();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const auto schedule = make_schedule(config, steps_per_epoch);

  std::vector<FtEpochRecord> out;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = epoch_permutation(n, epoch, shuffle_seed);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++step) {
      const auto rows = std::span<const std::size_t>(perm).subspan(start, std::min(config.batch_size, n - start));
      ad::Tensor target = ad::Tensor::matrix(rows.size(), 1);
      for (std::size_t i = 0; i < rows.size(); ++i) target[i] = f.train_labels[rows[i]];
      const double lr = lr_at(schedule, step);
      opt.zero_grad();
      ad::Tape tape;
      const auto pred = head.forward(tape, tape.constant(gather_rows(f.train, rows)));
      const auto loss = f.kind == TaskKind::Regression
                            ? ad::l1_loss(pred, target, std::vector<std::uint8_t>(rows.size(), 1))
                            : ad::bce_with_logits(pred, target);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw NumericError("non-finite fine-tuning loss at step " + std::to_string(step) + ", lr " +
                           std::to_string(lr) + ", batch rows [" + row_list(rows) + "]");
      tape.backward(loss);
      opt.step(lr);
      loss_sum += value * static_cast<double>(rows.size());
    }
    FtEpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = head_loss(head, f.val, f.val_labels, f.kind);
    std::vector<double> test_out;
    head_loss(head, f.test, f.test_labels, f.kind, &test_out);
    rec.test_metric =
        f.kind == TaskKind::Regression ? rmse(test_out, f.test_labels) : auc_roc(test_out, f.test_labels);
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite fine-tuning validation loss");
    out.push_back(rec);
  }
  if (trained_head) *trained_head = std::move(head);
  return out;
}

std::vector<FtEpochRecord> train_ft(const Checkpoint& checkpoint, const TaskDataset& task, TaskKind kind,
                                    const TrainConfig& config, std::size_t iteration, const Vocabulary& vocab,
                                    std::size_t head_hidden) {
  if (kind != task.kind) throw UsageError("task " + task.name + " is not a " + std::string(task_kind_name(kind)) + " task");
  auto mtr = MtrModel::from_checkpoint(checkpoint);
  if (vocab.size() != mtr.config().vocab_size)
    throw UsageError("vocabulary size " + std::to_string(vocab.size()) + " does not match checkpoint vocab_size " +
                     std::to_string(mtr.config().vocab_size));
  mtr.backbone().params().set_trainable(false);
  const auto features = compute_features(mtr.backbone(), task, vocab);
  return train_ft_head(features, config, iteration, head_hidden);
}

}  // namespace molbench

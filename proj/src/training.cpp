#include "necho/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace necho {

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Independent rng streams derived from the run seed.
enum Stream : std::uint64_t {
  kShuffleStream = 1,
  kDropoutStream = 2,
  kEraseDrawStream = 3,
  kTr2dStream = 4,
  kStudentCorruptionStream = 5,
  kTeacherCorruptionStream = 6,
};

std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return mix_seed(seed, s); }

std::uint64_t record_key(const PatientRecord& r) {
  return mix_seed(static_cast<std::uint64_t>(r.patient_id), r.visits.size());
}

std::mt19937_64 record_rng(std::uint64_t seed, Stream s, int epoch, const PatientRecord& r) {
  return std::mt19937_64(mix_seed(mix_seed(stream_seed(seed, s), static_cast<std::uint64_t>(epoch)), record_key(r)));
}

Targets targets_of(const ModelInput& in) { return {in.category_targets, in.typing_targets}; }

void accumulate(LossBreakdown& acc, const LossBreakdown& x) {
  acc.mwcd += x.mwcd;
  acc.mwhd += x.mwhd;
  acc.tr2d += x.tr2d;
  acc.magd += x.magd;
  acc.ld += x.ld;
  acc.hrchy_ld += x.hrchy_ld;
  acc.dual_ld += x.dual_ld;
  acc.dual_ce += x.dual_ce;
  acc.total += x.total;
}

LossBreakdown divided(LossBreakdown x, double n) {
  if (n <= 0) return x;
  for (double* f : {&x.mwcd, &x.mwhd, &x.tr2d, &x.magd, &x.ld, &x.hrchy_ld, &x.dual_ld, &x.dual_ce, &x.total}) *f /= n;
  return x;
}

void require_isomorphic(const RepresentationBundle& a, const RepresentationBundle& b) {
  auto same = [](const ag::Var& x, const ag::Var& y) { return x.rows() == y.rows() && x.cols() == y.cols(); };
  const bool ok = same(a.r_demo, b.r_demo) && same(a.r_note, b.r_note) && same(a.r_code, b.r_code) &&
                  same(a.c_dn, b.c_dn) && same(a.c_cn, b.c_cn) && same(a.s_dn, b.s_dn) && same(a.s_cn, b.s_cn) &&
                  same(a.s_c, b.s_c) && same(a.fusion, b.fusion) && same(a.y_hat, b.y_hat) &&
                  same(a.o_hat_demo, b.o_hat_demo) && same(a.o_hat_note, b.o_hat_note) &&
                  same(a.o_hat_code, b.o_hat_code) && a.valid_visit_mask == b.valid_visit_mask;
  if (!ok) throw std::invalid_argument("teacher and student bundles are not shape-isomorphic");
}

std::vector<PatientRecord> training_records(std::span<const PatientRecord> train, const TrainConfig& config) {
  if (config.all_prefixes) return expand_prefixes(train);
  return {train.begin(), train.end()};
}

// Shared epoch loop with early stopping on validation top-10.
TrainResult run_epochs(NechoModel& model, const TrainConfig& config, const std::string& phase,
                       const std::function<LossBreakdown(int)>& train_epoch,
                       const std::function<EvalReport()>& validate, const MetricsSink& sink) {
  TrainResult result;
  std::vector<ag::Matrix> best = model.parameters().snapshot();
  int since_best = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const LossBreakdown losses = train_epoch(epoch);
    EvalReport report = validate();
    report.epoch = epoch;
    result.train_losses.push_back(losses);
    result.validation.push_back(report);
    result.epochs_run = epoch + 1;
    if (sink) {
      sink({phase, "train", epoch, 0.0, 0.0, losses});
      sink({phase, "valid", epoch, report.top10, report.top20, report.loss_means});
    }
    if (result.best_epoch < 0 || report.top10 > result.best_valid_top10) {
      result.best_epoch = epoch;
      result.best_valid_top10 = report.top10;
      best = model.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  model.parameters().restore(best);
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  check(batch_size > 0 && eval_batch_size > 0, "train config: batch sizes must be positive");
  check(max_epochs > 0, "train config: max_epochs must be positive");
  check(patience > 0 && patience < max_epochs, "train config: need 0 < patience < max_epochs");
  check(learning_rate > 0.0 && note_learning_rate > 0.0, "train config: learning rates must be positive");
  check(weight_decay >= 0.0, "train config: weight_decay must be >= 0");
  check(erase.points_per_record >= 1, "train config: points_per_record must be >= 1");
  student_spec.validate();
  schedule.validate();
}

// ------------------------------------------------------------------ optimizer

AdamW::AdamW(nn::ParameterStore& params, const TrainConfig& config) : params_(params), config_(config) {
  for (const auto& p : params_.all()) {
    m_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

double AdamW::learning_rate_for(const nn::Parameter& p) const {
  return p.group == nn::ParamGroup::kNoteEncoder ? config_.note_learning_rate : config_.learning_rate;
}

void AdamW::step() {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto& params = params_.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const ag::Matrix& g = p.var.grad();
    if (g.size() == 0) continue;
    const double lr = learning_rate_for(p);
    const double decay = 1.0 - lr * config_.weight_decay;
    const double inv_c2 = 1.0 / c2;
    const double step = lr / c1;
    const double eps = config_.adam_epsilon;
    double* __restrict w = p.var.mutable_value().data();
    double* __restrict m = m_[i].data();
    double* __restrict v = v_[i].data();
    const double* __restrict gd = g.data();
    const ag::Index n = g.size();
    // Single fused pass; the update is memory bound.
    for (ag::Index k = 0; k < n; ++k) {
      const double mk = b1 * m[k] + (1.0 - b1) * gd[k];
      const double vk = b2 * v[k] + (1.0 - b2) * gd[k] * gd[k];
      m[k] = mk;
      v[k] = vk;
      w[k] = w[k] * decay - step * mk / (std::sqrt(vk * inv_c2) + eps);
    }
  }
}

// ------------------------------------------------------------------ evaluation

std::vector<int> rank_logits(const ag::Matrix& logits, ag::Index row) {
  std::vector<int> order(static_cast<std::size_t>(logits.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits(row, a) > logits(row, b); });
  return order;
}

TopkResult compute_topk_accuracy(std::span<const std::vector<int>> ranked, std::span<const std::vector<int>> truth,
                                 int k) {
  check(k >= 1, "top-k: k must be >= 1");
  check(ranked.size() == truth.size(), "top-k: prediction and truth counts differ");
  TopkResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (truth[i].empty()) {
      ++r.excluded;
      continue;
    }
    const auto limit = std::min<std::size_t>(static_cast<std::size_t>(k), ranked[i].size());
    std::size_t hits = 0;
    for (std::size_t j = 0; j < limit; ++j) {
      if (std::find(truth[i].begin(), truth[i].end(), ranked[i][j]) != truth[i].end()) ++hits;
    }
    total += static_cast<double>(hits) /
             static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(k), truth[i].size()));
    ++r.evaluated;
  }
  r.accuracy = r.evaluated > 0 ? total / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

EvalReport evaluate(const NechoModel& model, std::span<const PatientRecord> records, const Dataset& dataset,
                    const MissingnessSpec& spec, std::uint64_t seed, int batch_size) {
  spec.validate();
  check(batch_size > 0, "evaluate: batch size must be positive");
  ag::NoGradGuard no_grad;
  EvalReport report;
  std::vector<std::vector<int>> ranked;
  std::vector<std::vector<int>> truth;
  std::vector<int> pattern;
  double ce_sum = 0.0;
  std::size_t ce_batches = 0;

  for (std::size_t begin = 0; begin < records.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(records.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<PatientRecord> batch;
    for (std::size_t i = begin; i < end; ++i) {
      std::mt19937_64 rng(mix_seed(seed, record_key(records[i])));
      batch.push_back(apply_missingness(records[i], spec, rng));
    }
    const ModelInput input = build_input(batch, dataset.config, dataset.ontology);
    const RepresentationBundle bundle = model.forward(input, {});
    ce_sum += dual_ce_loss(bundle, targets_of(input), LossWeights{}.hrchy_weight).item();
    ++ce_batches;
    for (std::size_t b = 0; b < input.batch_size(); ++b) {
      ranked.push_back(rank_logits(bundle.y_hat.value(), static_cast<ag::Index>(b)));
      truth.push_back(input.target_categories[b]);
      pattern.push_back(input.visits[static_cast<std::size_t>(input.last_rows[b])].present.pattern_id());
    }
  }

  const TopkResult t10 = compute_topk_accuracy(ranked, truth, 10);
  const TopkResult t20 = compute_topk_accuracy(ranked, truth, 20);
  report.top10 = t10.accuracy;
  report.top20 = t20.accuracy;
  report.evaluated = t10.evaluated;
  report.excluded = t10.excluded;
  if (ce_batches > 0) report.loss_means.dual_ce = ce_sum / static_cast<double>(ce_batches);

  for (int id = 1; id < 8; ++id) {
    std::vector<std::vector<int>> r_sub;
    std::vector<std::vector<int>> t_sub;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (pattern[i] == id) {
        r_sub.push_back(ranked[i]);
        t_sub.push_back(truth[i]);
      }
    }
    const TopkResult a = compute_topk_accuracy(r_sub, t_sub, 10);
    const TopkResult b = compute_topk_accuracy(r_sub, t_sub, 20);
    report.per_pattern[static_cast<std::size_t>(id)] = {a.evaluated, a.accuracy, b.accuracy};
  }
  return report;
}

std::vector<PatientRecord> expand_prefixes(std::span<const PatientRecord> records) {
  std::vector<PatientRecord> out;
  for (const auto& r : records) {
    for (std::size_t t = 2; t <= r.visits.size(); ++t) {
      PatientRecord p;
      p.patient_id = r.patient_id;
      p.visits.assign(r.visits.begin(), r.visits.begin() + static_cast<std::ptrdiff_t>(t));
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ------------------------------------------------------------------ teacher

TrainResult train_teacher(NechoModel& teacher, const Dataset& dataset, std::span<const PatientRecord> train,
                          std::span<const PatientRecord> valid, const TrainConfig& config, const LossWeights& weights,
                          const MetricsSink& sink) {
  config.validate();
  weights.validate();
  check(!teacher.frozen(), "train_teacher: model is already frozen");
  check(teacher.config().fusion == FusionVariant::kCMAG, "train_teacher: the teacher uses CMAG fusion");
  check(!train.empty() && !valid.empty(), "train_teacher: empty train or validation split");
  for (const auto& r : train) {
    for (const auto& v : r.visits) check(v.present.complete(), "train_teacher: training data must be complete");
  }

  const std::vector<PatientRecord> records = training_records(train, config);
  std::mt19937_64 shuffle_rng(stream_seed(config.seed, kShuffleStream));
  std::mt19937_64 dropout_rng(stream_seed(config.seed, kDropoutStream));
  std::mt19937_64 erase_rng(stream_seed(config.seed, kEraseDrawStream));
  std::mt19937_64 tr2d_rng(stream_seed(config.seed, kTr2dStream));
  AdamW optimizer(teacher.parameters(), config);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  LossWeights task_only = weights;
  task_only.lambda_mwd = task_only.lambda_tr2d = task_only.lambda_magd = task_only.lambda_dual_ld = 0.0;
  long step = 0;

  auto train_epoch = [&](int epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossBreakdown sum;
    double batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      auto draw = [&] {
        return config.erase_in_teacher_training
                   ? sample_erase_probability(epoch, ErasePhase::kTeacherTraining, config.schedule, erase_rng)
                   : 0.0;
      };
      const double batch_p = config.per_batch_erase_draw ? draw() : 0.0;
      std::vector<PatientRecord> batch;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& rec = records[order[i]];
        const double p = config.per_batch_erase_draw ? batch_p : draw();
        auto rng = record_rng(config.seed, kTeacherCorruptionStream, epoch, rec);
        batch.push_back(curriculum_erase(rec, p, rng, config.erase));
      }
      const ModelInput input = build_input(batch, dataset.config, dataset.ontology);
      const RepresentationBundle bundle = teacher.forward(input, {true, &dropout_rng});
      const TotalLoss loss = total_loss(nullptr, bundle, targets_of(input), task_only, config.tr2d_selection, tr2d_rng);
      if (!std::isfinite(loss.parts.total)) throw TrainingDiverged(epoch, step);
      ag::backward(loss.total);
      optimizer.step();
      teacher.parameters().zero_grad();
      accumulate(sum, loss.parts);
      ++batches;
      ++step;
    }
    return divided(sum, batches);
  };
  auto validate = [&] {
    return evaluate(teacher, valid, dataset, MissingnessSpec{}, config.eval_seed, config.eval_batch_size);
  };

  TrainResult result = run_epochs(teacher, config, "teacher", train_epoch, validate, sink);
  teacher.freeze();
  return result;
}

// ------------------------------------------------------------------ student

TrainResult distill_student(const NechoModel* teacher, NechoModel& student, const Dataset& dataset,
                            std::span<const PatientRecord> train, std::span<const PatientRecord> valid,
                            const TrainConfig& config, const LossWeights& weights, const MetricsSink& sink) {
  config.validate();
  weights.validate();
  check(!student.frozen(), "distill_student: student is frozen");
  check(student.config().fusion == FusionVariant::kMAG, "distill_student: the student uses MAG fusion");
  check(!train.empty() && !valid.empty(), "distill_student: empty train or validation split");
  if (teacher != nullptr) {
    check(teacher->frozen(), "distill_student: teacher must be frozen");
    check(teacher != &student, "distill_student: teacher and student must be distinct models");
  }
  LossWeights effective = weights;
  if (teacher == nullptr) {
    effective.lambda_mwd = effective.lambda_tr2d = effective.lambda_magd = effective.lambda_dual_ld = 0.0;
  }

  const std::vector<PatientRecord> records = training_records(train, config);
  std::mt19937_64 shuffle_rng(stream_seed(config.seed, kShuffleStream));
  std::mt19937_64 dropout_rng(stream_seed(config.seed, kDropoutStream));
  std::mt19937_64 erase_rng(stream_seed(config.seed, kEraseDrawStream));
  std::mt19937_64 tr2d_rng(stream_seed(config.seed, kTr2dStream));
  AdamW optimizer(student.parameters(), config);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;

  auto train_epoch = [&](int epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossBreakdown sum;
    double batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      auto draw = [&] {
        return config.erase_in_distillation
                   ? sample_erase_probability(epoch, ErasePhase::kDistillation, config.schedule, erase_rng)
                   : 0.0;
      };
      const double batch_p = config.per_batch_erase_draw ? draw() : 0.0;
      std::vector<PatientRecord> student_batch;
      std::vector<PatientRecord> teacher_batch;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& rec = records[order[i]];
        auto s_rng = record_rng(config.seed, kStudentCorruptionStream, epoch, rec);
        student_batch.push_back(apply_missingness(rec, config.student_spec, s_rng));
        const double p = config.per_batch_erase_draw ? batch_p : draw();
        auto t_rng = record_rng(config.seed, kTeacherCorruptionStream, epoch, rec);
        teacher_batch.push_back(curriculum_erase(rec, p, t_rng, config.erase));
      }
      const ModelInput s_input = build_input(student_batch, dataset.config, dataset.ontology);
      const RepresentationBundle s_bundle = student.forward(s_input, {true, &dropout_rng});

      RepresentationBundle t_bundle;
      if (teacher != nullptr) {
        ag::NoGradGuard no_grad;
        const ModelInput t_input = build_input(teacher_batch, dataset.config, dataset.ontology);
        t_bundle = teacher->forward(t_input, {});
        require_isomorphic(t_bundle, s_bundle);
      }
      const TotalLoss loss = total_loss(teacher != nullptr ? &t_bundle : nullptr, s_bundle, targets_of(s_input),
                                        effective, config.tr2d_selection, tr2d_rng);
      if (!std::isfinite(loss.parts.total)) throw TrainingDiverged(epoch, step);
      ag::backward(loss.total);
      optimizer.step();
      student.parameters().zero_grad();
      accumulate(sum, loss.parts);
      ++batches;
      ++step;
    }
    return divided(sum, batches);
  };
  auto validate = [&] {
    return evaluate(student, valid, dataset, config.student_spec, config.eval_seed, config.eval_batch_size);
  };
  return run_epochs(student, config, "student", train_epoch, validate, sink);
}

}  // namespace necho

#pragma once

// Teacher -> student distillation objective. Every loss reads a pair of
// representation bundles; the teacher side never receives gradients.

#include <random>
#include <string>

#include "necho/autograd.hpp"
#include "necho/model.hpp"

namespace necho {

struct LossWeights {
  double lambda_mwd = 1.0;
  double lambda_tr2d = 0.1;
  double lambda_magd = 1.0;
  double lambda_dual_ld = 1.0;
  double lambda_dual_ce = 1.0;
  double alpha = 0.25;  // weight of the teacher->student direction
  double tau = 0.1;
  double hrchy_weight = 0.1;  // parental cross-entropy inside DualCE
  // Ablation switches for sub-terms that share a lambda.
  bool use_mwcd = true;
  bool use_hrchy_ld = true;

  void validate() const;
  // All distillation lambdas zero: the objective is the task loss alone.
  bool distillation_off() const {
    return lambda_mwd == 0.0 && lambda_tr2d == 0.0 && lambda_magd == 0.0 && lambda_dual_ld == 0.0;
  }

  bool operator==(const LossWeights&) const = default;
};

enum class Tr2dSelection { kRandom, kAll };
const char* tr2d_selection_name(Tr2dSelection s);
Tr2dSelection parse_tr2d_selection(const std::string& s);

// Mean over elements of squared differences.
ag::Var mse_loss(const ag::Var& a, const ag::Var& b);

// Symmetric InfoNCE between teacher and student per-visit representations of
// the three modalities. Rows are the pooled (patient, valid visit) samples.
ag::Var mwcd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student, double tau,
                  double alpha);
// One modality's contrastive term: alpha * (teacher->student) + (1 - alpha) * (student->teacher).
ag::Var contrastive_term(const ag::Var& teacher, const ag::Var& student, double tau, double alpha);

ag::Var mwhd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student);
ag::Var mwd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student, double tau,
                 double alpha);

struct Tr2dPick {
  int cross = 0;  // 0: demo->note, 1: code->note
  int self = 0;   // 0: demo->note, 1: code->note, 2: code
};
ag::Var tr2d_loss(const RepresentationBundle& teacher, const RepresentationBundle& student,
                  Tr2dSelection selection, std::mt19937_64& rng, Tr2dPick* picked = nullptr);

ag::Var magd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student);

ag::Var ld_loss(const RepresentationBundle& teacher, const RepresentationBundle& student);
ag::Var hrchy_ld_loss(const RepresentationBundle& teacher, const RepresentationBundle& student);
ag::Var dual_ld_loss(const RepresentationBundle& teacher, const RepresentationBundle& student);

struct Targets {
  ag::Matrix categories;  // [patients x category_count] multi-hot
  ag::Matrix typings;     // [patients x typing_count] multi-hot
};
ag::Var dual_ce_loss(const RepresentationBundle& student, const Targets& targets, double hrchy_weight);

// Raw component values, logged under stable keys.
struct LossBreakdown {
  double mwcd = 0.0;
  double mwhd = 0.0;
  double tr2d = 0.0;
  double magd = 0.0;
  double ld = 0.0;
  double hrchy_ld = 0.0;
  double dual_ld = 0.0;
  double dual_ce = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  ag::Var total;
  LossBreakdown parts;
};

// Weighted objective. With `teacher` null only the task loss is formed (the
// no-distillation baseline); the tr2d rng is consumed either way so both
// runs see the same random stream.
TotalLoss total_loss(const RepresentationBundle* teacher, const RepresentationBundle& student,
                     const Targets& targets, const LossWeights& weights, Tr2dSelection selection,
                     std::mt19937_64& rng);

}  // namespace necho

#include "necho/distillation.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace necho {

using ag::Var;

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Rows of a per-visit array that belong to valid input visits.
Var valid_rows(const Var& x, const std::vector<bool>& mask) {
  if (mask.empty()) return x;
  check(mask.size() == static_cast<std::size_t>(x.rows()), "valid_visit_mask does not match visit rows");
  bool all = true;
  std::vector<ag::Index> keep;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      keep.push_back(static_cast<ag::Index>(i));
    } else {
      all = false;
    }
  }
  if (all) return x;
  return ag::gather_rows(x, keep);
}

Var visit_mse(const Var& teacher, const Var& student, const RepresentationBundle& t_bundle,
              const RepresentationBundle& s_bundle) {
  check(t_bundle.valid_visit_mask == s_bundle.valid_visit_mask, "teacher and student visit masks differ");
  return mse_loss(valid_rows(teacher.detach(), t_bundle.valid_visit_mask),
                  valid_rows(student, s_bundle.valid_visit_mask));
}

Var weighted(const Var& acc, double w, const Var& term) {
  Var scaled = ag::scale(term, w);
  return acc.defined() ? ag::add(acc, scaled) : scaled;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {lambda_mwd, lambda_tr2d, lambda_magd, lambda_dual_ld, lambda_dual_ce, hrchy_weight}) {
    check(w >= 0.0 && std::isfinite(w), "loss weights must be finite and nonnegative");
  }
  check(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  check(tau > 0.0, "temperature must be positive");
}

const char* tr2d_selection_name(Tr2dSelection s) { return s == Tr2dSelection::kRandom ? "random" : "all"; }

Tr2dSelection parse_tr2d_selection(const std::string& s) {
  if (s == "random") return Tr2dSelection::kRandom;
  if (s == "all") return Tr2dSelection::kAll;
  throw std::invalid_argument("unknown tr2d selection " + s + " (expected random|all)");
}

Var mse_loss(const Var& a, const Var& b) { return ag::mse(a, b); }

Var contrastive_term(const Var& teacher, const Var& student, double tau, double alpha) {
  check(teacher.rows() == student.rows() && teacher.cols() == student.cols(),
        "contrastive: teacher and student shapes differ");
  check(teacher.rows() >= 1, "contrastive: no samples");
  check((teacher.value().rowwise().norm().array() > 0.0).all() &&
            (student.value().rowwise().norm().array() > 0.0).all(),
        "contrastive: zero-norm representation");
  const Var t = ag::row_normalize(teacher.detach());
  const Var s = ag::row_normalize(student);
  // Row i of t s^T scores teacher anchor i against every student sample.
  const Var t_to_s = ag::scale(ag::mean(ag::diag(ag::log_softmax_rows(ag::scale(ag::matmul_nt(t, s), 1.0 / tau)))), -1.0);
  const Var s_to_t = ag::scale(ag::mean(ag::diag(ag::log_softmax_rows(ag::scale(ag::matmul_nt(s, t), 1.0 / tau)))), -1.0);
  return ag::add(ag::scale(t_to_s, alpha), ag::scale(s_to_t, 1.0 - alpha));
}

Var mwcd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student, double tau, double alpha) {
  check(teacher.valid_visit_mask == student.valid_visit_mask, "teacher and student visit masks differ");
  Var total;
  for (Modality m : kModalities) {
    const Var term = contrastive_term(valid_rows(teacher.modality(m), teacher.valid_visit_mask),
                                      valid_rows(student.modality(m), student.valid_visit_mask), tau, alpha);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

Var mwhd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student) {
  Var total;
  for (Modality m : kModalities) {
    const Var term = visit_mse(teacher.modality(m), student.modality(m), teacher, student);
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

Var mwd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student, double tau, double alpha) {
  return ag::add(mwcd_loss(teacher, student, tau, alpha), mwhd_loss(teacher, student));
}

Var tr2d_loss(const RepresentationBundle& teacher, const RepresentationBundle& student, Tr2dSelection selection,
              std::mt19937_64& rng, Tr2dPick* picked) {
  const Var* t_cross[2] = {&teacher.c_dn, &teacher.c_cn};
  const Var* s_cross[2] = {&student.c_dn, &student.c_cn};
  const Var* t_self[3] = {&teacher.s_dn, &teacher.s_cn, &teacher.s_c};
  const Var* s_self[3] = {&student.s_dn, &student.s_cn, &student.s_c};

  // Draw even in kAll mode so the rng stream does not depend on the mode.
  Tr2dPick pick;
  pick.cross = std::uniform_int_distribution<int>(0, 1)(rng);
  pick.self = std::uniform_int_distribution<int>(0, 2)(rng);
  if (picked != nullptr) *picked = pick;

  if (selection == Tr2dSelection::kRandom) {
    const Var cmtd = visit_mse(*t_cross[pick.cross], *s_cross[pick.cross], teacher, student);
    const Var satd = visit_mse(*t_self[pick.self], *s_self[pick.self], teacher, student);
    return ag::add(cmtd, satd);
  }
  Var cmtd = visit_mse(*t_cross[0], *s_cross[0], teacher, student);
  cmtd = ag::add(cmtd, visit_mse(*t_cross[1], *s_cross[1], teacher, student));
  Var satd = visit_mse(*t_self[0], *s_self[0], teacher, student);
  for (int i = 1; i < 3; ++i) satd = ag::add(satd, visit_mse(*t_self[i], *s_self[i], teacher, student));
  return ag::add(cmtd, satd);
}

Var magd_loss(const RepresentationBundle& teacher, const RepresentationBundle& student) {
  return visit_mse(teacher.fusion, student.fusion, teacher, student);
}

Var ld_loss(const RepresentationBundle& teacher, const RepresentationBundle& student) {
  return mse_loss(teacher.y_hat.detach(), student.y_hat);
}

Var hrchy_ld_loss(const RepresentationBundle& teacher, const RepresentationBundle& student) {
  Var total;
  for (Modality m : kModalities) {
    const Var term = mse_loss(teacher.parental(m).detach(), student.parental(m));
    total = total.defined() ? ag::add(total, term) : term;
  }
  return total;
}

Var dual_ld_loss(const RepresentationBundle& teacher, const RepresentationBundle& student) {
  return ag::add(ld_loss(teacher, student), hrchy_ld_loss(teacher, student));
}

Var dual_ce_loss(const RepresentationBundle& student, const Targets& targets, double hrchy_weight) {
  Var ce = ag::bce_with_logits(student.y_hat, targets.categories);
  Var hrchy;
  for (Modality m : kModalities) {
    const Var term = ag::bce_with_logits(student.parental(m), targets.typings);
    hrchy = hrchy.defined() ? ag::add(hrchy, term) : term;
  }
  return ag::add(ce, ag::scale(hrchy, hrchy_weight));
}

TotalLoss total_loss(const RepresentationBundle* teacher, const RepresentationBundle& student,
                     const Targets& targets, const LossWeights& weights, Tr2dSelection selection,
                     std::mt19937_64& rng) {
  weights.validate();
  TotalLoss out;
  Var total;

  const Var ce = dual_ce_loss(student, targets, weights.hrchy_weight);
  out.parts.dual_ce = ce.item();
  if (weights.lambda_dual_ce != 0.0) total = weighted(total, weights.lambda_dual_ce, ce);

  if (teacher == nullptr) {
    check(weights.distillation_off(), "distillation weights set but no teacher given");
    std::uniform_int_distribution<int>(0, 1)(rng);
    std::uniform_int_distribution<int>(0, 2)(rng);
  } else {
    // A term whose effective weight is zero is evaluated off the graph so
    // it leaves the student's gradients untouched.
    const RepresentationBundle detached = student.detached();
    auto side = [&](double w) -> const RepresentationBundle& { return w != 0.0 ? student : detached; };

    const double w_mwcd = weights.use_mwcd ? weights.lambda_mwd : 0.0;
    const Var mwcd = mwcd_loss(*teacher, side(w_mwcd), weights.tau, weights.alpha);
    const Var mwhd = mwhd_loss(*teacher, side(weights.lambda_mwd));
    const Var tr2d = tr2d_loss(*teacher, side(weights.lambda_tr2d), selection, rng);
    const Var magd = magd_loss(*teacher, side(weights.lambda_magd));
    const Var ld = ld_loss(*teacher, side(weights.lambda_dual_ld));
    const double w_hrchy = weights.use_hrchy_ld ? weights.lambda_dual_ld : 0.0;
    const Var hrchy = hrchy_ld_loss(*teacher, side(w_hrchy));

    out.parts.mwcd = mwcd.item();
    out.parts.mwhd = mwhd.item();
    out.parts.tr2d = tr2d.item();
    out.parts.magd = magd.item();
    out.parts.ld = ld.item();
    out.parts.hrchy_ld = hrchy.item();
    out.parts.dual_ld = out.parts.ld + out.parts.hrchy_ld;

    if (w_mwcd != 0.0) total = weighted(total, w_mwcd, mwcd);
    if (weights.lambda_mwd != 0.0) total = weighted(total, weights.lambda_mwd, mwhd);
    if (weights.lambda_tr2d != 0.0) total = weighted(total, weights.lambda_tr2d, tr2d);
    if (weights.lambda_magd != 0.0) total = weighted(total, weights.lambda_magd, magd);
    if (weights.lambda_dual_ld != 0.0) total = weighted(total, weights.lambda_dual_ld, ld);
    if (w_hrchy != 0.0) total = weighted(total, w_hrchy, hrchy);
  }

  if (!total.defined()) total = ag::scalar(0.0);
  out.total = total;
  out.parts.total = total.item();
  return out;
}

}  // namespace necho

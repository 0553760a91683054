#include "necho/model.hpp"

#include <stdexcept>

namespace necho {

using ag::Var;
using nn::ParamGroup;

namespace {

constexpr double kEmbeddingStd = 0.1;

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

const char* fusion_name(FusionVariant v) { return v == FusionVariant::kCMAG ? "CMAG" : "MAG"; }

FusionVariant parse_fusion(const std::string& s) {
  if (s == "CMAG" || s == "cmag") return FusionVariant::kCMAG;
  if (s == "MAG" || s == "mag") return FusionVariant::kMAG;
  throw std::invalid_argument("unknown fusion variant " + s);
}

ModelConfig ModelConfig::for_dataset(const DatasetConfig& data, FusionVariant fusion) {
  ModelConfig c;
  c.fusion = fusion;
  c.unique_count = data.unique_count;
  c.category_count = data.category_count;
  c.typing_count = data.typing_count;
  c.demographic_cardinalities = data.demographic_cardinalities;
  c.note_vocab_size = data.note_vocab_size;
  c.max_note_length = data.max_note_length;
  c.max_visits = data.max_visits;
  return c;
}

void ModelConfig::validate() const {
  check(hidden_dim > 0 && heads > 0 && hidden_dim % heads == 0, "model: hidden_dim must be divisible by heads");
  check(note_dim > 0 && note_heads > 0 && note_dim % note_heads == 0,
        "model: note_dim must be divisible by note_heads");
  check(layers > 0 && note_layers > 0 && ffn_dim > 0 && note_ffn_dim > 0, "model: layer sizes must be positive");
  check(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
  check(unique_count > 0 && category_count > 0 && typing_count > 0, "model: code counts must be positive");
  check(!demographic_cardinalities.empty(), "model: need demographic fields");
  check(note_vocab_size > 0 && max_note_length > 0 && max_visits >= 2, "model: bad vocabulary sizes");
}

// ------------------------------------------------------------------ input

ModelInput build_input(std::span<const PatientRecord> records, const DatasetConfig& data, const Ontology& ontology) {
  ModelInput in;
  const auto B = static_cast<ag::Index>(records.size());
  in.category_targets = ag::Matrix::Zero(B, data.category_count);
  in.typing_targets = ag::Matrix::Zero(B, data.typing_count);
  for (std::size_t b = 0; b < records.size(); ++b) {
    const auto& rec = records[b];
    check(rec.visits.size() >= 2, "build_input: patient " + std::to_string(rec.patient_id) +
                                      " has fewer than two visits");
    const auto begin = static_cast<ag::Index>(in.visits.size());
    for (std::size_t t = 0; t + 1 < rec.visits.size(); ++t) {
      validate_visit(rec.visits[t], data);
      in.visits.push_back(encode_missing(rec.visits[t], data));
      in.position.push_back(static_cast<int>(t));
    }
    const auto length = static_cast<ag::Index>(rec.visits.size() - 1);
    in.patients.push_back({begin, length});
    in.last_rows.push_back(begin + length - 1);

    const auto& target = rec.visits.back().codes;
    auto cats = categories_of(target, ontology);
    for (int c : cats) in.category_targets(static_cast<ag::Index>(b), c) = 1.0;
    for (int t : typings_of(target, ontology)) in.typing_targets(static_cast<ag::Index>(b), t) = 1.0;
    in.target_categories.push_back(std::move(cats));
  }
  return in;
}

std::vector<ag::AttentionSegment> causal_segments(std::span<const ag::Segment> patients) {
  std::vector<ag::AttentionSegment> segs;
  segs.reserve(patients.size());
  for (const auto& p : patients) segs.push_back({p.begin, p.length, p.begin, p.length});
  return segs;
}

// ------------------------------------------------------------------ bundle

const Var& RepresentationBundle::modality(Modality m) const {
  switch (m) {
    case Modality::kDemographics: return r_demo;
    case Modality::kNote: return r_note;
    case Modality::kCodes: return r_code;
  }
  return r_code;
}

const Var& RepresentationBundle::parental(Modality m) const {
  switch (m) {
    case Modality::kDemographics: return o_hat_demo;
    case Modality::kNote: return o_hat_note;
    case Modality::kCodes: return o_hat_code;
  }
  return o_hat_code;
}

RepresentationBundle RepresentationBundle::detached() const {
  RepresentationBundle b;
  b.r_demo = r_demo.detach();
  b.r_note = r_note.detach();
  b.r_code = r_code.detach();
  b.c_dn = c_dn.detach();
  b.c_cn = c_cn.detach();
  b.s_dn = s_dn.detach();
  b.s_cn = s_cn.detach();
  b.s_c = s_c.detach();
  b.fusion = fusion.detach();
  b.y_hat = y_hat.detach();
  b.o_hat_demo = o_hat_demo.detach();
  b.o_hat_note = o_hat_note.detach();
  b.o_hat_code = o_hat_code.detach();
  b.valid_visit_mask = valid_visit_mask;
  return b;
}

// ------------------------------------------------------------------ fusion

GatedFusion::GatedFusion(nn::ParameterStore& store, const std::string& name, int hidden, FusionVariant variant)
    : variant_(variant),
      gate_(store, name + ".gate", 3 * hidden, hidden),
      shift_(store, name + ".shift", 2 * hidden, hidden),
      norm_(store, name + ".norm", hidden) {
  if (variant == FusionVariant::kMAG) {
    anchor_logits_ = store.constant(name + ".anchor_logits", 1, 3, 0.0, ParamGroup::kBase);
  }
}

FusionOutput GatedFusion::forward(const Var& s_dn, const Var& s_cn, const Var& s_c) const {
  check(s_dn.rows() == s_c.rows() && s_cn.rows() == s_c.rows() && s_dn.cols() == s_c.cols() &&
            s_cn.cols() == s_c.cols(),
        "fusion: stream shapes differ");
  const Var all[] = {s_c, s_dn, s_cn};
  const Var others[] = {s_dn, s_cn};
  Var gate = ag::sigmoid(gate_(ag::concat_cols(all)));
  Var shift = ag::mul(gate, shift_(ag::concat_cols(others)));

  Var anchor = s_c;
  if (variant_ == FusionVariant::kMAG) {
    Var w = ag::softmax_rows(anchor_logits_);
    anchor = ag::scale_by(s_c, ag::slice_cols(w, 0, 1));
    anchor = ag::add(anchor, ag::scale_by(s_dn, ag::slice_cols(w, 1, 1)));
    anchor = ag::add(anchor, ag::scale_by(s_cn, ag::slice_cols(w, 2, 1)));
  }
  Var ratio = ag::div(ag::row_l2_norm(anchor), ag::add_scalar(ag::row_l2_norm(shift), kEpsilon));
  Var shift_scale = ag::clamp_max(ratio, 1.0);
  Var out = norm_(ag::add(anchor, ag::mul_col(shift, shift_scale)));
  return {out, anchor, shift, shift_scale};
}

// ------------------------------------------------------------------ model

NechoModel::NechoModel(const ModelConfig& config) : config_(config), store_(config.init_seed) {
  config_.validate();
  const int H = config_.hidden_dim;

  int rows = 0;
  for (int card : config_.demographic_cardinalities) {
    demo_offsets_.push_back(rows);
    rows += card + 1;  // last row of each field is its missing value
  }
  demo_table_ = store_.normal("demo.embedding", rows, H, kEmbeddingStd, ParamGroup::kBase);
  demo_proj_ = nn::Linear(store_, "demo.proj", H, H);

  const auto note_group = ParamGroup::kNoteEncoder;
  token_table_ =
      store_.normal("note.token_embedding", config_.note_vocab_size + 1, config_.note_dim, kEmbeddingStd, note_group);
  token_positions_ =
      store_.normal("note.position_embedding", config_.max_note_length, config_.note_dim, kEmbeddingStd, note_group);
  nn::TransformerOptions note_opts;
  note_opts.layers = config_.note_layers;
  note_opts.heads = config_.note_heads;
  note_opts.width = config_.note_dim;
  note_opts.ffn_width = config_.note_ffn_dim;
  note_opts.dropout = config_.dropout;
  note_opts.group = note_group;
  note_encoder_ = nn::TransformerEncoder(store_, "note.encoder", note_opts);
  note_proj_ = nn::Linear(store_, "note.proj", config_.note_dim, H);

  code_table_ = store_.normal("code.embedding", config_.unique_count + 1, H, kEmbeddingStd, ParamGroup::kBase);
  code_proj_ = nn::Linear(store_, "code.proj", H, H);

  visit_positions_ = nn::sinusoidal_positions(config_.max_visits, H);

  nn::TransformerOptions opts;
  opts.layers = config_.layers;
  opts.heads = config_.heads;
  opts.width = H;
  opts.ffn_width = config_.ffn_dim;
  opts.dropout = config_.dropout;
  opts.cross = true;
  cross_[kDemoToNote] = nn::TransformerEncoder(store_, "cmt.demo_note", opts);
  cross_[kCodeToNote] = nn::TransformerEncoder(store_, "cmt.code_note", opts);
  opts.cross = false;
  self_[kSelfDemoNote] = nn::TransformerEncoder(store_, "sat.demo_note", opts);
  self_[kSelfCodeNote] = nn::TransformerEncoder(store_, "sat.code_note", opts);
  self_[kSelfCode] = nn::TransformerEncoder(store_, "sat.code", opts);

  fusion_ = GatedFusion(store_, "fusion", H, config_.fusion);

  head_ = nn::Linear(store_, "head.category", H, config_.category_count);
  parent_heads_[0] = nn::Linear(store_, "head.parent_demo", H, config_.typing_count);
  parent_heads_[1] = nn::Linear(store_, "head.parent_note", H, config_.typing_count);
  parent_heads_[2] = nn::Linear(store_, "head.parent_code", H, config_.typing_count);
}

void NechoModel::freeze() {
  frozen_ = true;
  store_.set_requires_grad(false);
}

Var NechoModel::encode_demographics(std::span<const EncodedVisit> visits) const {
  const auto& cards = config_.demographic_cardinalities;
  std::vector<std::vector<int>> bags;
  bags.reserve(visits.size());
  for (const auto& v : visits) {
    check(v.demographics.size() == cards.size(), "encode_demographics: field count mismatch");
    std::vector<int> bag;
    for (std::size_t f = 0; f < cards.size(); ++f) {
      const int id = v.demographics[f];
      check(id >= 0 && id <= cards[f], "encode_demographics: field " + std::to_string(f) + " value " +
                                           std::to_string(id) + " exceeds its missing index");
      bag.push_back(demo_offsets_[f] + id);
    }
    bags.push_back(std::move(bag));
  }
  return demo_proj_(ag::embedding_bag_sum(demo_table_, bags));
}

Var NechoModel::encode_notes(std::span<const EncodedVisit> visits, const nn::ForwardContext& ctx) const {
  std::vector<std::vector<int>> token_rows;
  std::vector<std::vector<int>> position_rows;
  std::vector<ag::Segment> segments;
  std::vector<ag::AttentionSegment> attention;
  ag::Index at = 0;
  for (const auto& v : visits) {
    check(!v.note.empty(), "encode_notes: empty token sequence");
    check(v.note.size() <= static_cast<std::size_t>(config_.max_note_length), "encode_notes: note too long");
    const auto n = static_cast<ag::Index>(v.note.size());
    for (std::size_t i = 0; i < v.note.size(); ++i) {
      const int tok = v.note[i];
      check(tok >= 0 && tok <= config_.note_vocab_size, "encode_notes: token id out of range");
      token_rows.push_back({tok});
      position_rows.push_back({static_cast<int>(i)});
    }
    segments.push_back({at, n});
    attention.push_back({at, n, at, n});
    at += n;
  }
  Var x = ag::add(ag::embedding_bag_sum(token_table_, token_rows),
                  ag::embedding_bag_sum(token_positions_, position_rows));
  x = note_encoder_.forward(x, nullptr, attention, /*causal=*/false, ctx);
  return note_proj_(ag::segment_mean(x, segments));
}

Var NechoModel::encode_codes(std::span<const EncodedVisit> visits) const {
  std::vector<std::vector<int>> bags;
  bags.reserve(visits.size());
  for (const auto& v : visits) {
    check(!v.codes.empty(), "encode_codes: empty code set");
    for (int c : v.codes) check(c >= 0 && c <= config_.unique_count, "encode_codes: code id out of range");
    bags.push_back(v.codes);
  }
  return code_proj_(ag::embedding_bag_sum(code_table_, bags));
}

Var NechoModel::with_positions(const Var& reps, std::span<const int> position) const {
  ag::Matrix pe(reps.rows(), reps.cols());
  for (ag::Index r = 0; r < reps.rows(); ++r) {
    const int p = position[static_cast<std::size_t>(r)];
    check(p >= 0 && p < visit_positions_.rows(), "visit position exceeds max_visits");
    pe.row(r) = visit_positions_.row(p);
  }
  return ag::add(reps, ag::constant(std::move(pe)));
}

Var NechoModel::cross_modal_transform(int which, const Var& source, const Var& target,
                                      std::span<const ag::Segment> patients, const nn::ForwardContext& ctx) const {
  check(source.rows() == target.rows(), "cross_modal_transform: visit dimensions differ");
  const auto segs = causal_segments(patients);
  return cross_[which].forward(target, &source, segs, /*causal=*/true, ctx);
}

Var NechoModel::self_attention_transform(int which, const Var& reps, std::span<const ag::Segment> patients,
                                         const nn::ForwardContext& ctx) const {
  const auto segs = causal_segments(patients);
  return self_[which].forward(reps, nullptr, segs, /*causal=*/true, ctx);
}

RepresentationBundle NechoModel::forward(const ModelInput& input, const nn::ForwardContext& ctx) const {
  check(input.rows() > 0 && input.batch_size() > 0, "forward: no input visits");
  if (ctx.training) check(ctx.rng != nullptr, "forward: training mode needs an rng");
  std::mt19937_64 unused;
  std::mt19937_64& rng = ctx.rng != nullptr ? *ctx.rng : unused;

  RepresentationBundle b;
  b.r_demo = encode_demographics(input.visits);
  b.r_note = encode_notes(input.visits, ctx);
  b.r_code = encode_codes(input.visits);
  b.valid_visit_mask.assign(input.rows(), true);

  const Var demo_in = with_positions(b.r_demo, input.position);
  const Var note_in = with_positions(b.r_note, input.position);
  const Var code_in = with_positions(b.r_code, input.position);

  b.c_dn = cross_modal_transform(kDemoToNote, demo_in, note_in, input.patients, ctx);
  b.c_cn = cross_modal_transform(kCodeToNote, code_in, note_in, input.patients, ctx);
  b.s_dn = self_attention_transform(kSelfDemoNote, b.c_dn, input.patients, ctx);
  b.s_cn = self_attention_transform(kSelfCodeNote, b.c_cn, input.patients, ctx);
  b.s_c = self_attention_transform(kSelfCode, code_in, input.patients, ctx);
  b.fusion = fusion_.forward(b.s_dn, b.s_cn, b.s_c).output;

  const double p = config_.dropout;
  b.y_hat = head_(ag::dropout(ag::gather_rows(b.fusion, input.last_rows), p, ctx.training, rng));
  b.o_hat_demo = parent_heads_[0](ag::dropout(ag::gather_rows(b.r_demo, input.last_rows), p, ctx.training, rng));
  b.o_hat_note = parent_heads_[1](ag::dropout(ag::gather_rows(b.r_note, input.last_rows), p, ctx.training, rng));
  b.o_hat_code = parent_heads_[2](ag::dropout(ag::gather_rows(b.r_code, input.last_rows), p, ctx.training, rng));
  return b;
}

}  // namespace necho

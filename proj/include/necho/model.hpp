#pragma once

// The multimodal sequential diagnosis network shared by teacher and student:
// per-visit encoders for demographics, notes and codes; demo->note and
// code->note cross-modal transformers; three self-attention transformers;
// gated fusion (code-anchored for the teacher, floating anchor for the
// student); a category-level head and three typing-level parental heads.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "necho/autograd.hpp"
#include "necho/ehr_data.hpp"
#include "necho/nn.hpp"

namespace necho {

enum class FusionVariant { kCMAG, kMAG };
const char* fusion_name(FusionVariant v);
FusionVariant parse_fusion(const std::string& s);

struct ModelConfig {
  int hidden_dim = 128;
  double dropout = 0.1;
  int heads = 4;
  int layers = 3;
  int ffn_dim = 256;
  // Note encoder (small trainable stand-in for a pretrained clinical encoder).
  int note_dim = 32;
  int note_layers = 2;
  int note_heads = 4;
  int note_ffn_dim = 64;
  FusionVariant fusion = FusionVariant::kCMAG;
  std::uint64_t init_seed = 1;

  // Vocabulary sizes, copied from the dataset.
  int unique_count = 200;
  int category_count = 25;
  int typing_count = 5;
  std::vector<int> demographic_cardinalities = {2, 9, 5};
  int note_vocab_size = 500;
  int max_note_length = 32;
  int max_visits = 8;

  static ModelConfig for_dataset(const DatasetConfig& data, FusionVariant fusion);
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// A packed batch: the input visits (all but the last) of every patient laid
// out row by row, plus multi-hot targets from each patient's last visit.
struct ModelInput {
  std::vector<EncodedVisit> visits;        // one per row
  std::vector<ag::Segment> patients;       // row range of each patient
  std::vector<int> position;               // visit index within its patient
  std::vector<ag::Index> last_rows;        // last input row per patient
  ag::Matrix category_targets;             // [patients x category_count]
  ag::Matrix typing_targets;               // [patients x typing_count]
  std::vector<std::vector<int>> target_categories;

  std::size_t batch_size() const { return patients.size(); }
  std::size_t rows() const { return visits.size(); }
};

ModelInput build_input(std::span<const PatientRecord> records, const DatasetConfig& data,
                       const Ontology& ontology);

// Every intermediate the distillation objective reads. Per-visit arrays are
// [rows x hidden] over the packed batch; logits are [patients x classes].
struct RepresentationBundle {
  ag::Var r_demo, r_note, r_code;
  ag::Var c_dn, c_cn;
  ag::Var s_dn, s_cn, s_c;
  ag::Var fusion;
  ag::Var y_hat;
  ag::Var o_hat_demo, o_hat_note, o_hat_code;
  std::vector<bool> valid_visit_mask;

  const ag::Var& modality(Modality m) const;
  const ag::Var& parental(Modality m) const;
  RepresentationBundle detached() const;
};

struct FusionOutput {
  ag::Var output;
  ag::Var anchor;
  ag::Var shift;        // g * (U [S_dn ; S_cn])
  ag::Var shift_scale;  // per-row min(1, |anchor| / (|shift| + eps))
};

class GatedFusion {
 public:
  GatedFusion() = default;
  GatedFusion(nn::ParameterStore& store, const std::string& name, int hidden, FusionVariant variant);

  FusionOutput forward(const ag::Var& s_dn, const ag::Var& s_cn, const ag::Var& s_c) const;
  FusionVariant variant() const { return variant_; }

  static constexpr double kEpsilon = 1e-6;

 private:
  FusionVariant variant_ = FusionVariant::kCMAG;
  nn::Linear gate_;
  nn::Linear shift_;
  nn::LayerNorm norm_;
  ag::Var anchor_logits_;  // MAG only: softmax over (S_c, S_dn, S_cn)
};

class NechoModel {
 public:
  explicit NechoModel(const ModelConfig& config);
  NechoModel(const NechoModel&) = delete;
  NechoModel& operator=(const NechoModel&) = delete;

  RepresentationBundle forward(const ModelInput& input, const nn::ForwardContext& ctx) const;

  // Per-visit encoders. Row r of each result encodes visits[r].
  ag::Var encode_demographics(std::span<const EncodedVisit> visits) const;
  ag::Var encode_notes(std::span<const EncodedVisit> visits, const nn::ForwardContext& ctx) const;
  ag::Var encode_codes(std::span<const EncodedVisit> visits) const;

  ag::Var cross_modal_transform(int which, const ag::Var& source, const ag::Var& target,
                                std::span<const ag::Segment> patients, const nn::ForwardContext& ctx) const;
  ag::Var self_attention_transform(int which, const ag::Var& reps, std::span<const ag::Segment> patients,
                                   const nn::ForwardContext& ctx) const;
  const GatedFusion& fusion() const { return fusion_; }

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  bool frozen() const { return frozen_; }
  // A frozen model stops recording gradients for its parameters.
  void freeze();

  static constexpr int kDemoToNote = 0;
  static constexpr int kCodeToNote = 1;
  static constexpr int kSelfDemoNote = 0;
  static constexpr int kSelfCodeNote = 1;
  static constexpr int kSelfCode = 2;

 private:
  ag::Var with_positions(const ag::Var& reps, std::span<const int> position) const;

  ModelConfig config_;
  nn::ParameterStore store_;
  bool frozen_ = false;

  std::vector<int> demo_offsets_;
  ag::Var demo_table_;
  nn::Linear demo_proj_;

  ag::Var token_table_;
  ag::Var token_positions_;
  nn::TransformerEncoder note_encoder_;
  nn::Linear note_proj_;

  ag::Var code_table_;
  nn::Linear code_proj_;

  ag::Matrix visit_positions_;
  nn::TransformerEncoder cross_[2];
  nn::TransformerEncoder self_[3];
  GatedFusion fusion_;

  nn::Linear head_;
  nn::Linear parent_heads_[3];
};

std::vector<ag::AttentionSegment> causal_segments(std::span<const ag::Segment> patients);

}  // namespace necho

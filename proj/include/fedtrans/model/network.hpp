#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedtrans/data/record.hpp"
#include "fedtrans/model/config.hpp"
#include "fedtrans/model/parameters.hpp"
#include "fedtrans/numerics/attention.hpp"
#include "fedtrans/numerics/tape.hpp"
#include "fedtrans/tabular/encoding.hpp"

namespace fedtrans::model {

using numerics::Tape;
using numerics::Var;

struct OneHot {
  std::size_t index = 0;
};
struct Description {
  std::vector<double> vector;
};
/// How a treatment enters the treatment encoder.
using TreatmentInput = std::variant<OneHot, Description>;

/// Resolves treatment ids to encoder inputs. Without descriptions every id maps to its
/// one-hot code; with descriptions every id must have a vector of the configured width.
class TreatmentCatalog {
 public:
  explicit TreatmentCatalog(std::size_t treatments) : treatments_(treatments) {}
  TreatmentCatalog(std::size_t treatments, std::map<std::size_t, std::vector<double>> descriptions);

  TreatmentInput input(std::size_t treatment) const;
  std::size_t treatments() const { return treatments_; }
  bool uses_descriptions() const { return descriptions_.has_value(); }
  const std::optional<std::map<std::size_t, std::vector<double>>>& descriptions() const {
    return descriptions_;
  }

 private:
  std::size_t treatments_;
  std::optional<std::map<std::size_t, std::vector<double>>> descriptions_;
};

/// Row of the treatment-encoder input matrix for one treatment.
std::vector<double> treatment_input_row(const TreatmentInput& input, const ModelConfig& config);

/// A batch in the flat layout the forward pass consumes. Each record contributes `length`
/// token bags and `queries` treatment rows.
struct ModelBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t queries = 1;
  std::vector<numerics::EmbeddingBag> bags;  // batch * length
  std::vector<std::uint8_t> key_valid;       // batch * length
  Tensor treatment_inputs;                   // [batch * queries x treatment input width]
  Tensor targets;                            // [batch x 1]; factual batches only
};

/// Everything needed to turn a site's records into model inputs.
struct InputPipeline {
  tabular::DatasetSchema schema;
  tabular::Vocabulary vocabulary;
  tabular::Standardizer standardizer;
  TreatmentCatalog catalog{2};
  ModelConfig config;

  /// One query per record: its assigned treatment, target its factual outcome.
  ModelBatch factual_batch(std::span<const data::DataRecord> records) const;
  /// One query per listed arm for every record.
  ModelBatch arms_batch(std::span<const data::DataRecord> records,
                        std::span<const std::size_t> arms) const;
};

/// Parameter tensors placed on a tape, either tracked (gradients returned) or frozen.
class BoundParameters {
 public:
  BoundParameters() = default;
  BoundParameters(Tape& tape, const ParameterSet& values, bool track);
  Var operator[](const std::string& path) const;

 private:
  std::map<std::string, Var> vars_;
};

/// Attention maps of one forward pass.
struct AttentionMaps {
  /// Per encoder layer: [batch x heads_self x length x length].
  std::vector<Tensor> self_attention;
  /// Per cross layer: [batch x heads_cross x queries x length].
  std::vector<Tensor> cross_attention;
};

struct ForwardPass {
  Var token_states;  // [batch*length x d]
  Var treatment;     // [batch*queries x d]
  Var fused;         // [batch*queries x d]
  Var prediction;    // [batch*queries x 1]
  AttentionMaps attention;
};

// Tape-level blocks. Row layouts follow ModelBatch.

/// u = LN(x + SelfAttn(x)); out = LN(u + MLP(u)), stacked over the encoder layers.
Var covariate_encoder(Var embeddings, std::span<const std::uint8_t> key_valid, std::size_t batch,
                      std::size_t length, const BoundParameters& shared, const ModelConfig& config,
                      std::vector<Tensor>* attention = nullptr);
/// Two-layer ReLU MLP over one-hot rows, or over projected description rows.
Var treatment_encoder(Var inputs, const BoundParameters& shared, const ModelConfig& config);
/// Treatment rows query the token states; residual + LN + MLP + residual + LN per layer.
Var cross_attention(Var treatment, Var token_states, std::span<const std::uint8_t> key_valid,
                    std::size_t batch, std::size_t queries, std::size_t length,
                    const BoundParameters& shared, const ModelConfig& config,
                    std::vector<Tensor>* attention = nullptr);
/// W2 ReLU(W1 x + b1) + b2.
Var predictor(Var fused, const BoundParameters& head);

ForwardPass forward_batch(const ModelBatch& batch, const BoundParameters& shared,
                          const BoundParameters& head, const ModelConfig& config);

// Value-level forms of each block for a single record.

struct CovariateEncoding {
  Tensor states;                      // [L x d]
  std::vector<Tensor> self_attention; // per layer [heads x L x L]
};
CovariateEncoding covariate_encode(const tabular::TokenEmbeddingSequence& sequence,
                                   const SharedParameters& shared, const ModelConfig& config);

Tensor treatment_encode(const TreatmentInput& treatment, const SharedParameters& shared,
                        const ModelConfig& config);

struct CrossAttendResult {
  Tensor fused;                        // [d]
  std::vector<Tensor> cross_attention; // per cross layer [heads x 1 x L]
};
CrossAttendResult cross_attend(const Tensor& treatment_embedding, const Tensor& token_states,
                               const SharedParameters& shared, const ModelConfig& config,
                               std::span<const std::uint8_t> key_valid = {});

double predict(const Tensor& fused, const PredictorHead& head);

struct Prediction {
  double outcome = 0.0;
  CovariateEncoding covariates;
  std::vector<Tensor> cross_attention;
};
Prediction forward(const data::DataRecord& record, std::size_t treatment,
                   const SharedParameters& shared, const PredictorHead& head,
                   const InputPipeline& pipeline);

/// mu_hat [n x K]: every arm's predicted outcome for every record.
Tensor predict_potential_outcomes(std::span<const data::DataRecord> records,
                                  const SharedParameters& shared, const PredictorHead& head,
                                  const InputPipeline& pipeline, std::size_t chunk = 256);

/// Factual predictions [n] for each record's assigned arm.
std::vector<double> predict_factual(std::span<const data::DataRecord> records,
                                    const SharedParameters& shared, const PredictorHead& head,
                                    const InputPipeline& pipeline, std::size_t chunk = 256);

}  // namespace fedtrans::model

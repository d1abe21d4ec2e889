#include "fedtrans/model/network.hpp"

#include <algorithm>
#include <numeric>

#include "fedtrans/errors.hpp"
#include "fedtrans/numerics/ops.hpp"

namespace fedtrans::model {

using numerics::AttentionLayout;
using numerics::AttentionVars;

TreatmentCatalog::TreatmentCatalog(std::size_t treatments,
                                   std::map<std::size_t, std::vector<double>> descriptions)
    : treatments_(treatments), descriptions_(std::move(descriptions)) {
  std::optional<std::size_t> width;
  for (const auto& [id, vec] : *descriptions_) {
    if (width && vec.size() != *width) {
      throw ConfigurationError("treatment descriptions disagree on width");
    }
    width = vec.size();
  }
}

TreatmentInput TreatmentCatalog::input(std::size_t treatment) const {
  if (treatment >= treatments_) {
    throw ContractError("treatment " + std::to_string(treatment) + " outside [0, " +
                        std::to_string(treatments_) + ")");
  }
  if (!descriptions_) return OneHot{treatment};
  auto it = descriptions_->find(treatment);
  if (it == descriptions_->end()) {
    throw ConfigurationError("no description vector for treatment " + std::to_string(treatment));
  }
  return Description{it->second};
}

std::vector<double> treatment_input_row(const TreatmentInput& input, const ModelConfig& config) {
  if (const auto* one_hot = std::get_if<OneHot>(&input)) {
    if (config.description_dim) {
      throw ConfigurationError("model expects description vectors, got a one-hot treatment");
    }
    if (one_hot->index >= config.treatments) {
      throw ContractError("one-hot index " + std::to_string(one_hot->index) + " outside [0, " +
                          std::to_string(config.treatments) + ")");
    }
    std::vector<double> row(config.treatments, 0.0);
    row[one_hot->index] = 1.0;
    return row;
  }
  const auto& desc = std::get<Description>(input).vector;
  if (!config.description_dim) {
    throw ConfigurationError("description vector supplied but description_dim is not configured");
  }
  if (desc.size() != *config.description_dim) {
    throw DimensionError("description vector has width " + std::to_string(desc.size()) +
                         ", expected " + std::to_string(*config.description_dim));
  }
  return desc;
}

namespace {

ModelBatch token_batch(const InputPipeline& p, std::span<const data::DataRecord> records) {
  if (records.empty()) throw EmptyInputError("cannot build a model batch from zero records");
  ModelBatch mb;
  mb.batch = records.size();
  mb.length = p.schema.features.size() + 1;
  mb.bags.reserve(mb.batch * mb.length);
  for (const auto& r : records) {
    auto bags = tabular::record_bags(r, p.schema, p.vocabulary, p.standardizer);
    for (auto& b : bags) mb.bags.push_back(std::move(b));
  }
  mb.key_valid.assign(mb.batch * mb.length, 1);
  return mb;
}

void fill_treatment_rows(ModelBatch& mb, const InputPipeline& p,
                         const std::vector<std::size_t>& treatments) {
  const std::size_t width = p.config.treatment_input_width();
  mb.treatment_inputs = Tensor({treatments.size(), width});
  for (std::size_t i = 0; i < treatments.size(); ++i) {
    const auto row = treatment_input_row(p.catalog.input(treatments[i]), p.config);
    std::copy(row.begin(), row.end(), mb.treatment_inputs.raw() + i * width);
  }
}

AttentionVars attention_vars(const BoundParameters& params, const std::string& prefix) {
  auto v = [&](const char* name) { return params[prefix + name]; };
  return {v("wq"), v("bq"), v("wk"), v("bk"), v("wv"), v("bv"), v("wo"), v("bo")};
}

Var mlp(Var x, const BoundParameters& params, const std::string& prefix) {
  Var h = numerics::relu(numerics::linear(x, params[prefix + "w1"], params[prefix + "b1"]));
  return numerics::linear(h, params[prefix + "w2"], params[prefix + "b2"]);
}

Var norm(Var x, const BoundParameters& params, const std::string& prefix, double eps) {
  return numerics::layer_norm(x, params[prefix + "gain"], params[prefix + "shift"], eps);
}

// Post-norm transformer block whose attention reads `context` through `query`.
Var block(Var query, Var context, const AttentionLayout& layout,
          std::span<const std::uint8_t> mask, const BoundParameters& params,
          const std::string& prefix, double eps, std::vector<Tensor>* attention) {
  auto attended = numerics::multi_head_attention(query, context, context,
                                                 attention_vars(params, prefix + "attn."),
                                                 layout, mask);
  if (attention) attention->push_back(std::move(attended.weights));
  Var u = norm(numerics::add(query, attended.output), params, prefix + "ln1.", eps);
  return norm(numerics::add(u, mlp(u, params, prefix + "mlp.")), params, prefix + "ln2.", eps);
}

bool all_valid(std::span<const std::uint8_t> key_valid) {
  return std::all_of(key_valid.begin(), key_valid.end(), [](auto v) { return v != 0; });
}

}  // namespace

ModelBatch InputPipeline::factual_batch(std::span<const data::DataRecord> records) const {
  ModelBatch mb = token_batch(*this, records);
  std::vector<std::size_t> treatments;
  mb.targets = Tensor({records.size(), 1});
  for (std::size_t i = 0; i < records.size(); ++i) {
    treatments.push_back(records[i].treatment);
    mb.targets[i] = records[i].outcome;
  }
  fill_treatment_rows(mb, *this, treatments);
  return mb;
}

ModelBatch InputPipeline::arms_batch(std::span<const data::DataRecord> records,
                                     std::span<const std::size_t> arms) const {
  if (arms.empty()) throw EmptyInputError("arms_batch needs at least one arm");
  ModelBatch mb = token_batch(*this, records);
  mb.queries = arms.size();
  std::vector<std::size_t> treatments;
  for (std::size_t i = 0; i < records.size(); ++i) {
    treatments.insert(treatments.end(), arms.begin(), arms.end());
  }
  fill_treatment_rows(mb, *this, treatments);
  return mb;
}

BoundParameters::BoundParameters(Tape& tape, const ParameterSet& values, bool track) {
  for (const auto& [path, value] : values) {
    vars_.emplace(path, track ? tape.parameter(path, value) : tape.constant(value));
  }
}

Var BoundParameters::operator[](const std::string& path) const {
  auto it = vars_.find(path);
  if (it == vars_.end()) throw ContractError("parameter " + path + " is not bound");
  return it->second;
}

Var covariate_encoder(Var embeddings, std::span<const std::uint8_t> key_valid, std::size_t batch,
                      std::size_t length, const BoundParameters& shared, const ModelConfig& config,
                      std::vector<Tensor>* attention) {
  if (embeddings.value().rank() != 2 || embeddings.value().dim(1) != config.embedding_width) {
    throw ConfigurationError("covariate encoder expects width " +
                             std::to_string(config.embedding_width) + ", got " +
                             numerics::shape_to_string(embeddings.shape()));
  }
  const AttentionLayout layout{batch, length, length, config.heads_self};
  numerics::AttentionMask mask;
  if (!key_valid.empty() && !all_valid(key_valid)) {
    mask = numerics::key_padding_mask(key_valid, batch, length, length);
  }
  Var x = embeddings;
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    x = block(x, x, layout, mask, shared, covariate_layer_prefix(l), config.layer_norm_eps,
              attention);
  }
  return x;
}

Var treatment_encoder(Var inputs, const BoundParameters& shared, const ModelConfig& config) {
  Var x = inputs;
  if (config.description_dim) {
    x = numerics::linear(x, shared["treatment.project.w"], shared["treatment.project.b"]);
  }
  return mlp(x, shared, "treatment.mlp.");
}

Var cross_attention(Var treatment, Var token_states, std::span<const std::uint8_t> key_valid,
                    std::size_t batch, std::size_t queries, std::size_t length,
                    const BoundParameters& shared, const ModelConfig& config,
                    std::vector<Tensor>* attention) {
  const AttentionLayout layout{batch, queries, length, config.heads_cross};
  numerics::AttentionMask mask;
  if (!key_valid.empty() && !all_valid(key_valid)) {
    mask = numerics::key_padding_mask(key_valid, batch, queries, length);
  }
  Var q = treatment;
  for (std::size_t l = 0; l < config.cross_layers; ++l) {
    q = block(q, token_states, layout, mask, shared, cross_layer_prefix(l),
              config.layer_norm_eps, attention);
  }
  return q;
}

Var predictor(Var fused, const BoundParameters& head) { return mlp(fused, head, "predictor."); }

ForwardPass forward_batch(const ModelBatch& batch, const BoundParameters& shared,
                          const BoundParameters& head, const ModelConfig& config) {
  Var table = shared["covariate.embedding"];
  Tape& tape = table.tape();
  if (batch.bags.size() != batch.batch * batch.length ||
      batch.treatment_inputs.rank() != 2 ||
      batch.treatment_inputs.dim(0) != batch.batch * batch.queries) {
    throw DimensionError("model batch is internally inconsistent");
  }
  ForwardPass pass;
  Var embeddings = numerics::embedding_bag(table, batch.bags);
  pass.token_states = covariate_encoder(embeddings, batch.key_valid, batch.batch, batch.length,
                                        shared, config, &pass.attention.self_attention);
  pass.treatment = treatment_encoder(tape.constant(batch.treatment_inputs), shared, config);
  pass.fused = cross_attention(pass.treatment, pass.token_states, batch.key_valid, batch.batch,
                               batch.queries, batch.length, shared, config,
                               &pass.attention.cross_attention);
  pass.prediction = predictor(pass.fused, head);
  return pass;
}

CovariateEncoding covariate_encode(const tabular::TokenEmbeddingSequence& sequence,
                                   const SharedParameters& shared, const ModelConfig& config) {
  Tape tape;
  BoundParameters params(tape, shared.values, false);
  CovariateEncoding out;
  std::vector<Tensor> maps;
  const std::size_t L = sequence.length();
  Var states = covariate_encoder(tape.constant(sequence.embeddings), sequence.mask, 1, L, params,
                                 config, &maps);
  out.states = states.value();
  for (auto& m : maps) out.self_attention.push_back(m.reshaped({config.heads_self, L, L}));
  return out;
}

Tensor treatment_encode(const TreatmentInput& treatment, const SharedParameters& shared,
                        const ModelConfig& config) {
  const auto row = treatment_input_row(treatment, config);
  Tape tape;
  BoundParameters params(tape, shared.values, false);
  Var out = treatment_encoder(tape.constant(Tensor({1, row.size()}, row)), params, config);
  return out.value().reshaped({config.embedding_width});
}

CrossAttendResult cross_attend(const Tensor& treatment_embedding, const Tensor& token_states,
                               const SharedParameters& shared, const ModelConfig& config,
                               std::span<const std::uint8_t> key_valid) {
  const std::size_t d = config.embedding_width;
  if (treatment_embedding.size() != d || token_states.rank() != 2 || token_states.dim(1) != d) {
    throw DimensionError("cross_attend: treatment " +
                         numerics::shape_to_string(treatment_embedding.shape()) + " and tokens " +
                         numerics::shape_to_string(token_states.shape()) +
                         " do not match width " + std::to_string(d));
  }
  const std::size_t L = token_states.dim(0);
  if (!key_valid.empty() && key_valid.size() != L) {
    throw DimensionError("cross_attend: mask length does not match the token count");
  }
  Tape tape;
  BoundParameters params(tape, shared.values, false);
  std::vector<Tensor> maps;
  Var fused = cross_attention(tape.constant(treatment_embedding.reshaped({1, d})),
                              tape.constant(token_states), key_valid, 1, 1, L, params, config,
                              &maps);
  CrossAttendResult out;
  out.fused = fused.value().reshaped({d});
  for (auto& m : maps) out.cross_attention.push_back(m.reshaped({config.heads_cross, 1, L}));
  return out;
}

double predict(const Tensor& fused, const PredictorHead& head) {
  Tape tape;
  BoundParameters params(tape, head.values, false);
  const std::size_t d = head.at("predictor.w1").dim(0);
  if (fused.size() != d) {
    throw DimensionError("predict: input has " + std::to_string(fused.size()) +
                         " entries, head expects " + std::to_string(d));
  }
  return predictor(tape.constant(fused.reshaped({1, d})), params).value().item();
}

Prediction forward(const data::DataRecord& record, std::size_t treatment,
                   const SharedParameters& shared, const PredictorHead& head,
                   const InputPipeline& pipeline) {
  const std::size_t arms[] = {treatment};
  const ModelBatch mb = pipeline.arms_batch(std::span(&record, 1), arms);
  Tape tape;
  BoundParameters sp(tape, shared.values, false), hp(tape, head.values, false);
  ForwardPass pass = forward_batch(mb, sp, hp, pipeline.config);
  const std::size_t L = mb.length;
  Prediction out;
  out.outcome = pass.prediction.value().item();
  out.covariates.states = pass.token_states.value();
  for (auto& m : pass.attention.self_attention) {
    out.covariates.self_attention.push_back(m.reshaped({pipeline.config.heads_self, L, L}));
  }
  for (auto& m : pass.attention.cross_attention) {
    out.cross_attention.push_back(m.reshaped({pipeline.config.heads_cross, 1, L}));
  }
  return out;
}

Tensor predict_potential_outcomes(std::span<const data::DataRecord> records,
                                  const SharedParameters& shared, const PredictorHead& head,
                                  const InputPipeline& pipeline, std::size_t chunk) {
  const std::size_t K = pipeline.config.treatments;
  std::vector<std::size_t> arms(K);
  std::iota(arms.begin(), arms.end(), 0);
  Tensor out({records.size(), K});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    const auto part = records.subspan(start, std::min(chunk, records.size() - start));
    const ModelBatch mb = pipeline.arms_batch(part, arms);
    Tape tape;
    BoundParameters sp(tape, shared.values, false), hp(tape, head.values, false);
    const Tensor& pred = forward_batch(mb, sp, hp, pipeline.config).prediction.value();
    std::copy(pred.raw(), pred.raw() + pred.size(), out.raw() + start * K);
  }
  return out;
}

std::vector<double> predict_factual(std::span<const data::DataRecord> records,
                                    const SharedParameters& shared, const PredictorHead& head,
                                    const InputPipeline& pipeline, std::size_t chunk) {
  std::vector<double> out;
  out.reserve(records.size());
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    const auto part = records.subspan(start, std::min(chunk, records.size() - start));
    const ModelBatch mb = pipeline.factual_batch(part);
    Tape tape;
    BoundParameters sp(tape, shared.values, false), hp(tape, head.values, false);
    const Tensor& pred = forward_batch(mb, sp, hp, pipeline.config).prediction.value();
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

}  // namespace fedtrans::model

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "a2q/a2q_op.hpp"
#include "a2q/accsim.hpp"
#include "a2q/dataset.hpp"
#include "a2q/tensor.hpp"

// Small deterministic QAT harness: linear classifiers and MLPs with manual
// backpropagation, trained either with the standard per-channel weight
// quantizer or with the accumulator-aware one.
namespace a2q::train {

enum class Architecture { Linear, MLP };
enum class ActivationKind { ReluUnsigned, IdentitySigned };

struct ModelConfig {
  Architecture architecture = Architecture::Linear;
  std::vector<int> hidden_sizes;  // MLP only
  int num_features = 0;
  int num_classes = 2;
  int weight_bits = 8;      // M
  int activation_bits = 8;  // N of hidden activations
  std::optional<int> acc_bits;  // P; absent means baseline QAT
  int input_bits = 1;           // N of the model input
  bool input_signed = false;
  ActivationKind activation_kind = ActivationKind::ReluUnsigned;
  // First and last layers use 8-bit weights and an unconstrained accumulator.
  bool pin_io_layers = false;
  // Channels whose initial norm exceeds the cap. Keep is for studying the
  // regularizer.
  op::InitCap init_cap = op::InitCap::RaiseScale;

  bool is_a2q() const { return acc_bits.has_value(); }
  void validate() const;
};

struct LrSchedule {
  enum class Kind { Constant, StepDecay } kind = Kind::Constant;
  double factor = 1.0;
  int period = 1;

  double rate(double base, int epoch) const;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  int epochs = 10;
  int batch_size = 64;
  double lambda = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  LrSchedule schedule;

  void validate() const;
};

struct Metrics {
  double top1_accuracy = 0.0;
  double sparsity = 0.0;
  double task_loss = 0.0;
  double reg_loss = 0.0;
};

// Per-layer quantization layout derived from ModelConfig.
struct LayerSpec {
  int in_features = 0;
  int out_features = 0;
  int weight_bits = 8;
  int input_bits = 8;
  bool input_signed = false;
  std::optional<int> acc_bits;  // A2Q target width
  bool pinned = false;
};

// Standard QAT weights: w_fake = 2^d * clip(round_half(w / 2^d); n, p).
struct BaselineWeights {
  RealMatrix w;
  std::vector<double> d;
};

struct Layer {
  LayerSpec spec;
  std::variant<BaselineWeights, op::A2QLayerParams> weights;
  std::vector<double> bias;

  bool is_a2q() const { return std::holds_alternative<op::A2QLayerParams>(weights); }
};

// Power-of-two activation quantizer calibrated by a running max.
struct ActQuant {
  int bits = 8;
  bool is_signed = false;
  int log2_scale = 0;
  double running_max = 0.0;
  bool calibrated = false;

  double scale() const;
  quant::IntRange range() const { return {bits, is_signed}; }
  void observe(double batch_max);
};

struct Model {
  ModelConfig config;
  std::vector<Layer> layers;
  std::vector<ActQuant> activations;  // one per hidden layer
};

std::vector<LayerSpec> layer_specs(const ModelConfig& config);

// Uniform(-1/sqrt(K), 1/sqrt(K)) weights, zero bias, scales from max |w|.
Model make_model(const ModelConfig& config, std::uint64_t seed);

// Quantized weights of one layer in codes-and-scales form.
struct LayerQuant {
  RealMatrix codes;
  std::vector<double> scales;
  RealMatrix w_fake;
  std::vector<std::uint8_t> in_range;
  std::optional<op::A2QForward> a2q;

  IntMatrix int_codes() const;
};

// surrogate = true swaps every rounding for the identity, giving the smooth
// function the straight-through gradients differentiate.
LayerQuant quantize_layer(const Layer& layer, bool surrogate = false);

struct ForwardOptions {
  bool surrogate = false;
  bool update_act_stats = false;
};

struct ForwardCache {
  std::vector<RealMatrix> inputs;  // input activations of each layer
  std::vector<LayerQuant> weights;
  std::vector<std::vector<std::uint8_t>> act_in_range;
  RealMatrix logits;
};

// Fake-quantized forward pass. update_act_stats mutates the activation
// calibration, hence the non-const overload.
ForwardCache forward(Model& model, const RealMatrix& batch, const ForwardOptions& options);
ForwardCache forward(const Model& model, const RealMatrix& batch, bool surrogate = false);

struct LayerGrads {
  RealMatrix dweights;     // dL/dw (baseline) or dL/dv (A2Q)
  std::vector<double> dt;  // A2Q only
  std::vector<double> dd;
  std::vector<double> dbias;
};

struct LossGrads {
  double total = 0.0;
  double task = 0.0;
  double reg = 0.0;
  std::vector<LayerGrads> grads;
};

double softmax_cross_entropy(const RealMatrix& logits, std::span<const int> labels);

// total = mean cross-entropy + lambda * sum_l R_l, with gradients through
// the clipped straight-through estimator.
LossGrads loss_and_backward(const Model& model, const ForwardCache& cache,
                            std::span<const int> labels, double lambda);

enum class ParamKind { Weight, Direction, LogNorm, LogScale, Bias };

struct ParamRef {
  double* value;
  ParamKind kind;
  std::size_t layer;
};

// Flat views over every trainable scalar; gradient_values uses the same order.
std::vector<ParamRef> parameters(Model& model);
std::vector<double> gradient_values(const Model& model, const LossGrads& grads);

// p -= lr * (g + weight_decay * p), with decay applied to weights and
// directions only.
void sgd_step(Model& model, const LossGrads& grads, double lr, double weight_decay);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Model model;
  std::vector<Metrics> history;  // one entry per epoch
};

// Called after each epoch with (epoch, metrics).
using EpochLogger = std::function<void(int, const Metrics&)>;

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& train_set, const Dataset* eval_set = nullptr,
                  const EpochLogger& logger = {});

// Continues training an existing model.
TrainResult train(Model model, const TrainConfig& train_config, const Dataset& train_set,
                  const Dataset* eval_set = nullptr, const EpochLogger& logger = {},
                  const std::function<void(const Model&)>& after_step = {});

RealMatrix to_real(const IntMatrix& codes, double scale = 1.0);

// Fake-quantized metrics (accuracy, loss, penalty, sparsity).
Metrics measure(const Model& model, const Dataset& data, double lambda);

struct IntegerPass {
  IntMatrix final_acc;  // raw accumulator values of the last layer
  RealMatrix logits;
  accsim::SimReport report;  // counts summed over layers
};

// True integer inference: each layer accumulates integer codes through the
// simulator; accumulator values are rescaled, biased and requantized
// between layers. Pinned layers always use a 32-bit register.
IntegerPass integer_forward(const Model& model, const IntMatrix& inputs, int acc_bits,
                            accsim::AccMode mode, std::span<const std::size_t> order = {},
                            accsim::Placement placement = accsim::Placement::InnerLoop);

struct EvalResult {
  Metrics metrics;
  accsim::SimReport report;
  RealMatrix logits;
};

// Integer inference at acc_bits (32 when absent); logit_mae is measured on
// the last layer's accumulator against an Exact pass.
EvalResult evaluate(const Model& model, const Dataset& data, std::optional<int> acc_bits,
                    accsim::AccMode mode, double lambda = 0.0);

// Fraction of zero integer weight codes over the accumulator-constrained
// layers (all layers when none are pinned).
double sparsity(const Model& model);

double accuracy(const RealMatrix& logits, std::span<const int> labels);

std::vector<op::A2QLayerParams> a2q_layers(const Model& model);

}  // namespace a2q::train

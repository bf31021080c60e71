#include "a2q/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "a2q/linalg.hpp"

namespace a2q::train {

namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr std::size_t kEvalChunk = 1024;
constexpr int kUnconstrainedAccBits = 32;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double weight_qmax(int bits) { return std::max(std::exp2(bits - 1) - 1.0, 1.0); }

RealMatrix gather_rows(const IntMatrix& X, std::span<const std::size_t> rows) {
  RealMatrix out(rows.size(), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = X.row(rows[r]);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < X.cols(); ++c) dst[c] = static_cast<double>(src[c]);
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  return idx;
}

double batch_max(const RealMatrix& z, bool is_signed) {
  double m = 0.0;
  for (double v : z.data()) m = std::max(m, is_signed ? std::fabs(v) : v);
  return m;
}

bool constrained(const Layer& layer) { return !layer.spec.pinned; }

}  // namespace

void ModelConfig::validate() const {
  if (num_features < 1) throw std::invalid_argument("ModelConfig: num_features must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
  if (architecture == Architecture::MLP && hidden_sizes.empty()) {
    throw std::invalid_argument("ModelConfig: MLP needs at least one hidden layer");
  }
  for (int h : hidden_sizes) {
    if (h < 1) throw std::invalid_argument("ModelConfig: hidden sizes must be >= 1");
  }
  if (weight_bits < 1 || weight_bits > 32) throw std::invalid_argument("ModelConfig: weight bits");
  if (activation_bits < 1 || activation_bits > 32) {
    throw std::invalid_argument("ModelConfig: activation bits");
  }
  if (input_bits < 1 || input_bits > 32) throw std::invalid_argument("ModelConfig: input bits");
  if (acc_bits && (*acc_bits < 2 || *acc_bits > 64)) {
    throw std::invalid_argument("ModelConfig: accumulator width must lie in [2, 64]");
  }
}

double LrSchedule::rate(double base, int epoch) const {
  if (kind == Kind::Constant) return base;
  return base * std::pow(factor, epoch / std::max(period, 1));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
}

double ActQuant::scale() const { return std::ldexp(1.0, log2_scale); }

void ActQuant::observe(double m) {
  running_max = calibrated ? 0.9 * running_max + 0.1 * m : m;
  calibrated = true;
  const double qmax = static_cast<double>(range().max());
  log2_scale = running_max > 0.0 ? static_cast<int>(std::ceil(std::log2(running_max / qmax))) : 0;
}

std::vector<LayerSpec> layer_specs(const ModelConfig& config) {
  config.validate();
  std::vector<int> sizes{config.num_features};
  if (config.architecture == Architecture::MLP) {
    sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
  }
  sizes.push_back(config.num_classes);
  const std::size_t L = sizes.size() - 1;
  std::vector<LayerSpec> specs(L);
  for (std::size_t l = 0; l < L; ++l) {
    auto& s = specs[l];
    s.in_features = sizes[l];
    s.out_features = sizes[l + 1];
    s.input_bits = l == 0 ? config.input_bits : config.activation_bits;
    s.input_signed =
        l == 0 ? config.input_signed : config.activation_kind == ActivationKind::IdentitySigned;
    s.pinned = config.pin_io_layers && L > 1 && (l == 0 || l == L - 1);
    s.weight_bits = s.pinned ? 8 : config.weight_bits;
    if (!s.pinned) s.acc_bits = config.acc_bits;
  }
  return specs;
}

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  Model model;
  model.config = config;
  std::mt19937_64 rng(seed);
  const auto specs = layer_specs(config);
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& spec = specs[l];
    const double a = 1.0 / std::sqrt(static_cast<double>(spec.in_features));
    RealMatrix W(spec.out_features, spec.in_features);
    for (double& w : W.data()) w = (2.0 * uniform01(rng) - 1.0) * a;
    Layer layer{spec, BaselineWeights{}, std::vector<double>(spec.out_features, 0.0)};
    if (spec.acc_bits) {
      layer.weights = op::init_from_weights(W, spec.weight_bits, *spec.acc_bits, spec.input_bits,
                                            spec.input_signed, config.init_cap);
    } else {
      BaselineWeights b{W, std::vector<double>(W.rows())};
      for (std::size_t c = 0; c < W.rows(); ++c) {
        double mx = 0.0;
        for (double w : W.row(c)) mx = std::max(mx, std::fabs(w));
        b.d[c] = std::log2(std::max(mx, 1e-8) / weight_qmax(spec.weight_bits));
      }
      layer.weights = std::move(b);
    }
    model.layers.push_back(std::move(layer));
    if (l + 1 < specs.size()) {
      model.activations.push_back(ActQuant{
          config.activation_bits, config.activation_kind == ActivationKind::IdentitySigned});
    }
  }
  return model;
}

IntMatrix LayerQuant::int_codes() const {
  IntMatrix out(codes.rows(), codes.cols());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double c = codes.data()[i];
    if (c != std::trunc(c)) throw std::logic_error("int_codes: surrogate codes are not integral");
    out.data()[i] = static_cast<std::int64_t>(c);
  }
  return out;
}

LayerQuant quantize_layer(const Layer& layer, bool surrogate) {
  LayerQuant q;
  if (const auto* p = std::get_if<op::A2QLayerParams>(&layer.weights)) {
    auto f = op::quantize_weights(
        *p, {surrogate ? quant::Rounding::None : quant::Rounding::TowardZero, true});
    q.codes = f.codes;
    q.scales = f.s;
    q.w_fake = f.w_fake;
    q.in_range = f.in_range;
    q.a2q = std::move(f);
    return q;
  }
  const auto& b = std::get<BaselineWeights>(layer.weights);
  const std::size_t C = b.w.rows(), K = b.w.cols();
  const double lo = -std::exp2(layer.spec.weight_bits - 1);
  const double hi = std::exp2(layer.spec.weight_bits - 1) - 1.0;
  q.codes = RealMatrix(C, K);
  q.w_fake = RealMatrix(C, K);
  q.scales.resize(C);
  q.in_range.assign(C * K, 0);
  for (std::size_t c = 0; c < C; ++c) {
    const double s = std::exp2(b.d[c]);
    q.scales[c] = s;
    for (std::size_t k = 0; k < K; ++k) {
      const double z = b.w(c, k) / s;
      const double r =
          surrogate ? z : static_cast<double>(quant::round_value(z, quant::Rounding::HalfWay));
      q.in_range[c * K + k] = r >= lo && r <= hi;
      q.codes(c, k) = std::clamp(r, lo, hi);
      q.w_fake(c, k) = q.codes(c, k) * s;
    }
  }
  return q;
}

namespace {

ForwardCache forward_impl(const Model& model, std::vector<ActQuant>* stats, const RealMatrix& batch,
                          bool surrogate) {
  const std::size_t L = model.layers.size();
  if (batch.cols() != static_cast<std::size_t>(model.layers.front().spec.in_features)) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " features, model expects " +
                                std::to_string(model.layers.front().spec.in_features));
  }
  ForwardCache cache;
  cache.inputs.reserve(L);
  cache.weights.reserve(L);
  RealMatrix A = batch;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = model.layers[l];
    auto lq = quantize_layer(layer, surrogate);
    RealMatrix z = linalg::gemm_nt(A, lq.codes);
    for (std::size_t b = 0; b < z.rows(); ++b) {
      auto row = z.row(b);
      for (std::size_t c = 0; c < z.cols(); ++c) row[c] = row[c] * lq.scales[c] + layer.bias[c];
    }
    cache.inputs.push_back(std::move(A));
    cache.weights.push_back(std::move(lq));
    if (l + 1 == L) {
      cache.logits = std::move(z);
      break;
    }
    const ActQuant* act = &model.activations[l];
    if (stats) {
      (*stats)[l].observe(batch_max(z, (*stats)[l].is_signed));
      act = &(*stats)[l];
    }
    if (!act->calibrated) throw std::logic_error("forward: activation quantizer not calibrated");
    const double s = act->scale();
    const auto range = act->range();
    const double lo = static_cast<double>(range.min());
    const double hi = static_cast<double>(range.max());
    std::vector<std::uint8_t> mask(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double scaled = z.data()[i] / s;
      const double r = surrogate ? scaled
                                 : static_cast<double>(quant::round_value(scaled, quant::Rounding::HalfWay));
      mask[i] = r >= lo && r <= hi;
      z.data()[i] = std::clamp(r, lo, hi) * s;
    }
    cache.act_in_range.push_back(std::move(mask));
    A = std::move(z);
  }
  return cache;
}

}  // namespace

ForwardCache forward(Model& model, const RealMatrix& batch, const ForwardOptions& options) {
  return forward_impl(model, options.update_act_stats ? &model.activations : nullptr, batch,
                      options.surrogate);
}

ForwardCache forward(const Model& model, const RealMatrix& batch, bool surrogate) {
  return forward_impl(model, nullptr, batch, surrogate);
}

double softmax_cross_entropy(const RealMatrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw std::invalid_argument("cross entropy: label count");
  double total = 0.0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    total += std::log(sum) + mx - row[static_cast<std::size_t>(labels[b])];
  }
  return logits.rows() == 0 ? 0.0 : total / static_cast<double>(logits.rows());
}

std::vector<op::A2QLayerParams> a2q_layers(const Model& model) {
  std::vector<op::A2QLayerParams> out;
  for (const auto& layer : model.layers) {
    if (const auto* p = std::get_if<op::A2QLayerParams>(&layer.weights)) out.push_back(*p);
  }
  return out;
}

LossGrads loss_and_backward(const Model& model, const ForwardCache& cache,
                            std::span<const int> labels, double lambda) {
  const RealMatrix& logits = cache.logits;
  const std::size_t B = logits.rows();
  const std::size_t L = model.layers.size();
  if (labels.size() != B) throw std::invalid_argument("loss_and_backward: label count");

  LossGrads out;
  out.task = softmax_cross_entropy(logits, labels);
  const auto a2q = a2q_layers(model);
  out.reg = op::regularization_penalty(a2q);
  out.total = out.task + lambda * out.reg;
  out.grads.resize(L);

  RealMatrix dz(B, logits.cols());
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double p = std::exp(row[c] - mx) / sum;
      dz(b, c) = (p - (static_cast<int>(c) == labels[b] ? 1.0 : 0.0)) / static_cast<double>(B);
    }
  }

  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = model.layers[li];
    const auto& lq = cache.weights[li];
    const RealMatrix& A = cache.inputs[li];
    auto& g = out.grads[li];

    const RealMatrix dw_fake = linalg::gemm_tn(dz, A);
    g.dbias.assign(dz.cols(), 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < dz.cols(); ++c) g.dbias[c] += dz(b, c);

    if (const auto* p = std::get_if<op::A2QLayerParams>(&layer.weights)) {
      auto ag = op::a2q_backward(dw_fake, *p, *lq.a2q);
      op::accumulate_penalty_gradient(*p, lambda, ag);
      g.dweights = std::move(ag.dv);
      g.dt = std::move(ag.dt);
      g.dd = std::move(ag.dd);
    } else {
      const std::size_t C = dw_fake.rows(), K = dw_fake.cols();
      g.dweights = RealMatrix(C, K);
      g.dd.assign(C, 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k) {
          if (lq.in_range[c * K + k]) {
            g.dweights(c, k) = dw_fake(c, k);
          } else {
            g.dd[c] += dw_fake(c, k) * lq.w_fake(c, k) * kLn2;
          }
        }
      }
    }

    if (li == 0) break;
    RealMatrix da = linalg::gemm_nn(dz, lq.w_fake);
    const auto& mask = cache.act_in_range[li - 1];
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (!mask[i]) da.data()[i] = 0.0;
    }
    dz = std::move(da);
  }
  return out;
}

std::vector<ParamRef> parameters(Model& model) {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    if (auto* p = std::get_if<op::A2QLayerParams>(&layer.weights)) {
      for (double& x : p->v.data()) out.push_back({&x, ParamKind::Direction, l});
      for (double& x : p->t) out.push_back({&x, ParamKind::LogNorm, l});
      for (double& x : p->d) out.push_back({&x, ParamKind::LogScale, l});
    } else {
      auto& b = std::get<BaselineWeights>(layer.weights);
      for (double& x : b.w.data()) out.push_back({&x, ParamKind::Weight, l});
      for (double& x : b.d) out.push_back({&x, ParamKind::LogScale, l});
    }
    for (double& x : layer.bias) out.push_back({&x, ParamKind::Bias, l});
  }
  return out;
}

std::vector<double> gradient_values(const Model& model, const LossGrads& grads) {
  std::vector<double> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& g = grads.grads[l];
    out.insert(out.end(), g.dweights.data().begin(), g.dweights.data().end());
    if (model.layers[l].is_a2q()) out.insert(out.end(), g.dt.begin(), g.dt.end());
    out.insert(out.end(), g.dd.begin(), g.dd.end());
    out.insert(out.end(), g.dbias.begin(), g.dbias.end());
  }
  return out;
}

void sgd_step(Model& model, const LossGrads& grads, double lr, double weight_decay) {
  const auto params = parameters(model);
  const auto g = gradient_values(model, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double step = g[i];
    if (params[i].kind == ParamKind::Weight || params[i].kind == ParamKind::Direction) {
      step += weight_decay * *params[i].value;
    }
    *params[i].value -= lr * step;
  }
}

RealMatrix to_real(const IntMatrix& codes, double scale) {
  RealMatrix out(codes.rows(), codes.cols());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out.data()[i] = static_cast<double>(codes.data()[i]) * scale;
  }
  return out;
}

double accuracy(const RealMatrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    hits += best == labels[b];
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double sparsity(const Model& model) {
  bool any_constrained = false;
  for (const auto& layer : model.layers) any_constrained |= constrained(layer);
  std::size_t zeros = 0, total = 0;
  for (const auto& layer : model.layers) {
    if (any_constrained && !constrained(layer)) continue;
    const auto q = quantize_layer(layer);
    for (double c : q.codes.data()) zeros += c == 0.0;
    total += q.codes.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

Metrics measure(const Model& model, const Dataset& data, double lambda) {
  Metrics m;
  std::size_t hits = 0;
  double loss = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(begin + kEvalChunk, data.size());
    std::vector<std::size_t> rows(end - begin);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
    const auto cache = forward(model, gather_rows(data.inputs, rows), false);
    const std::span<const int> labels(data.labels.data() + begin, end - begin);
    hits += static_cast<std::size_t>(std::lround(accuracy(cache.logits, labels) * labels.size()));
    loss += softmax_cross_entropy(cache.logits, labels) * static_cast<double>(labels.size());
  }
  const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
  m.top1_accuracy = static_cast<double>(hits) / n;
  m.task_loss = loss / n;
  const auto a2q = a2q_layers(model);
  m.reg_loss = op::regularization_penalty(a2q);
  m.sparsity = sparsity(model);
  (void)lambda;
  return m;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& train_set, const Dataset* eval_set, const EpochLogger& logger) {
  return train(make_model(model_config, train_config.seed), train_config, train_set, eval_set,
               logger);
}

TrainResult train(Model model, const TrainConfig& cfg, const Dataset& train_set,
                  const Dataset* eval_set, const EpochLogger& logger,
                  const std::function<void(const Model&)>& after_step) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (train_set.features() != static_cast<std::size_t>(model.layers.front().spec.in_features)) {
    throw std::invalid_argument("train: dataset width does not match the model");
  }
  TrainResult result;
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.rate(cfg.learning_rate, epoch);
    const auto order = shuffled_indices(train_set.size(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      const std::size_t end = std::min(begin + bs, order.size());
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      std::vector<int> labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = train_set.labels[rows[i]];
      LossGrads lg;
      try {
        const auto cache = forward(model, gather_rows(train_set.inputs, rows), {false, true});
        lg = loss_and_backward(model, cache, labels, cfg.lambda);
      } catch (const std::domain_error& e) {
        // non-finite values reached a quantizer
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (" +
                               e.what() + ")");
      }
      if (!std::isfinite(lg.total)) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                               " (loss " + std::to_string(lg.total) + ")");
      }
      sgd_step(model, lg, lr, cfg.weight_decay);
      for (const auto& ref : parameters(model)) {
        if (!std::isfinite(*ref.value)) {
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                 " (non-finite parameter)");
        }
      }
      if (after_step) after_step(model);
    }
    const auto m = measure(model, eval_set ? *eval_set : train_set, cfg.lambda);
    if (!std::isfinite(m.task_loss)) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch));
    }
    result.history.push_back(m);
    if (logger) logger(epoch, m);
  }
  result.model = std::move(model);
  return result;
}

IntegerPass integer_forward(const Model& model, const IntMatrix& inputs, int acc_bits,
                            accsim::AccMode mode, std::span<const std::size_t> order,
                            accsim::Placement placement) {
  IntegerPass pass;
  pass.report.mode = mode;
  pass.report.acc_bits = acc_bits;
  IntMatrix A = inputs;
  double s_in = 1.0;
  const std::size_t L = model.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = model.layers[l];
    const auto lq = quantize_layer(layer);
    const int p = layer.spec.pinned ? kUnconstrainedAccBits : acc_bits;
    auto res = accsim::matvec_accumulate(A, lq.int_codes(), p, mode, order, placement);
    pass.report.overflow_events += res.report.overflow_events;
    pass.report.dot_products_with_overflow += res.report.dot_products_with_overflow;
    pass.report.total_dot_products += res.report.total_dot_products;
    pass.report.total_macs += res.report.total_macs;

    RealMatrix pre(res.y.rows(), res.y.cols());
    for (std::size_t b = 0; b < pre.rows(); ++b)
      for (std::size_t c = 0; c < pre.cols(); ++c)
        pre(b, c) = (static_cast<double>(res.y(b, c)) * s_in) * lq.scales[c] + layer.bias[c];

    if (l + 1 == L) {
      pass.final_acc = std::move(res.y);
      pass.logits = std::move(pre);
      break;
    }
    const auto& act = model.activations[l];
    if (!act.calibrated) throw std::logic_error("integer_forward: activation quantizer not calibrated");
    const double s = act.scale();
    const auto range = act.range();
    IntMatrix next(pre.rows(), pre.cols());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const auto r = quant::round_value(pre.data()[i] / s, quant::Rounding::HalfWay);
      next.data()[i] = std::clamp(r, range.min(), range.max());
    }
    A = std::move(next);
    s_in = s;
  }
  return pass;
}

EvalResult evaluate(const Model& model, const Dataset& data, std::optional<int> acc_bits,
                    accsim::AccMode mode, double lambda) {
  const int p = acc_bits.value_or(kUnconstrainedAccBits);
  auto pass = integer_forward(model, data.inputs, p, mode);
  EvalResult r;
  r.report = pass.report;
  if (mode != accsim::AccMode::Exact) {
    const auto exact = integer_forward(model, data.inputs, p, accsim::AccMode::Exact);
    double err = 0.0;
    for (std::size_t i = 0; i < exact.final_acc.size(); ++i) {
      err += std::fabs(static_cast<double>(pass.final_acc.data()[i] - exact.final_acc.data()[i]));
    }
    r.report.logit_mae =
        exact.final_acc.size() == 0 ? 0.0 : err / static_cast<double>(exact.final_acc.size());
  }
  r.metrics.top1_accuracy = accuracy(pass.logits, data.labels);
  r.metrics.task_loss = softmax_cross_entropy(pass.logits, data.labels);
  const auto a2q = a2q_layers(model);
  r.metrics.reg_loss = op::regularization_penalty(a2q);
  r.metrics.sparsity = sparsity(model);
  (void)lambda;
  r.logits = std::move(pass.logits);
  return r;
}

}  // namespace a2q::train

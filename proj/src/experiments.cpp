#include "a2q/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <random>
#include <ostream>

#include "a2q/bounds.hpp"
#include "json.hpp"

namespace a2q::experiments {

namespace {

constexpr std::size_t kSynthFeatures = 784;
constexpr std::size_t kSynthTrain = 2000;
constexpr std::size_t kSynthTest = 500;

struct Moments {
  double mean = 0.0, var = 0.0, min = 0.0, max = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  m.min = *std::min_element(xs.begin(), xs.end());
  m.max = *std::max_element(xs.begin(), xs.end());
  if (m.min == m.max) {
    m.mean = m.min;
    return m;
  }
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size());
  return m;
}

double mean_abs_diff(const IntMatrix& a, const IntMatrix& b) {
  if (a.size() == 0) return 0.0;
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err += std::fabs(static_cast<double>(a.data()[i] - b.data()[i]));
  }
  return err / static_cast<double>(a.size());
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// MNIST-shaped binary task: a few signature pixels carry the class, flipped
// with probability kSignatureFlip; every other pixel is on with a per-pixel
// rate shared by all classes.
constexpr std::size_t kSignaturePixels = 48;
constexpr double kSignatureFlip = 0.05;

Dataset mnist_like(std::size_t n, int num_classes, std::uint64_t seed, Split split) {
  std::mt19937_64 layout(seed ^ 0x6c61796f7574ULL);
  std::vector<std::size_t> pixels(kSynthFeatures);
  for (std::size_t j = 0; j < pixels.size(); ++j) pixels[j] = j;
  std::shuffle(pixels.begin(), pixels.end(), layout);
  std::vector<int> signature(kSynthFeatures, -1);
  for (std::size_t i = 0; i < kSignaturePixels; ++i) signature[pixels[i]] = static_cast<int>(i);
  std::vector<double> background(kSynthFeatures);
  for (auto& q : background) q = 0.2 * unit(layout);
  IntMatrix protos(static_cast<std::size_t>(num_classes), kSignaturePixels);
  for (auto& b : protos.data()) b = static_cast<std::int64_t>(layout() & 1);

  std::mt19937_64 rng(seed ^ (split == Split::Train ? 0x747261696eULL : 0x74657374ULL));
  Dataset ds{IntMatrix(n, kSynthFeatures), quant::IntRange(1, false), {}, num_classes, split};
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    ds.labels[i] = y;
    auto row = ds.inputs.row(i);
    for (std::size_t j = 0; j < kSynthFeatures; ++j) {
      if (signature[j] >= 0) {
        const auto bit = protos(static_cast<std::size_t>(y), static_cast<std::size_t>(signature[j]));
        row[j] = unit(rng) < kSignatureFlip ? 1 - bit : bit;
      } else {
        row[j] = unit(rng) < background[j] ? 1 : 0;
      }
    }
  }
  return ds;
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace

const char* to_string(accsim::Placement placement) {
  return placement == accsim::Placement::InnerLoop ? "inner" : "outer";
}

TaskData load_task(const std::optional<std::filesystem::path>& mnist_dir, std::uint64_t seed,
                   std::span<const int> classes) {
  TaskData task;
  if (mnist_dir) {
    task.train = io::load_mnist(*mnist_dir, Split::Train, classes);
    task.test = io::load_mnist(*mnist_dir, Split::Test, classes);
    return task;
  }
  const int num_classes = classes.empty() ? 10 : static_cast<int>(classes.size());
  task.synthetic = true;
  task.train = mnist_like(kSynthTrain, num_classes, seed, Split::Train);
  task.test = mnist_like(kSynthTest, num_classes, seed, Split::Test);
  return task;
}

train::ModelConfig linear_config(const Dataset& data, std::optional<int> acc_bits) {
  train::ModelConfig c;
  c.architecture = train::Architecture::Linear;
  c.num_features = static_cast<int>(data.features());
  c.num_classes = data.num_classes;
  c.weight_bits = 8;
  c.input_bits = data.range.bit_width();
  c.input_signed = data.range.is_signed();
  c.acc_bits = acc_bits;
  return c;
}

train::TrainConfig default_train_config(std::uint64_t seed) {
  train::TrainConfig t;
  t.seed = seed;
  return t;
}

std::vector<accsim::SweepRow> sweep_model(const train::Model& model, const Dataset& data, int p_lo,
                                          int p_hi, std::span<const accsim::AccMode> modes) {
  const double sparsity = train::sparsity(model);
  return accsim::overflow_sweep(
      [&](int p, accsim::AccMode mode) {
        const auto r = train::evaluate(model, data, p, mode);
        return accsim::SweepRow{r.report, r.metrics.top1_accuracy, sparsity};
      },
      p_lo, p_hi, modes);
}

std::vector<ChannelCheck> verify_model(const train::Model& model, int acc_bits) {
  bool any_constrained = false;
  for (const auto& layer : model.layers) any_constrained |= !layer.spec.pinned;
  std::vector<ChannelCheck> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (any_constrained && layer.spec.pinned) continue;
    const auto codes = train::quantize_layer(layer).int_codes();
    const int N = layer.spec.input_bits;
    const bool sgn = layer.spec.input_signed;
    for (std::size_t c = 0; c < codes.rows(); ++c) {
      const auto row = codes.row(c);
      ChannelCheck check;
      check.layer = l;
      check.channel = c;
      for (auto q : row) check.l1 += static_cast<std::uint64_t>(q < 0 ? -q : q);
      check.budget = acc_bits >= 1 ? bounds::l1_budget(acc_bits, N, sgn) : 0.0;
      check.min_bits = bounds::weight_bound(row, N, sgn).min_bits;
      check.fits = bounds::worst_case_fits(row, N, sgn, acc_bits);
      out.push_back(check);
    }
  }
  return out;
}

bool all_fit(std::span<const ChannelCheck> checks) {
  return std::all_of(checks.begin(), checks.end(), [](const ChannelCheck& c) { return c.fits; });
}

int model_weight_bound(const train::Model& model) {
  int best = 1;
  for (const auto& c : verify_model(model, accsim::kMaxAccBits)) best = std::max(best, c.min_bits);
  return best;
}

std::vector<accsim::SweepRow> Fig2Result::baseline_rows() const {
  std::vector<accsim::SweepRow> rows;
  for (const auto& p : points) {
    rows.push_back(p.wraparound);
    rows.push_back(p.saturate);
  }
  return rows;
}

std::vector<accsim::SweepRow> Fig2Result::a2q_rows() const {
  std::vector<accsim::SweepRow> rows;
  for (const auto& p : points) rows.push_back(p.a2q);
  return rows;
}

Fig2Result run_fig2(const TaskData& task, const Fig2Options& options, const Log& log) {
  Fig2Result result;
  const auto emit = [&](const std::string& s) {
    if (log) log(s);
  };

  const auto base = train::train(linear_config(task.train, std::nullopt), options.train, task.train);
  result.baseline = train::measure(base.model, task.test, 0.0);
  const auto& spec = base.model.layers.front().spec;
  result.datatype_min_bits =
      bounds::datatype_bound({spec.in_features, spec.input_bits, spec.input_signed, spec.weight_bits})
          .min_bits;
  result.weight_min_bits = model_weight_bound(base.model);
  emit("baseline: test accuracy " + fixed(result.baseline.top1_accuracy, 4) +
       ", data-type bound " + std::to_string(result.datatype_min_bits) + ", weight bound " +
       std::to_string(result.weight_min_bits));

  const accsim::AccMode base_modes[] = {accsim::AccMode::Wraparound, accsim::AccMode::Saturate};
  const auto base_rows =
      sweep_model(base.model, task.test, options.p_lo, options.p_hi, base_modes);

  for (int p = options.p_lo; p <= options.p_hi; ++p) {
    const std::size_t i = static_cast<std::size_t>(p - options.p_lo);
    Fig2Point point;
    point.acc_bits = p;
    point.wraparound = base_rows[2 * i];
    point.saturate = base_rows[2 * i + 1];

    const auto a2q = train::train(linear_config(task.train, p), options.train, task.train);
    const auto r = train::evaluate(a2q.model, task.test, p, accsim::AccMode::Wraparound);
    point.a2q = {r.report, r.metrics.top1_accuracy, r.metrics.sparsity};
    point.a2q_certified = all_fit(verify_model(a2q.model, p));
    emit("P=" + std::to_string(p) + ": wraparound " + fixed(point.wraparound.top1_accuracy, 4) +
         ", saturate " + fixed(point.saturate.top1_accuracy, 4) + ", a2q " +
         fixed(point.a2q.top1_accuracy, 4));
    result.points.push_back(point);
  }
  return result;
}

void print_fig2(const Fig2Result& r, std::ostream& out) {
  out << "baseline test accuracy " << fixed(r.baseline.top1_accuracy, 4) << ", data-type bound "
      << r.datatype_min_bits << ", weight bound " << r.weight_min_bits << "\n";
  out << "  P  wrap_acc  wrap_ovf/mac  sat_acc  a2q_acc  a2q_sparsity  a2q_certified\n";
  for (const auto& p : r.points) {
    char line[160];
    std::snprintf(line, sizeof line, "%3d  %8.4f  %12.6f  %7.4f  %7.4f  %12.4f  %s\n", p.acc_bits,
                  p.wraparound.top1_accuracy, p.wraparound.sim.overflow_rate_per_mac(),
                  p.saturate.top1_accuracy, p.a2q.top1_accuracy, p.a2q.sparsity,
                  p.a2q_certified ? "yes" : "no");
    out << line;
  }
}

AssocResult run_associativity(const train::Model& model, const Dataset& data,
                              const AssocOptions& options) {
  AssocResult result;
  result.weight_min_bits = model_weight_bound(model);
  const std::size_t K = data.features();
  const auto exact = train::integer_forward(model, data.inputs, 32, accsim::AccMode::Exact);
  if (options.acc_bits) {
    result.acc_bits = *options.acc_bits;
  } else {
    // one bit short of the largest final sum on this data
    std::int64_t peak = 0;
    for (auto v : exact.final_acc.data()) peak = std::max(peak, v < 0 ? -v : v);
    result.acc_bits = std::max(2, static_cast<int>(std::bit_width(static_cast<std::uint64_t>(peak))));
  }
  const int P = result.acc_bits;

  struct Config {
    accsim::AccMode mode;
    accsim::Placement placement;
  };
  const Config configs[] = {{accsim::AccMode::Exact, accsim::Placement::InnerLoop},
                            {accsim::AccMode::Wraparound, accsim::Placement::InnerLoop},
                            {accsim::AccMode::Saturate, accsim::Placement::InnerLoop},
                            {accsim::AccMode::Wraparound, accsim::Placement::OuterLoop},
                            {accsim::AccMode::Saturate, accsim::Placement::OuterLoop}};

  std::vector<std::vector<std::size_t>> orders(options.trials);
  for (std::size_t t = 0; t < options.trials; ++t) {
    orders[t] = accsim::trial_permutation(K, options.seed, t);
  }

  for (const auto& cfg : configs) {
    std::vector<double> mae(options.trials), acc(options.trials);
    for (std::size_t t = 0; t < options.trials; ++t) {
      const auto pass =
          train::integer_forward(model, data.inputs, P, cfg.mode, orders[t], cfg.placement);
      mae[t] = mean_abs_diff(pass.final_acc, exact.final_acc);
      acc[t] = train::accuracy(pass.logits, data.labels);
    }
    const auto m = moments(mae);
    const auto a = moments(acc);
    result.rows.push_back({cfg.mode, cfg.placement, options.trials, m.mean, m.var, m.min, m.max,
                           a.mean, a.var, a.min, a.max});
  }
  return result;
}

void write_assoc_report(const AssocResult& r, std::ostream& out, io::ReportFormat format) {
  static constexpr const char* kColumns[] = {"P",        "mode",     "placement", "trials",
                                             "mae_mean", "mae_var",  "mae_min",   "mae_max",
                                             "acc_mean", "acc_var",  "acc_min",   "acc_max"};
  if (format == io::ReportFormat::Csv) {
    for (std::size_t i = 0; i < std::size(kColumns); ++i) out << (i ? "," : "") << kColumns[i];
    out << '\n';
  }
  for (const auto& row : r.rows) {
    const double values[] = {row.mae_mean, row.mae_var, row.mae_min, row.mae_max,
                             row.acc_mean, row.acc_var, row.acc_min, row.acc_max};
    if (format == io::ReportFormat::Csv) {
      out << r.acc_bits << ',' << accsim::to_string(row.mode) << ',' << to_string(row.placement)
          << ',' << row.trials;
      for (double v : values) out << ',' << io::format_number(v);
      out << '\n';
    } else {
      nlohmann::ordered_json o;
      o["P"] = r.acc_bits;
      o["mode"] = std::string(accsim::to_string(row.mode));
      o["placement"] = to_string(row.placement);
      o["trials"] = row.trials;
      for (std::size_t i = 0; i < std::size(values); ++i) o[kColumns[4 + i]] = values[i];
      out << o.dump() << '\n';
    }
  }
}

}  // namespace a2q::experiments

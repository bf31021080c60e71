#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2q/accsim.hpp"
#include "a2q/dataio.hpp"
#include "a2q/dataset.hpp"
#include "a2q/trainkit.hpp"

// End-to-end studies on the 784-input linear classifier: the overflow sweep
// comparing wraparound, saturation and A2Q, and the accumulation-order study.
namespace a2q::experiments {

using Log = std::function<void(std::string_view)>;

struct TaskData {
  Dataset train;
  Dataset test;
  bool synthetic = false;
};

inline constexpr int kDefaultClasses[] = {0, 1};

// MNIST from `mnist_dir` when given, otherwise a 784-wide 1-bit synthetic
// task whose class lives in a few signature pixels over a noisy background.
TaskData load_task(const std::optional<std::filesystem::path>& mnist_dir, std::uint64_t seed,
                   std::span<const int> classes = kDefaultClasses);

// Linear classifier with 8-bit weights and 1-bit unsigned inputs.
train::ModelConfig linear_config(const Dataset& data, std::optional<int> acc_bits);

train::TrainConfig default_train_config(std::uint64_t seed);

// One evaluate() per (P, mode), P ascending.
std::vector<accsim::SweepRow> sweep_model(const train::Model& model, const Dataset& data, int p_lo,
                                          int p_hi, std::span<const accsim::AccMode> modes);

struct ChannelCheck {
  std::size_t layer = 0;
  std::size_t channel = 0;
  std::uint64_t l1 = 0;        // sum of |integer codes|
  double budget = 0.0;         // largest l1 the register admits
  int min_bits = 1;            // weight bound of the channel
  bool fits = false;
};

// Exact-integer certificate for every accumulator-constrained layer at P.
std::vector<ChannelCheck> verify_model(const train::Model& model, int acc_bits);
bool all_fit(std::span<const ChannelCheck> checks);

// Largest per-channel weight bound over the model's constrained layers.
int model_weight_bound(const train::Model& model);

struct Fig2Options {
  int p_lo = 8;
  int p_hi = 20;
  train::TrainConfig train;
};

struct Fig2Point {
  int acc_bits = 0;
  accsim::SweepRow wraparound;  // baseline model
  accsim::SweepRow saturate;    // baseline model
  accsim::SweepRow a2q;         // A2Q model trained for this P, wraparound register
  bool a2q_certified = false;
};

struct Fig2Result {
  train::Metrics baseline;
  int datatype_min_bits = 0;
  int weight_min_bits = 0;
  std::vector<Fig2Point> points;

  std::vector<accsim::SweepRow> baseline_rows() const;
  std::vector<accsim::SweepRow> a2q_rows() const;
};

// Trains the baseline once, then re-trains A2Q from the same seed for every
// P in [p_lo, p_hi] and evaluates all three on the test split.
Fig2Result run_fig2(const TaskData& task, const Fig2Options& options, const Log& log = {});

void print_fig2(const Fig2Result& result, std::ostream& out);

struct AssocOptions {
  // Defaults to one bit short of the largest exact final sum on the data, so
  // every order overflows somewhere.
  std::optional<int> acc_bits;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
};

// Distribution over random accumulation orders of the last-layer logit MAE
// (integer units, against Exact) and of top-1 accuracy.
struct AssocRow {
  accsim::AccMode mode = accsim::AccMode::Exact;
  accsim::Placement placement = accsim::Placement::InnerLoop;
  std::size_t trials = 0;
  double mae_mean = 0.0, mae_var = 0.0, mae_min = 0.0, mae_max = 0.0;
  double acc_mean = 0.0, acc_var = 0.0, acc_min = 0.0, acc_max = 0.0;
};

struct AssocResult {
  int acc_bits = 0;
  int weight_min_bits = 0;
  std::vector<AssocRow> rows;
};

// Inner-loop Exact, Wraparound and Saturate, then outer-loop Wraparound and
// Saturate. Trial i applies trial_permutation(K, seed, i) to every sample.
AssocResult run_associativity(const train::Model& model, const Dataset& data,
                              const AssocOptions& options);

void write_assoc_report(const AssocResult& result, std::ostream& out, io::ReportFormat format);

const char* to_string(accsim::Placement placement);

}  // namespace a2q::experiments

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "a2q/accsim.hpp"
#include "a2q/dataset.hpp"
#include "a2q/trainkit.hpp"

namespace a2q::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- IDX ----

enum class IdxErrorCode { Io, BadMagic, UnsupportedDtype, Truncated };

class IdxError : public IoError {
 public:
  IdxError(IdxErrorCode code, const std::string& what) : IoError(what), code_(code) {}
  IdxErrorCode code() const { return code_; }

 private:
  IdxErrorCode code_;
};

// Unsigned-byte IDX payload (dtype 0x08) with its dimensions.
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  bool operator==(const IdxTensor&) const = default;
};

IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
IdxTensor read_idx(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor);
void write_idx(const std::filesystem::path& path, const IdxTensor& tensor);

// ---- MNIST ----

inline constexpr const char* kMnistDirEnv = "A2Q_MNIST_DIR";

// Flattens [n x 28 x 28] images to 1-bit unsigned codes (pixel / 255 >=
// threshold). Only `classes` are kept and relabeled 0.. in the given order;
// an empty list keeps all ten digits with their own labels.
Dataset binarize_mnist(const IdxTensor& images, const IdxTensor& labels,
                       std::span<const int> classes, double threshold = 0.5,
                       Split split = Split::Train);

// Reads {train,t10k}-{images-idx3,labels-idx1}-ubyte from `dir`.
Dataset load_mnist(const std::filesystem::path& dir, Split split, std::span<const int> classes,
                   double threshold = 0.5);

// Directory named by A2Q_MNIST_DIR, if set and non-empty.
std::optional<std::filesystem::path> mnist_dir_from_env();

// ---- synthetic data ----

// Random integer class prototypes drawn from `seed`; each sample is its
// class prototype plus uniform integer noise in [-noise, noise], clipped back
// into the range. Labels cycle through the classes. Prototypes depend on the
// seed only, so train and test splits share them.
Dataset synth_dataset(int k, int n_bits, bool is_signed, std::size_t num_samples, int num_classes,
                      std::uint64_t seed, int noise = 1, Split split = Split::Train);

// ---- checkpoints ----

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  train::Model model;
  train::TrainConfig train_config;
};

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// ---- reports ----

enum class ReportFormat { Csv, JsonLines };

ReportFormat parse_format(std::string_view name);

// Column order of CSV reports and key order of JSON-lines reports.
inline constexpr const char* kReportColumns[] = {
    "P",         "mode",         "overflow_events", "total_macs", "dot_products_with_overflow",
    "total_dot_products", "logit_mae", "top1_accuracy", "sparsity"};

// Shortest decimal text that parses back to the same double; "nan" for NaN.
std::string format_number(double value);

void write_report(std::span<const accsim::SweepRow> rows, std::ostream& out, ReportFormat format);
void write_report(std::span<const accsim::SweepRow> rows, const std::filesystem::path& path,
                  ReportFormat format);
std::vector<accsim::SweepRow> read_report_csv(std::istream& in);

// Integer codes, one channel per line, comma separated. Blank lines and
// lines starting with '#' are skipped.
IntMatrix read_int_csv(const std::filesystem::path& path);

}  // namespace a2q::io

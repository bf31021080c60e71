#include "a2q/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace a2q {

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

void Dataset::validate() const {
  if (labels.size() != inputs.rows()) {
    throw std::invalid_argument("Dataset: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(inputs.rows()) + " samples");
  }
  if (num_classes < 1) throw std::invalid_argument("Dataset: num_classes must be >= 1");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!range.contains(inputs.data()[i])) {
      throw std::invalid_argument("Dataset: input code " + std::to_string(inputs.data()[i]) +
                                  " at flat index " + std::to_string(i) + " outside its range");
    }
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("Dataset: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("Dataset::slice: bad row range");
  const std::size_t K = features();
  Dataset out{IntMatrix(end - begin, K,
                        std::vector<std::int64_t>(inputs.data().begin() + begin * K,
                                                  inputs.data().begin() + end * K)),
              range,
              std::vector<int>(labels.begin() + begin, labels.begin() + end),
              num_classes,
              split};
  return out;
}

}  // namespace a2q

namespace a2q::io {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::uint8_t kUbyte = 0x08;

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

// ---- checkpoint fields ----

const char* arch_name(train::Architecture a) {
  return a == train::Architecture::Linear ? "linear" : "mlp";
}
train::Architecture parse_arch(const std::string& s) {
  if (s == "linear") return train::Architecture::Linear;
  if (s == "mlp") return train::Architecture::MLP;
  throw IoError("checkpoint: unknown architecture '" + s + "'");
}
const char* act_name(train::ActivationKind a) {
  return a == train::ActivationKind::ReluUnsigned ? "relu_unsigned" : "identity_signed";
}
train::ActivationKind parse_act(const std::string& s) {
  if (s == "relu_unsigned") return train::ActivationKind::ReluUnsigned;
  if (s == "identity_signed") return train::ActivationKind::IdentitySigned;
  throw IoError("checkpoint: unknown activation kind '" + s + "'");
}

const char* init_cap_name(op::InitCap c) {
  switch (c) {
    case op::InitCap::Keep: return "keep";
    case op::InitCap::ClampNorm: return "clamp_norm";
    case op::InitCap::RaiseScale: return "raise_scale";
  }
  return "raise_scale";
}
op::InitCap parse_init_cap(const std::string& s) {
  if (s == "keep") return op::InitCap::Keep;
  if (s == "clamp_norm") return op::InitCap::ClampNorm;
  if (s == "raise_scale") return op::InitCap::RaiseScale;
  throw IoError("checkpoint: unknown init_cap '" + s + "'");
}

json opt_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
std::optional<int> get_opt_int(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<int>(j.get<int>());
}

json real(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double get_real(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json reals(std::span<const double> xs) {
  json a = json::array();
  for (double x : xs) a.push_back(real(x));
  return a;
}
std::vector<double> get_reals(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(get_real(x));
  return out;
}

json matrix(const RealMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(reals(m.row(r)));
  return rows;
}
RealMatrix get_matrix(const json& j, std::size_t rows, std::size_t cols) {
  if (j.size() != rows) throw IoError("checkpoint: matrix has wrong row count");
  RealMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = get_reals(j[r]);
    if (row.size() != cols) throw IoError("checkpoint: matrix has wrong column count");
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

json to_json(const train::ModelConfig& c) {
  return {{"architecture", arch_name(c.architecture)},
          {"hidden_sizes", c.hidden_sizes},
          {"num_features", c.num_features},
          {"num_classes", c.num_classes},
          {"weight_bits", c.weight_bits},
          {"activation_bits", c.activation_bits},
          {"acc_bits", opt_int(c.acc_bits)},
          {"input_bits", c.input_bits},
          {"input_signed", c.input_signed},
          {"activation_kind", act_name(c.activation_kind)},
          {"pin_io_layers", c.pin_io_layers},
          {"init_cap", init_cap_name(c.init_cap)}};
}

train::ModelConfig model_config_from(const json& j) {
  train::ModelConfig c;
  c.architecture = parse_arch(j.at("architecture").get<std::string>());
  c.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  c.num_features = j.at("num_features").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.weight_bits = j.at("weight_bits").get<int>();
  c.activation_bits = j.at("activation_bits").get<int>();
  c.acc_bits = get_opt_int(j.at("acc_bits"));
  c.input_bits = j.at("input_bits").get<int>();
  c.input_signed = j.at("input_signed").get<bool>();
  c.activation_kind = parse_act(j.at("activation_kind").get<std::string>());
  c.pin_io_layers = j.at("pin_io_layers").get<bool>();
  c.init_cap = parse_init_cap(j.at("init_cap").get<std::string>());
  return c;
}

json to_json(const train::TrainConfig& c) {
  const bool step = c.schedule.kind == train::LrSchedule::Kind::StepDecay;
  return {{"learning_rate", real(c.learning_rate)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lambda", real(c.lambda)},
          {"weight_decay", real(c.weight_decay)},
          {"seed", c.seed},
          {"lr_schedule",
           {{"kind", step ? "step_decay" : "constant"},
            {"factor", real(c.schedule.factor)},
            {"period", c.schedule.period}}}};
}

train::TrainConfig train_config_from(const json& j) {
  train::TrainConfig c;
  c.learning_rate = get_real(j.at("learning_rate"));
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lambda = get_real(j.at("lambda"));
  c.weight_decay = get_real(j.at("weight_decay"));
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("lr_schedule");
  const auto kind = s.at("kind").get<std::string>();
  if (kind == "constant") {
    c.schedule.kind = train::LrSchedule::Kind::Constant;
  } else if (kind == "step_decay") {
    c.schedule.kind = train::LrSchedule::Kind::StepDecay;
  } else {
    throw IoError("checkpoint: unknown lr schedule '" + kind + "'");
  }
  c.schedule.factor = get_real(s.at("factor"));
  c.schedule.period = s.at("period").get<int>();
  return c;
}

json to_json(const train::Layer& layer) {
  const auto& s = layer.spec;
  json j = {{"in_features", s.in_features},   {"out_features", s.out_features},
            {"weight_bits", s.weight_bits},   {"input_bits", s.input_bits},
            {"input_signed", s.input_signed}, {"acc_bits", opt_int(s.acc_bits)},
            {"pinned", s.pinned}};
  if (const auto* p = std::get_if<op::A2QLayerParams>(&layer.weights)) {
    j["kind"] = "a2q";
    j["v"] = matrix(p->v);
    j["t"] = reals(p->t);
    j["d"] = reals(p->d);
    j["M"] = p->weight_bits;
    j["P"] = p->acc_bits;
    j["N"] = p->input_bits;
    j["a2q_input_signed"] = p->input_signed;
  } else {
    const auto& b = std::get<train::BaselineWeights>(layer.weights);
    j["kind"] = "baseline";
    j["w"] = matrix(b.w);
    j["d"] = reals(b.d);
  }
  j["bias"] = reals(layer.bias);
  return j;
}

train::Layer layer_from(const json& j) {
  train::Layer layer;
  auto& s = layer.spec;
  s.in_features = j.at("in_features").get<int>();
  s.out_features = j.at("out_features").get<int>();
  if (s.in_features < 1 || s.out_features < 1) throw IoError("checkpoint: empty layer");
  s.weight_bits = j.at("weight_bits").get<int>();
  s.input_bits = j.at("input_bits").get<int>();
  s.input_signed = j.at("input_signed").get<bool>();
  s.acc_bits = get_opt_int(j.at("acc_bits"));
  s.pinned = j.at("pinned").get<bool>();
  const auto C = static_cast<std::size_t>(s.out_features);
  const auto K = static_cast<std::size_t>(s.in_features);
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "a2q") {
    op::A2QLayerParams p;
    p.v = get_matrix(j.at("v"), C, K);
    p.t = get_reals(j.at("t"));
    p.d = get_reals(j.at("d"));
    p.weight_bits = j.at("M").get<int>();
    p.acc_bits = j.at("P").get<int>();
    p.input_bits = j.at("N").get<int>();
    p.input_signed = j.at("a2q_input_signed").get<bool>();
    p.validate();
    layer.weights = std::move(p);
  } else if (kind == "baseline") {
    train::BaselineWeights b{get_matrix(j.at("w"), C, K), get_reals(j.at("d"))};
    if (b.d.size() != C) throw IoError("checkpoint: scale count differs from channel count");
    layer.weights = std::move(b);
  } else {
    throw IoError("checkpoint: unknown layer kind '" + kind + "'");
  }
  layer.bias = get_reals(j.at("bias"));
  if (layer.bias.size() != C) throw IoError("checkpoint: bias count differs from channel count");
  return layer;
}

template <typename Row>
ordered_json report_object(const Row& row) {
  const auto& s = row.sim;
  auto num = [](double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr); };
  ordered_json o;
  o["P"] = s.acc_bits;
  o["mode"] = std::string(accsim::to_string(s.mode));
  o["overflow_events"] = s.overflow_events;
  o["total_macs"] = s.total_macs;
  o["dot_products_with_overflow"] = s.dot_products_with_overflow;
  o["total_dot_products"] = s.total_dot_products;
  o["logit_mae"] = num(s.logit_mae);
  o["top1_accuracy"] = num(row.top1_accuracy);
  o["sparsity"] = num(row.sparsity);
  return o;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_cell(const std::string& s, const char* column) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IoError(std::string("report: bad value '") + s + "' in column " + column);
  }
  return value;
}

}  // namespace

// ---- IDX ----

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0) {
    throw IdxError(IdxErrorCode::BadMagic, "idx: bad magic bytes");
  }
  if (bytes[2] != kUbyte) {
    throw IdxError(IdxErrorCode::UnsupportedDtype,
                   "idx: unsupported dtype code " + std::to_string(bytes[2]));
  }
  const std::size_t rank = bytes[3];
  if (rank == 0) throw IdxError(IdxErrorCode::BadMagic, "idx: rank 0");
  if (bytes.size() < 4 + 4 * rank) throw IdxError(IdxErrorCode::Truncated, "idx: truncated header");
  IdxTensor t;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    t.dims.push_back(read_be32(bytes.data() + 4 + 4 * i));
    count *= t.dims.back();
    if (count > bytes.size()) break;
  }
  const std::size_t offset = 4 + 4 * rank;
  if (bytes.size() - offset < count) {
    throw IdxError(IdxErrorCode::Truncated, "idx: payload holds " +
                                                std::to_string(bytes.size() - offset) +
                                                " bytes, header promises " + std::to_string(count));
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                bytes.begin() + static_cast<std::ptrdiff_t>(offset + count));
  return t;
}

IdxTensor read_idx(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  try {
    return parse_idx(bytes);
  } catch (const IdxError& e) {
    throw IdxError(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& t) {
  if (t.dims.empty() || t.dims.size() > 255) throw std::invalid_argument("idx: rank must be 1..255");
  const std::uint64_t count = std::accumulate(t.dims.begin(), t.dims.end(), std::uint64_t{1},
                                              std::multiplies<>());
  if (count != t.data.size()) throw std::invalid_argument("idx: dims do not match payload size");
  std::vector<std::uint8_t> out{0, 0, kUbyte, static_cast<std::uint8_t>(t.dims.size())};
  for (std::uint32_t d : t.dims) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(d >> shift));
  }
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxTensor& t) {
  const auto bytes = encode_idx(t);
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---- MNIST ----

Dataset binarize_mnist(const IdxTensor& images, const IdxTensor& labels,
                       std::span<const int> classes, double threshold, Split split) {
  if (images.dims.size() != 3) throw std::invalid_argument("binarize_mnist: images must be rank 3");
  if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
    throw std::invalid_argument("binarize_mnist: label count differs from image count");
  }
  const std::size_t n = images.dims[0];
  const std::size_t K = std::size_t{images.dims[1]} * images.dims[2];
  const double cut = threshold * 255.0;

  std::vector<int> remap(256, -1);
  int num_classes = 10;
  if (classes.empty()) {
    for (int c = 0; c < 10; ++c) remap[c] = c;
  } else {
    num_classes = static_cast<int>(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] < 0 || classes[i] > 255) throw std::invalid_argument("binarize_mnist: class");
      remap[classes[i]] = static_cast<int>(i);
    }
  }

  std::vector<std::size_t> keep;
  std::vector<bool> seen(num_classes, false);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = remap[labels.data[i]];
    if (y >= 0) {
      keep.push_back(i);
      seen[y] = true;
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (!seen[c] && !classes.empty()) {
      throw std::invalid_argument("binarize_mnist: class " + std::to_string(classes[c]) +
                                  " absent from the data");
    }
  }

  Dataset ds{IntMatrix(keep.size(), K), quant::IntRange(1, false), {}, num_classes, split};
  ds.labels.reserve(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::uint8_t* px = images.data.data() + keep[r] * K;
    auto row = ds.inputs.row(r);
    for (std::size_t k = 0; k < K; ++k) row[k] = static_cast<double>(px[k]) >= cut ? 1 : 0;
    ds.labels.push_back(remap[labels.data[keep[r]]]);
  }
  return ds;
}

Dataset load_mnist(const std::filesystem::path& dir, Split split, std::span<const int> classes,
                   double threshold) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  const auto images = read_idx(dir / (prefix + "-images-idx3-ubyte"));
  const auto labels = read_idx(dir / (prefix + "-labels-idx1-ubyte"));
  return binarize_mnist(images, labels, classes, threshold, split);
}

std::optional<std::filesystem::path> mnist_dir_from_env() {
  const char* v = std::getenv(kMnistDirEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

// ---- synthetic data ----

Dataset synth_dataset(int k, int n_bits, bool is_signed, std::size_t num_samples, int num_classes,
                      std::uint64_t seed, int noise, Split split) {
  if (k < 1 || num_classes < 1 || noise < 0) {
    throw std::invalid_argument("synth_dataset: k and num_classes must be positive, noise >= 0");
  }
  const quant::IntRange range(n_bits, is_signed);
  std::mt19937_64 proto_rng(splitmix64(seed));
  IntMatrix protos(static_cast<std::size_t>(num_classes), static_cast<std::size_t>(k));
  for (auto& v : protos.data()) v = uniform_int(proto_rng, range.min(), range.max());

  std::mt19937_64 rng(splitmix64(seed ^ (split == Split::Train ? 0x7261696eULL : 0x74657374ULL)));
  Dataset ds{IntMatrix(num_samples, static_cast<std::size_t>(k)), range, {}, num_classes, split};
  ds.labels.resize(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    ds.labels[i] = y;
    const auto proto = protos.row(static_cast<std::size_t>(y));
    auto row = ds.inputs.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const std::int64_t e = noise == 0 ? 0 : uniform_int(rng, -noise, noise);
      row[j] = std::clamp(proto[j] + e, range.min(), range.max());
    }
  }
  return ds;
}

// ---- checkpoints ----

std::string checkpoint_to_json(const Checkpoint& c) {
  json layers = json::array();
  for (const auto& l : c.model.layers) layers.push_back(to_json(l));
  json acts = json::array();
  for (const auto& a : c.model.activations) {
    acts.push_back({{"bits", a.bits},
                    {"is_signed", a.is_signed},
                    {"log2_scale", a.log2_scale},
                    {"running_max", real(a.running_max)},
                    {"calibrated", a.calibrated}});
  }
  json j = {{"format_version", Checkpoint::kFormatVersion},
            {"model_config", to_json(c.model.config)},
            {"train_config", to_json(c.train_config)},
            {"layers", std::move(layers)},
            {"activations", std::move(acts)}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != Checkpoint::kFormatVersion) {
      throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    }
    Checkpoint c;
    c.model.config = model_config_from(j.at("model_config"));
    c.train_config = train_config_from(j.at("train_config"));
    for (const auto& l : j.at("layers")) c.model.layers.push_back(layer_from(l));
    for (const auto& a : j.at("activations")) {
      train::ActQuant q;
      q.bits = a.at("bits").get<int>();
      q.is_signed = a.at("is_signed").get<bool>();
      q.log2_scale = a.at("log2_scale").get<int>();
      q.running_max = get_real(a.at("running_max"));
      q.calibrated = a.at("calibrated").get<bool>();
      c.model.activations.push_back(q);
    }
    const auto& L = c.model.layers;
    if (L.empty()) throw IoError("checkpoint: no layers");
    if (c.model.activations.size() + 1 != L.size()) {
      throw IoError("checkpoint: expected one activation quantizer per hidden layer");
    }
    for (std::size_t i = 1; i < L.size(); ++i) {
      if (L[i].spec.in_features != L[i - 1].spec.out_features) {
        throw IoError("checkpoint: layer " + std::to_string(i) + " width mismatch");
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  auto out = open_out(path);
  out << checkpoint_to_json(c);
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return checkpoint_from_json(text);
}

// ---- reports ----

ReportFormat parse_format(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "jsonl" || name == "json-lines") return ReportFormat::JsonLines;
  throw std::invalid_argument("unknown report format '" + std::string(name) + "'");
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_report(std::span<const accsim::SweepRow> rows, std::ostream& out, ReportFormat format) {
  if (format == ReportFormat::JsonLines) {
    for (const auto& row : rows) out << report_object(row).dump() << '\n';
    return;
  }
  for (std::size_t i = 0; i < std::size(kReportColumns); ++i) {
    out << (i ? "," : "") << kReportColumns[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    const auto& s = row.sim;
    out << s.acc_bits << ',' << accsim::to_string(s.mode) << ',' << s.overflow_events << ','
        << s.total_macs << ',' << s.dot_products_with_overflow << ',' << s.total_dot_products << ','
        << format_number(s.logit_mae) << ',' << format_number(row.top1_accuracy) << ','
        << format_number(row.sparsity) << '\n';
  }
}

void write_report(std::span<const accsim::SweepRow> rows, const std::filesystem::path& path,
                  ReportFormat format) {
  auto out = open_out(path);
  write_report(rows, out, format);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<accsim::SweepRow> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("report: missing header");
  const auto header = split_csv(line);
  if (!std::equal(header.begin(), header.end(), std::begin(kReportColumns),
                  std::end(kReportColumns)) ||
      header.size() != std::size(kReportColumns)) {
    throw IoError("report: unexpected header '" + line + "'");
  }
  std::vector<accsim::SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != header.size()) throw IoError("report: wrong cell count in '" + line + "'");
    accsim::SweepRow r;
    r.sim.acc_bits = parse_cell<int>(c[0], "P");
    r.sim.mode = accsim::parse_mode(c[1]);
    r.sim.overflow_events = parse_cell<std::uint64_t>(c[2], "overflow_events");
    r.sim.total_macs = parse_cell<std::uint64_t>(c[3], "total_macs");
    r.sim.dot_products_with_overflow = parse_cell<std::uint64_t>(c[4], "dot_products_with_overflow");
    r.sim.total_dot_products = parse_cell<std::uint64_t>(c[5], "total_dot_products");
    r.sim.logit_mae = parse_cell<double>(c[6], "logit_mae");
    r.top1_accuracy = parse_cell<double>(c[7], "top1_accuracy");
    r.sparsity = parse_cell<double>(c[8], "sparsity");
    rows.push_back(r);
  }
  return rows;
}

IntMatrix read_int_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::int64_t> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split_csv(line);
    if (rows == 0) {
      cols = cells.size();
    } else if (cells.size() != cols) {
      throw IoError(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                    std::to_string(cells.size()) + " values, expected " + std::to_string(cols));
    }
    for (const auto& cell : cells) {
      std::string s = cell;
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      values.push_back(parse_cell<std::int64_t>(s, "weight"));
    }
    ++rows;
  }
  if (rows == 0) throw IoError(path.string() + ": no weights");
  return IntMatrix(rows, cols, std::move(values));
}

}  // namespace a2q::io

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "a2q/bounds.hpp"
#include "a2q/dataio.hpp"
#include "a2q/experiments.hpp"
#include "a2q/trainkit.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace a2q;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kVerifyFailed = 4, kDiverged = 5 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Global {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
};

struct DataFlags {
  std::string dir;
  bool synth = false;
  std::string classes = "0,1";
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--dataset", f.dir, "Directory with MNIST IDX files");
  cmd->add_flag("--synth", f.synth, "Use the synthetic 784-wide 1-bit task");
  cmd->add_option("--classes", f.classes, "Comma-separated digits to keep, or 'all'")
      ->capture_default_str();
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not an integer list: '" + text + "'");
    }
  }
  return out;
}

experiments::TaskData load_data(const DataFlags& f, std::uint64_t seed) {
  if (f.synth && !f.dir.empty()) throw UsageError("--dataset and --synth are mutually exclusive");
  const auto classes = f.classes == "all" ? std::vector<int>{} : parse_int_list(f.classes);
  if (f.synth) return experiments::load_task(std::nullopt, seed, classes);
  std::optional<fs::path> dir;
  if (!f.dir.empty()) {
    dir = fs::path(f.dir);
  } else {
    dir = io::mnist_dir_from_env();
  }
  if (!dir) {
    throw UsageError(std::string("no dataset: pass --dataset DIR, set ") + io::kMnistDirEnv +
                     ", or use --synth");
  }
  return experiments::load_task(dir, seed, classes);
}

// "12", "8:20" or "8-20"
std::pair<int, int> parse_range(const std::string& text) {
  const auto sep = text.find_first_of(":-");
  try {
    if (sep == std::string::npos) {
      const int p = std::stoi(text);
      return {p, p};
    }
    return {std::stoi(text.substr(0, sep)), std::stoi(text.substr(sep + 1))};
  } catch (const std::exception&) {
    throw UsageError("bad accumulator range '" + text + "'");
  }
}

std::vector<accsim::AccMode> parse_modes(const std::string& text) {
  std::vector<accsim::AccMode> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(accsim::parse_mode(item));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no accumulator modes given");
  return out;
}

// Writes to --out when given, stdout otherwise.
template <typename Fn>
void emit(const Global& g, Fn&& write) {
  if (g.out.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(g.out);
  if (!out) throw io::IoError("cannot write " + g.out);
  write(out);
  if (!out) throw io::IoError("write failed: " + g.out);
}

fs::path sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return p.parent_path() / (p.stem().string() + suffix + p.extension().string());
}

io::ReportFormat report_format(const Global& g) {
  try {
    return io::parse_format(g.format);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// ---- bound ----

struct BoundFlags {
  std::int64_t k = 0;
  int input_bits = 0;
  int weight_bits = 0;
  bool signed_input = false;
  std::string weights_file;
};

nlohmann::ordered_json bound_json(const bounds::AccBoundResult& r) {
  nlohmann::ordered_json j;
  j["min_bits"] = r.min_bits;
  j["real_bound"] = r.real_bound;
  j["source"] = bounds::to_string(r.source);
  j["degenerate"] = r.degenerate;
  return j;
}

std::string bound_text(const bounds::AccBoundResult& r) {
  return "min_bits=" + std::to_string(r.min_bits) + " real_bound=" + io::format_number(r.real_bound) +
         (r.degenerate ? " (all-zero channel)" : "");
}

int cmd_bound(const Global& g, const BoundFlags& f) {
  const bounds::DotShape shape{f.k, f.input_bits, f.signed_input, f.weight_bits};
  try {
    shape.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto dt = bounds::datatype_bound(shape);

  struct Block {
    std::string name;
    bounds::LayerBound bound;
  };
  std::vector<Block> blocks;
  if (!f.weights_file.empty()) {
    if (fs::path(f.weights_file).extension() == ".json") {
      const auto ckpt = io::read_checkpoint(f.weights_file);
      for (std::size_t l = 0; l < ckpt.model.layers.size(); ++l) {
        const auto& layer = ckpt.model.layers[l];
        blocks.push_back({"layer " + std::to_string(l),
                          bounds::layer_weight_bound(train::quantize_layer(layer).int_codes(),
                                                     layer.spec.input_bits,
                                                     layer.spec.input_signed)});
      }
    } else {
      const auto codes = io::read_int_csv(f.weights_file);
      if (static_cast<std::int64_t>(codes.cols()) != f.k) {
        throw UsageError("--k " + std::to_string(f.k) + " conflicts with " +
                         std::to_string(codes.cols()) + " weights per channel in " +
                         f.weights_file);
      }
      const std::int64_t hi = (std::int64_t{1} << (f.weight_bits - 1)) - 1;
      for (auto q : codes.data()) {
        if (q < -hi - 1 || q > hi) {
          throw UsageError("weight code " + std::to_string(q) + " does not fit " +
                           std::to_string(f.weight_bits) + " bits");
        }
      }
      blocks.push_back(
          {"weights", bounds::layer_weight_bound(codes, f.input_bits, f.signed_input)});
    }
  }

  emit(g, [&](std::ostream& out) {
    if (report_format(g) == io::ReportFormat::JsonLines) {
      nlohmann::ordered_json j;
      j["datatype_bound"] = bound_json(dt);
      for (const auto& b : blocks) {
        nlohmann::ordered_json layer;
        layer["name"] = b.name;
        layer["max_bits"] = b.bound.max_bits;
        layer["channels"] = nlohmann::ordered_json::array();
        for (const auto& c : b.bound.channels) layer["channels"].push_back(bound_json(c));
        j["weight_bounds"].push_back(layer);
      }
      out << j.dump() << '\n';
      return;
    }
    out << "datatype_bound " << bound_text(dt) << '\n';
    for (const auto& b : blocks) {
      for (std::size_t c = 0; c < b.bound.channels.size(); ++c) {
        out << b.name << " channel " << c << " weight_bound " << bound_text(b.bound.channels[c])
            << '\n';
      }
      out << b.name << " max_bits=" << b.bound.max_bits << '\n';
    }
  });
  return kOk;
}

// ---- simulate ----

struct SimulateFlags {
  std::string checkpoint;
  DataFlags data;
  std::string acc_bits = "8:32";
  std::string modes = "exact,wraparound,saturate";
};

Dataset test_split_for(const train::Model& model, const DataFlags& f, std::uint64_t seed) {
  auto task = load_data(f, seed);
  const auto& spec = model.layers.front().spec;
  if (task.test.features() != static_cast<std::size_t>(spec.in_features)) {
    throw UsageError("dataset has " + std::to_string(task.test.features()) +
                     " features, checkpoint expects " + std::to_string(spec.in_features));
  }
  if (task.test.num_classes != model.layers.back().spec.out_features) {
    throw UsageError("dataset has " + std::to_string(task.test.num_classes) +
                     " classes, checkpoint expects " +
                     std::to_string(model.layers.back().spec.out_features));
  }
  return std::move(task.test);
}

int cmd_simulate(const Global& g, const SimulateFlags& f) {
  const auto [lo, hi] = parse_range(f.acc_bits);
  if (lo < 1 || hi > accsim::kMaxAccBits || lo > hi) {
    throw UsageError("accumulator range must lie in [1, 64] and be ascending");
  }
  const auto modes = parse_modes(f.modes);
  const auto format = report_format(g);
  const auto ckpt = io::read_checkpoint(f.checkpoint);
  const auto test = test_split_for(ckpt.model, f.data, g.seed);
  const auto rows = experiments::sweep_model(ckpt.model, test, lo, hi, modes);
  emit(g, [&](std::ostream& out) { io::write_report(rows, out, format); });
  return kOk;
}

// ---- train ----

struct TrainFlags {
  std::string arch = "linear";
  std::string hidden = "64";
  int weight_bits = 8;
  int act_bits = 8;
  std::optional<int> acc_bits;
  int epochs = 10;
  double lr = 1e-2;
  double lambda = 1e-3;
  double weight_decay = 0.0;
  int batch_size = 64;
  std::string lr_decay;
  std::string act_kind = "relu";
  bool pin_io = false;
  std::string init_cap = "raise-scale";
  DataFlags data;
  std::string checkpoint_out;
};

int cmd_train(const Global& g, const TrainFlags& f) {
  const auto format = report_format(g);
  const auto task = load_data(f.data, g.seed);

  train::ModelConfig mc = experiments::linear_config(task.train, f.acc_bits);
  if (f.arch == "mlp") {
    mc.architecture = train::Architecture::MLP;
    mc.hidden_sizes = parse_int_list(f.hidden);
  } else if (f.arch != "linear") {
    throw UsageError("--arch must be linear or mlp");
  }
  mc.weight_bits = f.weight_bits;
  mc.activation_bits = f.act_bits;
  if (f.act_kind == "identity") {
    mc.activation_kind = train::ActivationKind::IdentitySigned;
  } else if (f.act_kind != "relu") {
    throw UsageError("--act-kind must be relu or identity");
  }
  mc.pin_io_layers = f.pin_io;
  if (f.init_cap == "raise-scale") {
    mc.init_cap = op::InitCap::RaiseScale;
  } else if (f.init_cap == "clamp-norm") {
    mc.init_cap = op::InitCap::ClampNorm;
  } else if (f.init_cap == "keep") {
    mc.init_cap = op::InitCap::Keep;
  } else {
    throw UsageError("--init-cap must be raise-scale, clamp-norm or keep");
  }

  train::TrainConfig tc = experiments::default_train_config(g.seed);
  tc.epochs = f.epochs;
  tc.learning_rate = f.lr;
  tc.lambda = f.lambda;
  tc.weight_decay = f.weight_decay;
  tc.batch_size = f.batch_size;
  if (!f.lr_decay.empty()) {
    const auto sep = f.lr_decay.find(':');
    if (sep == std::string::npos) throw UsageError("--lr-decay expects FACTOR:PERIOD");
    try {
      tc.schedule = {train::LrSchedule::Kind::StepDecay, std::stod(f.lr_decay.substr(0, sep)),
                     std::stoi(f.lr_decay.substr(sep + 1))};
    } catch (const std::exception&) {
      throw UsageError("--lr-decay expects FACTOR:PERIOD");
    }
  }
  try {
    mc.validate();
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto result = train::train(mc, tc, task.train, &task.test, [](int epoch, const train::Metrics& m) {
    std::cout << "epoch " << epoch + 1 << " task_loss " << io::format_number(m.task_loss)
              << " reg_loss " << io::format_number(m.reg_loss) << " accuracy "
              << io::format_number(m.top1_accuracy) << " sparsity "
              << io::format_number(m.sparsity) << std::endl;
  });
  io::write_checkpoint(f.checkpoint_out, {result.model, tc});

  if (!g.out.empty()) {
    emit(g, [&](std::ostream& out) {
      if (format == io::ReportFormat::Csv) out << "epoch,task_loss,reg_loss,top1_accuracy,sparsity\n";
      for (std::size_t e = 0; e < result.history.size(); ++e) {
        const auto& m = result.history[e];
        if (format == io::ReportFormat::Csv) {
          out << e + 1 << ',' << io::format_number(m.task_loss) << ','
              << io::format_number(m.reg_loss) << ',' << io::format_number(m.top1_accuracy) << ','
              << io::format_number(m.sparsity) << '\n';
        } else {
          nlohmann::ordered_json j;
          j["epoch"] = e + 1;
          j["task_loss"] = m.task_loss;
          j["reg_loss"] = m.reg_loss;
          j["top1_accuracy"] = m.top1_accuracy;
          j["sparsity"] = m.sparsity;
          out << j.dump() << '\n';
        }
      }
    });
  }
  return kOk;
}

// ---- verify ----

struct VerifyFlags {
  std::string checkpoint;
  std::optional<int> acc_bits;
};

int cmd_verify(const Global& g, const VerifyFlags& f) {
  const auto ckpt = io::read_checkpoint(f.checkpoint);
  const auto P = f.acc_bits ? f.acc_bits : ckpt.model.config.acc_bits;
  if (!P) throw UsageError("--acc-bits is required for a checkpoint trained without one");
  if (*P < 1 || *P > accsim::kMaxAccBits) throw UsageError("--acc-bits must lie in [1, 64]");
  const auto checks = experiments::verify_model(ckpt.model, *P);
  const bool ok = experiments::all_fit(checks);
  emit(g, [&](std::ostream& out) {
    std::size_t failed = 0;
    for (const auto& c : checks) {
      failed += !c.fits;
      out << "layer " << c.layer << " channel " << c.channel << " l1=" << c.l1
          << " budget=" << io::format_number(c.budget) << " min_bits=" << c.min_bits << ' '
          << (c.fits ? "PASS" : "FAIL") << '\n';
    }
    out << (ok ? "PASS" : "FAIL") << ": " << checks.size() - failed << "/" << checks.size()
        << " channels fit a " << *P << "-bit accumulator\n";
  });
  return ok ? kOk : kVerifyFailed;
}

// ---- repro ----

struct ReproFlags {
  std::string experiment;
  DataFlags data;
  int p_lo = 8;
  int p_hi = 20;
  int epochs = 10;
  std::size_t trials = 1000;
  std::optional<int> acc_bits;
};

int cmd_repro(const Global& g, const ReproFlags& f) {
  const auto format = report_format(g);
  const auto task = load_data(f.data, g.seed);
  auto tc = experiments::default_train_config(g.seed);
  tc.epochs = f.epochs;
  const auto log = [](std::string_view line) { std::cerr << line << std::endl; };

  if (f.experiment == "fig2") {
    if (f.p_lo < 2 || f.p_hi > accsim::kMaxAccBits || f.p_lo > f.p_hi) {
      throw UsageError("--p-lo/--p-hi must satisfy 2 <= lo <= hi <= 64");
    }
    const auto r = experiments::run_fig2(task, {f.p_lo, f.p_hi, tc}, log);
    if (g.out.empty()) {
      experiments::print_fig2(r, std::cout);
      return kOk;
    }
    emit(g, [&](std::ostream& out) { io::write_report(r.baseline_rows(), out, format); });
    io::write_report(r.a2q_rows(), sibling(g.out, "_a2q"), format);
    experiments::print_fig2(r, std::cout);
    return kOk;
  }
  if (f.experiment == "associativity") {
    const auto base =
        train::train(experiments::linear_config(task.train, std::nullopt), tc, task.train);
    const auto r = experiments::run_associativity(base.model, task.test,
                                                  {f.acc_bits, f.trials, g.seed});
    log("weight bound " + std::to_string(r.weight_min_bits) + ", study at P=" +
        std::to_string(r.acc_bits));
    emit(g, [&](std::ostream& out) { experiments::write_assoc_report(r, out, format); });
    return kOk;
  }
  throw UsageError("--experiment must be fig2 or associativity");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accumulator bit-width bounds, overflow simulation and accumulator-aware QAT"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--out", g.out, "Report path (stdout when absent)");
  app.add_option("--format", g.format, "Report format: csv or jsonl")->capture_default_str();

  BoundFlags bf;
  auto* bound = app.add_subcommand("bound", "Accumulator lower bounds");
  bound->add_option("--k", bf.k, "Dot-product length")->required();
  bound->add_option("--input-bits", bf.input_bits, "N")->required();
  bound->add_option("--weight-bits", bf.weight_bits, "M")->required();
  bound->add_flag("--signed-input", bf.signed_input, "Inputs are signed");
  bound->add_option("--weights-file", bf.weights_file,
                    "Checkpoint (.json) or CSV of integer codes, one channel per line");

  SimulateFlags sf;
  auto* simulate = app.add_subcommand("simulate", "Integer inference over a (P, mode) grid");
  simulate->add_option("--checkpoint", sf.checkpoint)->required();
  add_data_flags(simulate, sf.data);
  simulate->add_option("--acc-bits", sf.acc_bits, "P or LO:HI")->capture_default_str();
  simulate->add_option("--mode", sf.modes, "Comma-separated: exact, wraparound, saturate")
      ->capture_default_str();

  TrainFlags tf;
  auto* trn = app.add_subcommand("train", "Baseline QAT, or A2Q when --acc-bits is given");
  trn->add_option("--arch", tf.arch, "linear or mlp")->capture_default_str();
  trn->add_option("--hidden", tf.hidden, "MLP hidden sizes, comma-separated")->capture_default_str();
  trn->add_option("--weight-bits", tf.weight_bits)->capture_default_str();
  trn->add_option("--act-bits", tf.act_bits, "Hidden activation bits")->capture_default_str();
  trn->add_option("--acc-bits", tf.acc_bits, "Target accumulator width P");
  trn->add_option("--epochs", tf.epochs)->capture_default_str();
  trn->add_option("--lr", tf.lr)->capture_default_str();
  trn->add_option("--lambda", tf.lambda)->capture_default_str();
  trn->add_option("--weight-decay", tf.weight_decay)->capture_default_str();
  trn->add_option("--batch-size", tf.batch_size)->capture_default_str();
  trn->add_option("--lr-decay", tf.lr_decay, "Step decay FACTOR:PERIOD");
  trn->add_option("--act-kind", tf.act_kind, "relu or identity")->capture_default_str();
  trn->add_flag("--pin-io", tf.pin_io, "8-bit unconstrained first and last layers");
  trn->add_option("--init-cap", tf.init_cap,
                  "Initial norm above its cap: raise-scale, clamp-norm or keep")
      ->capture_default_str();
  add_data_flags(trn, tf.data);
  trn->add_option("--checkpoint-out", tf.checkpoint_out)->required();

  VerifyFlags vf;
  auto* verify = app.add_subcommand("verify", "Exact per-channel overflow certificate");
  verify->add_option("--checkpoint", vf.checkpoint)->required();
  verify->add_option("--acc-bits", vf.acc_bits, "Defaults to the checkpoint's training P");

  ReproFlags rf;
  auto* repro = app.add_subcommand("repro", "Overflow sweep or accumulation-order study");
  repro->add_option("--experiment", rf.experiment, "fig2 or associativity")->required();
  add_data_flags(repro, rf.data);
  repro->add_option("--p-lo", rf.p_lo)->capture_default_str();
  repro->add_option("--p-hi", rf.p_hi)->capture_default_str();
  repro->add_option("--epochs", rf.epochs)->capture_default_str();
  repro->add_option("--trials", rf.trials)->capture_default_str();
  repro->add_option("--acc-bits", rf.acc_bits, "Associativity P (default: one bit short of the largest exact sum)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*bound) return cmd_bound(g, bf);
    if (*simulate) return cmd_simulate(g, sf);
    if (*trn) return cmd_train(g, tf);
    if (*verify) return cmd_verify(g, vf);
    if (*repro) return cmd_repro(g, rf);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const io::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const train::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

#include "densehar_cli/commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "densehar/data.hpp"
#include "densehar/error.hpp"
#include "densehar/infer.hpp"
#include "densehar/key_value.hpp"
#include "densehar/metrics.hpp"
#include "densehar/model.hpp"
#include "densehar/train.hpp"
#include "densehar_cli/run_config.hpp"

namespace densehar::cli {
namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

struct TrainOptions {
  std::vector<std::string> data;
  std::string out = "model.bin";
  std::string schema;
  std::string validation;
};

struct PredictOptions {
  std::string model;
  std::string data;
  std::string out = "predictions.csv";
  std::string schema;
  std::string scaler;
  std::string mode = "dense";
  std::optional<std::size_t> subseq_len;
  std::optional<double> overlap;
  std::optional<std::size_t> window;
  std::optional<std::size_t> stride;
};

struct EvalOptions {
  std::string gt;
  std::string pred;
  std::string schema;
  std::string out = "report.csv";
};

struct BenchOptions {
  std::string model;
  std::string data;
  std::string schema;
  std::string scaler;
  std::string out;
  std::vector<std::size_t> lengths;
  std::optional<std::size_t> subseq_len;
  std::optional<double> overlap;
  std::optional<std::size_t> window;
  std::optional<std::size_t> stride;
};

struct SynthOptions {
  std::string spec;
  std::string out = ".";
};

fs::path sidecar(const fs::path& model, std::string_view suffix) {
  return model.parent_path() / (model.stem().string() + std::string(suffix));
}

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config.empty()) load_run_config(cfg, g.config);
  if (g.seed) cfg.train.seed = *g.seed;
  if (g.threads) {
    require(*g.threads >= 1, ErrorKind::kConfig, "--threads must be >= 1");
    cfg.train.threads = *g.threads;
  }
  return cfg;
}

// Schema lookup order: explicit flag, config key, schema.txt next to the data.
std::optional<fs::path> find_schema(const std::string& flag, const RunConfig& cfg, const fs::path& data) {
  if (!flag.empty()) return fs::path(flag);
  if (!cfg.schema_path.empty()) return fs::path(cfg.schema_path);
  const fs::path sibling = data.parent_path() / "schema.txt";
  if (fs::exists(sibling)) return sibling;
  return std::nullopt;
}

bool looks_like_header(const fs::path& path, char delimiter) {
  const std::string text = read_text_file(path);
  const std::string_view first(text.data(), std::min(text.find('\n'), text.size()));
  std::size_t pos = 0;
  while (pos <= first.size()) {
    const auto next = first.find(delimiter, pos);
    const auto field = trim(first.substr(pos, next == first.npos ? first.npos : next - pos));
    double v = 0.0;
    const auto* begin = field.data() + (field.starts_with('+') ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(begin, field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) return true;
    if (next == first.npos) break;
    pos = next + 1;
  }
  return false;
}

// Feature matrix for a model with `dims` inputs; a trailing label column is
// accepted and kept.
LabeledSequence load_features(const fs::path& path, std::optional<DatasetSchema> schema, std::size_t dims) {
  CsvSchema csv;
  if (schema) {
    csv = schema->csv();
    csv.feature_columns = 0;
  } else {
    csv.has_header = looks_like_header(path, ',');
  }
  csv.labeled = false;
  LabeledSequence seq = load_csv(path, csv);
  if (seq.dims == dims + 1) {
    csv.labeled = true;
    seq = load_csv(path, csv);
  }
  if (seq.dims != dims) {
    fail(ErrorKind::kDimensionMismatch, path.string() + " has " + std::to_string(seq.dims) +
                                            " feature columns, model expects " + std::to_string(dims));
  }
  return seq;
}

std::optional<ScalerParams> resolve_scaler(const std::string& flag, const fs::path& model, std::ostream& err) {
  const fs::path path = flag.empty() ? sidecar(model, ".scaler.csv") : fs::path(flag);
  if (!flag.empty() || fs::exists(path)) return load_scaler(path);
  err << "warning: no scaler at " << path.string() << "; using raw feature values\n";
  return std::nullopt;
}

void check_model_matches(const FcnModel& model, const DatasetSchema& schema, const fs::path& path) {
  if (model.config.class_count != schema.class_count) {
    fail(ErrorKind::kDimensionMismatch, path.string() + " declares " + std::to_string(schema.class_count) +
                                            " classes, model has " +
                                            std::to_string(model.config.class_count));
  }
}

void validate_tiling(std::size_t subseq_len, double overlap, std::size_t window, std::size_t stride) {
  require(subseq_len >= 1, ErrorKind::kConfig, "subsequence length must be >= 1");
  require(overlap >= 0.0 && overlap < 1.0, ErrorKind::kConfig, "overlap must lie in [0, 1)");
  require(window >= 1 && stride >= 1, ErrorKind::kConfig, "window and stride must be >= 1");
}

// ---------------------------------------------------------------------------

int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve_config(g);
  if (!o.data.empty()) cfg.train_paths = o.data;
  if (!o.schema.empty()) cfg.schema_path = o.schema;
  if (!o.validation.empty()) cfg.validation_path = o.validation;
  require(!cfg.train_paths.empty(), ErrorKind::kConfig,
          "no training data: pass CSV paths or set data.train");
  try {
    cfg.train.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }

  const auto schema_path = find_schema(o.schema, cfg, cfg.train_paths.front());
  require(schema_path.has_value(), ErrorKind::kConfig,
          "no dataset schema: pass --schema, set data.schema, or place schema.txt next to the data");
  const DatasetSchema schema = read_dataset_schema(*schema_path);
  cfg.schema_path = schema_path->string();

  std::vector<LabeledSequence> raw;
  for (const auto& p : cfg.train_paths) raw.push_back(load_csv(p, schema.csv()));
  const ScalerParams scaler = fit_scaler(raw);
  std::vector<LabeledSequence> train_set;
  for (const auto& s : raw) train_set.push_back(apply_scaler(scaler, s));

  cfg.arch.input_rows = train_set.front().dims;
  cfg.arch.class_count = schema.class_count;
  try {
    cfg.arch.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }

  std::seed_seq init_seed{static_cast<std::uint32_t>(cfg.seed()), static_cast<std::uint32_t>(cfg.seed() >> 32),
                          0x1417u};
  Rng init(init_seed);
  const FcnModel initial = build_fcn(cfg.arch, cfg.init, init);
  out << "training " << initial.parameter_count() << " parameters on " << train_set.size()
      << " sequence(s), D=" << cfg.arch.input_rows << " N=" << cfg.arch.class_count << "\n";

  const TrainReport report = train(initial, train_set, cfg.train, [&](std::size_t it, double lr, double loss) {
    if (it == 1 || it % 10 == 0 || it == cfg.train.stop_at) {
      out << "iteration " << it << "/" << cfg.train.stop_at << " lr " << lr << " loss " << loss << "\n";
    }
  });

  const fs::path model_path = o.out;
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  save_model(report.final_model, model_path);
  save_scaler(scaler, sidecar(model_path, ".scaler.csv"));

  std::string loss_csv = "iteration,loss\n";
  for (std::size_t i = 0; i < report.loss_history.size(); ++i) {
    loss_csv += std::to_string(i + 1) + "," + format_real(report.loss_history[i]) + "\n";
  }
  write_text_file(sidecar(model_path, ".loss.csv"), loss_csv);

  RunConfig echo = cfg;
  echo.schema_path = fs::absolute(cfg.schema_path).string();
  for (auto& p : echo.train_paths) p = fs::absolute(p).string();
  if (!echo.validation_path.empty()) echo.validation_path = fs::absolute(echo.validation_path).string();
  std::ostringstream manifest;
  manifest << "# training manifest; usable as --config to repeat this run\n"
           << "# model = " << model_path.string() << "\n"
           << "# parameters = " << report.final_model.parameter_count() << "\n"
           << "# wallSeconds = " << format_real(report.wall_seconds) << "\n"
           << "# finalLoss = " << format_real(report.loss_history.back()) << "\n"
           << format_run_config(echo);
  write_text_file(sidecar(model_path, ".manifest.txt"), manifest.str());

  out << "wrote " << model_path.string() << " (" << std::fixed << std::setprecision(1) << report.wall_seconds
      << " s)\n";
  out.unsetf(std::ios::fixed);

  if (!cfg.validation_path.empty()) {
    const LabeledSequence val = apply_scaler(scaler, load_csv(cfg.validation_path, schema.csv()));
    const auto pred = dense_predict(report.final_model, val,
                                    plan_tiles(val.length, cfg.infer_subseq_len, cfg.infer_overlap),
                                    cfg.threads());
    const LabelSpace space{schema.class_count, schema.null_class};
    const auto cls = classification_report(val.labels, pred.labels, space);
    out << "validation AC " << format_real(cls.accuracy) << " F_w " << format_real(cls.fw_no_null) << "\n";
  }
  (void)err;
  return kExitOk;
}

int cmd_predict(const GlobalOptions& g, const PredictOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve_config(g);
  const std::size_t subseq = o.subseq_len.value_or(cfg.infer_subseq_len);
  const double overlap = o.overlap.value_or(cfg.infer_overlap);
  const std::size_t window = o.window.value_or(cfg.window);
  const std::size_t stride = o.stride.value_or(cfg.window_stride);
  validate_tiling(subseq, overlap, window, stride);
  require(o.mode == "dense" || o.mode == "window", ErrorKind::kConfig, "--mode must be dense or window");

  const FcnModel model = load_model(o.model);
  std::optional<DatasetSchema> schema;
  if (auto p = find_schema(o.schema, cfg, o.data)) {
    schema = read_dataset_schema(*p);
    check_model_matches(model, *schema, *p);
  }
  LabeledSequence seq = load_features(o.data, schema, model.config.input_rows);
  if (auto scaler = resolve_scaler(o.scaler, o.model, err)) seq = apply_scaler(*scaler, seq);

  std::string csv = "index,label";
  std::size_t passes = 0;
  if (o.mode == "dense") {
    const TilePlan plan = plan_tiles(seq.length, subseq, overlap);
    const DensePrediction pred = dense_predict(model, seq, plan, cfg.threads());
    passes = pred.forward_passes;
    for (std::size_t c = 0; c < model.config.class_count; ++c) csv += ",prob_" + std::to_string(c);
    csv += "\n";
    for (std::size_t j = 0; j < seq.length; ++j) {
      csv += std::to_string(j) + "," + std::to_string(pred.labels[j]);
      for (std::size_t c = 0; c < model.config.class_count; ++c) csv += "," + format_real(pred.probs(c, j));
      csv += "\n";
    }
  } else {
    const WindowPrediction pred = window_emulation_predict(model, seq, window, stride);
    passes = pred.forward_passes;
    csv += "\n";
    for (std::size_t j = 0; j < seq.length; ++j) {
      csv += std::to_string(j) + "," + std::to_string(pred.labels[j]) + "\n";
    }
  }
  write_text_file(o.out, csv);
  out << "L=" << seq.length << " N=" << model.config.class_count << " mode=" << o.mode
      << " forwardPasses=" << passes << " -> " << o.out << "\n";
  return kExitOk;
}

std::vector<int> load_prediction_labels(const fs::path& path) {
  CsvSchema csv;
  csv.has_header = true;
  csv.labeled = true;
  csv.label_column = 1;
  return load_csv(path, csv).labels;
}

int cmd_eval(const GlobalOptions& g, const EvalOptions& o, std::ostream& out, std::ostream&) {
  RunConfig cfg = resolve_config(g);
  const auto schema_path = find_schema(o.schema, cfg, o.gt);
  require(schema_path.has_value(), ErrorKind::kConfig, "eval needs a dataset schema (--schema)");
  const DatasetSchema schema = read_dataset_schema(*schema_path);
  CsvSchema gt_csv = schema.csv();
  gt_csv.feature_columns = 0;
  const std::vector<int> gt = load_csv(o.gt, gt_csv).labels;
  const std::vector<int> pred = load_prediction_labels(o.pred);
  if (gt.size() != pred.size()) {
    fail(ErrorKind::kDimensionMismatch, o.gt + " has " + std::to_string(gt.size()) + " labels, " + o.pred +
                                            " has " + std::to_string(pred.size()));
  }
  const LabelSpace space{schema.class_count, schema.null_class};
  const auto cls = classification_report(gt, pred, space);
  const auto mis = misalignment(gt, pred, schema.null_class);

  const fs::path csv_path = o.out;
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  const std::string text = format_report(cls, mis, space);
  write_text_file(csv_path, metrics_csv(cls, mis));
  write_text_file(sidecar(csv_path, ".txt"), text);
  write_text_file(sidecar(csv_path, ".confusion.csv"), confusion_csv(cls.confusion));
  out << text;
  return kExitOk;
}

int cmd_bench(const GlobalOptions& g, const BenchOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve_config(g);
  const std::size_t subseq = o.subseq_len.value_or(cfg.infer_subseq_len);
  const double overlap = o.overlap.value_or(cfg.infer_overlap);
  const std::size_t window = o.window.value_or(cfg.window);
  const std::size_t stride = o.stride.value_or(cfg.window_stride);
  validate_tiling(subseq, overlap, window, stride);

  const FcnModel model = load_model(o.model);
  const std::size_t dims = model.config.input_rows;
  LabeledSequence source;
  if (!o.data.empty()) {
    std::optional<DatasetSchema> schema;
    if (auto p = find_schema(o.schema, cfg, o.data)) schema = read_dataset_schema(*p);
    source = load_features(o.data, schema, dims);
    if (auto scaler = resolve_scaler(o.scaler, o.model, err)) source = apply_scaler(*scaler, source);
  }
  std::vector<std::size_t> lengths = o.lengths;
  if (lengths.empty()) lengths.push_back(o.data.empty() ? 10000 : source.length);

  std::string csv = "sequenceLen,denseSeconds,windowSeconds,speedup,agreement,densePasses,windowPasses,warmupPasses\n";
  for (std::size_t len : lengths) {
    require(len >= window, ErrorKind::kConfig,
            "bench length " + std::to_string(len) + " is shorter than the window");
    LabeledSequence seq;
    if (o.data.empty()) {
      Rng rng(cfg.seed() + len);
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      seq.dims = dims;
      seq.length = len;
      seq.features.resize(dims * len);
      for (float& v : seq.features) v = u(rng);
    } else {
      require(len <= source.length, ErrorKind::kDimensionMismatch,
              "bench length " + std::to_string(len) + " exceeds the " + std::to_string(source.length) +
                  " samples in " + o.data);
      seq = source.slice(0, len);
    }
    const BenchReport r = benchmark(model, seq, plan_tiles(len, subseq, overlap), window, stride);
    out << "L=" << r.sequence_len << " dense " << format_real(r.dense_seconds) << " s (" << r.dense_passes
        << " passes), window " << format_real(r.window_seconds) << " s (" << r.window_passes
        << " passes), speedup " << format_real(r.speedup) << ", agreement "
        << format_real(r.predictions_agree_pct) << "%\n";
    csv += std::to_string(r.sequence_len) + "," + format_real(r.dense_seconds) + "," +
           format_real(r.window_seconds) + "," + format_real(r.speedup) + "," +
           format_real(r.predictions_agree_pct) + "," + std::to_string(r.dense_passes) + "," +
           std::to_string(r.window_passes) + "," + std::to_string(r.warmup_passes) + "\n";
  }
  if (o.out.empty()) {
    out << csv;
  } else {
    write_text_file(o.out, csv);
  }
  return kExitOk;
}

int cmd_synth(const GlobalOptions& g, const SynthOptions& o, std::ostream& out, std::ostream&) {
  SynthSpec spec;
  if (!o.spec.empty()) {
    try {
      spec = read_synth_spec(o.spec);
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, e.what());
    }
  }
  if (g.seed) spec.seed = *g.seed;
  const SynthDataset d = synth_generate(spec);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_csv(d.train, dir / "train.csv");
  write_csv(d.test, dir / "test.csv");
  write_csv(d.validation, dir / "validation.csv");
  DatasetSchema schema;
  schema.class_count = spec.class_count;
  schema.null_class = spec.null_class;
  schema.feature_columns = spec.channels;
  schema.has_header = true;
  write_dataset_schema(schema, dir / "schema.txt");
  out << "wrote train/test/validation (" << d.train.length << "/" << d.test.length << "/"
      << d.validation.length << " samples, " << spec.channels << " channels, " << spec.class_count
      << " classes) to " << dir.string() << "\n";
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kNumeric: return kExitNumeric;
    default: return kExitData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense per-sample activity labeling with a fully convolutional network", "densehar"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "key = value run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--threads", g.threads, "Cap on worker threads");

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train a model on labeled CSV sequences");
  train_cmd->add_option("data", train_o.data, "Training CSV files (default: data.train)");
  train_cmd->add_option("-o,--out", train_o.out, "Model file; sidecars use the same stem")->capture_default_str();
  train_cmd->add_option("--schema", train_o.schema, "Dataset schema file");
  train_cmd->add_option("--validation", train_o.validation, "Validation CSV reported after training");

  PredictOptions pred_o;
  auto* predict_cmd = app.add_subcommand("predict", "Label every sample of a sequence");
  predict_cmd->add_option("data", pred_o.data, "Input CSV")->required();
  predict_cmd->add_option("-m,--model", pred_o.model, "Model file")->required();
  predict_cmd->add_option("-o,--out", pred_o.out, "Prediction CSV")->capture_default_str();
  predict_cmd->add_option("--schema", pred_o.schema, "Dataset schema file");
  predict_cmd->add_option("--scaler", pred_o.scaler, "Scaler CSV (default: model sidecar)");
  predict_cmd->add_option("--mode", pred_o.mode, "dense or window")->capture_default_str();
  predict_cmd->add_option("--subseq-len", pred_o.subseq_len, "Tile length");
  predict_cmd->add_option("--overlap", pred_o.overlap, "Tile overlap fraction");
  predict_cmd->add_option("--window", pred_o.window, "Window length (window mode)");
  predict_cmd->add_option("--stride", pred_o.stride, "Window stride (window mode)");

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("--gt", eval_o.gt, "Ground-truth dataset CSV")->required();
  eval_cmd->add_option("--pred", eval_o.pred, "Prediction CSV")->required();
  eval_cmd->add_option("--schema", eval_o.schema, "Dataset schema file");
  eval_cmd->add_option("-o,--out", eval_o.out, "Metrics CSV; .txt and .confusion.csv written alongside")->capture_default_str();

  BenchOptions bench_o;
  auto* bench_cmd = app.add_subcommand("bench", "Time dense tiling against per-window inference");
  bench_cmd->add_option("data", bench_o.data, "Input CSV (default: uniform random input)");
  bench_cmd->add_option("-m,--model", bench_o.model, "Model file")->required();
  bench_cmd->add_option("-o,--out", bench_o.out, "CSV output (default: stdout)");
  bench_cmd->add_option("--schema", bench_o.schema, "Dataset schema file");
  bench_cmd->add_option("--scaler", bench_o.scaler, "Scaler CSV (default: model sidecar)");
  bench_cmd->add_option("--lengths", bench_o.lengths, "Sequence lengths")->delimiter(',');
  bench_cmd->add_option("--subseq-len", bench_o.subseq_len, "Tile length");
  bench_cmd->add_option("--overlap", bench_o.overlap, "Tile overlap fraction");
  bench_cmd->add_option("--window", bench_o.window, "Window length");
  bench_cmd->add_option("--stride", bench_o.stride, "Window stride");

  SynthOptions synth_o;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic activity dataset");
  synth_cmd->add_option("spec", synth_o.spec, "synth.* spec file (default: built-in spec)");
  synth_cmd->add_option("-o,--out", synth_o.out, "Output directory")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(g, train_o, out, err);
    if (*predict_cmd) return cmd_predict(g, pred_o, out, err);
    if (*eval_cmd) return cmd_eval(g, eval_o, out, err);
    if (*bench_cmd) {
      g.threads = 1;
      return cmd_bench(g, bench_o, out, err);
    }
    if (*synth_cmd) return cmd_synth(g, synth_o, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}

}  // namespace densehar::cli

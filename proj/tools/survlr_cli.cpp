// survlr command-line front end: simulate -> train -> evaluate, cross-validation
// and digits preparation. See README.md for usage.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "survlr/survlr.hpp"

namespace fs = std::filesystem;
using namespace survlr;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kValidation = 2, kData = 3, kNumerical = 4 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput:
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidPlan:
    case ErrorKind::UnsupportedK: return kValidation;
    case ErrorKind::Io:
    case ErrorKind::NoEvents: return kData;
    case ErrorKind::SingularVariance:
    case ErrorKind::UndefinedMetric: return kNumerical;
  }
  return kOther;
}

// Errors raised while reading an input file are data errors, whatever their kind.
template <class F>
auto load(const std::string& path, F&& reader) {
  detail::require(fs::is_regular_file(path), ErrorKind::Io, "input file not found: " + path);
  try {
    return reader(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::Io, e.what());
  }
}

std::string file_hash(const std::string& path) { return fnv1a_hex(read_file(path)); }

std::string default_sidecar(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size() && !text.empty()) {
    const auto stop = std::min(text.find(',', start), text.size());
    const std::string field = text.substr(start, stop - start);
    int v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    detail::require(res.ec == std::errc{} && res.ptr == field.data() + field.size() && v > 0,
                    ErrorKind::InvalidInput, "--hidden expects positive integers separated by commas");
    out.push_back(v);
    start = stop + 1;
  }
  return out;
}

void print_table(const std::string& text) { std::cout << text << std::flush; }

// ------------------------------------------------------------------ options

struct CohortOptions {
  std::string preset = "paper-synthetic";
  int n = 0;
  std::uint64_t seed = 0;
  double separation = 3.0;
  double censor_scale = 10000.0;
  double admin_horizon = 4000.0;
  std::string out;
  std::string meta;
};

struct ModelOptions {
  std::string preset = "paper-synthetic";
  std::string hidden = "16";
  std::string activation = "rectifier";
  int clusters = 3;
  double lr = 0.01;
  int epochs = 50;
  int batch_size = 32;
  double weight_decay = 0.01;
  double penalty_weight = 0.1;
  double prob_floor = 1e-4;
  std::uint64_t seed = 0;
  bool no_standardize = false;
};

struct TrainOptions {
  std::string data;
  ModelOptions model;
  std::string out;
  std::string history;
};

struct EvaluateOptions {
  std::string model;
  std::string data;
  std::string report;
  std::string km;
  std::string svg;
};

struct CvOptionsCli {
  std::string data;
  ModelOptions model;
  int folds = 5;
  int jobs = 1;
  std::string report;
  std::string km;
  std::string svg;
};

struct DigitsOptions {
  std::string digits;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> permutation_seed;
  double censor_scale = 10000.0;
  double admin_horizon = 4000.0;
  std::string out;
  std::string meta;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--preset", m.preset, "Hyperparameter preset")
      ->check(CLI::IsMember({"paper-synthetic", "paper-digits"}))
      ->capture_default_str();
  cmd->add_option("--hidden", m.hidden, "Hidden layer widths, comma separated")->capture_default_str();
  cmd->add_option("--activation", m.activation, "rectifier | tanh | identity")->capture_default_str();
  cmd->add_option("--clusters", m.clusters, "Number of clusters k")->capture_default_str();
  cmd->add_option("--lr", m.lr, "Learning rate")->capture_default_str();
  cmd->add_option("--epochs", m.epochs, "Epochs")->capture_default_str();
  cmd->add_option("--batch-size", m.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--weight-decay", m.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--penalty-weight", m.penalty_weight, "Balance penalty weight lambda")->capture_default_str();
  cmd->add_option("--prob-floor", m.prob_floor, "Floor for class means in the penalty")->capture_default_str();
  cmd->add_option("--seed", m.seed, "Seed for initialization, shuffling and folds")->capture_default_str();
  cmd->add_flag("--no-standardize", m.no_standardize, "Skip feature standardization");
}

// The paper-digits preset replaces the defaults of options not given explicitly.
void apply_preset(CLI::App* cmd, ModelOptions& m) {
  if (m.preset != "paper-digits") return;
  const auto unset = [&](const char* name) { return cmd->get_option(name)->count() == 0; };
  if (unset("--hidden")) m.hidden = "32";
  if (unset("--lr")) m.lr = 0.001;
  if (unset("--epochs")) m.epochs = 20;
  if (unset("--batch-size")) m.batch_size = 64;
}

json model_config_json(const ModelOptions& m) {
  return {{"preset", m.preset},         {"hidden", m.hidden},
          {"activation", m.activation}, {"clusters", m.clusters},
          {"lr", m.lr},                 {"epochs", m.epochs},
          {"batch_size", m.batch_size}, {"weight_decay", m.weight_decay},
          {"penalty_weight", m.penalty_weight}, {"prob_floor", m.prob_floor},
          {"seed", m.seed},             {"standardize", !m.no_standardize}};
}

NetworkSpec network_spec(const ModelOptions& m, Eigen::Index inputs) {
  NetworkSpec spec;
  spec.layer_sizes.push_back(static_cast<int>(inputs));
  for (int h : parse_sizes(m.hidden)) spec.layer_sizes.push_back(h);
  spec.layer_sizes.push_back(m.clusters);
  spec.hidden_activation = parse_activation(m.activation);
  spec.seed = m.seed;
  spec.validate();
  return spec;
}

TrainConfig train_config(const ModelOptions& m) {
  TrainConfig cfg{.learning_rate = m.lr, .epochs = m.epochs, .batch_size = m.batch_size,
                  .weight_decay = m.weight_decay, .seed = m.seed};
  cfg.validate();
  return cfg;
}

LossConfig loss_config(const ModelOptions& m) {
  LossConfig cfg;
  cfg.penalty_weight = m.penalty_weight;
  cfg.prob_floor = m.prob_floor;
  cfg.validate(m.clusters);
  return cfg;
}

json header(const std::string& command, const std::string& hash, std::uint64_t seed) {
  return {{"schema_version", kSchemaVersion}, {"command", command}, {"config_hash", hash}, {"seed", seed}};
}

json cohort_spec_json(const CohortSpec& spec) {
  json groups = json::array();
  for (const auto& g : spec.groups) {
    groups.push_back({{"weibull_shape", g.survival.shape},
                      {"weibull_scale", g.survival.scale},
                      {"mean", std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size())},
                      {"covariance", matrix_json(g.covariance)},
                      {"weight", g.weight}});
  }
  return {{"groups", groups}, {"censor_scale", spec.censor_scale}, {"admin_horizon", spec.admin_horizon},
          {"n", spec.n}, {"seed", spec.seed}};
}

json cohort_summary(std::span<const SurvivalRecord> records, const std::vector<int>& truth, int k) {
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int g : truth) ++sizes[static_cast<std::size_t>(g)];
  std::size_t events = 0;
  for (const auto& r : records) events += r.event;
  return {{"subjects", records.size()},
          {"events", events},
          {"censored_fraction", 1.0 - static_cast<double>(events) / static_cast<double>(records.size())},
          {"group_sizes", sizes}};
}

void write_km(const std::string& km_path, const std::string& svg_path, const MatrixD& probs,
              std::span<const SurvivalRecord> records, const std::string& hash, std::uint64_t seed) {
  if (km_path.empty() && svg_path.empty()) return;
  const auto curves = km_by_cluster(argmax_rows(probs), records, static_cast<int>(probs.cols()));
  if (!km_path.empty()) write_file_atomic(km_path, csv_provenance(hash, seed) + km_csv(curves));
  if (!svg_path.empty()) write_file_atomic(svg_path, km_svg(curves));
}

// ------------------------------------------------------------------ commands

int cmd_simulate(const CohortOptions& o) {
  auto spec = paper_synthetic_spec(o.n, o.seed, o.separation);
  spec.censor_scale = o.censor_scale;
  spec.admin_horizon = o.admin_horizon;
  spec.validate();
  const json config = {{"preset", o.preset},        {"n", o.n},
                       {"seed", o.seed},            {"separation", o.separation},
                       {"censor_scale", o.censor_scale}, {"admin_horizon", o.admin_horizon}};
  const std::string hash = config_hash(config);
  const auto cohort = generate_cohort(spec);
  write_file_atomic(o.out, csv_provenance(hash, o.seed) + cohort_csv(cohort.features, cohort.records, cohort.truth));
  json meta = header("simulate", hash, o.seed);
  meta["config"] = config;
  meta["cohort_spec"] = cohort_spec_json(spec);
  meta["summary"] = cohort_summary(cohort.records, cohort.truth, 3);
  write_file_atomic(o.meta.empty() ? default_sidecar(o.out, ".meta.json") : o.meta, meta.dump(2) + "\n");
  std::cout << "wrote " << o.out << " (" << o.n << " subjects, config " << hash << ")\n";
  return kOk;
}

int cmd_digits(const DigitsOptions& o) {
  const auto digits = load(o.digits, [](const std::string& p) { return read_digits_csv(p); });
  std::vector<int> kept;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < digits.digits.size(); ++i)
    if (digits.digits[i] != 0) {
      kept.push_back(digits.digits[i]);
      rows.push_back(i);
    }
  const auto truth = digits_to_groups(kept, o.permutation_seed);
  const auto laws = paper_weibull_groups();
  detail::require(o.censor_scale > 0.0 && o.admin_horizon > 0.0, ErrorKind::InvalidSpec,
                  "censor scale and administrative horizon must be positive");
  std::mt19937_64 rng(o.seed);
  const auto records = simulate_survival(truth, laws, o.censor_scale, o.admin_horizon, rng);
  const MatrixD pixels = select_rows(digits.pixels, rows);

  json config = {{"digits_hash", file_hash(o.digits)}, {"seed", o.seed},
                 {"censor_scale", o.censor_scale},     {"admin_horizon", o.admin_horizon}};
  config["permutation_seed"] = o.permutation_seed ? json(*o.permutation_seed) : json(nullptr);
  const std::string hash = config_hash(config);
  write_file_atomic(o.out, csv_provenance(hash, o.seed) + cohort_csv(pixels, records, truth));
  json meta = header("digits-prep", hash, o.seed);
  meta["config"] = config;
  const auto map = digit_group_map(o.permutation_seed);
  json mapping = json::object();
  for (int d = 1; d <= 9; ++d) mapping[std::to_string(d)] = map[static_cast<std::size_t>(d - 1)];
  meta["digit_to_group"] = mapping;
  json groups = json::array();
  for (const auto& g : laws) groups.push_back({{"weibull_shape", g.shape}, {"weibull_scale", g.scale}});
  meta["survival_groups"] = groups;
  meta["excluded_digit_zero"] = digits.digits.size() - kept.size();
  meta["summary"] = cohort_summary(records, truth, 3);
  write_file_atomic(o.meta.empty() ? default_sidecar(o.out, ".meta.json") : o.meta, meta.dump(2) + "\n");
  std::cout << "wrote " << o.out << " (" << kept.size() << " images, config " << hash << ")\n";
  return kOk;
}

int cmd_train(const TrainOptions& o) {
  const auto data = load(o.data, [](const std::string& p) { return read_cohort_csv(p); });
  const auto& m = o.model;
  const auto spec = network_spec(m, data.features.cols());
  const auto cfg = train_config(m);
  const auto loss = loss_config(m);
  json config = model_config_json(m);
  config["data_hash"] = file_hash(o.data);
  const std::string hash = config_hash(config);

  Checkpoint ckpt;
  ckpt.config_hash = hash;
  if (!m.no_standardize) ckpt.standardizer = Standardizer::fit(data.features);
  const MatrixD x = m.no_standardize ? data.features : ckpt.standardizer.apply(data.features);
  auto result = train(spec, data.records, x, cfg, loss);
  order_clusters_by_risk(result.network, x, data.records);
  ckpt.network = result.network;

  save_checkpoint(o.out, ckpt);
  const std::string history = o.history.empty() ? default_sidecar(o.out, ".history.csv") : o.history;
  write_file_atomic(history, csv_provenance(hash, m.seed) + history_csv(result));
  std::cout << "trained " << spec.layer_sizes.front();
  for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) std::cout << "->" << spec.layer_sizes[l];
  std::cout << " for " << cfg.epochs << " epochs: objective " << format_double(result.initial.objective)
            << " -> " << format_double(result.history.back().objective) << " (" << result.steps << " steps, "
            << result.skipped_batches << " skipped batches)\nwrote " << o.out << " and " << history << "\n";
  return kOk;
}

int cmd_evaluate(const EvaluateOptions& o) {
  const auto ckpt = load(o.model, [](const std::string& p) { return load_checkpoint(p); });
  const auto data = load(o.data, [](const std::string& p) { return read_cohort_csv(p); });
  detail::require(data.features.cols() == ckpt.network.spec.inputs(), ErrorKind::InvalidInput,
                  "cohort has " + std::to_string(data.features.cols()) + " features, model expects " +
                      std::to_string(ckpt.network.spec.inputs()));
  const MatrixD x = ckpt.standardizer.empty() ? data.features : ckpt.standardizer.apply(data.features);
  const MatrixD probs = forward(ckpt.network, x).probs();
  const auto report = recovery_report(probs, data.records, data.truth);

  const json config = {{"model_hash", file_hash(o.model)}, {"data_hash", file_hash(o.data)}};
  const std::string hash = config_hash(config);
  const auto seed = ckpt.network.spec.seed;
  json out = header("evaluate", hash, seed);
  out["model_config_hash"] = ckpt.config_hash;
  out["roc_scores"] = "soft_probabilities";
  out["report"] = report_json(report);
  write_file_atomic(o.report, out.dump(2) + "\n");
  write_km(o.km, o.svg, probs, data.records, hash, seed);
  print_table(report_table(report, "evaluation of " + o.model + " on " + o.data));
  return kOk;
}

int cmd_cv(const CvOptionsCli& o) {
  const auto data = load(o.data, [](const std::string& p) { return read_cohort_csv(p); });
  const auto& m = o.model;
  const auto spec = network_spec(m, data.features.cols());
  const auto cfg = train_config(m);
  const auto loss = loss_config(m);
  detail::require(o.jobs >= 1, ErrorKind::InvalidInput, "--jobs must be >= 1");
  const auto plan = FoldPlan::make(data.records.size(), o.folds, m.seed);

  json config = model_config_json(m);
  config["folds"] = o.folds;
  config["data_hash"] = file_hash(o.data);
  const std::string hash = config_hash(config);

  const auto result = run_cv_experiment(data.features, data.records, data.truth, spec, cfg, loss, plan,
                                        CvOptions{.standardize = !m.no_standardize, .jobs = o.jobs});
  json out = header("cv", hash, m.seed);
  out["config"] = config;
  out["roc_scores"] = "soft_probabilities";
  json folds = json::array();
  for (const auto& f : result.folds) {
    folds.push_back({{"fold", f.fold},
                     {"train_subjects", f.train.size()},
                     {"test_subjects", f.test.size()},
                     {"final_objective", f.training.history.back().objective},
                     {"skipped_batches", f.training.skipped_batches},
                     {"report", report_json(f.report)}});
  }
  out["folds"] = folds;
  out["pooled"] = report_json(result.pooled);
  write_file_atomic(o.report, out.dump(2) + "\n");
  write_km(o.km, o.svg, result.pooled_probs, data.records, hash, m.seed);
  print_table(report_table(result.pooled, std::to_string(o.folds) + "-fold cross-validation, pooled withheld folds"));
  return kOk;
}

// ------------------------------------------------------------------ config files

// Values from the command's section of a JSON config become leading argument
// tokens, so explicit flags (parsed later, last value wins) override them.
std::vector<std::string> config_tokens(const std::string& path, const std::string& command) {
  const auto text = load(path, [](const std::string& p) { return read_file(p); });
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path + ": " + e.what());
  }
  std::vector<std::string> tokens;
  if (!doc.contains(command)) return tokens;
  detail::require(doc[command].is_object(), ErrorKind::InvalidInput,
                  path + ": section '" + command + "' must be an object");
  for (const auto& [key, value] : doc[command].items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      tokens.insert(tokens.end(), {flag, joined});
    } else if (value.is_string()) {
      tokens.insert(tokens.end(), {flag, value.get<std::string>()});
    } else {
      tokens.insert(tokens.end(), {flag, value.dump()});
    }
  }
  return tokens;
}

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  static const std::vector<std::string> commands{"simulate", "train", "evaluate", "cv", "digits-prep"};
  std::size_t cmd = 0;
  for (std::size_t i = 1; i < args.size() && cmd == 0; ++i)
    if (std::find(commands.begin(), commands.end(), args[i]) != commands.end()) cmd = i;
  if (cmd == 0) return args;
  std::string config;
  for (std::size_t i = cmd + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty()) return args;
  auto tokens = config_tokens(config, args[cmd]);
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(cmd) + 1, tokens.begin(), tokens.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"survlr: survival clustering with a partial multivariate logrank objective"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  CohortOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort CSV");
  simulate->add_option("--config", config_path, "JSON config file with a 'simulate' section");
  simulate->add_option("--preset", sim.preset, "Cohort preset")
      ->check(CLI::IsMember({"paper-synthetic"}))
      ->capture_default_str();
  simulate->add_option("--n", sim.n, "Number of subjects")->required();
  simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  simulate->add_option("--separation", sim.separation, "Side of the triangle of feature means")
      ->capture_default_str();
  simulate->add_option("--censor-scale", sim.censor_scale, "Mean of exponential censoring")->capture_default_str();
  simulate->add_option("--admin-horizon", sim.admin_horizon, "Administrative censoring time")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output cohort CSV")->required();
  simulate->add_option("--meta", sim.meta, "Metadata JSON (default <out stem>.meta.json)");

  DigitsOptions dig;
  auto* digits = app.add_subcommand("digits-prep", "Build a survival cohort from an 8x8 digits CSV");
  digits->add_option("--config", config_path, "JSON config file with a 'digits-prep' section");
  digits->add_option("--digits", dig.digits, "CSV with columns digit,pixel_0..pixel_63")->required();
  digits->add_option("--seed", dig.seed, "Seed for survival and censoring draws")->capture_default_str();
  digits->add_option("--permutation-seed", dig.permutation_seed,
                     "Shuffle digits before grouping (default: 1-3, 4-6, 7-9)");
  digits->add_option("--censor-scale", dig.censor_scale, "Mean of exponential censoring")->capture_default_str();
  digits->add_option("--admin-horizon", dig.admin_horizon, "Administrative censoring time")->capture_default_str();
  digits->add_option("--out", dig.out, "Output cohort CSV")->required();
  digits->add_option("--meta", dig.meta, "Metadata JSON (default <out stem>.meta.json)");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a clustering network on a cohort CSV");
  train_cmd->add_option("--config", config_path, "JSON config file with a 'train' section");
  train_cmd->add_option("--data", tr.data, "Cohort CSV")->required();
  add_model_options(train_cmd, tr.model);
  train_cmd->add_option("--out", tr.out, "Checkpoint JSON")->required();
  train_cmd->add_option("--history", tr.history, "History CSV (default <out stem>.history.csv)");

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Apply a checkpoint to a cohort and report");
  evaluate->add_option("--config", config_path, "JSON config file with an 'evaluate' section");
  evaluate->add_option("--model", ev.model, "Checkpoint JSON")->required();
  evaluate->add_option("--data", ev.data, "Cohort CSV")->required();
  evaluate->add_option("--report", ev.report, "Report JSON")->required();
  evaluate->add_option("--km", ev.km, "Kaplan-Meier CSV per predicted cluster");
  evaluate->add_option("--svg", ev.svg, "Kaplan-Meier SVG plot");

  CvOptionsCli cv;
  auto* cv_cmd = app.add_subcommand("cv", "Cross-validated training and pooled evaluation");
  cv_cmd->add_option("--config", config_path, "JSON config file with a 'cv' section");
  cv_cmd->add_option("--data", cv.data, "Cohort CSV")->required();
  add_model_options(cv_cmd, cv.model);
  cv_cmd->add_option("--folds", cv.folds, "Number of folds")->capture_default_str();
  cv_cmd->add_option("--jobs", cv.jobs, "Folds trained in parallel")->capture_default_str();
  cv_cmd->add_option("--report", cv.report, "Report JSON")->required();
  cv_cmd->add_option("--km", cv.km, "Kaplan-Meier CSV of pooled predicted clusters");
  cv_cmd->add_option("--svg", cv.svg, "Kaplan-Meier SVG plot");

  try {
    auto args = expand_config(argc, argv);
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    try {
      app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? kOk : kValidation;
    }
    if (*simulate) return cmd_simulate(sim);
    if (*digits) return cmd_digits(dig);
    if (*train_cmd) {
      apply_preset(train_cmd, tr.model);
      return cmd_train(tr);
    }
    if (*evaluate) return cmd_evaluate(ev);
    if (*cv_cmd) {
      apply_preset(cv_cmd, cv.model);
      return cmd_cv(cv);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}

#include <ostream>

#include "CLI11.hpp"
#include "selbias/cli/commands.hpp"

namespace selbias::cli {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> annotators;
  std::optional<int> components;
  std::optional<int> resamples;
  std::optional<std::string> annotations, correctness, truth, report;
  std::vector<std::string> sets;
};

// Defaults, then the config file, then SELBIAS_* variables, then flags.
RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg.load_file(f.config);
  cfg.load_environment();
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kInvalidConfig, "--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  if (f.out) cfg.set("out", *f.out);
  if (f.annotators) cfg.set("annotators", std::to_string(*f.annotators));
  if (f.components) cfg.set("em_components", std::to_string(*f.components));
  if (f.resamples) cfg.set("resamples", std::to_string(*f.resamples));
  if (f.annotations) cfg.set("annotations", *f.annotations);
  if (f.correctness) cfg.set("correctness", *f.correctness);
  if (f.truth) cfg.set("truth", *f.truth);
  if (f.report) cfg.set("report", *f.report);
  cfg.validate();
  return cfg;
}

std::string key_help() {
  std::string s = "Config keys (file lines 'key = value', env SELBIAS_<KEY>):\n";
  for (const auto& k : known_keys()) {
    s += "  " + k.name + " [" + k.default_value + "]  " + k.help + "\n";
  }
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selection-frequency matching bias: simulation and estimation"};
  app.footer(key_help());
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "flat key = value config file");
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--annotators", f.annotators, "annotators per item");
  app.add_option("--components", f.components, "beta mixture components");
  app.add_option("--resamples", f.resamples, "bootstrap resamples");
  app.add_option("--annotations", f.annotations, "annotations.csv");
  app.add_option("--correctness", f.correctness, "correctness.csv");
  app.add_option("--truth", f.truth, "truth.csv (verify only)");
  app.add_option("--report", f.report, "report.json (verify, series scatter)");
  app.add_option("--set", f.sets, "override any config key: key=value")->allow_extra_args(false);

  CommandInputs inputs;
  auto* simulate = app.add_subcommand("simulate", "write a synthetic population");
  auto* match = app.add_subcommand("match", "match a source dataset to a target");
  auto* estimate = app.add_subcommand("estimate", "run every accuracy estimator");
  estimate->add_option("inputs", inputs.files, "annotations/correctness CSVs");
  auto* verify = app.add_subcommand("verify", "compare a report with ground truth");
  auto* series = app.add_subcommand("series", "write a plot-ready CSV series");
  series->add_option("which", inputs.series, "series kind")
      ->required()
      ->check(CLI::IsMember(series_kinds()));
  auto* em = app.add_subcommand("em-fit", "fit beta-binomial mixtures");
  auto* spline = app.add_subcommand("spline-fit", "fit accuracy-vs-frequency splines");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const RunConfig cfg = resolve(f);
    if (simulate->parsed()) return cmd_simulate(cfg, out);
    if (match->parsed()) return cmd_match(cfg, out);
    if (estimate->parsed()) return cmd_estimate(cfg, inputs, out);
    if (verify->parsed()) return cmd_verify(cfg, out);
    if (series->parsed()) return cmd_series(cfg, inputs, out);
    if (em->parsed()) return cmd_em_fit(cfg, out);
    if (spline->parsed()) return cmd_spline_fit(cfg, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}

}  // namespace selbias::cli

#include "selbias/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "selbias/cli/io.hpp"
#include "selbias/estimators.hpp"
#include "selbias/matching.hpp"
#include "selbias/parametric.hpp"
#include "selbias/quadrature.hpp"
#include "selbias/rng.hpp"

namespace selbias::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr DatasetTag kTags[] = {DatasetTag::kV1, DatasetTag::kV2, DatasetTag::kCandidate};
constexpr std::uint8_t kMissing = 2;

// Seed salts; one per consumer so stages never share a stream.
constexpr std::uint64_t kSaltAnnotate = 0xA0;
constexpr std::uint64_t kSaltCorrectness = 0xC0;
constexpr std::uint64_t kSaltMatch = 0x3A7C;
constexpr std::uint64_t kSaltEm = 0xE000;
constexpr std::uint64_t kSaltBootstrap = 0xB000;
constexpr std::uint64_t kSaltSlope = 0x5100;
constexpr std::uint64_t kSaltSeries = 0x5E00;

int tag_index(DatasetTag t) { return static_cast<int>(t); }

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.path("out")) / name).string();
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
  const std::string p = cfg.path(key);
  if (p.empty()) {
    throw Error(ErrorKind::kMissingPrerequisite, "no " + key + " file given (--" + key + ")");
  }
  if (!fs::exists(p)) throw Error(ErrorKind::kMissingPrerequisite, key + " file not found: " + p);
  return p;
}

std::string items_digest(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  return sha256_hex(joined);
}

json error_json(const Error& e) {
  return json{{"kind", to_string(e.kind())}, {"message", e.what()}};
}

// Annotations plus optional correctness, aligned by item.
struct Data {
  std::vector<AnnotationRecord> records;
  bool draws_column = false;
  int n = 0;
  std::map<DatasetTag, std::vector<std::size_t>> by_tag;
  bool has_correctness = false;
  std::vector<std::string> models;
  std::vector<std::vector<std::uint8_t>> bits;  // [model][record], kMissing if absent

  bool has(DatasetTag t) const { return by_tag.count(t) && !by_tag.at(t).empty(); }

  std::vector<AnnotationRecord> gather(DatasetTag t) const {
    std::vector<AnnotationRecord> out;
    if (!by_tag.count(t)) return out;
    for (std::size_t i : by_tag.at(t)) out.push_back(records[i]);
    return out;
  }

  std::vector<AnnotationRecord> require(DatasetTag t) const {
    if (!has(t)) {
      throw Error(ErrorKind::kMissingPrerequisite,
                  std::string("annotations contain no ") + to_string(t) + " items");
    }
    return gather(t);
  }

  std::vector<std::uint8_t> correct(std::size_t model, DatasetTag t) const {
    if (!has_correctness) {
      throw Error(ErrorKind::kMissingPrerequisite, "no correctness data");
    }
    require(t);
    std::vector<std::uint8_t> out;
    for (std::size_t i : by_tag.at(t)) {
      if (bits[model][i] == kMissing) {
        throw Error(ErrorKind::kMissingPrerequisite,
                    "model " + models[model] + " has no correctness for item " + records[i].item_id);
      }
      out.push_back(bits[model][i]);
    }
    return out;
  }

  bool all_draws(DatasetTag t) const {
    if (!has(t)) return false;
    for (std::size_t i : by_tag.at(t)) {
      if (!records[i].has_draws()) return false;
    }
    return true;
  }
};

Data load_annotations(const RunConfig& cfg, const std::string& path) {
  Data d;
  auto file = read_annotations(path);
  d.records = std::move(file.records);
  d.draws_column = file.has_draws_column;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    if (!seen.insert(r.item_id).second) {
      throw Error(ErrorKind::kSchemaViolation,
                  path + ": row " + std::to_string(i + 1) + ", column item_id: duplicate id " +
                      r.item_id);
    }
    if (i == 0) d.n = r.n_annotators;
    if (r.n_annotators != d.n) {
      throw Error(ErrorKind::kSchemaViolation,
                  path + ": row " + std::to_string(i + 1) +
                      ", column n_annotators: every item needs the same annotator count");
    }
    d.by_tag[r.dataset].push_back(i);
  }
  if (cfg.is_set("annotators") && !d.records.empty() && cfg.annotators() != d.n) {
    const int want = cfg.annotators();
    bool draws = true;
    for (const auto& r : d.records) draws = draws && r.has_draws();
    if (want > d.n || !draws) {
      throw Error(ErrorKind::kInvalidConfig,
                  "config key 'annotators': cannot use " + std::to_string(want) + " of " +
                      std::to_string(d.n) + " annotators" + (draws ? "" : " without draws"));
    }
    d.records = first_annotators(d.records, want);
    d.n = want;
  }
  return d;
}

void load_correctness(Data& d, const std::string& path) {
  const auto recs = read_correctness(path);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < d.records.size(); ++i) index[d.records[i].item_id] = i;
  std::map<std::string, std::size_t> model_index;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    const auto& c = recs[r];
    const auto it = index.find(c.item_id);
    if (it == index.end()) {
      throw Error(ErrorKind::kSchemaViolation, path + ": row " + std::to_string(r + 1) +
                                                   ", column item_id: unknown item " + c.item_id);
    }
    auto m = model_index.find(c.model_name);
    if (m == model_index.end()) {
      m = model_index.emplace(c.model_name, d.models.size()).first;
      d.models.push_back(c.model_name);
      d.bits.emplace_back(d.records.size(), kMissing);
    }
    auto& slot = d.bits[m->second][it->second];
    if (slot != kMissing) {
      throw Error(ErrorKind::kSchemaViolation, path + ": row " + std::to_string(r + 1) +
                                                   ": duplicate (item_id, model_name)");
    }
    slot = c.correct ? 1 : 0;
  }
  d.has_correctness = true;
}

json estimate_json(const AccuracyEstimate& e, std::uint64_t seed, const std::string& hash) {
  json j;
  j["method"] = to_string(e.method);
  j["value"] = e.value;
  j["ci"] = e.ci ? json{{"lo", e.ci->lo}, {"hi", e.ci->hi}} : json(nullptr);
  j["annotators_used"] = e.annotators_used;
  if (e.dropped_mass > 0.0) {
    j["dropped_mass"] = e.dropped_mass;
    j["dropped_buckets"] = e.dropped_buckets;
  }
  j["seed"] = seed;
  j["config_hash"] = hash;
  return j;
}

json fit_json(const MixtureFitResult& f) {
  json comps = json::array();
  for (const auto& c : f.mixture.components()) {
    comps.push_back({{"weight", c.weight}, {"alpha", c.params.alpha}, {"beta", c.params.beta}});
  }
  return json{{"components", comps},
              {"log_likelihood", f.log_likelihood},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"restarts", f.restarts_used},
              {"best_restart", f.best_restart},
              {"degenerate", f.degenerate}};
}

// Runs one stage, turning library errors into report entries.
class StageRunner {
 public:
  json errors = json::array();
  int worst = kOk;

  template <class F>
  json run(const std::string& stage, const std::string& model, F&& body) {
    try {
      return body();
    } catch (const Error& e) {
      return record(stage, model, e);
    } catch (const std::exception& e) {
      return record(stage, model, Error(ErrorKind::kDegenerateFit, e.what()));
    }
  }

  json record(const std::string& stage, const std::string& model, const Error& e) {
    json entry{{"stage", stage}};
    entry["model"] = model.empty() ? json(nullptr) : json(model);
    entry["kind"] = to_string(e.kind());
    entry["message"] = e.what();
    errors.push_back(entry);
    worst = std::max(worst, exit_code_for(e.kind()));
    return json{{"error", error_json(e)}};
  }
};

bool ok(const json& j) { return j.is_object() && !j.contains("error"); }

struct SeriesRow {
  std::string series;
  double x = 0.0, y = 0.0;
  std::optional<ConfidenceInterval> ci;
};

std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::string s = "series,x,y,ci_lo,ci_hi\n";
  for (const auto& r : rows) {
    s += csv_field(r.series) + "," + format_number(r.x) + "," + format_number(r.y) + ",";
    if (r.ci) s += format_number(r.ci->lo) + "," + format_number(r.ci->hi);
    else s += ",";
    s += "\n";
  }
  return s;
}

std::vector<SeriesRow> histogram_rows(const Data& d) {
  std::vector<SeriesRow> rows;
  for (auto t : kTags) {
    if (!d.has(t)) continue;
    const auto pmf = empirical_pmf(d.gather(t));
    for (int k = 0; k <= d.n; ++k) {
      rows.push_back({to_string(t), d.n == 0 ? 0.0 : static_cast<double>(k) / d.n, pmf[k], {}});
    }
  }
  return rows;
}

MixtureFitResult fit_tag(const RunConfig& cfg, const Data& d, DatasetTag t) {
  return em_fit(d.require(t), cfg.em(), stream_key(cfg.seed(), kSaltEm + tag_index(t)));
}

std::vector<SeriesRow> overlay_rows(const std::map<DatasetTag, MixtureFitResult>& fits,
                                    const Data& d) {
  std::vector<SeriesRow> rows;
  for (const auto& [t, fit] : fits) {
    const auto rep = fit_report(fit, selection_counts(d.gather(t)), d.n);
    const std::string tag = to_string(t);
    for (std::size_t k = 0; k < rep.levels.size(); ++k) {
      rows.push_back({tag + "/observed", rep.levels[k], rep.observed[k], {}});
    }
    for (std::size_t k = 0; k < rep.levels.size(); ++k) {
      rows.push_back({tag + "/induced", rep.levels[k], rep.induced[k], {}});
    }
    for (std::size_t i = 0; i < rep.grid.size(); ++i) {
      rows.push_back({tag + "/density", rep.grid[i], rep.density[i], {}});
    }
  }
  return rows;
}

// Constant correctness pins g to that constant; otherwise least squares.
SplineModel fit_accuracy_curve(const std::vector<AnnotationRecord>& source,
                               const std::vector<std::uint8_t>& bits,
                               const MixtureFitResult& source_fit, int n, const RunConfig& cfg,
                               const QuadratureGrid& grid) {
  if (!bits.empty() && std::all_of(bits.begin(), bits.end(), [&](auto b) { return b == bits[0]; })) {
    const auto knots = SplineModel::equally_spaced_knots(cfg.spline().interior_knots);
    std::vector<double> coef(knots.size(), 0.0);
    coef[0] = bits[0];
    return SplineModel(knots, coef);
  }
  return spline_fit(joint_probabilities(source, bits), source_fit.mixture, n, cfg.spline(), grid);
}

json spline_json(const SplineModel& g) {
  return json{{"knots", g.knots()},
              {"coefficients", g.coefficients()},
              {"condition_number", g.condition_number},
              {"clamped", g.clamped}};
}

// Wilson score interval.
ConfidenceInterval wilson(double hits, double total) {
  const double z = 1.959963984540054;
  const double p = hits / total;
  const double denom = 1 + z * z / total;
  const double centre = (p + z * z / (2 * total)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom;
  return {std::clamp(centre - half, 0.0, p), std::clamp(centre + half, p, 1.0)};
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& k : known_keys()) {
    if (!k.path) j[k.name] = cfg.raw(k.name);
  }
  return j;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig:
      return kUsage;
    case ErrorKind::kSchemaViolation:
    case ErrorKind::kIoError:
    case ErrorKind::kTruthUnavailable:
    case ErrorKind::kMissingPrerequisite:
    case ErrorKind::kEmptyDataset:
      return kData;
    default:
      return kNumerical;
  }
}

const std::vector<std::string>& series_kinds() {
  static const std::vector<std::string> kinds{"histograms",          "conditional_accuracy",
                                              "subsample_curve",     "jackknife_linearity",
                                              "fit_overlay",         "scatter"};
  return kinds;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  std::map<DatasetTag, BetaMixture> mixtures;
  std::map<DatasetTag, std::size_t> counts;
  for (auto t : kTags) {
    mixtures[t] = cfg.mixture(t);
    counts[t] = cfg.count(t);
  }
  const std::uint64_t seed = cfg.seed();
  const auto items = generate_population(mixtures, counts, seed);
  const auto ann = annotate(items, {cfg.annotators()}, stream_key(seed, kSaltAnnotate), cfg.keep_draws());
  const auto names = cfg.models();
  const auto curves = cfg.curves();
  std::vector<std::pair<std::string, AccuracyCurve>> models;
  for (std::size_t m = 0; m < names.size(); ++m) models.push_back({names[m], curves[m]});
  const auto correct = simulate_correctness(items, models, stream_key(seed, kSaltCorrectness));

  write_annotations(out_path(cfg, "annotations.csv"), ann, cfg.keep_draws());
  write_correctness(out_path(cfg, "correctness.csv"), correct);
  write_truth(out_path(cfg, "truth.csv"), items);
  log << "simulate: " << items.size() << " items, " << names.size() << " models -> "
      << cfg.path("out") << "\n";
  return kOk;
}

int cmd_match(const RunConfig& cfg, std::ostream& log) {
  const Data d = load_annotations(cfg, require_path(cfg, "annotations"));
  const auto source_tag = cfg.match_source();
  const auto target_tag = cfg.match_target();
  const auto source = d.require(source_tag);
  const auto target = d.require(target_tag);
  const std::uint64_t seed = stream_key(cfg.seed(), kSaltMatch);

  MatchedDataset matched;
  if (cfg.match_method() == MatchMethod::kHistogram) {
    matched = histogram_match(target, source, cfg.histogram_spec(), cfg.sample_size(), seed,
                              cfg.exhaustion());
  } else {
    const auto tp = empirical_pmf(target);
    const auto sp = empirical_pmf(source);
    matched = rejection_match(source, [&](int k) { return tp[k]; }, [&](int k) { return sp[k]; },
                              seed);
  }
  std::vector<AnnotationRecord> rows;
  for (std::size_t i : matched.selected) rows.push_back(source[i]);
  write_annotations(out_path(cfg, "matched.csv"), rows, d.draws_column);

  json m;
  m["command"] = "match";
  m["seed"] = cfg.seed();
  m["config_hash"] = cfg.hash();
  m["method"] = to_string(matched.method);
  m["source"] = to_string(source_tag);
  m["target"] = to_string(target_tag);
  m["annotators"] = d.n;
  m["source_items"] = source.size();
  m["target_items"] = target.size();
  m["selected"] = matched.selected.size();
  if (matched.method == MatchMethod::kHistogram) {
    m["bin_edges"] = cfg.histogram_spec().edges;
    m["requested_per_bin"] = matched.requested_per_bin;
    m["selected_per_bin"] = matched.selected_per_bin;
  }
  m["matched_items_digest"] = items_digest(matched.selected_item_ids);
  m["files"] = {"matched.csv"};
  write_text(out_path(cfg, "manifest.json"), m.dump(2) + "\n");
  log << "match: selected " << matched.selected.size() << " of " << source.size() << "\n";
  return kOk;
}

int cmd_estimate(const RunConfig& cfg, const CommandInputs& inputs, std::ostream& log) {
  std::string ann_path = cfg.path("annotations");
  std::string corr_path = cfg.path("correctness");
  // Blindness: ground truth must never reach the estimators.
  std::vector<std::string> candidates = inputs.files;
  if (!ann_path.empty()) candidates.push_back(ann_path);
  if (!corr_path.empty()) candidates.push_back(corr_path);
  for (const auto& f : candidates) {
    if (fs::path(f).filename() == "truth.csv" || (fs::exists(f) && sniff(f) == FileKind::kTruth)) {
      throw Error(ErrorKind::kInvalidConfig, "estimate refuses ground-truth input " + f);
    }
  }
  for (const auto& f : inputs.files) {
    if (!fs::exists(f)) throw Error(ErrorKind::kMissingPrerequisite, "input not found: " + f);
    switch (sniff(f)) {
      case FileKind::kAnnotations:
        ann_path = f;
        break;
      case FileKind::kCorrectness:
        corr_path = f;
        break;
      default:
        throw Error(ErrorKind::kSchemaViolation, f + ": unrecognized CSV header");
    }
  }
  if (ann_path.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no annotations file given");
  if (!fs::exists(ann_path)) throw Error(ErrorKind::kMissingPrerequisite, "not found: " + ann_path);

  Data d = load_annotations(cfg, ann_path);
  StageRunner stages;
  if (!corr_path.empty()) {
    if (!fs::exists(corr_path)) {
      stages.record("load_correctness", "",
                    Error(ErrorKind::kMissingPrerequisite, "not found: " + corr_path));
    } else {
      load_correctness(d, corr_path);
    }
  } else {
    stages.record("load_correctness", "",
                  Error(ErrorKind::kMissingPrerequisite, "no correctness file given"));
  }

  const std::uint64_t seed = cfg.seed();
  const std::string hash = cfg.hash();
  const int resamples = cfg.resamples();
  const double level = cfg.ci_level();
  const auto grid = QuadratureGrid::composite_gauss_legendre(cfg.grid_panels(), 4);

  json report;
  report["format"] = "selbias-report-1";
  report["seed"] = seed;
  report["config_hash"] = hash;
  report["config"] = config_json(cfg);
  {
    std::vector<std::string> ids;
    for (const auto& r : d.records) ids.push_back(r.item_id);
    json in;
    in["items"] = d.records.size();
    in["items_digest"] = items_digest(ids);
    in["annotators"] = d.n;
    json counts = json::object();
    for (auto t : kTags) counts[to_string(t)] = d.has(t) ? d.by_tag.at(t).size() : 0;
    in["datasets"] = counts;
    in["models"] = d.models;
    in["draws"] = d.all_draws(DatasetTag::kV1) && d.all_draws(DatasetTag::kV2);
    report["inputs"] = in;
  }

  auto stage_seed = [&](std::size_t m, int stage) {
    return stream_key(seed, kSaltBootstrap + 16 * m + stage);
  };
  const std::vector<std::string> model_names =
      d.models.empty() ? std::vector<std::string>{""} : d.models;

  // raw -> naive -> jackknife per model.
  std::vector<json> per_model(model_names.size());
  for (std::size_t m = 0; m < model_names.size(); ++m) {
    const std::string& name = model_names[m];
    json est;
    for (auto [label, tag, id] : {std::tuple{"raw_v1", DatasetTag::kV1, 0},
                                  std::tuple{"raw_v2", DatasetTag::kV2, 1}}) {
      est[label] = stages.run(label, name, [&, tag = tag, id = id] {
        if (name.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no correctness data");
        const auto bits = d.correct(m, tag);
        auto e = raw_accuracy(bits);
        e.ci = bootstrap_ci(
            [&](std::span<const std::size_t> idx) {
              double hits = 0.0;
              for (std::size_t i : idx) hits += bits[i];
              return hits / idx.size();
            },
            bits.size(), resamples, stage_seed(m, id), level);
        return estimate_json(e, seed, hash);
      });
    }
    est["naive"] = stages.run("naive", name, [&] {
      if (name.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no correctness data");
      const auto v1 = d.require(DatasetTag::kV1);
      const auto v2 = d.require(DatasetTag::kV2);
      const auto bits = d.correct(m, DatasetTag::kV2);
      auto e = naive_adjusted_accuracy(v1, v2, bits, d.n);
      std::vector<int> tk, sk;
      for (const auto& r : v1) tk.push_back(r.n_selected);
      for (const auto& r : v2) sk.push_back(r.n_selected);
      // Source items are resampled; the target histogram is held fixed.
      e.ci = bootstrap_ci(
          [&](std::span<const std::size_t> idx) {
            std::vector<int> k;
            std::vector<std::uint8_t> b;
            k.reserve(idx.size());
            b.reserve(idx.size());
            for (std::size_t i : idx) {
              k.push_back(sk[i]);
              b.push_back(bits[i]);
            }
            return naive_from_counts(tk, k, b, d.n).first;
          },
          bits.size(), resamples, stage_seed(m, 2), level);
      return estimate_json(e, seed, hash);
    });
    est["jackknife"] = stages.run("jackknife", name, [&] {
      if (name.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no correctness data");
      const auto v1 = d.require(DatasetTag::kV1);
      const auto v2 = d.require(DatasetTag::kV2);
      if (!d.all_draws(DatasetTag::kV1) || !d.all_draws(DatasetTag::kV2)) {
        throw Error(ErrorKind::kMissingPrerequisite, "jackknife needs per-annotator draws");
      }
      return estimate_json(jackknife_adjusted_accuracy(v1, v2, d.correct(m, DatasetTag::kV2)),
                           seed, hash);
    });
    per_model[m]["name"] = name.empty() ? json(nullptr) : json(name);
    per_model[m]["estimates"] = est;
  }

  // EM on both datasets.
  std::map<DatasetTag, MixtureFitResult> fits;
  json fits_json = json::object();
  for (auto t : {DatasetTag::kV1, DatasetTag::kV2}) {
    fits_json[to_string(t)] = stages.run(std::string("em_") + to_string(t), "", [&] {
      auto f = fit_tag(cfg, d, t);
      fits.emplace(t, f);
      return fit_json(f);
    });
  }
  report["fits"] = fits_json;

  // spline -> parametric per model.
  for (std::size_t m = 0; m < model_names.size(); ++m) {
    const std::string& name = model_names[m];
    std::optional<SplineModel> g;
    per_model[m]["spline"] = stages.run("spline", name, [&] {
      if (name.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no correctness data");
      if (!fits.count(DatasetTag::kV2)) {
        throw Error(ErrorKind::kMissingPrerequisite, "v2 mixture fit unavailable");
      }
      g = fit_accuracy_curve(d.require(DatasetTag::kV2), d.correct(m, DatasetTag::kV2),
                             fits.at(DatasetTag::kV2), d.n, cfg, grid);
      return spline_json(*g);
    });
    auto& est = per_model[m]["estimates"];
    est["parametric"] = stages.run("parametric", name, [&] {
      if (!g) throw Error(ErrorKind::kMissingPrerequisite, "spline fit unavailable");
      if (!fits.count(DatasetTag::kV1)) {
        throw Error(ErrorKind::kMissingPrerequisite, "v1 mixture fit unavailable");
      }
      auto e = parametric_adjusted_accuracy(*g, fits.at(DatasetTag::kV1).mixture, grid);
      e.annotators_used = d.n;
      return estimate_json(e, seed, hash);
    });
    per_model[m]["gap_decomposition"] = stages.run("gap_decomposition", name, [&] {
      if (!ok(est["raw_v1"]) || !ok(est["raw_v2"])) {
        throw Error(ErrorKind::kMissingPrerequisite, "raw accuracies unavailable");
      }
      std::string adjusted;
      for (const char* method : {"parametric", "jackknife", "naive"}) {
        if (ok(est[method])) {
          adjusted = method;
          break;
        }
      }
      if (adjusted.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no adjusted estimate");
      const auto gd = gap_decomposition(est["raw_v1"]["value"].get<double>(),
                                        est["raw_v2"]["value"].get<double>(),
                                        est[adjusted]["value"].get<double>());
      return json{{"adjusted_method", adjusted},
                  {"total_gap", gd.total_gap},
                  {"bias_corrected_gap", gd.bias_corrected_gap},
                  {"selection_gap", gd.selection_gap},
                  {"finite_sample_gap", gd.finite_sample_gap},
                  {"finite_sample_note", gd.finite_sample_note}};
    });
  }
  report["models"] = d.models.empty() ? json::array() : json(per_model);

  // Slope of the accuracy line across models, when there are enough of them.
  json slopes = json::object();
  if (d.models.size() >= 3) {
    int id = 0;
    for (const char* method : {"raw_v2", "naive", "jackknife", "parametric"}) {
      ++id;
      std::vector<std::pair<double, double>> pairs;
      for (const auto& pm : per_model) {
        const auto& est = pm["estimates"];
        if (ok(est["raw_v1"]) && ok(est[method])) {
          pairs.push_back({est["raw_v1"]["value"].get<double>(), est[method]["value"].get<double>()});
        }
      }
      slopes[method] = stages.run(std::string("slope_") + method, "", [&] {
        const auto f = slope_fit(pairs, resamples, stream_key(seed, kSaltSlope + id));
        return json{{"models", pairs.size()},
                    {"slope", f.slope},
                    {"intercept", f.intercept},
                    {"slope_ci", {{"lo", f.slope_ci.lo}, {"hi", f.slope_ci.hi}}},
                    {"intercept_ci", {{"lo", f.intercept_ci.lo}, {"hi", f.intercept_ci.hi}}}};
      });
    }
  }
  report["slope_fits"] = slopes;

  // Plot-ready series that come for free with the estimate.
  json series = json::array();
  {
    const std::string hist = series_csv(histogram_rows(d));
    write_text(out_path(cfg, "series/histograms.csv"), hist);
    series.push_back({{"name", "histograms"}, {"file", "series/histograms.csv"}, {"sha256", sha256_hex(hist)}});
    if (!fits.empty()) {
      const std::string overlay = series_csv(overlay_rows(fits, d));
      write_text(out_path(cfg, "series/fit_overlay.csv"), overlay);
      series.push_back(
          {{"name", "fit_overlay"}, {"file", "series/fit_overlay.csv"}, {"sha256", sha256_hex(overlay)}});
    }
  }
  report["series"] = series;
  report["errors"] = stages.errors;

  write_text(out_path(cfg, "report.json"), report.dump(2) + "\n");
  json meta{{"created", timestamp()}, {"report", "report.json"}, {"config_hash", hash}};
  write_text(out_path(cfg, "metadata.json"), meta.dump(2) + "\n");
  log << "estimate: " << d.models.size() << " models, " << stages.errors.size()
      << " stage errors -> " << out_path(cfg, "report.json") << "\n";
  return stages.worst;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
  const std::string report_path = require_path(cfg, "report");
  const std::string truth_path = cfg.path("truth");
  if (truth_path.empty() || !fs::exists(truth_path)) {
    throw Error(ErrorKind::kTruthUnavailable,
                truth_path.empty() ? "no truth file given" : "truth file not found: " + truth_path);
  }
  json report;
  try {
    report = json::parse(read_text(report_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSchemaViolation, report_path + ": " + e.what());
  }
  if (!report.contains("config") || !report.contains("inputs") || !report.contains("models")) {
    throw Error(ErrorKind::kSchemaViolation, report_path + ": not an estimate report");
  }
  // The oracle comes from the configuration the report was produced with.
  RunConfig rc;
  for (const auto& [k, v] : report["config"].items()) rc.set(k, v.get<std::string>());
  if (rc.hash() != report["config_hash"].get<std::string>()) {
    throw Error(ErrorKind::kSchemaViolation, report_path + ": config does not match config_hash");
  }

  const auto truth = read_truth(truth_path);
  std::vector<std::string> ids;
  for (const auto& [id, s] : truth) ids.push_back(id);
  if (items_digest(ids) != report["inputs"]["items_digest"].get<std::string>()) {
    throw Error(ErrorKind::kTruthUnavailable, "truth item ids do not match the report's items");
  }

  const auto names = rc.models();
  const auto curves = rc.curves();
  const auto p1 = rc.mixture(DatasetTag::kV1);
  json out;
  out["report_config_hash"] = report["config_hash"];
  out["items_digest"] = report["inputs"]["items_digest"];
  json models = json::array();
  int worst = kOk;
  for (const auto& pm : report["models"]) {
    const std::string name = pm["name"].get<std::string>();
    json entry{{"name", name}};
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      entry["error"] = error_json(Error(ErrorKind::kTruthUnavailable, "no ground-truth curve for model " + name));
      worst = std::max(worst, static_cast<int>(kData));
      models.push_back(entry);
      continue;
    }
    const double oracle = true_adjusted_accuracy(curves[it - names.begin()], p1);
    entry["oracle"] = oracle;
    json errs = json::object();
    for (const auto& [method, est] : pm["estimates"].items()) {
      if (method == "raw_v1" || !ok(est)) continue;
      const double v = est["value"].get<double>();
      errs[method] = {{"value", v}, {"error", v - oracle}, {"abs_error", std::abs(v - oracle)}};
    }
    entry["errors"] = errs;
    models.push_back(entry);
  }
  out["models"] = models;
  write_text(out_path(cfg, "verification.json"), out.dump(2) + "\n");
  log << "verify: " << models.size() << " models -> " << out_path(cfg, "verification.json") << "\n";
  return worst;
}

int cmd_series(const RunConfig& cfg, const CommandInputs& inputs, std::ostream& log) {
  const auto& kinds = series_kinds();
  if (std::find(kinds.begin(), kinds.end(), inputs.series) == kinds.end()) {
    throw Error(ErrorKind::kInvalidConfig, "unknown series '" + inputs.series + "'");
  }
  const std::string& which = inputs.series;
  std::vector<SeriesRow> rows;

  if (which == "scatter") {
    const std::string path = require_path(cfg, "report");
    json report;
    try {
      report = json::parse(read_text(path));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kSchemaViolation, path + ": " + e.what());
    }
    for (const char* method : {"raw_v2", "naive", "jackknife", "parametric"}) {
      for (const auto& pm : report.at("models")) {
        const auto& est = pm.at("estimates");
        if (!ok(est["raw_v1"]) || !ok(est[method])) continue;
        SeriesRow r{method, est["raw_v1"]["value"].get<double>(), est[method]["value"].get<double>(), {}};
        if (est[method]["ci"].is_object()) {
          r.ci = ConfidenceInterval{est[method]["ci"]["lo"].get<double>(),
                                    est[method]["ci"]["hi"].get<double>()};
        }
        rows.push_back(r);
      }
    }
  } else {
    Data d = load_annotations(cfg, require_path(cfg, "annotations"));
    const bool needs_correctness = which != "histograms" && which != "fit_overlay";
    if (needs_correctness) {
      load_correctness(d, require_path(cfg, "correctness"));
      if (d.models.empty()) throw Error(ErrorKind::kMissingPrerequisite, "correctness file has no rows");
    }
    if (which == "histograms") {
      rows = histogram_rows(d);
    } else if (which == "fit_overlay") {
      std::map<DatasetTag, MixtureFitResult> fits;
      for (auto t : kTags) {
        if (d.has(t)) fits.emplace(t, fit_tag(cfg, d, t));
      }
      if (fits.empty()) throw Error(ErrorKind::kMissingPrerequisite, "annotations are empty");
      rows = overlay_rows(fits, d);
    } else if (which == "conditional_accuracy") {
      for (std::size_t m = 0; m < d.models.size(); ++m) {
        for (auto t : kTags) {
          if (!d.has(t)) continue;
          std::vector<double> hits(d.n + 1, 0.0), total(d.n + 1, 0.0);
          bool any = false;
          for (std::size_t i : d.by_tag.at(t)) {
            const auto b = d.bits[m][i];
            if (b == kMissing) continue;
            any = true;
            hits[d.records[i].n_selected] += b;
            total[d.records[i].n_selected] += 1;
          }
          if (!any) continue;
          for (int k = 0; k <= d.n; ++k) {
            if (total[k] == 0) continue;
            rows.push_back({d.models[m] + "/" + to_string(t), static_cast<double>(k) / d.n,
                            hits[k] / total[k], wilson(hits[k], total[k])});
          }
        }
      }
      if (rows.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no correctness for annotated items");
    } else if (which == "subsample_curve") {
      if (!d.all_draws(DatasetTag::kV1) || !d.all_draws(DatasetTag::kCandidate)) {
        throw Error(ErrorKind::kMissingPrerequisite,
                    "subsample_curve needs v1 and candidate items with per-annotator draws");
      }
      std::vector<int> counts;
      for (int n : cfg.int_list("subsample_counts")) {
        if (n <= d.n) counts.push_back(n);
      }
      if (counts.empty()) throw Error(ErrorKind::kMissingPrerequisite, "no subsample count fits the annotations");
      SyntheticPopulation pop;
      pop.annotations = d.records;
      for (const auto& r : d.records) pop.items.push_back({r.item_id, r.dataset, std::nan("")});
      for (std::size_t m = 0; m < d.models.size(); ++m) {
        d.correct(m, DatasetTag::kV1);
        d.correct(m, DatasetTag::kCandidate);
        const auto& bits = d.bits[m];
        AccuracyHook hook = [&bits](std::span<const std::size_t> idx) {
          double hits = 0.0;
          for (std::size_t i : idx) hits += bits[i];
          return idx.empty() ? 0.0 : hits / idx.size();
        };
        const auto curve = annotator_subsample_curve(pop, counts, hook, cfg.histogram_spec(),
                                                     cfg.sample_size(),
                                                     stream_key(cfg.seed(), kSaltSeries + m));
        for (const auto& p : curve) rows.push_back({d.models[m], static_cast<double>(p.annotators), p.gap, {}});
      }
    } else if (which == "jackknife_linearity") {
      if (!d.all_draws(DatasetTag::kV1) || !d.all_draws(DatasetTag::kV2)) {
        throw Error(ErrorKind::kMissingPrerequisite, "jackknife_linearity needs per-annotator draws");
      }
      const auto v1 = d.gather(DatasetTag::kV1);
      const auto v2 = d.gather(DatasetTag::kV2);
      const auto counts = cfg.int_list("linearity_counts");
      for (std::size_t m = 0; m < d.models.size(); ++m) {
        const auto bits = d.correct(m, DatasetTag::kV2);
        const auto series = jackknife_linearity_series(v1, v2, bits, counts,
                                                       stream_key(cfg.seed(), kSaltSeries + 0x80 + m));
        const std::string& name = d.models[m];
        for (const auto& p : series.points) rows.push_back({name, p.inverse_n, p.estimate, {}});
        for (const auto& p : series.points) {
          rows.push_back({name + "/fit", p.inverse_n, series.fit.intercept + series.fit.slope * p.inverse_n, {}});
        }
        const auto jk = jackknife_adjusted_accuracy(v1, v2, bits);
        rows.push_back({name + "/jackknife", 0.0, jk.value, jk.ci});
      }
    }
  }

  const std::string file = out_path(cfg, "series/" + which + ".csv");
  write_text(file, series_csv(rows));
  log << "series " << which << ": " << rows.size() << " rows -> " << file << "\n";
  return kOk;
}

int cmd_em_fit(const RunConfig& cfg, std::ostream& log) {
  const Data d = load_annotations(cfg, require_path(cfg, "annotations"));
  StageRunner stages;
  json fits = json::object();
  for (auto t : kTags) {
    if (!d.has(t)) continue;
    fits[to_string(t)] = stages.run(std::string("em_") + to_string(t), "", [&] {
      const auto f = fit_tag(cfg, d, t);
      json j = fit_json(f);
      j["likelihood_trace"] = f.likelihood_trace;
      return j;
    });
  }
  if (fits.empty()) throw Error(ErrorKind::kEmptyDataset, "annotations are empty");
  json out{{"command", "em-fit"},
           {"seed", cfg.seed()},
           {"config_hash", cfg.hash()},
           {"annotators", d.n},
           {"fits", fits},
           {"errors", stages.errors}};
  write_text(out_path(cfg, "em_fit.json"), out.dump(2) + "\n");
  log << "em-fit: " << fits.size() << " datasets -> " << out_path(cfg, "em_fit.json") << "\n";
  return stages.worst;
}

int cmd_spline_fit(const RunConfig& cfg, std::ostream& log) {
  Data d = load_annotations(cfg, require_path(cfg, "annotations"));
  load_correctness(d, require_path(cfg, "correctness"));
  const auto v2 = d.require(DatasetTag::kV2);
  const auto p2 = fit_tag(cfg, d, DatasetTag::kV2);
  const auto grid = QuadratureGrid::composite_gauss_legendre(cfg.grid_panels(), 4);
  StageRunner stages;
  json models = json::array();
  for (std::size_t m = 0; m < d.models.size(); ++m) {
    json entry{{"name", d.models[m]}};
    entry["spline"] = stages.run("spline", d.models[m], [&] {
      const auto g = fit_accuracy_curve(v2, d.correct(m, DatasetTag::kV2), p2, d.n, cfg, grid);
      json curve = json::array();
      for (int i = 0; i <= 100; ++i) curve.push_back({i / 100.0, g(i / 100.0)});
      json j = spline_json(g);
      j["curve"] = curve;
      return j;
    });
    models.push_back(entry);
  }
  json out{{"command", "spline-fit"},
           {"seed", cfg.seed()},
           {"config_hash", cfg.hash()},
           {"annotators", d.n},
           {"v2_fit", fit_json(p2)},
           {"models", models},
           {"errors", stages.errors}};
  write_text(out_path(cfg, "spline_fit.json"), out.dump(2) + "\n");
  log << "spline-fit: " << d.models.size() << " models -> " << out_path(cfg, "spline_fit.json") << "\n";
  return stages.worst;
}

}  // namespace selbias::cli

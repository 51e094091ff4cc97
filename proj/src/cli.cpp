#include "cmldiff/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cmldiff/csv.hpp"
#include "cmldiff/rg.hpp"
#include "cmldiff/rng.hpp"
#include "cmldiff/rwre.hpp"
#include "cmldiff/srb.hpp"
#include "cmldiff/verify.hpp"

namespace cmldiff::cli {

using json = nlohmann::ordered_json;

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "counts are read as 64-bit unsigned");

namespace {

// Reads typed keys from one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& root, const std::string& key) : path_("/" + key) {
    if (!root.contains(key)) return;
    node_ = &root.at(key);
    if (!node_->is_object()) throw ConfigError(path_, "expected an object");
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key), "expected a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::uint64_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_unsigned()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected a nonnegative integer");
        out.push_back((*v)[i].get<std::uint64_t>());
      }
    }
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_string()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected a string");
        out.push_back((*v)[i].get<std::string>());
      }
    }
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!seen_.count(k)) throw ConfigError(at(k), "unknown key");
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  std::string path_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path, msg);
}

Observable observable_by_name(const std::string& name) {
  if (name == "cos") return cos_observable();
  if (name == "sawtooth") return sawtooth_observable();
  if (name == "position") return position_observable();
  if (name == "raised_cos") return raised_cos_observable();
  throw ConfigError("/correlations/observable", "unknown observable '" + name + "'");
}

const std::set<std::string> kFunctions{"one", "gauss", "cos1", "cos2", "bump"};

void validate(const ExperimentConfig& c) {
  require(c.d >= 1 && c.d <= 3, "/geometry/d", "must be 1, 2 or 3");
  require(c.M >= 2, "/geometry/M", "must be >= 2");
  require(c.noise == "cos" || c.noise == "directed", "/model/noise", "must be \"cos\" or \"directed\"");
  require(c.map == "doubling" || c.map == "cat", "/model/map", "must be \"doubling\" or \"cat\"");
  try {
    c.model().validate();
    c.local_map().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/model", e.what());
  }
  require(c.model().positivity_ok(c.d), "/model", "2d(a + eps_prime) must be <= 1");
  require(c.L >= 2, "/rg/L", "must be >= 2");
  require(c.n_max >= 1 && c.n_max <= 8, "/rg/n_max", "must be in [1, 8]");
  require(c.sources >= 1, "/rg/sources", "must be >= 1");
  require(c.window_cells >= 0, "/rg/window_cells", "must be >= 0");
  require(c.annealed_samples >= 2, "/rg/annealed_samples", "must be >= 2");
  require(c.seeds >= 1, "/sampling/seeds", "must be >= 1");
  require(c.n_samples >= 2, "/sampling/n_samples", "must be >= 2");
  require(c.initial == "spike" || c.initial == "constant" || c.initial == "random", "/simulate/initial",
          "must be \"spike\", \"constant\" or \"random\"");
  require(c.initial_mass > 0.0, "/simulate/initial_mass", "must be positive");
  for (std::uint64_t t : c.snapshots) require(t <= c.steps, "/simulate/snapshots", "snapshot time beyond steps");
  require(c.t_max >= 1, "/rwre/t_max", "must be >= 1");
  observable_by_name(c.observable);
  require(c.max_lag >= 1, "/correlations/max_lag", "must be >= 1");
  require(c.length > static_cast<std::uint64_t>(c.max_lag), "/correlations/length", "must exceed max_lag");
  require(c.max_separation >= 0, "/correlations/max_separation", "must be >= 0");
  require(!c.test_functions.empty(), "/verify/test_functions", "must not be empty");
  for (const auto& f : c.test_functions)
    require(kFunctions.count(f) > 0, "/verify/test_functions", "unknown test function '" + f + "'");
  require(c.trend_floor >= 0.0, "/verify/trend_floor", "must be >= 0");
  require(c.mass_limit > 0.0, "/verify/mass_limit", "must be positive");
  require(!c.out_dir.empty(), "/output/dir", "must not be empty");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Outcome {
  int code = kExitOk;
  bool partial = false;
  std::vector<std::string> files;
  std::vector<std::string> failures;
  json summary = json::object();
};

std::ofstream open_out(const std::filesystem::path& dir, const std::string& name, Outcome& o,
                       std::ios::openmode mode = std::ios::out) {
  std::ofstream f(dir / name, mode | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
  o.files.push_back(name);
  return f;
}

EnergyField initial_field(const ExperimentConfig& c) {
  const Geometry geo = c.geometry();
  if (c.initial == "spike") return EnergyField::spike(geo, 0, c.initial_mass);
  if (c.initial == "constant") return EnergyField::constant(geo, c.initial_mass / static_cast<double>(geo.sites()));
  Rng rng(c.master_seed, "initial", 0);
  std::vector<double> v(geo.sites());
  double total = 0.0;
  for (double& x : v) total += (x = rng.uniform());
  for (double& x : v) x *= c.initial_mass / total;
  return EnergyField(geo, std::move(v));
}

void check_memory(const ExperimentConfig& c, double bytes, const std::string& what) {
  const double limit = static_cast<double>(c.max_memory_mb) * 1024.0 * 1024.0;
  if (bytes > limit)
    throw BudgetError(what + " needs " + std::to_string(static_cast<long long>(bytes / 1048576.0)) +
                      " MiB, above the " + std::to_string(c.max_memory_mb) + " MiB limit");
}

Outcome cmd_simulate(const ExperimentConfig& c, const std::filesystem::path& dir) {
  Outcome o;
  const Geometry geo = c.geometry();
  std::vector<std::uint64_t> snaps = c.snapshots.empty() ? std::vector<std::uint64_t>{c.steps} : c.snapshots;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  check_memory(c, 8.0 * static_cast<double>(geo.sites()) * static_cast<double>(snaps.size() + 4), "simulate");

  const SRBSampler sampler{geo, c.local_map(), c.burn_in, c.master_seed};
  TrajectoryOptions opts;
  opts.snapshot_times = snaps;
  opts.snapshot_theta = false;
  const auto tr = run_trajectory(initial_field(c), sampler.sample(0), c.model(), c.local_map(), c.steps, opts);

  {
    auto f = open_out(dir, "trajectory.csv", o, std::ios::binary);
    CsvWriter w(f, {"t", "mass_drift", "min_E"});
    for (std::size_t t = 0; t < tr.mass_drift.size(); ++t)
      w.row({std::to_string(t), format_double(tr.mass_drift[t]), format_double(tr.min_value[t])});
  }
  {
    auto f = open_out(dir, "snapshots.csv", o, std::ios::binary);
    CsvWriter w(f, {"t", "site", "E"});
    for (const auto& s : tr.snapshots)
      for (std::size_t x = 0; x < geo.sites(); ++x)
        w.row({std::to_string(s.t), std::to_string(x), format_double(s.E[x])});
  }
  const double drift = *std::max_element(tr.mass_drift.begin(), tr.mass_drift.end());
  const double minE = *std::min_element(tr.min_value.begin(), tr.min_value.end());
  auto f = open_out(dir, "validators.csv", o, std::ios::binary);
  CsvWriter w(f, {"check", "passed", "statistic", "threshold"});
  const bool pos = minE >= 0.0, cons = drift <= 1e-12;
  w.row({"positivity", pos ? "true" : "false", format_double(minE), "0"});
  w.row({"conservation", cons ? "true" : "false", format_double(drift), "1e-12"});
  if (!pos) o.failures.push_back("positivity");
  if (!cons) o.failures.push_back("conservation");
  o.summary["max_mass_drift"] = drift;
  o.summary["min_E"] = minE;
  return o;
}

Outcome cmd_rgflow(const ExperimentConfig& c, const std::filesystem::path& dir) {
  Outcome o;
  RGExperimentConfig r;
  r.geo = c.geometry();
  r.model = c.model();
  r.map = c.local_map();
  r.L = c.L;
  r.n_max = c.n_max;
  r.seeds = c.seeds;
  r.master_seed = c.master_seed;
  r.sources = std::min<std::size_t>(c.sources, static_cast<std::size_t>(c.M));
  r.window_cells = c.window_cells;
  r.burn_in = c.burn_in;
  r.annealed_samples = c.annealed_samples;
  r.budget_seconds = c.budget_seconds;
  const auto res = full_rg_experiment(r);

  auto f = open_out(dir, "rgflow.csv", o, std::ios::binary);
  CsvWriter w(f, {"seed", "n", "L", "D_n", "eps_n", "gauss_sup_dist", "mass_err"});
  for (const auto& rec : res.records)
    w.row({std::to_string(rec.seed), std::to_string(rec.n), std::to_string(rec.L), format_double(rec.D_n),
           format_double(rec.eps_n), format_double(rec.gauss_sup_dist), format_double(rec.mass_err)});

  std::size_t decreasing = 0;
  for (std::size_t s = 0; s + c.n_max <= res.records.size(); s += c.n_max) {
    bool ok = true;
    for (int n = 1; n < c.n_max; ++n) ok = ok && res.records[s + n].eps_n < res.records[s + n - 1].eps_n;
    decreasing += ok;
  }
  o.partial = !res.complete;
  o.summary["D0"] = res.D0;
  o.summary["seeds_completed"] = res.seeds_completed;
  o.summary["eps_decreasing_fraction"] =
      res.seeds_completed ? static_cast<double>(decreasing) / static_cast<double>(res.seeds_completed) : 0.0;
  return o;
}

Outcome cmd_rwre(const ExperimentConfig& c, const std::filesystem::path& dir) {
  Outcome o;
  const Geometry geo = c.geometry();
  const double bytes = 8.0 * static_cast<double>(c.t_max) * static_cast<double>(geo.sites()) * stencil_width(c.d);
  check_memory(c, 2.0 * bytes, "environment");

  const SRBSampler sampler{geo, c.local_map(), c.burn_in, c.master_seed};
  const auto env = generate_environment(sampler.sample(0), c.local_map(), c.model(), c.t_max, c.master_seed);
  save_environment(dir / "environment.bin", env);
  o.files.push_back("environment.bin");

  ValidationOptions v;
  v.geo = Geometry(c.d, std::min(c.M, c.d == 1 ? 64 : c.d == 2 ? 16 : 8));
  v.n_samples = c.n_samples;
  v.burn_in = c.burn_in;
  v.master_seed = c.master_seed;
  const auto rep = validate_assumptions(c.model(), c.local_map(), v);
  auto f = open_out(dir, "assumptions.csv", o, std::ios::binary);
  CsvWriter w(f, {"check", "passed", "statistic", "threshold", "detail"});
  for (const auto& ch : rep.checks)
    w.row({ch.name, ch.passed ? "true" : "false", format_double(ch.statistic), format_double(ch.threshold), ch.detail});
  o.failures = rep.failed();
  o.summary["t_max"] = c.t_max;
  o.summary["max_column_sum_deviation"] = env.max_column_sum_deviation();
  return o;
}

Outcome cmd_correlations(const ExperimentConfig& c, const std::filesystem::path& dir) {
  Outcome o;
  const SRBSampler sampler{c.geometry(), c.local_map(), c.burn_in, c.master_seed};
  const Observable F = observable_by_name(c.observable);
  std::vector<int> lags, seps;
  for (int l = 0; l <= c.max_lag; ++l) lags.push_back(l);
  for (int r = 0; r <= c.max_separation; ++r) seps.push_back(r);
  const auto tc = time_correlations(sampler, F, F, lags, c.length);
  const auto sc = space_correlations(sampler, F, F, seps, c.n_samples);

  auto write = [&](const std::string& name, const std::vector<CorrelationEstimate>& rows) {
    auto f = open_out(dir, name, o, std::ios::binary);
    CsvWriter w(f, {"separation", "mean_product", "mean1", "mean2", "covariance", "std_error", "count"});
    for (const auto& e : rows)
      w.row({std::to_string(e.separation), format_double(e.mean_product), format_double(e.mean1),
             format_double(e.mean2), format_double(e.covariance), format_double(e.std_error),
             std::to_string(e.count)});
  };
  write("time_correlations.csv", tc);
  write("space_correlations.csv", sc);

  std::vector<int> positive(lags.begin() + 1, lags.end());
  auto f = open_out(dir, "decay.csv", o, std::ios::binary);
  CsvWriter w(f, {"status", "m", "m_stderr", "C", "fitted_lags"});
  try {
    const auto dec = time_correlation_decay(sampler, F, positive, c.length);
    std::string fl;
    for (int l : dec.fitted_lags) fl += (fl.empty() ? "" : " ") + std::to_string(l);
    w.row({"fitted", format_double(dec.fit.m), format_double(dec.m_stderr), format_double(dec.fit.C), fl});
  } catch (const std::runtime_error&) {
    // Too few lags resolved from zero (e.g. no coupling, short run).
    w.row({"unresolved", "nan", "nan", "nan", ""});
  }
  return o;
}

Outcome cmd_verify(const ExperimentConfig& c, const std::filesystem::path& dir) {
  Outcome o;
  ScalingLimitConfig s;
  s.geo = c.geometry();
  s.model = c.model();
  s.map = c.local_map();
  s.L = c.L;
  s.n_max = c.n_max;
  s.seeds = c.seeds;
  s.master_seed = c.master_seed;
  s.burn_in = c.burn_in;
  s.mass_limit = c.mass_limit;
  s.trend_floor = c.trend_floor;
  s.budget_seconds = c.budget_seconds;
  std::vector<TestFunction> G;
  for (auto& g : default_test_functions(c.d))
    if (std::find(c.test_functions.begin(), c.test_functions.end(), g.name) != c.test_functions.end())
      G.push_back(std::move(g));
  const auto rep = scaling_limit_test(EnergyField::spike(s.geo, 0, c.initial_mass), s, G);
  {
    auto f = open_out(dir, "report.json", o, std::ios::binary);
    write_report_json(f, rep);
  }
  {
    auto f = open_out(dir, "distances.csv", o, std::ios::binary);
    write_report_csv(f, rep);
  }
  o.partial = !rep.complete;
  for (std::size_t g = 0; g < rep.median_decreasing.size(); ++g)
    if (!rep.median_decreasing[g]) o.failures.push_back("median distance not decreasing for " + rep.function_names[g]);
  o.summary["D_hat"] = rep.D_hat.D;
  o.summary["mean_kernel_band_sup"] = rep.mean_kernel_band_sup;
  return o;
}

}  // namespace

CurrentModel ExperimentConfig::model() const {
  return CurrentModel{a, eps_prime, noise == "directed" ? NoiseKind::Directed : NoiseKind::Cos};
}

LocalChaoticMap ExperimentConfig::local_map() const {
  return LocalChaoticMap{map == "cat" ? MapVariant::Cat : MapVariant::Doubling, kappa, refresh_lost_bits};
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("JSON parse error: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("", "expected a JSON object");
  if (!root.contains("schema_version")) throw ConfigError("/schema_version", "missing");
  if (!root["schema_version"].is_number_integer() || root["schema_version"].get<int>() != 1)
    throw ConfigError("/schema_version", "only version 1 is supported");

  static const std::set<std::string> sections{"schema_version", "geometry", "model",        "rg",     "sampling",
                                              "simulate",       "rwre",     "correlations", "verify", "output"};
  for (const auto& [k, v] : root.items())
    if (!sections.count(k)) throw ConfigError("/" + k, "unknown key");

  ExperimentConfig c;
  Section geo(root, "geometry");
  geo.get("d", c.d);
  geo.get("M", c.M);
  geo.finish();
  Section model(root, "model");
  model.get("a", c.a);
  model.get("eps_prime", c.eps_prime);
  model.get("noise", c.noise);
  model.get("map", c.map);
  model.get("kappa", c.kappa);
  model.get("refresh_lost_bits", c.refresh_lost_bits);
  model.finish();
  Section rg(root, "rg");
  rg.get("L", c.L);
  rg.get("n_max", c.n_max);
  rg.get("sources", c.sources);
  rg.get("window_cells", c.window_cells);
  rg.get("annealed_samples", c.annealed_samples);
  rg.finish();
  Section sampling(root, "sampling");
  sampling.get("seeds", c.seeds);
  sampling.get("n_samples", c.n_samples);
  sampling.get("burn_in", c.burn_in);
  sampling.get("master_seed", c.master_seed);
  sampling.finish();
  Section sim(root, "simulate");
  sim.get("steps", c.steps);
  sim.get("snapshots", c.snapshots);
  sim.get("initial", c.initial);
  sim.get("initial_mass", c.initial_mass);
  sim.finish();
  Section rw(root, "rwre");
  rw.get("t_max", c.t_max);
  rw.get("max_memory_mb", c.max_memory_mb);
  rw.finish();
  Section corr(root, "correlations");
  corr.get("observable", c.observable);
  corr.get("max_lag", c.max_lag);
  corr.get("length", c.length);
  corr.get("max_separation", c.max_separation);
  corr.finish();
  Section ver(root, "verify");
  ver.get("test_functions", c.test_functions);
  ver.get("trend_floor", c.trend_floor);
  ver.get("mass_limit", c.mass_limit);
  ver.finish();
  Section out(root, "output");
  out.get("dir", c.out_dir);
  out.get("budget_seconds", c.budget_seconds);
  out.finish();

  validate(c);
  return c;
}

std::string config_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = 1;
  j["geometry"] = {{"d", c.d}, {"M", c.M}};
  j["model"] = {{"a", c.a},     {"eps_prime", c.eps_prime}, {"noise", c.noise},
                {"map", c.map}, {"kappa", c.kappa},         {"refresh_lost_bits", c.refresh_lost_bits}};
  j["rg"] = {{"L", c.L},
             {"n_max", c.n_max},
             {"sources", c.sources},
             {"window_cells", c.window_cells},
             {"annealed_samples", c.annealed_samples}};
  j["sampling"] = {
      {"seeds", c.seeds}, {"n_samples", c.n_samples}, {"burn_in", c.burn_in}, {"master_seed", c.master_seed}};
  j["simulate"] = {
      {"steps", c.steps}, {"snapshots", c.snapshots}, {"initial", c.initial}, {"initial_mass", c.initial_mass}};
  j["rwre"] = {{"t_max", c.t_max}, {"max_memory_mb", c.max_memory_mb}};
  j["correlations"] = {{"observable", c.observable},
                       {"max_lag", c.max_lag},
                       {"length", c.length},
                       {"max_separation", c.max_separation}};
  j["verify"] = {{"test_functions", c.test_functions}, {"trend_floor", c.trend_floor}, {"mass_limit", c.mass_limit}};
  // The output directory is where results go, not what they are; it stays out
  // so that the hash identifies the experiment.
  j["output"] = {{"budget_seconds", c.budget_seconds}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_json(c))); }

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "rgflow", "rwre", "correlations", "verify"};
  return names;
}

int run_command(const std::string& command, const ExperimentConfig& config, const std::filesystem::path& out_dir,
                std::ostream& log) {
  Outcome o;
  std::string error;
  try {
    validate(config);
    std::filesystem::create_directories(out_dir);
    if (command == "simulate")
      o = cmd_simulate(config, out_dir);
    else if (command == "rgflow")
      o = cmd_rgflow(config, out_dir);
    else if (command == "rwre")
      o = cmd_rwre(config, out_dir);
    else if (command == "correlations")
      o = cmd_correlations(config, out_dir);
    else if (command == "verify")
      o = cmd_verify(config, out_dir);
    else
      throw ConfigError("", "unknown command '" + command + "'");
    o.code = o.partial ? kExitBudget : o.failures.empty() ? kExitOk : kExitValidator;
  } catch (const ConfigError& e) {
    o.code = kExitConfig;
    error = e.what();
  } catch (const BudgetError& e) {
    o.code = kExitBudget;
    error = e.what();
  } catch (const std::length_error& e) {
    o.code = kExitBudget;
    error = e.what();
  } catch (const std::invalid_argument& e) {
    // Library preconditions that depend on the configuration (box size, mass, ...).
    o.code = kExitConfig;
    error = e.what();
  } catch (const std::exception& e) {
    o.code = 1;
    error = e.what();
  }

  json m;
  m["command"] = command;
  m["exit_code"] = o.code;
  m["status"] = o.code == kExitOk         ? "ok"
                : o.code == kExitConfig    ? "config_error"
                : o.code == kExitValidator ? "validator_failure"
                : o.code == kExitBudget    ? "budget_exhausted"
                                           : "internal_error";
  m["partial"] = o.partial;
  if (!error.empty()) m["error"] = error;
  m["failures"] = o.failures;
  m["files"] = o.files;
  m["summary"] = o.summary;
  m["config_hash"] = config_hash(config);
  m["config"] = json::parse(config_json(config));
  try {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    f << m.dump(2) << "\n";
  } catch (const std::exception& e) {
    log << "cannot write manifest: " << e.what() << "\n";
  }
  if (!error.empty()) log << "error: " << error << "\n";
  for (const auto& f : o.failures) log << "validator failure: " << f << "\n";
  if (o.partial) log << "budget exhausted: outputs are partial\n";
  return o.code;
}

}  // namespace cmldiff::cli

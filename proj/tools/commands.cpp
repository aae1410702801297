#include "commands.hpp"

#include "io.hpp"
#include "lowrank/isa.hpp"
#include "lowrank/noise.hpp"
#include "lowrank/risk.hpp"
#include "lowrank/shrinkage.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

namespace lowrank::cli {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& raw, const std::string& what) {
  const std::string text = trim(raw);
  double v = 0.0;
  const char* first = text.data();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size() ||
      !std::isfinite(v))
    throw InputError(what + ": cannot parse '" + raw + "' as a number");
  return v;
}

long long parse_integer(const std::string& raw, const std::string& what) {
  const std::string text = trim(raw);
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw InputError(what + ": cannot parse '" + raw + "' as an integer");
  return v;
}

bool parse_bool(const std::string& raw, const std::string& what) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError(what + ": expected true or false, got '" + raw + "'");
}

SvdMethod parse_svd(const std::string& v) {
  if (v == "dense") return SvdMethod::Dense;
  if (v == "gram") return SvdMethod::Gram;
  if (v == "randomized") return SvdMethod::Randomized;
  throw InputError("unknown SVD method '" + v + "' (expected dense, gram or randomized)");
}

AdaMethod parse_ada_method(const std::string& v) {
  if (v == "gsure") return AdaMethod::Gsure;
  if (v == "sure") return AdaMethod::Sure;
  if (v == "qut") return AdaMethod::Qut;
  throw InputError("unknown criterion '" + v + "' (expected gsure, sure or qut)");
}

std::string ada_name(AdaMethod m) {
  switch (m) {
    case AdaMethod::Gsure: return "gsure";
    case AdaMethod::Sure: return "sure";
    case AdaMethod::Qut: return "qut";
  }
  return "";
}

// Key-value view of one INI section that remembers which keys were read.
class Section {
 public:
  Section(const boost::property_tree::ptree& tree, std::string name) : name_(std::move(name)) {
    for (const auto& [key, child] : tree) {
      if (!child.empty()) throw InputError("config: nested key '" + key + "' in [" + name_ + "]");
      values_[key] = child.data();
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> raw(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    const auto v = raw(key);
    if (!v) return;
    const std::string what = "config [" + name_ + "] " + key;
    if constexpr (std::is_same_v<T, bool>)
      target = parse_bool(*v, what);
    else if constexpr (std::is_same_v<T, double>)
      target = parse_double(*v, what);
    else if constexpr (std::is_same_v<T, std::string>)
      target = trim(*v);
    else
      target = static_cast<T>(parse_integer(*v, what));
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& target) {
    if (!has(key)) return;
    T value{};
    read(key, value);
    target = value;
  }

  void finish() const {
    for (const auto& [key, value] : values_)
      if (!used_.count(key))
        throw InputError("config: unknown key '" + key + "' in section [" + name_ + "]");
  }

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

boost::property_tree::ptree read_ini(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("cannot open config file '" + path + "'");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  for (const auto& [key, child] : tree)
    if (child.empty())
      throw InputError("config: key '" + key + "' must be inside a section");
  return tree;
}

void read_fd(Section& s, FdOptions& fd) {
  s.read("fd_cells", fd.cell_subset);
  s.read("fd_step_scale", fd.step_scale);
  s.read("fd_tolerance", fd.tolerance);
  s.read("fd_extra_iterations", fd.extra_iterations);
  s.read("fd_max_iterations", fd.max_iterations);
}

void read_search(Section& s, LineSearchOptions& search) {
  s.read("search_evaluations", search.max_evaluations);
  s.read("search_restarts", search.restarts);
  s.read("search_tolerance", search.tolerance);
  s.read("search_initial_step", search.initial_step);
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    if (part.find(':') == std::string::npos) {
      out.push_back(parse_double(part, "list"));
      continue;
    }
    const auto range = split(part, ':');
    if (range.size() != 3) throw InputError("range '" + part + "' must be start:stop:step");
    const double start = parse_double(range[0], "range start");
    const double stop = parse_double(range[1], "range stop");
    const double step = parse_double(range[2], "range step");
    if (step <= 0.0 || stop < start) throw InputError("range '" + part + "' is empty");
    const auto count = static_cast<long long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long long i = 0; i < count; ++i) {
      // Round to 12 significant digits so 1:5:0.1 yields 1.3, not 1.3000000000000003.
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.12g", start + static_cast<double>(i) * step);
      out.push_back(std::strtod(buf, nullptr));
    }
  }
  if (out.empty()) throw InputError("empty list");
  return out;
}

BiasPlan load_bias_config(const std::string& path) {
  const auto tree = read_ini(path);
  BiasPlan plan;
  for (const auto& [name, child] : tree) {
    if (name != "bias") throw InputError("config: unknown section [" + name + "] (expected [bias])");
    Section s(child, name);
    BiasConfig& c = plan.config;
    s.read("reps", plan.reps);
    s.read("n", c.n);
    s.read("p", c.p);
    s.read("k", c.k);
    s.read("snr", c.snr);
    s.read("lambda", c.lambda);
    s.read("gamma", c.gamma);
    s.read("missing_rate", c.missing_rate);
    s.read("center", c.center);
    s.read("threshold", c.threshold);
    s.read("maxiter", c.maxiter);
    if (auto v = s.raw("svd")) c.svd = parse_svd(trim(*v));
    read_fd(s, c.fd);
    s.finish();
  }
  require(plan.reps >= 1, "config: reps must be positive");
  return plan;
}

MsepPlan load_msep_config(const std::string& path) {
  const auto tree = read_ini(path);
  MsepPlan plan;
  for (const auto& [name, child] : tree) {
    Section s(child, name);
    if (name == "experiment") {
      s.read("reps", plan.reps);
      s.finish();
      continue;
    }
    MsepConfig c;
    c.name = name;
    s.read("n", c.n);
    s.read("p", c.p);
    s.read("k", c.k);
    s.read("snr", c.snr);
    s.read("rate", c.rate);
    if (auto v = s.raw("mechanisms")) c.mechanisms = split(*v, ',');
    for (auto& m : c.mechanisms) {
      m = trim(m);
      if (m != "mcar" && m != "mar")
        throw InputError("config [" + name + "]: unknown mechanism '" + m + "' (expected mcar or mar)");
    }
    s.read("mar_slope", c.mar_slope);
    s.read("center", c.center);
    s.read("threshold", c.threshold);
    s.read("maxiter", c.maxiter);
    if (auto v = s.raw("svd")) c.svd = parse_svd(trim(*v));
    if (auto v = s.raw("method")) c.method = parse_ada_method(trim(*v));
    if (auto v = s.raw("gamma_seq")) c.gamma_seq = parse_double_list(*v);
    s.read("lambda_grid", c.lambda_grid);
    read_fd(s, c.fd);
    read_search(s, c.search);
    s.finish();
    plan.configs.push_back(std::move(c));
  }
  require(!plan.configs.empty(), "config: no simulation sections");
  require(plan.reps >= 1, "config: reps must be positive");
  return plan;
}

namespace {

struct Globals {
  int threads = 0;
  std::uint64_t seed = 0;
  std::string na_token = "NA";
  std::string format = "csv";
};

template <typename T>
std::optional<T> given(const CLI::Option* opt, const T& value) {
  return opt->count() ? std::optional<T>(value) : std::nullopt;
}

json opt_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

json opt_json(const std::optional<Index>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json warnings_json(const Diagnostics& diagnostics) {
  auto out = json::array();
  for (const auto& d : diagnostics)
    out.push_back({{"code", d.code}, {"message", d.message}, {"value", opt_json(d.value)}});
  return out;
}

void print_warnings(const Diagnostics& diagnostics) {
  for (const auto& d : diagnostics) std::cerr << "warning [" << d.code << "]: " << d.message << "\n";
}

std::string out_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

Matrix column(const Vector& v) { return Matrix(v); }

NumericTable read_complete(const std::string& path, const Globals& g) {
  NumericTable table = read_numeric(path, g.na_token);
  if (table.data.has_missing())
    throw InputError("input has " + std::to_string(table.data.missing_count()) +
                     " missing cells (token '" + g.na_token +
                     "'); denoising needs a complete matrix, use the impute command instead");
  return table;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  Index n = 200;
  Index p = 500;
  Index k = 10;
  double snr = 4.0;
  std::string out;
};

void cmd_simulate(const SimulateArgs& a, const Globals& g) {
  const SimulationBundle sim = lrsim(a.n, a.p, a.k, a.snr, g.seed);
  ensure_directory(a.out);
  const auto header = default_header(a.p);
  write_matrix(a.out, "X", sim.x, header, g.format);
  write_matrix(a.out, "mu", sim.mu, header, g.format);
  json meta;
  meta["command"] = "simulate";
  meta["n"] = a.n;
  meta["p"] = a.p;
  meta["k"] = a.k;
  meta["snr"] = a.snr;
  meta["sigma"] = sim.sigma;
  meta["seed"] = g.seed;
  write_json(out_path(a.out, "meta.json"), meta);
}

// ---------------------------------------------------------------------------

struct DenoiseArgs {
  std::string input;
  std::string out;
  std::string method = "adashrink";
  // adashrink
  std::string criterion = "gsure";
  double sigma = 0.0;
  const CLI::Option* sigma_opt = nullptr;
  std::string gamma_seq = "1:5:0.1";
  double lambda0 = 0.0;
  const CLI::Option* lambda0_opt = nullptr;
  bool no_center = false;
  int nbsim = 500;
  double quantile = 0.95;
  bool risk_surface = false;
  int surface_points = 50;
  LineSearchOptions search;
  // optishrink
  std::string rule = "asympt";
  std::string loss = "frobenius";
  Index k = 0;
  const CLI::Option* k_opt = nullptr;
  // isa
  std::string noise;
  std::string transformation = "none";
  double delta = 0.0;
  const CLI::Option* delta_opt = nullptr;
  double svd_cutoff = 1e-3;
  int maxiter = 1000;
  double threshold = 1e-6;
  Index nu = 0;
  const CLI::Option* nu_opt = nullptr;
};

Loss parse_loss(const std::string& v) {
  if (v == "frobenius") return Loss::Frobenius;
  if (v == "operator") return Loss::Operator;
  if (v == "nuclear") return Loss::Nuclear;
  throw InputError("unknown loss '" + v + "' (expected frobenius, operator or nuclear)");
}

json base_summary(const std::string& command, const std::string& method, const DataMatrix& x,
                  const Globals& g) {
  json s;
  s["command"] = command;
  s["method"] = method;
  s["n"] = x.rows();
  s["p"] = x.cols();
  s["seed"] = g.seed;
  return s;
}

void fill_estimate(json& s, Index nb_eigen, const TuningParams& params,
                   std::optional<std::string> criterion, std::optional<double> criterion_value,
                   std::optional<int> nb_iter, bool converged, const Diagnostics& diagnostics) {
  s["nb_eigen"] = nb_eigen;
  s["lambda"] = opt_json(params.lambda);
  s["gamma"] = opt_json(params.gamma);
  s["sigma"] = opt_json(params.sigma);
  s["delta"] = opt_json(params.delta);
  s["k"] = opt_json(params.k);
  s["criterion"] = criterion ? json(*criterion) : json(nullptr);
  s["criterion_value"] = opt_json(criterion_value);
  s["nb_iter"] = nb_iter ? json(*nb_iter) : json(nullptr);
  s["converged"] = converged;
  s["warnings"] = warnings_json(diagnostics);
}

void write_risk_surface(const DenoiseArgs& a, const Globals& g, const DataMatrix& x,
                        const AdaShrinkOptions& options, const ShrinkageResult& result) {
  const bool center = options.center;
  const Matrix centered = center ? center_columns(x).first.values() : x.values();
  const Vector d = compute_svd(centered).d;
  require(a.surface_points >= 2, "--surface-points must be at least 2");
  if (d.size() == 0 || d(0) <= 0.0) return;
  std::vector<double> lambdas;
  for (int i = 0; i < a.surface_points; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(a.surface_points - 1);
    lambdas.push_back(d(0) * std::pow(10.0, -3.0 * (1.0 - frac)));
  }
  const Criterion crit =
      options.method == AdaMethod::Gsure ? Criterion::Gsure : Criterion::Sure;
  const Matrix surface = risk_surface(d, lambdas, options.gamma_seq, crit,
                                      SpectrumShape{x.rows(), x.cols(), center},
                                      result.params.sigma);
  Matrix table(surface.size(), 3);
  Index row = 0;
  for (Index i = 0; i < surface.rows(); ++i)
    for (Index j = 0; j < surface.cols(); ++j, ++row) {
      table(row, 0) = lambdas[static_cast<std::size_t>(i)];
      table(row, 1) = options.gamma_seq[static_cast<std::size_t>(j)];
      table(row, 2) = surface(i, j);
    }
  write_matrix(a.out, "risk_surface", table,
               {"lambda", "gamma", crit == Criterion::Gsure ? "gsure" : "sure"}, g.format);
}

void cmd_denoise(const DenoiseArgs& a, const Globals& g) {
  const NumericTable table = read_complete(a.input, g);
  const DataMatrix& x = table.data;
  ensure_directory(a.out);
  json summary = base_summary("denoise", a.method, x, g);

  if (a.method == "adashrink") {
    AdaShrinkOptions o;
    o.sigma = given(a.sigma_opt, a.sigma);
    o.method = parse_ada_method(a.criterion);
    o.gamma_seq = parse_double_list(a.gamma_seq);
    o.lambda0 = given(a.lambda0_opt, a.lambda0);
    o.center = !a.no_center;
    o.nbsim = a.nbsim;
    o.quantile_level = a.quantile;
    o.seed = g.seed;
    o.search = a.search;
    const ShrinkageResult r = adashrink(x, o);
    write_matrix(a.out, "mu_hat", r.mu_hat, table.header, g.format);
    write_matrix(a.out, "singval", column(r.singval), {"singval"}, g.format);
    if (a.risk_surface) write_risk_surface(a, g, x, o, r);
    fill_estimate(summary, r.nb_eigen, r.params, ada_name(o.method), r.criterion, r.nb_iter,
                  r.converged, r.diagnostics);
    print_warnings(r.diagnostics);
  } else if (a.method == "optishrink") {
    OptiShrinkOptions o;
    o.sigma = given(a.sigma_opt, a.sigma);
    if (a.rule == "asympt")
      o.method = OptiMethod::Asympt;
    else if (a.rule == "lownoise")
      o.method = OptiMethod::LowNoise;
    else
      throw InputError("unknown shrinker '" + a.rule + "' (expected asympt or lownoise)");
    o.loss = parse_loss(a.loss);
    o.k = given(a.k_opt, a.k);
    o.center = !a.no_center;
    o.seed = g.seed;
    const ShrinkageResult r = optishrink(x, o);
    write_matrix(a.out, "mu_hat", r.mu_hat, table.header, g.format);
    write_matrix(a.out, "singval", column(r.singval), {"singval"}, g.format);
    fill_estimate(summary, r.nb_eigen, r.params, std::nullopt, r.criterion, r.nb_iter,
                  r.converged, r.diagnostics);
    print_warnings(r.diagnostics);
  } else if (a.method == "isa") {
    IsaOptions o;
    o.sigma = given(a.sigma_opt, a.sigma);
    o.delta = given(a.delta_opt, a.delta);
    if (a.noise == "gaussian")
      o.noise = NoiseKind::Gaussian;
    else if (a.noise == "binomial")
      o.noise = NoiseKind::Binomial;
    else if (!a.noise.empty())
      throw InputError("unknown noise model '" + a.noise + "' (expected gaussian or binomial)");
    if (a.transformation == "ca")
      o.transformation = Transformation::Ca;
    else if (a.transformation != "none")
      throw InputError("unknown transformation '" + a.transformation + "' (expected none or ca)");
    o.svd_cutoff = a.svd_cutoff;
    o.maxiter = a.maxiter;
    o.threshold = a.threshold;
    o.nu = given(a.nu_opt, a.nu);
    o.center = !a.no_center;
    o.delta_cv.seed = g.seed;
    const IsaResult r = isa(x, o);
    if (r.ca) {
      write_matrix(a.out, "mu_hat", r.mu_working, table.header, g.format);
      write_matrix(a.out, "ca_mu_hat", r.mu_hat, table.header, g.format);
      const CaCoordinates coords = ca_coordinates(r.low_rank, *r.ca);
      const auto dims = default_header(coords.rows.cols(), "Dim");
      write_matrix(a.out, "ca_row_coords", coords.rows, dims, g.format);
      write_matrix(a.out, "ca_col_coords", coords.cols, dims, g.format);
    } else {
      write_matrix(a.out, "mu_hat", r.mu_hat, table.header, g.format);
    }
    write_matrix(a.out, "singval", column(r.singval), {"singval"}, g.format);
    fill_estimate(summary, r.nb_eigen, r.params, std::nullopt, r.criterion, r.nb_iter,
                  r.converged, r.diagnostics);
    summary["transformation"] = r.ca ? "ca" : "none";
    print_warnings(r.diagnostics);
  } else {
    throw InputError("unknown method '" + a.method + "' (expected adashrink, optishrink or isa)");
  }
  write_json(out_path(a.out, "summary.json"), summary);
}

// ---------------------------------------------------------------------------

struct NoiseArgs {
  std::string input;
  std::string method = "mad";
  Index k = 0;
  const CLI::Option* k_opt = nullptr;
  bool no_center = false;
  Index k_max = 0;
  const CLI::Option* k_max_opt = nullptr;
  double pna = 0.05;
  int nbsim = 10;
};

void cmd_estimate_noise(const NoiseArgs& a, const Globals& g) {
  const NumericTable table = read_complete(a.input, g);
  SigmaEstimate est;
  if (a.method == "mad") {
    if (a.k_opt->count()) throw InputError("--k applies to the ln method only");
    est = estim_sigma_mad(table.data, !a.no_center);
  } else if (a.method == "ln") {
    RankCvOptions cv;
    cv.k_max = given(a.k_max_opt, a.k_max);
    cv.pna = a.pna;
    cv.nbsim = a.nbsim;
    cv.seed = g.seed;
    cv.center = !a.no_center;
    est = estim_sigma_ln(table.data, given(a.k_opt, a.k), !a.no_center, cv);
  } else {
    throw InputError("unknown method '" + a.method + "' (expected mad or ln)");
  }
  json out;
  out["method"] = a.method;
  out["sigma"] = est.sigma;
  out["k"] = opt_json(est.k_used);
  out["k_estimated"] = est.k_estimated;
  out["warnings"] = warnings_json(est.diagnostics);
  print_warnings(est.diagnostics);
  std::cout << out.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct ImputeArgs {
  std::string input;
  std::string out;
  std::string truth;
  std::string method = "gsure";
  double lambda = 0.0;
  const CLI::Option* lambda_opt = nullptr;
  double gamma = 0.0;
  const CLI::Option* gamma_opt = nullptr;
  double sigma = 0.0;
  const CLI::Option* sigma_opt = nullptr;
  std::string gamma_seq = "1:5:0.1";
  bool no_center = false;
  bool scale = false;
  double threshold = 1e-8;
  int maxiter = 1000;
  int nb_init = 1;
  double lambda0 = 0.0;
  const CLI::Option* lambda0_opt = nullptr;
  std::string svd = "dense";
  FdOptions fd;
  Index fd_cells = 0;
  const CLI::Option* fd_cells_opt = nullptr;
  LineSearchOptions search;
};

void cmd_impute(const ImputeArgs& a, const Globals& g) {
  const NumericTable table = read_numeric(a.input, g.na_token);
  const DataMatrix& x = table.data;
  ImputeAdaOptions o;
  o.lambda = given(a.lambda_opt, a.lambda);
  o.gamma = given(a.gamma_opt, a.gamma);
  o.sigma = given(a.sigma_opt, a.sigma);
  o.method = parse_ada_method(a.method);
  if (o.method == AdaMethod::Qut)
    throw InputError("method qut is not available with missing values; use gsure or sure");
  if (o.method == AdaMethod::Sure && !o.sigma && !(o.lambda && o.gamma))
    throw InputError(
        "method sure needs --sigma: it is necessary to specify the variance of the noise");
  o.gamma_seq = parse_double_list(a.gamma_seq);
  o.center = !a.no_center;
  o.scale = a.scale;
  o.threshold = a.threshold;
  o.nb_init = a.nb_init;
  o.maxiter = a.maxiter;
  o.lambda0 = given(a.lambda0_opt, a.lambda0);
  o.seed = g.seed;
  o.svd = parse_svd(a.svd);
  o.fd = a.fd;
  o.fd.cell_subset = given(a.fd_cells_opt, a.fd_cells);
  o.fd.seed = derive_seed(g.seed, "impute-fd");
  o.search = a.search;

  std::optional<NumericTable> truth;
  if (!a.truth.empty()) {
    truth = read_numeric(a.truth, g.na_token);
    if (truth->data.has_missing()) throw InputError("--truth must be a complete matrix");
    if (truth->data.rows() != x.rows() || truth->data.cols() != x.cols())
      throw InputError("--truth has a different shape than the input");
  }

  const ImputationResult r = imputeada(x, o);
  ensure_directory(a.out);
  if (g.format == "json")
    write_matrix(a.out, "completeObs", r.complete_obs, table.header, g.format);
  else
    write_text(out_path(a.out, "completeObs.csv"), completed_csv(table, r.complete_obs));
  write_matrix(a.out, "mu_hat", r.mu_hat, table.header, g.format);

  json summary = base_summary("impute", a.method, x, g);
  summary["missing_cells"] = x.missing_count();
  const bool selected = !(o.lambda && o.gamma);
  fill_estimate(summary, r.nb_eigen, r.params,
                selected ? std::optional<std::string>(a.method) : std::nullopt, r.criterion,
                r.nb_iter, r.converged, r.diagnostics);
  if (truth) {
    const Mask hidden = !x.observed();
    const Vector means = observed_column_means(x);
    const Matrix mean_fill = fill_missing(x, Matrix(means.transpose().replicate(x.rows(), 1)));
    json m;
    if (x.has_missing()) {
      const double imputed = msep(r.complete_obs, truth->data.values(), hidden);
      const double baseline = msep(mean_fill, truth->data.values(), hidden);
      m["imputed"] = imputed;
      m["mean_imputation"] = baseline;
      m["improved"] = imputed < baseline;
    } else {
      m["imputed"] = nullptr;
      m["mean_imputation"] = nullptr;
      m["improved"] = nullptr;
    }
    summary["msep"] = m;
  }
  print_warnings(r.diagnostics);
  write_json(out_path(a.out, "summary.json"), summary);
}

// ---------------------------------------------------------------------------

struct ExperimentArgs {
  std::string name;
  std::string config;
  int reps = 0;
  const CLI::Option* reps_opt = nullptr;
  std::string out;
};

void write_report(const ExperimentReport& report, const std::string& dir, const Globals& g) {
  if (g.format == "json") {
    auto records = json::array();
    for (const auto& row : report.rows) {
      json rec;
      for (std::size_t c = 0; c < report.label_columns.size(); ++c)
        rec[report.label_columns[c]] = row.labels[c];
      rec["replicate"] = row.replicate;
      rec["seed"] = row.seed;
      for (std::size_t c = 0; c < report.value_columns.size(); ++c)
        rec[report.value_columns[c]] = finite_or_null(row.values[c]);
      records.push_back(std::move(rec));
    }
    write_json(out_path(dir, "report.json"), records);
    return;
  }
  std::string text;
  std::vector<std::string> header = report.label_columns;
  header.push_back("replicate");
  header.push_back("seed");
  header.insert(header.end(), report.value_columns.begin(), report.value_columns.end());
  for (std::size_t c = 0; c < header.size(); ++c) text += (c ? "," : "") + csv_escape(header[c]);
  text += "\n";
  for (const auto& row : report.rows) {
    std::string line;
    for (const auto& l : row.labels) line += csv_escape(l) + ",";
    line += std::to_string(row.replicate) + "," + std::to_string(row.seed);
    for (double v : row.values) line += "," + format_double(v);
    text += line + "\n";
  }
  write_text(out_path(dir, "report.csv"), text);
}

json aggregates_json(const ExperimentReport& report) {
  auto out = json::array();
  for (const auto& a : report.aggregates) {
    json labels = json::object();
    for (std::size_t c = 0; c < report.label_columns.size(); ++c)
      labels[report.label_columns[c]] = a.labels[c];
    out.push_back({{"labels", labels},
                   {"column", a.column},
                   {"count", a.count},
                   {"mean", finite_or_null(a.mean)},
                   {"sd", finite_or_null(a.sd)},
                   {"se", finite_or_null(a.se)}});
  }
  return out;
}

json bias_checks(const ExperimentReport& report) {
  auto out = json::array();
  for (const std::string col : {"bias_complete", "bias_sure_miss", "bias_sure_comp"}) {
    const Aggregate& a = report.find({}, col);
    const double z = a.se > 0.0 ? a.mean / a.se : 0.0;
    out.push_back({{"column", col},
                   {"mean", finite_or_null(a.mean)},
                   {"se", finite_or_null(a.se)},
                   {"z", finite_or_null(z)},
                   {"within_2se", std::abs(a.mean) <= 2.0 * a.se}});
  }
  return out;
}

json msep_checks(const ExperimentReport& report, const std::string& dir, const Globals& g) {
  std::vector<std::string> configs;
  std::vector<std::string> mechanisms;
  for (const auto& a : report.aggregates) {
    if (std::find(configs.begin(), configs.end(), a.labels[0]) == configs.end())
      configs.push_back(a.labels[0]);
    if (std::find(mechanisms.begin(), mechanisms.end(), a.labels[1]) == mechanisms.end())
      mechanisms.push_back(a.labels[1]);
  }
  auto mean_of = [&](const std::string& c, const std::string& m,
                     const std::string& arm) -> std::optional<double> {
    for (const auto& a : report.aggregates)
      if (a.labels == std::vector<std::string>{c, m, arm}) return a.mean;
    return std::nullopt;
  };

  // Mean MSEP table: one row per (config, arm), one column per mechanism.
  std::string text = "config,arm";
  for (const auto& m : mechanisms) text += "," + csv_escape(m);
  text += "\n";
  auto checks = json::array();
  for (const auto& c : configs) {
    for (const std::string arm : {"atn", "soft_oracle", "mean"}) {
      text += csv_escape(c) + "," + arm;
      for (const auto& m : mechanisms) {
        const auto v = mean_of(c, m, arm);
        text += "," + (v ? format_double(*v) : g.na_token);
      }
      text += "\n";
    }
    for (const auto& m : mechanisms) {
      const auto atn = mean_of(c, m, "atn");
      const auto oracle = mean_of(c, m, "soft_oracle");
      const auto mean = mean_of(c, m, "mean");
      if (!atn || !oracle || !mean) continue;
      checks.push_back({{"config", c},
                        {"mechanism", m},
                        {"atn", *atn},
                        {"soft_oracle", *oracle},
                        {"mean", *mean},
                        {"ordering_holds", *atn <= *oracle && *oracle <= *mean}});
    }
  }
  write_text(out_path(dir, "table.csv"), text);
  return checks;
}

void cmd_experiment(const ExperimentArgs& a, const Globals& g) {
  ExperimentReport report;
  if (a.name == "bias") {
    BiasPlan plan = a.config.empty() ? BiasPlan{} : load_bias_config(a.config);
    if (a.reps_opt->count()) plan.reps = a.reps;
    report = bias_experiment(plan.config, plan.reps, g.seed);
  } else if (a.name == "msep") {
    MsepPlan plan = a.config.empty() ? MsepPlan{{MsepConfig{}}, 20} : load_msep_config(a.config);
    if (a.reps_opt->count()) plan.reps = a.reps;
    report = comparison_experiment(plan.configs, plan.reps, g.seed);
  } else {
    throw InputError("unknown experiment '" + a.name + "' (expected bias or msep)");
  }
  ensure_directory(a.out);
  write_report(report, a.out, g);
  json summary;
  summary["command"] = "experiment";
  summary["name"] = report.name;
  summary["seed"] = g.seed;
  json meta = json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  summary["metadata"] = meta;
  summary["aggregates"] = aggregates_json(report);
  summary["checks"] = report.name == "bias" ? bias_checks(report) : msep_checks(report, a.out, g);
  summary["warnings"] = json::array();
  write_json(out_path(a.out, "summary.json"), summary);
}

void add_fd_flags(CLI::App* app, FdOptions& fd, Index& cells, const CLI::Option*& cells_opt) {
  cells_opt = app->add_option("--fd-cells", cells,
                              "Perturb a random subset of this many observed cells")
                  ->check(CLI::PositiveNumber);
  app->add_option("--fd-step-scale", fd.step_scale, "Relative finite-difference step")
      ->capture_default_str();
  app->add_option("--fd-tolerance", fd.tolerance, "Early-exit tolerance of each rerun")
      ->capture_default_str();
  app->add_option("--fd-extra-iterations", fd.extra_iterations,
                  "Rerun steps beyond the base fit's iteration count")
      ->capture_default_str();
  app->add_option("--fd-max-iterations", fd.max_iterations, "Cap on rerun steps")
      ->capture_default_str();
}

void add_search_flags(CLI::App* app, LineSearchOptions& s) {
  app->add_option("--search-evaluations", s.max_evaluations,
                  "Objective evaluations per local search")
      ->capture_default_str();
  app->add_option("--search-restarts", s.restarts, "Probe points for restarting the search")
      ->capture_default_str();
  app->add_option("--search-tolerance", s.tolerance, "Tolerance on log(lambda)")
      ->capture_default_str();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Low-rank matrix estimation: shrinkage denoising, noise estimation and imputation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads,
                 "Worker threads (0 = LOWRANK_THREADS or 1); results do not depend on it")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--na-token", g.na_token, "Token marking a missing cell")->capture_default_str();
  app.add_option("--format", g.format, "Matrix output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "Simulate a low-rank matrix plus Gaussian noise");
  simulate->add_option("--n", sim.n, "Rows")->capture_default_str();
  simulate->add_option("--p", sim.p, "Columns")->capture_default_str();
  simulate->add_option("--k", sim.k, "Rank of the signal")->capture_default_str();
  simulate->add_option("--snr", sim.snr, "Signal-to-noise ratio 1/(sigma sqrt(np))")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();

  DenoiseArgs den;
  CLI::App* denoise = app.add_subcommand("denoise", "Denoise a complete matrix");
  denoise->add_option("--input", den.input, "Input CSV")->required();
  denoise->add_option("--out", den.out, "Output directory")->required();
  denoise->add_option("--method", den.method, "adashrink, optishrink or isa")
      ->check(CLI::IsMember({"adashrink", "optishrink", "isa"}))
      ->capture_default_str();
  denoise->add_option("--criterion", den.criterion, "adashrink: gsure, sure or qut")
      ->check(CLI::IsMember({"gsure", "sure", "qut"}))
      ->capture_default_str();
  den.sigma_opt = denoise->add_option("--sigma", den.sigma, "Noise standard deviation")
                      ->check(CLI::PositiveNumber);
  denoise->add_option("--gamma-seq", den.gamma_seq, "adashrink: candidate gammas (list or a:b:step)")
      ->capture_default_str();
  den.lambda0_opt =
      denoise->add_option("--lambda0", den.lambda0, "adashrink: starting threshold")
          ->check(CLI::PositiveNumber);
  denoise->add_flag("--no-center", den.no_center, "Do not center the columns");
  denoise->add_option("--nbsim", den.nbsim, "adashrink/qut: null simulations")
      ->capture_default_str();
  denoise->add_option("--quantile", den.quantile, "adashrink/qut: quantile level")
      ->capture_default_str();
  denoise->add_flag("--risk-surface", den.risk_surface,
                    "adashrink: also write risk_surface over a lambda x gamma grid");
  denoise->add_option("--surface-points", den.surface_points, "Lambda grid size of risk_surface")
      ->capture_default_str();
  add_search_flags(denoise, den.search);
  denoise->add_option("--rule", den.rule, "optishrink: asympt or lownoise")
      ->check(CLI::IsMember({"asympt", "lownoise"}))
      ->capture_default_str();
  denoise->add_option("--loss", den.loss, "optishrink: frobenius, operator or nuclear")
      ->check(CLI::IsMember({"frobenius", "operator", "nuclear"}))
      ->capture_default_str();
  den.k_opt = denoise->add_option("--k", den.k, "optishrink/lownoise: rank")
                  ->check(CLI::NonNegativeNumber);
  denoise->add_option("--noise", den.noise, "isa: gaussian or binomial")
      ->check(CLI::IsMember({"gaussian", "binomial"}));
  denoise->add_option("--transformation", den.transformation, "isa: none or ca")
      ->check(CLI::IsMember({"none", "ca"}))
      ->capture_default_str();
  den.delta_opt = denoise->add_option("--delta", den.delta, "isa: binomial deletion probability");
  denoise->add_option("--svd-cutoff", den.svd_cutoff, "isa: relative cutoff counting components")
      ->capture_default_str();
  denoise->add_option("--maxiter", den.maxiter, "isa: iteration cap")->capture_default_str();
  denoise->add_option("--threshold", den.threshold, "isa: convergence threshold")
      ->capture_default_str();
  den.nu_opt = denoise->add_option("--nu", den.nu, "isa: factors kept for CA coordinates")
                   ->check(CLI::PositiveNumber);

  NoiseArgs noise;
  CLI::App* estimate =
      app.add_subcommand("estimate-noise", "Estimate the noise standard deviation (JSON on stdout)");
  estimate->add_option("--input", noise.input, "Input CSV")->required();
  estimate->add_option("--method", noise.method, "mad or ln")
      ->check(CLI::IsMember({"mad", "ln"}))
      ->capture_default_str();
  noise.k_opt = estimate->add_option("--k", noise.k, "ln: signal rank (cross-validated if absent)")
                    ->check(CLI::NonNegativeNumber);
  estimate->add_flag("--no-center", noise.no_center, "Do not center the columns");
  noise.k_max_opt = estimate->add_option("--k-max", noise.k_max, "Largest rank tried by cross-validation")
                        ->check(CLI::NonNegativeNumber);
  estimate->add_option("--pna", noise.pna, "Fraction of cells hidden per cross-validation draw")
      ->capture_default_str();
  estimate->add_option("--nbsim", noise.nbsim, "Cross-validation draws")->capture_default_str();

  ImputeArgs imp;
  CLI::App* impute = app.add_subcommand("impute", "Impute missing cells by iterative ATN shrinkage");
  impute->add_option("--input", imp.input, "Input CSV with missing tokens")->required();
  impute->add_option("--out", imp.out, "Output directory")->required();
  impute->add_option("--method", imp.method, "gsure or sure")->capture_default_str();
  imp.lambda_opt = impute->add_option("--lambda", imp.lambda, "Fixed threshold")
                       ->check(CLI::PositiveNumber);
  imp.gamma_opt = impute->add_option("--gamma", imp.gamma, "Fixed exponent (>= 1)");
  imp.sigma_opt = impute->add_option("--sigma", imp.sigma, "Noise standard deviation")
                      ->check(CLI::PositiveNumber);
  impute->add_option("--gamma-seq", imp.gamma_seq, "Candidate gammas (list or a:b:step)")
      ->capture_default_str();
  impute->add_flag("--no-center", imp.no_center, "Do not center the columns");
  impute->add_flag("--scale", imp.scale, "Scale columns to unit variance");
  impute->add_option("--threshold", imp.threshold, "Convergence threshold")->capture_default_str();
  impute->add_option("--maxiter", imp.maxiter, "Iteration cap")->capture_default_str();
  impute->add_option("--nb-init", imp.nb_init, "Number of initializations")->capture_default_str();
  imp.lambda0_opt = impute->add_option("--lambda0", imp.lambda0, "Starting threshold")
                        ->check(CLI::PositiveNumber);
  impute->add_option("--svd", imp.svd, "dense, gram or randomized")
      ->check(CLI::IsMember({"dense", "gram", "randomized"}))
      ->capture_default_str();
  add_fd_flags(impute, imp.fd, imp.fd_cells, imp.fd_cells_opt);
  add_search_flags(impute, imp.search);
  impute->add_option("--truth", imp.truth, "Complete matrix; reports MSEP on the missing cells");

  ExperimentArgs exp;
  CLI::App* experiment = app.add_subcommand("experiment", "Run a simulation experiment");
  experiment->add_option("name", exp.name, "bias or msep")
      ->required()
      ->check(CLI::IsMember({"bias", "msep"}));
  experiment->add_option("--config", exp.config, "INI configuration file");
  exp.reps_opt = experiment->add_option("--reps", exp.reps, "Replicates (overrides the config)")
                     ->check(CLI::PositiveNumber);
  experiment->add_option("--out", exp.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (g.threads > 0) set_default_threads(g.threads);
    if (simulate->parsed())
      cmd_simulate(sim, g);
    else if (denoise->parsed())
      cmd_denoise(den, g);
    else if (estimate->parsed())
      cmd_estimate_noise(noise, g);
    else if (impute->parsed())
      cmd_impute(imp, g);
    else if (experiment->parsed())
      cmd_experiment(exp, g);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace lowrank::cli

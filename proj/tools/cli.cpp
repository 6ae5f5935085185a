#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rumfit/rumfit.hpp"

namespace rumfit::cli {
namespace {

using Json = nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// key=value lines; nested objects flatten with '.', arrays of scalars join
// with ',', arrays of objects index their elements.
void render_text(const Json& j, const std::string& prefix, std::ostream& os) {
  auto scalar = [](const Json& v) -> std::string {
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return "";
    return v.dump();
  };
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      render_text(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), os);
    return;
  }
  if (j.is_array()) {
    const bool flat = std::all_of(j.begin(), j.end(), [](const Json& v) { return v.is_primitive(); });
    if (flat) {
      os << prefix << '=';
      for (std::size_t i = 0; i < j.size(); ++i) os << (i ? "," : "") << scalar(j[i]);
      os << '\n';
    } else {
      for (std::size_t i = 0; i < j.size(); ++i) render_text(j[i], prefix + "." + std::to_string(i), os);
    }
    return;
  }
  os << prefix << '=' << scalar(j) << '\n';
}

// Doubles rounded through the text format so JSON and text agree.
Json num(double v) {
  if (!std::isfinite(v)) return format_double(v);
  return std::stod(format_double(v));
}

Json nums(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

Json ints(const std::vector<int>& v) {
  Json a = Json::array();
  for (int x : v) a.push_back(x);
  return a;
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size() && tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError(std::string("invalid number '") + tok + "' in " + what);
    }
  }
  return out;
}

// Induced order with near-equal neighbours joined by '='.
std::string induced_ranking(const std::vector<double>& theta, double tie_gap) {
  const Ranking r = order_by_score(theta);
  std::string s;
  for (int i = 0; i < r.size(); ++i) {
    if (i > 0) s += std::abs(theta[r[i - 1]] - theta[r[i]]) < tie_gap ? "=" : ">";
    s += std::to_string(r[i]);
  }
  return s;
}

Json condition1_json(const Condition1Result& c) {
  Json j;
  j["satisfied"] = c.satisfied;
  if (!c.satisfied) {
    j["dominant"] = ints(c.dominant);
    j["dominated"] = ints(c.dominated);
  }
  return j;
}

struct Input {
  std::string path;
  std::string digest;
};

struct Context {
  std::string command;
  std::vector<Input> inputs;
  std::uint64_t seed = 0;
  int threads = 0;
  Json extra_manifest = Json::object();
};

// ---------------------------------------------------------------------------
// Shared option groups

struct FitFlags {
  std::string model = "normal";
  int iters = 100;
  int min_iters = 3;
  double tol = 1e-3;
  int gibbs_n = 0;  // > 0: constant schedule
  int gibbs_m = 0;  // 0: exact Rao-Blackwellization
  double thin = 1.0;
  int burn_in = 10;
  std::string schedule = "2000+300*t";
  std::string scale;
  bool random_site = false;
  bool mean_zero = false;

  void add(CLI::App* app, bool with_model = true) {
    if (with_model)
      app->add_option("--model", model, "normal | normal-freevar | gumbel | pl")
          ->check(CLI::IsMember({"normal", "normal-freevar", "gumbel", "pl"}));
    app->add_option("--iters", iters, "maximum EM iterations")->check(CLI::PositiveNumber);
    app->add_option("--min-iters", min_iters, "minimum EM iterations")->check(CLI::NonNegativeNumber);
    app->add_option("--tol", tol, "parameter-change tolerance")->check(CLI::NonNegativeNumber);
    app->add_option("--gibbs-n", gibbs_n, "constant Gibbs sample count (overrides --schedule)")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--gibbs-m", gibbs_m, "Rao-Blackwell draws per visit; 0 = exact conditional mean")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--thin", thin, "thinning factor F in (0, 1]")->check(CLI::Range(0.0, 1.0));
    app->add_option("--burn-in", burn_in, "discarded Gibbs scans")->check(CLI::NonNegativeNumber);
    app->add_option("--schedule", schedule, "Gibbs samples per iteration, 'a+b*t'");
    app->add_option("--scale", scale, "comma-separated fixed (or initial) noise scales");
    app->add_flag("--random-site", random_site, "uniform random-position Gibbs updates");
    app->add_flag("--mean-zero", mean_zero, "iterate with mean-zero normalization");
  }

  ModelSpec spec(std::uint64_t seed, int threads, int m) const {
    ModelSpec s;
    s.kind = parse_model(model);
    auto& f = s.fit;
    f.max_iters = iters;
    f.min_iters = min_iters;
    f.param_tol = tol;
    f.schedule = gibbs_n > 0 ? SampleSchedule::constant(gibbs_n) : SampleSchedule::parse(schedule);
    f.gibbs.exact_rao_blackwell = gibbs_m == 0;
    f.gibbs.rb_samples = std::max(gibbs_m, 1);
    f.gibbs.thinning = thin;
    f.gibbs.burn_in = burn_in;
    f.gibbs.seed = seed;
    f.gibbs.scheme = random_site ? UpdateScheme::random_site : UpdateScheme::permutation_scan;
    f.normalization = mean_zero ? Normalization::mean_zero : Normalization::fix_first_to_zero;
    f.threads = threads;
    if (!scale.empty()) {
      f.scale = parse_list(scale, "--scale");
      if (static_cast<int>(f.scale.size()) != m)
        throw DataError("--scale needs " + std::to_string(m) + " values");
    }
    if (s.kind == ModelKind::pl && !f.scale.empty()) throw DataError("--scale does not apply to the pl model");
    return s;
  }

  Json describe() const {
    Json j;
    j["model"] = model;
    j["iters"] = iters;
    j["min_iters"] = min_iters;
    j["tol"] = tol;
    j["gibbs_n"] = gibbs_n;
    j["gibbs_m"] = gibbs_m;
    j["thin"] = thin;
    j["burn_in"] = burn_in;
    j["schedule"] = gibbs_n > 0 ? SampleSchedule::constant(gibbs_n).str() : SampleSchedule::parse(schedule).str();
    j["scale"] = scale;
    j["random_site"] = random_site;
    j["mean_zero"] = mean_zero;
    return j;
  }
};

struct OutputFlags {
  std::string format = "text";
  std::string out;
  std::string manifest;

  void add(CLI::App* app) {
    app->add_option("--format", format, "text | json")->check(CLI::IsMember({"text", "json"}));
    app->add_option("--out", out, "write the report here instead of stdout");
    app->add_option("--manifest", manifest, "write a run manifest (JSON) here");
  }
};

void write_report(const Json& report, const OutputFlags& of, std::ostream& out) {
  std::ostringstream os;
  if (of.format == "json") os << report.dump(2) << '\n';
  else render_text(report, "", os);
  if (of.out.empty()) {
    out << os.str();
    return;
  }
  std::ofstream f(of.out, std::ios::binary);
  if (!f) throw DataError("cannot write '" + of.out + "'");
  f << os.str();
}

void write_manifest(const Context& ctx, const OutputFlags& of, const Json& options, double seconds) {
  if (of.manifest.empty()) return;
  Json j;
  j["command"] = ctx.command;
  j["version"] = kVersion;
  j["seed"] = ctx.seed;
  j["threads"] = resolve_threads(ctx.threads);
  j["options"] = options;
  Json in = Json::array();
  for (const auto& i : ctx.inputs) in.push_back({{"path", i.path}, {"sha256", i.digest}});
  j["inputs"] = in;
  j["wall_time_seconds"] = seconds;
  for (auto it = ctx.extra_manifest.begin(); it != ctx.extra_manifest.end(); ++it) j[it.key()] = it.value();
  std::ofstream f(of.manifest, std::ios::binary);
  if (!f) throw DataError("cannot write '" + of.manifest + "'");
  f << j.dump(2) << '\n';
}

Profile load_profile(const std::string& path, Context& ctx) {
  const std::string text = read_file(path);
  ctx.inputs.push_back({path, sha256_hex(text)});
  return parse_profile(text);
}

Json fit_json(const Profile& p, const ModelFit& f, double tol) {
  Json j;
  const auto& model = f.model;
  j["model"] = std::string(to_string(model.kind));
  j["m"] = p.num_alternatives();
  j["n"] = p.total_weight();
  j["theta"] = nums(model.theta);
  if (model.kind == ModelKind::pl) j["lambda"] = nums(model.lambda());
  else j["sigma"] = nums(model.sigma);
  j["ranking"] = induced_ranking(model.theta, 10.0 * tol);
  if (f.em) {
    const auto& r = *f.em;
    j["condition1"] = condition1_json(r.condition1);
    j["tie_warning"] = r.tie_warning;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations();
    j["tolerance_unreachable"] = r.tolerance_unreachable;
    j["variance_bound"] = num(r.final_variance_bound);
    Json notes = Json::array();
    for (const auto& s : r.notices) notes.push_back(s);
    j["notices"] = notes;
    Json tr = Json::array();
    for (const auto& rec : r.trace) {
      Json t;
      t["iteration"] = rec.iteration;
      t["n_samples"] = rec.n_samples;
      t["max_change"] = num(rec.max_change);
      t["theta"] = nums(rec.theta);
      if (!rec.sigma.empty()) t["sigma"] = nums(rec.sigma);
      tr.push_back(t);
    }
    j["trace"] = tr;
  } else {
    const auto& r = *f.pl;
    j["condition1"] = condition1_json(check_condition1(p));
    bool tie = false;
    for (std::size_t a = 0; a < model.theta.size(); ++a)
      for (std::size_t b = a + 1; b < model.theta.size(); ++b)
        tie = tie || std::abs(model.theta[a] - model.theta[b]) < 10.0 * tol;
    j["tie_warning"] = tie;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["log_likelihood"] = num(r.log_likelihood);
  }
  return j;
}

void write_trace_csv(const std::string& path, const FitResult& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  const std::size_t m = r.theta.size();
  f << "iteration,n_samples,max_change";
  for (std::size_t j = 0; j < m; ++j) f << ",theta_" << j;
  if (r.variance_estimated)
    for (std::size_t j = 0; j < m; ++j) f << ",sigma_" << j;
  f << '\n';
  for (const auto& rec : r.trace) {
    f << rec.iteration << ',' << rec.n_samples << ',' << format_double(rec.max_change);
    for (double t : rec.theta) f << ',' << format_double(t);
    for (double s : rec.sigma) f << ',' << format_double(s);
    f << '\n';
  }
}

// Plackett-Luce on data violating the connectivity condition is still iterated (bounded
// by --iters) and flagged, matching the EM path.
ModelFit fit_or_warn(const Profile& p, ModelSpec spec, Json& warnings) {
  if (spec.kind == ModelKind::pl && !check_condition1(p).satisfied) {
    spec.pl_allow_unbounded = true;
    spec.pl_max_iters = spec.fit.max_iters;
    warnings.push_back("Plackett-Luce maximum likelihood estimate does not exist for this profile");
  }
  return fit_model(p, spec);
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random utility model fitting for ranking data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Context ctx;
  OutputFlags of;
  FitFlags ff;
  std::string input;

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit a model by Monte-Carlo EM (or MM for pl)");
  std::string trace_csv;
  fit_cmd->add_option("ballots", input, "ballot file")->required();
  ff.add(fit_cmd);
  of.add(fit_cmd);
  fit_cmd->add_option("--seed", ctx.seed, "master seed");
  fit_cmd->add_option("--threads", ctx.threads, "worker threads (0 = machine parallelism)");
  fit_cmd->add_option("--trace-csv", trace_csv, "write the per-iteration trace as CSV");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "draw a profile from a RUM");
  int sim_m = 0;
  long long sim_n = -1;
  int sim_top = 0;
  std::string sim_theta = "linear", sim_family = "normal";
  double sim_var = 1.0;
  sim_cmd->add_option("--m", sim_m, "number of alternatives")->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--n", sim_n, "number of agents")->required();
  sim_cmd->add_option("--theta", sim_theta, "comma-separated locations or 'linear' (theta_j = j)");
  sim_cmd->add_option("--family", sim_family, "normal | gumbel")->check(CLI::IsMember({"normal", "gumbel"}));
  sim_cmd->add_option("--var", sim_var, "noise variance (normal) or squared scale (gumbel)")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--top", sim_top, "keep only the top k of each ranking (0 = total)")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--seed", ctx.seed, "master seed");
  sim_cmd->add_option("--out", of.out, "write the profile here instead of stdout");
  sim_cmd->add_option("--manifest", of.manifest, "write a run manifest (JSON) here");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "log-likelihood of a profile under a model");
  std::string ev_theta, ev_sigma, ev_method = "auto";
  int ev_draws = 10000;
  eval_cmd->add_option("ballots", input, "ballot file")->required();
  ff.add(eval_cmd);
  of.add(eval_cmd);
  eval_cmd->add_option("--theta", ev_theta, "model locations (fit first when omitted)");
  eval_cmd->add_option("--sigma", ev_sigma, "model scales (default 1)");
  eval_cmd->add_option("--method", ev_method, "auto | quadrature | sis | closed-form")
      ->check(CLI::IsMember({"auto", "quadrature", "sis", "closed-form"}));
  eval_cmd->add_option("--draws", ev_draws, "SIS draws per ballot")->check(CLI::Range(100, 100000000));
  eval_cmd->add_option("--seed", ctx.seed, "master seed");
  eval_cmd->add_option("--threads", ctx.threads, "worker threads (0 = machine parallelism)");

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "train/holdout comparison of two models");
  std::string model_a = "normal-freevar", model_b = "pl";
  int holdout = 100;
  cmp_cmd->add_option("ballots", input, "ballot file")->required();
  ff.add(cmp_cmd, false);
  of.add(cmp_cmd);
  cmp_cmd->add_option("--model-a", model_a, "first model")
      ->check(CLI::IsMember({"normal", "normal-freevar", "gumbel", "pl"}));
  cmp_cmd->add_option("--model-b", model_b, "second model")
      ->check(CLI::IsMember({"normal", "normal-freevar", "gumbel", "pl"}));
  cmp_cmd->add_option("--holdout", holdout, "held-out agents")->check(CLI::NonNegativeNumber);
  cmp_cmd->add_option("--method", ev_method, "likelihood method: auto | quadrature | sis | closed-form")
      ->check(CLI::IsMember({"auto", "quadrature", "sis", "closed-form"}));
  cmp_cmd->add_option("--draws", ev_draws, "SIS draws per ballot")->check(CLI::Range(100, 100000000));
  cmp_cmd->add_option("--seed", ctx.seed, "master seed");
  cmp_cmd->add_option("--threads", ctx.threads, "worker threads (0 = machine parallelism)");

  // check
  auto* check_cmd = app.add_subcommand("check", "validate a ballot file and test the connectivity condition");
  check_cmd->add_option("ballots", input, "ballot file")->required();
  of.add(check_cmd);

  // convert
  auto* conv_cmd = app.add_subcommand("convert", "convert election-data files to the ballot format");
  conv_cmd->add_option("input", input, "election data file")->required();
  conv_cmd->add_option("--out", of.out, "write the ballot file here instead of stdout");
  conv_cmd->add_option("--manifest", of.manifest, "write a run manifest (JSON) here");

  std::vector<const char*> argv{"rumfit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  std::string cmd_name;
  try {
    if (fit_cmd->parsed()) {
      ctx.command = "fit";
      const auto p = load_profile(input, ctx);
      const auto spec = ff.spec(ctx.seed, ctx.threads, p.num_alternatives());
      Json warnings = Json::array();
      const auto f = fit_or_warn(p, spec, warnings);
      Json rep;
      rep["command"] = "fit";
      const Json body = fit_json(p, f, ff.tol);
      for (auto it = body.begin(); it != body.end(); ++it) rep[it.key()] = it.value();
      if (!rep["condition1"]["satisfied"].get<bool>())
        warnings.push_back("comparison graph not strongly connected: parameters are not bounded; dominant set never beaten from outside");
      if (rep["tie_warning"].get<bool>()) warnings.push_back("some fitted parameters are within 10*tol of each other");
      rep["warnings"] = warnings;
      write_report(rep, of, out);
      if (!trace_csv.empty() && f.em) write_trace_csv(trace_csv, *f.em);
      Json opts = ff.describe();
      opts["format"] = of.format;
      if (f.em) {
        Json secs = Json::array();
        for (const auto& r : f.em->trace) secs.push_back(r.seconds);
        ctx.extra_manifest["iteration_seconds"] = secs;
        double total = 0.0;
        for (const auto& r : f.em->trace) total += r.seconds;
        ctx.extra_manifest["seconds_per_agent_iteration"] =
            total / std::max<std::size_t>(1, f.em->trace.size()) / static_cast<double>(p.total_weight());
      }
      write_manifest(ctx, of, opts, elapsed());
    } else if (sim_cmd->parsed()) {
      ctx.command = "simulate";
      if (sim_n < 1) throw DataError("--n must be at least 1: an empty profile is not a valid profile");
      if (sim_top > sim_m) throw DataError("--top cannot exceed --m");
      std::vector<double> theta;
      if (sim_theta == "linear") {
        for (int j = 0; j < sim_m; ++j) theta.push_back(j);
      } else {
        theta = parse_list(sim_theta, "--theta");
        if (static_cast<int>(theta.size()) != sim_m) throw DataError("--theta needs " + std::to_string(sim_m) + " values");
      }
      const std::vector<double> scale(sim_m, std::sqrt(sim_var));
      const auto dists = located(parse_family(sim_family), theta, scale);
      Rng rng(ctx.seed);
      std::vector<Ranking> rs;
      rs.reserve(static_cast<std::size_t>(sim_n));
      for (long long i = 0; i < sim_n; ++i) {
        Ranking r = sample_ranking(dists, rng);
        if (sim_top > 0 && sim_top < sim_m) {
          std::vector<int> o(r.order().begin(), r.order().begin() + sim_top);
          r = Ranking(std::move(o), sim_m);
        }
        rs.push_back(std::move(r));
      }
      const auto prof = Profile::from_rankings(sim_m, rs);
      std::ostringstream os;
      os << "# rumfit simulate (version " << kVersion << ")\n";
      os << "# family=" << sim_family << " m=" << sim_m << " n=" << sim_n << " theta=" << sim_theta
         << " var=" << format_double(sim_var) << " top=" << sim_top << " seed=" << ctx.seed << '\n';
      os << serialize_profile(prof);
      if (of.out.empty()) {
        out << os.str();
      } else {
        std::ofstream f(of.out, std::ios::binary);
        if (!f) throw DataError("cannot write '" + of.out + "'");
        f << os.str();
      }
      Json opts{{"m", sim_m}, {"n", sim_n}, {"theta", sim_theta}, {"family", sim_family}, {"var", sim_var}, {"top", sim_top}};
      write_manifest(ctx, of, opts, elapsed());
    } else if (eval_cmd->parsed()) {
      ctx.command = "evaluate";
      const auto p = load_profile(input, ctx);
      const int m = p.num_alternatives();
      FittedModel model;
      model.kind = parse_model(ff.model);
      Json rep;
      rep["command"] = "evaluate";
      Json warnings = Json::array();
      if (ev_theta.empty()) {
        const auto f = fit_or_warn(p, ff.spec(ctx.seed, ctx.threads, m), warnings);
        model = f.model;
        rep["fitted"] = true;
      } else {
        model.theta = parse_list(ev_theta, "--theta");
        if (static_cast<int>(model.theta.size()) != m) throw DataError("--theta needs " + std::to_string(m) + " values");
        if (!ev_sigma.empty()) {
          if (model.kind == ModelKind::pl) throw DataError("--sigma does not apply to the pl model");
          model.sigma = parse_list(ev_sigma, "--sigma");
          if (static_cast<int>(model.sigma.size()) != m) throw DataError("--sigma needs " + std::to_string(m) + " values");
        }
        rep["fitted"] = false;
      }
      LLOptions lo;
      lo.method = ev_method == "quadrature"    ? LLMethod::quadrature
                  : ev_method == "sis"         ? LLMethod::sis
                  : ev_method == "closed-form" ? LLMethod::closed_form
                                               : LLMethod::automatic;
      lo.sis_draws = ev_draws;
      lo.seed = derive_seed(ctx.seed, {0x11ULL});
      const auto ll = log_likelihood(p, model, lo);
      const int k = count_free_params(model.kind, m);
      rep["model"] = std::string(to_string(model.kind));
      rep["m"] = m;
      rep["n"] = p.total_weight();
      rep["theta"] = nums(model.theta);
      if (!model.sigma.empty()) rep["sigma"] = nums(model.sigma);
      rep["method"] = std::string(to_string(ll.method));
      rep["log_likelihood"] = num(ll.value);
      rep["std_err"] = num(ll.std_err);
      rep["k"] = k;
      rep["aic"] = num(aic(ll.value, k));
      rep["bic"] = num(bic(ll.value, k, static_cast<int>(p.total_weight())));
      rep["warnings"] = warnings;
      write_report(rep, of, out);
      Json opts = ff.describe();
      opts["theta"] = ev_theta;
      opts["sigma"] = ev_sigma;
      opts["method"] = ev_method;
      opts["draws"] = ev_draws;
      opts["format"] = of.format;
      write_manifest(ctx, of, opts, elapsed());
    } else if (cmp_cmd->parsed()) {
      ctx.command = "compare";
      const auto p = load_profile(input, ctx);
      const int m = p.num_alternatives();
      ff.model = model_a;
      const auto sa = ff.spec(ctx.seed, ctx.threads, m);
      ff.model = model_b;
      const auto sb = ff.spec(ctx.seed, ctx.threads, m);
      CompareOptions co;
      co.holdout = holdout;
      co.seed = ctx.seed;
      co.ll.method = ev_method == "quadrature"    ? LLMethod::quadrature
                     : ev_method == "sis"         ? LLMethod::sis
                     : ev_method == "closed-form" ? LLMethod::closed_form
                                                  : LLMethod::automatic;
      co.ll.sis_draws = ev_draws;
      const auto r = model_compare(p, sa, sb, co);
      Json rep;
      rep["command"] = "compare";
      rep["model_a"] = r.model_a;
      rep["model_b"] = r.model_b;
      rep["k_a"] = r.k_a;
      rep["k_b"] = r.k_b;
      rep["n_train"] = r.n_train;
      rep["n_holdout"] = r.n_holdout;
      rep["ll_a"] = num(r.ll_a);
      rep["ll_b"] = num(r.ll_b);
      rep["pred_ll_a"] = num(r.pred_ll_a);
      rep["pred_ll_b"] = num(r.pred_ll_b);
      rep["ll_diff"] = num(r.ll_diff);
      rep["ll_diff_se"] = num(r.ll_diff_se);
      rep["pred_ll_diff"] = num(r.pred_ll_diff);
      rep["pred_ll_diff_se"] = num(r.pred_ll_diff_se);
      rep["pred_ll_diff_sampling_se"] = num(r.pred_ll_diff_sampling_se);
      rep["aic_diff"] = num(r.aic_diff);
      rep["aic_diff_se"] = num(r.aic_diff_se);
      rep["bic_diff"] = num(r.bic_diff);
      rep["bic_diff_se"] = num(r.bic_diff_se);
      rep["split_retries"] = r.split_retries;
      Json notes = Json::array();
      for (const auto& s : r.notices) notes.push_back(s);
      rep["notices"] = notes;
      write_report(rep, of, out);
      ff.model = model_a;
      Json opts = ff.describe();
      opts.erase("model");
      opts["model_a"] = model_a;
      opts["model_b"] = model_b;
      opts["holdout"] = holdout;
      opts["method"] = ev_method;
      opts["draws"] = ev_draws;
      opts["format"] = of.format;
      write_manifest(ctx, of, opts, elapsed());
    } else if (check_cmd->parsed()) {
      ctx.command = "check";
      const auto p = load_profile(input, ctx);
      int partial = 0;
      for (const auto& b : p.ballots())
        if (!b.ranking.is_total()) partial += b.weight;
      Json rep;
      rep["command"] = "check";
      rep["m"] = p.num_alternatives();
      rep["n"] = p.total_weight();
      rep["distinct_ballots"] = p.ballots().size();
      rep["partial_ballots"] = partial;
      rep["edges"] = comparison_graph(p).edge_count();
      const auto c = check_condition1(p);
      rep["condition1"] = c.satisfied ? "satisfied" : "unsatisfied";
      if (!c.satisfied) {
        rep["witness"]["dominant"] = ints(c.dominant);
        rep["witness"]["dominated"] = ints(c.dominated);
      }
      write_report(rep, of, out);
      write_manifest(ctx, of, Json{{"format", of.format}}, elapsed());
    } else if (conv_cmd->parsed()) {
      ctx.command = "convert";
      const std::string text = read_file(input);
      ctx.inputs.push_back({input, sha256_hex(text)});
      const auto p = parse_election_data(text);
      const std::string body = serialize_profile(p);
      if (of.out.empty()) {
        out << body;
      } else {
        std::ofstream f(of.out, std::ios::binary);
        if (!f) throw DataError("cannot write '" + of.out + "'");
        f << body;
      }
      write_manifest(ctx, of, Json::object(), elapsed());
    }
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kOk;
}

}  // namespace rumfit::cli

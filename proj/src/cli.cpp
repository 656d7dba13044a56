#include "relu_lab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "relu_lab/arrangements.hpp"
#include "relu_lab/certify.hpp"
#include "relu_lab/convex.hpp"
#include "relu_lab/dataset.hpp"
#include "relu_lab/flow.hpp"
#include "relu_lab/geometry.hpp"
#include "relu_lab/linalg.hpp"
#include "relu_lab/parallel.hpp"
#include "relu_lab/serialize.hpp"

namespace relu_lab {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  double tol = 1e-8;
  bool json = false;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool deterministic = false;
};

std::string num(double v, int prec = 6, bool sci = false) {
  char buf[64];
  std::snprintf(buf, sizeof buf, sci ? "%.*e" : "%.*f", prec, v);
  return buf;
}

std::string vec_str(const Eigen::VectorXd& v, int prec = 4) {
  std::string s = "[";
  for (Eigen::Index k = 0; k < v.size(); ++k) s += (k ? ", " : "") + num(v(k), prec);
  return s + "]";
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::int64_t dims[3] = {ds.N(), ds.d(), ds.K};
  mix(dims, sizeof dims);
  for (int n = 0; n < ds.N(); ++n) {
    for (int k = 0; k < ds.d(); ++k) {
      const double v = ds.X(n, k);
      mix(&v, sizeof v);
    }
    const std::int64_t l = ds.labels(n);
    mix(&l, sizeof l);
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

Dataset open_dataset(const std::string& source) {
  try {
    return load_dataset(source);
  } catch (const DatasetError& e) {
    std::string names;
    for (const auto& n : builtin_dataset_names()) names += (names.empty() ? "" : ", ") + n;
    throw UsageError(std::string(e.what()) + " (built-in datasets: " + names + ")");
  }
}

// One command invocation: collects written files and emits the manifest.
class Run {
 public:
  Run(std::string command, const Globals& g, std::ostream& out)
      : command_(std::move(command)), g_(g), out_(out), start_(std::chrono::steady_clock::now()) {}

  json config = json::object();

  void set_dataset(const Dataset& ds) {
    dataset_ = {{"name", ds.name}, {"hash", hex(dataset_hash(ds))}, {"N", ds.N()}, {"d", ds.d()}};
  }
  bool writing() const { return !dir_.empty(); }
  void set_dir(const std::string& dir) { dir_ = dir; }

  void write(const std::string& name, const std::string& content, bool csv = false) {
    if (!writing()) return;
    fs::create_directories(dir_);
    const fs::path path = fs::path(dir_) / name;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    if (csv && !g_.deterministic) f << "# generated " << timestamp() << '\n';
    f << content;
    if (!f) throw std::runtime_error("write failed for " + path.string());
    outputs_.push_back(path.string());
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void finish() {
    if (!writing()) return;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m;
    m["command"] = command_;
    json cfg = config;
    cfg["tol"] = g_.tol;
    cfg["seed"] = g_.seed;
    cfg["deterministic"] = g_.deterministic;
    m["config"] = cfg;
    m["dataset"] = dataset_;
    m["outputs"] = outputs_;
    m["versions"] = {{"relu_lab", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                   "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"cli11", CLI11_VERSION}};
    m["wall_seconds"] = g_.deterministic ? json(nullptr) : json(wall);
    const fs::path path = fs::path(dir_) / "manifest.json";
    std::ofstream f(path);
    f << m.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + path.string());
  }

  std::ostream& out() { return out_; }

 private:
  static std::string timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
  }

  std::string command_;
  const Globals& g_;
  std::ostream& out_;
  std::chrono::steady_clock::time_point start_;
  std::string dir_;
  json dataset_ = nullptr;
  std::vector<std::string> outputs_;
};

SolveOptions solve_options(const Globals& g) {
  SolveOptions o;
  o.tol = g.tol;
  return o;
}

GaugeObjective parse_objective(const std::string& s) {
  return s == "linear" ? GaugeObjective::linear : GaugeObjective::masked;
}

std::string masks_text(const Dataset& ds, const MaskSet& ms) {
  std::ostringstream s;
  s << "masks: " << ms.masks.size() << '\n' << format_mask_matrix(ms.masks);
  for (const auto& m : ms.masks) s << m.str() << '\n';
  const int r = matrix_rank(ds.X);
  if (ds.N() >= 2 && r >= 1) {
    s << "cover bound: |P| = " << ms.masks.size() << " <= 2r(e(N-1)/r)^r = " << num(cover_bound(ds.N(), r), 4)
      << " (N=" << ds.N() << ", r=" << r << ")\n";
  } else {
    s << "cover bound: not defined (N=" << ds.N() << ", r=" << r << ")\n";
  }
  return s.str();
}

json masks_json(const Dataset& ds, const MaskSet& ms) {
  json j;
  j["count"] = ms.masks.size();
  j["masks"] = json::array();
  for (const auto& m : ms.masks) j["masks"].push_back(m.str());
  const int r = matrix_rank(ds.X);
  j["rank"] = r;
  j["cover_bound"] = (ds.N() >= 2 && r >= 1) ? json(cover_bound(ds.N(), r)) : json(nullptr);
  j["lp_calls"] = ms.lp_calls;
  return j;
}

void require_optimal(const SolveReport& r, const std::string& what) {
  if (r.status != SolveStatus::optimal) {
    throw NumericalFailure(what + " did not converge (" + to_string(r.status) + " after " +
                           std::to_string(r.iterations) + " iterations)");
  }
}

std::vector<long> default_checkpoints(long iters) {
  std::vector<long> cps;
  for (long c = 10; c < iters; c *= 10) cps.push_back(c);
  if (iters > 0) cps.push_back(iters);
  return cps;
}

std::string flow_summary(const FlowTrace& tr, json& j) {
  std::ostringstream s;
  s << "iter        loss           margin\n";
  j["checkpoints"] = json::array();
  for (const auto& rec : tr.records) {
    s << std::left << std::setw(12) << rec.iteration << std::setw(15) << num(rec.loss, 6, true)
      << (rec.margin ? num(*rec.margin, 6) : std::string("-")) << '\n';
    j["checkpoints"].push_back({{"iter", rec.iteration},
                                {"loss", rec.loss},
                                {"margin", rec.margin ? json(*rec.margin) : json(nullptr)}});
  }
  std::optional<double> best;
  const auto& fin = tr.final_record();
  for (std::size_t i = 0; i < fin.neurons.size(); ++i) {
    if (!tr.sign_condition[i] || !fin.neurons[i].alignment) continue;
    if (!best || *fin.neurons[i].alignment > *best) best = fin.neurons[i].alignment;
  }
  s << "final max alignment (sign-conditioned neurons): " << (best ? num(*best, 6) : std::string("n/a")) << '\n';
  if (tr.first_aligned) s << "first step reaching alignment target: " << *tr.first_aligned << '\n';
  s << "max balance drift: " << num(tr.max_balance_drift, 3, true) << '\n';
  s << "output sign flips: " << (tr.sign_flip ? "yes" : "no") << '\n';
  s << "sign-pattern events: " << tr.total_events << '\n';
  if (tr.aborted) s << "aborted: non-finite parameters after " << tr.iterations_run << " steps\n";
  j["final_max_alignment"] = best ? json(*best) : json(nullptr);
  j["first_aligned"] = tr.first_aligned ? json(*tr.first_aligned) : json(nullptr);
  j["best_alignment"] = tr.best_alignment;
  j["max_balance_drift"] = tr.max_balance_drift;
  j["sign_flip"] = tr.sign_flip;
  j["sign_events"] = tr.total_events;
  j["aborted"] = tr.aborted;
  j["iterations_run"] = tr.iterations_run;
  return s.str();
}

std::string flow_csv(const FlowTrace& tr) {
  std::ostringstream s;
  write_flow_csv(s, tr);
  return s.str();
}

std::string cert_line(const std::string& label, const Certificate& c) {
  std::ostringstream s;
  s << (label.empty() ? "" : label + " ") << to_string(c.kind) << ": " << (c.verdict ? "yes" : "no")
    << " value=" << num(c.value, 6) << " tol=" << num(c.tolerance, 1, true);
  if (c.approximate) s << " (sampled)";
  if (!c.note.empty()) s << " " << c.note;
  return s.str();
}

json face_json(const ConvexProblem& prob, const OptimalFaceReport& rep, double slack) {
  json j;
  j["verified"] = rep.verified;
  j["tolerance"] = rep.tolerance;
  j["slack"] = slack;
  j["inner_solves"] = rep.inner_solves;
  j["functionals"] = json::array();
  for (const auto& f : rep.functionals) {
    json names = json::array();
    for (int g : f.groups) names.push_back(group_name(prob, g));
    j["functionals"].push_back({{"name", f.name},
                                {"groups", names},
                                {"coordinate", f.coordinate},
                                {"active", f.active},
                                {"value", f.value},
                                {"lower", f.lower},
                                {"upper", f.upper},
                                {"gap", f.gap()}});
  }
  return j;
}

std::string ellipsoid_csv(const Eigen::MatrixXd& X, int samples) {
  const EllipsoidTrace tr = rectified_ellipsoid_samples(X, samples);
  std::ostringstream s;
  s.precision(12);
  s << "theta";
  for (Eigen::Index n = 0; n < tr.points.cols(); ++n) s << ",q" << (n + 1);
  s << '\n';
  for (Eigen::Index i = 0; i < tr.theta.size(); ++i) {
    s << tr.theta(i);
    for (Eigen::Index n = 0; n < tr.points.cols(); ++n) s << ',' << tr.points(i, n);
    s << '\n';
  }
  return s.str();
}

std::string extreme_points_csv(const Eigen::MatrixXd& X, const std::vector<ActivationMask>& masks,
                               const Eigen::VectorXd& lambda, GaugeObjective objective, double tol) {
  struct Job {
    std::size_t mask;
    Sense sense;
  };
  std::vector<Job> jobs;
  for (std::size_t j = 0; j < masks.size(); ++j) {
    jobs.push_back({j, Sense::max});
    jobs.push_back({j, Sense::min});
  }
  auto res = parallel_map<ExtremePointResult>(jobs.size(), [&](std::size_t i) {
    return extreme_point(X, masks[jobs[i].mask], lambda, jobs[i].sense, objective, tol);
  });
  std::ostringstream s;
  s.precision(12);
  s << "mask,sense";
  for (Eigen::Index k = 0; k < X.cols(); ++k) s << ",u" << (k + 1);
  s << ",value\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    s << masks[jobs[i].mask].str() << ',' << (jobs[i].sense == Sense::max ? "max" : "min");
    for (Eigen::Index k = 0; k < res[i].u.size(); ++k) s << ',' << res[i].u(k);
    s << ',' << res[i].value << '\n';
  }
  return s.str();
}

struct FlowFlags {
  FlowConfig cfg;
  CLI::Option* checkpoints = nullptr;
  int klass = 0;
};

void add_flow_flags(CLI::App* sub, FlowFlags& f) {
  sub->add_option("--m", f.cfg.m, "hidden neurons")->capture_default_str();
  sub->add_option("--init-scale", f.cfg.init_scale, "initialization scale")->capture_default_str();
  sub->add_option("--step", f.cfg.step, "step size")->capture_default_str();
  sub->add_option("--iters", f.cfg.iters, "iterations")->capture_default_str();
  f.checkpoints = sub->add_option("--checkpoints", f.cfg.checkpoints, "comma-separated checkpoint steps")
                      ->delimiter(',');
  sub->add_option("--delta", f.cfg.delta, "alignment target 1 - delta")->capture_default_str();
  sub->add_option("--align-every", f.cfg.align_every, "track alignment every k steps (0 = off)")
      ->capture_default_str();
  sub->add_option("--class", f.klass, "class index for multiclass datasets")->capture_default_str();
}

FlowConfig finalize_flow(FlowFlags& f, const Globals& g) {
  FlowConfig cfg = f.cfg;
  cfg.seed = g.seed;
  if (!f.checkpoints->count()) cfg.checkpoints = default_checkpoints(cfg.iters);
  try {
    cfg.validate();
  } catch (const FlowError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

json flow_config_json(const FlowConfig& c) {
  return {{"m", c.m},          {"init_scale", c.init_scale}, {"step", c.step},
          {"iters", c.iters},  {"checkpoints", c.checkpoints}, {"delta", c.delta},
          {"align_every", c.align_every}};
}

void check_class(const Dataset& ds, int k) {
  if (k < 0 || k >= class_count(ds)) throw UsageError("class index out of range");
}

// ---- commands ----

struct ArrangementsArgs {
  std::string dataset;
  std::string method = "exhaustive";
};

int cmd_arrangements(const ArrangementsArgs& a, const Globals& g, Run& run) {
  const Dataset ds = open_dataset(a.dataset);
  run.set_dataset(ds);
  run.config = {{"method", a.method}};
  const MaskSet ms = enumerate_masks(ds.X, parse_method(a.method));
  const std::string text = masks_text(ds, ms);
  if (g.json) {
    run.out() << masks_json(ds, ms).dump(2) << '\n';
  } else {
    run.out() << text;
  }
  run.write("masks.txt", text);
  return 0;
}

struct SolveArgs {
  std::string dataset;
  std::string which = "both";
};

int cmd_solve(const SolveArgs& a, const Globals& g, Run& run) {
  const Dataset ds = open_dataset(a.dataset);
  run.set_dataset(ds);
  run.config = {{"which", a.which}};
  const MaskSet ms = enumerate_masks(ds.X);
  const bool want_primal = a.which != "dual";
  const bool want_dual = a.which != "primal";
  std::ostringstream text;
  json j;
  j["dataset"] = ds.name;
  j["classes"] = json::array();
  double total_p = 0.0, total_d = 0.0;
  bool failed = false;
  std::string failure;
  const int K = class_count(ds);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd y = class_labels(ds, k);
    const ConvexProblem prob = build_primal(ds.X, y, ms.masks);
    const std::string prefix = K > 1 ? "class " + std::to_string(k) + " " : "";
    json cj;
    if (want_primal) {
      const PrimalSolve ps = solve_primal(prob, solve_options(g));
      total_p += ps.solution.objective;
      text << prefix << "primal objective: " << num(ps.solution.objective, 3, true) << " ("
           << to_string(ps.report.status) << ", " << ps.report.iterations << " iterations)\n";
      const double thr = nonzero_threshold(ps.solution.objective);
      for (int gi = 0; gi < prob.group_count(); ++gi) {
        const auto& v = ps.solution.groups[static_cast<std::size_t>(gi)];
        if (v.norm() > thr) text << "  " << group_name(prob, gi) << " = " << vec_str(v) << '\n';
      }
      cj["primal"] = solution_json(prob, ps.solution, ps.dual.lambda);
      cj["primal"]["report"] = to_json(ps.report);
      if (ps.report.status != SolveStatus::optimal && !failed) {
        failed = true;
        failure = "primal solve " + to_string(ps.report.status);
      }
    }
    if (want_dual) {
      const DualSolve dsv = solve_dual(ds.X, y, ms.masks, solve_options(g));
      total_d += dsv.objective;
      text << prefix << "dual objective: " << num(dsv.objective, 3, true) << " (" << to_string(dsv.report.status)
           << ", " << dsv.report.iterations << " iterations)\n";
      text << prefix << "  lambda = " << vec_str(dsv.dual.lambda) << '\n';
      cj["dual"] = {{"objective", dsv.objective}, {"lambda", to_json(dsv.dual.lambda)},
                    {"report", to_json(dsv.report)}};
      if (dsv.report.status != SolveStatus::optimal && !failed) {
        failed = true;
        failure = "dual solve " + to_string(dsv.report.status);
      }
    }
    j["classes"].push_back(cj);
  }
  if (want_primal && want_dual) {
    text << "duality gap: " << num(std::abs(total_p - total_d), 3, true) << '\n';
    j["gap"] = std::abs(total_p - total_d);
  }
  if (want_primal) j["primal_objective"] = total_p;
  if (want_dual) j["dual_objective"] = total_d;
  run.out() << (g.json ? j.dump(2) + "\n" : text.str());
  run.write_json("solution.json", j);
  if (failed) throw NumericalFailure(failure);
  return 0;
}

int cmd_flow(const std::string& dataset, FlowFlags& f, const Globals& g, Run& run) {
  const Dataset ds = open_dataset(dataset);
  check_class(ds, f.klass);
  run.set_dataset(ds);
  const FlowConfig cfg = finalize_flow(f, g);
  run.config = flow_config_json(cfg);
  const FlowTrace tr = run_flow(ds, cfg, f.klass);
  json j;
  const std::string text = flow_summary(tr, j);
  run.out() << (g.json ? j.dump(2) + "\n" : text);
  run.write("flow_trace.csv", flow_csv(tr), true);
  if (tr.aborted) throw NumericalFailure("flow produced non-finite parameters");
  return 0;
}

struct CertifyArgs {
  std::string dataset;
  std::string network;
  bool from_flow = false;
  double lambda_scale = 1.0;
  double cert_tol = 1e-4;
  std::string objective = "masked";
};

int cmd_certify(const CertifyArgs& a, FlowFlags& f, const Globals& g, Run& run) {
  if (a.network.empty() == !a.from_flow) throw UsageError("give exactly one of --network or --from-flow");
  const Dataset ds = open_dataset(a.dataset);
  check_class(ds, f.klass);
  run.set_dataset(ds);
  const Eigen::VectorXd y = class_labels(ds, f.klass);
  const GaugeObjective obj = parse_objective(a.objective);

  std::vector<std::pair<std::string, NetworkParams>> nets;
  if (a.from_flow) {
    FlowFlags ff = f;
    if (!f.checkpoints->count()) {
      ff.cfg.checkpoints.clear();
      for (long c : {10L, 100L, 1000L, 10000L}) {
        if (c <= ff.cfg.iters) ff.cfg.checkpoints.push_back(c);
      }
    }
    FlowConfig cfg = ff.cfg;
    cfg.seed = g.seed;
    try {
      cfg.validate();
    } catch (const FlowError& e) {
      throw UsageError(e.what());
    }
    run.config = flow_config_json(cfg);
    const FlowTrace tr = run_flow(ds, cfg, f.klass);
    if (tr.aborted) throw NumericalFailure("flow produced non-finite parameters");
    for (const auto& rec : tr.records) {
      if (rec.iteration > 0) nets.emplace_back("iter " + std::to_string(rec.iteration), rec.params);
    }
    if (nets.empty()) throw UsageError("flow has no checkpoints to certify");
  } else {
    try {
      nets.emplace_back("network", load_network_file(a.network));
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (nets.back().second.W1.rows() != ds.d()) throw UsageError("network input dimension differs from dataset");
    run.config = {{"network", a.network}};
  }
  run.config["lambda_scale"] = a.lambda_scale;
  run.config["cert_tol"] = a.cert_tol;
  run.config["objective"] = a.objective;

  const MaskSet ms = enumerate_masks(ds.X);
  const bool separable = is_orthogonal_separable(ds.X, y).separable;
  std::vector<std::string> lines;
  json bundle = json::array();
  for (const auto& [label, net] : nets) {
    const DualRecovery rec = recover_dual(ds.X, y, net, network_masks(ds.X, net), ms.masks, obj);
    const Eigen::VectorXd lam = a.lambda_scale * rec.lambda;
    Certificate c = dual_feasible(ds.X, ms.masks, lam, a.cert_tol, obj);
    lines.push_back(cert_line(label, c));
    json cj = to_json(c);
    cj["label"] = label;
    cj["lambda"] = to_json(lam);
    bundle.push_back(cj);
    if (separable) {
      const KKTExtraction ext = extract_kkt(ds.X, y, net, lam);
      Certificate oc = ortho_coverage(ext, y);
      lines.push_back(cert_line(label, oc));
      json oj = to_json(oc);
      oj["label"] = label;
      bundle.push_back(oj);
    }
  }
  Certificate sf = spike_free(ds.X, 4096, 1e-9, g.seed);
  lines.push_back(cert_line("dataset", sf));
  json sj = to_json(sf);
  sj["label"] = "dataset";
  bundle.push_back(sj);

  if (g.json) {
    run.out() << bundle.dump(2) << '\n';
  } else {
    for (const auto& l : lines) run.out() << l << '\n';
  }
  run.write_json("certificates.json", bundle);
  return 0;
}

struct GeometryArgs {
  std::string dataset;
  int samples = 720;
  std::vector<double> lambda;
  std::string objective = "masked";
};

int cmd_geometry(const GeometryArgs& a, const Globals& g, Run& run) {
  const Dataset ds = open_dataset(a.dataset);
  run.set_dataset(ds);
  if (ds.d() != 2) throw UsageError("geometry-export needs d = 2");
  if (a.samples < 3) throw UsageError("--samples must be at least 3");
  if (!ds.is_binary()) throw UsageError("geometry-export needs binary labels");
  const MaskSet ms = enumerate_masks(ds.X);
  Eigen::VectorXd lam;
  if (!a.lambda.empty()) {
    if (static_cast<int>(a.lambda.size()) != ds.N()) throw UsageError("--lambda needs N entries");
    lam = Eigen::Map<const Eigen::VectorXd>(a.lambda.data(), static_cast<Eigen::Index>(a.lambda.size()));
  } else {
    const DualSolve dsv = solve_dual(ds.X, ds.binary_labels(), ms.masks, solve_options(g));
    require_optimal(dsv.report, "dual solve");
    lam = dsv.dual.lambda;
  }
  run.config = {{"samples", a.samples}, {"lambda", a.lambda}, {"objective", a.objective}};
  run.write("ellipsoid.csv", ellipsoid_csv(ds.X, a.samples), true);
  run.write("extreme_points.csv", extreme_points_csv(ds.X, ms.masks, lam, parse_objective(a.objective), g.tol),
            true);
  json j = {{"lambda", to_json(lam)}, {"masks", ms.masks.size()}, {"samples", a.samples}};
  if (g.json) {
    run.out() << j.dump(2) << '\n';
  } else {
    run.out() << "lambda = " << vec_str(lam) << "\n"
              << "wrote ellipsoid.csv (" << a.samples << " samples) and extreme_points.csv ("
              << 2 * ms.masks.size() << " rows)\n";
  }
  return 0;
}

int reproduce_notebook(const Globals& g, Run& run) {
  const Dataset ds = *builtin_dataset("notebook");
  run.set_dataset(ds);
  const Eigen::VectorXd y = ds.binary_labels();
  std::ostringstream text;

  const MaskSet ms = enumerate_masks(ds.X);
  run.write("masks.txt", masks_text(ds, ms));
  text << "masks: " << ms.masks.size() << '\n';

  const ConvexProblem prob = build_primal(ds.X, y, ms.masks);
  const PrimalSolve ps = solve_primal(prob, solve_options(g));
  require_optimal(ps.report, "primal solve");
  const DualSolve dsv = solve_dual(ds.X, y, ms.masks, solve_options(g));
  require_optimal(dsv.report, "dual solve");
  json pj = solution_json(prob, ps.solution, ps.dual.lambda);
  pj["report"] = to_json(ps.report);
  pj["dual_objective"] = dsv.objective;
  pj["dual_lambda"] = to_json(dsv.dual.lambda);
  pj["gap"] = std::abs(ps.solution.objective - dsv.objective);
  run.write_json("primal.json", pj);
  text << "primal objective: " << num(ps.solution.objective, 3, true) << '\n'
       << "dual objective: " << num(dsv.objective, 3, true) << '\n';

  const FaceBoundOptions fo;
  const OptimalFaceReport face = verify_optimal_face(prob, ps.solution, ps.solution.objective, 1e-3, fo);
  run.write_json("optimal_face.json", face_json(prob, face, fo.slack));
  text << "optimal set verified: " << (face.verified ? "yes" : "no") << '\n';

  FlowConfig cfg;
  cfg.m = 8;
  cfg.step = 1.0;
  cfg.iters = 10000;
  cfg.checkpoints = {10, 100, 1000, 10000};
  cfg.seed = g.seed;
  const RetriedFlow rf = run_flow_retry(ds, cfg, 1e-4, 20);
  if (rf.trace.aborted) throw NumericalFailure("flow produced non-finite parameters");
  run.config = {{"target", "notebook"}, {"flow", flow_config_json(cfg)}, {"flow_seed", rf.seed},
                {"flow_trials", rf.trials}};
  run.write("flow_trace.csv", flow_csv(rf.trace), true);
  text << "flow seed: " << rf.seed << " (" << rf.trials << " trial" << (rf.trials > 1 ? "s" : "")
       << "), final loss " << num(rf.trace.final_record().loss, 3, true) << '\n';

  std::ostringstream margins;
  margins << "iter,loss,margin\n";
  margins.precision(12);
  json duals = json::array();
  for (const auto& rec : rf.trace.records) {
    margins << rec.iteration << ',' << rec.loss << ',';
    if (rec.margin) margins << *rec.margin;
    margins << '\n';
    if (rec.iteration == 0) continue;
    const DualRecovery dr = recover_dual(ds.X, y, rec.params, network_masks(ds.X, rec.params), ms.masks);
    const Certificate c = dual_feasible(ds.X, ms.masks, dr.lambda, 1e-4);
    duals.push_back({{"iter", rec.iteration},
                     {"lambda_tilde", to_json(dr.lambda_tilde)},
                     {"lambda", to_json(dr.lambda)},
                     {"gauge_network", dr.gauge_network},
                     {"gauge_all", dr.gauge_all},
                     {"dual_feasible", c.verdict}});
    text << "iter " << rec.iteration << ": margin " << (rec.margin ? num(*rec.margin, 4) : std::string("-"))
         << ", gauge " << num(dr.gauge_all, 6) << ", dual feasible " << (c.verdict ? "yes" : "no") << '\n';
  }
  run.write("margins.csv", margins.str(), true);
  run.write_json("duals.json", duals);
  run.out() << text.str();
  return 0;
}

int reproduce_appendix(const std::string& target, const Globals& g, Run& run) {
  const Dataset ds = *builtin_dataset(target);
  run.set_dataset(ds);
  const Eigen::VectorXd y = ds.binary_labels();
  std::ostringstream text;

  const MaskSet ms = enumerate_masks(ds.X);
  run.write("masks.txt", masks_text(ds, ms));

  const ConvexProblem prob = build_primal(ds.X, y, ms.masks);
  const PrimalSolve ps = solve_primal(prob, solve_options(g));
  require_optimal(ps.report, "primal solve");
  json sj = solution_json(prob, ps.solution, ps.dual.lambda);
  sj["report"] = to_json(ps.report);
  run.write_json("solution.json", sj);
  text << "primal objective: " << num(ps.solution.objective, 4, true) << '\n';
  const double thr = nonzero_threshold(ps.solution.objective);
  for (int gi = 0; gi < prob.group_count(); ++gi) {
    const auto& v = ps.solution.groups[static_cast<std::size_t>(gi)];
    if (v.norm() > thr) text << "  " << group_name(prob, gi) << " = " << vec_str(v) << '\n';
  }

  run.write("ellipsoid.csv", ellipsoid_csv(ds.X, 720), true);
  run.write("extreme_points.csv", extreme_points_csv(ds.X, ms.masks, ps.dual.lambda, GaugeObjective::masked, g.tol),
            true);

  FlowConfig cfg;
  cfg.m = 10;
  cfg.init_scale = 1e-4;
  cfg.step = 0.1;
  cfg.iters = 100000;
  cfg.checkpoints = {10, 100, 1000, 10000, 100000};
  cfg.align_every = 10;
  cfg.seed = g.seed;
  const FlowTrace tr = run_flow(ds, cfg);
  if (tr.aborted) throw NumericalFailure("flow produced non-finite parameters");
  run.config = {{"target", target}, {"flow", flow_config_json(cfg)}};
  run.write("flow_trace.csv", flow_csv(tr), true);
  json fj;
  flow_summary(tr, fj);
  text << "flow best alignment: " << num(tr.best_alignment, 6);
  if (tr.first_aligned) text << " (target reached at step " << *tr.first_aligned << ")";
  text << '\n';

  json certs = json::array();
  const Certificate df = dual_feasible(ds.X, ms.masks, ps.dual.lambda, 1e-4);
  certs.push_back(to_json(df));
  text << cert_line("optimal-dual", df) << '\n';
  if (is_orthogonal_separable(ds.X, y).separable) {
    const NetworkParams& net = tr.final_record().params;
    const DualRecovery dr = recover_dual(ds.X, y, net, network_masks(ds.X, net), ms.masks);
    const Certificate oc = ortho_coverage(extract_kkt(ds.X, y, net, dr.lambda), y);
    certs.push_back(to_json(oc));
    text << cert_line("flow-final", oc) << '\n';
  }
  const Certificate sf = spike_free(ds.X, 4096, 1e-9, g.seed);
  certs.push_back(to_json(sf));
  text << cert_line("dataset", sf) << '\n';
  run.write_json("certificates.json", certs);
  run.write_json("flow_summary.json", fj);
  run.out() << text.str();
  return 0;
}

int dispatch(const Globals& g, std::ostream& out, const std::function<int(Run&)>& body, const std::string& name,
             const std::string& dir) {
  Run run(name, g, out);
  run.set_dir(dir);
  const int code = body(run);
  run.finish();
  return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convex two-layer ReLU training, gradient-flow simulation and KKT certification"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--tol", g.tol, "solver tolerance")->capture_default_str();
  app.add_flag("--json", g.json, "print JSON instead of text");
  app.add_option("--out-dir", g.out_dir, "directory for output files and manifest");
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "omit timestamps from outputs");

  ArrangementsArgs arr;
  auto* s_arr = app.add_subcommand("arrangements", "enumerate activation masks");
  s_arr->add_option("--dataset", arr.dataset, "built-in name or JSON file")->required();
  s_arr->add_option("--method", arr.method, "exhaustive or sweep2d")
      ->check(CLI::IsMember({"exhaustive", "sweep2d"}))
      ->capture_default_str();

  SolveArgs sol;
  auto* s_sol = app.add_subcommand("solve", "solve the convex program and its dual");
  s_sol->add_option("--dataset", sol.dataset, "built-in name or JSON file")->required();
  s_sol->add_option("--which", sol.which, "primal, dual or both")
      ->check(CLI::IsMember({"primal", "dual", "both"}))
      ->capture_default_str();

  std::string flow_dataset;
  FlowFlags flow;
  auto* s_flow = app.add_subcommand("flow", "simulate gradient descent on the logistic loss");
  s_flow->add_option("--dataset", flow_dataset, "built-in name or JSON file")->required();
  add_flow_flags(s_flow, flow);

  CertifyArgs cert;
  FlowFlags cert_flow;
  auto* s_cert = app.add_subcommand("certify", "certificate bundle for a network or a flow run");
  s_cert->add_option("--dataset", cert.dataset, "built-in name or JSON file")->required();
  auto* o_net = s_cert->add_option("--network", cert.network, "network JSON file {W1, w2}");
  auto* o_ff = s_cert->add_flag("--from-flow", cert.from_flow, "certify the checkpoints of a flow run");
  o_net->excludes(o_ff);
  s_cert->add_option("--lambda-scale", cert.lambda_scale, "multiply the recovered dual before checking")
      ->capture_default_str();
  s_cert->add_option("--cert-tol", cert.cert_tol, "dual feasibility tolerance")->capture_default_str();
  s_cert->add_option("--objective", cert.objective, "gauge objective: masked or linear")
      ->check(CLI::IsMember({"masked", "linear"}))
      ->capture_default_str();
  add_flow_flags(s_cert, cert_flow);

  std::string target;
  auto* s_rep = app.add_subcommand("reproduce", "write the data behind an experiment");
  s_rep->add_option("target", target, "notebook, appendix-ortho or appendix-nonspikefree")
      ->required()
      ->check(CLI::IsMember({"notebook", "appendix-ortho", "appendix-nonspikefree"}));

  GeometryArgs geo;
  auto* s_geo = app.add_subcommand("geometry-export", "ellipsoid trace and extreme points as CSV");
  s_geo->add_option("--dataset", geo.dataset, "built-in name or JSON file")->required();
  s_geo->add_option("--samples", geo.samples, "ellipsoid samples")->capture_default_str();
  s_geo->add_option("--lambda", geo.lambda, "comma-separated dual vector (default: dual optimum)")
      ->delimiter(',');
  s_geo->add_option("--objective", geo.objective, "masked or linear")
      ->check(CLI::IsMember({"masked", "linear"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s_arr->parsed()) {
      return dispatch(g, out, [&](Run& r) { return cmd_arrangements(arr, g, r); }, "arrangements", g.out_dir);
    }
    if (s_sol->parsed()) {
      return dispatch(g, out, [&](Run& r) { return cmd_solve(sol, g, r); }, "solve", g.out_dir);
    }
    if (s_flow->parsed()) {
      return dispatch(g, out, [&](Run& r) { return cmd_flow(flow_dataset, flow, g, r); }, "flow", g.out_dir);
    }
    if (s_cert->parsed()) {
      return dispatch(g, out, [&](Run& r) { return cmd_certify(cert, cert_flow, g, r); }, "certify",
                      g.out_dir);
    }
    if (s_rep->parsed()) {
      const std::string dir = g.out_dir.empty() ? target : g.out_dir;
      return dispatch(
          g, out,
          [&](Run& r) { return target == "notebook" ? reproduce_notebook(g, r) : reproduce_appendix(target, g, r); },
          "reproduce " + target, dir);
    }
    if (s_geo->parsed()) {
      return dispatch(g, out, [&](Run& r) { return cmd_geometry(geo, g, r); }, "geometry-export",
                      g.out_dir.empty() ? std::string(".") : g.out_dir);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"relu_lab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace relu_lab

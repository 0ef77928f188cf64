// spectt command-line tool.
//
// Exit codes: 0 ok, 2 bad flags or arguments, 3 malformed file, 4 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spectt/spectt.hpp"

using namespace spectt;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v, const char* sep = " ") {
  std::ostringstream o;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) o << sep;
    if constexpr (std::is_floating_point_v<T>) o << num(v[i]);
    else o << v[i];
  }
  return o.str();
}

const std::map<std::string, Scheme> kSchemes{{"svdp", Scheme::Svdp}, {"sttp", Scheme::Sttp}};
const std::map<std::string, SpectrumMode> kModes{{"identity", SpectrumMode::Identity},
                                                 {"learned", SpectrumMode::Learned},
                                                 {"regularized", SpectrumMode::LearnedRegularized}};

/// Shape flags shared by several commands.
struct ShapeFlags {
  Scheme scheme = Scheme::Svdp;
  std::size_t dout = 0, din = 0, rank = 0;
  SpectrumMode mode = SpectrumMode::Learned;
  double lambda = 0.0;

  void add(CLI::App* c, bool required = true) {
    auto* s = c->add_option("--scheme", scheme, "svdp or sttp")->transform(CLI::CheckedTransformer(kSchemes));
    auto* o = c->add_option("--dout", dout, "output dimension")->check(CLI::PositiveNumber);
    auto* i = c->add_option("--din", din, "input dimension")->check(CLI::PositiveNumber);
    auto* r = c->add_option("--rank", rank, "rank r")->check(CLI::PositiveNumber);
    c->add_option("--spectrum", mode, "identity, learned or regularized")
        ->transform(CLI::CheckedTransformer(kModes));
    c->add_option("--lambda", lambda, "D-optimal penalty weight")->check(CLI::NonNegativeNumber);
    if (required)
      for (auto* opt : {s, o, i, r}) opt->required();
  }

  bool given(CLI::App* c) const { return c->count("--dout") > 0; }

  void check_rank() const {
    if (rank > std::min(dout, din))
      throw UsageError("rank " + std::to_string(rank) + " exceeds min(dout, din) = " +
                       std::to_string(std::min(dout, din)));
    if (scheme == Scheme::Sttp && (dout < 2 || din < 2))
      throw UsageError("sttp needs dout, din >= 2");
  }
};

std::uint64_t need_seed(const std::optional<std::uint64_t>& seed, const std::string& what) {
  if (!seed) throw UsageError(what + " is randomized: pass --seed");
  return *seed;
}

AnyParams make_params(const ShapeFlags& f, InitScheme init, std::uint64_t seed) {
  f.check_rank();
  if (f.scheme == Scheme::Svdp) return make_svdp(f.dout, f.din, f.rank, f.mode, init, seed, f.lambda);
  return make_sttp(f.dout, f.din, f.rank, f.mode, init, seed, f.lambda);
}

std::pair<std::size_t, std::size_t> dims_of(const AnyParams& p) {
  if (const auto* s = std::get_if<SvdpParams>(&p)) return {s->d_out, s->d_in};
  const auto& t = std::get<SttpParams>(p);
  return {t.shape.d_out(), t.shape.d_in()};
}

double single_layer_z(std::size_t dout, std::size_t din, std::size_t dof, bool bias) {
  return compression_ratio(NetworkSummary{{{dout, din, dof, bias ? dout : 0}}});
}

std::string names_of(const TensorDiagram& g, std::uint64_t mask) {
  std::string s;
  for (std::size_t k = 0; k < g.nodes().size(); ++k)
    if (mask >> k & 1) s += (s.empty() ? "" : "+") + g.nodes()[k].name;
  return s;
}

void print_plan(const TensorDiagram& g, const ContractionPlan& p) {
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    const auto& s = p.steps[i];
    std::cout << "step " << i + 1 << ": (" << names_of(g, s.left_nodes) << ") x (" << names_of(g, s.right_nodes)
              << ") -> [" << join(s.result_dims, ",") << "] flops=" << s.flops << "\n";
  }
  std::cout << "total_flops=" << p.total_flops << "\n";
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw FormatError("cannot write '" + path + "'");
    }
  }
  std::ostream& get() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral tensor-train parameterization tool"};
  app.require_subcommand(1);

  // dof
  auto* dof = app.add_subcommand("dof", "Degrees of freedom, numel and compression for one layer");
  ShapeFlags dof_f;
  dof_f.add(dof);
  bool dof_nobias = false;
  dof->add_flag("--no-bias", dof_nobias, "exclude the d_out bias from the compression ratio");

  // factorize
  auto* fac = app.add_subcommand("factorize", "Ascending prime factors");
  std::size_t fac_dim = 0;
  fac->add_option("--dim", fac_dim, "dimension")->required();

  // build
  auto* build = app.add_subcommand("build", "Assemble W from parameters");
  ShapeFlags build_f;
  build_f.add(build, false);
  std::string build_params, build_out, build_params_out, build_init = "random";
  double build_alpha = 1e-4;
  std::optional<std::uint64_t> build_seed;
  build->add_option("--params", build_params, "read parameters instead of initializing");
  build->add_option("--init", build_init, "identity, random or noisy")->check(CLI::IsMember({"identity", "random", "noisy"}));
  build->add_option("--alpha", build_alpha, "noise scale for --init noisy");
  build->add_option("--seed", build_seed, "RNG seed");
  build->add_option("--out", build_out, "W matrix file")->required();
  build->add_option("--params-out", build_params_out, "also write the parameters");

  // apply
  auto* apply = app.add_subcommand("apply", "y = W x without forming W");
  std::string apply_params, apply_x, apply_out;
  apply->add_option("--params", apply_params, "parameter file")->required();
  apply->add_option("--x", apply_x, "input matrix file (d_in x d_x)")->required();
  apply->add_option("--out", apply_out, "output matrix file")->required();

  // plan
  auto* plan_c = app.add_subcommand("plan", "Optimal contraction plan for y = W x");
  ShapeFlags plan_f;
  plan_f.add(plan_c);
  std::size_t plan_dx = 1;
  bool plan_naive = false;
  plan_c->add_option("--dx", plan_dx, "batch size")->check(CLI::PositiveNumber);
  plan_c->add_flag("--naive", plan_naive, "also report decompress-then-multiply cost");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Analytic gradient vs central differences");
  ShapeFlags gc_f;
  gc_f.add(gc, false);
  std::string gc_params, gc_target;
  std::optional<std::uint64_t> gc_seed;
  gc->add_option("--params", gc_params, "parameter file");
  gc->add_option("--target", gc_target, "target matrix file");
  gc->add_option("--seed", gc_seed, "RNG seed for parameters and target");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit parameters to a target matrix");
  std::string fit_target, fit_params_out, fit_out, fit_scheme = "svdp", fit_mode = "learned", fit_init = "noisy";
  FitConfig fit_cfg;
  double fit_lr = 0.0;
  std::optional<std::uint64_t> fit_seed;
  fit->add_option("--target", fit_target, "target matrix file")->required();
  fit->add_option("--scheme", fit_scheme, "svdp or sttp")->check(CLI::IsMember({"svdp", "sttp"}));
  fit->add_option("--rank", fit_cfg.rank, "rank r")->required()->check(CLI::PositiveNumber);
  fit->add_option("--spectrum", fit_mode, "identity, learned or regularized")
      ->check(CLI::IsMember({"identity", "learned", "regularized"}));
  fit->add_option("--lambda", fit_cfg.lambda, "D-optimal penalty weight");
  fit->add_option("--lr", fit_lr, "learning rate (default 0.05 svdp, 0.02 sttp)");
  fit->add_option("--momentum", fit_cfg.momentum, "momentum");
  fit->add_option("--steps", fit_cfg.max_steps, "maximum steps");
  fit->add_option("--tol", fit_cfg.tol, "relative loss-change stop");
  fit->add_option("--init", fit_init, "identity, random or noisy")->check(CLI::IsMember({"identity", "random", "noisy"}));
  fit->add_option("--seed", fit_seed, "RNG seed");
  fit->add_option("--params-out", fit_params_out, "fitted parameter file")->required();
  fit->add_option("--out", fit_out, "loss trace file (default stdout)");

  // demo-train
  auto* demo = app.add_subcommand("demo-train", "Train the two-layer demo network");
  DemoConfig demo_cfg;
  std::string demo_scheme = "svdp", demo_mode = "learned", demo_out;
  std::size_t demo_every = 100;
  std::optional<std::uint64_t> demo_seed;
  demo->add_option("--scheme", demo_scheme, "svdp or sttp")->check(CLI::IsMember({"svdp", "sttp"}));
  demo->add_option("--spectrum", demo_mode, "identity, learned or regularized")
      ->check(CLI::IsMember({"identity", "learned", "regularized"}));
  demo->add_option("--lambda", demo_cfg.lambda, "D-optimal penalty weight");
  demo->add_option("--rank", demo_cfg.rank, "rank of both layers");
  demo->add_option("--steps", demo_cfg.steps, "training steps");
  demo->add_option("--lr", demo_cfg.lr, "learning rate");
  demo->add_option("--momentum", demo_cfg.momentum, "momentum");
  demo->add_option("--every", demo_every, "trace every k steps")->check(CLI::PositiveNumber);
  demo->add_option("--seed", demo_seed, "RNG seed");
  demo->add_option("--out", demo_out, "trace file (default stdout)");

  // inspect
  auto* insp = app.add_subcommand("inspect", "Spectrum and size summary of a parameter file");
  std::string insp_params;
  bool insp_nobias = false;
  insp->add_option("--params", insp_params, "parameter file")->required();
  insp->add_flag("--no-bias", insp_nobias, "exclude the d_out bias from the compression ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*dof) {
      dof_f.check_rank();
      const std::size_t d = dof_f.scheme == Scheme::Svdp ? svdp_dof(dof_f.dout, dof_f.din, dof_f.rank, dof_f.mode)
                                                         : sttp_dof(dof_f.dout, dof_f.din, dof_f.rank, dof_f.mode);
      std::cout << "dof=" << d << "\n"
                << "numel=" << dof_f.dout * dof_f.din << "\n"
                << "compression=" << num(single_layer_z(dof_f.dout, dof_f.din, d, !dof_nobias)) << "\n";
    } else if (*fac) {
      if (fac_dim < 2) throw UsageError("--dim must be at least 2");
      std::cout << join(factorize(fac_dim).factors) << "\n";
    } else if (*build) {
      AnyParams p;
      if (!build_params.empty()) {
        p = read_params(build_params);
      } else {
        if (!build_f.given(build)) throw UsageError("build needs --params or --scheme/--dout/--din/--rank");
        const InitScheme init = build_init == "identity" ? InitScheme::identity()
                                : build_init == "random" ? InitScheme::random_orthogonal()
                                                         : InitScheme::noisy_identity(build_alpha);
        const std::uint64_t seed = build_init == "identity" ? 0 : need_seed(build_seed, "build --init " + build_init);
        p = make_params(build_f, init, seed);
      }
      write_matrix(build_out, assemble_any(p));
      if (!build_params_out.empty()) write_params(build_params_out, p);
    } else if (*apply) {
      const AnyParams p = read_params(apply_params);
      const Matrix x = read_matrix(apply_x);
      write_matrix(apply_out, std::visit([&](const auto& q) { return apply_map(q, x); }, p));
    } else if (*plan_c) {
      plan_f.check_rank();
      if (plan_f.scheme == Scheme::Svdp) {
        const TensorDiagram g = svdp_diagram(plan_f.dout, plan_f.din, plan_f.rank, plan_dx);
        print_plan(g, plan(g));
        if (plan_naive) {
          const ApplyCost c = apply_cost_svdp(plan_f.dout, plan_f.din, plan_f.rank, plan_dx);
          std::cout << "naive_flops=" << c.decompress << "\n"
                    << "dense_flops=" << dense_apply_flops(plan_f.dout, plan_f.din, plan_dx) << "\n";
        }
      } else {
        const SttpShape s = make_sttp_shape(plan_f.dout, plan_f.din, plan_f.rank, plan_f.mode);
        const TensorDiagram g = sttp_diagram(s, plan_dx);
        print_plan(g, plan(g));
        if (plan_naive)
          std::cout << "naive_flops=" << apply_cost_sttp(s, plan_dx).decompress << "\n"
                    << "dense_flops=" << dense_apply_flops(plan_f.dout, plan_f.din, plan_dx) << "\n";
      }
    } else if (*gc) {
      AnyParams p;
      if (!gc_params.empty()) {
        p = read_params(gc_params);
      } else {
        if (!gc_f.given(gc)) throw UsageError("gradcheck needs --params or --scheme/--dout/--din/--rank");
        const std::uint64_t seed = need_seed(gc_seed, "gradcheck");
        p = make_params(gc_f, InitScheme::random_orthogonal(), seed);
        std::visit([&](auto& q) {
          std::vector<double> th = q.flat();
          const Matrix noise = random_normal(1, th.size(), seed + 1);
          for (std::size_t i = 0; i < th.size(); ++i) th[i] += 0.5 * noise.values()[i];
          q.assign(th);
        }, p);
      }
      const auto [m, n] = dims_of(p);
      Matrix target;
      if (!gc_target.empty()) {
        target = read_matrix(gc_target);
        if (target.rows() != m || target.cols() != n)
          throw FormatError("target is " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                            ", parameters are " + std::to_string(m) + "x" + std::to_string(n));
      } else {
        target = normalize_spectral(random_normal(m, n, need_seed(gc_seed, "gradcheck without --target") + 2));
      }
      const GradcheckReport rep =
          std::visit([&](const auto& q) { return gradcheck(q, LossSpec::frobenius(target)); }, p);
      std::cout << "max_rel_error=" << num(rep.max_rel_error) << "\n"
                << "worst_coordinate=" << rep.worst_coordinate << "\n"
                << "grad_size=" << rep.grad_size << "\n"
                << "dof=" << dof_of(p) << "\n"
                << "result=" << (rep.skipped_tie ? "skipped (tied spectrum maximum)" : rep.passed ? "pass" : "fail")
                << "\n";
      if (!rep.passed) return 4;
    } else if (*fit) {
      fit_cfg.scheme = kSchemes.at(fit_scheme);
      fit_cfg.mode = kModes.at(fit_mode);
      if (fit->count("--lr")) fit_cfg.lr = fit_lr;
      fit_cfg.seed = need_seed(fit_seed, "fit");
      fit_cfg.init = fit_init == "identity" ? InitScheme::identity()
                     : fit_init == "random" ? InitScheme::random_orthogonal()
                                            : InitScheme::noisy_identity();
      const Matrix target = read_matrix(fit_target);
      if (fit_cfg.scheme == Scheme::Sttp && (target.rows() < 2 || target.cols() < 2))
        throw UsageError("sttp needs a target with at least 2 rows and columns");
      const FitResult res = fit_matrix(target, fit_cfg);
      write_params(fit_params_out, res.params);
      Output out(fit_out);
      for (std::size_t k = 0; k < res.trace.size(); ++k) out.get() << k << "," << num(res.trace[k]) << "\n";
      std::cerr << "best_loss=" << num(res.best_loss) << " best_step=" << res.best_step
                << " steps=" << res.trace.size() << "\n";
    } else if (*demo) {
      demo_cfg.scheme = kSchemes.at(demo_scheme);
      demo_cfg.mode = kModes.at(demo_mode);
      const DemoReport rep = demo_train(demo_cfg, need_seed(demo_seed, "demo-train"));
      Output out(demo_out);
      out.get() << "step,loss,sigma_max_1,sigma_max_2,stable_rank_1,stable_rank_2,lipschitz\n";
      for (std::size_t k = 0; k < rep.steps.size(); ++k) {
        if (k % demo_every != 0 && k + 1 != rep.steps.size()) continue;
        const DemoStep& s = rep.steps[k];
        out.get() << k << "," << num(s.loss) << "," << num(s.sigma_max[0]) << "," << num(s.sigma_max[1]) << ","
                  << num(s.stable_rank[0]) << "," << num(s.stable_rank[1]) << "," << num(s.lipschitz) << "\n";
      }
      std::cerr << "final_loss=" << num(rep.final_loss) << "\n";
    } else if (*insp) {
      const AnyParams p = read_params(insp_params);
      const auto [m, n] = dims_of(p);
      const SpectrumParams& sp = spectrum_of(p);
      const std::vector<double> sigma = materialize_sigma(sp);
      std::cout << "scheme=" << (std::holds_alternative<SvdpParams>(p) ? "svdp" : "sttp") << "\n"
                << "shape=" << m << "x" << n << " r=" << sp.rank() << "\n"
                << "spectrum=" << to_string(sp.mode) << "\n"
                << "sigma=" << join(sigma) << "\n"
                << "stable_rank=" << num(stable_rank(sigma)) << "\n"
                << "lipschitz=" << num(lipschitz_bound(sigma)) << "\n"
                << "dof=" << dof_of(p) << "\n"
                << "numel=" << m * n << "\n"
                << "compression=" << num(single_layer_z(m, n, dof_of(p), !insp_nobias)) << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const EncodeError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

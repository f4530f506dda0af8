// Command-line front end: config-driven verification campaigns (`run`),
// closed-form rate evaluation (`predict`, `catalog`), and `version`.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "eotlab/experiment.hpp"
#include "eotlab/util.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

void add_rate_flags(CLI::App* cmd, eotlab::RateParams& p, std::string& setting) {
  cmd->add_option("--setting", setting, "catalog setting id (see `catalog`)");
  cmd->add_option("--tau", p.tau, "Talagrand constant of nu");
  cmd->add_option("--eps", p.epsilon, "regularization parameter");
  auto opt = [cmd](const char* name, std::optional<double>& slot, const char* help) {
    cmd->add_option_function<double>(name, [&slot](double v) { slot = v; }, help);
  };
  opt("--alpha", p.alpha, "log-concavity modulus of rho");
  opt("--beta", p.beta, "log-semiconvexity modulus of nu");
  opt("--sigma-norm", p.sigma_norm, "operator norm of the cost matrix Sigma");
  opt("--L", p.weak_l, "weak log-concavity defect");
  opt("--C", p.tail_c, "light-tail growth constant");
  opt("--tail-delta", p.tail_delta, "light-tail growth exponent");
  opt("--R", p.tail_r, "light-tail ball radius (also g_inf for --setting compact)");
  opt("--tail-L", p.tail_l, "light-tail inner Hessian bound");
  opt("--H-cost", p.hess_upper, "cost Hessian upper bound H(c)");
  opt("--h-cost", p.hess_lower, "cost Hessian lower bound h(c)");
  opt("--lip", p.lip, "cost Lipschitz modulus");
  opt("--c-rho", p.c_rho, "log-Sobolev constant of rho");
  opt("--g-inf", p.g_inf, "sup |grad_2 c - Sigma y| over supp(rho)");
  opt("--grad-inf", p.grad_inf, "sup |grad_2 c| over supp(rho) x supp(nu)");
  opt("--sphere-delta", p.sphere_delta, "smoothing parameter of the c_delta cost");
  opt("--K", p.heavy_k, "heavy-tail constant K (non-certified)");
}

void print_certificate_human(const eotlab::RateCertificate& cert) {
  std::printf("setting          %s\n", eotlab::to_string(cert.setting).c_str());
  std::printf("formula          %s\n", cert.formula_id.c_str());
  std::printf("lambda           %s\n", eotlab::format_double(cert.lambda).c_str());
  std::printf("tau              %s\n", eotlab::format_double(cert.tau).c_str());
  std::printf("epsilon          %s\n", eotlab::format_double(cert.epsilon).c_str());
  std::printf("contraction      %s\n", eotlab::format_double(cert.contraction).c_str());
  std::printf("eps threshold    %s\n", eotlab::format_double(cert.epsilon_threshold).c_str());
  std::printf("threshold_ok     %s\n", cert.threshold_ok ? "yes" : "no");
  if (!cert.certified) std::printf("note             constant not certified by theory\n");
}

std::string certificate_csv_line(const eotlab::RateCertificate& cert) {
  using eotlab::format_double;
  return eotlab::to_string(cert.setting) + "," + cert.formula_id + "," +
         format_double(cert.lambda) + "," + format_double(cert.tau) + "," +
         format_double(cert.epsilon) + "," + format_double(cert.contraction) + "," +
         format_double(cert.epsilon_threshold) + "," + (cert.threshold_ok ? "1" : "0");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropic optimal transport verification lab"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  int jobs = 1;
  CLI::App* run = app.add_subcommand("run", "run a config-driven verification campaign");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_override, "output directory (overrides config)");
  run->add_option_function<std::uint64_t>(
      "--seed", [&seed_override](std::uint64_t s) { seed_override = s; },
      "seed override");
  run->add_option("--jobs", jobs, "concurrent (instance, epsilon) cells")->check(CLI::PositiveNumber);

  // predict
  eotlab::RateParams predict_params;
  std::string predict_setting;
  CLI::App* predict = app.add_subcommand("predict", "evaluate one convergence-rate formula");
  add_rate_flags(predict, predict_params, predict_setting);

  // catalog
  eotlab::RateParams catalog_params;
  catalog_params.tau = 1.0;
  catalog_params.epsilon = 1.0;
  std::string catalog_setting_unused;
  std::string catalog_out;
  CLI::App* catalog = app.add_subcommand("catalog", "dump every parameterized rate formula as CSV");
  add_rate_flags(catalog, catalog_params, catalog_setting_unused);
  catalog->add_option("--out", catalog_out, "write CSV here instead of stdout");

  CLI::App* version = app.add_subcommand("version", "print version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (version->parsed()) {
      std::printf("eotlab %s\n", kVersion);
      return 0;
    }
    if (predict->parsed()) {
      if (predict_setting.empty()) {
        std::fprintf(stderr, "predict: --setting is required\n");
        return 2;
      }
      const auto setting = eotlab::rate_setting_from_string(predict_setting);
      if (!setting) {
        std::fprintf(stderr, "predict: unknown setting '%s'\n", predict_setting.c_str());
        return 2;
      }
      // `--R 1` doubles as g_inf for the compact quadratic-cost case.
      if (*setting == eotlab::RateSetting::CompactSupport && !predict_params.g_inf &&
          predict_params.tail_r)
        predict_params.g_inf = predict_params.tail_r;
      const auto cert = eotlab::rate_catalog(*setting, predict_params);
      print_certificate_human(cert);
      std::printf("csv: setting,formula,lambda,tau,epsilon,contraction,eps_threshold,threshold_ok\n");
      std::printf("csv: %s\n", certificate_csv_line(cert).c_str());
      return 0;
    }
    if (catalog->parsed()) {
      // Fill defaults for anything not supplied so every entry evaluates.
      auto def = [](std::optional<double>& v, double d) { if (!v) v = d; };
      def(catalog_params.alpha, 1.0);
      def(catalog_params.beta, 1.0);
      def(catalog_params.sigma_norm, 1.0);
      def(catalog_params.weak_l, 0.0);
      def(catalog_params.tail_c, 1.0);
      def(catalog_params.tail_delta, 1.0);
      def(catalog_params.tail_r, 1.0);
      def(catalog_params.tail_l, 0.0);
      def(catalog_params.hess_upper, 1.0);
      def(catalog_params.hess_lower, 1.0);
      def(catalog_params.lip, 1.0);
      def(catalog_params.c_rho, 1.0);
      def(catalog_params.g_inf, 1.0);
      def(catalog_params.grad_inf, 1.0);
      def(catalog_params.sphere_delta, 0.9);
      def(catalog_params.heavy_k, 1.0);
      std::string doc =
          "setting,formula,lambda,tau,epsilon,contraction,eps_threshold,threshold_ok\n";
      for (const auto& cert : eotlab::rate_catalog_all(catalog_params))
        doc += certificate_csv_line(cert) + "\n";
      if (catalog_out.empty()) {
        std::fputs(doc.c_str(), stdout);
      } else {
        std::filesystem::path p(catalog_out);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        FILE* f = std::fopen(catalog_out.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot open " + catalog_out);
        std::fputs(doc.c_str(), f);
        std::fclose(f);
      }
      return 0;
    }
    // run
    const auto config = eotlab::load_experiment_config(config_path);
    const std::filesystem::path out(out_override.empty() ? config.out_dir : out_override);
    const auto report = eotlab::run_experiment(config, out, seed_override, jobs);
    for (const auto& o : report.outcomes) {
      const std::string where = o.cell.empty() ? "" : o.cell + " ";
      std::printf("[%s]%s %s%s: %s\n", o.passed ? "PASS" : "FAIL", o.hard ? "" : " (soft)",
                  where.c_str(), o.id.c_str(), o.detail.c_str());
    }
    std::printf("artifacts written to %s\n", out.string().c_str());
    return report.exit_status;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

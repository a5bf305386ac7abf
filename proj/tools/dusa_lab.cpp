// Command-line front end: pretrain, adapt, verify, sweep, report.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "dusa/checkpoint.hpp"
#include "dusa/protocol.hpp"
#include "dusa/report.hpp"
#include "dusa/verify.hpp"

namespace {

using dusa::config::Json;

// Remaining "--key value" or "--key=value" tokens become config overrides.
void apply_overrides(Json& cfg, std::vector<std::string> extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string tok = extras[i];
    if (tok.rfind("--", 0) != 0) throw std::invalid_argument("unexpected argument '" + tok + "'");
    tok = tok.substr(2);
    std::string value;
    if (const auto eq = tok.find('='); eq != std::string::npos) {
      value = tok.substr(eq + 1);
      tok = tok.substr(0, eq);
    } else if (i + 1 < extras.size()) {
      value = extras[++i];
    } else {
      throw std::invalid_argument("missing value for --" + tok);
    }
    dusa::config::set(cfg, tok, value);
  }
}

Json load_config(const std::string& path, const std::vector<std::string>& extras) {
  Json cfg = path.empty() ? dusa::config::defaults() : dusa::config::load(path);
  apply_overrides(cfg, extras);
  return cfg;
}

bool wants_seg(const Json& cfg) { return cfg.at("task").get<std::string>() == "segment"; }

void print_record(const dusa::harness::RunRecord& r) {
  std::printf("%s  %s/%s seed %llu\n", r.run_id.c_str(), to_string(r.method).c_str(), to_string(r.protocol).c_str(),
              static_cast<unsigned long long>(r.seed));
  for (const auto& s : r.segments) std::printf("  %-16s %.4f  (%lld samples)\n", s.label.c_str(), s.acc, static_cast<long long>(s.samples));
  std::printf("  %-16s %.4f\n", "overall", r.overall);
}

int print_checks(const std::vector<dusa::verify::Check>& checks) {
  int failed = 0;
  for (const auto& c : checks) {
    std::printf("%-4s %-22s %-12.3g %s (%.1fs)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.detail.c_str(),
                c.seconds);
    failed += !c.pass;
  }
  return failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-driven test-time adaptation lab"};
  app.require_subcommand(1);

  std::string config_path;
  auto* pretrain = app.add_subcommand("pretrain", "train source classifier, denoisers and dense labeler");
  bool skip_seg = false;
  pretrain->add_option("--config", config_path, "JSON config file");
  pretrain->add_flag("--skip-seg", skip_seg, "skip the segmentation models");
  pretrain->allow_extras();

  auto* adapt = app.add_subcommand("adapt", "run one adaptation protocol and write its record");
  adapt->add_option("--config", config_path, "JSON config file");
  adapt->allow_extras();

  std::string suite = "all";
  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "run the identity and gradient suites");
  verify->add_option("--suite", suite, "oracle, gradients or all")->check(CLI::IsMember({"oracle", "gradients", "all"}));
  verify->add_option("--seed", verify_seed, "suite seed");

  std::string axis;
  std::vector<int> values;
  auto* sweep = app.add_subcommand("sweep", "one run per value of an axis");
  sweep->add_option("--config", config_path, "JSON config file");
  sweep->add_option("--axis", axis, "timestep, budget or batchSize")->required();
  sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  sweep->allow_extras();

  std::string in_dir;
  auto* report = app.add_subcommand("report", "aggregate tables and sweep curves");
  report->add_option("--in", in_dir, "directory of run records")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) {
      Json cfg = load_config(config_path, pretrain->remaining());
      const auto lab = dusa::lab::pretrain(cfg, !skip_seg, &std::cout);
      const std::string dir = cfg.at("checkpoints");
      dusa::lab::save(dir, lab, cfg);
      std::cout << "checkpoints written to " << dir << "\n";
      return 0;
    }
    if (*adapt) {
      Json cfg = load_config(config_path, adapt->remaining());
      const auto lab = dusa::lab::load(cfg.at("checkpoints").get<std::string>(), cfg, wants_seg(cfg));
      const auto rec = dusa::harness::run(lab, cfg);
      dusa::harness::persist(cfg.at("out").get<std::string>(), rec, cfg,
                             dusa::lab::checkpoint_hashes(cfg.at("checkpoints").get<std::string>()));
      print_record(rec);
      return 0;
    }
    if (*verify) {
      std::vector<dusa::verify::Check> checks;
      if (suite == "oracle" || suite == "all") {
        checks = dusa::verify::identity_suite(verify_seed);
        checks.push_back(dusa::verify::mmse_suite(verify_seed));
      }
      if (suite == "gradients" || suite == "all") {
        for (auto& c : dusa::verify::gradient_suite(verify_seed)) checks.push_back(c);
        checks.push_back(dusa::verify::partition_check(verify_seed));
      }
      return print_checks(checks) == 0 ? 0 : 1;
    }
    if (*sweep) {
      Json cfg = load_config(config_path, sweep->remaining());
      const auto ax = dusa::harness::parse_axis(axis);
      const auto lab = dusa::lab::load(cfg.at("checkpoints").get<std::string>(), cfg, wants_seg(cfg));
      const auto points = dusa::harness::sweep(ax, values, lab, cfg);
      const std::string out = cfg.at("out");
      const Json hashes = dusa::lab::checkpoint_hashes(cfg.at("checkpoints").get<std::string>());
      for (const auto& p : points) {
        dusa::harness::persist(out, p.record, dusa::harness::with_axis(cfg, ax, p.value), hashes);
        std::printf("%s=%d  %.4f  %s\n", axis.c_str(), p.value, p.record.overall, p.record.run_id.c_str());
      }
      const std::string summary = out + "/sweep_" + axis + ".csv";
      dusa::harness::write_sweep_summary(summary, ax, points);
      std::cout << "summary written to " << summary << "\n";
      return 0;
    }
    if (*report) {
      for (const auto& f : dusa::harness::report(in_dir)) std::cout << "wrote " << f.string() << "\n";
      return 0;
    }
  } catch (const dusa::io::CheckpointMismatch& e) {
    std::cerr << "refusing to run: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

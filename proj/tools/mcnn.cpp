// Command-line front end: gen, train, eval, apply, gradcheck, preset.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mcnn/experiments.hpp"
#include "mcnn/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace mcnn;

namespace {

// "key=value" overrides on top of a config file or preset.
void apply_overrides(KeyValues& kv, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "--set expects key=value, got '" + s + "'");
    kv.set(std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))));
  }
}

void print_report(const ExperimentReport& r) {
  std::cout << "network mse " << r.network.mse << " psnr " << r.network.psnr << "\n";
  if (r.baseline) std::cout << "baseline mse " << r.baseline->mse << " psnr " << r.baseline->psnr << "\n";
  for (const FilterSummary& f : r.filters) {
    std::cout << "layer " << f.layer << " filter " << f.filter << " P " << f.order;
    if (f.support_iou) std::cout << " support IoU " << *f.support_iou;
    std::cout << "\n";
  }
}

int run_config(KeyValues kv, const std::vector<std::string>& sets, bool quiet) {
  apply_overrides(kv, sets);
  const ExperimentConfig config = in_stage("config", [&] { return ExperimentConfig::from_config(kv); });
  const ExperimentReport r = run(config, quiet ? nullptr : &std::cout);
  print_report(r);
  std::cout << "wrote " << config.output.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn morphological operators with counter-harmonic-mean layers"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "write synthetic PGM images");
  std::string gen_kind = "texture";
  int gen_count = 4;
  int gen_size = 128;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--kind", gen_kind, "texture or defects")->check(CLI::IsMember({"texture", "defects"}));
  gen->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  gen->add_option("--size", gen_size)->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();

  auto* train = app.add_subcommand("train", "train per a config file");
  std::string train_config;
  std::vector<std::string> train_sets;
  bool quiet = false;
  train->add_option("config", train_config)->required();
  train->add_option("--set", train_sets, "override a config key (key=value)");
  train->add_flag("--quiet", quiet);

  auto* ev = app.add_subcommand("eval", "score saved parameters on a config's test set");
  std::string eval_config;
  std::string eval_params;
  std::vector<std::string> eval_sets;
  ev->add_option("config", eval_config)->required();
  ev->add_option("params", eval_params)->required();
  ev->add_option("--set", eval_sets);

  auto* ap = app.add_subcommand("apply", "run saved parameters on images");
  std::string apply_params;
  std::vector<std::string> apply_images;
  std::string apply_out = "pred";
  ap->add_option("params", apply_params)->required();
  ap->add_option("images", apply_images)->required();
  ap->add_option("--out", apply_out);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the PConv gradients");
  int gc_seeds = 20;
  gc->add_option("--seeds", gc_seeds)->check(CLI::PositiveNumber);

  auto* pr = app.add_subcommand("preset", "run a built-in experiment");
  std::string preset_name;
  std::string preset_out;
  std::vector<std::string> preset_sets;
  bool preset_print = false;
  pr->add_option("name", preset_name)->required();
  pr->add_option("--out", preset_out);
  pr->add_option("--set", preset_sets);
  pr->add_flag("--print", preset_print, "print the config instead of running it");
  pr->add_flag("--quiet", quiet);

  auto* list = app.add_subcommand("presets", "list built-in experiments");

  CLI11_PARSE(app, argc, argv);

  std::string stage = "cli";
  try {
    if (*gen) {
      stage = "gen";
      fs::create_directories(gen_out);
      const std::vector<Image> imgs = generate_images(gen_kind, gen_count, gen_size, DefectSpec{}, gen_seed);
      for (std::size_t i = 0; i < imgs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%s_%03zu.pgm", gen_kind.c_str(), i);
        save_pgm(denormalize(imgs[i]), fs::path(gen_out) / name);
      }
      std::cout << "wrote " << imgs.size() << " images to " << gen_out << "\n";
      return 0;
    }
    if (*train) {
      stage = "config";
      return run_config(KeyValues::load(train_config), train_sets, quiet);
    }
    if (*ev) {
      stage = "config";
      KeyValues kv = KeyValues::load(eval_config);
      apply_overrides(kv, eval_sets);
      const ExperimentConfig config = ExperimentConfig::from_config(kv);
      print_report(eval(config, eval_params));
      return 0;
    }
    if (*ap) {
      std::vector<fs::path> paths(apply_images.begin(), apply_images.end());
      for (const fs::path& p : apply(apply_params, paths, apply_out)) std::cout << p.string() << "\n";
      return 0;
    }
    if (*gc) {
      stage = "gradcheck";
      const SweepResult r = pconv_gradient_sweep(gc_seeds);
      std::cout << r.instances << " instances, max relative error " << r.max_rel_err << " (P = " << r.worst_order
                << ", seed " << r.worst_seed << "), " << r.failures << " above 1e-4\n";
      return r.failures == 0 ? 0 : 1;
    }
    if (*pr) {
      stage = "config";
      KeyValues kv = preset_config(preset_name, preset_out.empty() ? fs::path("out") / preset_name : fs::path(preset_out));
      if (preset_print) {
        apply_overrides(kv, preset_sets);
        std::cout << kv.to_string();
        return 0;
      }
      return run_config(kv, preset_sets, quiet);
    }
    if (*list) {
      for (const std::string& n : preset_names()) std::cout << n << "\n";
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

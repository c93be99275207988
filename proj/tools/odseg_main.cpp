#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "odseg/commands.hpp"
#include "odseg/error.hpp"
#include "odseg/tensor.hpp"

namespace {

odseg::ExperimentConfig build_config(const std::string& config_path, const std::vector<std::string>& sets) {
  odseg::ExperimentConfig cfg = config_path.empty() ? odseg::ExperimentConfig{} : odseg::load_config(config_path);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw odseg::UsageError("--set expects key=value, got '" + s + "'");
    odseg::set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

int exit_code(const odseg::Error& e) { return std::string(e.kind()) == "UsageError" ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  odseg::configure_allocator();
  CLI::App app{"Optic disc segmentation with a pretrained localisation encoder"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::vector<std::string> sets;
  bool list_keys = false;
  bool print_config = false;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--set", sets, "override one config key (key=value), repeatable");
  app.add_flag("--list-keys", list_keys, "print every config key with its description");
  app.add_flag("--print-config", print_config, "print the effective configuration");

  bool force = false;
  auto* gen = app.add_subcommand("gen", "generate the synthetic localisation and segmentation datasets");
  gen->add_flag("--force", force, "overwrite an existing dataset directory");

  auto* loc = app.add_subcommand("train-localizer", "pretrain the encoder as an optic disc centroid regressor");

  std::string pretrained;
  bool baseline = false;
  auto* seg = app.add_subcommand("train-segmenter", "cross-validated segmentation training for one scheme");
  seg->add_option("--pretrained", pretrained, "localiser checkpoint whose encoder is frozen and extended");
  seg->add_flag("--baseline", baseline, "train the full U-net from random initialisation");

  std::string localizer;
  int jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "training-fraction sweep comparing both schemes");
  sweep->add_option("--localizer", localizer, "localiser checkpoint (default <out_dir>/localizer.ckpt)");
  sweep->add_option("--jobs", jobs, "parallel training runs");

  std::string ckpt, split;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a named split");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--split", split, "loc-train, loc-val, loc-test, seg-all or seg-fold-K")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    const odseg::ExperimentConfig cfg = build_config(config_path, sets);
    if (list_keys) {
      for (const auto& k : odseg::config_keys()) std::cout << k.name << "  " << k.doc << "\n";
      return 0;
    }
    if (print_config) {
      std::cout << odseg::dump_config(cfg);
      return 0;
    }
    if (*gen) {
      odseg::cmd_gen(cfg, force, std::cout);
    } else if (*loc) {
      odseg::cmd_train_localizer(cfg, std::cout);
    } else if (*seg) {
      odseg::SegmenterOptions opt;
      if (seg->count("--pretrained")) opt.pretrained = pretrained;
      opt.baseline = baseline;
      odseg::cmd_train_segmenter(cfg, opt, std::cout);
    } else if (*sweep) {
      const std::filesystem::path path = localizer.empty() ? cfg.out_dir / "localizer.ckpt" : std::filesystem::path(localizer);
      odseg::cmd_sweep(cfg, path, jobs, std::cout);
    } else if (*eval) {
      odseg::cmd_eval(cfg, ckpt, split, std::cout);
    } else {
      std::cerr << "UsageError: no subcommand given (see --help)\n";
      return 2;
    }
  } catch (const odseg::Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "Error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// mirrorcap: command-line driver for the mirror motion-capture pipeline.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>

#include "mirrorcap/io.hpp"
#include "mirrorcap/pipeline.hpp"

namespace {

struct Flags {
  std::string input, config, out_dir, schema, mode, gt, calibration, lift;
  std::optional<double> person_height;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--input", f.input, "keypoint JSON file");
  app->add_option("--config", f.config, "JSON config file; flags override its values");
  app->add_option("--out-dir", f.out_dir, "output directory");
  app->add_option("--schema", f.schema, "keypoint layout: h36m17, body25 or coco17");
  app->add_option("--person-height", f.person_height, "person height in metres");
  app->add_option("--mode", f.mode, "render mode")
      ->check(CLI::IsMember({"layered", "no-occlusion", "no-layering"}));
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--threads", f.threads, "worker thread cap")->check(CLI::PositiveNumber);
  app->add_option("--gt", f.gt, "3D ground-truth pose JSON for evaluation");
  app->add_option("--calibration", f.calibration, "reuse an existing calibration JSON");
  app->add_option("--lift", f.lift, "reuse an existing lift JSON");
}

mirrorcap::PipelineConfig resolve(const Flags& f) {
  mirrorcap::PipelineConfig c;
  if (!f.config.empty()) c = mirrorcap::load_config(f.config, c);
  if (!f.input.empty()) c.input = f.input;
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (!f.schema.empty()) c.schema = f.schema;
  if (f.person_height) c.person_height = *f.person_height;
  if (!f.mode.empty()) c.mode = mirrorcap::parse_render_mode(f.mode);
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (!f.gt.empty()) c.gt = f.gt;
  if (!f.calibration.empty()) c.calibration = f.calibration;
  if (!f.lift.empty()) c.lift = f.lift;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mirror-based human motion capture from 2D keypoints"};
  app.require_subcommand(1);
  Flags flags;
  std::string command;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synth", "generate a synthetic scene: keypoints, 3D ground truth and true geometry"},
      {"calibrate", "estimate focal length, ground plane and mirror plane"},
      {"lift", "fit the 3D skeleton sequence"},
      {"render", "render layered mirror images from a lift result"},
      {"eval", "score a lift result against 3D ground truth"},
      {"run", "calibrate, lift, render and evaluate"},
  };
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, flags);
    sub->callback([&command, name = s.name] { command = name; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const mirrorcap::PipelineConfig config = resolve(flags);
    mirrorcap::StageOutputs out;
    if (command == "synth") out = mirrorcap::run_synth(config);
    else if (command == "calibrate") out = mirrorcap::run_calibrate(config);
    else if (command == "lift") out = mirrorcap::run_lift(config);
    else if (command == "render") out = mirrorcap::run_render(config);
    else if (command == "eval") out = mirrorcap::run_eval(config);
    else out = mirrorcap::run_pipeline(config);
    if (command != "run") out.files.push_back(mirrorcap::write_manifest(config, command, out.files));
    for (const auto& p : out.files) std::cout << p.string() << "\n";
    if (command == "eval" || (command == "run" && !config.gt.empty())) {
      std::cout << mirrorcap::read_text(std::filesystem::path(config.out_dir) / "metrics.txt");
    }
  } catch (const mirrorcap::Error& e) {
    std::cerr << "error";
    if (!e.stage().empty()) std::cerr << " [" << e.stage() << "]";
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

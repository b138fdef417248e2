#pragma once

// Stage driver: keypoints -> association -> calibration -> lifting ->
// rendering -> evaluation, with every stage reading and writing files so
// any of them can be resumed from a previous run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mirrorcap/calibrate.hpp"
#include "mirrorcap/eval.hpp"
#include "mirrorcap/lift.hpp"
#include "mirrorcap/render.hpp"
#include "mirrorcap/synth.hpp"

namespace mirrorcap {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineConfig {
  std::string input;        // keypoint JSON
  std::string out_dir = "out";
  std::string gt;           // optional 3D ground truth JSON
  std::string calibration;  // resume: existing calibration JSON
  std::string lift;         // resume: existing lift JSON
  std::string background;   // optional PPM
  std::string schema = "h36m17";
  std::string skeleton = "h36m17";  // or h36m19 (adds heels)
  double person_height = 1.7;

  CalibrationConfig calib;
  LiftWeights weights;
  LiftOptions lift_options;

  bool render = true;
  RenderMode mode = RenderMode::Layered;
  std::vector<int> render_frames;  // empty: the frame with the largest box overlap
  int samples = kSamplesPerRay;
  bool jitter = false;
  double pad_fraction = 0.1;
  double iou_threshold = 0.1;
  double occlusion_fraction = 0.05;
  int occlusion_rays = 256;
  double sigma_max = 40.0;
  Vec3 background_color = Vec3::Constant(0.1);

  std::vector<int> joint_subset;  // empty: default evaluation subset
  SynthConfig synth;

  std::uint64_t seed = 0;
  int threads = 1;

  SkeletonDef make_skeleton() const;
  void validate() const;
};

// Reads a JSON config file into `base`; keys that are absent keep their
// current values.
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
void apply_config_json(const std::string& text, PipelineConfig& config);
// Canonical JSON of every setting that affects outputs.
std::string config_to_json(const PipelineConfig& config);

std::uint64_t fnv1a64(const std::string& bytes);

struct StageOutputs {
  std::vector<std::filesystem::path> files;
};

// Each stage wraps errors with its stage name.
StageOutputs run_synth(const PipelineConfig& config);
StageOutputs run_calibrate(const PipelineConfig& config);
StageOutputs run_lift(const PipelineConfig& config);
StageOutputs run_render(const PipelineConfig& config);
StageOutputs run_eval(const PipelineConfig& config);

// calibrate -> lift -> render (optional) -> eval (when gt is set), then the
// manifest. Returns every file written.
StageOutputs run_pipeline(const PipelineConfig& config);

// manifest.json: config hash, seed, version and a hash of every output file.
std::filesystem::path write_manifest(const PipelineConfig& config, const std::string& command,
                                     const std::vector<std::filesystem::path>& outputs);

}  // namespace mirrorcap

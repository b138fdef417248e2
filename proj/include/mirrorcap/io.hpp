#pragma once

// File formats: keypoint JSON (own layout plus 25- and 17-joint detector
// importers), calibration and lift results, 3D ground truth, binary PPM
// images and BVH motion export.

#include <filesystem>
#include <string>
#include <vector>

#include "mirrorcap/calibrate.hpp"
#include "mirrorcap/lift.hpp"
#include "mirrorcap/render.hpp"
#include "mirrorcap/skeleton.hpp"

namespace mirrorcap {

enum class KeypointSchema { H36M, Body25, Coco17 };

KeypointSchema parse_schema(const std::string& name);  // throws UnknownSchema
std::string to_string(KeypointSchema schema);

struct KeypointFile {
  KeypointSchema schema = KeypointSchema::H36M;
  int width = 0;
  int height = 0;
  std::vector<std::vector<Detection2D>> frames;  // remapped to the target skeleton
};

// Parses keypoint JSON and remaps every person onto `skel`'s joints by name.
// Joints the source layout lacks get confidence 0; extra source joints are
// dropped. Malformed input throws ParseError with the byte offset or frame.
KeypointFile parse_keypoints(const std::string& text, const SkeletonDef& skel);
KeypointFile read_keypoints(const std::filesystem::path& path, const SkeletonDef& skel);
// Writes detections already in the internal layout.
std::string keypoints_to_json(const std::vector<std::vector<Detection2D>>& frames,
                              const SkeletonDef& skel, int width, int height);

std::string calibration_to_json(const CalibrationResult& calib);
CalibrationResult calibration_from_json(const std::string& text);

std::string lift_to_json(const LiftResult& result, const SkeletonDef& skel);
LiftResult lift_from_json(const std::string& text, const SkeletonDef& skel);

std::string poses_to_json(const std::vector<Pose3D>& poses, const SkeletonDef& skel);
// Joints are matched by name when the file names them, else by position.
std::vector<Pose3D> poses_from_json(const std::string& text, const SkeletonDef& skel);

std::string to_bvh(const SkeletonDef& skel, const PoseParams& pose, double frame_time = 1.0 / 30.0);

// Binary P6, 8 bits per channel, values rounded from [0, 1].
std::string encode_ppm(const Image& image);
Image decode_ppm(const std::string& bytes);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mirrorcap

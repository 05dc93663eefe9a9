#pragma once

#include <string>
#include <vector>

#include "isosr/fsrcnn.hpp"
#include "isosr/optim.hpp"
#include "isosr/predict.hpp"
#include "isosr/resample.hpp"
#include "isosr/sampling.hpp"
#include "isosr/split.hpp"
#include "isosr/srunet.hpp"

namespace isosr {

// Hyperparameter sweep lists. m/d/s apply to fsrcnn3d, h/w/d to
// srunet3d; unset lists fall back to the single configured value.
struct GridSpec {
  std::vector<int> m, d, s, h, w;
  i64 iterations = 0;  // 0 = use [train] iterations
};

// Everything a run needs, parsed from a sectioned key=value file.
// Sections: [model] [fsrcnn] [srunet] [train] [data] [eval] [grid].
// Lines starting with '#' are comments. Unknown sections or keys are
// usage errors.
struct RunConfig {
  // [model]
  std::string arch = "fsrcnn3d";
  int z_factor = 4;
  // [fsrcnn] / [srunet] (z_factor is copied in when building)
  FsrcnnSpec fsrcnn;
  SrunetSpec srunet;
  // [train]
  i64 batch = 6;
  i64 iterations = 2000;
  double alpha_init = 1e-4;
  i64 decay_steps = 0;  // 0 = architecture default (fsrcnn 20000, srunet 50000)
  std::uint64_t seed = 0;
  i64 checkpoint_every = 1000;
  i64 val_every = 500;
  bool fixed_patch = false;  // reuse the iteration-0 patch every step
  std::string out_dir = "run";
  // [data]
  std::string volume_path;
  SplitSpec split;
  std::array<i64, 3> patch{64, 64, 64};
  i64 margin = 0;
  // [eval]
  TileSpec tile;  // tile extents in output voxels
  CubicMode cubic = CubicMode::kZOnly;
  double range = 255.0;
  // [grid]
  GridSpec grid;
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// Applies one "section.key=value" override (the CLI --set flag).
void apply_override(RunConfig& cfg, const std::string& assignment);

// Builds the configured architecture with z_factor filled in.
NetworkDesc build_network(const RunConfig& cfg);

// Learning-rate schedule with decay_steps=0 resolved per architecture.
LrSchedule schedule_for(const RunConfig& cfg);

}  // namespace isosr

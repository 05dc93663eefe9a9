#pragma once

#include <iosfwd>
#include <string>

#include "isosr/checkpoint.hpp"
#include "isosr/config.hpp"
#include "isosr/eval.hpp"
#include "isosr/metrics.hpp"
#include "isosr/volume.hpp"

namespace isosr {

struct TrainResult {
  i64 iterations = 0;
  double final_loss = 0.0;
  std::string final_checkpoint;
  MetricsRecord final_val;
  bool has_val = false;
};

// Runs the training loop on one high-res volume: contiguous split, patch
// sampling from the train region, Adam on the mean-squared error of each
// batch, square-root step decay of the learning rate. Writes loss.csv,
// metrics.csv (validation rows), periodic checkpoints, and ckpt_final.ckpt
// under cfg.out_dir. `resume_path` restarts from a saved checkpoint and
// replays the exact patch sequence of an uninterrupted run. `progress`
// (optional) receives one status line every `progress_every` iterations.
TrainResult train_run(const RunConfig& cfg, const Volume& hr, const std::string& resume_path = "",
                      std::ostream* progress = nullptr, i64 progress_every = 100);

}  // namespace isosr

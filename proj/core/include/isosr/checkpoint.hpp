#pragma once

#include <string>
#include <utility>
#include <vector>

#include "isosr/model.hpp"
#include "isosr/optim.hpp"

namespace isosr {

// On-disk training state. Format: "ISOSR1\n", then text header lines
//   arch <name>
//   field <key> <value>      (architecture fields, in build order)
//   iteration <t>
//   alpha_init <v> / decay_steps <n>
//   beta1 <v> / beta2 <v> / eps <v> / adam_t <n>
//   tensor <name> f32 <rank> <d0> ... <dk> <byte-offset>
//   data
// followed by the concatenated little-endian payloads at the stated
// offsets. Optimizer moments are stored as "adam_m/<param>" and
// "adam_v/<param>". Round trips are bit-exact.
struct Checkpoint {
  std::string arch;
  std::vector<std::pair<std::string, std::string>> fields;
  i64 iteration = 0;
  LrSchedule sched;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  i64 adam_t = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const NetworkDesc& desc, const std::vector<Tensor<float>>& params,
                           const AdamState<float>& adam, const LrSchedule& sched, i64 iteration);

// Rebuilds the network description recorded in a checkpoint's arch/field
// lines.
NetworkDesc desc_from_checkpoint(const Checkpoint& c);

struct BoundState {
  std::vector<Tensor<float>> params;
  AdamState<float> adam;
  LrSchedule sched;
  i64 iteration = 0;
};

// Matches checkpoint tensors against a description by name; missing or
// shape-mismatched parameters are an error naming the parameter.
BoundState bind_checkpoint(const Checkpoint& c, const NetworkDesc& desc);

}  // namespace isosr

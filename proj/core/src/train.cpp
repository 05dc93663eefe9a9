#include "isosr/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "isosr/sampling.hpp"
#include "isosr/split.hpp"

namespace fs = std::filesystem;

namespace isosr {

namespace {

std::string ckpt_name(i64 iteration) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ckpt_%06lld.ckpt", static_cast<long long>(iteration));
  return buf;
}

std::ofstream open_log(const fs::path& path, bool append, const std::string& header) {
  const bool fresh = !append || !fs::exists(path);
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  if (fresh) out << header;
  return out;
}

}  // namespace

TrainResult train_run(const RunConfig& cfg, const Volume& hr, const std::string& resume_path,
                      std::ostream* progress, i64 progress_every) {
  if (cfg.batch < 1) throw UsageError("batch must be >= 1");
  if (cfg.iterations < 1) throw UsageError("iterations must be >= 1");

  const NetworkDesc desc = build_network(cfg);
  std::vector<std::string> names;
  names.reserve(desc.params.size());
  for (const ParamDef& p : desc.params) names.push_back(p.name);

  std::vector<Tensor<float>> params;
  AdamState<float> adam;
  LrSchedule sched;
  i64 start = 0;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    const Checkpoint c = load_checkpoint(resume_path);
    if (c.arch != desc.arch) {
      throw DataError("checkpoint arch '" + c.arch + "' does not match configured arch '" + desc.arch + "'");
    }
    BoundState st = bind_checkpoint(c, desc);
    params = std::move(st.params);
    adam = std::move(st.adam);
    sched = st.sched;
    start = st.iteration;
    if (start >= cfg.iterations) {
      throw UsageError("checkpoint is already at iteration " + std::to_string(start) + " >= " +
                       std::to_string(cfg.iterations));
    }
  } else {
    params = init_params<float>(desc, cfg.seed);
    adam = AdamState<float>::init(params);
    sched = schedule_for(cfg);
  }

  const SplitRegions regions = split(hr, cfg.split);
  const PatchSampler sampler(hr, regions.train, cfg.patch, cfg.z_factor, cfg.seed, cfg.margin);

  const bool do_val = cfg.val_every > 0;
  Volume aniso;
  if (do_val) aniso = simulate_anisotropy(hr, cfg.z_factor);

  fs::create_directories(cfg.out_dir);
  std::ofstream loss_log = open_log(fs::path(cfg.out_dir) / "loss.csv", resuming, "iteration,lr,loss\n");
  std::ofstream val_log = open_log(fs::path(cfg.out_dir) / "metrics.csv", resuming, metrics_csv_header());

  std::vector<Tensor<float>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(Tensor<float>::zeros(p.shape()));

  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
  TrainResult result;

  auto run_validation = [&](i64 iteration) {
    const TilePredictor fn = model_predictor(desc, params);
    TileSpec tile = cfg.tile;
    tile.extent_multiple = extent_multiples(desc);
    const MetricsRecord rec = evaluate_split_region(hr, aniso, regions.val, cfg.z_factor, tile, cfg.cubic,
                                                    cfg.range, fn);
    val_log << metrics_csv_row(desc.arch, iteration, "val", rec);
    val_log.flush();
    result.final_val = rec;
    result.has_val = true;
    if (progress != nullptr) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "val @%lld: psnr %.3f dB (cubic %.3f), wpsnr %.3f dB\n",
                    static_cast<long long>(iteration), rec.psnr, rec.psnr_cubic, rec.wpsnr);
      *progress << buf << std::flush;
    }
  };

  double mean_loss = 0.0;
  for (i64 t = start; t < cfg.iterations; ++t) {
    const double lr = sched.at(t);
    for (auto& g : grads) g.fill(0.0f);

    double loss_sum = 0.0;
    for (i64 item = 0; item < cfg.batch; ++item) {
      const PatchPair pair = cfg.fixed_patch ? sampler.sample(0, 0)
                                             : sampler.sample(static_cast<std::uint64_t>(t),
                                                              static_cast<std::uint64_t>(item));
      Tape<float> tape;
      ForwardResult<float> fwd = forward(desc, params, tape, pair.lr, /*train=*/true);
      Node<float>* loss = op_mse_loss(tape, fwd.output, pair.hr);
      const double loss_v = static_cast<double>(loss->value[0]);
      if (!std::isfinite(loss_v)) {
        throw NumericError("iteration " + std::to_string(t) + ": non-finite loss");
      }
      loss_sum += loss_v;
      tape.backward(loss);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor<float>& g = fwd.param_nodes[p]->grad;
        float* acc = grads[p].data();
        const float* src = g.data();
        for (i64 i = 0; i < g.numel(); ++i) acc[i] += src[i];
      }
    }
    mean_loss = loss_sum * inv_batch;
    for (auto& g : grads) {
      float* d = g.data();
      for (i64 i = 0; i < g.numel(); ++i) d[i] = static_cast<float>(static_cast<double>(d[i]) * inv_batch);
    }
    adam_step(params, grads, names, adam, lr);

    {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n", static_cast<long long>(t), lr, mean_loss);
      loss_log << buf;
    }
    if (progress != nullptr && progress_every > 0 && (t - start) % progress_every == 0) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "iter %lld/%lld loss %.6g lr %.3g\n", static_cast<long long>(t),
                    static_cast<long long>(cfg.iterations), mean_loss, lr);
      *progress << buf << std::flush;
    }

    const i64 done = t + 1;
    if (do_val && done % cfg.val_every == 0 && done < cfg.iterations) run_validation(done);
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.iterations) {
      save_checkpoint(make_checkpoint(desc, params, adam, sched, done),
                      (fs::path(cfg.out_dir) / ckpt_name(done)).string());
    }
  }
  loss_log.flush();
  if (!loss_log) throw DataError("loss.csv: write failed");

  const std::string final_path = (fs::path(cfg.out_dir) / "ckpt_final.ckpt").string();
  save_checkpoint(make_checkpoint(desc, params, adam, sched, cfg.iterations), final_path);
  if (do_val) run_validation(cfg.iterations);

  result.iterations = cfg.iterations;
  result.final_loss = mean_loss;
  result.final_checkpoint = final_path;
  return result;
}

}  // namespace isosr

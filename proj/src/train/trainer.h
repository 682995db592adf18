/**
 * @file trainer.h
 * @brief Optimization loop for the joint four-stream model.
 *
 * Per step: forward one segment per batch lane with that lane's carried
 * memory, sum the four stream cross entropies, backpropagate (losses scaled
 * by 1/batch so lane gradients average), clip the global gradient norm, and
 * apply Adam under a warmup-then-cosine learning-rate schedule. Validation
 * runs on held-out files with its own memories and never touches training
 * state. Snapshots capture everything needed to resume bit-exactly:
 * parameters, Adam moments, RNG, scheduler cursor and lane memories.
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common/io_util.h"
#include "common/log.h"
#include "model/joint_model.h"
#include "tensor/adam.h"
#include "train/corpus.h"

namespace quartet {

struct TrainConfig {
  int segment_len = 64;
  int batch_size = 1;
  double learning_rate = 2.5e-4;
  double warmup_frac = 0.01;  // linear warmup over this fraction of steps
  int total_steps = 1000;
  int eval_interval = 100;
  uint64_t seed = 42;
  double grad_clip = 0.25;
  std::string precision = "f32";  // f32 | f64
  std::string checkpoint_dir = "checkpoints";

  void validate() const {
    if (segment_len < 1) throw DataError("segment_len must be >= 1");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (learning_rate < 0.0) throw DataError("learning_rate must be >= 0");
    if (warmup_frac < 0.0 || warmup_frac > 1.0) throw DataError("warmup_frac must be in [0, 1]");
    if (total_steps < 1) throw DataError("total_steps must be >= 1");
    if (eval_interval < 1) throw DataError("eval_interval must be >= 1");
    if (grad_clip <= 0.0) throw DataError("grad_clip must be > 0");
    if (precision != "f32" && precision != "f64") {
      throw DataError("precision must be 'f32' or 'f64'");
    }
  }
};

struct StepRecord {
  int step = 0;
  std::array<double, kNumStreams> stream_ce{};
  double total = 0.0;
  double lr = 0.0;
};

inline std::string curvesCsv(const std::vector<StepRecord>& records) {
  std::ostringstream out;
  out << "step,ce_on2on,ce_on2off,ce_pitch,ce_velocity,total\n";
  out.precision(10);
  for (const auto& r : records) {
    out << r.step;
    for (double ce : r.stream_ce) out << "," << ce;
    out << "," << r.total << "\n";
  }
  return out.str();
}

template <typename S>
class Trainer {
 public:
  Trainer(JointModel<S>& model, std::vector<const TokenStreams*> train_files,
          std::vector<const TokenStreams*> val_files, TrainConfig config)
      : model_(model),
        config_(std::move(config)),
        val_files_(std::move(val_files)),
        scheduler_(std::move(train_files), config_.segment_len, config_.batch_size, config_.seed),
        optimizer_(model.parameters()),
        dropout_rng_(Rng::mix(config_.seed, 0x1d0)) {
    config_.validate();
    lane_memories_.resize(static_cast<size_t>(config_.batch_size));
    for (auto& memory : lane_memories_) memory = model_.emptyMemory();
  }

  /// Learning rate at a 1-based step: linear warmup, then cosine decay to 0.
  double learningRateAt(int step) const {
    const int warmup = std::max(1, static_cast<int>(std::llround(config_.warmup_frac *
                                                                 config_.total_steps)));
    if (step <= warmup) {
      return config_.learning_rate * static_cast<double>(step) / warmup;
    }
    if (config_.total_steps <= warmup) return config_.learning_rate;
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(config_.total_steps - warmup);
    return config_.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  }

  /// Runs remaining steps (all of them, or the tail after a resume).
  const std::vector<StepRecord>& run() {
    while (step_ < config_.total_steps) {
      stepOnce();
      if (step_ % config_.eval_interval == 0 || step_ == config_.total_steps) {
        onInterval();
      }
    }
    saveCheckpoint(checkpointPath("ckpt_final.qtc"));
    saveSnapshot(checkpointPath("snapshot.qtc"));
    writeCurves();
    return records_;
  }

  void stepOnce() {
    ++step_;
    model_.zeroGrad();
    std::array<double, kNumStreams> ce_sum{};
    for (int lane = 0; lane < config_.batch_size; ++lane) {
      TrainSegment segment = scheduler_.next(lane);
      auto& memory = lane_memories_[static_cast<size_t>(lane)];
      if (segment.file_start) memory = model_.emptyMemory();
      auto forward = model_.forwardJoint(segment.inputs, memory, /*train=*/true, &dropout_rng_);
      auto losses = model_.streamLosses(forward, segment.targets, &segment.keep);
      for (int s = 0; s < kNumStreams; ++s) {
        const double value = losses[static_cast<size_t>(s)].item();
        if (!std::isfinite(value)) {
          throw NumericError(std::string("non-finite ") + kStreamNames[s] + " loss at step " +
                             std::to_string(step_));
        }
        ce_sum[static_cast<size_t>(s)] += value / config_.batch_size;
      }
      Tensor<S> scaled = scale(model_.jointLoss(losses), 1.0 / config_.batch_size);
      backward(scaled);
    }
    auto params = model_.parameters();
    clipGlobalNorm(params, config_.grad_clip);
    const double lr = learningRateAt(step_);
    optimizer_.step(lr);

    StepRecord record;
    record.step = step_;
    record.stream_ce = ce_sum;
    record.total = ce_sum[0] + ce_sum[1] + ce_sum[2] + ce_sum[3];
    record.lr = lr;
    records_.push_back(record);
  }

  /// Mean per-token cross entropy per stream over the validation files,
  /// memory carried within each file. Training state is untouched.
  std::array<double, kNumStreams> validationLoss() {
    NoGradGuard guard;
    std::array<double, kNumStreams> nll{};
    std::array<int64_t, kNumStreams> count{};
    for (const TokenStreams* file : val_files_) {
      JointMemory<S> memory = model_.emptyMemory();
      forEachFileSegment(*file, config_.segment_len, [&](const TrainSegment& segment) {
        auto forward = model_.forwardJoint(segment.inputs, memory, /*train=*/false, nullptr);
        auto losses = model_.streamLosses(forward, segment.targets, &segment.keep);
        int64_t kept = 0;
        for (uint8_t k : segment.keep) kept += k;
        for (int s = 0; s < kNumStreams; ++s) {
          nll[static_cast<size_t>(s)] += losses[static_cast<size_t>(s)].item() * kept;
          count[static_cast<size_t>(s)] += kept;
        }
      });
    }
    std::array<double, kNumStreams> ce{};
    for (int s = 0; s < kNumStreams; ++s) {
      ce[static_cast<size_t>(s)] =
          count[static_cast<size_t>(s)] > 0
              ? nll[static_cast<size_t>(s)] / count[static_cast<size_t>(s)]
              : 0.0;
    }
    return ce;
  }

  int step() const { return step_; }
  const std::vector<StepRecord>& records() const { return records_; }
  double bestValidation() const { return best_val_; }

  // -------------------------------------------------------------------------
  // Checkpoints and snapshots
  // -------------------------------------------------------------------------

  std::filesystem::path checkpointPath(const std::string& name) const {
    return std::filesystem::path(config_.checkpoint_dir) / name;
  }

  void saveCheckpoint(const std::filesystem::path& path) const { model_.saveCheckpoint(path); }

  /// Full training state for exact resume.
  void saveSnapshot(const std::filesystem::path& path) {
    TensorContainer container;
    nlohmann::json meta;
    meta["kind"] = "quartet-train-snapshot";
    meta["dtype"] = sizeof(S) == 4 ? "f32" : "f64";
    meta["config"] = nlohmann::json::parse(model_.config().toJson());
    meta["step"] = step_;
    meta["adam_steps"] = optimizer_.stepCount();
    // JSON has no infinity; omit best_val until a validation pass ran.
    if (std::isfinite(best_val_)) meta["best_val"] = best_val_;
    meta["rng"] = dropout_rng_.serialize();
    meta["scheduler"] = scheduler_.stateJson();
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& r : records_) {
      steps.push_back({{"step", r.step},
                       {"ce", r.stream_ce},
                       {"total", r.total},
                       {"lr", r.lr}});
    }
    meta["records"] = steps;
    container.metadata = meta.dump();
    model_.addParamsTo(container);
    for (size_t i = 0; i < optimizer_.slotCount(); ++i) {
      container.addValues("adam.m." + std::to_string(i), optimizer_.firstMoment(i),
                          {static_cast<int>(optimizer_.firstMoment(i).size())});
      container.addValues("adam.v." + std::to_string(i), optimizer_.secondMoment(i),
                          {static_cast<int>(optimizer_.secondMoment(i).size())});
    }
    for (size_t lane = 0; lane < lane_memories_.size(); ++lane) {
      const auto& memory = lane_memories_[lane];
      for (int s = 0; s < kNumStreams; ++s) {
        const auto& levels = memory.streams[static_cast<size_t>(s)];
        for (size_t level = 0; level < levels.size(); ++level) {
          container.addValues(
              "mem." + std::to_string(lane) + "." + std::to_string(s) + "." + std::to_string(level),
              levels[level].data, {levels[level].rows, model_.config().model_dim});
        }
      }
    }
    container.save(path);
  }

  void restoreSnapshot(const std::filesystem::path& path) {
    const TensorContainer container = TensorContainer::load(path);
    nlohmann::json meta = nlohmann::json::parse(container.metadata);
    if (meta.value("kind", "") != "quartet-train-snapshot") {
      throw DataError("not a training snapshot: " + path.string());
    }
    const std::string want = sizeof(S) == 4 ? "f32" : "f64";
    if (meta.value("dtype", "") != want) {
      throw DataError("snapshot dtype mismatch; expected " + want);
    }
    model_.loadParamsFrom(container);
    step_ = meta.at("step");
    best_val_ = meta.contains("best_val") && meta["best_val"].is_number()
                    ? static_cast<double>(meta["best_val"])
                    : std::numeric_limits<double>::infinity();
    optimizer_.setStepCount(meta.at("adam_steps"));
    dropout_rng_.deserialize(meta.at("rng"));
    scheduler_.restoreState(meta.at("scheduler"));
    records_.clear();
    for (const auto& r : meta.value("records", nlohmann::json::array())) {
      StepRecord record;
      record.step = r.at("step");
      for (int s = 0; s < kNumStreams; ++s) record.stream_ce[static_cast<size_t>(s)] = r.at("ce")[static_cast<size_t>(s)];
      record.total = r.at("total");
      record.lr = r.at("lr");
      records_.push_back(record);
    }
    for (size_t i = 0; i < optimizer_.slotCount(); ++i) {
      optimizer_.firstMoment(i) = container.values<S>("adam.m." + std::to_string(i));
      optimizer_.secondMoment(i) = container.values<S>("adam.v." + std::to_string(i));
    }
    for (size_t lane = 0; lane < lane_memories_.size(); ++lane) {
      auto& memory = lane_memories_[lane];
      for (int s = 0; s < kNumStreams; ++s) {
        auto& levels = memory.streams[static_cast<size_t>(s)];
        for (size_t level = 0; level < levels.size(); ++level) {
          const std::string name = "mem." + std::to_string(lane) + "." + std::to_string(s) + "." +
                                   std::to_string(level);
          const TensorRecord& record = container.require(name);
          levels[level].rows = record.shape[0];
          levels[level].data = container.values<S>(name);
        }
      }
    }
  }

 private:
  void onInterval() {
    const StepRecord& last = records_.back();
    std::ostringstream line;
    line.precision(5);
    line << "step " << last.step << "  total " << last.total;
    for (int s = 0; s < kNumStreams; ++s) {
      line << "  " << kStreamNames[s] << " " << last.stream_ce[static_cast<size_t>(s)];
    }
    if (!val_files_.empty()) {
      const auto val = validationLoss();
      const double val_total = val[0] + val[1] + val[2] + val[3];
      line << "  val " << val_total;
      if (val_total < best_val_) {
        best_val_ = val_total;
        saveCheckpoint(checkpointPath("ckpt_best.qtc"));
      }
    }
    logInfo(line.str());
    saveSnapshot(checkpointPath("snapshot.qtc"));
    writeCurves();
  }

  void writeCurves() const {
    writeFileAtomic(checkpointPath("curves.csv"), curvesCsv(records_));
  }

  JointModel<S>& model_;
  TrainConfig config_;
  std::vector<const TokenStreams*> val_files_;
  SegmentScheduler scheduler_;
  AdamOptimizer<S> optimizer_;
  Rng dropout_rng_;
  std::vector<JointMemory<S>> lane_memories_;
  std::vector<StepRecord> records_;
  int step_ = 0;
  double best_val_ = std::numeric_limits<double>::infinity();
};

}  // namespace quartet

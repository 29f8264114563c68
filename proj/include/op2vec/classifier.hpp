#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "op2vec/dataset.hpp"

namespace op2vec {

// One conv stage: `filters` output channels from a width-`kernel` valid
// convolution, ReLU, then non-overlapping max pooling of width `pool`
// (0 or 1 = no pooling).
struct ConvLayerSpec {
  uint32_t filters = 0;
  uint32_t kernel = 0;
  uint32_t pool = 0;

  bool operator==(const ConvLayerSpec&) const = default;
};

enum class LossKind { cross_entropy, mse };

// Network and training setup for the two-channel 1-D CNN. The default
// stack is conv(D->16, k8) / ReLU / pool 4 / conv(16->32, k8) / ReLU /
// global max pool / dense(32->1) / sigmoid.
struct ClassifierConfig {
  uint32_t input_length = 2048;
  uint32_t channels = 2;
  std::vector<ConvLayerSpec> conv = {{16, 8, 4}, {32, 8, 0}};
  std::vector<uint32_t> dense;  // hidden widths before the final unit
  LossKind loss = LossKind::cross_entropy;
  double lr = 0.05;
  uint32_t epochs = 20;
  uint32_t batch_size = 16;
  uint64_t seed = 1;
  double threshold = 0.5;

  void validate() const;

  bool operator==(const ClassifierConfig&) const = default;
};

// Confusion-matrix counts and the derived ratios. A ratio whose
// denominator is zero is absent, never reported as 0.
struct Metrics {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t tn = 0;
  uint64_t fn = 0;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;

  static Metrics from_counts(uint64_t tp, uint64_t fp, uint64_t tn,
                             uint64_t fn);
};

std::string metrics_to_json(const Metrics& m);

// First L rows of the program, channel values row-major, zero-padded at
// the end when the program is shorter than L.
std::vector<double> pad_or_truncate(const EmbeddedProgram& program, size_t length);

class ClassifierModel {
 public:
  // Uniform init scaled by fan-in for weights, zero biases. Deterministic
  // given the seed.
  static ClassifierModel init(const ClassifierConfig& config, uint64_t seed);

  const ClassifierConfig& config() const { return config_; }

  // Pre-sigmoid score of one frame (input_length x channels, row-major).
  double score(const std::vector<double>& frame) const;

  // sigmoid(score): probability the frame is malicious, strictly in (0,1).
  double probability(const std::vector<double>& frame) const;

  // Loss of one example under the configured objective.
  double loss_on(const std::vector<double>& frame, int label) const;

  // Adds d loss / d parameter for one example into `grad` (flat, aligned
  // with parameters()).
  double accumulate_gradient(const std::vector<double>& frame, int label,
                             std::vector<double>& grad) const;

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

 private:
  friend struct ClassifierModelTestAccess;
  explicit ClassifierModel(const ClassifierConfig& config);

  struct Tape;
  double forward(const std::vector<double>& frame, Tape* tape) const;

  ClassifierConfig config_;
  std::vector<double> params_;
  // Offsets of each parameter block inside params_: per conv layer weights
  // then bias, per dense layer weights then bias, final unit weights then
  // bias.
  std::vector<size_t> block_offsets_;
  std::vector<size_t> block_sizes_;
};

// forward_pass over a dataset record: pad/truncate then classify.
double forward_pass(const ClassifierModel& model, const EmbeddedProgram& record);

// Mean squared error 1/2 sum_k (pred_k - target_k)^2.
double mse_loss(const std::vector<double>& pred,
                const std::vector<double>& target);

// Gradient of mse_loss w.r.t. the weights of a linear layer y = W x:
// d E / d w_ji = (pred_j - target_j) * input_i, returned row-major J x I.
std::vector<double> mse_grad(const std::vector<double>& pred,
                             const std::vector<double>& target,
                             const std::vector<double>& input);

struct EpochReport {
  double mean_train_loss = 0.0;
  Metrics held_out;
};

struct TrainClassifierResult {
  ClassifierModel model;
  std::vector<EpochReport> epochs;
};

// Mini-batch gradient descent with a seeded stratified 80/20 split.
// Held-out metrics are reported after every epoch (on the training split
// when the dataset is too small to hold anything out). Deterministic for
// a fixed seed.
TrainClassifierResult train_classifier(
    const std::vector<EmbeddedProgram>& records,
    const ClassifierConfig& config);

// Thresholded evaluation (malicious iff probability > threshold).
Metrics evaluate(const ClassifierModel& model,
                 const std::vector<EmbeddedProgram>& records,
                 double threshold);

}  // namespace op2vec

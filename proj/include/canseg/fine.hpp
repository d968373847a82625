#pragma once

#include <random>
#include <string>
#include <vector>

#include "canseg/losses.hpp"
#include "canseg/optim.hpp"
#include "canseg/preprocess.hpp"
#include "canseg/tensor.hpp"

namespace canseg {

struct FineConfig {
  int in_channels = 2;
  int classes = 2;
  int depth = 4;
  int base_filters = 16;
  double dropout_p = 0.3;
  int se_reduction = 8;
  int epochs = 500;
  int batch_size = 1;
  double lr_init = 5e-4;
  double plateau_factor = 0.5;
  int plateau_patience = 10;
  int early_stop_patience = 50;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct FineForwardOpts {
  bool training = false;        // enables dropout
  bool se_identity = false;     // bypass the SE sites entirely
  bool disable_aux = false;     // drop the deep-supervision heads from the sum
  float force_gate_value = -1;  // >= 0: substitute every SE gate with this constant
};

/// Dual-channel SE U-Net: stride-2 encoder with residual context blocks,
/// channel attention after the penultimate context block and the first
/// decoder upsampling block, deep-supervised decoder, softmax output.
struct FineModel {
  FineConfig cfg;
  nn::ParamSet params;

  struct Conv {
    nn::Tensor w, b, gamma, beta;  // conv + instance norm
  };
  struct Se {
    nn::Tensor w1, b1, w2, b2;
  };
  Conv in_conv;
  std::vector<std::array<Conv, 2>> ctx;  // context blocks, one per level
  std::vector<Conv> down;                // stride-2 transitions (depth-1)
  std::vector<Conv> up;                  // upsample convs (depth-1, deepest first)
  std::vector<std::array<Conv, 2>> loc;  // localization blocks (depth-2)
  Conv out_conv;
  Se se_enc, se_dec;
  nn::Tensor seg_mid_w, seg_mid_b;   // head at the coarsest decoder output
  nn::Tensor seg_low_w, seg_low_b;   // head at the middle decoder output
  nn::Tensor seg_final_w, seg_final_b;

  mutable std::mt19937_64 dropout_rng;

  /// x: (2,N,N,N) with N divisible by 2^(depth-1). Returns per-voxel class
  /// probabilities (2,N,N,N).
  nn::Tensor forward(const nn::Tensor& x, const FineForwardOpts& opts = {}) const;
};

FineModel build_fine(const FineConfig& cfg);

struct FineTrainEntry {
  int epoch;
  double train_loss;
  double val_loss;
  double lr;
};

struct FineTrainResult {
  std::vector<FineTrainEntry> log;
  int best_epoch = -1;
  double best_val = 0.0;
  bool early_stopped = false;
};

/// Adam training with plateau-halved learning rate and early stopping; the
/// best-validation parameters are restored into the model on return.
FineTrainResult train_fine(FineModel& model, const std::vector<VoiCrop>& train,
                           const std::vector<VoiCrop>& val, const LossParams& loss,
                           const FineConfig& cfg);

/// Argmax segmentation of one dual-channel sample; ties go to background.
LabelVolume predict_fine(const FineModel& model, const VoiCrop& sample);

/// Foreground-probability volume for one sample (used by probability merges).
Volume3D predict_fine_prob(const FineModel& model, const VoiCrop& sample);

/// Pack a VOI sample into the network input layout.
nn::Tensor voi_to_tensor(const VoiCrop& sample);

}  // namespace canseg

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "palmar/nn.hpp"
#include "palmar/types.hpp"

namespace palmar {

/// One training example: a person-centered occupancy window of T frames
/// (channels) by crop x crop cells, values in [0,1].
struct Sample {
  nn::Tensor3 input;
  int label = 0;
};

struct RecognizerConfig {
  int input_frames = 8;  // T, channels
  int crop = 24;         // H = W cells
  int conv1_channels = 8;
  int conv2_channels = 16;
  int kernel = 3;
  int dense1 = 64;
  int dense2 = 32;
  int classes = 2;
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 200;
  int batch = 16;
  std::uint64_t seed = 1;
  std::vector<std::string> class_names;
};

/// conv-relu-pool-conv-relu-pool-dense-relu-dense-relu-dense-softmax.
struct RecognizerParams {
  RecognizerConfig config;
  nn::Conv2d conv1, conv2;
  nn::Dense dense1, dense2, dense_out;
  bool trained = false;

  static RecognizerParams init(const RecognizerConfig& config);
  void collect(std::vector<double*>& params, std::vector<double*>& grads);
};

/// Class probabilities; always sums to 1 with strictly positive entries.
VecX forward(const Sample& sample, const RecognizerParams& params);

struct TrainResult {
  RecognizerParams params;
  std::vector<double> loss_history;  // mean cross-entropy per epoch
};

/// Minibatch SGD with momentum on categorical cross-entropy. Deterministic
/// given the config seed. Throws NumericError when the loss goes non-finite.
TrainResult train(const std::vector<Sample>& samples, const RecognizerConfig& config);

/// (label index, confidence); ties break toward the lowest class index.
/// Throws ValidationError on an untrained model.
std::pair<int, double> predict_activity(const nn::Tensor3& window, const RecognizerParams& params);

// Checkpoint: versioned JSON with explicit shapes; the loader validates them.
void save_recognizer(const RecognizerParams& params, const std::string& path);
RecognizerParams load_recognizer(const std::string& path);

/// Builds person-centered activity windows from frames plus ground truth.
/// The crop is anchored at the person's position in the window's first frame,
/// so motion signatures stay visible; windows that straddle an activity
/// change or a person absence are skipped.
struct SampleBuildConfig {
  double cell = 0.10;  // meters per crop cell
  int frames = 8;
  int crop = 24;
  int stride = 4;
};

std::vector<Sample> build_activity_samples(const std::vector<Frame>& frames,
                                           const GroundTruth& truth,
                                           const std::vector<std::string>& class_names,
                                           const SampleBuildConfig& config);

}  // namespace palmar

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mazefl/dataset.hpp"

namespace mazefl {

// Canonical classifier shape: one sweep in, one block class out.
inline constexpr int kMlpInputDim = kSamplesPerSweep;
inline constexpr int kMlpHiddenDim = 256;
inline constexpr int kMlpOutputDim = kNumBlockLabels;

// Two-layer perceptron, ReLU hidden, linear logits. Weights are f64 in
// memory; checkpoints and the wire carry f32. Weight matrices are
// row-major: w1 is hidden_dim x in_dim, w2 is out_dim x hidden_dim.
struct MlpParams {
    int in_dim = 0;
    int hidden_dim = 0;
    int out_dim = 0;
    std::vector<double> w1, b1, w2, b2;

    static MlpParams zeros(int in_dim, int hidden_dim, int out_dim);
    bool same_shape(const MlpParams& other) const;
    bool canonical_shape() const;
};

// Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.
// Draw order is w1 then w2, each in flat row-major order.
MlpParams init_params(int in_dim, int hidden_dim, int out_dim,
                      std::uint64_t seed);
MlpParams init_params(std::uint64_t seed);  // canonical shape

std::vector<double> forward(const MlpParams& params,
                            std::span<const float> input);
std::vector<double> softmax(std::span<const double> logits);
// Argmax class; ties go to the lowest index.
int predict(const MlpParams& params, std::span<const float> input);

// Mean softmax cross-entropy over the batch plus weight_decay/2 times
// the squared weight norm (biases are not decayed). Fills `grad` with
// the gradient of that full objective. ReLU uses subgradient 0 at 0.
double loss_and_grad(const MlpParams& params, const Dataset& dataset,
                     std::span<const std::size_t> batch, double weight_decay,
                     MlpParams& grad);

void sgd_step(MlpParams& params, const MlpParams& grad, double learning_rate);

struct TrainConfig {
    double learning_rate = 0.001;
    double weight_decay = 0.001;
    int batch_size = 16;
    int epochs = 10;
    std::uint64_t shuffle_seed = 0;
    // When positive, stop after this many minibatch steps regardless of
    // epoch boundaries.
    int max_steps = 0;
};

// Plain minibatch SGD; one Fisher-Yates reshuffle per epoch, last batch
// short when batch_size does not divide the dataset.
MlpParams train(MlpParams params, const Dataset& dataset,
                const TrainConfig& config);

struct Evaluation {
    double accuracy = 0.0;
    // confusion[truth][predicted]
    std::vector<std::vector<std::uint64_t>> confusion;
};
Evaluation evaluate(const MlpParams& params, const Dataset& dataset);

// Binary checkpoint, little-endian, canonical shape only:
//   "MZNN" u8 version=1, then w1, b1, w2, b2 as f32, row-major.
std::vector<std::uint8_t> encode_params(const MlpParams& params);
MlpParams decode_params(std::span<const std::uint8_t> bytes);
void save_params(const MlpParams& params, const std::string& path);
MlpParams load_params(const std::string& path);

}  // namespace mazefl

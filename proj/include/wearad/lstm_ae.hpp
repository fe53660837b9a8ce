#pragma once

#include "wearad/features.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace wearad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::VectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::VectorXd>;

/// Gate blocks of the stacked 4H-row LSTM matrices, in storage order.
enum class Gate : int { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

/// kLinear replaces sigmoid and tanh with the identity; used by gradient tests.
enum class Activation { kStandard, kLinear };

std::string_view to_string(Activation activation);
Activation activation_from_string(std::string_view text);

/// Every trainable tensor of the encoder/decoder pair in one contiguous
/// buffer. Tensors are row-major; the LSTM matrices stack the i, f, g, o
/// gate blocks of H rows each.
class Parameters {
public:
    struct TensorInfo {
        std::string_view name;
        int rows;
        int cols;
        std::size_t offset;
    };

    Parameters() = default;
    explicit Parameters(int hidden_size);

    [[nodiscard]] int hidden_size() const noexcept { return hidden_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::span<double> flat() noexcept { return data_; }
    [[nodiscard]] std::span<const double> flat() const noexcept { return data_; }

    [[nodiscard]] std::vector<TensorInfo> tensors() const;

    MatrixView encoder_input_weights();      // 4H x 3
    MatrixView encoder_recurrent_weights();  // 4H x H
    VectorView encoder_bias();               // 4H
    MatrixView decoder_input_weights();      // 4H x 3, multiplies the zero decoder input
    MatrixView decoder_recurrent_weights();  // 4H x H
    VectorView decoder_bias();               // 4H
    MatrixView output_weights();             // 3 x H
    VectorView output_bias();                // 3

    [[nodiscard]] ConstMatrixView encoder_input_weights() const;
    [[nodiscard]] ConstMatrixView encoder_recurrent_weights() const;
    [[nodiscard]] ConstVectorView encoder_bias() const;
    [[nodiscard]] ConstMatrixView decoder_input_weights() const;
    [[nodiscard]] ConstMatrixView decoder_recurrent_weights() const;
    [[nodiscard]] ConstVectorView decoder_bias() const;
    [[nodiscard]] ConstMatrixView output_weights() const;
    [[nodiscard]] ConstVectorView output_bias() const;

    /// H x 3 block of the encoder input weights for one gate.
    [[nodiscard]] RowMatrix encoder_gate_input_weights(Gate gate) const;

    void set_zero();

    bool operator==(const Parameters &) const = default;

private:
    [[nodiscard]] std::size_t offset(int tensor) const;

    int hidden_ = 0;
    std::vector<double> data_;
};

struct TrainConfig {
    int hidden_size = 64;
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 200;
    int patience = 10;
    double validation_fraction = 0.2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0; // <= 0 disables clipping
    Activation activation = Activation::kStandard;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LstmAutoencoder {
    Parameters params;
    TrainConfig config;
    std::map<std::string, NormalizationConstants> normalization;
    std::optional<double> threshold;
    std::optional<double> threshold_percentile;

    [[nodiscard]] int hidden_size() const noexcept { return params.hidden_size(); }
    [[nodiscard]] Activation activation() const noexcept { return config.activation; }
};

struct TrainReport {
    int epochs_run = 0;
    int best_epoch = 0; // 1-based
    double best_validation_loss = 0.0;
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    std::vector<double> validation_errors; // per validation window, best parameters
    std::vector<std::size_t> validation_indices; // positions in the training input
    std::size_t train_windows = 0;
    std::size_t validation_windows = 0;

    bool operator==(const TrainReport &) const = default;
};

/// Uniform [-1/sqrt(H), 1/sqrt(H)] initialisation from the seeded generator.
LstmAutoencoder init_model(const TrainConfig &config);

/// Reconstruction aligned day-for-day with the input. Throws on non-finite input.
WindowValues forward_reconstruct(const LstmAutoencoder &model, const WindowValues &window);

/// Mean squared error over the 21 cells.
double reconstruction_error(const LstmAutoencoder &model, const WindowValues &window);

/// Per-window reconstruction errors (OpenMP over fixed-size chunks).
std::vector<double> reconstruction_errors(const LstmAutoencoder &model,
                                          std::span<const WindowValues> windows);

struct LossAndGradient {
    double loss = 0.0; // mean per-window reconstruction error over the batch
    Parameters gradient;
};

/// Exact gradient of the mean batch reconstruction error with respect to every
/// parameter, by backpropagation through time.
LossAndGradient backprop_grads(const LstmAutoencoder &model, std::span<const WindowValues> batch);

/// Trains on normal windows with an 80/20 seeded split, Adam and early
/// stopping; returns the best-validation parameters. Needs at least 10 windows.
std::pair<LstmAutoencoder, TrainReport> train(std::span<const WindowValues> windows,
                                              const TrainConfig &config);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
};

/// Central finite differences against backprop_grads on a seeded random
/// subsample of at least `min_coordinates` parameters (all when fewer).
/// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradientCheckResult gradient_check(const LstmAutoencoder &model,
                                   std::span<const WindowValues> windows, double step,
                                   std::size_t min_coordinates = 200, std::uint64_t seed = 0);

namespace kernels {

inline constexpr std::size_t kChunkWindows = 32;

/// Sum over windows of per-window MSE, accumulated into `gradient` (when not
/// null) as the gradient of that sum. Batched Eigen implementation.
double chunk_loss_and_gradient(const Parameters &params, Activation activation,
                               std::span<const WindowValues> windows, Parameters *gradient,
                               std::span<double> per_window_error = {});

/// Mean loss and gradient over `windows`; chunks of kChunkWindows are
/// processed in parallel and reduced in chunk order, so results do not
/// depend on the thread count.
LossAndGradient parallel_loss_and_gradient(const Parameters &params, Activation activation,
                                           std::span<const WindowValues> windows);

std::vector<double> parallel_reconstruction_errors(const Parameters &params, Activation activation,
                                                   std::span<const WindowValues> windows);

} // namespace kernels

/// Scalar per-window implementation kept as the test reference for the
/// batched kernels.
namespace reference {

WindowValues forward_reconstruct(const Parameters &params, Activation activation,
                                 const WindowValues &window);

double reconstruction_error(const Parameters &params, Activation activation,
                            const WindowValues &window);

LossAndGradient loss_and_gradient(const Parameters &params, Activation activation,
                                  std::span<const WindowValues> windows);

std::vector<double> reconstruction_errors(const Parameters &params, Activation activation,
                                          std::span<const WindowValues> windows);

} // namespace reference

} // namespace wearad

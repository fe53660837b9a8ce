#include "wearad/lstm_ae.hpp"

#include "wearad/error.hpp"
#include "wearad/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace wearad {

namespace {

constexpr int kTensorCount = 8;
constexpr std::string_view kTensorNames[kTensorCount] = {
    "encoder.input_weights",   "encoder.recurrent_weights", "encoder.bias",
    "decoder.input_weights",   "decoder.recurrent_weights", "decoder.bias",
    "output.weights",          "output.bias"};

std::pair<int, int> tensor_shape(int tensor, int h) {
    switch (tensor) {
    case 0:
    case 3:
        return {4 * h, kFeatureCount};
    case 1:
    case 4:
        return {4 * h, h};
    case 2:
    case 5:
        return {4 * h, 1};
    case 6:
        return {kFeatureCount, h};
    default:
        return {kFeatureCount, 1};
    }
}

} // namespace

std::string_view to_string(Activation activation) {
    return activation == Activation::kLinear ? "linear" : "standard";
}

Activation activation_from_string(std::string_view text) {
    if (text == "standard") {
        return Activation::kStandard;
    }
    if (text == "linear") {
        return Activation::kLinear;
    }
    throw Error(fmt::format("unknown activation '{}'", text));
}

Parameters::Parameters(int hidden_size) : hidden_{hidden_size} {
    if (hidden_size <= 0) {
        throw Error(fmt::format("hidden size must be positive, got {}", hidden_size));
    }
    data_.assign(offset(kTensorCount), 0.0);
}

std::size_t Parameters::offset(int tensor) const {
    std::size_t off = 0;
    for (int t = 0; t < tensor; ++t) {
        const auto [r, c] = tensor_shape(t, hidden_);
        off += static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    }
    return off;
}

std::vector<Parameters::TensorInfo> Parameters::tensors() const {
    std::vector<TensorInfo> out;
    for (int t = 0; t < kTensorCount; ++t) {
        const auto [r, c] = tensor_shape(t, hidden_);
        out.push_back({kTensorNames[t], r, c, offset(t)});
    }
    return out;
}

#define WEARAD_MATRIX_ACCESSOR(name, index)                                                       \
    MatrixView Parameters::name() {                                                               \
        const auto [r, c] = tensor_shape(index, hidden_);                                         \
        return {data_.data() + offset(index), r, c};                                              \
    }                                                                                             \
    ConstMatrixView Parameters::name() const {                                                    \
        const auto [r, c] = tensor_shape(index, hidden_);                                         \
        return {data_.data() + offset(index), r, c};                                              \
    }

#define WEARAD_VECTOR_ACCESSOR(name, index)                                                       \
    VectorView Parameters::name() {                                                               \
        return {data_.data() + offset(index), tensor_shape(index, hidden_).first};                \
    }                                                                                             \
    ConstVectorView Parameters::name() const {                                                    \
        return {data_.data() + offset(index), tensor_shape(index, hidden_).first};                \
    }

WEARAD_MATRIX_ACCESSOR(encoder_input_weights, 0)
WEARAD_MATRIX_ACCESSOR(encoder_recurrent_weights, 1)
WEARAD_VECTOR_ACCESSOR(encoder_bias, 2)
WEARAD_MATRIX_ACCESSOR(decoder_input_weights, 3)
WEARAD_MATRIX_ACCESSOR(decoder_recurrent_weights, 4)
WEARAD_VECTOR_ACCESSOR(decoder_bias, 5)
WEARAD_MATRIX_ACCESSOR(output_weights, 6)
WEARAD_VECTOR_ACCESSOR(output_bias, 7)

#undef WEARAD_MATRIX_ACCESSOR
#undef WEARAD_VECTOR_ACCESSOR

RowMatrix Parameters::encoder_gate_input_weights(Gate gate) const {
    return encoder_input_weights().middleRows(static_cast<int>(gate) * hidden_, hidden_);
}

void Parameters::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void TrainConfig::validate() const {
    if (hidden_size <= 0) {
        throw Error(fmt::format("hidden size must be positive, got {}", hidden_size));
    }
    if (!(learning_rate > 0.0) || batch_size < 1 || max_epochs < 1 || patience < 1 ||
        !(validation_fraction > 0.0 && validation_fraction < 1.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
        !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw Error("training configuration out of range");
    }
}

LstmAutoencoder init_model(const TrainConfig &config) {
    config.validate();
    LstmAutoencoder model;
    model.config = config;
    model.params = Parameters(config.hidden_size);
    Rng rng(derive_seed(config.seed, 0));
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
    for (auto &p : model.params.flat()) {
        p = rng.uniform(-bound, bound);
    }
    return model;
}

namespace kernels {

namespace {

using Mat = Eigen::MatrixXd;

struct StepCache {
    Mat h_prev, c_prev, i, f, g, o, tanh_c;
};

Mat gate_fn(const Mat &z, Activation act) {
    if (act == Activation::kLinear) {
        return z;
    }
    return (1.0 + (-z.array()).exp()).inverse().matrix();
}

Mat cell_fn(const Mat &z, Activation act) {
    if (act == Activation::kLinear) {
        return z;
    }
    return z.array().tanh().matrix();
}

// Derivatives expressed in terms of the activation outputs.
Mat gate_grad(const Mat &s, Activation act) {
    if (act == Activation::kLinear) {
        return Mat::Ones(s.rows(), s.cols());
    }
    return (s.array() * (1.0 - s.array())).matrix();
}

Mat cell_grad(const Mat &t, Activation act) {
    if (act == Activation::kLinear) {
        return Mat::Ones(t.rows(), t.cols());
    }
    return (1.0 - t.array().square()).matrix();
}

void step_forward(const Mat &z, int h, Activation act, StepCache &cache, Mat &hidden, Mat &cell) {
    cache.h_prev = hidden;
    cache.c_prev = cell;
    cache.i = gate_fn(z.topRows(h), act);
    cache.f = gate_fn(z.middleRows(h, h), act);
    cache.g = cell_fn(z.middleRows(2 * h, h), act);
    cache.o = gate_fn(z.bottomRows(h), act);
    cell = cache.f.cwiseProduct(cache.c_prev) + cache.i.cwiseProduct(cache.g);
    cache.tanh_c = cell_fn(cell, act);
    hidden = cache.o.cwiseProduct(cache.tanh_c);
}

// Consumes dH (w.r.t. this step's hidden output) and dC (w.r.t. this step's
// cell output); returns dZ and leaves dC holding the gradient w.r.t. c_prev.
Mat step_backward(const StepCache &cache, int h, Activation act, const Mat &d_hidden, Mat &d_cell) {
    const Mat d_o = d_hidden.cwiseProduct(cache.tanh_c);
    d_cell += d_hidden.cwiseProduct(cache.o).cwiseProduct(cell_grad(cache.tanh_c, act));
    Mat dz(4 * h, d_hidden.cols());
    dz.topRows(h) = d_cell.cwiseProduct(cache.g).cwiseProduct(gate_grad(cache.i, act));
    dz.middleRows(h, h) = d_cell.cwiseProduct(cache.c_prev).cwiseProduct(gate_grad(cache.f, act));
    dz.middleRows(2 * h, h) = d_cell.cwiseProduct(cache.i).cwiseProduct(cell_grad(cache.g, act));
    dz.bottomRows(h) = d_o.cwiseProduct(gate_grad(cache.o, act));
    d_cell = d_cell.cwiseProduct(cache.f).eval();
    return dz;
}

// Column-by-column accumulation: the summation order of rowwise().sum() into
// a mapped destination depends on the destination's alignment.
template <typename Dest> void add_column_sums(const Mat &m, Dest &&dest) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        dest += m.col(j);
    }
}

double run_chunk(const Parameters &params, Activation act, std::span<const WindowValues> windows,
                 Parameters *gradient, std::span<double> per_window_error,
                 std::span<WindowValues> reconstructions) {
    const int h = params.hidden_size();
    const auto b = static_cast<int>(windows.size());
    if (b == 0) {
        return 0.0;
    }

    std::array<Mat, kWindowDays> x;
    for (int t = 0; t < kWindowDays; ++t) {
        x[t].resize(kFeatureCount, b);
        for (int j = 0; j < b; ++j) {
            for (int f = 0; f < kFeatureCount; ++f) {
                x[t](f, j) = windows[static_cast<std::size_t>(j)](t, f);
            }
        }
    }

    const auto w_enc_x = params.encoder_input_weights();
    const auto w_enc_h = params.encoder_recurrent_weights();
    const auto b_enc = params.encoder_bias();
    const auto w_dec_h = params.decoder_recurrent_weights();
    const auto b_dec = params.decoder_bias();
    const auto w_out = params.output_weights();
    const auto b_out = params.output_bias();

    Mat hidden = Mat::Zero(h, b);
    Mat cell = Mat::Zero(h, b);
    std::array<StepCache, kWindowDays> enc;
    std::array<StepCache, kWindowDays> dec;
    std::array<Mat, kWindowDays> dec_h;
    Mat z;

    for (int t = 0; t < kWindowDays; ++t) {
        z.noalias() = w_enc_x * x[t];
        z.noalias() += w_enc_h * hidden;
        z.colwise() += b_enc;
        step_forward(z, h, act, enc[t], hidden, cell);
    }

    // Decoder step s reconstructs day (6 - s); its input is zero.
    std::array<Mat, kWindowDays> diff;
    for (int s = 0; s < kWindowDays; ++s) {
        z.noalias() = w_dec_h * hidden;
        z.colwise() += b_dec;
        step_forward(z, h, act, dec[s], hidden, cell);
        dec_h[s] = hidden;
        Mat y = w_out * hidden;
        y.colwise() += b_out;
        diff[s] = y - x[kWindowDays - 1 - s];
        if (!reconstructions.empty()) {
            for (int j = 0; j < b; ++j) {
                for (int f = 0; f < kFeatureCount; ++f) {
                    reconstructions[static_cast<std::size_t>(j)](kWindowDays - 1 - s, f) = y(f, j);
                }
            }
        }
    }

    double loss_sum = 0.0;
    for (int j = 0; j < b; ++j) {
        double sq = 0.0;
        for (int d = 0; d < kWindowDays; ++d) {
            const auto &df = diff[kWindowDays - 1 - d];
            for (int f = 0; f < kFeatureCount; ++f) {
                sq += df(f, j) * df(f, j);
            }
        }
        const double err = sq / kWindowCells;
        if (!per_window_error.empty()) {
            per_window_error[static_cast<std::size_t>(j)] = err;
        }
        loss_sum += err;
    }

    if (gradient == nullptr) {
        return loss_sum;
    }

    auto g_enc_x = gradient->encoder_input_weights();
    auto g_enc_h = gradient->encoder_recurrent_weights();
    auto g_enc_b = gradient->encoder_bias();
    auto g_dec_h = gradient->decoder_recurrent_weights();
    auto g_dec_b = gradient->decoder_bias();
    auto g_out = gradient->output_weights();
    auto g_out_b = gradient->output_bias();

    Mat d_hidden = Mat::Zero(h, b);
    Mat d_cell = Mat::Zero(h, b);
    constexpr double kScale = 2.0 / kWindowCells;
    for (int s = kWindowDays - 1; s >= 0; --s) {
        const Mat dy = kScale * diff[s];
        g_out.noalias() += dy * dec_h[s].transpose();
        add_column_sums(dy, g_out_b);
        d_hidden.noalias() += w_out.transpose() * dy;
        const Mat dz = step_backward(dec[s], h, act, d_hidden, d_cell);
        g_dec_h.noalias() += dz * dec[s].h_prev.transpose();
        add_column_sums(dz, g_dec_b);
        d_hidden.noalias() = w_dec_h.transpose() * dz;
    }
    for (int t = kWindowDays - 1; t >= 0; --t) {
        const Mat dz = step_backward(enc[t], h, act, d_hidden, d_cell);
        g_enc_x.noalias() += dz * x[t].transpose();
        g_enc_h.noalias() += dz * enc[t].h_prev.transpose();
        add_column_sums(dz, g_enc_b);
        d_hidden.noalias() = w_enc_h.transpose() * dz;
    }
    return loss_sum;
}

std::size_t chunk_count(std::size_t n) { return (n + kChunkWindows - 1) / kChunkWindows; }

} // namespace

double chunk_loss_and_gradient(const Parameters &params, Activation activation,
                               std::span<const WindowValues> windows, Parameters *gradient,
                               std::span<double> per_window_error) {
    return run_chunk(params, activation, windows, gradient, per_window_error, {});
}

LossAndGradient parallel_loss_and_gradient(const Parameters &params, Activation activation,
                                           std::span<const WindowValues> windows) {
    if (windows.empty()) {
        throw Error("gradient of an empty batch");
    }
    const std::size_t chunks = chunk_count(windows.size());
    std::vector<Parameters> grads(chunks, Parameters(params.hidden_size()));
    std::vector<double> losses(chunks, 0.0);
    const auto n_chunks = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
        const auto begin = static_cast<std::size_t>(c) * kChunkWindows;
        const auto len = std::min(kChunkWindows, windows.size() - begin);
        losses[static_cast<std::size_t>(c)] =
            run_chunk(params, activation, windows.subspan(begin, len),
                      &grads[static_cast<std::size_t>(c)], {}, {});
    }

    LossAndGradient out;
    out.gradient = std::move(grads[0]);
    double loss = losses[0];
    auto total = out.gradient.flat();
    for (std::size_t c = 1; c < chunks; ++c) {
        loss += losses[c];
        const auto part = grads[c].flat();
        for (std::size_t k = 0; k < total.size(); ++k) {
            total[k] += part[k];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(windows.size());
    for (auto &g : total) {
        g *= inv_n;
    }
    out.loss = loss * inv_n;
    return out;
}

std::vector<double> parallel_reconstruction_errors(const Parameters &params, Activation activation,
                                                   std::span<const WindowValues> windows) {
    std::vector<double> errors(windows.size(), 0.0);
    const auto n_chunks = static_cast<std::ptrdiff_t>(chunk_count(windows.size()));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < n_chunks; ++c) {
        const auto begin = static_cast<std::size_t>(c) * kChunkWindows;
        const auto len = std::min(kChunkWindows, windows.size() - begin);
        run_chunk(params, activation, windows.subspan(begin, len), nullptr,
                  std::span<double>(errors).subspan(begin, len), {});
    }
    return errors;
}

} // namespace kernels

namespace {

void require_finite(const WindowValues &window) {
    for (double v : window.cells) {
        if (!std::isfinite(v)) {
            throw Error("window contains a non-finite value");
        }
    }
}

} // namespace

WindowValues forward_reconstruct(const LstmAutoencoder &model, const WindowValues &window) {
    require_finite(window);
    WindowValues out;
    double err = 0.0;
    kernels::run_chunk(model.params, model.activation(), std::span<const WindowValues>(&window, 1),
                       nullptr, std::span<double>(&err, 1), std::span<WindowValues>(&out, 1));
    return out;
}

double reconstruction_error(const LstmAutoencoder &model, const WindowValues &window) {
    require_finite(window);
    double err = 0.0;
    kernels::run_chunk(model.params, model.activation(), std::span<const WindowValues>(&window, 1),
                       nullptr, std::span<double>(&err, 1), {});
    return err;
}

std::vector<double> reconstruction_errors(const LstmAutoencoder &model,
                                          std::span<const WindowValues> windows) {
    for (const auto &w : windows) {
        require_finite(w);
    }
    return kernels::parallel_reconstruction_errors(model.params, model.activation(), windows);
}

LossAndGradient backprop_grads(const LstmAutoencoder &model, std::span<const WindowValues> batch) {
    if (batch.empty()) {
        throw Error("backprop_grads needs a non-empty batch");
    }
    return kernels::parallel_loss_and_gradient(model.params, model.activation(), batch);
}

namespace {

double mean_of(std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

class Adam {
public:
    Adam(std::size_t n, const TrainConfig &config) : m_(n, 0.0), v_(n, 0.0), config_{config} {}

    void step(std::span<double> params, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, t_);
        const double c2 = 1.0 - std::pow(config_.beta2, t_);
        for (std::size_t k = 0; k < params.size(); ++k) {
            m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grad[k];
            v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
            const double m_hat = m_[k] / c1;
            const double v_hat = v_[k] / c2;
            params[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }

private:
    std::vector<double> m_;
    std::vector<double> v_;
    TrainConfig config_;
    int t_ = 0;
};

} // namespace

std::pair<LstmAutoencoder, TrainReport> train(std::span<const WindowValues> windows,
                                              const TrainConfig &config) {
    config.validate();
    if (windows.size() < 10) {
        throw Error(fmt::format("training needs at least 10 windows, got {}", windows.size()));
    }
    for (const auto &w : windows) {
        require_finite(w);
    }

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(derive_seed(config.seed, 1));
    split_rng.shuffle(std::span<std::size_t>(order));
    const auto n = static_cast<double>(windows.size());
    auto n_val = static_cast<std::size_t>(std::llround(n * config.validation_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, windows.size() - 1);

    std::vector<WindowValues> train_set;
    std::vector<WindowValues> val_set;
    for (std::size_t k = 0; k < order.size(); ++k) {
        (k < order.size() - n_val ? train_set : val_set).push_back(windows[order[k]]);
    }
    std::vector<std::size_t> val_indices(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());

    auto model = init_model(config);
    Parameters best = model.params;
    Adam adam(model.params.size(), config);
    Rng batch_rng(derive_seed(config.seed, 2));

    TrainReport report;
    report.train_windows = train_set.size();
    report.validation_windows = val_set.size();
    report.validation_indices = std::move(val_indices);
    report.best_validation_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> idx(train_set.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<WindowValues> batch;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        batch_rng.shuffle(std::span<std::size_t>(idx));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const auto stop = std::min(idx.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) {
                batch.push_back(train_set[idx[k]]);
            }
            auto lg = kernels::parallel_loss_and_gradient(model.params, config.activation, batch);
            loss_sum += lg.loss * static_cast<double>(batch.size());
            auto grad = lg.gradient.flat();
            if (config.clip_norm > 0.0) {
                double norm2 = 0.0;
                for (double g : grad) {
                    norm2 += g * g;
                }
                const double norm = std::sqrt(norm2);
                if (norm > config.clip_norm) {
                    for (auto &g : grad) {
                        g *= config.clip_norm / norm;
                    }
                }
            }
            adam.step(model.params.flat(), grad);
        }
        const auto val_errors =
            kernels::parallel_reconstruction_errors(model.params, config.activation, val_set);
        const double val_loss = mean_of(val_errors);
        report.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
        report.validation_loss.push_back(val_loss);
        report.epochs_run = epoch;
        if (val_loss < report.best_validation_loss) {
            report.best_validation_loss = val_loss;
            report.best_epoch = epoch;
            best = model.params;
        }
        if (epoch - report.best_epoch >= config.patience) {
            break;
        }
    }

    model.params = std::move(best);
    report.validation_errors =
        kernels::parallel_reconstruction_errors(model.params, config.activation, val_set);
    return {std::move(model), std::move(report)};
}

GradientCheckResult gradient_check(const LstmAutoencoder &model,
                                   std::span<const WindowValues> windows, double step,
                                   std::size_t min_coordinates, std::uint64_t seed) {
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw Error(fmt::format("finite-difference step must be positive, got {}", step));
    }
    if (windows.empty()) {
        throw Error("gradient check needs at least one window");
    }
    const auto analytic = backprop_grads(model, windows);
    const auto loss_at = [&](const Parameters &p) {
        return mean_of(kernels::parallel_reconstruction_errors(p, model.activation(), windows));
    };

    std::vector<std::size_t> coords(model.params.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > min_coordinates) {
        Rng rng(derive_seed(seed, 3));
        rng.shuffle(std::span<std::size_t>(coords));
        coords.resize(min_coordinates);
        std::sort(coords.begin(), coords.end());
    }

    GradientCheckResult result;
    Parameters probe = model.params;
    for (auto k : coords) {
        const double original = probe.flat()[k];
        probe.flat()[k] = original + step;
        const double up = loss_at(probe);
        probe.flat()[k] = original - step;
        const double down = loss_at(probe);
        probe.flat()[k] = original;
        const double numeric = (up - down) / (2.0 * step);
        const double exact = analytic.gradient.flat()[k];
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(exact - numeric) / denom);
        ++result.coordinates_checked;
    }
    return result;
}

} // namespace wearad

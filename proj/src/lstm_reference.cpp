// Scalar, one-window-at-a-time LSTM autoencoder. Slow; exists so the batched
// Eigen kernels have an independent implementation to be tested against.

#include "wearad/error.hpp"
#include "wearad/lstm_ae.hpp"

#include <cmath>

namespace wearad::reference {

namespace {

using Vec = std::vector<double>;

struct Step {
    Vec h_prev, c_prev, i, f, g, o, c, tanh_c;
};

double gate(double z, Activation a) { return a == Activation::kLinear ? z : 1.0 / (1.0 + std::exp(-z)); }
double cell(double z, Activation a) { return a == Activation::kLinear ? z : std::tanh(z); }
double gate_d(double s, Activation a) { return a == Activation::kLinear ? 1.0 : s * (1.0 - s); }
double cell_d(double t, Activation a) { return a == Activation::kLinear ? 1.0 : 1.0 - t * t; }

struct Weights {
    const double *wx; // 4H x 3 (may be null for the decoder)
    const double *wh; // 4H x H
    const double *b;  // 4H
};

Step lstm_step(const Weights &w, int h, Activation act, const double *x, const Vec &h_prev,
               const Vec &c_prev) {
    Step s;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    Vec z(static_cast<std::size_t>(4 * h));
    for (int r = 0; r < 4 * h; ++r) {
        double acc = w.b[r];
        if (w.wx != nullptr && x != nullptr) {
            for (int f = 0; f < kFeatureCount; ++f) {
                acc += w.wx[r * kFeatureCount + f] * x[f];
            }
        }
        for (int k = 0; k < h; ++k) {
            acc += w.wh[r * h + k] * h_prev[static_cast<std::size_t>(k)];
        }
        z[static_cast<std::size_t>(r)] = acc;
    }
    const auto n = static_cast<std::size_t>(h);
    s.i.resize(n);
    s.f.resize(n);
    s.g.resize(n);
    s.o.resize(n);
    s.c.resize(n);
    s.tanh_c.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        s.i[k] = gate(z[k], act);
        s.f[k] = gate(z[n + k], act);
        s.g[k] = cell(z[2 * n + k], act);
        s.o[k] = gate(z[3 * n + k], act);
        s.c[k] = s.f[k] * c_prev[k] + s.i[k] * s.g[k];
        s.tanh_c[k] = cell(s.c[k], act);
    }
    return s;
}

Vec hidden_of(const Step &s) {
    Vec out(s.o.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = s.o[k] * s.tanh_c[k];
    }
    return out;
}

struct Trace {
    std::array<Step, kWindowDays> enc;
    std::array<Step, kWindowDays> dec;
    WindowValues recon;
};

Trace run(const Parameters &params, Activation act, const WindowValues &window) {
    const int h = params.hidden_size();
    const Weights enc{params.encoder_input_weights().data(), params.encoder_recurrent_weights().data(),
                      params.encoder_bias().data()};
    const Weights dec{nullptr, params.decoder_recurrent_weights().data(), params.decoder_bias().data()};
    const double *wo = params.output_weights().data();
    const double *bo = params.output_bias().data();

    Trace tr;
    Vec hv(static_cast<std::size_t>(h), 0.0);
    Vec cv(static_cast<std::size_t>(h), 0.0);
    for (int t = 0; t < kWindowDays; ++t) {
        tr.enc[t] = lstm_step(enc, h, act, &window.cells[static_cast<std::size_t>(t * kFeatureCount)], hv, cv);
        hv = hidden_of(tr.enc[t]);
        cv = tr.enc[t].c;
    }
    for (int s = 0; s < kWindowDays; ++s) {
        tr.dec[s] = lstm_step(dec, h, act, nullptr, hv, cv);
        hv = hidden_of(tr.dec[s]);
        cv = tr.dec[s].c;
        for (int f = 0; f < kFeatureCount; ++f) {
            double y = bo[f];
            for (int k = 0; k < h; ++k) {
                y += wo[f * h + k] * hv[static_cast<std::size_t>(k)];
            }
            tr.recon(kWindowDays - 1 - s, f) = y;
        }
    }
    return tr;
}

double mse(const WindowValues &a, const WindowValues &b) {
    double sq = 0.0;
    for (int k = 0; k < kWindowCells; ++k) {
        const double d = a.cells[static_cast<std::size_t>(k)] - b.cells[static_cast<std::size_t>(k)];
        sq += d * d;
    }
    return sq / kWindowCells;
}

// Backward through one step. dh/dc enter as gradients w.r.t. this step's h and
// c outputs and leave as gradients w.r.t. h_prev and c_prev.
void step_back(const Step &s, int h, Activation act, const double *x, double *gwx, double *gwh,
               double *gb, const double *wh, Vec &dh, Vec &dc) {
    const auto n = static_cast<std::size_t>(h);
    Vec dz(4 * n);
    for (std::size_t k = 0; k < n; ++k) {
        const double d_o = dh[k] * s.tanh_c[k];
        dc[k] += dh[k] * s.o[k] * cell_d(s.tanh_c[k], act);
        dz[k] = dc[k] * s.g[k] * gate_d(s.i[k], act);
        dz[n + k] = dc[k] * s.c_prev[k] * gate_d(s.f[k], act);
        dz[2 * n + k] = dc[k] * s.i[k] * cell_d(s.g[k], act);
        dz[3 * n + k] = d_o * gate_d(s.o[k], act);
        dc[k] *= s.f[k];
    }
    Vec dh_prev(n, 0.0);
    for (std::size_t r = 0; r < 4 * n; ++r) {
        gb[r] += dz[r];
        if (gwx != nullptr) {
            for (int f = 0; f < kFeatureCount; ++f) {
                gwx[r * kFeatureCount + static_cast<std::size_t>(f)] += dz[r] * x[f];
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            gwh[r * n + k] += dz[r] * s.h_prev[k];
            dh_prev[k] += wh[r * n + k] * dz[r];
        }
    }
    dh = std::move(dh_prev);
}

} // namespace

WindowValues forward_reconstruct(const Parameters &params, Activation activation,
                                 const WindowValues &window) {
    return run(params, activation, window).recon;
}

double reconstruction_error(const Parameters &params, Activation activation,
                            const WindowValues &window) {
    return mse(run(params, activation, window).recon, window);
}

std::vector<double> reconstruction_errors(const Parameters &params, Activation activation,
                                          std::span<const WindowValues> windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto &w : windows) {
        out.push_back(reconstruction_error(params, activation, w));
    }
    return out;
}

LossAndGradient loss_and_gradient(const Parameters &params, Activation activation,
                                  std::span<const WindowValues> windows) {
    if (windows.empty()) {
        throw Error("gradient of an empty batch");
    }
    const int h = params.hidden_size();
    const auto n = static_cast<std::size_t>(h);
    LossAndGradient out;
    out.gradient = Parameters(h);
    auto &g = out.gradient;
    const double scale = 1.0 / static_cast<double>(windows.size());
    const double *wo = params.output_weights().data();

    for (const auto &w : windows) {
        const auto tr = run(params, activation, w);
        out.loss += mse(tr.recon, w) * scale;

        Vec dh(n, 0.0);
        Vec dc(n, 0.0);
        for (int s = kWindowDays - 1; s >= 0; --s) {
            const int day = kWindowDays - 1 - s;
            const Vec hv = hidden_of(tr.dec[s]);
            for (int f = 0; f < kFeatureCount; ++f) {
                const double dy = scale * 2.0 / kWindowCells * (tr.recon(day, f) - w(day, f));
                g.output_bias()(f) += dy;
                for (std::size_t k = 0; k < n; ++k) {
                    g.output_weights()(f, static_cast<int>(k)) += dy * hv[k];
                    dh[k] += wo[static_cast<std::size_t>(f) * n + k] * dy;
                }
            }
            step_back(tr.dec[s], h, activation, nullptr, nullptr,
                      g.decoder_recurrent_weights().data(), g.decoder_bias().data(),
                      params.decoder_recurrent_weights().data(), dh, dc);
        }
        for (int t = kWindowDays - 1; t >= 0; --t) {
            step_back(tr.enc[t], h, activation, &w.cells[static_cast<std::size_t>(t * kFeatureCount)],
                      g.encoder_input_weights().data(), g.encoder_recurrent_weights().data(),
                      g.encoder_bias().data(), params.encoder_recurrent_weights().data(), dh, dc);
        }
    }
    return out;
}

} // namespace wearad::reference

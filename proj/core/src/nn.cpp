#include "zorl/nn.hpp"

#include "zorl/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace zorl::nn {

namespace {

DataShape shape_after(const LayerSpec& layer, const DataShape& in) {
    return std::visit(
        [&](const auto& l) -> DataShape {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseSpec>) {
                if (!in.flat || in.size() != l.in)
                    throw std::invalid_argument("dense layer: input shape mismatch");
                return DataShape::flat_width(l.out);
            } else if constexpr (std::is_same_v<T, Conv1dSpec>) {
                if (in.flat || in.channels != l.in_channels)
                    throw std::invalid_argument("conv1d layer: input shape mismatch");
                if (in.length < l.kernel || l.stride == 0)
                    throw std::invalid_argument("conv1d layer: kernel exceeds input length");
                return DataShape::image(l.out_channels, (in.length - l.kernel) / l.stride + 1);
            } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
                if (in.size() != l.width)
                    throw std::invalid_argument("batchnorm layer: width mismatch");
                return in;
            } else if constexpr (std::is_same_v<T, ActivationSpec>) {
                return in;
            } else {
                return DataShape::flat_width(in.size());
            }
        },
        layer);
}

double activate(Act kind, double x) {
    return kind == Act::relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

double activate_grad(Act kind, double x) {
    if (kind == Act::relu) return x > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(x);
    return 1.0 - t * t;
}

} // namespace

DataShape NetworkSpec::output_shape() const {
    DataShape shape = input;
    for (const auto& layer : layers) shape = shape_after(layer, shape);
    return shape;
}

NetworkParameters init_parameters(const NetworkSpec& spec, RngStream& rng, const InitOptions& opts) {
    spec.output_shape(); // validate composition up front
    NetworkParameters params;
    params.layers.resize(spec.layers.size());

    // Index of the last dense layer, for the reduced-scale output init.
    std::size_t last_dense = spec.layers.size();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (std::holds_alternative<DenseSpec>(spec.layers[i])) last_dense = i;
    }

    auto uniform = [&](double bound) { return (2.0 * rng.next_uniform() - 1.0) * bound; };

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerParams& lp = params.layers[i];
        if (const auto* d = std::get_if<DenseSpec>(&spec.layers[i])) {
            const double scale = (i == last_dense) ? opts.final_dense_scale : 1.0;
            const double bound = scale / std::sqrt(static_cast<double>(d->in));
            lp.weights.resize(d->out * d->in);
            lp.bias.resize(d->out);
            for (auto& w : lp.weights) w = uniform(bound);
            for (auto& b : lp.bias) b = uniform(bound);
        } else if (const auto* c = std::get_if<Conv1dSpec>(&spec.layers[i])) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(c->in_channels * c->kernel));
            lp.weights.resize(c->out_channels * c->in_channels * c->kernel);
            lp.bias.resize(c->out_channels);
            for (auto& w : lp.weights) w = uniform(bound);
            for (auto& b : lp.bias) b = uniform(bound);
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&spec.layers[i])) {
            lp.gamma.assign(bn->width, 1.0);
            lp.beta.assign(bn->width, 0.0);
            lp.running_mean.assign(bn->width, 0.0);
            lp.running_var.assign(bn->width, 1.0);
        }
    }
    return params;
}

Batch Batch::zeros(std::size_t n, DataShape shape) {
    return Batch{n, shape, std::vector<double>(n * shape.size(), 0.0)};
}

Batch Batch::single(const Vector& v, DataShape shape) {
    if (v.size() != shape.size()) throw std::invalid_argument("Batch::single: size mismatch");
    return Batch{1, shape, v.values()};
}

namespace {

// Shared forward walk. `mutable_params` is non-null only in train mode.
Batch run_forward(const NetworkSpec& spec, const NetworkParameters& params, const Batch& input, Mode mode,
                  ForwardTape* tape, NetworkParameters* mutable_params) {
    if (input.n == 0) throw std::invalid_argument("forward: empty batch");
    if (input.shape.size() != spec.input.size() || input.shape.flat != spec.input.flat)
        throw std::invalid_argument("forward: input shape mismatch");
    if (params.layers.size() != spec.layers.size())
        throw std::invalid_argument("forward: parameter/spec layer count mismatch");

    bool touched_running_stats = false;
    Batch cur = input;
    cur.shape = spec.input;
    if (tape) {
        tape->mode = mode;
        tape->layers.clear();
        tape->layers.resize(spec.layers.size());
    }

    DataShape shape = spec.input;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        if (tape) tape->layers[li].input = cur;
        const LayerParams& lp = params.layers[li];
        const DataShape out_shape = shape_after(spec.layers[li], shape);

        if (const auto* d = std::get_if<DenseSpec>(&spec.layers[li])) {
            Batch out = Batch::zeros(cur.n, out_shape);
            for (std::size_t n = 0; n < cur.n; ++n) {
                const double* x = cur.data.data() + n * d->in;
                double* y = out.data.data() + n * d->out;
                for (std::size_t o = 0; o < d->out; ++o) {
                    const double* w = lp.weights.data() + o * d->in;
                    double s = lp.bias[o];
                    for (std::size_t i = 0; i < d->in; ++i) s += w[i] * x[i];
                    y[o] = s;
                }
            }
            cur = std::move(out);
        } else if (const auto* c = std::get_if<Conv1dSpec>(&spec.layers[li])) {
            const std::size_t L = shape.length, OL = out_shape.length;
            Batch out = Batch::zeros(cur.n, out_shape);
            for (std::size_t n = 0; n < cur.n; ++n) {
                const double* x = cur.data.data() + n * shape.size();
                double* y = out.data.data() + n * out_shape.size();
                for (std::size_t oc = 0; oc < c->out_channels; ++oc) {
                    for (std::size_t ol = 0; ol < OL; ++ol) {
                        double s = lp.bias[oc];
                        for (std::size_t ic = 0; ic < c->in_channels; ++ic) {
                            const double* w = lp.weights.data() + (oc * c->in_channels + ic) * c->kernel;
                            const double* xi = x + ic * L + ol * c->stride;
                            for (std::size_t k = 0; k < c->kernel; ++k) s += w[k] * xi[k];
                        }
                        y[oc * OL + ol] = s;
                    }
                }
            }
            cur = std::move(out);
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&spec.layers[li])) {
            const std::size_t W = bn->width;
            Batch out = Batch::zeros(cur.n, out_shape);
            if (mode == Mode::train) {
                std::vector<double> mean(W, 0.0), var(W, 0.0);
                for (std::size_t n = 0; n < cur.n; ++n)
                    for (std::size_t f = 0; f < W; ++f) mean[f] += cur.at(n, f);
                for (double& m : mean) m /= static_cast<double>(cur.n);
                for (std::size_t n = 0; n < cur.n; ++n)
                    for (std::size_t f = 0; f < W; ++f) {
                        const double dev = cur.at(n, f) - mean[f];
                        var[f] += dev * dev;
                    }
                for (double& v : var) v /= static_cast<double>(cur.n);
                for (std::size_t n = 0; n < cur.n; ++n)
                    for (std::size_t f = 0; f < W; ++f) {
                        const double xhat = (cur.at(n, f) - mean[f]) / std::sqrt(var[f] + bn->eps);
                        out.at(n, f) = lp.gamma[f] * xhat + lp.beta[f];
                    }
                if (tape) {
                    tape->layers[li].batch_mean = mean;
                    tape->layers[li].batch_var = var;
                }
                if (mutable_params) {
                    LayerParams& mp = mutable_params->layers[li];
                    for (std::size_t f = 0; f < W; ++f) {
                        mp.running_mean[f] = (1.0 - bn->momentum) * mp.running_mean[f] + bn->momentum * mean[f];
                        mp.running_var[f] = (1.0 - bn->momentum) * mp.running_var[f] + bn->momentum * var[f];
                    }
                    touched_running_stats = true;
                }
            } else {
                for (std::size_t n = 0; n < cur.n; ++n)
                    for (std::size_t f = 0; f < W; ++f) {
                        const double xhat = (cur.at(n, f) - lp.running_mean[f]) / std::sqrt(lp.running_var[f] + bn->eps);
                        out.at(n, f) = lp.gamma[f] * xhat + lp.beta[f];
                    }
            }
            cur = std::move(out);
        } else if (const auto* a = std::get_if<ActivationSpec>(&spec.layers[li])) {
            Batch out = cur;
            for (double& v : out.data) v = activate(a->kind, v);
            out.shape = out_shape;
            cur = std::move(out);
        } else {
            cur.shape = out_shape; // flatten: same buffer, flat view
        }
        shape = out_shape;
    }

    if (mutable_params && touched_running_stats) ++mutable_params->revision;
    if (tape) tape->params_revision = params.revision;
    return cur;
}

} // namespace

Batch forward_eval(const NetworkSpec& spec, const NetworkParameters& params, const Batch& input, ForwardTape* tape) {
    return run_forward(spec, params, input, Mode::eval, tape, nullptr);
}

Batch forward_train(const NetworkSpec& spec, NetworkParameters& params, const Batch& input, ForwardTape& tape) {
    return run_forward(spec, params, input, Mode::train, &tape, &params);
}

Gradients zero_gradients(const NetworkSpec& spec, const NetworkParameters& params) {
    Gradients grads(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const LayerParams& lp = params.layers[i];
        grads[i].weights.assign(lp.weights.size(), 0.0);
        grads[i].bias.assign(lp.bias.size(), 0.0);
        grads[i].gamma.assign(lp.gamma.size(), 0.0);
        grads[i].beta.assign(lp.beta.size(), 0.0);
    }
    (void)spec;
    return grads;
}

Gradients backward(const NetworkSpec& spec, const NetworkParameters& params, const ForwardTape& tape,
                   const Batch& upstream, Batch* input_grads) {
    if (tape.params_revision != params.revision)
        throw std::invalid_argument("backward: stale tape (parameters changed since forward)");
    if (tape.layers.size() != spec.layers.size())
        throw std::invalid_argument("backward: tape/spec layer count mismatch");
    if (upstream.shape.size() != spec.output_size())
        throw std::invalid_argument("backward: upstream gradient shape mismatch");

    Gradients grads = zero_gradients(spec, params);
    Batch up = upstream;

    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const Batch& x = tape.layers[li].input;
        const LayerParams& lp = params.layers[li];
        LayerParams& g = grads[li];

        if (const auto* d = std::get_if<DenseSpec>(&spec.layers[li])) {
            Batch down = Batch::zeros(x.n, x.shape);
            for (std::size_t n = 0; n < x.n; ++n) {
                const double* xn = x.data.data() + n * d->in;
                const double* un = up.data.data() + n * d->out;
                double* dn = down.data.data() + n * d->in;
                for (std::size_t o = 0; o < d->out; ++o) {
                    const double uo = un[o];
                    g.bias[o] += uo;
                    double* gw = g.weights.data() + o * d->in;
                    const double* w = lp.weights.data() + o * d->in;
                    for (std::size_t i = 0; i < d->in; ++i) {
                        gw[i] += uo * xn[i];
                        dn[i] += w[i] * uo;
                    }
                }
            }
            up = std::move(down);
        } else if (const auto* c = std::get_if<Conv1dSpec>(&spec.layers[li])) {
            const std::size_t L = x.shape.length;
            const std::size_t OL = (L - c->kernel) / c->stride + 1;
            Batch down = Batch::zeros(x.n, x.shape);
            for (std::size_t n = 0; n < x.n; ++n) {
                const double* xn = x.data.data() + n * x.shape.size();
                const double* un = up.data.data() + n * c->out_channels * OL;
                double* dn = down.data.data() + n * x.shape.size();
                for (std::size_t oc = 0; oc < c->out_channels; ++oc) {
                    for (std::size_t ol = 0; ol < OL; ++ol) {
                        const double uo = un[oc * OL + ol];
                        g.bias[oc] += uo;
                        for (std::size_t ic = 0; ic < c->in_channels; ++ic) {
                            double* gw = g.weights.data() + (oc * c->in_channels + ic) * c->kernel;
                            const double* w = lp.weights.data() + (oc * c->in_channels + ic) * c->kernel;
                            const std::size_t base = ic * L + ol * c->stride;
                            for (std::size_t k = 0; k < c->kernel; ++k) {
                                gw[k] += uo * xn[base + k];
                                dn[base + k] += w[k] * uo;
                            }
                        }
                    }
                }
            }
            up = std::move(down);
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&spec.layers[li])) {
            const std::size_t W = bn->width;
            const double N = static_cast<double>(x.n);
            Batch down = Batch::zeros(x.n, x.shape);
            if (tape.mode == Mode::train) {
                const auto& mean = tape.layers[li].batch_mean;
                const auto& var = tape.layers[li].batch_var;
                for (std::size_t f = 0; f < W; ++f) {
                    const double inv_std = 1.0 / std::sqrt(var[f] + bn->eps);
                    double dvar = 0.0, dmean = 0.0, sum_dev = 0.0;
                    for (std::size_t n = 0; n < x.n; ++n) {
                        const double dev = x.at(n, f) - mean[f];
                        const double dxhat = up.at(n, f) * lp.gamma[f];
                        g.gamma[f] += up.at(n, f) * dev * inv_std;
                        g.beta[f] += up.at(n, f);
                        dvar += dxhat * dev;
                        dmean += dxhat;
                        sum_dev += dev;
                    }
                    dvar *= -0.5 * inv_std * inv_std * inv_std;
                    dmean = -dmean * inv_std + dvar * (-2.0 * sum_dev / N);
                    for (std::size_t n = 0; n < x.n; ++n) {
                        const double dev = x.at(n, f) - mean[f];
                        const double dxhat = up.at(n, f) * lp.gamma[f];
                        down.at(n, f) = dxhat * inv_std + dvar * 2.0 * dev / N + dmean / N;
                    }
                }
            } else {
                for (std::size_t f = 0; f < W; ++f) {
                    const double inv_std = 1.0 / std::sqrt(lp.running_var[f] + bn->eps);
                    for (std::size_t n = 0; n < x.n; ++n) {
                        const double xhat = (x.at(n, f) - lp.running_mean[f]) * inv_std;
                        g.gamma[f] += up.at(n, f) * xhat;
                        g.beta[f] += up.at(n, f);
                        down.at(n, f) = up.at(n, f) * lp.gamma[f] * inv_std;
                    }
                }
            }
            up = std::move(down);
        } else if (const auto* a = std::get_if<ActivationSpec>(&spec.layers[li])) {
            Batch down = Batch::zeros(x.n, x.shape);
            for (std::size_t i = 0; i < x.data.size(); ++i)
                down.data[i] = up.data[i] * activate_grad(a->kind, x.data[i]);
            up = std::move(down);
        } else {
            up.shape = x.shape; // flatten: reshape only
        }
    }

    if (input_grads) *input_grads = std::move(up);
    return grads;
}

AdamState make_adam_state(const NetworkParameters& params) {
    AdamState st;
    st.m.resize(params.layers.size());
    st.v.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const LayerParams& lp = params.layers[i];
        for (auto* side : {&st.m[i], &st.v[i]}) {
            side->weights.assign(lp.weights.size(), 0.0);
            side->bias.assign(lp.bias.size(), 0.0);
            side->gamma.assign(lp.gamma.size(), 0.0);
            side->beta.assign(lp.beta.size(), 0.0);
        }
    }
    return st;
}

namespace {

void adam_tensor(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, double lr, double b1, double b2, double eps, double b1t, double b2t) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m[i] / (1.0 - b1t);
        const double vhat = v[i] / (1.0 - b2t);
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

void adam_update_net(NetworkParameters& params, const Gradients& grads, AdamState& state, double lr,
                     double beta1, double beta2, double eps) {
    if (grads.size() != params.layers.size()) throw std::invalid_argument("adam_update_net: shape mismatch");
    ++state.t;
    const double b1t = std::pow(beta1, static_cast<double>(state.t));
    const double b2t = std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        LayerParams& lp = params.layers[i];
        adam_tensor(lp.weights, grads[i].weights, state.m[i].weights, state.v[i].weights, lr, beta1, beta2, eps, b1t, b2t);
        adam_tensor(lp.bias, grads[i].bias, state.m[i].bias, state.v[i].bias, lr, beta1, beta2, eps, b1t, b2t);
        adam_tensor(lp.gamma, grads[i].gamma, state.m[i].gamma, state.v[i].gamma, lr, beta1, beta2, eps, b1t, b2t);
        adam_tensor(lp.beta, grads[i].beta, state.m[i].beta, state.v[i].beta, lr, beta1, beta2, eps, b1t, b2t);
    }
    ++params.revision;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::array<char, 7> kMagic = {'Z', 'O', 'R', 'L', 'N', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

struct Writer {
    std::vector<std::uint8_t> bytes;
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        u64(bits);
    }
    void tensor(const std::vector<double>& t) {
        u64(t.size());
        for (double v : t) f64(v);
    }
};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw DataError("network payload truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::vector<double> tensor() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> t(n);
        for (auto& v : t) v = f64();
        return t;
    }
};

} // namespace

std::vector<std::uint8_t> serialize(const NetworkSpec& spec, const NetworkParameters& params) {
    Writer body;
    body.u32(static_cast<std::uint32_t>(spec.input.channels));
    body.u32(static_cast<std::uint32_t>(spec.input.length));
    body.u8(spec.input.flat ? 1 : 0);
    body.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (const auto& layer : spec.layers) {
        if (const auto* d = std::get_if<DenseSpec>(&layer)) {
            body.u8(0);
            body.u32(static_cast<std::uint32_t>(d->in));
            body.u32(static_cast<std::uint32_t>(d->out));
        } else if (const auto* c = std::get_if<Conv1dSpec>(&layer)) {
            body.u8(1);
            body.u32(static_cast<std::uint32_t>(c->in_channels));
            body.u32(static_cast<std::uint32_t>(c->out_channels));
            body.u32(static_cast<std::uint32_t>(c->kernel));
            body.u32(static_cast<std::uint32_t>(c->stride));
        } else if (const auto* bn = std::get_if<BatchNormSpec>(&layer)) {
            body.u8(2);
            body.u32(static_cast<std::uint32_t>(bn->width));
            body.f64(bn->momentum);
            body.f64(bn->eps);
        } else if (const auto* a = std::get_if<ActivationSpec>(&layer)) {
            body.u8(3);
            body.u8(static_cast<std::uint8_t>(a->kind));
        } else {
            body.u8(4);
        }
    }
    for (const auto& lp : params.layers) {
        body.tensor(lp.weights);
        body.tensor(lp.bias);
        body.tensor(lp.gamma);
        body.tensor(lp.beta);
        body.tensor(lp.running_mean);
        body.tensor(lp.running_var);
    }

    Writer out;
    out.bytes.insert(out.bytes.end(), kMagic.begin(), kMagic.end());
    out.u32(kVersion);
    out.bytes.insert(out.bytes.end(), body.bytes.begin(), body.bytes.end());
    out.u32(crc32(body.bytes.data(), body.bytes.size()));
    return out.bytes;
}

std::pair<NetworkSpec, NetworkParameters> deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kMagic.size() + 8 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin(),
                                                        [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
        throw DataError("not a zorl network file (bad magic)");

    Reader header{bytes, kMagic.size()};
    const std::uint32_t version = header.u32();
    if (version != kVersion)
        throw DataError("unsupported network format version " + std::to_string(version));

    // Body is everything between the header and the trailing CRC.
    const std::size_t body_start = header.pos;
    if (bytes.size() < body_start + 4) throw DataError("network payload truncated");
    const std::size_t body_len = bytes.size() - body_start - 4;
    const std::uint32_t stored_crc = [&] {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[body_start + body_len + i]) << (8 * i);
        return v;
    }();
    if (crc32(bytes.data() + body_start, body_len) != stored_crc)
        throw DataError("network payload checksum failure");

    Reader r{bytes, body_start};
    NetworkSpec spec;
    spec.input.channels = r.u32();
    spec.input.length = r.u32();
    spec.input.flat = r.u8() != 0;
    const std::uint32_t n_layers = r.u32();
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        switch (r.u8()) {
            case 0: {
                DenseSpec d;
                d.in = r.u32();
                d.out = r.u32();
                spec.layers.emplace_back(d);
                break;
            }
            case 1: {
                Conv1dSpec c;
                c.in_channels = r.u32();
                c.out_channels = r.u32();
                c.kernel = r.u32();
                c.stride = r.u32();
                spec.layers.emplace_back(c);
                break;
            }
            case 2: {
                BatchNormSpec bn;
                bn.width = r.u32();
                bn.momentum = r.f64();
                bn.eps = r.f64();
                spec.layers.emplace_back(bn);
                break;
            }
            case 3: {
                ActivationSpec a;
                a.kind = static_cast<Act>(r.u8());
                spec.layers.emplace_back(a);
                break;
            }
            case 4:
                spec.layers.emplace_back(FlattenSpec{});
                break;
            default:
                throw DataError("unknown layer tag in network payload");
        }
    }
    NetworkParameters params;
    params.layers.resize(n_layers);
    for (auto& lp : params.layers) {
        lp.weights = r.tensor();
        lp.bias = r.tensor();
        lp.gamma = r.tensor();
        lp.beta = r.tensor();
        lp.running_mean = r.tensor();
        lp.running_var = r.tensor();
    }
    return {std::move(spec), std::move(params)};
}

void save_network(const std::filesystem::path& path, const NetworkSpec& spec, const NetworkParameters& params) {
    const auto bytes = serialize(spec, params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

std::pair<NetworkSpec, NetworkParameters> load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

Vector Network::eval(const Vector& input) const {
    const Batch out = forward_eval(spec, params, Batch::single(input, spec.input));
    return Vector(out.data);
}

} // namespace zorl::nn

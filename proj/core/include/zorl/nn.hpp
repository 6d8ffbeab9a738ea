#pragma once

#include "zorl/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

namespace zorl::nn {

/// Shape of one sample flowing through the network. Convolutional tensors are
/// (channels, length); flat tensors are width-`channels` with length 1.
struct DataShape {
    std::size_t channels = 0;
    std::size_t length = 1;
    bool flat = true;

    std::size_t size() const { return channels * length; }
    static DataShape flat_width(std::size_t w) { return DataShape{w, 1, true}; }
    static DataShape image(std::size_t channels, std::size_t length) { return DataShape{channels, length, false}; }
    bool operator==(const DataShape&) const = default;
};

struct DenseSpec {
    std::size_t in = 0, out = 0;
    bool operator==(const DenseSpec&) const = default;
};
struct Conv1dSpec {
    std::size_t in_channels = 0, out_channels = 0, kernel = 1, stride = 1;
    bool operator==(const Conv1dSpec&) const = default;
};
struct BatchNormSpec {
    std::size_t width = 0;
    double momentum = 0.1;
    double eps = 1e-5;
    bool operator==(const BatchNormSpec&) const = default;
};
enum class Act : std::uint8_t { relu = 0, tanh = 1 };
struct ActivationSpec {
    Act kind = Act::relu;
    bool operator==(const ActivationSpec&) const = default;
};
struct FlattenSpec {
    bool operator==(const FlattenSpec&) const = default;
};

using LayerSpec = std::variant<DenseSpec, Conv1dSpec, BatchNormSpec, ActivationSpec, FlattenSpec>;

/// Layer stack plus the input shape. validate() checks that adjacent shapes
/// compose and returns the output shape.
struct NetworkSpec {
    DataShape input;
    std::vector<LayerSpec> layers;

    DataShape output_shape() const; // throws std::invalid_argument if shapes do not compose
    std::size_t output_size() const { return output_shape().size(); }
    bool operator==(const NetworkSpec&) const = default;
};

/// Parameter tensors for one layer. Dense/conv use weights+bias; batchnorm
/// uses gamma/beta plus running statistics. Unused slots stay empty.
struct LayerParams {
    std::vector<double> weights;
    std::vector<double> bias;
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;

    bool operator==(const LayerParams&) const = default;
};

struct NetworkParameters {
    std::vector<LayerParams> layers;
    /// Bumped on every parameter mutation; tapes are valid only for the
    /// revision they were recorded against.
    std::uint64_t revision = 0;

    bool same_values(const NetworkParameters& other) const { return layers == other.layers; }
};

struct InitOptions {
    /// Extra scale applied to the final dense layer's weights and bias
    /// (near-zero outputs at the start when < 1).
    double final_dense_scale = 1.0;
};

/// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
NetworkParameters init_parameters(const NetworkSpec& spec, RngStream& rng, const InitOptions& opts = {});

/// A batch of samples, row-major: sample, then channel, then position.
struct Batch {
    std::size_t n = 0;
    DataShape shape;
    std::vector<double> data;

    static Batch zeros(std::size_t n, DataShape shape);
    static Batch single(const Vector& v, DataShape shape);
    double& at(std::size_t sample, std::size_t feature) { return data[sample * shape.size() + feature]; }
    const double& at(std::size_t sample, std::size_t feature) const { return data[sample * shape.size() + feature]; }
};

enum class Mode { train, eval };

/// Per-layer cache from one forward pass; consumed by backward().
struct ForwardTape {
    std::uint64_t params_revision = 0;
    Mode mode = Mode::eval;
    struct LayerTape {
        Batch input;
        std::vector<double> batch_mean; // batchnorm, train mode
        std::vector<double> batch_var;
    };
    std::vector<LayerTape> layers;
};

/// Eval-mode forward: pure function of (params, input), mutates nothing.
/// A tape may still be recorded to differentiate through frozen statistics.
Batch forward_eval(const NetworkSpec& spec, const NetworkParameters& params, const Batch& input,
                   ForwardTape* tape = nullptr);

/// Train-mode forward: batchnorm uses batch statistics and updates running
/// averages in `params`.
Batch forward_train(const NetworkSpec& spec, NetworkParameters& params, const Batch& input, ForwardTape& tape);

using Gradients = std::vector<LayerParams>;

/// Exact gradients for the scalar loss implied by `upstream`. Returns per-layer
/// parameter gradients; when `input_grads` is non-null it receives d(loss)/d(input).
/// Throws std::invalid_argument on a stale tape (parameters changed since forward).
Gradients backward(const NetworkSpec& spec, const NetworkParameters& params, const ForwardTape& tape,
                   const Batch& upstream, Batch* input_grads = nullptr);

Gradients zero_gradients(const NetworkSpec& spec, const NetworkParameters& params);

struct AdamState {
    std::vector<LayerParams> m;
    std::vector<LayerParams> v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(const NetworkParameters& params);

/// Standard Adam with bias correction, applied tensor-wise.
void adam_update_net(NetworkParameters& params, const Gradients& grads, AdamState& state, double lr,
                     double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Binary parameter format: magic "ZORLNN1", little-endian, versioned header,
/// spec block followed by a CRC32-checksummed parameter block.
std::vector<std::uint8_t> serialize(const NetworkSpec& spec, const NetworkParameters& params);
std::pair<NetworkSpec, NetworkParameters> deserialize(const std::vector<std::uint8_t>& bytes);

void save_network(const std::filesystem::path& path, const NetworkSpec& spec, const NetworkParameters& params);
std::pair<NetworkSpec, NetworkParameters> load_network(const std::filesystem::path& path);

/// Spec and parameters travelling together.
struct Network {
    NetworkSpec spec;
    NetworkParameters params;

    /// Single-sample eval-mode forward pass.
    Vector eval(const Vector& input) const;
};

} // namespace zorl::nn

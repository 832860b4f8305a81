#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "covdet/geometry.hpp"
#include "covdet/kernels.hpp"
#include "covdet/tensor.hpp"

namespace covdet {

enum class LayerKind { Conv, Relu, MaxPool2, Lrn };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int kh = 0, kw = 0;
    int out_channels = 0;
    int stride = 1;  // convolution stride; padding is always zero

    static LayerSpec conv(int kh, int kw, int oc, int stride = 1) {
        return {LayerKind::Conv, kh, kw, oc, stride};
    }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0, 1}; }
    static LayerSpec maxpool2() { return {LayerKind::MaxPool2, 0, 0, 0, 2}; }
    static LayerSpec lrn() { return {LayerKind::Lrn, 0, 0, 0, 1}; }
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    int input_side = 28;
    int in_channels = 1;
    int out_dim = 2;
};

/// Heads of the trained regressors: a translation head outputs the feature
/// centre relative to the patch centre, a rotation head outputs an
/// (unnormalised) orientation vector.
enum class Head { Translation, Rotation };

const char* head_name(Head h);
Head head_from_name(const std::string& name);

/// Preset architectures. The -s and -l variants follow the reference layer
/// tables; "micro" is a reduced stack with the same shape contract, suitable
/// for CPU-scale runs.
NetworkSpec detnet_s();
NetworkSpec detnet_l();
NetworkSpec detnet_micro();
NetworkSpec net_by_name(const std::string& name);

/// Side of the square input window that maps to a 1x1 output.
int receptive_field(const NetworkSpec& spec);

/// Validates the shape arithmetic from input_side down to a 1x1xout_dim
/// output; throws std::invalid_argument("architecture/shape error").
void check_spec(const NetworkSpec& spec);

/// Per-conv-layer parameter block. Weight layout is
/// (ky, kx, in_channel, out_channel) row-major.
struct ConvParams {
    int kh = 0, kw = 0, in_channels = 0, out_channels = 0;
    std::vector<double> w;
    std::vector<double> b;
};

struct Parameters {
    std::vector<ConvParams> conv;  // one entry per Conv layer, in order

    size_t count() const;
    void fill(double v);
    /// this += a * other (shapes must match)
    void axpy(double a, const Parameters& other);
    bool same_shape(const Parameters& other) const;
    bool all_finite() const;
};

Parameters zeros_like(const Parameters& p);

/// Gaussian init with std sqrt(2 / fan_in), zero biases; deterministic per
/// seed.
Parameters init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Activation record produced by forward() and consumed by backward().
struct ForwardCache {
    std::vector<Tensor> inputs;                      // input of every layer
    std::vector<std::vector<std::int32_t>> argmax;   // per layer (pools only)
    std::vector<Tensor> lrn_scale;                   // per layer (lrn only)
    Tensor output;
    std::uint64_t fingerprint = 0;
};

std::uint64_t spec_fingerprint(const NetworkSpec& spec);

/// Runs the layer stack. Input must be (h, w, in_channels, n) with spatial
/// dims at least the receptive field; output is (oh, ow, out_dim, n)
/// (1x1xout_dim for a receptive-field-sized input). Throws
/// std::invalid_argument("architecture/shape error") on mismatches.
Tensor forward(const NetworkSpec& spec, const Parameters& params, const Tensor& input,
               ForwardCache* cache = nullptr);

/// Gradients of a scalar loss with respect to all parameters and, when
/// `grad_input` is non-null, the input. Throws
/// std::runtime_error("invalid cache") when the cache does not match.
void backward(const NetworkSpec& spec, const Parameters& params, const ForwardCache& cache,
              const Tensor& grad_output, Parameters& grad, Tensor* grad_input = nullptr);

/// Maps a raw 2-vector network output to a transformation. The translation
/// head gives a pixel displacement from the patch centre; the rotation head
/// normalises (a_u, a_v) to a rotation matrix. Throws
/// std::runtime_error("degenerate orientation") when the orientation vector
/// vanishes.
Transform2D output_to_transform(std::span<const double> raw, Head head);

struct SgdState {
    Parameters velocity;
    bool initialized = false;
};

/// Momentum SGD: v' = momentum * v - lr * grad; p' = p + v'.
void sgd_step(Parameters& params, const Parameters& grad, double lr, double momentum,
              SgdState& state);

}  // namespace covdet

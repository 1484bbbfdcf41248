#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sculpt/data.hpp"
#include "sculpt/graph.hpp"
#include "sculpt/mask.hpp"
#include "sculpt/params.hpp"

namespace sculpt {

enum class ModelKind { mlp, cnn };

const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

// mlp: `widths` = [inputs, hidden..., classes].
// cnn: input image (channels × height × width, channel-major per sample) through
//      `conv_channels` blocks of conv(kernel, padding) → relu → mean_pool(pool),
//      then a dense head with `widths` = [hidden..., classes] on the flattened features.
struct ModelSpec {
    ModelKind kind = ModelKind::mlp;
    std::vector<std::size_t> widths{2, 16, 16, 2};
    bool bias = true;

    std::size_t in_channels = 1;
    std::size_t in_height = 28;
    std::size_t in_width = 28;
    std::vector<std::size_t> conv_channels;
    std::size_t kernel = 3;
    std::size_t padding = 1;
    std::size_t pool = 2;

    std::size_t input_features() const;
    std::size_t classes() const;
    // Throws ConfigError when there is no layer or any width is zero.
    void validate() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// A built network: graph inputs are "x" ([b, features]) and "y" ([b] labels);
// `logits` is [b, classes] and `loss` is the mean softmax cross-entropy.
struct Model {
    ModelSpec spec;
    Graph graph;
    ParamLayout layout;
    NodeId logits = 0;
    NodeId loss = 0;
};

Model build_model(const ModelSpec& spec);

// Weights ~ N(0, 2 / fan_in) per prunable segment; every other segment is zero.
ParamVector init_kaiming_normal(const ParamLayout& layout, std::uint64_t seed);

struct LossAcc {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Mean cross-entropy and argmax accuracy of f(x; m ⊙ θ) on one batch.
LossAcc forward_loss(const Model& model, const ParamVector& params, const Mask& mask, const Batch& batch);
LossAcc forward_loss(const Model& model, const ParamVector& params, const Batch& batch);

// Loss and gradient at the given (already masked) parameters.
ValueAndGrad loss_and_grad(const Model& model, const ParamVector& params, const Batch& batch);

// Fraction of rows whose first maximal logit is the label.
double argmax_accuracy(const Tensor& logits, const Tensor& labels);

}  // namespace sculpt

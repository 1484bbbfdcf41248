#include "sculpt/model.hpp"

#include <cmath>

#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

const char* model_kind_name(ModelKind k) { return k == ModelKind::mlp ? "mlp" : "cnn"; }

ModelKind parse_model_kind(const std::string& s) {
    if (s == "mlp") return ModelKind::mlp;
    if (s == "cnn") return ModelKind::cnn;
    throw ConfigError("unsupported model kind '" + s + "' (expected mlp or cnn)");
}

std::size_t ModelSpec::input_features() const {
    return kind == ModelKind::mlp ? widths.at(0) : in_channels * in_height * in_width;
}

std::size_t ModelSpec::classes() const { return widths.back(); }

void ModelSpec::validate() const {
    for (auto w : widths) {
        if (w == 0) throw ConfigError("model widths must be positive");
    }
    if (kind == ModelKind::mlp) {
        if (widths.size() < 2) throw ConfigError("mlp needs at least one layer (2 widths)");
        return;
    }
    if (conv_channels.empty()) throw ConfigError("cnn needs at least one conv layer");
    if (widths.empty()) throw ConfigError("cnn needs a head ending in the class count");
    for (auto c : conv_channels) {
        if (c == 0) throw ConfigError("conv channels must be positive");
    }
    if (in_channels == 0 || in_height == 0 || in_width == 0 || kernel == 0 || pool == 0) {
        throw ConfigError("cnn dimensions must be positive");
    }
}

namespace {

void add_dense_head(Model& m, NodeId& h, std::size_t in, const std::vector<std::size_t>& widths, std::size_t first) {
    std::size_t prev = in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::string name = "fc" + std::to_string(first + i);
        m.layout.add(name + ".weight", {prev, widths[i]}, true, prev, widths[i]);
        h = m.graph.matmul(h, m.graph.param(m.layout, name + ".weight"));
        if (m.spec.bias) {
            m.layout.add(name + ".bias", {widths[i]}, false);
            h = m.graph.add(h, m.graph.param(m.layout, name + ".bias"));
        }
        if (i + 1 < widths.size()) h = m.graph.relu(h);
        prev = widths[i];
    }
}

}  // namespace

Model build_model(const ModelSpec& spec) {
    spec.validate();
    Model m;
    m.spec = spec;
    NodeId h = m.graph.input("x");
    const NodeId y = m.graph.input("y");

    if (spec.kind == ModelKind::mlp) {
        std::vector<std::size_t> layers(spec.widths.begin() + 1, spec.widths.end());
        add_dense_head(m, h, spec.widths[0], layers, 1);
    } else {
        h = m.graph.reshape(h, {-1, static_cast<long>(spec.in_channels), static_cast<long>(spec.in_height),
                                static_cast<long>(spec.in_width)});
        std::size_t c = spec.in_channels, height = spec.in_height, width = spec.in_width;
        for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
            const std::size_t co = spec.conv_channels[i];
            const std::string name = "conv" + std::to_string(i + 1);
            const std::size_t k = spec.kernel;
            if (height + 2 * spec.padding < k || width + 2 * spec.padding < k) {
                throw ConfigError("cnn kernel larger than its padded input");
            }
            m.layout.add(name + ".weight", {co, c, k, k}, true, c * k * k, co * k * k);
            h = m.graph.conv2d(h, m.graph.param(m.layout, name + ".weight"), spec.padding);
            if (spec.bias) {
                m.layout.add(name + ".bias", {co, 1, 1}, false);
                h = m.graph.add(h, m.graph.param(m.layout, name + ".bias"));
            }
            h = m.graph.relu(h);
            height = height + 2 * spec.padding - k + 1;
            width = width + 2 * spec.padding - k + 1;
            if (spec.pool > 1) {
                if (height % spec.pool || width % spec.pool) throw ConfigError("pool window does not tile conv output");
                h = m.graph.mean_pool(h, spec.pool);
                height /= spec.pool;
                width /= spec.pool;
            }
            c = co;
        }
        const std::size_t flat = c * height * width;
        h = m.graph.reshape(h, {-1, static_cast<long>(flat)});
        add_dense_head(m, h, flat, spec.widths, 1);
    }
    m.logits = h;
    m.graph.set_name(h, "logits");
    m.loss = m.graph.softmax_cross_entropy(h, y);
    m.graph.set_name(m.loss, "loss");
    return m;
}

ParamVector init_kaiming_normal(const ParamLayout& layout, std::uint64_t seed) {
    ParamVector p(layout);
    for (std::size_t s = 0; s < layout.segment_count(); ++s) {
        const auto& seg = layout.segment(s);
        if (!seg.prunable) continue;
        if (seg.fan_in == 0) throw ContractError("segment '" + seg.name + "' has no fan_in");
        const double sd = std::sqrt(2.0 / static_cast<double>(seg.fan_in));
        Rng rng(derive_seed(seed, "kaiming:" + seg.name));
        for (double& v : p.segment(s)) v = sd * standard_normal(rng);
    }
    return p;
}

double argmax_accuracy(const Tensor& logits, const Tensor& labels) {
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (logits[i * c + j] > logits[i * c + best]) best = j;
        }
        correct += static_cast<double>(best) == labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

LossAcc forward_loss(const Model& model, const ParamVector& params, const Batch& batch) {
    if (batch.size() == 0) throw ContractError("forward_loss: empty batch");
    const Bindings in{{"x", batch.inputs}, {"y", batch.labels}};
    const Tape tape = forward(model.graph, in, params);
    return {tape.values[model.loss].item(), argmax_accuracy(tape.values[model.logits], batch.labels)};
}

LossAcc forward_loss(const Model& model, const ParamVector& params, const Mask& mask, const Batch& batch) {
    return forward_loss(model, apply_mask(params, mask), batch);
}

ValueAndGrad loss_and_grad(const Model& model, const ParamVector& params, const Batch& batch) {
    const Bindings in{{"x", batch.inputs}, {"y", batch.labels}};
    return value_and_grad(model.graph, in, params, model.loss);
}

}  // namespace sculpt

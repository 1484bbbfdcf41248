#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sculpt/errors.hpp"
#include "sculpt/graph.hpp"
#include "sculpt/model.hpp"

using namespace sculpt;

namespace {

double max_rel_gap(const ParamVector& a, const ParamVector& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
        den += b.values[i] * b.values[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

TEST(Tensor, ShapesAndScalars) {
    const Tensor s = Tensor::scalar(2.5);
    EXPECT_EQ(s.rank(), 0u);
    EXPECT_EQ(s.numel(), 1u);
    EXPECT_DOUBLE_EQ(s.item(), 2.5);
    const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(m.shape(), (Shape{2, 3}));
    EXPECT_EQ(m.reshaped({3, 2}).shape(), (Shape{3, 2}));
    EXPECT_THROW((void)m.reshaped({4, 2}), ShapeError);
    EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Graph, MatMulAddReluForward) {
    ParamLayout layout;
    layout.add("w", {2, 2}, true, 2, 2);
    Graph g;
    const NodeId x = g.input("x");
    const NodeId w = g.param(layout, "w");
    const NodeId y = g.relu(g.matmul(x, w));
    g.set_name(y, "y");
    const ParamVector p(layout, {1.0, -1.0, 2.0, 0.5});
    const auto out = eval_graph(g, {{"x", Tensor::matrix({{1.0, 1.0}, {-1.0, 0.0}})}}, p, {"y"});
    // [1,1]·W = [3, -0.5] → relu [3, 0]; [-1,0]·W = [-1, 1] → [0, 1]
    EXPECT_EQ(out.at("y"), Tensor::matrix({{3.0, 0.0}, {0.0, 1.0}}));
}

TEST(Graph, ShapeErrorNamesTheNode) {
    ParamLayout layout;
    layout.add("w", {3, 2}, true, 3, 2);
    Graph g;
    const NodeId x = g.input("x");
    const NodeId y = g.matmul(x, g.param(layout, "w"));
    g.set_name(y, "fc_bad");
    try {
        (void)forward(g, {{"x", Tensor(Shape{1, 2})}}, ParamVector(layout));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("fc_bad"), std::string::npos) << e.what();
    }
}

TEST(Graph, SoftmaxCrossEntropyKnownValue) {
    ParamLayout layout;
    Graph g;
    const NodeId z = g.input("z");
    const NodeId loss = g.softmax_cross_entropy(z, g.input("y"));
    const Bindings in{{"z", Tensor::matrix({{0.0, 0.0}, {std::log(3.0), 0.0}})}, {"y", Tensor::vector({0.0, 1.0})}};
    const Tape t = forward(g, in, ParamVector(layout));
    // mean of ln 2 and ln 4
    EXPECT_NEAR(t.values[loss].item(), 0.5 * (std::log(2.0) + std::log(4.0)), 1e-15);
}

TEST(Graph, SoftmaxLabelOutOfRangeIsDataError) {
    ParamLayout layout;
    Graph g;
    const NodeId loss = g.softmax_cross_entropy(g.input("z"), g.input("y"));
    (void)loss;
    EXPECT_THROW((void)forward(g, {{"z", Tensor::matrix({{0.0, 0.0}})}, {"y", Tensor::vector({2.0})}}, ParamVector(layout)),
                 DataError);
}

TEST(Graph, SoftmaxIsStableForHugeLogits) {
    ParamLayout layout;
    Graph g;
    const NodeId loss = g.softmax_cross_entropy(g.input("z"), g.input("y"));
    const Tape t = forward(g, {{"z", Tensor::matrix({{1000.0, 0.0}})}, {"y", Tensor::vector({1.0})}}, ParamVector(layout));
    EXPECT_NEAR(t.values[loss].item(), 1000.0, 1e-9);
}

TEST(Graph, GradientMatchesFiniteDifferencesOnRandomMlps) {
    Rng rng(derive_seed(1, "unit_autodiff"));
    for (int trial = 0; trial < 6; ++trial) {
        const ModelSpec spec = sculpt::testing::random_mlp_spec(rng, 120);
        const Model model = build_model(spec);
        const ParamVector p = sculpt::testing::random_params(model.layout, rng());
        const Batch batch = sculpt::testing::random_batch(rng, 5, spec.widths.front(), spec.classes());
        const ParamVector g = loss_and_grad(model, p, batch).grad;
        const ParamVector fd = finite_difference_gradient(
            [&](const ParamVector& q) { return forward_loss(model, q, batch).loss; }, p, 1e-6);
        EXPECT_LT(max_rel_gap(g, fd), 1e-5) << "trial " << trial;
    }
}

TEST(Graph, ConvPoolGradientMatchesFiniteDifferences) {
    ModelSpec spec;
    spec.kind = ModelKind::cnn;
    spec.in_channels = 2;
    spec.in_height = 6;
    spec.in_width = 6;
    spec.conv_channels = {3};
    spec.kernel = 3;
    spec.padding = 1;
    spec.pool = 2;
    spec.widths = {4, 3};
    const Model model = build_model(spec);
    Rng rng(derive_seed(2, "unit_conv"));
    const ParamVector p = sculpt::testing::random_params(model.layout, 5);
    const Batch batch = sculpt::testing::random_batch(rng, 3, spec.input_features(), 3);
    const ParamVector g = loss_and_grad(model, p, batch).grad;
    const ParamVector fd =
        finite_difference_gradient([&](const ParamVector& q) { return forward_loss(model, q, batch).loss; }, p, 1e-6);
    EXPECT_LT(max_rel_gap(g, fd), 1e-5);
}

TEST(Graph, MulSumReshapeGradients) {
    ParamLayout layout;
    layout.add("a", {2, 3}, false);
    layout.add("b", {3, 2}, false);
    Graph g;
    const NodeId a = g.param(layout, "a");
    const NodeId b = g.reshape(g.param(layout, "b"), {2, -1});
    const NodeId s = g.sum(g.mul(a, b));
    const ParamVector p(layout, {1, 2, 3, 4, 5, 6, -1, 0.5, 2, -3, 0.25, 7});
    const ValueAndGrad vg = value_and_grad(g, {}, p, s);
    EXPECT_DOUBLE_EQ(vg.loss, 1 * -1 + 2 * 0.5 + 3 * 2 + 4 * -3 + 5 * 0.25 + 6 * 7);
    const std::vector<double> want{-1, 0.5, 2, -3, 0.25, 7, 1, 2, 3, 4, 5, 6};
    EXPECT_EQ(vg.grad.values, want);
}

TEST(Graph, UnreachableParameterGetsZeroGradient) {
    ParamLayout layout;
    layout.add("used", {1}, false);
    layout.add("unused", {1}, false);
    Graph g;
    const NodeId used = g.param(layout, "used");
    (void)g.param(layout, "unused");
    const NodeId s = g.sum(g.mul(used, used));
    const ValueAndGrad vg = value_and_grad(g, {}, ParamVector(layout, {3.0, 9.0}), s);
    EXPECT_EQ(vg.grad.values, (std::vector<double>{6.0, 0.0}));
}

TEST(Graph, OverflowErrorOnNonFiniteIntermediate) {
    ParamLayout layout;
    layout.add("w", {1, 1}, false);
    Graph g;
    (void)g.matmul(g.input("x"), g.param(layout, "w"));
    EXPECT_THROW((void)forward(g, {{"x", Tensor::matrix({{1e308}})}}, ParamVector(layout, {1e10})), OverflowError);
}

TEST(Graph, PairwiseSumIsAccurate) {
    std::vector<double> v(1 << 20, 0.1);
    EXPECT_NEAR(pairwise_sum(v), 0.1 * static_cast<double>(v.size()), 1e-7);
    EXPECT_EQ(pairwise_sum({}), 0.0);
}

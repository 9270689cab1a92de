#include "film/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace film {

namespace {

// Blocks whose true gradient vanishes (key biases under softmax) are judged on absolute error.
constexpr double kScaleFloor = 1e-4;

double evaluate(const LossBuilder& build) {
    Graph<double> g(false);
    const Var loss = build(g);
    return g.value(loss).data.at(0);
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& build, const std::vector<NamedParam>& params,
                                  double tolerance, double step) {
    for (const NamedParam& p : params) p.tensor->zero_grad();
    {
        Graph<double> g;
        g.backward(build(g));
    }

    GradCheckReport report;
    report.passed = true;
    for (const NamedParam& p : params) {
        Tensor<double>& t = *p.tensor;
        GradCheckBlock block{p.name, 0, 0, false};
        double scale = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + step;
            const double up = evaluate(build);
            t.data[i] = saved - step;
            const double down = evaluate(build);
            t.data[i] = saved;
            const double numeric = (up - down) / (2 * step);
            const double analytic = t.grad[i];
            block.max_abs_error = std::max(block.max_abs_error, std::abs(analytic - numeric));
            scale = std::max({scale, std::abs(analytic), std::abs(numeric)});
        }
        block.max_rel_error = block.max_abs_error / std::max(scale, kScaleFloor);
        block.passed = block.max_rel_error < tolerance;
        report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
        report.passed = report.passed && block.passed;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace film

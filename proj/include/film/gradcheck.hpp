#pragma once

#include <functional>
#include <string>
#include <vector>

#include "film/tensor.hpp"

namespace film {

struct NamedParam {
    std::string name;
    Tensor<double>* tensor = nullptr;
};

struct GradCheckBlock {
    std::string name;
    // Largest |analytic - numeric| in the block over the block's largest gradient magnitude (floored at 1e-4).
    double max_rel_error = 0;
    double max_abs_error = 0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double max_rel_error = 0;
    bool passed = false;
};

/// Builds the scalar loss on the given graph from the caller's parameters.
using LossBuilder = std::function<Var(Graph<double>&)>;

/// Compares reverse-mode gradients against central finite differences.
GradCheckReport finite_diff_check(const LossBuilder& build, const std::vector<NamedParam>& params,
                                  double tolerance, double step = 1e-5);

}  // namespace film

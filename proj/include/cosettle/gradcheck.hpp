#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cosettle/projection.hpp"

namespace cosettle {

enum class GradcheckLoss { cycle, kl, total };

const char* to_string(GradcheckLoss loss);

struct GradcheckOptions {
    std::size_t instances = 100;
    std::size_t max_dim = 8;
    std::size_t max_tokens = 8;
    double step = 1e-5;
    double tolerance = 1e-6;
    /// Denominator floor of the relative error |a − n| / max(|a|, |n|, floor).
    double floor = 1e-3;
    std::uint64_t seed = 0;
};

struct GradcheckCase {
    ProjectionKind kind = ProjectionKind::linear;
    GradcheckLoss loss = GradcheckLoss::cycle;
    std::size_t instances = 0;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckCase> cases;
    double tolerance = 0.0;
    double step = 0.0;
    bool passed = false;
};

/// Compares analytic parameter gradients of every (head, loss) pair against
/// fourth-order central finite differences on random small instances.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace cosettle

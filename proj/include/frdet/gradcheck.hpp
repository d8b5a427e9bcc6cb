// Copyright 2026 The FRDet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "frdet/tensor.hpp"

namespace frdet {

struct GradCheckReport {
    bool passed = true;
    double max_rel_error = 0.0;
    std::size_t elements_checked = 0;
    // Location and values of the worst element, e.g. "input 1 [17]: analytic=... numeric=...".
    std::string worst;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    // Denominator floor: |a-n| / max(|a|, |n|, floor). Keeps near-zero
    // gradients from turning round-off into huge relative errors.
    double floor = 1e-3;
};

/// Compares the analytic gradient of `fn` (a scalar-valued function of the
/// `wrt` tensors, re-evaluated from their current values) against central
/// finite differences for every element of every tensor in `wrt`.
///
/// Runs in double precision only.
inline GradCheckReport check_gradients(const std::function<Tensor<double>()>& fn,
                                       std::vector<Tensor<double>> wrt,
                                       const GradCheckOptions& options = {}) {
    for (auto& t : wrt) {
        t.set_requires_grad();
        t.zero_grad();
    }
    Tensor<double> out = fn();
    if (out.numel() != 1) throw ShapeError("check_gradients: function must return a scalar");
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(wrt.size());
    for (auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

    GradCheckReport report;
    NoGradGuard no_grad;
    for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
        auto values = wrt[ti].values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + options.step;
            const double up = fn()[0];
            values[i] = saved - options.step;
            const double down = fn()[0];
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic[ti][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.elements_checked;
            if (rel > report.max_rel_error || (std::isnan(rel) && report.passed)) {
                report.max_rel_error = std::isnan(rel) ? INFINITY : rel;
                std::ostringstream os;
                os << "input " << ti << " [" << i << "]: analytic=" << a << " numeric=" << numeric;
                report.worst = os.str();
            }
        }
    }
    report.passed = report.max_rel_error <= options.tolerance;
    return report;
}

}  // namespace frdet

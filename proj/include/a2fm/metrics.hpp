#pragma once

#include <optional>
#include <vector>

#include "a2fm/attacks.hpp"
#include "a2fm/models.hpp"
#include "a2fm/tensor.hpp"

namespace a2fm {

// Outcomes of one evaluation campaign; `eligible` counts the videos the
// model classified correctly before the attack (skipped outcomes are not
// part of it).
struct EvalBatch {
    std::vector<AttackOutcome> outcomes;
    int eligible = 0;
};

// One reported row. diff/coherence are absent for methods that do not
// compute them.
struct MetricReport {
    double fr = 0.0;
    double aap = 0.0;
    std::optional<double> diff;
    std::optional<double> coherence;
};

// 100 * successes / eligible. Skipped outcomes count on neither side;
// an empty eligible set is rejected.
double fooling_rate(const EvalBatch& batch);

// (1/(N*S)) * sum_n (sum|E_n| / dT_n), with dT_n the first extent of E_n
// and S the spatial pixel count (channels contribute to the numerator
// only).
double aap(const std::vector<Tensor>& perturbations, int spatial_pixels);

// L2 distance between phi_tap(a) and phi_tap(b), flattened. tap 0 compares
// raw pixels.
double feature_diff(const Model& model, const Tensor& frames_a, const Tensor& frames_b, int tap);

// Mean pairwise cosine similarity of the flattened gradients. Needs at
// least two gradients of one shape, each nonzero.
double direction_coherence(const std::vector<Tensor>& gradients);

}  // namespace a2fm

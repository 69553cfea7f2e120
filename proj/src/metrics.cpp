#include "a2fm/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace a2fm {

double fooling_rate(const EvalBatch& batch) {
    if (batch.eligible < 1) {
        throw std::invalid_argument("fooling_rate needs at least one eligible video");
    }
    int successes = 0;
    for (const AttackOutcome& o : batch.outcomes) {
        if (!o.skipped && o.success) ++successes;
    }
    if (successes > batch.eligible) {
        throw std::invalid_argument("more successes (" + std::to_string(successes) +
                                    ") than eligible videos (" + std::to_string(batch.eligible) +
                                    ")");
    }
    return 100.0 * successes / batch.eligible;
}

double aap(const std::vector<Tensor>& perturbations, int spatial_pixels) {
    if (perturbations.empty()) throw std::invalid_argument("aap needs at least one perturbation");
    if (spatial_pixels < 1) throw std::invalid_argument("spatial pixel count must be positive");
    double total = 0.0;
    for (const Tensor& e : perturbations) {
        if (e.shape().empty() || e.extent(0) < 1) {
            throw std::invalid_argument("perturbation needs a leading frame axis");
        }
        double s = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) s += std::fabs(e[i]);
        total += s / e.extent(0);
    }
    return total / (static_cast<double>(perturbations.size()) * spatial_pixels);
}

double feature_diff(const Model& model, const Tensor& frames_a, const Tensor& frames_b, int tap) {
    Tensor fa = features_at(model, frames_a, tap);
    Tensor fb = features_at(model, frames_b, tap);
    if (fa.shape() != fb.shape()) {
        throw std::invalid_argument("feature shapes disagree; frame blocks are not comparable");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        double d = fa[i] - fb[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double direction_coherence(const std::vector<Tensor>& gradients) {
    if (gradients.size() < 2) {
        throw std::invalid_argument("direction_coherence needs at least two gradients");
    }
    const Shape& shape = gradients.front().shape();
    std::vector<double> norms(gradients.size());
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        if (gradients[i].shape() != shape) {
            throw std::invalid_argument("gradients must share one shape");
        }
        double s = 0.0;
        for (std::size_t p = 0; p < gradients[i].size(); ++p) s += gradients[i][p] * gradients[i][p];
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) throw std::invalid_argument("zero-norm gradient has no direction");
    }
    double total = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        for (std::size_t j = i + 1; j < gradients.size(); ++j) {
            double dot = 0.0;
            for (std::size_t p = 0; p < gradients[i].size(); ++p) {
                dot += gradients[i][p] * gradients[j][p];
            }
            total += dot / (norms[i] * norms[j]);
            ++pairs;
        }
    }
    return total / pairs;
}

}  // namespace a2fm

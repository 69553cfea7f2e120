#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "a2fm/models.hpp"
#include "a2fm/videodata.hpp"

namespace a2fm {

// Where the perturbation may live: only on frames appended after the clip, or
// anywhere on the (padded) clip itself.
enum class PerturbSupport { AppendedFrames, WholeVideo };

const char* support_name(PerturbSupport support);
PerturbSupport support_from_name(const std::string& name);

enum class NormOrder { LInf, L2 };

// Binary per-pixel gate over the spatial plane, broadcast across time and
// channels. rate is the fraction of pixels left open.
struct SpatialMask {
  Tensor weights;  // [W, H], entries exactly 0.0 or 1.0
  double rate = 1.0;
};

// Centered square covering ~rate of the plane (side = round(sqrt(rate*W*H))).
SpatialMask make_square_mask(int width, int height, double rate);
// Ones exactly on the glyph foreground of the given pattern.
SpatialMask make_pattern_mask(PatternKind pattern, int width, int height);

struct AttackConfig {
  PerturbSupport support = PerturbSupport::AppendedFrames;
  double lambda = 0.001;           // weight of the ||E||_p magnitude penalty
  NormOrder p = NormOrder::LInf;   // norm used by the magnitude penalty
  double step_size = 0.01;         // per-iteration per-pixel step
  int max_iters = 0;               // 0 = per-operation default budget
  bool stop_on_success = true;     // halt once every eligible input is fooled
  double stop_threshold = 0.001;   // min objective improvement before stagnation
  int target_label = -1;           // >= 0 switches to targeted mode
  std::optional<SpatialMask> mask; // absent = all pixels open
  double lambda_l = 0.0;           // weight of the feature-similarity penalty
  int layer = 2;                   // feature tap used by the similarity penalty
  std::vector<double> alpha;       // per-video weights; empty = uniform 1/N
  std::vector<double> beta;        // per-model weights; empty = uniform 1/K
  std::uint64_t seed = 0;          // drives the reference-slice draw
};

// Default budgets when max_iters == 0: attack_single 40, attack_universal_videos
// 10*N, attack_ensemble_models 5*K*N, attack_feature_similar 200.
int default_budget_single();
int default_budget_universal(int video_count);
int default_budget_ensemble(int model_count, int video_count);
int default_budget_feature_similar();

struct AttackOutcome {
  bool skipped = false;   // clean input already off-label (or equal to the target)
  bool success = false;
  int initial_label = -1; // prediction on the clean assembled input
  int final_label = -1;   // prediction on the adversarial input
  int iterations = 0;     // gradient steps applied
  Tensor perturbation;    // E over the support, f32-quantized
  Tensor adversarial;     // final assembled input, f32-quantized
  std::vector<double> objective_trace;  // objective per evaluated iterate
};

struct UniversalOutcome {
  Tensor perturbation;    // shared E, f32-quantized
  int iterations = 0;
  std::vector<double> objective_trace;
  std::vector<AttackOutcome> per_video;  // traces left empty; shared trace above
};

struct EnsembleOutcome {
  Tensor perturbation;    // shared E, f32-quantized
  int iterations = 0;
  std::vector<double> objective_trace;
  std::vector<std::vector<AttackOutcome>> per_model;  // [model][video]
};

struct FeatureSimilarOutcome {
  AttackOutcome outcome;
  Tensor reference;       // frames the penalty pulls toward, sliced from the clip
  int reference_start = 0;
  std::vector<double> diff_trace;  // feature distance per iterate (lambda_l > 0)
};

// Elementwise pixel-feasibility bounds so that base + E stays in [0,1] for
// every base the perturbation is added to.
struct ClampBox {
  Tensor lo, hi;
};

ClampBox feasible_box(const std::vector<Tensor>& bases);

// One sign-gradient ascent step: clamp(E + step * sign(ascent) .* mask, box).
// Coordinates with zero gradient or a closed mask never move.
Tensor gradient_step(const Tensor& e, const Tensor& ascent,
                     const AttackConfig& config, const ClampBox& box);

// Assembled model input for a clip: [clip | dummy | last-frame padding] under
// AppendedFrames, or the clip padded to the model's input length under
// WholeVideo (dummy ignored). An empty dummy degrades AppendedFrames to
// WholeVideo.
Tensor assemble_clean(const Model& model, const VideoClip& clip,
                      const DummyFrames& dummy, PerturbSupport support);
// Same assembly with E added over the support, then clamped to valid pixels.
Tensor apply_perturbation(const Model& model, const VideoClip& clip,
                          const DummyFrames& dummy, PerturbSupport support,
                          const Tensor& e);

AttackOutcome attack_single(const Model& model, const VideoClip& clip,
                            const DummyFrames& dummy, const AttackConfig& config);

UniversalOutcome attack_universal_videos(const Model& model,
                                         const std::vector<VideoClip>& clips,
                                         const DummyFrames& dummy,
                                         const AttackConfig& config);

EnsembleOutcome attack_ensemble_models(const std::vector<Model>& models,
                                       const std::vector<VideoClip>& clips,
                                       const DummyFrames& dummy,
                                       const AttackConfig& config);

FeatureSimilarOutcome attack_feature_similar(const Model& model,
                                             const VideoClip& clip,
                                             const DummyFrames& dummy,
                                             const AttackConfig& config);

// Per-clip gradient of the classification loss over the support at E = 0;
// feeds the direction-coherence diagnostic.
std::vector<Tensor> initial_gradients(const Model& model,
                                      const std::vector<VideoClip>& clips,
                                      const DummyFrames& dummy,
                                      const AttackConfig& config);

}  // namespace a2fm

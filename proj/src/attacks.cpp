#include "a2fm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "a2fm/graph.hpp"

namespace a2fm {

namespace {

// The run is declared stagnant when the best objective fails to improve by at
// least stop_threshold over this many consecutive iterations (a window, so
// slow-but-steady descent is never cut short; stop_threshold == 0 disables it).
constexpr int kStagnationWindow = 10;

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

int argmax_lowest(const Tensor& t) {
    int best = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i] > t[best]) best = static_cast<int>(i);
    }
    return best;
}

Tensor quantized(Tensor t) {
    t.quantize_f32();
    return t;
}

void validate_common(const AttackConfig& c, int model_count, int clip_count, int class_count,
                     int tap_count, int width, int height) {
    if (c.step_size <= 0.0) throw std::invalid_argument("step_size must be positive");
    if (c.lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
    if (c.lambda_l < 0.0) throw std::invalid_argument("lambda_l must be non-negative");
    if (c.stop_threshold < 0.0) throw std::invalid_argument("stop_threshold must be non-negative");
    if (c.max_iters < 0) throw std::invalid_argument("max_iters must be non-negative (0 = default)");
    if (c.lambda_l > 0.0 && (c.layer < 0 || c.layer >= tap_count)) {
        throw std::invalid_argument("layer must be in [0," + std::to_string(tap_count) +
                                    "), got " + std::to_string(c.layer));
    }
    if (c.target_label != -1 && (c.target_label < 0 || c.target_label >= class_count)) {
        throw std::invalid_argument("target_label must be -1 or in [0," +
                                    std::to_string(class_count) + ")");
    }
    auto check_weights = [](const std::vector<double>& w, int expect, const char* name) {
        if (!w.empty() && static_cast<int>(w.size()) != expect) {
            throw std::invalid_argument(std::string(name) + " must be empty or have " +
                                        std::to_string(expect) + " entries, got " +
                                        std::to_string(w.size()));
        }
        for (double v : w) {
            if (v < 0.0) throw std::invalid_argument(std::string(name) + " entries must be >= 0");
        }
    };
    check_weights(c.alpha, clip_count, "alpha");
    check_weights(c.beta, model_count, "beta");
    if (c.mask) {
        if (c.mask->weights.shape() != Shape{width, height}) {
            throw std::invalid_argument("mask must be [" + std::to_string(width) + "," +
                                        std::to_string(height) + "], got " +
                                        shape_str(c.mask->weights.shape()));
        }
        for (std::size_t i = 0; i < c.mask->weights.size(); ++i) {
            double v = c.mask->weights[i];
            if (v != 0.0 && v != 1.0) throw std::invalid_argument("mask entries must be 0 or 1");
        }
    }
}

// Magnitude penalty lambda*||E||_p and its subgradient; conventions match the
// graph ops (L-inf: sign at the first row-major max; zero vector -> zero).
double penalty_value(const Tensor& e, const AttackConfig& c) {
    if (c.lambda == 0.0) return 0.0;
    if (c.p == NormOrder::LInf) {
        double m = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) m = std::max(m, std::fabs(e[i]));
        return c.lambda * m;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * e[i];
    return c.lambda * std::sqrt(s);
}

void add_penalty_gradient(const Tensor& e, const AttackConfig& c, Tensor& grad) {
    if (c.lambda == 0.0) return;
    if (c.p == NormOrder::LInf) {
        std::size_t arg = 0;
        double m = -1.0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            double a = std::fabs(e[i]);
            if (a > m) {
                m = a;
                arg = i;
            }
        }
        grad[arg] += c.lambda * sign_of(e[arg]);
        return;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * e[i];
    double norm = std::sqrt(s);
    if (norm == 0.0) return;
    for (std::size_t i = 0; i < e.size(); ++i) grad[i] += c.lambda * e[i] / norm;
}

struct SupportPlan {
    PerturbSupport support = PerturbSupport::AppendedFrames;
    int clip_len = 0;   // T of every clip
    int delta_t = 0;    // appended frames (0 under WholeVideo)
    int pad = 0;        // last-frame repeats after the appended block
    Shape e_shape;      // perturbation dims
};

SupportPlan plan_support(const Model& m, int clip_len, const DummyFrames& dummy,
                         PerturbSupport requested) {
    SupportPlan p;
    p.clip_len = clip_len;
    bool empty_dummy = dummy.frames.size() == 0;
    p.support = requested == PerturbSupport::AppendedFrames && empty_dummy
                    ? PerturbSupport::WholeVideo
                    : requested;
    if (p.support == PerturbSupport::AppendedFrames) {
        const Shape& d = dummy.frames.shape();
        if (d.size() != 4 || d[1] != m.width || d[2] != m.height || d[3] != m.channels) {
            throw std::invalid_argument("dummy frames must be [dt," + std::to_string(m.width) +
                                        "," + std::to_string(m.height) + "," +
                                        std::to_string(m.channels) + "], got " + shape_str(d));
        }
        p.delta_t = d[0];
        p.pad = m.input_len - clip_len - p.delta_t;
        if (p.pad < 0) {
            throw std::invalid_argument("clip (" + std::to_string(clip_len) + ") plus appended (" +
                                        std::to_string(p.delta_t) + ") frames exceed input_len " +
                                        std::to_string(m.input_len));
        }
        p.e_shape = {p.delta_t, m.width, m.height, m.channels};
    } else {
        if (clip_len > m.input_len) {
            throw std::invalid_argument("clip length " + std::to_string(clip_len) +
                                        " exceeds input_len " + std::to_string(m.input_len));
        }
        p.pad = m.input_len - clip_len;
        // E covers the original frames only; the repeats that fill the model
        // input replicate the perturbed last frame.
        p.e_shape = {clip_len, m.width, m.height, m.channels};
    }
    return p;
}

// Per-model crafting graph. The perturbation is a graph input so one build
// serves every iteration and every clip in the batch.
struct CraftGraph {
    Graph g;
    int e = -1;
    int base = -1;   // [T,...] clip frames (appended) or [input_len,...] padded clip
    int label = -1;
    int loss = -1;
    int logits = -1;
    int pair_obj = -1;  // loss and feature terms with the mode's sign
    int fs = -1;        // feature distance node (lambda_l > 0)
    int ref = -1;
};

CraftGraph build_craft_graph(const Model& m, const SupportPlan& plan, const AttackConfig& c,
                             const DummyFrames& dummy) {
    CraftGraph cg;
    Graph& g = cg.g;
    cg.e = g.input("e", plan.e_shape);
    int xhat = -1;
    int dseg = -1;
    if (plan.support == PerturbSupport::AppendedFrames) {
        cg.base = g.input("base", {plan.clip_len, m.width, m.height, m.channels});
        dseg = g.add(g.constant(dummy.frames), cg.e);
        std::vector<int> parts = {cg.base, dseg};
        if (plan.pad > 0) {
            int rep = g.slice_time(cg.base, plan.clip_len - 1, 1);
            for (int i = 0; i < plan.pad; ++i) parts.push_back(rep);
        }
        xhat = g.concat_time(parts);
    } else {
        cg.base = g.input("base", {plan.clip_len, m.width, m.height, m.channels});
        int sum = g.add(cg.base, cg.e);
        if (plan.pad > 0) {
            std::vector<int> parts = {sum};
            int rep = g.slice_time(sum, plan.clip_len - 1, 1);
            for (int i = 0; i < plan.pad; ++i) parts.push_back(rep);
            xhat = g.concat_time(parts);
        } else {
            xhat = sum;
        }
    }
    ModelGraphRefs refs = assemble_model_on(g, m, xhat, true);
    cg.logits = refs.logits;
    cg.label = g.input("y", {m.class_count});
    cg.loss = g.softmax_xent(cg.logits, cg.label);
    bool targeted = c.target_label >= 0;
    cg.pair_obj = targeted ? cg.loss : g.scale(cg.loss, -1.0);
    if (c.lambda_l > 0.0) {
        int tap = dseg;
        if (c.layer > 0) {
            ModelGraphRefs prefix = assemble_model_on(g, m, dseg, false);
            tap = prefix.taps[c.layer - 1];
        }
        cg.ref = g.input("ref", g.node_at(tap).shape);
        cg.fs = g.l2_norm(g.sub(tap, cg.ref));
        cg.pair_obj = g.add(cg.pair_obj, g.scale(cg.fs, c.lambda_l));
    }
    return cg;
}

struct EngineResult {
    Tensor e;  // final perturbation, full precision
    int iterations = 0;
    std::vector<double> trace;
    std::vector<double> diff_trace;
    std::vector<std::vector<AttackOutcome>> per;  // [model][clip]
    std::vector<Tensor> references;               // per clip (lambda_l > 0)
    std::vector<int> reference_starts;
};

EngineResult run_engine(const std::vector<const Model*>& models,
                        const std::vector<const VideoClip*>& clips, const DummyFrames& dummy,
                        const AttackConfig& config, int budget) {
    if (models.empty()) throw std::invalid_argument("need at least one model");
    if (clips.empty()) throw std::invalid_argument("need at least one clip");
    const Model& m0 = *models[0];
    for (const Model* m : models) {
        if (m->width != m0.width || m->height != m0.height || m->channels != m0.channels ||
            m->class_count != m0.class_count || m->input_len != m0.input_len) {
            throw std::invalid_argument("ensemble models must share input dims and classes");
        }
    }
    const Shape& f0 = clips[0]->frames.shape();
    for (const VideoClip* c : clips) {
        const Shape& f = c->frames.shape();
        if (f.size() != 4 || f != f0) {
            throw std::invalid_argument("batch clips must share dims, got " + shape_str(f) +
                                        " vs " + shape_str(f0));
        }
        if (f[1] != m0.width || f[2] != m0.height || f[3] != m0.channels) {
            throw std::invalid_argument("clip dims " + shape_str(f) + " do not fit the model");
        }
        if (c->label < 0 || c->label >= m0.class_count) {
            throw std::invalid_argument("clip label out of range");
        }
    }

    SupportPlan plan = plan_support(m0, f0[0], dummy, config.support);
    int K = static_cast<int>(models.size());
    int N = static_cast<int>(clips.size());
    validate_common(config, K, N, m0.class_count, m0.tap_count(), m0.width, m0.height);
    if (config.lambda_l > 0.0 && plan.support != PerturbSupport::AppendedFrames) {
        throw std::invalid_argument(
            "the feature-similarity penalty needs appended frames to pull toward");
    }

    std::vector<double> alpha = config.alpha;
    if (alpha.empty()) alpha.assign(N, 1.0 / N);
    std::vector<double> beta = config.beta;
    if (beta.empty()) beta.assign(K, 1.0 / K);
    bool targeted = config.target_label >= 0;

    // Eligibility, clean assemblies, and padded bases up front.
    std::vector<std::vector<Tensor>> clean(K);
    std::vector<std::vector<bool>> eligible(K);
    std::vector<std::vector<int>> initial(K);
    std::vector<Tensor> bases(N);  // per-clip binding of the "base" input
    for (int n = 0; n < N; ++n) bases[n] = clips[n]->frames;
    int eligible_count = 0;
    for (int k = 0; k < K; ++k) {
        clean[k].resize(N);
        eligible[k].assign(N, false);
        initial[k].assign(N, -1);
        for (int n = 0; n < N; ++n) {
            clean[k][n] = assemble_clean(*models[k], *clips[n], dummy, config.support);
            initial[k][n] = predict(*models[k], clean[k][n]).label;
            bool ok = initial[k][n] == clips[n]->label;
            if (targeted && config.target_label == clips[n]->label) ok = false;
            eligible[k][n] = ok;
            eligible_count += ok ? 1 : 0;
        }
    }

    EngineResult res;
    res.e = Tensor(plan.e_shape, 0.0);
    res.per.assign(K, std::vector<AttackOutcome>(N));

    // Feature references: a contiguous slice of each clip's own frames.
    std::vector<Tensor> ref_feats;  // [k*N + n]
    if (config.lambda_l > 0.0) {
        res.references.resize(N);
        res.reference_starts.resize(N);
        ref_feats.resize(static_cast<std::size_t>(K) * N);
        std::size_t frame = static_cast<std::size_t>(m0.width) * m0.height * m0.channels;
        for (int n = 0; n < N; ++n) {
            Rng rng(Rng::mix(config.seed, 0xD500u + static_cast<std::uint64_t>(n)));
            int start = rng.uniform_int(plan.clip_len - plan.delta_t + 1);
            res.reference_starts[n] = start;
            Tensor slice(plan.e_shape, 0.0);
            for (std::size_t i = 0; i < slice.size(); ++i) {
                slice[i] = clips[n]->frames[static_cast<std::size_t>(start) * frame + i];
            }
            res.references[n] = slice;
            for (int k = 0; k < K; ++k) {
                ref_feats[static_cast<std::size_t>(k) * N + n] =
                    features_at(*models[k], slice, config.layer);
            }
        }
    }

    auto finalize = [&](int steps) {
        res.iterations = steps;
        Tensor eq = quantized(res.e);
        for (int k = 0; k < K; ++k) {
            for (int n = 0; n < N; ++n) {
                AttackOutcome& o = res.per[k][n];
                o.initial_label = initial[k][n];
                if (!eligible[k][n]) {
                    o.skipped = true;
                    o.final_label = initial[k][n];
                    o.iterations = 0;
                    o.perturbation = Tensor(plan.e_shape, 0.0);
                    o.adversarial = quantized(clean[k][n]);
                    continue;
                }
                o.iterations = steps;
                o.perturbation = eq;
                o.adversarial =
                    apply_perturbation(*models[k], *clips[n], dummy, config.support, eq);
                o.final_label = predict(*models[k], o.adversarial).label;
                o.success = targeted ? o.final_label == config.target_label
                                     : o.final_label != clips[n]->label;
            }
        }
    };

    if (eligible_count == 0) {
        finalize(0);
        return res;
    }

    // One crafting graph per model, rebound per clip and iteration.
    std::vector<CraftGraph> graphs;
    graphs.reserve(K);
    for (int k = 0; k < K; ++k) graphs.push_back(build_craft_graph(*models[k], plan, config, dummy));

    ClampBox box = plan.support == PerturbSupport::AppendedFrames ? feasible_box({dummy.frames})
                                                                  : feasible_box(bases);

    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_history;
    int steps = 0;
    while (true) {
        Tensor grad(plan.e_shape, 0.0);
        double obj = penalty_value(res.e, config);
        add_penalty_gradient(res.e, config, grad);
        double diff_sum = 0.0;
        int diff_count = 0;
        bool all_fooled = true;
        for (int n = 0; n < N; ++n) {
            for (int k = 0; k < K; ++k) {
                if (!eligible[k][n]) continue;
                CraftGraph& cg = graphs[k];
                Bindings b;
                b["e"] = res.e;
                b["base"] = bases[n];
                b["y"] = onehot(targeted ? config.target_label : clips[n]->label,
                                m0.class_count);
                if (cg.ref >= 0) b["ref"] = ref_feats[static_cast<std::size_t>(k) * N + n];
                cg.g.eval(b);
                double w = alpha[n] * beta[k];
                obj += w * cg.g.value(cg.pair_obj)[0];
                GradMap gm = cg.g.backward(cg.pair_obj, {cg.e});
                const Tensor& ge = gm.at(cg.e);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * ge[i];
                if (cg.fs >= 0) {
                    diff_sum += cg.g.value(cg.fs)[0];
                    ++diff_count;
                }
                int pred = argmax_lowest(cg.g.value(cg.logits));
                bool fooled = targeted ? pred == config.target_label : pred != clips[n]->label;
                all_fooled = all_fooled && fooled;
            }
        }
        res.trace.push_back(obj);
        if (diff_count > 0) res.diff_trace.push_back(diff_sum / diff_count);
        if (config.stop_on_success && all_fooled) break;
        if (config.stop_threshold > 0.0) {
            best = std::min(best, obj);
            best_history.push_back(best);
            std::size_t i = best_history.size() - 1;
            if (i >= static_cast<std::size_t>(kStagnationWindow) &&
                best_history[i - kStagnationWindow] - best < config.stop_threshold) {
                break;
            }
        }
        if (steps >= budget) break;
        Tensor ascent(plan.e_shape, 0.0);
        for (std::size_t i = 0; i < ascent.size(); ++i) ascent[i] = -grad[i];
        res.e = gradient_step(res.e, ascent, config, box);
        ++steps;
    }
    finalize(steps);
    return res;
}

std::vector<const VideoClip*> as_ptrs(const std::vector<VideoClip>& clips) {
    std::vector<const VideoClip*> p;
    p.reserve(clips.size());
    for (const auto& c : clips) p.push_back(&c);
    return p;
}

std::vector<const Model*> as_ptrs(const std::vector<Model>& models) {
    std::vector<const Model*> p;
    p.reserve(models.size());
    for (const auto& m : models) p.push_back(&m);
    return p;
}

}  // namespace

const char* support_name(PerturbSupport support) {
    return support == PerturbSupport::AppendedFrames ? "appended_frames" : "whole_video";
}

PerturbSupport support_from_name(const std::string& name) {
    if (name == "appended_frames") return PerturbSupport::AppendedFrames;
    if (name == "whole_video") return PerturbSupport::WholeVideo;
    throw std::invalid_argument("unknown support '" + name + "'");
}

int default_budget_single() { return 40; }

int default_budget_universal(int video_count) {
    if (video_count < 1) throw std::invalid_argument("video_count must be >= 1");
    return 10 * video_count;
}

int default_budget_ensemble(int model_count, int video_count) {
    if (model_count < 1 || video_count < 1) {
        throw std::invalid_argument("model_count and video_count must be >= 1");
    }
    return 5 * model_count * video_count;
}

int default_budget_feature_similar() { return 200; }

SpatialMask make_square_mask(int width, int height, double rate) {
    if (width < 1 || height < 1) throw std::invalid_argument("mask dims must be positive");
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("rate must be in [0,1]");
    int side = static_cast<int>(std::lround(std::sqrt(rate * width * height)));
    side = std::min(side, std::min(width, height));
    SpatialMask m;
    m.weights = Tensor({width, height}, 0.0);
    int w0 = (width - side) / 2;
    int h0 = (height - side) / 2;
    for (int w = w0; w < w0 + side; ++w) {
        for (int h = h0; h < h0 + side; ++h) {
            m.weights[static_cast<std::size_t>(w) * height + h] = 1.0;
        }
    }
    m.rate = static_cast<double>(side) * side / (static_cast<double>(width) * height);
    return m;
}

SpatialMask make_pattern_mask(PatternKind pattern, int width, int height) {
    SpatialMask m;
    m.weights = glyph_foreground(pattern, width, height);
    double ones = 0.0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) ones += m.weights[i];
    m.rate = ones / static_cast<double>(m.weights.size());
    return m;
}

ClampBox feasible_box(const std::vector<Tensor>& bases) {
    if (bases.empty()) throw std::invalid_argument("need at least one base tensor");
    const Shape& s = bases[0].shape();
    for (const Tensor& b : bases) {
        if (b.shape() != s) {
            throw std::invalid_argument("base tensors must share dims, got " +
                                        shape_str(b.shape()) + " vs " + shape_str(s));
        }
    }
    ClampBox box;
    box.lo = Tensor(s, 0.0);
    box.hi = Tensor(s, 0.0);
    for (std::size_t i = 0; i < box.lo.size(); ++i) {
        double mn = bases[0][i];
        double mx = bases[0][i];
        for (const Tensor& b : bases) {
            mn = std::min(mn, b[i]);
            mx = std::max(mx, b[i]);
        }
        box.lo[i] = -mn;
        box.hi[i] = 1.0 - mx;
    }
    return box;
}

Tensor gradient_step(const Tensor& e, const Tensor& ascent, const AttackConfig& config,
                     const ClampBox& box) {
    if (config.step_size <= 0.0) throw std::invalid_argument("step_size must be positive");
    if (e.rank() != 4) throw std::invalid_argument("perturbation must be rank 4");
    if (ascent.shape() != e.shape() || box.lo.shape() != e.shape() ||
        box.hi.shape() != e.shape()) {
        throw std::invalid_argument("gradient/box dims must match the perturbation");
    }
    int W = e.extent(1), H = e.extent(2), C = e.extent(3);
    if (config.mask && config.mask->weights.shape() != Shape{W, H}) {
        throw std::invalid_argument("mask must be [" + std::to_string(W) + "," +
                                    std::to_string(H) + "], got " +
                                    shape_str(config.mask->weights.shape()));
    }
    Tensor out = e;
    std::size_t plane = static_cast<std::size_t>(H) * C;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double gate = 1.0;
        if (config.mask) {
            std::size_t w = (i / plane) % W;
            std::size_t h = (i / C) % H;
            gate = config.mask->weights[w * H + h];
        }
        double v = e[i] + config.step_size * sign_of(ascent[i]) * gate;
        out[i] = std::min(std::max(v, box.lo[i]), box.hi[i]);
    }
    return out;
}

Tensor assemble_clean(const Model& model, const VideoClip& clip, const DummyFrames& dummy,
                      PerturbSupport support) {
    SupportPlan plan = plan_support(model, clip.frames.extent(0), dummy, support);
    Tensor out;
    if (plan.support == PerturbSupport::AppendedFrames) {
        out = append_frames(clip, dummy, plan.pad).frames;
    } else {
        out = pad_clip(clip.frames, plan.pad);
    }
    out.quantize_f32();
    return out;
}

Tensor apply_perturbation(const Model& model, const VideoClip& clip, const DummyFrames& dummy,
                          PerturbSupport support, const Tensor& e) {
    SupportPlan plan = plan_support(model, clip.frames.extent(0), dummy, support);
    if (e.shape() != plan.e_shape) {
        throw std::invalid_argument("perturbation must be " + shape_str(plan.e_shape) + ", got " +
                                    shape_str(e.shape()));
    }
    Tensor out;
    if (plan.support == PerturbSupport::AppendedFrames) {
        Tensor seg = dummy.frames;
        for (std::size_t i = 0; i < seg.size(); ++i) {
            seg[i] = std::min(std::max(seg[i] + e[i], 0.0), 1.0);
        }
        out = append_frames(clip, DummyFrames{seg, dummy.pattern}, plan.pad).frames;
    } else {
        Tensor xhat = clip.frames;
        for (std::size_t i = 0; i < xhat.size(); ++i) {
            xhat[i] = std::min(std::max(xhat[i] + e[i], 0.0), 1.0);
        }
        out = pad_clip(xhat, plan.pad);
    }
    out.quantize_f32();
    return out;
}

AttackOutcome attack_single(const Model& model, const VideoClip& clip, const DummyFrames& dummy,
                            const AttackConfig& config) {
    int budget = config.max_iters > 0 ? config.max_iters : default_budget_single();
    EngineResult r = run_engine({&model}, {&clip}, dummy, config, budget);
    AttackOutcome out = r.per[0][0];
    if (!out.skipped) out.objective_trace = r.trace;
    return out;
}

UniversalOutcome attack_universal_videos(const Model& model, const std::vector<VideoClip>& clips,
                                         const DummyFrames& dummy, const AttackConfig& config) {
    if (clips.empty()) throw std::invalid_argument("need at least one clip");
    int budget = config.max_iters > 0 ? config.max_iters
                                      : default_budget_universal(static_cast<int>(clips.size()));
    EngineResult r = run_engine({&model}, as_ptrs(clips), dummy, config, budget);
    UniversalOutcome out;
    out.perturbation = quantized(r.e);
    out.iterations = r.iterations;
    out.objective_trace = r.trace;
    out.per_video = r.per[0];
    return out;
}

EnsembleOutcome attack_ensemble_models(const std::vector<Model>& models,
                                       const std::vector<VideoClip>& clips,
                                       const DummyFrames& dummy, const AttackConfig& config) {
    if (models.empty()) throw std::invalid_argument("need at least one model");
    if (clips.empty()) throw std::invalid_argument("need at least one clip");
    int budget = config.max_iters > 0
                     ? config.max_iters
                     : default_budget_ensemble(static_cast<int>(models.size()),
                                               static_cast<int>(clips.size()));
    EngineResult r = run_engine(as_ptrs(models), as_ptrs(clips), dummy, config, budget);
    EnsembleOutcome out;
    out.perturbation = quantized(r.e);
    out.iterations = r.iterations;
    out.objective_trace = r.trace;
    out.per_model = r.per;
    return out;
}

FeatureSimilarOutcome attack_feature_similar(const Model& model, const VideoClip& clip,
                                             const DummyFrames& dummy,
                                             const AttackConfig& config) {
    int budget = config.max_iters > 0 ? config.max_iters : default_budget_feature_similar();
    EngineResult r = run_engine({&model}, {&clip}, dummy, config, budget);
    FeatureSimilarOutcome out;
    out.outcome = r.per[0][0];
    if (!out.outcome.skipped) out.outcome.objective_trace = r.trace;
    out.diff_trace = r.diff_trace;
    if (!r.references.empty()) {
        out.reference = r.references[0];
        out.reference_start = r.reference_starts[0];
    } else {
        // lambda_l == 0 skips the penalty, but the slice is still drawn from
        // the same seed stream so reports can compare feature distances
        // across a lambda_l sweep.
        SupportPlan plan = plan_support(model, clip.frames.shape()[0], dummy, config.support);
        if (plan.delta_t > 0 && plan.clip_len >= plan.delta_t) {
            Rng rng(Rng::mix(config.seed, 0xD500u));
            int start = rng.uniform_int(plan.clip_len - plan.delta_t + 1);
            out.reference_start = start;
            std::size_t frame =
                static_cast<std::size_t>(model.width) * model.height * model.channels;
            Tensor slice(plan.e_shape, 0.0);
            for (std::size_t i = 0; i < slice.size(); ++i) {
                slice[i] = clip.frames[static_cast<std::size_t>(start) * frame + i];
            }
            out.reference = slice;
        } else {
            out.reference_start = -1;
        }
    }
    return out;
}

std::vector<Tensor> initial_gradients(const Model& model, const std::vector<VideoClip>& clips,
                                      const DummyFrames& dummy, const AttackConfig& config) {
    if (clips.empty()) throw std::invalid_argument("need at least one clip");
    const Shape& f0 = clips[0].frames.shape();
    SupportPlan plan = plan_support(model, f0[0], dummy, config.support);
    validate_common(config, 1, static_cast<int>(clips.size()), model.class_count,
                    model.tap_count(), model.width, model.height);
    AttackConfig plain = config;
    plain.lambda_l = 0.0;  // gradients of the classification loss alone
    plain.target_label = -1;
    CraftGraph cg = build_craft_graph(model, plan, plain, dummy);

    std::vector<Tensor> grads;
    grads.reserve(clips.size());
    Tensor e0(plan.e_shape, 0.0);
    for (const VideoClip& c : clips) {
        if (c.frames.shape() != f0) {
            throw std::invalid_argument("batch clips must share dims");
        }
        Bindings b;
        b["e"] = e0;
        b["base"] = c.frames;
        b["y"] = onehot(c.label, model.class_count);
        cg.g.eval(b);
        GradMap gm = cg.g.backward(cg.loss, {cg.e});
        grads.push_back(gm.at(cg.e));
    }
    return grads;
}

}  // namespace a2fm

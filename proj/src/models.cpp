#include "a2fm/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace a2fm {

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Conv3DTiny: return "conv3d_tiny";
        case ModelKind::Factorized21DTiny: return "factorized21d_tiny";
        case ModelKind::CnnRecurrentTiny: return "cnn_recurrent_tiny";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "conv3d_tiny") return ModelKind::Conv3DTiny;
    if (name == "factorized21d_tiny") return ModelKind::Factorized21DTiny;
    if (name == "cnn_recurrent_tiny") return ModelKind::CnnRecurrentTiny;
    throw std::invalid_argument("unknown model kind '" + name + "'");
}

Tensor onehot(int label, int class_count) {
    if (label < 0 || label >= class_count) {
        throw std::invalid_argument("label " + std::to_string(label) + " outside [0," +
                                    std::to_string(class_count) + ")");
    }
    Tensor y({class_count});
    y[label] = 1.0;
    return y;
}

namespace {

// Decay of the fixed recency weighting in the convolutional heads.
constexpr double kRecencyGamma = 0.6;

// Parameter block shapes in declared (checkpoint) order, a pure function of
// (kind, dims, K, hyper).
std::vector<std::pair<std::string, Shape>> param_layout(ModelKind kind, int input_len, int width,
                                                        int height, int channels, int class_count,
                                                        const ModelHyper& h) {
    int c1 = h.c1, c2 = h.c2;
    // spatial extents after two valid 3x3 convs with a 2x2 pool in between
    int w1 = width - 2, h1 = height - 2;
    int w2 = w1 / 2 - 2, h2 = h1 / 2 - 2;
    int half_t = input_len / 2;
    switch (kind) {
        case ModelKind::Conv3DTiny:
            return {{"conv1_w", {3, 3, 3, channels, c1}},
                    {"conv1_b", {c1}},
                    {"conv2_w", {3, 3, 3, c1, c2}},
                    {"conv2_b", {c2}},
                    {"fc_w", {half_t * w2 * h2 * c2, class_count}},
                    {"fc_b", {class_count}}};
        case ModelKind::Factorized21DTiny:
            return {{"s1_w", {1, 3, 3, channels, c1}},
                    {"s1_b", {c1}},
                    {"t1_w", {3, 1, 1, c1, c1}},
                    {"t1_b", {c1}},
                    {"s2_w", {1, 3, 3, c1, c2}},
                    {"s2_b", {c2}},
                    {"t2_w", {3, 1, 1, c2, c2}},
                    {"t2_b", {c2}},
                    {"fc_w", {half_t * w2 * h2 * c2, class_count}},
                    {"fc_b", {class_count}}};
        case ModelKind::CnnRecurrentTiny:
            return {{"enc1_w", {1, 3, 3, channels, c1}},
                    {"enc1_b", {c1}},
                    {"enc2_w", {1, 3, 3, c1, c2}},
                    {"enc2_b", {c2}},
                    {"gru_wx", {w2 * h2 * c2, 3 * h.hidden}},
                    {"gru_wh", {h.hidden, 3 * h.hidden}},
                    {"gru_bx", {3 * h.hidden}},
                    {"gru_bh", {3 * h.hidden}},
                    {"fc_w", {h.hidden, class_count}},
                    {"fc_b", {class_count}}};
    }
    throw std::invalid_argument("unknown model kind");
}

// Weight fan-in for the scaled uniform init; biases start at zero.
std::size_t fan_in_of(const std::string& name, const Shape& s) {
    if (s.size() == 5) return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];  // conv
    if (s.size() == 2) return static_cast<std::size_t>(s[0]);                       // dense / gru
    (void)name;
    return 0;  // bias
}

}  // namespace

namespace {

void assemble_body(Graph& g, const Model& m, int time_len, bool with_head, bool params_as_inputs,
                   ModelGraphRefs& refs) {
    std::size_t next = 0;
    auto P = [&]() {
        if (next >= m.params.size()) throw std::logic_error("parameter layout out of sync");
        const auto& [name, tensor] = m.params[next++];
        if (params_as_inputs) {
            int id = g.input(name, tensor.shape());
            refs.param_ids.push_back(id);
            return id;
        }
        return g.constant(tensor);
    };

    // P() draws depend on call order, so hoist each pair into named locals
    // (argument evaluation order is unspecified).
    auto conv = [&](int x, int pad_t) {
        int w = P();
        int b = P();
        return g.relu(g.conv3d(x, w, b, pad_t, 0, 0));
    };
    auto head_dense = [&](int x) {
        int w = P();
        int b = P();
        return g.dense(x, w, b);
    };
    // Fixed recency weighting on the last activation before the temporal
    // head pool: slot t carries weight proportional to gamma^(T-1-t),
    // normalized to unit root-mean-square so the rescaled activations keep
    // a trainable magnitude (mean-1 scaling amplified the final slot ~5x
    // and destabilized SGD at some seeds). The convolutional readouts thus
    // lean on the clip's ending, like their full-scale counterparts on
    // action videos.
    auto recency = [&](int x) {
        int w2 = (m.width - 2) / 2 - 2, h2 = (m.height - 2) / 2 - 2;
        Tensor w({time_len, w2, h2, m.hyper.c2});
        double sq = 0.0;
        for (int t = 0; t < time_len; ++t) sq += std::pow(kRecencyGamma, 2 * t);
        double rms = std::sqrt(sq / time_len);
        std::size_t per = w.size() / time_len;
        for (int t = 0; t < time_len; ++t) {
            double v = std::pow(kRecencyGamma, time_len - 1 - t) / rms;
            for (std::size_t i = 0; i < per; ++i) w[t * per + i] = v;
        }
        return g.mul(x, g.constant(w));
    };
    switch (m.kind) {
        case ModelKind::Conv3DTiny: {
            int r1 = conv(refs.clip, 1);
            refs.taps.push_back(r1);
            int p1 = g.mean_pool(r1, 1, 2, 2);
            int r2 = conv(p1, 1);
            refs.taps.push_back(r2);
            if (with_head) {
                refs.logits = head_dense(g.mean_pool(recency(r2), 2, 1, 1));
            }
            break;
        }
        case ModelKind::Factorized21DTiny: {
            int s1 = conv(refs.clip, 0);
            int t1 = conv(s1, 1);
            refs.taps.push_back(t1);
            int p1 = g.mean_pool(t1, 1, 2, 2);
            int s2 = conv(p1, 0);
            int t2 = conv(s2, 1);
            refs.taps.push_back(t2);
            if (with_head) {
                refs.logits = head_dense(g.mean_pool(recency(t2), 2, 1, 1));
            }
            break;
        }
        case ModelKind::CnnRecurrentTiny: {
            int e1 = conv(refs.clip, 0);
            refs.taps.push_back(e1);
            int p1 = g.mean_pool(e1, 1, 2, 2);
            int e2 = conv(p1, 0);
            refs.taps.push_back(e2);
            if (with_head) {
                int wx = P();
                int wh = P();
                int bx = P();
                int bh = P();
                int h = g.constant(Tensor({m.hyper.hidden}, 0.0));
                for (int t = 0; t < time_len; ++t) {
                    int xt = g.slice_time(e2, t, 1);
                    h = g.gru_cell(xt, h, wx, wh, bx, bh);
                }
                refs.logits = head_dense(h);  // final state carries the readout
            }
            break;
        }
    }
    // Head-less assembly must still register the head parameters as inputs
    // so bindings and layouts stay aligned; constants are simply skipped.
    if (!with_head && params_as_inputs) {
        while (next < m.params.size()) P();
    }
}

}  // namespace

ModelGraphRefs assemble_model_graph(Graph& g, const Model& m, int time_len, bool with_head,
                                    bool params_as_inputs, const std::string& input_name) {
    if (with_head && time_len != m.input_len) {
        throw std::invalid_argument("full model graph needs time_len == input_len (" +
                                    std::to_string(m.input_len) + "), got " + std::to_string(time_len));
    }
    ModelGraphRefs refs;
    refs.clip = g.input(input_name, {time_len, m.width, m.height, m.channels});
    assemble_body(g, m, time_len, with_head, params_as_inputs, refs);
    return refs;
}

ModelGraphRefs assemble_model_on(Graph& g, const Model& m, int input_node, bool with_head) {
    const Shape& s = g.node_at(input_node).shape;
    if (s.size() != 4 || s[1] != m.width || s[2] != m.height || s[3] != m.channels) {
        throw std::invalid_argument("model body needs a [T," + std::to_string(m.width) + "," +
                                    std::to_string(m.height) + "," + std::to_string(m.channels) +
                                    "] input node, got " + shape_str(s));
    }
    if (with_head && s[0] != m.input_len) {
        throw std::invalid_argument("full model graph needs time_len == input_len (" +
                                    std::to_string(m.input_len) + "), got " + std::to_string(s[0]));
    }
    ModelGraphRefs refs;
    refs.clip = input_node;
    assemble_body(g, m, s[0], with_head, false, refs);
    return refs;
}

void bind_params(Bindings& bindings, const Model& m) {
    for (const auto& [name, tensor] : m.params) bindings[name] = tensor;
}

Model build_model(ModelKind kind, int input_len, int width, int height, int channels,
                  int class_count, const ModelHyper& hyper, std::uint64_t seed) {
    if (input_len < 1 || width < 1 || height < 1 || channels < 1) {
        throw std::invalid_argument("model input dims must be positive");
    }
    if (class_count < 2) throw std::invalid_argument("class_count must be >= 2");
    if (hyper.c1 < 1 || hyper.c2 < 1 || hyper.hidden < 1) {
        throw std::invalid_argument("hidden sizes must be positive");
    }
    // The conv stack needs two valid 3x3 convs around a 2x2 pool...
    if (width < 8 || height < 8 || (width - 2) % 2 != 0 || (height - 2) % 2 != 0) {
        throw std::invalid_argument("width/height must be even and >= 8, got " +
                                    std::to_string(width) + "x" + std::to_string(height));
    }
    // ...and the conv heads pool time by 2.
    if (kind != ModelKind::CnnRecurrentTiny && input_len % 2 != 0) {
        throw std::invalid_argument("input_len must be even for " + std::string(model_kind_name(kind)));
    }

    Model m;
    m.kind = kind;
    m.input_len = input_len;
    m.width = width;
    m.height = height;
    m.channels = channels;
    m.class_count = class_count;
    m.hyper = hyper;

    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(kind)));
    for (const auto& [name, shape] : param_layout(kind, input_len, width, height, channels,
                                                  class_count, hyper)) {
        Tensor t(shape);
        std::size_t fan = fan_in_of(name, shape);
        if (fan > 0) {
            double a = 1.0 / std::sqrt(static_cast<double>(fan));
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
            t.quantize_f32();
        }
        m.params.emplace_back(name, std::move(t));
    }

    // Validate the assembled graph once so bad dims fail here, not at use.
    Graph g;
    assemble_model_graph(g, m, input_len, true, false);
    return m;
}

std::size_t count_parameters(const Model& m) {
    std::size_t n = 0;
    for (const auto& [name, tensor] : m.params) n += tensor.size();
    return n;
}

Prediction predict(const Model& m, const Tensor& clip) {
    if (clip.shape() != Shape{m.input_len, m.width, m.height, m.channels}) {
        throw std::invalid_argument("predict input " + shape_str(clip.shape()) + " != expected " +
                                    shape_str({m.input_len, m.width, m.height, m.channels}));
    }
    for (std::size_t i = 0; i < clip.size(); ++i) {
        if (clip[i] < 0.0 || clip[i] > 1.0) {
            throw std::invalid_argument("predict input pixels must lie in [0,1]");
        }
    }
    Graph g;
    ModelGraphRefs refs = assemble_model_graph(g, m, m.input_len, true, false);
    int probs = g.softmax(refs.logits);
    g.eval({{"clip", clip}});

    Prediction pred;
    pred.probs = g.value(probs);
    pred.label = 0;
    for (int i = 1; i < m.class_count; ++i) {
        if (pred.probs[i] > pred.probs[pred.label]) pred.label = i;  // ties keep the lowest index
    }
    return pred;
}

Tensor features_at(const Model& m, const Tensor& frames, int tap) {
    if (tap < 0 || tap >= m.tap_count()) {
        throw std::invalid_argument("layer tap " + std::to_string(tap) + " outside [0," +
                                    std::to_string(m.tap_count()) + ")");
    }
    if (frames.rank() != 4 || frames.extent(1) != m.width || frames.extent(2) != m.height ||
        frames.extent(3) != m.channels) {
        throw std::invalid_argument("features_at frames " + shape_str(frames.shape()) +
                                    " incompatible with model " +
                                    shape_str({-1, m.width, m.height, m.channels}));
    }
    if (tap == 0) return frames;
    Graph g;
    ModelGraphRefs refs = assemble_model_graph(g, m, frames.extent(0), false, false);
    g.eval({{"clip", frames}});
    return g.value(refs.taps[tap - 1]);
}

TrainReport train_model(Model& m, const Dataset& dataset, const TrainHyper& hyper) {
    auto t0 = std::chrono::steady_clock::now();
    if (dataset.train_idx.empty()) throw std::invalid_argument("training needs a non-empty train split");
    if (dataset.config.class_count != m.class_count) {
        throw std::invalid_argument("dataset classes " + std::to_string(dataset.config.class_count) +
                                    " != model classes " + std::to_string(m.class_count));
    }
    if (hyper.epochs < 0 || hyper.batch < 1 || !(hyper.learning_rate > 0.0) ||
        hyper.label_smoothing < 0.0 || hyper.label_smoothing >= 1.0 ||
        hyper.suffix_fraction < 0.0 || hyper.suffix_fraction >= 1.0 ||
        hyper.suffix_smoothing < 0.0 || hyper.suffix_smoothing >= 1.0) {
        throw std::invalid_argument("bad training hyperparameters");
    }

    auto padded_input = [&](const Tensor& frames) {
        int t = frames.extent(0);
        if (t > m.input_len) {
            throw std::invalid_argument("clip length " + std::to_string(t) + " exceeds model input " +
                                        std::to_string(m.input_len));
        }
        return t == m.input_len ? frames : pad_clip(frames, m.input_len - t);
    };

    std::vector<Tensor> inputs;
    std::vector<int> labels;
    inputs.reserve(dataset.train_idx.size());
    for (int idx : dataset.train_idx) {
        inputs.push_back(padded_input(dataset.clips[idx].frames));
        labels.push_back(dataset.clips[idx].label);
    }

    // Card-suffixed variants: the pad slots show one of the ending cards
    // instead of last-frame repeats, cycling the three patterns.
    std::vector<Tensor> suffixed;
    if (hyper.suffix_fraction > 0.0) {
        const PatternKind patterns[3] = {PatternKind::GlyphOnDark, PatternKind::GlyphOnLight,
                                         PatternKind::GlyphLarge};
        suffixed.resize(inputs.size());
        std::size_t frame =
            static_cast<std::size_t>(m.width) * m.height * m.channels;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            int t = dataset.clips[dataset.train_idx[i]].frames.extent(0);
            int pad = m.input_len - t;
            if (pad <= 0) continue;
            DummyFrames card =
                make_dummy_frames(patterns[i % 3], pad, m.width, m.height, m.channels);
            Tensor v = inputs[i];
            std::memcpy(v.data() + static_cast<std::size_t>(t) * frame, card.frames.data(),
                        card.frames.size() * sizeof(double));
            suffixed[i] = std::move(v);
        }
    }

    Graph g;
    ModelGraphRefs refs = assemble_model_graph(g, m, m.input_len, true, true);
    int label_in = g.input("label", {m.class_count});
    int loss = g.softmax_xent(refs.logits, label_in);

    Bindings bind;
    bind_params(bind, m);

    auto smoothed_targets = [&](double eps) {
        std::vector<Tensor> ts(static_cast<std::size_t>(m.class_count));
        for (int k = 0; k < m.class_count; ++k) {
            Tensor t = onehot(k, m.class_count);
            for (std::size_t p = 0; p < t.size(); ++p) {
                t[p] = (1.0 - eps) * t[p] + eps / m.class_count;
            }
            ts[static_cast<std::size_t>(k)] = t;
        }
        return ts;
    };
    std::vector<Tensor> targets = smoothed_targets(hyper.label_smoothing);
    std::vector<Tensor> suffixed_targets =
        smoothed_targets(std::max(hyper.label_smoothing, hyper.suffix_smoothing));

    TrainReport report;
    report.epochs = hyper.epochs;
    Rng rng(Rng::mix(hyper.seed, 0x7124ull));
    std::vector<int> order(inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<Tensor> acc(m.params.size());
    Rng aug_rng(Rng::mix(hyper.seed, 0xA36Full));
    std::vector<bool> use_card(inputs.size(), false);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            std::swap(order[i], order[rng.uniform_int(i + 1)]);
        }
        if (!suffixed.empty()) {
            // Coins drawn in index order so they are independent of shuffling.
            for (std::size_t i = 0; i < use_card.size(); ++i) {
                use_card[i] =
                    aug_rng.uniform() < hyper.suffix_fraction && suffixed[i].size() > 0;
            }
        }
        double epoch_loss = 0.0;
        for (std::size_t pos = 0; pos < order.size();) {
            std::size_t take = std::min<std::size_t>(hyper.batch, order.size() - pos);
            for (std::size_t k = 0; k < m.params.size(); ++k) acc[k] = Tensor(m.params[k].second.shape());
            for (std::size_t b = 0; b < take; ++b) {
                int s = order[pos + b];
                bool carded = use_card[static_cast<std::size_t>(s)];
                bind["clip"] = carded ? suffixed[static_cast<std::size_t>(s)] : inputs[s];
                bind["label"] = (carded ? suffixed_targets : targets)[static_cast<std::size_t>(labels[s])];
                g.eval(bind);
                epoch_loss += g.value(loss)[0];
                GradMap grads = g.backward(loss, refs.param_ids);
                for (std::size_t k = 0; k < m.params.size(); ++k) {
                    const Tensor& gk = grads.at(refs.param_ids[k]);
                    for (std::size_t p = 0; p < gk.size(); ++p) acc[k][p] += gk[p];
                }
            }
            double step = hyper.learning_rate / static_cast<double>(take);
            for (std::size_t k = 0; k < m.params.size(); ++k) {
                Tensor& theta = m.params[k].second;
                for (std::size_t p = 0; p < theta.size(); ++p) theta[p] -= step * acc[k][p];
                bind[m.params[k].first] = theta;
            }
            pos += take;
        }
        report.loss_trace.push_back(epoch_loss / static_cast<double>(order.size()));
    }

    // Artifact boundary: parameters leave training f32-representable.
    for (auto& [name, tensor] : m.params) tensor.quantize_f32();

    auto accuracy = [&](const std::vector<int>& split) {
        if (split.empty()) return 0.0;
        int hits = 0;
        for (int idx : split) {
            if (predict(m, padded_input(dataset.clips[idx].frames)).label == dataset.clips[idx].label) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(split.size());
    };
    report.train_accuracy = accuracy(dataset.train_idx);
    report.test_accuracy = accuracy(dataset.test_idx);
    report.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace a2fm

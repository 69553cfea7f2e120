#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "a2fm/graph.hpp"
#include "a2fm/tensor.hpp"
#include "a2fm/videodata.hpp"

namespace a2fm {

enum class ModelKind { Conv3DTiny, Factorized21DTiny, CnnRecurrentTiny };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelHyper {
    int c1 = 6;      // first conv block channels
    int c2 = 12;     // second conv block channels
    int hidden = 24; // recurrent hidden width (CnnRecurrentTiny only)
};

// A trained model is immutable for readers; train_model mutates in place.
struct Model {
    ModelKind kind = ModelKind::Conv3DTiny;
    int input_len = 14;
    int width = 16;
    int height = 16;
    int channels = 1;
    int class_count = 4;
    ModelHyper hyper;
    // Named blocks in declared, fixed order (checkpoint order).
    std::vector<std::pair<std::string, Tensor>> params;

    // Layer taps: 0 = raw input frames, 1 = first block activation,
    // 2 = second block activation.
    int tap_count() const { return 3; }
};

struct TrainHyper {
    int epochs = 40;
    double learning_rate = 0.15;
    int batch = 16;
    double label_smoothing = 0.0;  // in [0,1): target = (1-eps)*onehot + eps/K
    double suffix_fraction = 0.0;   // in [0,1): chance a training input's pad
                                    // slots show an ending card instead of
                                    // last-frame repeats, so suffixed inputs
                                    // are in-distribution at eval time
    double suffix_smoothing = 0.0;  // in [0,1): extra label smoothing on
                                    // card-suffixed inputs; a card hides the
                                    // ending, so the model is taught to be
                                    // correct but unsure there
    std::uint64_t seed = 0;
};

struct TrainReport {
    int epochs = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wallclock_s = 0.0;
    std::vector<double> loss_trace;  // mean train loss per epoch
};

struct Prediction {
    Tensor probs;  // [K], sums to 1
    int label = 0; // argmax, ties toward the lowest index
};

Model build_model(ModelKind kind, int input_len, int width, int height, int channels,
                  int class_count, const ModelHyper& hyper, std::uint64_t seed);

std::size_t count_parameters(const Model& model);

// Plain mini-batch gradient descent with softmax cross-entropy. Clips
// shorter than input_len are padded by repeating their last frame.
TrainReport train_model(Model& model, const Dataset& dataset, const TrainHyper& hyper);

Prediction predict(const Model& model, const Tensor& clip);

// phi_l: tap 0 returns frames unchanged; taps >= 1 run the conv prefix,
// which accepts any frame count n >= 1 (time-same padding).
Tensor features_at(const Model& model, const Tensor& frames, int tap);

// Graph assembly for training and the attack engine. The clip input node is
// named `input_name`; parameters enter as named Input nodes when
// params_as_inputs (training), or as baked Constant nodes otherwise.
// with_head requires time_len == model.input_len.
struct ModelGraphRefs {
    int clip = -1;
    int logits = -1;               // -1 when built without the head
    std::vector<int> taps;         // tap l >= 1 -> node id (index 0 -> tap 1)
    std::vector<int> param_ids;    // input-mode only, in declared order
};
ModelGraphRefs assemble_model_graph(Graph& g, const Model& model, int time_len, bool with_head,
                                    bool params_as_inputs, const std::string& input_name = "clip");

// Same body, but grown on an existing node (parameters enter as constants);
// for graphs that assemble the model input from several segments.
ModelGraphRefs assemble_model_on(Graph& g, const Model& model, int input_node, bool with_head);

// Bind every parameter block by name (input-mode graphs).
void bind_params(Bindings& bindings, const Model& model);

Tensor onehot(int label, int class_count);

}  // namespace a2fm

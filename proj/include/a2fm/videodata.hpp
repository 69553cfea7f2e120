#pragma once

#include <cstdint>
#include <vector>

#include "a2fm/tensor.hpp"

namespace a2fm {

// A video is a [T,W,H,C] tensor with values in [0,1].
struct VideoClip {
    Tensor frames;
    int label = 0;
};

struct DataConfig {
    int class_count = 4;
    int clips_per_class = 40;
    int frames = 12;
    int width = 16;
    int height = 16;
    int channels = 1;
    double noise_amp = 0.03;        // seeded pixel noise, amplitude <= 0.05
    double train_fraction = 0.9;    // per-class split ratio
    double accel_step = 0.12;       // class-k along-path acceleration = k * accel_step
};

struct Dataset {
    DataConfig config;
    std::uint64_t seed = 0;
    std::vector<VideoClip> clips;     // class-major order
    std::vector<int> train_idx;
    std::vector<int> test_idx;
};

enum class PatternKind { GlyphOnDark, GlyphOnLight, GlyphLarge };

const char* pattern_name(PatternKind kind);

struct DummyFrames {
    Tensor frames;  // [delta_t, W, H, C], identical across frames
    PatternKind pattern = PatternKind::GlyphOnDark;
};

// Motion classes: a bright blob sliding along one shared torus line with a
// shared launch speed and a class-specific acceleration (k * accel_step), so
// clips of different classes start out alike and diverge toward the end;
// clips of a class differ only in seeded start phase and noise.
// Deterministic per seed.
Dataset synth_dataset(const DataConfig& config, std::uint64_t seed);

// One clip of the given class drawn from its own seed stream. The dataset
// and any evaluation pools are built from this one generator.
VideoClip synth_clip(const DataConfig& config, int label, std::uint64_t clip_seed);

// Fresh clips (clips_per_class per class) disjoint from any dataset stream;
// used as attack evaluation pools.
std::vector<VideoClip> eval_pool(const DataConfig& config, int clips_per_class, std::uint64_t seed);

// Static ending card, identical across its delta_t frames. GlyphOnDark is a
// bright glyph grid on near-black, GlyphOnLight its exact photometric
// inverse, GlyphLarge the grid at 2x cell size.
DummyFrames make_dummy_frames(PatternKind pattern, int delta_t, int width, int height, int channels);

// Foreground (glyph) support of the pattern as a [W,H] 0/1 tensor; the same
// support regardless of polarity. Masks are derived from this.
Tensor glyph_foreground(PatternKind pattern, int width, int height);

// [clip | dummy | pad copies of the clip's last original frame]. The first
// T frames are bit-identical to the input; an empty dummy tensor means
// "no dummy frames".
VideoClip append_frames(const VideoClip& clip, const DummyFrames& dummy, int pad);

// Clean-clip input padding: repeat the last frame `extra` times.
Tensor pad_clip(const Tensor& frames, int extra);

}  // namespace a2fm

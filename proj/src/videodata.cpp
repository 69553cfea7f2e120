#include "a2fm/videodata.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace a2fm {

const char* pattern_name(PatternKind kind) {
    switch (kind) {
        case PatternKind::GlyphOnDark: return "glyph_on_dark";
        case PatternKind::GlyphOnLight: return "glyph_on_light";
        case PatternKind::GlyphLarge: return "glyph_large";
    }
    return "?";
}

namespace {

// Exactly representable in f32 so GlyphOnLight = 1 - GlyphOnDark holds
// bit-exactly after quantization.
constexpr double kForeground = 0.9375;
constexpr double kBackground = 0.0625;
constexpr double kBlobSigma = 1.3;

// 3x3 glyph bitmaps, cycled T,F,W across grid cells.
constexpr int kGlyphs[3][9] = {
    {1, 1, 1, 0, 1, 0, 0, 1, 0},  // T
    {1, 1, 1, 1, 1, 0, 1, 0, 0},  // F
    {1, 0, 1, 1, 0, 1, 1, 1, 1},  // W
};
constexpr int kMargin = 2;

void check_dims(int frames, int width, int height, int channels) {
    if (frames < 1 || width < 1 || height < 1 || channels < 1) {
        throw std::invalid_argument("video dims must be positive, got T=" + std::to_string(frames) +
                                    " W=" + std::to_string(width) + " H=" + std::to_string(height) +
                                    " C=" + std::to_string(channels));
    }
}

double wrap_dist(double d, double period) {
    d = std::fmod(d, period);
    if (d < -period / 2) d += period;
    if (d > period / 2) d -= period;
    return d;
}

}  // namespace

VideoClip synth_clip(const DataConfig& cfg, int label, std::uint64_t clip_seed) {
    check_dims(cfg.frames, cfg.width, cfg.height, cfg.channels);
    if (label < 0 || label >= cfg.class_count) {
        throw std::invalid_argument("label " + std::to_string(label) + " out of range");
    }
    if (cfg.accel_step <= 0.0 || cfg.accel_step > 1.0) {
        throw std::invalid_argument("accel_step must be in (0,1]");
    }
    Rng rng(clip_seed);
    // All classes share one path (anchor + direction) and launch speed; the
    // class sits in the acceleration, so early frames look alike and the
    // trajectory's ending separates the classes. The small phase range keeps
    // final positions class-specific as well.
    constexpr double kTheta = 0.675;
    constexpr double kLaunchSpeed = 1.0;
    double ax = 0.31 * cfg.width;
    double ay = 0.47 * cfg.height;
    double accel = cfg.accel_step * label;
    double s = rng.uniform(0.0, (cfg.width + cfg.height) / 8.0);

    Tensor frames({cfg.frames, cfg.width, cfg.height, cfg.channels});
    double inv2s2 = 1.0 / (2.0 * kBlobSigma * kBlobSigma);
    for (int t = 0; t < cfg.frames; ++t) {
        double u = s + kLaunchSpeed * t + 0.5 * accel * t * t;
        double px = std::fmod(ax + std::cos(kTheta) * u, static_cast<double>(cfg.width));
        double py = std::fmod(ay + std::sin(kTheta) * u, static_cast<double>(cfg.height));
        if (px < 0) px += cfg.width;
        if (py < 0) py += cfg.height;
        for (int x = 0; x < cfg.width; ++x) {
            double dx = wrap_dist(x - px, cfg.width);
            for (int y = 0; y < cfg.height; ++y) {
                double dy = wrap_dist(y - py, cfg.height);
                double blob = kForeground * std::exp(-(dx * dx + dy * dy) * inv2s2);
                for (int c = 0; c < cfg.channels; ++c) {
                    double v = blob + rng.uniform(-cfg.noise_amp, cfg.noise_amp);
                    frames[frames.offset4(t, x, y, c)] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    frames.quantize_f32();
    return VideoClip{std::move(frames), label};
}

Dataset synth_dataset(const DataConfig& cfg, std::uint64_t seed) {
    if (cfg.class_count < 2) throw std::invalid_argument("class_count must be >= 2");
    if (cfg.clips_per_class < 1) throw std::invalid_argument("clips_per_class must be >= 1");
    if (cfg.noise_amp < 0.0 || cfg.noise_amp > 0.05) {
        throw std::invalid_argument("noise_amp must be within [0, 0.05]");
    }
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0) {
        throw std::invalid_argument("train_fraction must be in (0,1)");
    }
    check_dims(cfg.frames, cfg.width, cfg.height, cfg.channels);

    Dataset ds;
    ds.config = cfg;
    ds.seed = seed;
    ds.clips.reserve(static_cast<std::size_t>(cfg.class_count) * cfg.clips_per_class);
    for (int k = 0; k < cfg.class_count; ++k) {
        std::uint64_t class_seed = Rng::mix(seed, static_cast<std::uint64_t>(k));
        int train_n = static_cast<int>(cfg.clips_per_class * cfg.train_fraction);
        if (train_n < 1) train_n = 1;
        if (train_n >= cfg.clips_per_class && cfg.clips_per_class > 1) train_n = cfg.clips_per_class - 1;
        for (int i = 0; i < cfg.clips_per_class; ++i) {
            int idx = static_cast<int>(ds.clips.size());
            ds.clips.push_back(synth_clip(cfg, k, Rng::mix(class_seed, static_cast<std::uint64_t>(i))));
            (i < train_n ? ds.train_idx : ds.test_idx).push_back(idx);
        }
    }
    return ds;
}

std::vector<VideoClip> eval_pool(const DataConfig& cfg, int clips_per_class, std::uint64_t seed) {
    if (clips_per_class < 1) throw std::invalid_argument("eval pool clips_per_class must be >= 1");
    // Distinct salt keeps this stream disjoint from synth_dataset's.
    std::uint64_t pool_seed = Rng::mix(seed, 0xE7A1ull);
    std::vector<VideoClip> pool;
    pool.reserve(static_cast<std::size_t>(cfg.class_count) * clips_per_class);
    for (int k = 0; k < cfg.class_count; ++k) {
        std::uint64_t class_seed = Rng::mix(pool_seed, static_cast<std::uint64_t>(k));
        for (int i = 0; i < clips_per_class; ++i) {
            pool.push_back(synth_clip(cfg, k, Rng::mix(class_seed, static_cast<std::uint64_t>(i))));
        }
    }
    return pool;
}

Tensor glyph_foreground(PatternKind pattern, int width, int height) {
    check_dims(1, width, height, 1);
    // 2x cells for the large pattern; glyph pixels become scale x scale blocks.
    int scale = pattern == PatternKind::GlyphLarge ? 2 : 1;
    int cell = 4 * scale;
    Tensor fg({width, height});
    int usable_w = width - 2 * kMargin;
    int usable_h = height - 2 * kMargin;
    if (usable_w < cell || usable_h < cell) return fg;  // too small for any glyph
    int cols = usable_w / cell;
    int rows = usable_h / cell;
    for (int row = 0; row < rows; ++row)
        for (int col = 0; col < cols; ++col) {
            const int* glyph = kGlyphs[(row * cols + col) % 3];
            int base_x = kMargin + col * cell;
            int base_y = kMargin + row * cell;
            for (int gy = 0; gy < 3; ++gy)
                for (int gx = 0; gx < 3; ++gx) {
                    if (!glyph[gy * 3 + gx]) continue;
                    for (int sy = 0; sy < scale; ++sy)
                        for (int sx = 0; sx < scale; ++sx) {
                            int x = base_x + gx * scale + sx;
                            int y = base_y + gy * scale + sy;
                            fg[static_cast<std::size_t>(x) * height + y] = 1.0;
                        }
                }
        }
    return fg;
}

DummyFrames make_dummy_frames(PatternKind pattern, int delta_t, int width, int height, int channels) {
    check_dims(delta_t, width, height, channels);
    Tensor fg = glyph_foreground(pattern, width, height);
    bool invert = pattern == PatternKind::GlyphOnLight;
    Tensor frames({delta_t, width, height, channels});
    for (int t = 0; t < delta_t; ++t)
        for (int x = 0; x < width; ++x)
            for (int y = 0; y < height; ++y) {
                double v = fg[static_cast<std::size_t>(x) * height + y] > 0.5 ? kForeground : kBackground;
                if (invert) v = 1.0 - v;
                for (int c = 0; c < channels; ++c) frames[frames.offset4(t, x, y, c)] = v;
            }
    frames.quantize_f32();
    return DummyFrames{std::move(frames), pattern};
}

VideoClip append_frames(const VideoClip& clip, const DummyFrames& dummy, int pad) {
    const Tensor& f = clip.frames;
    if (f.rank() != 4) throw std::invalid_argument("clip frames must be rank 4, got " + shape_str(f.shape()));
    if (pad < 0) throw std::invalid_argument("pad must be >= 0");
    int dt = 0;
    if (!dummy.frames.empty()) {
        const Tensor& d = dummy.frames;
        if (d.rank() != 4 || d.extent(1) != f.extent(1) || d.extent(2) != f.extent(2) ||
            d.extent(3) != f.extent(3)) {
            throw std::invalid_argument("dummy frames " + shape_str(d.shape()) +
                                        " do not match clip " + shape_str(f.shape()));
        }
        dt = d.extent(0);
    }
    int t = f.extent(0);
    Tensor out({t + dt + pad, f.extent(1), f.extent(2), f.extent(3)});
    std::size_t per = f.size() / static_cast<std::size_t>(t);
    std::copy(f.data(), f.data() + f.size(), out.data());
    if (dt > 0) {
        std::copy(dummy.frames.data(), dummy.frames.data() + dummy.frames.size(), out.data() + f.size());
    }
    const double* last = f.data() + static_cast<std::size_t>(t - 1) * per;
    for (int p = 0; p < pad; ++p) {
        std::copy(last, last + per, out.data() + (static_cast<std::size_t>(t + dt + p)) * per);
    }
    return VideoClip{std::move(out), clip.label};
}

Tensor pad_clip(const Tensor& frames, int extra) {
    VideoClip tmp{frames, 0};
    return append_frames(tmp, DummyFrames{}, extra).frames;
}

}  // namespace a2fm

#include <cmath>
#include <stdexcept>

#include "a2fm/videodata.hpp"
#include "doctest.h"

using namespace a2fm;

namespace {

// Test-side copy of the shipped 3x3 glyph bitmaps and grid rule, for the
// enumeration check: margin 2, cell 4, glyphs cycle T,F,W.
int enumerate_foreground_16x16() {
    const int glyphs[3][9] = {
        {1, 1, 1, 0, 1, 0, 0, 1, 0},  // T
        {1, 1, 1, 1, 1, 0, 1, 0, 0},  // F
        {1, 0, 1, 1, 0, 1, 1, 1, 1},  // W
    };
    int count = 0;
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) {
            const int* g = glyphs[(row * 3 + col) % 3];
            for (int i = 0; i < 9; ++i) count += g[i];
        }
    return count;
}

double mean_pairwise_l2(const std::vector<const Tensor*>& a, const std::vector<const Tensor*>& b,
                        bool same_set) {
    double total = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = same_set ? i + 1 : 0; j < b.size(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a[i]->size(); ++p) {
                double d = (*a[i])[p] - (*b[j])[p];
                s += d * d;
            }
            total += std::sqrt(s);
            ++pairs;
        }
    return total / pairs;
}

}  // namespace

TEST_SUITE_BEGIN("videodata");

TEST_CASE("default dataset has 160 balanced clips split 144/16") {
    Dataset ds = synth_dataset(DataConfig{}, 42);
    CHECK(ds.clips.size() == 160);
    CHECK(ds.train_idx.size() == 144);
    CHECK(ds.test_idx.size() == 16);
    std::vector<int> counts(4, 0);
    for (const VideoClip& c : ds.clips) {
        REQUIRE(c.label >= 0);
        REQUIRE(c.label < 4);
        counts[c.label]++;
        REQUIRE(c.frames.shape() == Shape{12, 16, 16, 1});
    }
    for (int c : counts) CHECK(c == 40);

    // splits disjoint and exhaustive
    std::vector<char> seen(160, 0);
    for (int i : ds.train_idx) seen[i] += 1;
    for (int i : ds.test_idx) seen[i] += 1;
    for (char s : seen) CHECK(s == 1);
}

TEST_CASE("dataset values stay in [0,1]") {
    Dataset ds = synth_dataset(DataConfig{.clips_per_class = 3}, 7);
    for (const VideoClip& c : ds.clips)
        for (std::size_t i = 0; i < c.frames.size(); ++i) {
            REQUIRE(c.frames[i] >= 0.0);
            REQUIRE(c.frames[i] <= 1.0);
        }
}

TEST_CASE("same seed gives bit-identical datasets, different seeds differ") {
    DataConfig cfg{.clips_per_class = 2};
    Dataset a = synth_dataset(cfg, 99);
    Dataset b = synth_dataset(cfg, 99);
    Dataset c = synth_dataset(cfg, 100);
    REQUIRE(a.clips.size() == b.clips.size());
    bool any_diff_c = false;
    for (std::size_t i = 0; i < a.clips.size(); ++i) {
        for (std::size_t p = 0; p < a.clips[i].frames.size(); ++p) {
            REQUIRE(a.clips[i].frames[p] == b.clips[i].frames[p]);
            if (a.clips[i].frames[p] != c.clips[i].frames[p]) any_diff_c = true;
        }
    }
    CHECK(any_diff_c);
}

TEST_CASE("degenerate configs are rejected") {
    CHECK_THROWS_AS(synth_dataset(DataConfig{.class_count = 1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.clips_per_class = 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.frames = 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.width = 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.channels = 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.noise_amp = 0.2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.accel_step = 0.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.accel_step = -0.1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(synth_dataset(DataConfig{.accel_step = 1.5}, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_dummy_frames(PatternKind::GlyphOnDark, 0, 16, 16, 1), std::invalid_argument);
}

TEST_CASE("classes start alike and diverge toward the end") {
    // The class lives in the acceleration: per-class mean frames are nearly
    // identical at the start of the clip and far apart at its end.
    DataConfig cfg{.clips_per_class = 8, .noise_amp = 0.0};
    Dataset ds = synth_dataset(cfg, 17);
    int T = cfg.frames;
    std::size_t per = static_cast<std::size_t>(cfg.width) * cfg.height * cfg.channels;
    // mean frame per (class, t)
    std::vector<std::vector<double>> mean(static_cast<std::size_t>(4) * T,
                                          std::vector<double>(per, 0.0));
    for (const VideoClip& c : ds.clips)
        for (int t = 0; t < T; ++t)
            for (std::size_t p = 0; p < per; ++p)
                mean[c.label * T + t][p] += c.frames[t * per + p] / cfg.clips_per_class;
    auto dist = [&](int ka, int kb, int t) {
        double s = 0.0;
        for (std::size_t p = 0; p < per; ++p) {
            double d = mean[ka * T + t][p] - mean[kb * T + t][p];
            s += d * d;
        }
        return std::sqrt(s);
    };
    for (int ka = 0; ka < 4; ++ka)
        for (int kb = ka + 1; kb < 4; ++kb) {
            double early = std::max(dist(ka, kb, 0), dist(ka, kb, 1));
            double late = dist(ka, kb, T - 1);
            CHECK(late > 3.0 * early);
        }
}

TEST_CASE("clips of a class share motion and differ only in phase") {
    // With noise off, inter-class distances dominate intra-class distances.
    DataConfig cfg{.clips_per_class = 6, .noise_amp = 0.0};
    Dataset ds = synth_dataset(cfg, 5);
    std::vector<std::vector<const Tensor*>> byclass(4);
    for (const VideoClip& c : ds.clips) byclass[c.label].push_back(&c.frames);
    double intra = 0.0, inter = 0.0;
    int ni = 0, nx = 0;
    for (int k = 0; k < 4; ++k) {
        intra += mean_pairwise_l2(byclass[k], byclass[k], true);
        ++ni;
        for (int j = k + 1; j < 4; ++j) {
            inter += mean_pairwise_l2(byclass[k], byclass[j], false);
            ++nx;
        }
    }
    CHECK(inter / nx > intra / ni);
}

TEST_CASE("dummy frames are deterministic static cards with the frozen foreground count") {
    DummyFrames dark = make_dummy_frames(PatternKind::GlyphOnDark, 2, 16, 16, 1);
    DummyFrames dark2 = make_dummy_frames(PatternKind::GlyphOnDark, 2, 16, 16, 1);
    CHECK(dark.frames.shape() == Shape{2, 16, 16, 1});
    for (std::size_t i = 0; i < dark.frames.size(); ++i) {
        REQUIRE(dark.frames[i] == dark2.frames[i]);
        REQUIRE(dark.frames[i] >= 0.0);
        REQUIRE(dark.frames[i] <= 1.0);
    }
    // identical across the delta_t frames
    std::size_t per = dark.frames.size() / 2;
    for (std::size_t i = 0; i < per; ++i) REQUIRE(dark.frames[i] == dark.frames[per + i]);

    // enumeration of the shipped bitmap == generated bright-pixel count
    int expected = enumerate_foreground_16x16();
    CHECK(expected == 54);
    Tensor fg = glyph_foreground(PatternKind::GlyphOnDark, 16, 16);
    int bright = 0;
    for (std::size_t i = 0; i < fg.size(); ++i) bright += fg[i] > 0.5 ? 1 : 0;
    CHECK(bright == expected);
    // the card's bright pixels are exactly the foreground support
    int card_bright = 0;
    for (std::size_t i = 0; i < per; ++i) card_bright += dark.frames[i] > 0.5 ? 1 : 0;
    CHECK(card_bright == expected);
}

TEST_CASE("glyph-on-light is the exact photometric inverse") {
    DummyFrames dark = make_dummy_frames(PatternKind::GlyphOnDark, 1, 16, 16, 1);
    DummyFrames light = make_dummy_frames(PatternKind::GlyphOnLight, 1, 16, 16, 1);
    for (std::size_t i = 0; i < dark.frames.size(); ++i) {
        REQUIRE(light.frames[i] == 1.0 - dark.frames[i]);
    }
    // same foreground support regardless of polarity
    Tensor fd = glyph_foreground(PatternKind::GlyphOnDark, 16, 16);
    Tensor fl = glyph_foreground(PatternKind::GlyphOnLight, 16, 16);
    for (std::size_t i = 0; i < fd.size(); ++i) REQUIRE(fd[i] == fl[i]);
}

TEST_CASE("glyph-large uses 2x cells") {
    Tensor fg = glyph_foreground(PatternKind::GlyphLarge, 16, 16);
    int bright = 0;
    for (std::size_t i = 0; i < fg.size(); ++i) bright += fg[i] > 0.5 ? 1 : 0;
    // one 2x glyph fits at 16x16: the T glyph's 5 pixels, each as a 2x2 block
    CHECK(bright == 20);
    DummyFrames large = make_dummy_frames(PatternKind::GlyphLarge, 1, 16, 16, 1);
    DummyFrames dark = make_dummy_frames(PatternKind::GlyphOnDark, 1, 16, 16, 1);
    bool differs = false;
    for (std::size_t i = 0; i < large.frames.size(); ++i) {
        if (large.frames[i] != dark.frames[i]) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("append_frames keeps the prefix bit-exact and orders segments correctly") {
    DataConfig cfg{.clips_per_class = 1};
    Dataset ds = synth_dataset(cfg, 3);
    const VideoClip& clip = ds.clips[0];
    DummyFrames dummy = make_dummy_frames(PatternKind::GlyphOnDark, 2, 16, 16, 1);

    VideoClip out = append_frames(clip, dummy, 0);
    CHECK(out.frames.extent(0) == 14);
    CHECK(out.label == clip.label);
    std::size_t per = clip.frames.size() / 12;
    for (std::size_t i = 0; i < clip.frames.size(); ++i) REQUIRE(out.frames[i] == clip.frames[i]);
    for (std::size_t i = 0; i < dummy.frames.size(); ++i)
        REQUIRE(out.frames[clip.frames.size() + i] == dummy.frames[i]);

    // pad frames repeat the last *original* frame, after the dummy block
    VideoClip padded = append_frames(clip, dummy, 2);
    CHECK(padded.frames.extent(0) == 16);
    const double* last = clip.frames.data() + 11 * per;
    for (int p = 0; p < 2; ++p)
        for (std::size_t i = 0; i < per; ++i)
            REQUIRE(padded.frames[(14 + p) * per + i] == last[i]);
}

TEST_CASE("append with no dummy frames is identity or pure padding") {
    DataConfig cfg{.clips_per_class = 1};
    Dataset ds = synth_dataset(cfg, 3);
    const VideoClip& clip = ds.clips[0];
    DummyFrames none;  // empty tensor

    VideoClip same = append_frames(clip, none, 0);
    REQUIRE(same.frames.shape() == clip.frames.shape());
    for (std::size_t i = 0; i < clip.frames.size(); ++i) REQUIRE(same.frames[i] == clip.frames[i]);

    Tensor pad2 = pad_clip(clip.frames, 2);
    CHECK(pad2.extent(0) == 14);
    VideoClip via_append = append_frames(clip, none, 2);
    for (std::size_t i = 0; i < pad2.size(); ++i) REQUIRE(via_append.frames[i] == pad2[i]);
}

TEST_CASE("a 24-frame clip with 2 dummy and 2 pad frames becomes 28") {
    DataConfig cfg{.clips_per_class = 1, .frames = 24};
    Dataset ds = synth_dataset(cfg, 8);
    DummyFrames dummy = make_dummy_frames(PatternKind::GlyphOnLight, 2, 16, 16, 1);
    VideoClip out = append_frames(ds.clips[0], dummy, 2);
    CHECK(out.frames.extent(0) == 28);
}

TEST_CASE("append rejects spatial mismatch") {
    DataConfig cfg{.clips_per_class = 1};
    Dataset ds = synth_dataset(cfg, 3);
    DummyFrames wrong = make_dummy_frames(PatternKind::GlyphOnDark, 2, 8, 8, 1);
    CHECK_THROWS_AS(append_frames(ds.clips[0], wrong, 0), std::invalid_argument);
}

TEST_CASE("eval pool is balanced, deterministic and disjoint from the dataset stream") {
    DataConfig cfg{.clips_per_class = 2};
    std::vector<VideoClip> pool = eval_pool(cfg, 3, 42);
    std::vector<VideoClip> pool2 = eval_pool(cfg, 3, 42);
    CHECK(pool.size() == 12);
    std::vector<int> counts(4, 0);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        counts[pool[i].label]++;
        for (std::size_t p = 0; p < pool[i].frames.size(); ++p)
            REQUIRE(pool[i].frames[p] == pool2[i].frames[p]);
    }
    for (int c : counts) CHECK(c == 3);

    Dataset ds = synth_dataset(cfg, 42);
    bool differs = false;
    for (std::size_t p = 0; p < pool[0].frames.size(); ++p)
        if (pool[0].frames[p] != ds.clips[0].frames[p]) differs = true;
    CHECK(differs);
}

TEST_SUITE_END();

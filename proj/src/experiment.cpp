#include "a2fm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "a2fm/artifacts.hpp"
#include "json.hpp"

namespace a2fm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// Grid labels: shortest plain form ("0", "0.01", "0.5").
std::string num_label(double v) { return fmt("%g", v); }

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.good()) throw std::runtime_error("cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out.good()) throw std::runtime_error("cannot write " + path);
}

std::string field_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// Visit every member of a config section, rejecting keys outside the known
// set and wrapping value errors with the full field path.
using FieldHandler = std::pair<const char*, std::function<void(const json&)>>;

void walk_section(const json& obj, const std::string& prefix,
                  const std::vector<FieldHandler>& fields) {
    if (!obj.is_object()) {
        throw std::invalid_argument("config field " + prefix + " must be an object");
    }
    for (const auto& item : obj.items()) {
        const std::string& key = item.key();
        bool known = false;
        for (const FieldHandler& f : fields) {
            if (key != f.first) continue;
            known = true;
            try {
                f.second(item.value());
            } catch (const std::exception& e) {
                throw std::invalid_argument("config field " + field_path(prefix, key) + ": " +
                                            e.what());
            }
            break;
        }
        if (!known) {
            throw std::invalid_argument("unknown config field " + field_path(prefix, key));
        }
    }
}

template <typename T>
std::function<void(const json&)> into(T& slot) {
    return [&slot](const json& v) { slot = v.get<T>(); };
}

void parse_dataset(const json& obj, ExperimentConfig& c) {
    walk_section(obj, "dataset",
                 {{"class_count", into(c.data.class_count)},
                  {"clips_per_class", into(c.data.clips_per_class)},
                  {"frames", into(c.data.frames)},
                  {"width", into(c.data.width)},
                  {"height", into(c.data.height)},
                  {"channels", into(c.data.channels)},
                  {"noise_amp", into(c.data.noise_amp)},
                  {"train_fraction", into(c.data.train_fraction)},
                  {"accel_step", into(c.data.accel_step)},
                  {"seed", into(c.dataset_seed)},
                  {"eval_clips_per_class", into(c.eval_clips_per_class)}});
}

void parse_model(const json& obj, ExperimentConfig& c) {
    walk_section(obj, "model",
                 {{"kinds",
                   [&c](const json& v) {
                       std::vector<std::string> names = v.get<std::vector<std::string>>();
                       if (names.empty()) throw std::invalid_argument("needs at least one kind");
                       c.kinds.clear();
                       for (const std::string& n : names) c.kinds.push_back(model_kind_from_name(n));
                   }},
                  {"c1", into(c.hyper.c1)},
                  {"c2", into(c.hyper.c2)},
                  {"hidden", into(c.hyper.hidden)},
                  {"epochs", into(c.train.epochs)},
                  {"learning_rate", into(c.train.learning_rate)},
                  {"batch", into(c.train.batch)},
                  {"label_smoothing", into(c.train.label_smoothing)},
                  {"seed", into(c.train.seed)}});
}

void parse_attack(const json& obj, ExperimentConfig& c) {
    walk_section(
        obj, "attack",
        {{"mode", [&c](const json& v) { c.mode = attack_mode_from_name(v.get<std::string>()); }},
         {"support",
          [&c](const json& v) { c.attack.support = support_from_name(v.get<std::string>()); }},
         {"lambda", into(c.attack.lambda)},
         {"norm", [&c](const json& v) { c.attack.p = norm_from_name(v.get<std::string>()); }},
         {"step_size", into(c.attack.step_size)},
         {"max_iters", into(c.attack.max_iters)},
         {"stop_on_success", into(c.attack.stop_on_success)},
         {"stop_threshold", into(c.attack.stop_threshold)},
         {"target_label", into(c.attack.target_label)},
         {"lambda_l", into(c.attack.lambda_l)},
         {"layer", into(c.attack.layer)},
         {"pattern", [&c](const json& v) { c.pattern = pattern_from_name(v.get<std::string>()); }},
         {"delta_t", into(c.delta_t)},
         {"spatial_rate", into(c.spatial_rate)},
         {"universal_batch", into(c.universal_batch)},
         {"seed", into(c.attack.seed)}});
}

void parse_report(const json& obj, ExperimentConfig& c) {
    walk_section(obj, "report",
                 {{"format",
                   [&c](const json& v) {
                       std::string f = v.get<std::string>();
                       if (f != "csv" && f != "json") {
                           throw std::invalid_argument("must be \"csv\" or \"json\"");
                       }
                       c.format = f;
                   }},
                  {"out_dir", into(c.out_dir)}});
}

ordered_json rows_to_json(const std::vector<ReportRow>& rows) {
    ordered_json arr = ordered_json::array();
    for (const ReportRow& r : rows) {
        ordered_json o;
        o["model"] = r.model;
        o["method"] = r.method;
        o["support"] = r.support;
        o["dataset_seed"] = r.dataset_seed;
        o["attack_seed"] = r.attack_seed;
        o["FR_percent"] = r.fr;
        o["AAP"] = r.aap_value;
        o["DIFF"] = r.diff ? ordered_json(*r.diff) : ordered_json(nullptr);
        o["coherence"] = r.coherence ? ordered_json(*r.coherence) : ordered_json(nullptr);
        o["iters_mean"] = r.iters_mean;
        o["wallclock_s"] = nullptr;  // kept empty so reruns are byte-identical
        arr.push_back(std::move(o));
    }
    return arr;
}

// First `count` frames starting at `start` along the time axis.
Tensor time_slice(const Tensor& frames, int start, int count) {
    const Shape& s = frames.shape();
    Tensor out({count, s[1], s[2], s[3]}, 0.0);
    std::size_t frame = static_cast<std::size_t>(s[1]) * s[2] * s[3];
    std::memcpy(out.data(), frames.data() + static_cast<std::size_t>(start) * frame,
                sizeof(double) * frame * static_cast<std::size_t>(count));
    return out;
}

// Class-interleaved prefix of a class-major pool, so crafting batches stay
// balanced even when they are much smaller than the pool.
std::vector<VideoClip> crafting_batch(const std::vector<VideoClip>& pool, int count,
                                      int class_count) {
    if (count < 1) throw std::invalid_argument("universal_batch must be >= 1");
    std::size_t want = std::min(pool.size(), static_cast<std::size_t>(count));
    std::size_t per_class = pool.size() / static_cast<std::size_t>(class_count);
    std::vector<VideoClip> out;
    out.reserve(want);
    for (std::size_t j = 0; j < per_class && out.size() < want; ++j) {
        for (int k = 0; k < class_count && out.size() < want; ++k) {
            out.push_back(pool[static_cast<std::size_t>(k) * per_class + j]);
        }
    }
    // Odd-shaped pools (not class-major) still fill the batch from the front.
    for (std::size_t i = 0; out.size() < want && i < pool.size(); ++i) out.push_back(pool[i]);
    return out;
}

ReportRow blank_row(const Model& model, AttackMode mode, const AttackConfig& ac,
                    const ExperimentConfig& config) {
    ReportRow row;
    row.model = model_kind_name(model.kind);
    row.method = attack_mode_name(mode);
    row.support = support_name(ac.support);
    row.dataset_seed = config.dataset_seed;
    row.attack_seed = config.attack.seed;
    return row;
}

// Per-clip campaign (single / targeted / fs): one attack per pool clip.
// `first_e` receives the first engaged perturbation for artifact dumps.
ReportRow run_per_clip(const Model& model, const std::vector<VideoClip>& pool,
                       const DummyFrames& dummy, const AttackConfig& ac, AttackMode mode,
                       const ExperimentConfig& config, Tensor* first_e) {
    EvalBatch batch;
    std::vector<Tensor> perts;
    std::vector<VideoClip> engaged;
    std::vector<double> diffs;
    double iter_sum = 0.0;
    for (const VideoClip& clip : pool) {
        AttackOutcome o;
        if (mode == AttackMode::FeatureSimilar) {
            FeatureSimilarOutcome f = attack_feature_similar(model, clip, dummy, ac);
            o = std::move(f.outcome);
            if (!o.skipped && !f.reference.empty()) {
                int dt = f.reference.extent(0);
                Tensor card = time_slice(o.adversarial, clip.frames.extent(0), dt);
                diffs.push_back(feature_diff(model, card, f.reference, ac.layer));
            }
        } else if (mode == AttackMode::Targeted) {
            AttackConfig tc = ac;
            if (tc.target_label < 0) tc.target_label = (clip.label + 1) % model.class_count;
            o = attack_single(model, clip, dummy, tc);
        } else {
            o = attack_single(model, clip, dummy, ac);
        }
        if (!o.skipped) {
            batch.eligible += 1;
            iter_sum += o.iterations;
            perts.push_back(o.perturbation);
            engaged.push_back(clip);
            if (first_e != nullptr && first_e->empty()) *first_e = o.perturbation;
        }
        batch.outcomes.push_back(std::move(o));
    }

    ReportRow row = blank_row(model, mode, ac, config);
    row.fr = batch.eligible > 0 ? fooling_rate(batch) : 0.0;
    if (!perts.empty()) row.aap_value = aap(perts, model.width * model.height);
    if (!diffs.empty()) row.diff = mean(diffs);
    if (engaged.size() >= 2) {
        row.coherence = direction_coherence(initial_gradients(model, engaged, dummy, ac));
    }
    if (!engaged.empty()) row.iters_mean = iter_sum / static_cast<double>(engaged.size());
    return row;
}

// Shared-perturbation campaign over a crafting batch (universal mode).
ReportRow run_universal(const Model& model, const std::vector<VideoClip>& batch_clips,
                        const DummyFrames& dummy, const AttackConfig& ac,
                        const ExperimentConfig& config, Tensor* shared_e) {
    UniversalOutcome u = attack_universal_videos(model, batch_clips, dummy, ac);
    EvalBatch batch;
    std::vector<VideoClip> engaged;
    for (std::size_t n = 0; n < u.per_video.size(); ++n) {
        if (!u.per_video[n].skipped) {
            batch.eligible += 1;
            engaged.push_back(batch_clips[n]);
        }
        batch.outcomes.push_back(u.per_video[n]);
    }
    ReportRow row = blank_row(model, AttackMode::Universal, ac, config);
    row.fr = batch.eligible > 0 ? fooling_rate(batch) : 0.0;
    row.aap_value = aap({u.perturbation}, model.width * model.height);
    if (engaged.size() >= 2) {
        row.coherence = direction_coherence(initial_gradients(model, engaged, dummy, ac));
    }
    row.iters_mean = u.iterations;
    if (shared_e != nullptr) *shared_e = u.perturbation;
    return row;
}

}  // namespace

const char* attack_mode_name(AttackMode mode) {
    switch (mode) {
        case AttackMode::Single: return "single";
        case AttackMode::Targeted: return "targeted";
        case AttackMode::Universal: return "universal";
        case AttackMode::Ensemble: return "ensemble";
        case AttackMode::FeatureSimilar: return "fs";
    }
    throw std::invalid_argument("bad attack mode value");
}

AttackMode attack_mode_from_name(const std::string& name) {
    for (AttackMode m : {AttackMode::Single, AttackMode::Targeted, AttackMode::Universal,
                         AttackMode::Ensemble, AttackMode::FeatureSimilar}) {
        if (name == attack_mode_name(m)) return m;
    }
    throw std::invalid_argument("unknown attack mode: " + name);
}

const char* norm_name(NormOrder p) { return p == NormOrder::LInf ? "linf" : "l2"; }

NormOrder norm_from_name(const std::string& name) {
    if (name == "linf") return NormOrder::LInf;
    if (name == "l2") return NormOrder::L2;
    throw std::invalid_argument("unknown norm: " + name);
}

PatternKind pattern_from_name(const std::string& name) {
    for (PatternKind p :
         {PatternKind::GlyphOnDark, PatternKind::GlyphOnLight, PatternKind::GlyphLarge}) {
        if (name == pattern_name(p)) return p;
    }
    throw std::invalid_argument("unknown pattern: " + name);
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.train.label_smoothing = 0.15;  // keeps logits unsaturated; see models
    c.attack.seed = 3;
    return c;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, false);
    if (root.is_discarded()) throw std::invalid_argument("config is not valid JSON");
    if (!root.is_object()) throw std::invalid_argument("config must be a JSON object");
    ExperimentConfig c = default_config();
    for (const auto& item : root.items()) {
        const std::string& key = item.key();
        if (key == "dataset") {
            parse_dataset(item.value(), c);
        } else if (key == "model") {
            parse_model(item.value(), c);
        } else if (key == "attack") {
            parse_attack(item.value(), c);
        } else if (key == "report") {
            parse_report(item.value(), c);
        } else {
            throw std::invalid_argument("unknown config field " + key);
        }
    }
    return c;
}

std::string canonical_config(const ExperimentConfig& c) {
    ordered_json j;
    ordered_json d;
    d["class_count"] = c.data.class_count;
    d["clips_per_class"] = c.data.clips_per_class;
    d["frames"] = c.data.frames;
    d["width"] = c.data.width;
    d["height"] = c.data.height;
    d["channels"] = c.data.channels;
    d["noise_amp"] = c.data.noise_amp;
    d["train_fraction"] = c.data.train_fraction;
    d["accel_step"] = c.data.accel_step;
    d["seed"] = c.dataset_seed;
    d["eval_clips_per_class"] = c.eval_clips_per_class;
    j["dataset"] = std::move(d);

    ordered_json m;
    ordered_json kinds = ordered_json::array();
    for (ModelKind k : c.kinds) kinds.push_back(model_kind_name(k));
    m["kinds"] = std::move(kinds);
    m["c1"] = c.hyper.c1;
    m["c2"] = c.hyper.c2;
    m["hidden"] = c.hyper.hidden;
    m["epochs"] = c.train.epochs;
    m["learning_rate"] = c.train.learning_rate;
    m["batch"] = c.train.batch;
    m["label_smoothing"] = c.train.label_smoothing;
    m["seed"] = c.train.seed;
    j["model"] = std::move(m);

    ordered_json a;
    a["mode"] = attack_mode_name(c.mode);
    a["support"] = support_name(c.attack.support);
    a["lambda"] = c.attack.lambda;
    a["norm"] = norm_name(c.attack.p);
    a["step_size"] = c.attack.step_size;
    a["max_iters"] = c.attack.max_iters;
    a["stop_on_success"] = c.attack.stop_on_success;
    a["stop_threshold"] = c.attack.stop_threshold;
    a["target_label"] = c.attack.target_label;
    a["lambda_l"] = c.attack.lambda_l;
    a["layer"] = c.attack.layer;
    a["pattern"] = pattern_name(c.pattern);
    a["delta_t"] = c.delta_t;
    a["spatial_rate"] = c.spatial_rate;
    a["universal_batch"] = c.universal_batch;
    a["seed"] = c.attack.seed;
    j["attack"] = std::move(a);

    ordered_json r;
    r["format"] = c.format;
    r["out_dir"] = c.out_dir;
    j["report"] = std::move(r);

    return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
    std::string s = canonical_config(config);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string render_csv(const std::vector<ReportRow>& rows) {
    std::string out =
        "model,method,support,dataset_seed,attack_seed,FR_percent,AAP,DIFF,coherence,"
        "iters_mean,wallclock_s\n";
    for (const ReportRow& r : rows) {
        out += r.model + ',' + r.method + ',' + r.support + ',';
        out += std::to_string(r.dataset_seed) + ',' + std::to_string(r.attack_seed) + ',';
        out += fmt("%.2f", r.fr) + ',';
        out += fmt("%.6f", r.aap_value) + ',';
        if (r.diff) out += fmt("%.6f", *r.diff);
        out += ',';
        if (r.coherence) out += fmt("%.6f", *r.coherence);
        out += ',';
        out += fmt("%.2f", r.iters_mean);
        out += ",\n";  // wallclock stays empty so reruns are byte-identical
    }
    return out;
}

std::string render_json(const std::vector<ReportRow>& rows) {
    return rows_to_json(rows).dump(2) + "\n";
}

RunRecord run_config(const ExperimentConfig& config) {
    auto t0 = std::chrono::steady_clock::now();
    if (config.kinds.empty()) throw std::invalid_argument("config names no model kinds");
    if (config.format != "csv" && config.format != "json") {
        throw std::invalid_argument("report format must be \"csv\" or \"json\"");
    }
    fs::create_directories(config.out_dir);

    RunRecord rec;
    rec.config_hash = config_hash(config);
    rec.seed = config.attack.seed;

    Dataset ds = synth_dataset(config.data, config.dataset_seed);
    int input_len = config.data.frames + config.delta_t;
    std::vector<Model> zoo;
    zoo.reserve(config.kinds.size());
    for (std::size_t i = 0; i < config.kinds.size(); ++i) {
        std::uint64_t seed = config.train.seed + 1000 * i;
        Model m = build_model(config.kinds[i], input_len, config.data.width, config.data.height,
                              config.data.channels, config.data.class_count, config.hyper, seed);
        TrainHyper th = config.train;
        th.seed = seed;
        train_model(m, ds, th);
        std::string ckpt =
            (fs::path(config.out_dir) / (std::string(model_kind_name(m.kind)) + ".ckpt")).string();
        save_model(ckpt, m);
        rec.artifacts.push_back(ckpt);
        zoo.push_back(std::move(m));
    }

    std::vector<VideoClip> pool =
        eval_pool(config.data, config.eval_clips_per_class, config.dataset_seed);
    DummyFrames dummy = make_dummy_frames(config.pattern, config.delta_t, config.data.width,
                                          config.data.height, config.data.channels);
    AttackConfig ac = config.attack;
    if (config.spatial_rate < 1.0) {
        ac.mask = make_square_mask(config.data.width, config.data.height, config.spatial_rate);
    }

    auto save_pert = [&rec, &config](const std::string& stem, const Tensor& e) {
        if (e.empty()) return;
        std::string path = (fs::path(config.out_dir) / (stem + ".a2fm")).string();
        save_tensor(path, e);
        rec.artifacts.push_back(path);
    };

    switch (config.mode) {
        case AttackMode::Single:
        case AttackMode::Targeted:
        case AttackMode::FeatureSimilar: {
            for (const Model& m : zoo) {
                Tensor first_e;
                rec.rows.push_back(
                    run_per_clip(m, pool, dummy, ac, config.mode, config, &first_e));
                save_pert(std::string(model_kind_name(m.kind)) + "_e0", first_e);
            }
            break;
        }
        case AttackMode::Universal: {
            std::vector<VideoClip> batch =
                crafting_batch(pool, config.universal_batch, config.data.class_count);
            for (const Model& m : zoo) {
                Tensor shared_e;
                rec.rows.push_back(run_universal(m, batch, dummy, ac, config, &shared_e));
                save_pert(std::string(model_kind_name(m.kind)) + "_universal", shared_e);
            }
            break;
        }
        case AttackMode::Ensemble: {
            std::vector<VideoClip> batch =
                crafting_batch(pool, config.universal_batch, config.data.class_count);
            EnsembleOutcome eo = attack_ensemble_models(zoo, batch, dummy, ac);
            for (std::size_t k = 0; k < zoo.size(); ++k) {
                EvalBatch eb;
                std::vector<VideoClip> engaged;
                for (std::size_t n = 0; n < eo.per_model[k].size(); ++n) {
                    if (!eo.per_model[k][n].skipped) {
                        eb.eligible += 1;
                        engaged.push_back(batch[n]);
                    }
                    eb.outcomes.push_back(eo.per_model[k][n]);
                }
                ReportRow row = blank_row(zoo[k], AttackMode::Ensemble, ac, config);
                row.fr = eb.eligible > 0 ? fooling_rate(eb) : 0.0;
                row.aap_value = aap({eo.perturbation}, zoo[k].width * zoo[k].height);
                if (engaged.size() >= 2) {
                    row.coherence =
                        direction_coherence(initial_gradients(zoo[k], engaged, dummy, ac));
                }
                row.iters_mean = eo.iterations;
                rec.rows.push_back(std::move(row));
            }
            save_pert("ensemble_universal", eo.perturbation);
            break;
        }
    }

    std::string report_path =
        (fs::path(config.out_dir) / ("report." + config.format)).string();
    write_text(report_path, config.format == "csv" ? render_csv(rec.rows)
                                                   : render_json(rec.rows));
    rec.artifacts.push_back(report_path);

    rec.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::string record_path = (fs::path(config.out_dir) / "runrecord.json").string();
    rec.artifacts.push_back(record_path);
    ordered_json rr;
    rr["config_hash"] = rec.config_hash;
    rr["seed"] = rec.seed;
    rr["config"] = ordered_json::parse(canonical_config(config));
    rr["rows"] = rows_to_json(rec.rows);
    rr["wallclock_s"] = rec.wallclock_s;
    rr["artifacts"] = rec.artifacts;
    write_text(record_path, rr.dump(2) + "\n");
    return rec;
}

TransferResult loo_transfer(const std::vector<Model>& zoo, const std::vector<VideoClip>& clips,
                            const ExperimentConfig& config) {
    if (zoo.size() < 2) throw std::invalid_argument("leave-one-out needs at least two models");
    if (clips.empty()) throw std::invalid_argument("leave-one-out needs evaluation clips");
    std::vector<VideoClip> batch =
        crafting_batch(clips, config.universal_batch, config.data.class_count);
    DummyFrames dummy = make_dummy_frames(config.pattern, config.delta_t, zoo[0].width,
                                          zoo[0].height, zoo[0].channels);

    TransferResult result;
    for (PerturbSupport support : {PerturbSupport::AppendedFrames, PerturbSupport::WholeVideo}) {
        AttackConfig ac = config.attack;
        ac.support = support;
        if (config.spatial_rate < 1.0) {
            ac.mask = make_square_mask(zoo[0].width, zoo[0].height, config.spatial_rate);
        }
        TransferMatrix mat;
        for (const Model& m : zoo) mat.col_labels.push_back(model_kind_name(m.kind));
        for (std::size_t held = 0; held < zoo.size(); ++held) {
            std::vector<Model> rest;
            for (std::size_t i = 0; i < zoo.size(); ++i) {
                if (i != held) rest.push_back(zoo[i]);
            }
            EnsembleOutcome eo = attack_ensemble_models(rest, batch, dummy, ac);
            mat.row_labels.push_back(std::string("-") + model_kind_name(zoo[held].kind));

            std::vector<double> fr_row;
            for (const Model& m : zoo) {
                EvalBatch eb;
                for (const VideoClip& clip : batch) {
                    AttackOutcome o;
                    o.initial_label = predict(m, assemble_clean(m, clip, dummy, support)).label;
                    if (o.initial_label != clip.label) {
                        o.skipped = true;
                        o.final_label = o.initial_label;
                    } else {
                        eb.eligible += 1;
                        Tensor adv =
                            apply_perturbation(m, clip, dummy, support, eo.perturbation);
                        o.final_label = predict(m, adv).label;
                        o.success = o.final_label != clip.label;
                    }
                    eb.outcomes.push_back(std::move(o));
                }
                fr_row.push_back(eb.eligible > 0 ? fooling_rate(eb) : 0.0);
            }
            mat.fr.push_back(std::move(fr_row));
        }
        (support == PerturbSupport::AppendedFrames ? result.appended : result.whole) =
            std::move(mat);
    }
    return result;
}

std::vector<SweepRow> sweep(const std::string& kind, const std::vector<double>& grid,
                            const ExperimentConfig& base) {
    bool is_lambda = kind == "lambda_l";
    bool is_rate = kind == "spatial_rate";
    bool is_pattern = kind == "pattern";
    if (!is_lambda && !is_rate && !is_pattern) {
        throw std::invalid_argument("unknown sweep kind: " + kind);
    }
    if (!is_pattern && grid.empty()) throw std::invalid_argument("sweep grid must not be empty");
    if (base.kinds.empty()) throw std::invalid_argument("config names no model kinds");

    // One model, trained once; rows vary only the attack.
    Dataset ds = synth_dataset(base.data, base.dataset_seed);
    Model m = build_model(base.kinds[0], base.data.frames + base.delta_t, base.data.width,
                          base.data.height, base.data.channels, base.data.class_count, base.hyper,
                          base.train.seed);
    TrainHyper th = base.train;
    train_model(m, ds, th);
    std::vector<VideoClip> pool =
        eval_pool(base.data, base.eval_clips_per_class, base.dataset_seed);

    auto point = [&m, &pool, &base](const AttackConfig& ac, AttackMode mode,
                                    const DummyFrames& dummy) {
        return run_per_clip(m, pool, dummy, ac, mode, base, nullptr);
    };

    std::vector<SweepRow> rows;
    if (is_pattern) {
        for (PatternKind p :
             {PatternKind::GlyphOnDark, PatternKind::GlyphOnLight, PatternKind::GlyphLarge}) {
            DummyFrames dummy = make_dummy_frames(p, base.delta_t, base.data.width,
                                                  base.data.height, base.data.channels);
            AttackConfig ac = base.attack;
            ReportRow rr = point(ac, AttackMode::Single, dummy);
            SweepRow row;
            row.value = static_cast<double>(rows.size());
            row.label = pattern_name(p);
            row.fr = rr.fr;
            row.aap_value = rr.aap_value;
            rows.push_back(std::move(row));
        }
        return rows;
    }

    DummyFrames dummy = make_dummy_frames(base.pattern, base.delta_t, base.data.width,
                                          base.data.height, base.data.channels);
    for (double v : grid) {
        AttackConfig ac = base.attack;
        SweepRow row;
        row.value = v;
        row.label = num_label(v);
        if (is_rate) {
            if (v < 1.0) ac.mask = make_square_mask(base.data.width, base.data.height, v);
            ReportRow rr = point(ac, AttackMode::Single, dummy);
            row.fr = rr.fr;
            row.aap_value = rr.aap_value;
        } else {
            ac.lambda_l = v;
            ReportRow rr = point(ac, AttackMode::FeatureSimilar, dummy);
            row.fr = rr.fr;
            row.aap_value = rr.aap_value;
            row.diff = rr.diff;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace a2fm

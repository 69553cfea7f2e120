#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "a2fm/attacks.hpp"
#include "a2fm/metrics.hpp"
#include "a2fm/models.hpp"
#include "a2fm/videodata.hpp"

namespace a2fm {

enum class AttackMode { Single, Targeted, Universal, Ensemble, FeatureSimilar };

const char* attack_mode_name(AttackMode mode);
AttackMode attack_mode_from_name(const std::string& name);

const char* norm_name(NormOrder p);
NormOrder norm_from_name(const std::string& name);
PatternKind pattern_from_name(const std::string& name);

// Everything one experiment needs, grouped as the config file's sections:
// dataset, model, attack, report. Seeds are split per concern so ablations
// vary one axis at a time.
struct ExperimentConfig {
    // dataset
    DataConfig data;
    std::uint64_t dataset_seed = 1;
    int eval_clips_per_class = 50;
    // model
    std::vector<ModelKind> kinds = {ModelKind::Conv3DTiny, ModelKind::Factorized21DTiny,
                                    ModelKind::CnnRecurrentTiny};
    ModelHyper hyper;
    TrainHyper train;
    // attack
    AttackMode mode = AttackMode::Single;
    AttackConfig attack;
    PatternKind pattern = PatternKind::GlyphOnDark;
    int delta_t = 2;
    double spatial_rate = 1.0;  // < 1 applies a centered square mask
    int universal_batch = 24;   // crafting batch for universal/ensemble modes
    // report
    std::string format = "csv";
    std::string out_dir = "runs";
};

// Zoo defaults (label smoothing 0.15, attack seed 3, ...).
ExperimentConfig default_config();

// JSON with the exact section/key schema of ExperimentConfig. Missing keys
// fall back to defaults; unknown keys are errors naming the field path.
ExperimentConfig parse_config(const std::string& json_text);
// Canonical serialization; parse_config(canonical_config(c)) round-trips.
std::string canonical_config(const ExperimentConfig& config);
// FNV-1a hash of the canonical form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

// One report line; absent metrics render as empty CSV cells.
struct ReportRow {
    std::string model;
    std::string method;
    std::string support;
    std::uint64_t dataset_seed = 0;
    std::uint64_t attack_seed = 0;
    double fr = 0.0;
    double aap_value = 0.0;
    std::optional<double> diff;
    std::optional<double> coherence;
    double iters_mean = 0.0;
};

// Frozen schema: model,method,support,dataset_seed,attack_seed,FR_percent,
// AAP,DIFF,coherence,iters_mean,wallclock_s. The wallclock cell stays empty
// so reruns are byte-identical.
std::string render_csv(const std::vector<ReportRow>& rows);
std::string render_json(const std::vector<ReportRow>& rows);

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;  // attack seed
    std::vector<ReportRow> rows;
    double wallclock_s = 0.0;
    std::vector<std::string> artifacts;  // files written, report included
};

// Generate data, train the zoo, run the configured attack campaign, write
// report + artifacts into config.out_dir.
RunRecord run_config(const ExperimentConfig& config);

struct TransferMatrix {
    std::vector<std::string> row_labels;  // "-<held-out model>"
    std::vector<std::string> col_labels;  // attacked model
    std::vector<std::vector<double>> fr;  // [row][col], percent
};

struct TransferResult {
    TransferMatrix appended;
    TransferMatrix whole;
};

// Leave-one-out transfer: craft on zoo minus one via the ensemble attack,
// evaluate on every model. Cells reuse metrics' fooling_rate.
TransferResult loo_transfer(const std::vector<Model>& zoo, const std::vector<VideoClip>& clips,
                            const ExperimentConfig& config);

struct SweepRow {
    double value = 0.0;
    std::string label;
    double fr = 0.0;
    double aap_value = 0.0;
    std::optional<double> diff;
};

// kind: lambda_l | spatial_rate | pattern. Pattern sweeps ignore the grid
// and walk the three PatternKinds. One model (kinds[0]), one seed baseline.
std::vector<SweepRow> sweep(const std::string& kind, const std::vector<double>& grid,
                            const ExperimentConfig& base);

}  // namespace a2fm

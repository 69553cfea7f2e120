// a2fm: reproducible driver for the appended-frame attack laboratory.
//
// Subcommands: gen-data, train, attack, transfer, sweep, report. Every run
// is a pure function of its config file and seeds; reports are written as
// CSV or JSON with a frozen column set.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "a2fm/artifacts.hpp"
#include "a2fm/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Single machine-readable failure line on stderr, nonzero exit.
[[noreturn]] void fail(const std::string& kind, const std::string& detail) {
    ordered_json e;
    e["kind"] = kind;
    e["detail"] = detail;
    std::cerr << "error: " << e.dump() << "\n";
    std::exit(1);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) fail("missing_file", "cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.good()) fail("io", "cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out.good()) fail("io", "cannot write " + path);
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            double v = std::stod(item, &used);
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) {
                ++used;
            }
            if (used != item.size()) throw std::invalid_argument(item);
            grid.push_back(v);
        } catch (const std::exception&) {
            fail("invalid_config", "bad sweep grid value: " + item);
        }
    }
    return grid;
}

void cmd_gen_data(const a2fm::ExperimentConfig& cfg) {
    a2fm::Dataset ds = a2fm::synth_dataset(cfg.data, cfg.dataset_seed);
    fs::create_directories(cfg.out_dir);

    ordered_json summary;
    summary["seed"] = ds.seed;
    summary["class_count"] = cfg.data.class_count;
    summary["clips_per_class"] = cfg.data.clips_per_class;
    summary["frames"] = cfg.data.frames;
    summary["width"] = cfg.data.width;
    summary["height"] = cfg.data.height;
    summary["channels"] = cfg.data.channels;
    summary["clip_count"] = ds.clips.size();
    summary["train_clips"] = ds.train_idx.size();
    summary["test_clips"] = ds.test_idx.size();
    std::string summary_path = (fs::path(cfg.out_dir) / "dataset.json").string();
    write_file(summary_path, summary.dump(2) + "\n");
    std::cout << "wrote: " << summary_path << "\n";

    // One sample clip per class, as plain tensors.
    for (int k = 0; k < cfg.data.class_count; ++k) {
        const a2fm::VideoClip& clip = ds.clips[static_cast<std::size_t>(k) * cfg.data.clips_per_class];
        std::string path =
            (fs::path(cfg.out_dir) / ("class" + std::to_string(k) + "_sample.a2fm")).string();
        a2fm::save_tensor(path, clip.frames);
        std::cout << "wrote: " << path << "\n";
    }
}

void cmd_train(const a2fm::ExperimentConfig& cfg) {
    a2fm::Dataset ds = a2fm::synth_dataset(cfg.data, cfg.dataset_seed);
    fs::create_directories(cfg.out_dir);
    int input_len = cfg.data.frames + cfg.delta_t;

    std::string csv = "model,epochs,train_accuracy,test_accuracy\n";
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < cfg.kinds.size(); ++i) {
        std::uint64_t seed = cfg.train.seed + 1000 * i;
        a2fm::Model m =
            a2fm::build_model(cfg.kinds[i], input_len, cfg.data.width, cfg.data.height,
                              cfg.data.channels, cfg.data.class_count, cfg.hyper, seed);
        a2fm::TrainHyper th = cfg.train;
        th.seed = seed;
        a2fm::TrainReport rep = a2fm::train_model(m, ds, th);
        const char* name = a2fm::model_kind_name(m.kind);
        std::string ckpt = (fs::path(cfg.out_dir) / (std::string(name) + ".ckpt")).string();
        a2fm::save_model(ckpt, m);
        std::cout << "wrote: " << ckpt << " (test_accuracy=" << fmt("%.4f", rep.test_accuracy)
                  << ")\n";

        csv += std::string(name) + ',' + std::to_string(rep.epochs) + ',' +
               fmt("%.4f", rep.train_accuracy) + ',' + fmt("%.4f", rep.test_accuracy) + '\n';
        ordered_json r;
        r["model"] = name;
        r["epochs"] = rep.epochs;
        r["train_accuracy"] = rep.train_accuracy;
        r["test_accuracy"] = rep.test_accuracy;
        rows.push_back(std::move(r));
    }

    std::string path = (fs::path(cfg.out_dir) / ("train_report." + cfg.format)).string();
    write_file(path, cfg.format == "csv" ? csv : rows.dump(2) + "\n");
    std::cout << "wrote: " << path << "\n";
}

void cmd_attack(const a2fm::ExperimentConfig& cfg) {
    a2fm::RunRecord rec = a2fm::run_config(cfg);
    for (const a2fm::ReportRow& r : rec.rows) {
        std::cout << r.model << " " << r.method << " " << r.support
                  << " FR=" << fmt("%.2f", r.fr) << " AAP=" << fmt("%.6f", r.aap_value)
                  << " iters_mean=" << fmt("%.2f", r.iters_mean) << "\n";
    }
    for (const std::string& a : rec.artifacts) std::cout << "wrote: " << a << "\n";
    std::cout << "config_hash: " << rec.config_hash << "\n";
}

std::string matrix_csv(const a2fm::TransferMatrix& mat) {
    std::string out = "ensemble";
    for (const std::string& c : mat.col_labels) out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < mat.row_labels.size(); ++r) {
        out += mat.row_labels[r];
        for (double v : mat.fr[r]) out += "," + fmt("%.2f", v);
        out += "\n";
    }
    return out;
}

ordered_json matrix_json(const a2fm::TransferMatrix& mat) {
    ordered_json j;
    j["columns"] = mat.col_labels;
    ordered_json rows = ordered_json::array();
    for (std::size_t r = 0; r < mat.row_labels.size(); ++r) {
        ordered_json row;
        row["ensemble"] = mat.row_labels[r];
        row["fr"] = mat.fr[r];
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

void cmd_transfer(const a2fm::ExperimentConfig& cfg) {
    if (cfg.kinds.size() < 2) {
        fail("invalid_config", "transfer needs at least two model kinds");
    }
    a2fm::Dataset ds = a2fm::synth_dataset(cfg.data, cfg.dataset_seed);
    fs::create_directories(cfg.out_dir);
    int input_len = cfg.data.frames + cfg.delta_t;
    std::vector<a2fm::Model> zoo;
    for (std::size_t i = 0; i < cfg.kinds.size(); ++i) {
        std::uint64_t seed = cfg.train.seed + 1000 * i;
        a2fm::Model m =
            a2fm::build_model(cfg.kinds[i], input_len, cfg.data.width, cfg.data.height,
                              cfg.data.channels, cfg.data.class_count, cfg.hyper, seed);
        a2fm::TrainHyper th = cfg.train;
        th.seed = seed;
        a2fm::train_model(m, ds, th);
        zoo.push_back(std::move(m));
    }
    std::vector<a2fm::VideoClip> pool =
        a2fm::eval_pool(cfg.data, cfg.eval_clips_per_class, cfg.dataset_seed);

    a2fm::TransferResult tr = a2fm::loo_transfer(zoo, pool, cfg);
    for (const auto& [name, mat] :
         {std::pair<const char*, const a2fm::TransferMatrix&>{"appended_frames", tr.appended},
          {"whole_video", tr.whole}}) {
        std::string path =
            (fs::path(cfg.out_dir) / ("transfer_" + std::string(name) + "." + cfg.format))
                .string();
        write_file(path, cfg.format == "csv" ? matrix_csv(mat) : matrix_json(mat).dump(2) + "\n");
        std::cout << "wrote: " << path << "\n";
    }
}

void cmd_sweep(const a2fm::ExperimentConfig& cfg, const std::string& kind,
               const std::string& grid_text) {
    std::vector<double> grid;
    if (!grid_text.empty()) {
        grid = parse_grid(grid_text);
    } else if (kind == "lambda_l") {
        grid = {0.0, 0.01, 0.05, 0.1, 1.0};
    } else if (kind == "spatial_rate") {
        grid = {1.0, 0.8, 0.5, 0.2};
    }
    std::vector<a2fm::SweepRow> rows = a2fm::sweep(kind, grid, cfg);

    std::string csv = "value,label,FR_percent,AAP,DIFF\n";
    ordered_json jrows = ordered_json::array();
    for (const a2fm::SweepRow& r : rows) {
        csv += fmt("%g", r.value) + ',' + r.label + ',' + fmt("%.2f", r.fr) + ',' +
               fmt("%.6f", r.aap_value) + ',';
        if (r.diff) csv += fmt("%.6f", *r.diff);
        csv += '\n';
        ordered_json o;
        o["value"] = r.value;
        o["label"] = r.label;
        o["FR_percent"] = r.fr;
        o["AAP"] = r.aap_value;
        o["DIFF"] = r.diff ? ordered_json(*r.diff) : ordered_json(nullptr);
        jrows.push_back(std::move(o));
        std::cout << kind << "=" << r.label << " FR=" << fmt("%.2f", r.fr)
                  << " AAP=" << fmt("%.6f", r.aap_value) << "\n";
    }
    fs::create_directories(cfg.out_dir);
    std::string path = (fs::path(cfg.out_dir) / ("sweep_" + kind + "." + cfg.format)).string();
    write_file(path, cfg.format == "csv" ? csv : jrows.dump(2) + "\n");
    std::cout << "wrote: " << path << "\n";
}

// Re-render a finished run's rows and verify that every artifact it lists
// still loads. Missing and corrupt checkpoints fail distinctly.
void cmd_report(const a2fm::ExperimentConfig& cfg) {
    std::string record_path = (fs::path(cfg.out_dir) / "runrecord.json").string();
    if (!fs::exists(record_path)) fail("missing_file", record_path);
    json rr = json::parse(read_file(record_path), nullptr, false);
    if (rr.is_discarded() || !rr.is_object() || !rr.contains("rows") ||
        !rr.contains("artifacts")) {
        fail("corrupt_artifact", record_path + " is not a run record");
    }

    for (const auto& item : rr["artifacts"]) {
        std::string path = item.get<std::string>();
        bool ckpt = path.size() >= 5 && path.substr(path.size() - 5) == ".ckpt";
        bool tensor = path.size() >= 5 && path.substr(path.size() - 5) == ".a2fm";
        try {
            if (ckpt) {
                (void)a2fm::load_model(path);
            } else if (tensor) {
                (void)a2fm::load_tensor(path);
            } else if (!fs::exists(path)) {
                throw a2fm::MissingFileError("no such file: " + path);
            }
        } catch (const a2fm::MissingFileError& e) {
            fail(ckpt ? "missing_checkpoint" : "missing_file", e.what());
        } catch (const a2fm::ArtifactError& e) {
            fail(ckpt ? "corrupt_checkpoint" : "corrupt_artifact", e.what());
        }
    }

    std::vector<a2fm::ReportRow> rows;
    for (const auto& o : rr["rows"]) {
        a2fm::ReportRow r;
        r.model = o.at("model").get<std::string>();
        r.method = o.at("method").get<std::string>();
        r.support = o.at("support").get<std::string>();
        r.dataset_seed = o.at("dataset_seed").get<std::uint64_t>();
        r.attack_seed = o.at("attack_seed").get<std::uint64_t>();
        r.fr = o.at("FR_percent").get<double>();
        r.aap_value = o.at("AAP").get<double>();
        if (!o.at("DIFF").is_null()) r.diff = o.at("DIFF").get<double>();
        if (!o.at("coherence").is_null()) r.coherence = o.at("coherence").get<double>();
        r.iters_mean = o.at("iters_mean").get<double>();
        rows.push_back(std::move(r));
    }
    std::cout << (cfg.format == "csv" ? a2fm::render_csv(rows) : a2fm::render_json(rows));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"appended-frame adversarial attack laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, format, mode_s, kind_s, grid_s;
    std::int64_t seed = 0;

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train the model zoo, save checkpoints");
    CLI::App* attack = app.add_subcommand("attack", "run an attack campaign, write reports");
    attack->add_option("--mode", mode_s, "single|targeted|universal|ensemble|fs");
    CLI::App* transfer =
        app.add_subcommand("transfer", "leave-one-out transfer matrices per support");
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid sweep of one attack knob");
    sweep_cmd->add_option("--kind", kind_s, "lambda_l|spatial_rate|pattern")->required();
    sweep_cmd->add_option("--grid", grid_s, "comma-separated grid values");
    CLI::App* report = app.add_subcommand("report", "re-render and verify a finished run");

    for (CLI::App* sub : {gen, train, attack, transfer, sweep_cmd, report}) {
        sub->add_option("--config", config_path, "experiment config (JSON)");
        sub->add_option("--seed", seed, "override the subcommand's primary seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--format", format, "csv|json")
            ->check(CLI::IsMember({"csv", "json"}));
    }

    CLI11_PARSE(app, argc, argv);

    try {
        a2fm::ExperimentConfig cfg;
        try {
            cfg = config_path.empty() ? a2fm::default_config()
                                      : a2fm::parse_config(read_file(config_path));
        } catch (const std::invalid_argument& e) {
            fail("invalid_config", e.what());
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!format.empty()) cfg.format = format;

        if (gen->parsed()) {
            if (gen->count("--seed")) cfg.dataset_seed = static_cast<std::uint64_t>(seed);
            cmd_gen_data(cfg);
        } else if (train->parsed()) {
            if (train->count("--seed")) cfg.train.seed = static_cast<std::uint64_t>(seed);
            cmd_train(cfg);
        } else if (attack->parsed()) {
            if (attack->count("--seed")) cfg.attack.seed = static_cast<std::uint64_t>(seed);
            if (!mode_s.empty()) {
                try {
                    cfg.mode = a2fm::attack_mode_from_name(mode_s);
                } catch (const std::invalid_argument& e) {
                    fail("invalid_config", e.what());
                }
            }
            cmd_attack(cfg);
        } else if (transfer->parsed()) {
            if (transfer->count("--seed")) cfg.attack.seed = static_cast<std::uint64_t>(seed);
            cmd_transfer(cfg);
        } else if (sweep_cmd->parsed()) {
            if (sweep_cmd->count("--seed")) cfg.attack.seed = static_cast<std::uint64_t>(seed);
            cmd_sweep(cfg, kind_s, grid_s);
        } else if (report->parsed()) {
            cmd_report(cfg);
        }
    } catch (const a2fm::MissingFileError& e) {
        fail("missing_file", e.what());
    } catch (const a2fm::ArtifactError& e) {
        fail("corrupt_artifact", e.what());
    } catch (const std::invalid_argument& e) {
        fail("invalid_config", e.what());
    } catch (const std::exception& e) {
        fail("internal", e.what());
    }
    return 0;
}

// stta: batch experiment driver for semantics-aware test-time adaptation of
// a synthetic 3D pose benchmark.
//
// Subcommands: gen | pretrain | adapt | eval | ablate | sweep
// Exit codes:  0 success, 1 user error, 2 internal invariant violation.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "predictions_io.hpp"
#include "stta/adapt.hpp"
#include "stta/eval.hpp"
#include "stta/io.hpp"
#include "stta/neuralnet.hpp"
#include "stta/parallel.hpp"
#include "stta/rng.hpp"
#include "stta/synthworld.hpp"

namespace fs = std::filesystem;
using namespace stta;

namespace {

struct RunConfig {
    // paths
    std::string out;
    std::string data;
    std::string checkpoint;
    std::string pred;
    std::string baseline_pred;

    std::uint64_t seed = 1;

    // generation
    int source_videos = 64;
    int target_videos = 12;
    int source_frames = 600;
    int target_frames = 600;
    double src_damping = 0.5;
    double src_noise = 0.02;
    double src_nuisance_mean = 0.0;
    double src_nuisance_scale = 1.0;
    double tgt_damping = 1.0;
    double tgt_noise = 0.03;
    double tgt_nuisance_mean = 1.0;
    double tgt_nuisance_scale = 2.0;
    double pixel_noise = 3.0;
    double drop_prob = 0.05;

    // pretraining
    int pretrain_epochs = 40;
    int pretrain_batch = 64;
    double pretrain_lr = 1e-3;
    double pretrain_min_lr = 1e-5;

    // adaptation
    adapt::AdaptConfig acfg;
    double corrupt_labels = 0.0;

    // harnesses
    int harness_seeds = 10;
    double pck_threshold = eval::kPckThresholdPx;
};

void register_options(CLI::App& app, RunConfig& cfg) {
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "Config file with key = value lines");

    app.add_option("--out", cfg.out, "Output directory (or file for pretrain)");
    app.add_option("--data", cfg.data, "Dataset directory produced by 'gen'");
    app.add_option("--checkpoint", cfg.checkpoint, "Checkpoint file path");
    app.add_option("--pred", cfg.pred, "Predictions directory produced by 'adapt'");
    app.add_option("--baseline-pred", cfg.baseline_pred,
                   "Baseline predictions directory for improvement breakdowns");
    app.add_option("--seed", cfg.seed, "Master seed; all streams derive from it");

    app.add_option("--source-videos", cfg.source_videos, "Source (pretraining) video count");
    app.add_option("--target-videos", cfg.target_videos, "Target benchmark video count");
    app.add_option("--source-frames", cfg.source_frames, "Frames per source video");
    app.add_option("--target-frames", cfg.target_frames, "Frames per target video");
    app.add_option("--src-damping", cfg.src_damping, "Source amplitude damping");
    app.add_option("--src-noise", cfg.src_noise, "Source observation noise sigma");
    app.add_option("--src-nuisance-mean", cfg.src_nuisance_mean, "Source nuisance mean");
    app.add_option("--src-nuisance-scale", cfg.src_nuisance_scale, "Source nuisance scale");
    app.add_option("--tgt-damping", cfg.tgt_damping, "Target amplitude damping");
    app.add_option("--tgt-noise", cfg.tgt_noise, "Target observation noise sigma");
    app.add_option("--tgt-nuisance-mean", cfg.tgt_nuisance_mean, "Target nuisance mean");
    app.add_option("--tgt-nuisance-scale", cfg.tgt_nuisance_scale, "Target nuisance scale");
    app.add_option("--pixel-noise", cfg.pixel_noise, "Detector pixel noise sigma [px]");
    app.add_option("--drop-prob", cfg.drop_prob, "Detector per-joint dropout probability");

    app.add_option("--pretrain-epochs", cfg.pretrain_epochs, "Pretraining epochs");
    app.add_option("--pretrain-batch", cfg.pretrain_batch, "Pretraining minibatch size");
    app.add_option("--pretrain-lr", cfg.pretrain_lr, "Pretraining base learning rate");
    app.add_option("--pretrain-min-lr", cfg.pretrain_min_lr, "Pretraining final learning rate");

    app.add_option("--lambda1", cfg.acfg.lambda1, "2D reprojection loss weight");
    app.add_option("--lambda2", cfg.acfg.lambda2, "Motion-text alignment loss weight");
    app.add_option("--sigma", cfg.acfg.sigma, "Fill-in similarity gate");
    app.add_option("--alpha", cfg.acfg.alpha, "EMA factor for the 2D pose bank");
    app.add_option("--segment-frames", cfg.acfg.segment_frames, "Frames per segment");
    app.add_option("--batch", cfg.acfg.batch, "Segments per adaptation step");
    app.add_option("--epochs", cfg.acfg.epochs, "Adaptation epochs per video");
    app.add_option("--steps-per-epoch", cfg.acfg.steps_per_epoch,
                   "Fine-tuning steps per epoch (0 = auto)");
    app.add_option("--base-lr", cfg.acfg.base_lr, "Adaptation base learning rate");
    app.add_option("--min-lr", cfg.acfg.min_lr, "Adaptation final learning rate");
    app.add_option("--denoise-window", cfg.acfg.denoise_window, "Motion denoise window [frames]");
    app.add_option("--shape-window", cfg.acfg.shape_window, "Shape averaging window [frames]");
    app.add_option("--weight-floor", cfg.acfg.weight_floor, "Sampling weight floor");
    app.add_flag("--align,!--no-align", cfg.acfg.use_align, "Motion-text alignment loss");
    app.add_flag("--ema,!--no-ema", cfg.acfg.use_ema, "EMA refinement of the 2D bank");
    app.add_flag("--fillin,!--no-fillin", cfg.acfg.use_fillin, "Similarity-gated 2D fill-in");
    app.add_option("--corrupt-labels", cfg.corrupt_labels,
                   "Fraction of segments relabeled to a random wrong class");

    app.add_option("--seeds", cfg.harness_seeds, "Adaptation seeds per harness row");
    app.add_option("--pck-threshold", cfg.pck_threshold, "PCK threshold [px]");
}

std::vector<std::uint64_t> harness_seeds(const RunConfig& cfg) {
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.harness_seeds));
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(cfg.seed, "harness", i);
    return seeds;
}

synth::DomainSpec source_spec(const RunConfig& cfg) {
    synth::DomainSpec s = synth::source_domain();
    s.amplitude_damping = cfg.src_damping;
    s.obs_noise_sigma = cfg.src_noise;
    s.nuisance_mean = cfg.src_nuisance_mean;
    s.nuisance_scale = cfg.src_nuisance_scale;
    return s;
}

synth::DomainSpec target_spec(const RunConfig& cfg) {
    synth::DomainSpec s = synth::target_domain();
    s.amplitude_damping = cfg.tgt_damping;
    s.obs_noise_sigma = cfg.tgt_noise;
    s.nuisance_mean = cfg.tgt_nuisance_mean;
    s.nuisance_scale = cfg.tgt_nuisance_scale;
    return s;
}

synth::DetectorModel detector(const RunConfig& cfg) {
    synth::DetectorModel det;
    det.pixel_noise_sigma = cfg.pixel_noise;
    det.drop_prob = cfg.drop_prob;
    return det;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw UsageError(message);
}

std::vector<fs::path> list_videos(const fs::path& dir) {
    require(fs::is_directory(dir), "no such dataset directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".sttavid") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), "no .sttavid files under '" + dir.string() + "'");
    return files;
}

std::vector<synth::SyntheticVideo> load_videos(const fs::path& dir) {
    const std::vector<fs::path> files = list_videos(dir);
    std::vector<synth::SyntheticVideo> videos(files.size());
    parallel_for(files.size(), [&](std::size_t i) { videos[i] = synth::load_video(files[i]); });
    return videos;
}

std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

int cmd_gen(const RunConfig& cfg) {
    require(!cfg.out.empty(), "gen needs --out");
    const fs::path out(cfg.out);

    const emb::EmbeddingSpace space = synth::build_calibrated_space(derive_seed(cfg.seed, "emb", 0));
    emb::save_embedding(space, out / "embedding.sttaemb");

    synth::DatasetLayout src_layout{cfg.source_videos, cfg.source_frames, {}};
    synth::generate_dataset(source_spec(cfg), detector(cfg), src_layout,
                            derive_seed(cfg.seed, "source", 0), out / "source", "source");

    synth::DatasetLayout tgt_layout{cfg.target_videos, cfg.target_frames,
                                    {synth::DetectorModel::Occlusion::none,
                                     synth::DetectorModel::Occlusion::lower_body_truncation,
                                     synth::DetectorModel::Occlusion::random_block}};
    synth::generate_dataset(target_spec(cfg), detector(cfg), tgt_layout,
                            derive_seed(cfg.seed, "target", 0), out / "target", "target");

    std::printf("gen: %d source videos, %d target videos, embedding -> %s\n", cfg.source_videos,
                cfg.target_videos, out.string().c_str());
    return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
    require(!cfg.data.empty(), "pretrain needs --data");
    require(!cfg.out.empty(), "pretrain needs --out (checkpoint path)");
    const auto videos = load_videos(fs::path(cfg.data) / "source");

    nn::PretrainConfig pcfg;
    pcfg.epochs = cfg.pretrain_epochs;
    pcfg.batch = cfg.pretrain_batch;
    pcfg.base_lr = cfg.pretrain_lr;
    pcfg.min_lr = cfg.pretrain_min_lr;
    pcfg.seed = derive_seed(cfg.seed, "pretrain", 0);

    const nn::RegressorParams init = nn::RegressorParams::init(derive_seed(cfg.seed, "init", 0));
    const nn::PretrainResult result = nn::pretrain(init, videos, pcfg);
    nn::save_checkpoint(result.params, cfg.out);

    std::string csv = "epoch,loss,lr\n";
    for (const auto& p : result.curve)
        csv += std::to_string(p.epoch) + ',' + fmt_num(p.loss) + ',' + fmt_num(p.lr) + '\n';
    atomic_write_file(cfg.out + ".curve.csv", csv);

    std::printf("pretrain: %zu videos, final loss %.6f -> %s\n", videos.size(),
                result.curve.empty() ? 0.0 : result.curve.back().loss, cfg.out.c_str());
    return 0;
}

int cmd_adapt(const RunConfig& cfg) {
    require(!cfg.data.empty(), "adapt needs --data");
    require(!cfg.checkpoint.empty(), "adapt needs --checkpoint");
    require(!cfg.out.empty(), "adapt needs --out");
    cfg.acfg.validate();

    const auto videos = load_videos(fs::path(cfg.data) / "target");
    const emb::EmbeddingSpace space = emb::load_embedding(fs::path(cfg.data) / "embedding.sttaemb");
    const nn::RegressorParams checkpoint = nn::load_checkpoint(cfg.checkpoint);
    const fs::path out(cfg.out);
    fs::create_directories(out);

    std::vector<char> degraded(videos.size(), 0);
    parallel_for(videos.size(), [&](std::size_t i) {
        synth::SyntheticVideo video = videos[i];
        if (cfg.corrupt_labels > 0.0)
            synth::corrupt_block_labels(video, cfg.corrupt_labels,
                                        derive_seed(cfg.seed, "labels", video.id));
        const adapt::AdaptResult result = adapt::adapt_video(
            checkpoint, video, space, cfg.acfg, derive_seed(cfg.seed, "adapt", video.id));
        degraded[i] = result.degraded ? 1 : 0;

        char name[64];
        std::snprintf(name, sizeof(name), "video_%03u", video.id);
        prd::save_predictions(result.predictions, result.fills,
                              out / (std::string(name) + ".sttaprd"));
        std::string jsonl;
        for (const auto& log : result.log) jsonl += adapt::epoch_log_json(log) + "\n";
        atomic_write_file(out / (std::string(name) + ".adapt.jsonl"), jsonl);
    });
    for (std::size_t i = 0; i < videos.size(); ++i) {
        if (degraded[i])
            std::fprintf(stderr,
                         "adapt: video %u has no uniform-label segment; ran in degraded mode "
                         "(2D + smoothing only)\n",
                         videos[i].id);
    }
    std::printf("adapt: %zu videos -> %s\n", videos.size(), out.string().c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    require(!cfg.data.empty(), "eval needs --data");
    require(!cfg.pred.empty(), "eval needs --pred");
    require(!cfg.out.empty(), "eval needs --out");
    const auto videos = load_videos(fs::path(cfg.data) / "target");
    const fs::path out(cfg.out);
    fs::create_directories(out);

    std::vector<eval::VideoMetrics> metrics(videos.size());
    std::vector<prd::LoadedPredictions> loaded(videos.size());
    parallel_for(videos.size(), [&](std::size_t i) {
        char name[64];
        std::snprintf(name, sizeof(name), "video_%03u.sttaprd", videos[i].id);
        loaded[i] = prd::load_predictions(fs::path(cfg.pred) / name);
        metrics[i] =
            eval::evaluate_video(videos[i], loaded[i].preds, loaded[i].fills, cfg.pck_threshold);
    });
    const eval::MetricsReport report = eval::aggregate(metrics);

    nlohmann::json j;
    j["aggregate"]["mpjpe_mm"] = report.mpjpe;
    j["aggregate"]["pa_mpjpe_mm"] = report.pa_mpjpe;
    j["videos"] = nlohmann::json::array();
    std::string csv = "video_id,mpjpe_mm,pa_mpjpe_mm,occluded_mpjpe_mm,visible_mpjpe_mm,pck_filled\n";
    for (const auto& m : report.videos) {
        nlohmann::json v;
        v["video_id"] = m.video_id;
        v["mpjpe_mm"] = m.mpjpe;
        v["pa_mpjpe_mm"] = m.pa_mpjpe;
        if (m.occluded_mpjpe) v["occluded_mpjpe_mm"] = *m.occluded_mpjpe;
        if (m.visible_mpjpe) v["visible_mpjpe_mm"] = *m.visible_mpjpe;
        if (m.pck_filled) v["pck_filled"] = *m.pck_filled;
        for (const auto& [cls, err] : m.per_class_mpjpe)
            v["per_class_mpjpe_mm"][emb::semantic_class(cls).name] = err;
        j["videos"].push_back(v);
        csv += std::to_string(m.video_id) + ',' + fmt_num(m.mpjpe) + ',' + fmt_num(m.pa_mpjpe) +
               ',' + (m.occluded_mpjpe ? fmt_num(*m.occluded_mpjpe) : "") + ',' +
               (m.visible_mpjpe ? fmt_num(*m.visible_mpjpe) : "") + ',' +
               (m.pck_filled ? fmt_num(*m.pck_filled) : "") + '\n';
    }
    atomic_write_file(out / "metrics.json", j.dump(2) + "\n");
    atomic_write_file(out / "metrics.csv", csv);

    if (!cfg.baseline_pred.empty()) {
        // per-class improvement against a baseline prediction set
        std::map<int, eval::ClassAgg> agg;
        for (std::size_t i = 0; i < videos.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "video_%03u.sttaprd", videos[i].id);
            const prd::LoadedPredictions base =
                prd::load_predictions(fs::path(cfg.baseline_pred) / name);
            for (std::size_t f = 0; f < videos[i].frames.size(); ++f) {
                eval::ClassAgg& a = agg[videos[i].frames[f].label];
                a.pre_sum += eval::mpjpe_mm(base.preds.j3d[f], videos[i].frames[f].gt_j3d);
                a.post_sum += eval::mpjpe_mm(loaded[i].preds.j3d[f], videos[i].frames[f].gt_j3d);
                a.frames += 1;
            }
        }
        std::vector<eval::ClassImprovement> rows;
        for (const auto& [cls, a] : agg) {
            eval::ClassImprovement ci;
            ci.class_id = cls;
            ci.name = emb::semantic_class(cls).name;
            ci.frames = a.frames;
            ci.improvement_mm = (a.pre_sum - a.post_sum) / static_cast<double>(a.frames);
            rows.push_back(std::move(ci));
        }
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return a.improvement_mm > b.improvement_mm; });
        atomic_write_file(out / "breakdown.csv", eval::breakdown_csv(rows));
    }

    std::printf("eval: MPJPE %.2f mm, PA-MPJPE %.2f mm over %zu videos -> %s\n", report.mpjpe,
                report.pa_mpjpe, videos.size(), out.string().c_str());
    return 0;
}

struct HarnessInputs {
    std::vector<synth::SyntheticVideo> videos;
    emb::EmbeddingSpace space;
    nn::RegressorParams checkpoint;
};

HarnessInputs load_harness(const RunConfig& cfg) {
    require(!cfg.data.empty(), "this command needs --data");
    require(!cfg.checkpoint.empty(), "this command needs --checkpoint");
    require(!cfg.out.empty(), "this command needs --out");
    HarnessInputs h;
    h.videos = load_videos(fs::path(cfg.data) / "target");
    h.space = emb::load_embedding(fs::path(cfg.data) / "embedding.sttaemb");
    h.checkpoint = nn::load_checkpoint(cfg.checkpoint);
    return h;
}

int cmd_ablate(const RunConfig& cfg) {
    const HarnessInputs h = load_harness(cfg);
    const eval::BenchmarkContext ctx{&h.videos, &h.space, &h.checkpoint};
    const eval::AblationResult result = eval::run_ablation(ctx, cfg.acfg, harness_seeds(cfg));
    fs::create_directories(cfg.out);
    atomic_write_file(fs::path(cfg.out) / "ablation.csv", eval::ablation_csv(result.rows));
    for (const auto& row : result.rows)
        std::printf("  %-16s median MPJPE %8.2f mm, PA %8.2f mm\n", row.name.c_str(),
                    row.median_mpjpe, row.median_pa);
    std::printf("ablate: -> %s/ablation.csv\n", cfg.out.c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& kind) {
    const HarnessInputs h = load_harness(cfg);
    const eval::BenchmarkContext ctx{&h.videos, &h.space, &h.checkpoint};
    const auto seeds = harness_seeds(cfg);
    fs::create_directories(cfg.out);
    if (kind == "threshold") {
        const auto rows = eval::run_threshold_sweep(ctx, cfg.acfg, eval::default_sigma_grid(), seeds);
        atomic_write_file(fs::path(cfg.out) / "threshold_sweep.csv", eval::threshold_csv(rows));
        std::printf("sweep threshold: %zu rows -> %s/threshold_sweep.csv\n", rows.size(),
                    cfg.out.c_str());
    } else if (kind == "ema") {
        const auto rows = eval::run_ema_sweep(ctx, cfg.acfg, eval::default_alpha_grid(), seeds);
        atomic_write_file(fs::path(cfg.out) / "ema_sweep.csv", eval::ema_csv(rows));
        std::printf("sweep ema: %zu rows -> %s/ema_sweep.csv\n", rows.size(), cfg.out.c_str());
    } else if (kind == "labelnoise") {
        const auto rows = eval::run_label_noise(ctx, cfg.acfg, {0.0, 0.1, 0.25}, seeds);
        atomic_write_file(fs::path(cfg.out) / "label_noise.csv", eval::label_noise_csv(rows));
        std::printf("sweep labelnoise: %zu rows -> %s/label_noise.csv\n", rows.size(),
                    cfg.out.c_str());
    } else {
        throw UsageError("unknown sweep kind '" + kind + "' (threshold|ema|labelnoise)");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantics-aware test-time adaptation on a synthetic 3D pose benchmark"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string sweep_kind;

    CLI::App* gen = app.add_subcommand("gen", "Generate datasets and the embedding space");
    CLI::App* pretrain =
        app.add_subcommand("pretrain", "Pretrain the pose regressor on the source set");
    CLI::App* adapt_cmd = app.add_subcommand("adapt", "Adapt the checkpoint to every target video");
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
    CLI::App* ablate = app.add_subcommand("ablate", "Component ablation table");
    CLI::App* sweep = app.add_subcommand("sweep", "Hyperparameter sweeps");
    sweep->add_option("kind", sweep_kind, "threshold | ema | labelnoise")->required();
    for (CLI::App* sub : {gen, pretrain, adapt_cmd, eval_cmd, ablate, sweep})
        register_options(*sub, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(cfg);
        if (pretrain->parsed()) return cmd_pretrain(cfg);
        if (adapt_cmd->parsed()) return cmd_adapt(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg);
        if (ablate->parsed()) return cmd_ablate(cfg);
        if (sweep->parsed()) return cmd_sweep(cfg, sweep_kind);
        throw UsageError("no subcommand selected");
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const UnknownLabelError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
}

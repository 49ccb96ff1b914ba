#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stta/adapt.hpp"

namespace stta::eval {

inline constexpr double kPckThresholdPx = 11.2;  // 0.05 * image width

/// Root-aligned mean per-joint position error in millimeters.
double mpjpe_mm(const geo::Joints3D& pred, const geo::Joints3D& gt);

/// Procrustes-aligned MPJPE in millimeters.
double pa_mpjpe_mm(const geo::Joints3D& pred, const geo::Joints3D& gt);

/// Fraction of masked joints within threshold pixels of ground truth.
/// Throws UsageError on an empty mask.
double pck(const geo::Joints2D& pred, const geo::Joints2D& gt,
           const std::array<bool, geo::kJointCount>& mask, double threshold_px = kPckThresholdPx);

struct VideoMetrics {
    int video_id = 0;
    double mpjpe = 0.0;     // mean over (frame, joint)
    double pa_mpjpe = 0.0;  // mean over frames of per-frame PA error
    std::optional<double> occluded_mpjpe;  // over detector-invisible joints
    std::optional<double> visible_mpjpe;
    std::optional<double> pck_filled;  // fill events vs ground-truth 2D
    std::map<int, double> per_class_mpjpe;
};

VideoMetrics evaluate_video(const synth::SyntheticVideo& gt, const adapt::VideoPredictions& pred,
                            const std::vector<adapt::FillEvent>& fills,
                            double pck_threshold_px = kPckThresholdPx);

struct MetricsReport {
    std::vector<VideoMetrics> videos;
    double mpjpe = 0.0;  // mean over videos
    double pa_mpjpe = 0.0;
};

MetricsReport aggregate(std::vector<VideoMetrics> videos);

/// Shared fixtures for the experiment harnesses.
struct BenchmarkContext {
    const std::vector<synth::SyntheticVideo>* videos = nullptr;
    const emb::EmbeddingSpace* space = nullptr;
    const nn::RegressorParams* checkpoint = nullptr;
};

struct ClassAgg {
    double pre_sum = 0.0;   // per-frame MPJPE summed over the class's frames
    double post_sum = 0.0;
    long frames = 0;
};

/// One (video, seed) adaptation outcome.
struct RunRecord {
    int video_id = 0;
    std::uint64_t seed = 0;
    double pre_mpjpe = 0.0;
    double post_mpjpe = 0.0;
    double pre_pa = 0.0;
    double post_pa = 0.0;
    std::optional<double> pre_occluded;
    std::optional<double> post_occluded;
    long fill_count = 0;
    long fill_hits = 0;  // fill events within the PCK threshold
    double mean_similarity = 0.0;
    bool truncated_video = false;
    std::map<int, ClassAgg> per_class;
};

/// Adapts every benchmark video under every seed (seed_adapt =
/// hash(seed, "adapt", video id)), in parallel, deterministically.
std::vector<RunRecord> run_benchmark(const BenchmarkContext& ctx, const adapt::AdaptConfig& cfg,
                                     const std::vector<std::uint64_t>& seeds,
                                     double label_corruption = 0.0);

double median(std::vector<double> values);

/// Per-seed benchmark MPJPE (mean over videos), one value per seed.
std::vector<double> per_seed_mpjpe(const std::vector<RunRecord>& records);

struct AblationRow {
    std::string name;
    bool align = false;
    bool ema = false;
    bool fillin = false;
    double median_mpjpe = 0.0;
    double median_pa = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> rows;                 // baseline, +align, +align+ema, full
    std::array<std::vector<RunRecord>, 4> records;
};

AblationResult run_ablation(const BenchmarkContext& ctx, const adapt::AdaptConfig& base,
                            const std::vector<std::uint64_t>& seeds);

struct ThresholdRow {
    double sigma = 0.0;
    double median_mpjpe = 0.0;
    double median_fill_count = 0.0;  // per-seed total over videos
    double fill_pck = 0.0;           // pooled over all runs
};

std::vector<double> default_sigma_grid();  // 0.55 .. 0.80 step 0.05

std::vector<ThresholdRow> run_threshold_sweep(const BenchmarkContext& ctx,
                                              const adapt::AdaptConfig& base,
                                              const std::vector<double>& sigmas,
                                              const std::vector<std::uint64_t>& seeds);

struct EmaRow {
    double alpha = 0.0;
    double median_mpjpe = 0.0;
};

std::vector<double> default_alpha_grid();  // 0.75 .. 0.95 step 0.05

std::vector<EmaRow> run_ema_sweep(const BenchmarkContext& ctx, const adapt::AdaptConfig& base,
                                  const std::vector<double>& alphas,
                                  const std::vector<std::uint64_t>& seeds);

struct LabelNoiseRow {
    double corruption_rate = 0.0;
    double median_mpjpe = 0.0;
    double median_pa = 0.0;
};

std::vector<LabelNoiseRow> run_label_noise(const BenchmarkContext& ctx,
                                           const adapt::AdaptConfig& base,
                                           const std::vector<double>& rates,
                                           const std::vector<std::uint64_t>& seeds);

struct ClassImprovement {
    int class_id = 0;
    std::string name;
    long frames = 0;
    double improvement_mm = 0.0;  // pre minus post, positive is better
};

/// Mean per-frame MPJPE improvement per semantic class, descending. Classes
/// absent from the records are omitted.
std::vector<ClassImprovement> per_class_breakdown(const std::vector<RunRecord>& records);

/// True when the ten lower-body joints are detector-invisible in every frame.
bool is_lower_body_truncated(const synth::SyntheticVideo& video);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string threshold_csv(const std::vector<ThresholdRow>& rows);
std::string ema_csv(const std::vector<EmaRow>& rows);
std::string label_noise_csv(const std::vector<LabelNoiseRow>& rows);
std::string breakdown_csv(const std::vector<ClassImprovement>& rows);

}  // namespace stta::eval

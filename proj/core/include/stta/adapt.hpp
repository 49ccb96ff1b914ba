#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stta/embedding.hpp"
#include "stta/geometry.hpp"
#include "stta/neuralnet.hpp"
#include "stta/rng.hpp"
#include "stta/synthworld.hpp"

namespace stta::adapt {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Expected visits per segment per epoch when steps_per_epoch is derived
/// automatically.
inline constexpr int kSegmentVisitsPerEpoch = 16;

/// A uniform-label window of segment_frames frames. Windows within one video
/// never overlap. weight is the sampling weight, refreshed every epoch.
struct Segment {
    int video_id = 0;
    int begin = 0;
    int length = 0;
    int label = -1;
    double weight = 0.0;
};

/// The evolving per-video 2D supervision store: positions with visibility,
/// plus a marker for entries that originated from fill-in.
struct PoseBank {
    MatX j2d;            // F x 48, NaN sentinel where invisible
    MaskMatrix visible;  // F x 24
    MaskMatrix filled;   // F x 24

    static PoseBank from_detector(const synth::SyntheticVideo& video);

    int frames() const { return static_cast<int>(j2d.rows()); }

    /// Serialized image used by tests to assert the bank stayed untouched.
    std::string bytes() const;

    /// Checks visible <=> finite position and filled => visible.
    void validate() const;
};

struct AdaptConfig {
    double lambda1 = 0.1;
    double lambda2 = 0.2;
    double sigma = 0.75;   // fill-in similarity gate
    double alpha = 0.9;    // EMA factor on visible entries
    int segment_frames = synth::kSegmentFrames;
    int batch = 4;
    int epochs = 6;
    int steps_per_epoch = 0;  // 0: ceil(2 * kept segments / batch)
    double base_lr = 5e-5;
    double min_lr = 1e-6;
    int denoise_window = 9;
    int shape_window = 31;
    double weight_floor = 0.01;
    bool use_align = true;
    bool use_ema = true;
    bool use_fillin = true;

    void validate() const;  // throws UsageError
};

/// Non-overlapping stride-T windows from frame 0; windows with mixed labels
/// are discarded.
std::vector<Segment> segment_video(const std::vector<int>& labels, int t);

/// All stride-T windows regardless of labels (label -1). The fallback when
/// no uniform-label segment exists.
std::vector<Segment> stride_windows(int frames, int t);

/// Full-video forward pass: raw and orthonormalized 6D, shape, translation,
/// joints, projections.
struct VideoPredictions {
    MatX theta6d_raw;    // F x 144
    MatX theta6d_ortho;  // F x 144
    MatX beta;           // F x 10
    MatX trans;          // F x 3
    std::vector<geo::Joints3D> j3d;
    std::vector<geo::Joints2D> j2d;

    int frames() const { return static_cast<int>(theta6d_raw.rows()); }
};

VideoPredictions predict_video(const nn::RegressorParams& params, const synth::SyntheticVideo& video);

/// Root rotation taken frame-wise from the exemplar, everything else from
/// the prediction. Throws ShapeMismatchError on length mismatch.
emb::Motion6d replace_global_rotation(const emb::Motion6d& pred6d, const emb::Motion6d& exemplar);

/// Similarity between the segment's label and its predicted motion with the
/// exemplar root substituted.
double segment_similarity(const VideoPredictions& preds, const Segment& seg,
                          const emb::EmbeddingSpace& space);

/// weight = max(1 - similarity, floor); also stored on the segments.
std::vector<double> segment_weights(std::vector<Segment>& segments, const VideoPredictions& preds,
                                    const emb::EmbeddingSpace& space, double weight_floor);

/// Draws b indices with replacement, probability proportional to weight.
std::vector<int> sample_batch(const std::vector<double>& weights, int b, Rng& rng);

/// Per-frame masked 2D L1, summed over joints, normalized by image width.
double loss_2d_frame(const geo::Joints2D& pred_j2d, const PoseBank& bank, int frame,
                     double image_width);

/// Frame average of loss_2d_frame over [begin, begin+length).
double loss_2d_segment(const VideoPredictions& preds, const PoseBank& bank, int begin, int length,
                       double image_width);

double loss_align(const emb::Motion6d& pred6d_prime, int label, const emb::EmbeddingSpace& space);

/// Centered moving average per 6D channel (edge-clamped window), then
/// re-orthonormalized per frame. No gradient flows through the result.
MatX denoise_motion(const MatX& theta6d_seq, int window);

/// Centered moving average of the shape coefficients.
MatX average_shape(const MatX& beta_seq, int window);

/// Mean-per-element L1 against the denoised targets, theta and beta terms.
double loss_smooth(const MatX& theta6d, const MatX& beta, const MatX& theta_bar,
                   const MatX& beta_bar);

/// lambda1 * L2D + lambda2 * Lalign + Lsmooth for one segment, computed from
/// full-video predictions. space may be null when cfg.use_align is false.
double loss_overall(const VideoPredictions& preds, const PoseBank& bank, const Segment& seg,
                    const MatX& theta_bar, const MatX& beta_bar, const emb::EmbeddingSpace* space,
                    const AdaptConfig& cfg);

struct FillEvent {
    int epoch = 0;
    int frame = 0;
    int joint = 0;
    double u = 0.0;
    double v = 0.0;
};

struct BankUpdateStats {
    long filled = 0;
    std::vector<FillEvent> events;
};

/// The three-case end-of-epoch update. Visible entries are EMA-refined,
/// invisible entries inside a kept segment whose similarity clears the gate
/// are filled from the predicted projection, everything else stays empty.
BankUpdateStats update_pose_bank(PoseBank& bank, const VideoPredictions& preds,
                                 const std::vector<Segment>& segments,
                                 const std::vector<double>& seg_sims, const AdaptConfig& cfg,
                                 int epoch);

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_l2d = 0.0;
    double mean_align = 0.0;
    double mean_smooth = 0.0;
    double lr = 0.0;
    long filled_count = 0;
    double mean_similarity = 0.0;
};

std::string epoch_log_json(const EpochLog& log);

struct AdaptResult {
    nn::RegressorParams params;
    VideoPredictions predictions;
    std::vector<EpochLog> log;
    std::vector<FillEvent> fills;
    bool degraded = false;
};

/// One adaptation run, split into the epoch phases so tests can observe the
/// state between them. The bank is read-only during run_steps().
class AdaptSession {
public:
    AdaptSession(const nn::RegressorParams& checkpoint, const synth::SyntheticVideo& video,
                 const emb::EmbeddingSpace& space, const AdaptConfig& cfg, std::uint64_t seed);

    void recompute_weights();
    void run_steps();
    void end_epoch();

    void run_epoch() {
        recompute_weights();
        run_steps();
        end_epoch();
    }

    bool degraded() const { return degraded_; }
    int completed_epochs() const { return epoch_; }
    int steps_per_epoch() const { return steps_per_epoch_; }
    const PoseBank& bank() const { return bank_; }
    const VideoPredictions& predictions() const { return preds_; }
    const nn::RegressorParams& params() const { return params_; }
    const std::vector<Segment>& segments() const { return segments_; }
    const std::vector<EpochLog>& log() const { return log_; }
    const std::vector<FillEvent>& fills() const { return fills_; }

private:
    const synth::SyntheticVideo& video_;
    const emb::EmbeddingSpace& space_;
    AdaptConfig cfg_;  // effective flags (degraded mode may clear align/fill)
    nn::RegressorParams params_;
    nn::AdamState adam_;
    PoseBank bank_;
    std::vector<Segment> segments_;
    std::vector<double> weights_;
    VideoPredictions preds_;
    MatX obs_;  // F x 64
    Rng rng_;
    nn::LrSchedule sched_;
    long global_step_ = 0;
    int epoch_ = 0;
    int steps_per_epoch_ = 0;
    bool degraded_ = false;
    std::vector<EpochLog> log_;
    std::vector<FillEvent> fills_;
    double pending_loss_ = 0.0, pending_l2d_ = 0.0, pending_align_ = 0.0, pending_smooth_ = 0.0;
    double pending_lr_ = 0.0;
};

/// Per-video test-time adaptation: parameters reset from the checkpoint,
/// bank initialized from the detector, cfg.epochs rounds of fine-tuning and
/// bank refresh. Deterministic given (checkpoint, video, cfg, seed).
AdaptResult adapt_video(const nn::RegressorParams& checkpoint, const synth::SyntheticVideo& video,
                        const emb::EmbeddingSpace& space, const AdaptConfig& cfg,
                        std::uint64_t seed);

}  // namespace stta::adapt

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "stta/embedding.hpp"
#include "stta/geometry.hpp"
#include "stta/rng.hpp"

namespace stta::synth {

inline constexpr int kObsDim = 64;
inline constexpr int kPoseFeatDim = 48;   // learned part of the observation
inline constexpr int kNuisanceDim = 16;   // appended domain-dependent dims
inline constexpr int kFps = 30;
inline constexpr int kSegmentFrames = 60;

/// One sinusoidal joint track: rotation about a fixed axis with
/// angle(t) = offset + amplitude * sin(2*pi*frequency*t + phase).
struct JointWave {
    geo::Vec3 axis = geo::Vec3::UnitX();
    double amplitude = 0.0;  // rad
    double frequency = 0.0;  // Hz
    double phase = 0.0;      // rad
    double offset = 0.0;     // rad
};

enum class Trajectory { stationary, circle_walk, vertical_bob, seated };

/// Parametric generator for one semantic motion class.
struct MotionTemplate {
    int class_id = 0;
    std::array<JointWave, geo::kJointCount> waves{};
    Trajectory trajectory = Trajectory::stationary;
    double bob_amplitude = 0.0;  // m, for vertical_bob
    double bob_frequency = 0.0;  // Hz
    double seat_drop = 0.0;      // m, for seated
};

const MotionTemplate& motion_template(int class_id);  // throws UnknownLabelError

/// Simulated 2D detector. Dropout models keypoints whose confidence falls
/// under the acceptance threshold; patterns model truncation and occlusion.
struct DetectorModel {
    enum class Occlusion { none, lower_body_truncation, random_block };

    double pixel_noise_sigma = 3.0;  // px
    double drop_prob = 0.05;
    Occlusion occlusion = Occlusion::none;
};

/// The ten joints hidden by a waist-level truncation: pelvis, hips, spine1,
/// knees, ankles, feet.
const std::array<int, 10>& lower_body_joints();

struct DomainSpec {
    std::array<double, emb::kNumClasses> class_mix{};
    double amplitude_damping = 1.0;
    double nuisance_mean = 0.0;
    double nuisance_scale = 1.0;
    double obs_noise_sigma = 0.0;
};

DomainSpec source_domain();
DomainSpec target_domain();

struct Frame {
    Eigen::Matrix<double, kObsDim, 1> obs;
    geo::Pose gt_pose;
    geo::Joints3D gt_j3d;
    geo::Joints2D gt_j2d;
    geo::Joints2D det_j2d;          // NaN where invisible
    std::array<bool, geo::kJointCount> visibility{};
    std::uint16_t label = 0;
};

struct SyntheticVideo {
    std::uint32_t id = 0;
    std::uint32_t fps = kFps;
    std::vector<Frame> frames;

    std::vector<int> labels() const;
};

/// Deterministic class motion: template sinusoids, per-video shape draw,
/// class trajectory, slow global-rotation drift.
std::vector<geo::Pose> generate_motion(int class_id, int t_frames, std::uint64_t seed,
                                       double amplitude_damping = 1.0);

/// Fixed random one-hidden-layer feature of the pose plus nuisance dims and
/// observation noise from the domain spec.
Eigen::Matrix<double, kObsDim, 1> synth_observation(const geo::Pose& pose, const DomainSpec& spec,
                                                    Rng& rng);

/// Per-frame detector output: pixel noise on visible joints, the occlusion
/// pattern, and independent per-joint dropout.
void simulate_detector(const std::vector<geo::Joints2D>& gt_j2d, const DetectorModel& det,
                       std::uint64_t seed, std::vector<geo::Joints2D>& det_j2d,
                       std::vector<std::array<bool, geo::kJointCount>>& visibility);

SyntheticVideo generate_video(const DomainSpec& spec, const DetectorModel& det, std::uint32_t id,
                              int frames, std::uint64_t dataset_seed);

struct DatasetLayout {
    int n_videos = 0;
    int frames_per_video = 0;
    /// Detector patterns cycled across the video ids in thirds; empty means
    /// every video uses the base detector pattern.
    std::vector<DetectorModel::Occlusion> pattern_cycle;
};

/// Writes <prefix>_<id>.sttavid plus a JSON sidecar per video. Bytes are a
/// pure function of (spec, layout, seed).
void generate_dataset(const DomainSpec& spec, const DetectorModel& det, const DatasetLayout& layout,
                      std::uint64_t seed, const std::filesystem::path& dir,
                      const std::string& prefix);

std::vector<SyntheticVideo> generate_dataset_in_memory(const DomainSpec& spec,
                                                       const DetectorModel& det,
                                                       const DatasetLayout& layout,
                                                       std::uint64_t seed);

/// Canonical template instance for a class: seed-free, zero shape,
/// origin-anchored trajectory. Root rotations feed global-rotation
/// replacement during adaptation.
const std::vector<geo::Pose>& exemplar_lookup(int class_id);  // throws UnknownLabelError

/// Exemplar as a 60 x 144 sequence of valid 6D rows.
const emb::Motion6d& exemplar_6d(int class_id);

/// 6D sequence (T x 144) of a pose range, exact per-joint conversion.
emb::Motion6d poses_to_6d(const std::vector<geo::Pose>& poses, int begin, int count);

/// Relabels whole kSegmentFrames blocks to a random wrong class with the
/// given probability. Models noisy upstream labeling.
void corrupt_block_labels(SyntheticVideo& video, double rate, std::uint64_t seed);

/// Production embedding space: anchors plus an encoder calibrated on
/// template prototypes at varied phase, amplitude, and heading.
emb::EmbeddingSpace build_calibrated_space(std::uint64_t seed);

/// Held-out prototypes drawn from the same family, for generalization checks.
std::vector<emb::Prototype> heldout_prototypes(std::uint64_t seed, int per_class);

void save_video(const SyntheticVideo& video, const DomainSpec& spec, std::uint64_t seed,
                const std::filesystem::path& path);
SyntheticVideo load_video(const std::filesystem::path& path);

}  // namespace stta::synth

#include "stta/synthworld.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "stta/io.hpp"
#include "stta/parallel.hpp"

namespace stta::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
// walking path: flat ellipse, ~1.2 m/s average speed over the ~3.55 m lap
constexpr double kWalkRadiusX = 0.8;   // m
constexpr double kWalkRadiusZ = 0.25;  // m
constexpr double kWalkOmega = 2.0 * kPi / 3.0;  // rad/s
constexpr std::uint64_t kFeatureMapSeed = 0x57744fea70b5ull;  // build-time constant

enum Joint {
    kPelvis = 0, kHipL, kHipR, kSpine1, kKneeL, kKneeR, kSpine2, kAnkleL, kAnkleR,
    kSpine3, kFootL, kFootR, kNeck, kCollarL, kCollarR, kHead, kShoulderL, kShoulderR,
    kElbowL, kElbowR, kWristL, kWristR, kHandL, kHandR,
};

const geo::Vec3 kAxisX = geo::Vec3::UnitX();
const geo::Vec3 kAxisY = geo::Vec3::UnitY();
const geo::Vec3 kAxisZ = geo::Vec3::UnitZ();

MotionTemplate make_template(int class_id) {
    MotionTemplate t;
    t.class_id = class_id;
    auto wave = [&t](int joint, const geo::Vec3& axis, double amp, double freq, double phase,
                     double offset) {
        t.waves[static_cast<std::size_t>(joint)] = JointWave{axis, amp, freq, phase, offset};
    };
    // arms hang at the sides unless the class animates them
    auto arms_down = [&](double amp, double freq) {
        wave(kShoulderL, kAxisZ, amp, freq, 0.0, 1.25);
        wave(kShoulderR, kAxisZ, amp, freq, kPi, -1.25);
    };
    switch (class_id) {
        case 0:  // idle: breathing sway only
            wave(kPelvis, kAxisX, 0.02, 0.5, 0.0, 0.0);
            wave(kSpine1, kAxisX, 0.025, 0.5, 0.0, 0.03);
            wave(kSpine2, kAxisX, 0.02, 0.5, 0.6, 0.02);
            wave(kHead, kAxisX, 0.02, 0.25, 0.0, 0.05);
            arms_down(0.02, 0.5);
            wave(kElbowL, kAxisX, 0.03, 0.5, 0.0, 0.20);
            wave(kElbowR, kAxisX, 0.03, 0.5, kPi, 0.20);
            t.trajectory = Trajectory::stationary;
            break;
        case 1:  // walking: antiphase legs, forearm swing, circular path
            wave(kPelvis, kAxisX, 0.03, 1.0, 0.0, 0.0);
            wave(kHipL, kAxisX, 0.55, 1.0, 0.0, 0.0);
            wave(kHipR, kAxisX, 0.55, 1.0, kPi, 0.0);
            wave(kKneeL, kAxisX, 0.35, 1.0, -kPi / 2, 0.35);
            wave(kKneeR, kAxisX, 0.35, 1.0, kPi / 2, 0.35);
            wave(kAnkleL, kAxisX, 0.10, 1.0, 0.0, -0.08);
            wave(kAnkleR, kAxisX, 0.10, 1.0, kPi, -0.08);
            wave(kSpine1, kAxisX, 0.04, 2.0, 0.0, 0.05);
            wave(kHead, kAxisX, 0.02, 2.0, 0.0, 0.03);
            arms_down(0.06, 1.0);
            wave(kElbowL, kAxisX, 0.30, 1.0, kPi, 0.30);
            wave(kElbowR, kAxisX, 0.30, 1.0, 0.0, 0.30);
            t.trajectory = Trajectory::circle_walk;
            t.bob_amplitude = 0.025;
            t.bob_frequency = 2.0;
            break;
        case 2:  // squatting: deep synchronized knee/hip cycle, pelvis drops
            wave(kPelvis, kAxisX, 0.02, 0.5, -kPi / 2, 0.0);
            wave(kKneeL, kAxisX, 0.85, 0.5, -kPi / 2, 0.90);
            wave(kKneeR, kAxisX, 0.85, 0.5, -kPi / 2, 0.90);
            wave(kHipL, kAxisX, 0.55, 0.5, kPi / 2, -0.55);
            wave(kHipR, kAxisX, 0.55, 0.5, kPi / 2, -0.55);
            wave(kSpine1, kAxisX, 0.12, 0.5, -kPi / 2, 0.12);
            arms_down(0.03, 0.5);
            wave(kElbowL, kAxisX, 0.25, 0.5, -kPi / 2, 0.25);
            wave(kElbowR, kAxisX, 0.25, 0.5, -kPi / 2, 0.25);
            t.trajectory = Trajectory::vertical_bob;
            t.bob_amplitude = 0.18;
            t.bob_frequency = 0.5;
            break;
        case 3:  // sitting: static 90-degree hips/knees, small gestures
            wave(kHipL, kAxisX, 0.03, 0.5, 0.0, -1.35);
            wave(kHipR, kAxisX, 0.03, 0.5, 0.4, -1.35);
            wave(kKneeL, kAxisX, 0.03, 0.5, kPi / 3, 1.35);
            wave(kKneeR, kAxisX, 0.03, 0.5, kPi / 3 + 0.4, 1.35);
            wave(kSpine1, kAxisX, 0.04, 0.5, 0.0, 0.08);
            wave(kHead, kAxisY, 0.10, 0.25, 0.0, 0.0);
            arms_down(0.04, 0.5);
            wave(kElbowL, kAxisX, 0.12, 0.5, 0.0, 0.50);
            wave(kElbowR, kAxisX, 0.12, 0.5, kPi, 0.50);
            t.trajectory = Trajectory::seated;
            t.seat_drop = 0.35;
            break;
        case 4:  // raise-arms: shoulders sweep between hanging and overhead
            wave(kPelvis, kAxisX, 0.015, 0.5, 0.0, 0.0);
            wave(kShoulderL, kAxisZ, 1.175, 0.5, kPi / 2, 0.075);
            wave(kShoulderR, kAxisZ, 1.175, 0.5, kPi / 2 + kPi, -0.075);
            wave(kElbowL, kAxisX, 0.10, 0.5, kPi / 2, 0.12);
            wave(kElbowR, kAxisX, 0.10, 0.5, kPi / 2, 0.12);
            wave(kSpine1, kAxisX, 0.03, 0.5, 0.0, 0.03);
            t.trajectory = Trajectory::vertical_bob;
            t.bob_amplitude = 0.015;
            t.bob_frequency = 1.0;
            break;
        case 5:  // bend-down: spine and hips fold forward and recover
            wave(kPelvis, kAxisX, 0.02, 0.5, -kPi / 2, 0.0);
            wave(kSpine1, kAxisX, 0.45, 0.5, -kPi / 2, 0.45);
            wave(kSpine2, kAxisX, 0.30, 0.5, -kPi / 2, 0.30);
            wave(kHipL, kAxisX, 0.30, 0.5, kPi / 2, -0.30);
            wave(kHipR, kAxisX, 0.30, 0.5, kPi / 2, -0.30);
            wave(kKneeL, kAxisX, 0.12, 0.5, -kPi / 2, 0.12);
            wave(kKneeR, kAxisX, 0.12, 0.5, -kPi / 2, 0.12);
            wave(kHead, kAxisX, 0.12, 0.5, -kPi / 2, 0.12);
            arms_down(0.04, 0.5);
            wave(kElbowL, kAxisX, 0.20, 0.5, -kPi / 2, 0.25);
            wave(kElbowR, kAxisX, 0.20, 0.5, -kPi / 2, 0.25);
            t.trajectory = Trajectory::vertical_bob;
            t.bob_amplitude = 0.08;
            t.bob_frequency = 0.5;
            break;
        default:
            throw UnknownLabelError("unknown semantic class id " + std::to_string(class_id));
    }
    return t;
}

struct MotionParams {
    geo::ShapeVec beta = geo::ShapeVec::Zero();
    double amp_scale = 1.0;
    double phase_global = 0.0;
    double heading0 = 0.0;
    double drift_amp = 0.0;
    double drift_freq = 0.05;
    double drift_phase = 0.0;
    double x0 = 0.0;
    double z0 = 10.0;
    double walk_dir = 1.0;
    double psi0 = 0.0;
    // slow positional wander for the non-walking trajectories
    double wander_x_amp = 0.0;
    double wander_z_amp = 0.0;
    double wander_freq = 0.03;
    double wander_phase_x = 0.0;
    double wander_phase_z = 0.0;
    // idiosyncratic execution: the motion leans toward a second class
    int style_class = -1;
    double style_ratio = 0.0;
};

// Half of the generated videos mix in up to this much of another class's
// joint tracks. Idiosyncratic executions keep their true label but sit
// farther from the class prototype, like atypical real performances.
constexpr double kMaxStyleRatio = 0.26;

MotionParams draw_motion_params(Rng& rng, int class_id) {
    MotionParams p;
    for (int i = 0; i < geo::kShapeDim; ++i)
        p.beta(i) = std::clamp(rng.normal(0.0, 0.5), -2.0, 2.0);
    p.amp_scale = rng.uniform(0.85, 1.15);
    p.phase_global = rng.uniform(0.0, 2.0 * kPi);
    p.heading0 = rng.uniform(-kPi, kPi);
    p.drift_amp = rng.uniform(0.15, 0.45);
    p.drift_freq = rng.uniform(0.03, 0.08);
    p.drift_phase = rng.uniform(0.0, 2.0 * kPi);
    p.x0 = rng.uniform(-0.4, 0.4);
    p.z0 = rng.uniform(9.0, 11.5);
    p.walk_dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
    p.psi0 = rng.uniform(0.0, 2.0 * kPi);
    p.wander_x_amp = rng.uniform(0.2, 0.7);
    p.wander_z_amp = rng.uniform(0.3, 1.0);
    p.wander_freq = rng.uniform(0.02, 0.06);
    p.wander_phase_x = rng.uniform(0.0, 2.0 * kPi);
    p.wander_phase_z = rng.uniform(0.0, 2.0 * kPi);
    const bool stylized = rng.uniform() < 0.5;
    const double ratio = rng.uniform(0.1, kMaxStyleRatio);
    const auto other = rng.uniform_int(emb::kNumClasses - 1);
    if (stylized) {
        p.style_ratio = ratio;
        p.style_class = static_cast<int>((static_cast<std::uint64_t>(class_id) + 1 + other) %
                                         emb::kNumClasses);
    }
    return p;
}

geo::Mat3 yaw_matrix(double a) {
    geo::Mat3 m;
    m << std::cos(a), 0.0, std::sin(a), 0.0, 1.0, 0.0, -std::sin(a), 0.0, std::cos(a);
    return m;
}

std::vector<geo::Pose> synth_motion(const MotionTemplate& tpl, int frames, const MotionParams& p,
                                    double damping) {
    std::vector<geo::Pose> out(static_cast<std::size_t>(frames));
    const double walk_z0 = (tpl.trajectory == Trajectory::circle_walk)
                               ? std::clamp(p.z0 + 1.2, 10.2, 11.8)
                               : p.z0;
    const MotionTemplate* style = p.style_class >= 0 ? &motion_template(p.style_class) : nullptr;
    for (int f = 0; f < frames; ++f) {
        const double time = static_cast<double>(f) / kFps;
        geo::Pose& pose = out[static_cast<std::size_t>(f)];
        pose.beta = p.beta;

        auto track = [&](const MotionTemplate& t, int j) {
            const JointWave& w = t.waves[static_cast<std::size_t>(j)];
            double angle = w.offset;
            if (w.amplitude != 0.0)
                angle += p.amp_scale * damping * w.amplitude *
                         std::sin(2.0 * kPi * w.frequency * time + w.phase + p.phase_global);
            return geo::Vec3(w.axis * angle);
        };
        for (int j = 1; j < geo::kJointCount; ++j) {
            geo::Vec3 aa = track(tpl, j);
            if (style) aa = (1.0 - p.style_ratio) * aa + p.style_ratio * track(*style, j);
            pose.theta[static_cast<std::size_t>(j)].v = aa;
        }

        double yaw;
        double psi = 0.0;
        if (tpl.trajectory == Trajectory::circle_walk) {
            psi = p.psi0 + p.walk_dir * kWalkOmega * time;
            // face along the (elliptic) path tangent
            const double vx = p.walk_dir * kWalkRadiusX * std::cos(psi);
            const double vz = -p.walk_dir * kWalkRadiusZ * std::sin(psi);
            yaw = std::atan2(-vx, -vz);
        } else {
            yaw = p.heading0 +
                  p.drift_amp * std::sin(2.0 * kPi * p.drift_freq * time + p.drift_phase);
        }
        const JointWave& rw = tpl.waves[0];
        double root_angle = rw.offset;
        if (rw.amplitude != 0.0)
            root_angle += p.amp_scale * damping * rw.amplitude *
                          std::sin(2.0 * kPi * rw.frequency * time + rw.phase + p.phase_global);
        pose.theta[0] = geo::matrix_to_aa(yaw_matrix(yaw) * geo::aa_to_matrix({rw.axis * root_angle}));

        const double wander_x =
            p.wander_x_amp * std::sin(2.0 * kPi * p.wander_freq * time + p.wander_phase_x);
        const double wander_z =
            p.wander_z_amp * std::sin(2.0 * kPi * p.wander_freq * time + p.wander_phase_z);
        switch (tpl.trajectory) {
            case Trajectory::stationary:
                pose.trans = geo::Vec3(p.x0 + wander_x, 0.0, p.z0 + wander_z);
                break;
            case Trajectory::circle_walk: {
                const double bob =
                    tpl.bob_amplitude * std::sin(2.0 * kPi * tpl.bob_frequency * time);
                pose.trans = geo::Vec3(p.x0 + kWalkRadiusX * std::sin(psi), bob,
                                       walk_z0 + kWalkRadiusZ * std::cos(psi));
                break;
            }
            case Trajectory::vertical_bob: {
                const double y =
                    tpl.bob_amplitude *
                    (1.0 + std::sin(2.0 * kPi * tpl.bob_frequency * time - kPi / 2.0)) / 2.0;
                pose.trans = geo::Vec3(p.x0 + wander_x, y, p.z0 + wander_z);
                break;
            }
            case Trajectory::seated:
                pose.trans = geo::Vec3(p.x0, tpl.seat_drop, p.z0);
                break;
        }
    }
    return out;
}

struct FeatureMap {
    Eigen::Matrix<double, kPoseFeatDim, 157> w;
    Eigen::Matrix<double, kPoseFeatDim, 1> b;
};

const FeatureMap& observation_map() {
    static const FeatureMap map = [] {
        FeatureMap m;
        Rng rng(kFeatureMapSeed);
        for (int i = 0; i < kPoseFeatDim; ++i)
            for (int j = 0; j < 157; ++j) m.w(i, j) = rng.normal(0.0, 0.15);
        for (int i = 0; i < kPoseFeatDim; ++i) m.b(i) = rng.normal(0.0, 0.2);
        return m;
    }();
    return map;
}

Eigen::Matrix<double, 157, 1> pack_pose(const geo::Pose& pose) {
    Eigen::Matrix<double, 157, 1> x;
    for (int j = 0; j < geo::kJointCount; ++j) {
        const geo::Mat3 r = geo::aa_to_matrix(pose.theta[static_cast<std::size_t>(j)]);
        x.segment<3>(6 * j) = r.col(0);
        x.segment<3>(6 * j + 3) = r.col(1);
    }
    x.segment<10>(geo::kPose6dDim) = pose.beta;
    // depth recentred so the tanh features stay in their sensitive range
    x(154) = pose.trans.x();
    x(155) = pose.trans.y();
    x(156) = (pose.trans.z() - 10.0) / 3.0;
    return x;
}

}  // namespace

const MotionTemplate& motion_template(int class_id) {
    static const std::array<MotionTemplate, emb::kNumClasses> templates = [] {
        std::array<MotionTemplate, emb::kNumClasses> t;
        for (int c = 0; c < emb::kNumClasses; ++c) t[static_cast<std::size_t>(c)] = make_template(c);
        return t;
    }();
    if (class_id < 0 || class_id >= emb::kNumClasses)
        throw UnknownLabelError("unknown semantic class id " + std::to_string(class_id));
    return templates[static_cast<std::size_t>(class_id)];
}

const std::array<int, 10>& lower_body_joints() {
    static const std::array<int, 10> joints = {kPelvis, kHipL,   kHipR,   kSpine1, kKneeL,
                                               kKneeR,  kAnkleL, kAnkleR, kFootL,  kFootR};
    return joints;
}

DomainSpec source_domain() {
    DomainSpec s;
    s.class_mix = {1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 1.0 / 3.0};  // idle, sitting, bend-down
    s.amplitude_damping = 0.5;
    s.nuisance_mean = 0.0;
    s.nuisance_scale = 1.0;
    s.obs_noise_sigma = 0.02;
    return s;
}

DomainSpec target_domain() {
    DomainSpec s;
    s.class_mix.fill(1.0 / emb::kNumClasses);
    s.amplitude_damping = 1.0;
    s.nuisance_mean = 1.0;
    s.nuisance_scale = 2.0;
    s.obs_noise_sigma = 0.03;
    return s;
}

std::vector<int> SyntheticVideo::labels() const {
    std::vector<int> out(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) out[i] = frames[i].label;
    return out;
}

std::vector<geo::Pose> generate_motion(int class_id, int t_frames, std::uint64_t seed,
                                       double amplitude_damping) {
    const MotionTemplate& tpl = motion_template(class_id);
    Rng rng(seed);
    const MotionParams params = draw_motion_params(rng, class_id);
    return synth_motion(tpl, t_frames, params, amplitude_damping);
}

Eigen::Matrix<double, kObsDim, 1> synth_observation(const geo::Pose& pose, const DomainSpec& spec,
                                                    Rng& rng) {
    const FeatureMap& map = observation_map();
    Eigen::Matrix<double, kObsDim, 1> obs;
    obs.head<kPoseFeatDim>() = ((map.w * pack_pose(pose)) + map.b).array().tanh();
    for (int i = 0; i < kNuisanceDim; ++i)
        obs(kPoseFeatDim + i) = rng.normal(spec.nuisance_mean, spec.nuisance_scale);
    if (spec.obs_noise_sigma > 0.0)
        for (int i = 0; i < kObsDim; ++i) obs(i) += rng.normal(0.0, spec.obs_noise_sigma);
    return obs;
}

void simulate_detector(const std::vector<geo::Joints2D>& gt_j2d, const DetectorModel& det,
                       std::uint64_t seed, std::vector<geo::Joints2D>& det_j2d,
                       std::vector<std::array<bool, geo::kJointCount>>& visibility) {
    const int n = static_cast<int>(gt_j2d.size());
    det_j2d.assign(gt_j2d.size(), geo::Joints2D::Constant(kNan));
    visibility.assign(gt_j2d.size(), {});

    Rng rng(seed);
    std::array<bool, geo::kJointCount> pattern_joint{};
    int block_frame_begin = 0, block_frame_end = 0;
    if (det.occlusion == DetectorModel::Occlusion::lower_body_truncation) {
        for (int j : lower_body_joints()) pattern_joint[static_cast<std::size_t>(j)] = true;
        block_frame_begin = 0;
        block_frame_end = n;
    } else if (det.occlusion == DetectorModel::Occlusion::random_block) {
        const int start = static_cast<int>(rng.uniform_int(geo::kJointCount));
        int len = 4 + static_cast<int>(rng.uniform_int(5));
        len = std::min(len, geo::kJointCount - start);
        for (int j = start; j < start + len; ++j) pattern_joint[static_cast<std::size_t>(j)] = true;
        const int span = std::max(1, static_cast<int>(rng.uniform(0.2, 0.6) * n));
        block_frame_begin = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - span + 1)));
        block_frame_end = block_frame_begin + span;
    }

    for (int f = 0; f < n; ++f) {
        const bool in_span = f >= block_frame_begin && f < block_frame_end;
        for (int j = 0; j < geo::kJointCount; ++j) {
            const bool dropped = rng.uniform() < det.drop_prob;
            const bool hidden = (pattern_joint[static_cast<std::size_t>(j)] && in_span) || dropped;
            if (hidden) continue;
            visibility[static_cast<std::size_t>(f)][static_cast<std::size_t>(j)] = true;
            const auto& gt = gt_j2d[static_cast<std::size_t>(f)];
            det_j2d[static_cast<std::size_t>(f)](j, 0) = gt(j, 0) + rng.normal(0.0, det.pixel_noise_sigma);
            det_j2d[static_cast<std::size_t>(f)](j, 1) = gt(j, 1) + rng.normal(0.0, det.pixel_noise_sigma);
        }
    }
}

SyntheticVideo generate_video(const DomainSpec& spec, const DetectorModel& det, std::uint32_t id,
                              int frames, std::uint64_t dataset_seed) {
    const std::uint64_t video_seed = derive_seed(dataset_seed, "video", id);

    Rng class_rng(derive_seed(video_seed, "class", 0));
    const double u = class_rng.uniform();
    int label = emb::kNumClasses - 1;
    double acc = 0.0;
    for (int c = 0; c < emb::kNumClasses; ++c) {
        acc += spec.class_mix[static_cast<std::size_t>(c)];
        if (u < acc) {
            label = c;
            break;
        }
    }

    const std::vector<geo::Pose> poses =
        generate_motion(label, frames, derive_seed(video_seed, "motion", 0), spec.amplitude_damping);

    const geo::Skeleton& skel = geo::Skeleton::standard();
    const geo::Camera cam = geo::default_camera();

    SyntheticVideo video;
    video.id = id;
    video.frames.resize(static_cast<std::size_t>(frames));

    std::vector<geo::Joints2D> gt_j2d(static_cast<std::size_t>(frames));
    Rng obs_rng(derive_seed(video_seed, "obs", 0));
    for (int f = 0; f < frames; ++f) {
        Frame& fr = video.frames[static_cast<std::size_t>(f)];
        fr.gt_pose = poses[static_cast<std::size_t>(f)];
        fr.gt_j3d = geo::forward_kinematics(fr.gt_pose, skel);
        fr.gt_j2d = geo::project(fr.gt_j3d, cam);
        gt_j2d[static_cast<std::size_t>(f)] = fr.gt_j2d;
        fr.obs = synth_observation(fr.gt_pose, spec, obs_rng);
        fr.label = static_cast<std::uint16_t>(label);
    }

    std::vector<geo::Joints2D> det_j2d;
    std::vector<std::array<bool, geo::kJointCount>> vis;
    simulate_detector(gt_j2d, det, derive_seed(video_seed, "det", 0), det_j2d, vis);
    for (int f = 0; f < frames; ++f) {
        video.frames[static_cast<std::size_t>(f)].det_j2d = det_j2d[static_cast<std::size_t>(f)];
        video.frames[static_cast<std::size_t>(f)].visibility = vis[static_cast<std::size_t>(f)];
    }
    return video;
}

namespace {

DetectorModel detector_for_id(const DetectorModel& base, const DatasetLayout& layout, int id) {
    DetectorModel det = base;
    if (!layout.pattern_cycle.empty()) {
        const std::size_t idx = static_cast<std::size_t>(id) * layout.pattern_cycle.size() /
                                static_cast<std::size_t>(layout.n_videos);
        det.occlusion = layout.pattern_cycle[std::min(idx, layout.pattern_cycle.size() - 1)];
    }
    return det;
}

}  // namespace

void generate_dataset(const DomainSpec& spec, const DetectorModel& det, const DatasetLayout& layout,
                      std::uint64_t seed, const std::filesystem::path& dir,
                      const std::string& prefix) {
    if (layout.frames_per_video % kSegmentFrames != 0)
        throw UsageError("frames_per_video must be a multiple of " + std::to_string(kSegmentFrames));
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (!std::filesystem::exists(dir)) throw IoError("cannot create directory '" + dir.string() + "'");

    parallel_for(static_cast<std::size_t>(layout.n_videos), [&](std::size_t i) {
        const int id = static_cast<int>(i);
        const SyntheticVideo video = generate_video(spec, detector_for_id(det, layout, id),
                                                    static_cast<std::uint32_t>(id),
                                                    layout.frames_per_video, seed);
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03d.sttavid", prefix.c_str(), id);
        save_video(video, spec, seed, dir / name);
    });
}

std::vector<SyntheticVideo> generate_dataset_in_memory(const DomainSpec& spec,
                                                       const DetectorModel& det,
                                                       const DatasetLayout& layout,
                                                       std::uint64_t seed) {
    if (layout.frames_per_video % kSegmentFrames != 0)
        throw UsageError("frames_per_video must be a multiple of " + std::to_string(kSegmentFrames));
    std::vector<SyntheticVideo> out(static_cast<std::size_t>(layout.n_videos));
    parallel_for(out.size(), [&](std::size_t i) {
        const int id = static_cast<int>(i);
        out[i] = generate_video(spec, detector_for_id(det, layout, id),
                                static_cast<std::uint32_t>(id), layout.frames_per_video, seed);
    });
    return out;
}

const std::vector<geo::Pose>& exemplar_lookup(int class_id) {
    static const std::array<std::vector<geo::Pose>, emb::kNumClasses> exemplars = [] {
        std::array<std::vector<geo::Pose>, emb::kNumClasses> e;
        for (int c = 0; c < emb::kNumClasses; ++c) {
            MotionParams canonical;  // zero shape, unit amplitude, origin-anchored
            e[static_cast<std::size_t>(c)] =
                synth_motion(make_template(c), kSegmentFrames, canonical, 1.0);
        }
        return e;
    }();
    if (class_id < 0 || class_id >= emb::kNumClasses)
        throw UnknownLabelError("unknown semantic class id " + std::to_string(class_id));
    return exemplars[static_cast<std::size_t>(class_id)];
}

emb::Motion6d poses_to_6d(const std::vector<geo::Pose>& poses, int begin, int count) {
    emb::Motion6d seq(count, geo::kPose6dDim);
    for (int f = 0; f < count; ++f) {
        const geo::Pose& p = poses[static_cast<std::size_t>(begin + f)];
        for (int j = 0; j < geo::kJointCount; ++j) {
            const geo::Mat3 r = geo::aa_to_matrix(p.theta[static_cast<std::size_t>(j)]);
            seq.block<1, 3>(f, 6 * j) = r.col(0).transpose();
            seq.block<1, 3>(f, 6 * j + 3) = r.col(1).transpose();
        }
    }
    return seq;
}

const emb::Motion6d& exemplar_6d(int class_id) {
    static const std::array<emb::Motion6d, emb::kNumClasses> cache = [] {
        std::array<emb::Motion6d, emb::kNumClasses> e;
        for (int c = 0; c < emb::kNumClasses; ++c)
            e[static_cast<std::size_t>(c)] = poses_to_6d(exemplar_lookup(c), 0, kSegmentFrames);
        return e;
    }();
    if (class_id < 0 || class_id >= emb::kNumClasses)
        throw UnknownLabelError("unknown semantic class id " + std::to_string(class_id));
    return cache[static_cast<std::size_t>(class_id)];
}

void corrupt_block_labels(SyntheticVideo& video, double rate, std::uint64_t seed) {
    if (rate <= 0.0) return;
    Rng rng(seed);
    const int blocks = static_cast<int>(video.frames.size()) / kSegmentFrames;
    for (int b = 0; b < blocks; ++b) {
        const bool corrupt = rng.uniform() < rate;
        const std::uint64_t shift = 1 + rng.uniform_int(emb::kNumClasses - 1);
        if (!corrupt) continue;
        const int old_label = video.frames[static_cast<std::size_t>(b * kSegmentFrames)].label;
        const auto wrong = static_cast<std::uint16_t>(
            (static_cast<std::uint64_t>(old_label) + shift) % emb::kNumClasses);
        for (int f = b * kSegmentFrames; f < (b + 1) * kSegmentFrames; ++f)
            video.frames[static_cast<std::size_t>(f)].label = wrong;
    }
}

namespace {

std::vector<emb::Prototype> template_prototypes(std::uint64_t seed, int per_class,
                                                bool include_exemplar) {
    // pure template executions only: the space is calibrated on canonical
    // class motion, not on idiosyncratic blends
    std::vector<emb::Prototype> protos;
    for (int c = 0; c < emb::kNumClasses; ++c) {
        int produced = 0;
        if (include_exemplar) {
            protos.push_back({c, exemplar_6d(c)});
            ++produced;
        }
        for (int i = 0; produced < per_class; ++i, ++produced) {
            Rng rng(derive_seed(seed, "proto", static_cast<std::uint64_t>(c) * 1024 + i));
            MotionParams params = draw_motion_params(rng, c);
            params.style_class = -1;
            params.style_ratio = 0.0;
            const auto poses = synth_motion(motion_template(c), kSegmentFrames, params, 1.0);
            protos.push_back({c, poses_to_6d(poses, 0, kSegmentFrames)});
        }
    }
    return protos;
}

}  // namespace

emb::EmbeddingSpace build_calibrated_space(std::uint64_t seed) {
    emb::EmbeddingSpace space;
    space.anchors = emb::build_anchors(emb::kNumClasses, emb::kEmbedDim, derive_seed(seed, "anchors", 0));
    const auto protos = template_prototypes(derive_seed(seed, "calibration", 0), 20, true);
    space.encoder = emb::calibrate(protos, space.anchors);
    return space;
}

std::vector<emb::Prototype> heldout_prototypes(std::uint64_t seed, int per_class) {
    return template_prototypes(derive_seed(seed, "heldout", 1), per_class, false);
}

void save_video(const SyntheticVideo& video, const DomainSpec& spec, std::uint64_t seed,
                const std::filesystem::path& path) {
    BinaryWriter w;
    w.magic("STTA-VID");
    w.u32(1);
    w.u32(video.id);
    w.u32(video.fps);
    w.u32(static_cast<std::uint32_t>(video.frames.size()));
    for (const Frame& fr : video.frames) {
        for (int i = 0; i < kObsDim; ++i) w.f64(fr.obs(i));
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 3; ++k) w.f64(fr.gt_pose.theta[static_cast<std::size_t>(j)].v(k));
        for (int i = 0; i < geo::kShapeDim; ++i) w.f64(fr.gt_pose.beta(i));
        for (int i = 0; i < 3; ++i) w.f64(fr.gt_pose.trans(i));
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 3; ++k) w.f64(fr.gt_j3d(j, k));
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 2; ++k) w.f64(fr.gt_j2d(j, k));
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 2; ++k) w.f64(fr.det_j2d(j, k));
        for (int j = 0; j < geo::kJointCount; ++j)
            w.u8(fr.visibility[static_cast<std::size_t>(j)] ? 1 : 0);
        w.u16(fr.label);
    }
    atomic_write_file(path, w.bytes());

    nlohmann::json sidecar;
    sidecar["class_mix"] = spec.class_mix;
    sidecar["amplitude_damping"] = spec.amplitude_damping;
    sidecar["nuisance_mean"] = spec.nuisance_mean;
    sidecar["nuisance_scale"] = spec.nuisance_scale;
    sidecar["obs_noise_sigma"] = spec.obs_noise_sigma;
    sidecar["seed"] = seed;
    sidecar["video_id"] = video.id;
    atomic_write_file(path.string() + ".json", sidecar.dump(2) + "\n");
}

SyntheticVideo load_video(const std::filesystem::path& path) {
    BinaryReader r(read_file(path));
    r.expect_magic("STTA-VID");
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported video file version " + std::to_string(version));
    SyntheticVideo video;
    video.id = r.u32();
    video.fps = r.u32();
    const std::uint32_t frames = r.u32();
    video.frames.resize(frames);
    for (Frame& fr : video.frames) {
        for (int i = 0; i < kObsDim; ++i) fr.obs(i) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 3; ++k) fr.gt_pose.theta[static_cast<std::size_t>(j)].v(k) = r.f64();
        for (int i = 0; i < geo::kShapeDim; ++i) fr.gt_pose.beta(i) = r.f64();
        for (int i = 0; i < 3; ++i) fr.gt_pose.trans(i) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 3; ++k) fr.gt_j3d(j, k) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 2; ++k) fr.gt_j2d(j, k) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 2; ++k) fr.det_j2d(j, k) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j) fr.visibility[static_cast<std::size_t>(j)] = r.u8() != 0;
        fr.label = r.u16();
    }
    if (!r.at_end()) throw IoError("trailing bytes in video file");
    return video;
}

}  // namespace stta::synth

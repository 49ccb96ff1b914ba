#pragma once

#include <cmath>

#include "stta/embedding.hpp"
#include "stta/geometry.hpp"
#include "stta/rng.hpp"

// Shared test fixtures and independent oracles. Everything here is written
// against the math directly, not against the library internals it checks.
namespace tt {

using stta::Rng;
namespace geo = stta::geo;
namespace emb = stta::emb;

/// Independent rotation oracle: axis-angle -> unit quaternion -> matrix.
inline geo::Mat3 quat_rotation(const geo::Vec3& axis_angle) {
    const double theta = axis_angle.norm();
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
    if (theta > 0.0) {
        const geo::Vec3 axis = axis_angle / theta;
        w = std::cos(theta / 2.0);
        const double s = std::sin(theta / 2.0);
        x = s * axis.x();
        y = s * axis.y();
        z = s * axis.z();
    }
    geo::Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline geo::Vec3 random_axis_angle(Rng& rng, double max_angle = 3.0) {
    geo::Vec3 v(rng.normal(), rng.normal(), rng.normal());
    v.normalize();
    return v * rng.uniform(0.0, max_angle);
}

inline geo::Mat3 random_rotation(Rng& rng) { return quat_rotation(random_axis_angle(rng)); }

inline geo::Joints3D random_joints(Rng& rng, double scale = 1.0) {
    geo::Joints3D j;
    for (int i = 0; i < geo::kJointCount; ++i)
        for (int k = 0; k < 3; ++k) j(i, k) = rng.normal(0.0, scale);
    return j;
}

inline geo::Pose random_pose(Rng& rng, double angle_scale = 1.0) {
    geo::Pose pose;
    for (int j = 0; j < geo::kJointCount; ++j)
        pose.theta[static_cast<std::size_t>(j)].v = random_axis_angle(rng, angle_scale);
    for (int i = 0; i < geo::kShapeDim; ++i) pose.beta(i) = rng.uniform(-2.0, 2.0);
    pose.trans = geo::Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3), rng.uniform(8.0, 12.0));
    return pose;
}

/// Random sequence of valid per-joint 6D rotations (T x 144).
inline emb::Motion6d random_motion6d(Rng& rng, int frames) {
    emb::Motion6d seq(frames, geo::kPose6dDim);
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            const geo::Mat3 r = random_rotation(rng);
            seq.block<1, 3>(f, 6 * j) = r.col(0).transpose();
            seq.block<1, 3>(f, 6 * j + 3) = r.col(1).transpose();
        }
    }
    return seq;
}

/// Smooth sinusoidal 6D motion, structured enough for embedding fixtures.
inline emb::Motion6d sinusoid_motion6d(int frames, double amp, double freq, double phase,
                                       int active_joints, double base_angle) {
    emb::Motion6d seq(frames, geo::kPose6dDim);
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            double angle = 0.0;
            if (j < active_joints)
                angle = base_angle + amp * std::sin(2.0 * M_PI * freq * f / 30.0 + phase + 0.3 * j);
            const geo::Vec3 axis = (j % 2 == 0) ? geo::Vec3::UnitX() : geo::Vec3::UnitZ();
            const geo::Mat3 r = quat_rotation(axis * angle);
            seq.block<1, 3>(f, 6 * j) = r.col(0).transpose();
            seq.block<1, 3>(f, 6 * j + 3) = r.col(1).transpose();
        }
    }
    return seq;
}

/// Small calibrated embedding space over synthetic sinusoid families, for
/// tests that need a working space without the production world.
inline emb::EmbeddingSpace toy_space(std::uint64_t seed) {
    emb::EmbeddingSpace space;
    space.anchors = emb::build_anchors(emb::kNumClasses, emb::kEmbedDim, seed);
    std::vector<emb::Prototype> protos;
    Rng rng(seed + 17);
    for (int c = 0; c < emb::kNumClasses; ++c) {
        for (int i = 0; i < 6; ++i) {
            const double amp = 0.4 + 0.15 * c + rng.uniform(-0.05, 0.05);
            const double freq = 0.5 + 0.2 * c;
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            protos.push_back({c, sinusoid_motion6d(60, amp, freq, phase, 4 + 2 * c, 0.1 * c)});
        }
    }
    space.encoder = emb::calibrate(protos, space.anchors);
    return space;
}

}  // namespace tt

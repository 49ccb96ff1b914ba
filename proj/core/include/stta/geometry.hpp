#pragma once

#include <Eigen/Dense>
#include <array>

#include "stta/error.hpp"

namespace stta::geo {

inline constexpr int kJointCount = 24;
inline constexpr int kShapeDim = 10;
inline constexpr int kBoneGroupCount = 10;
inline constexpr int kPose6dDim = kJointCount * 6;  // 144

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using ShapeVec = Eigen::Matrix<double, kShapeDim, 1>;
using Joints3D = Eigen::Matrix<double, kJointCount, 3>;
using Joints2D = Eigen::Matrix<double, kJointCount, 2>;
using RotationMatrix = Mat3;

/// Axis-angle rotation: direction = axis, norm = angle in radians.
struct RotationAA {
    Vec3 v = Vec3::Zero();

    double angle() const { return v.norm(); }

    /// Wraps the angle into [0, 2*pi) along the same axis.
    RotationAA canonicalized() const;
};

/// First two columns of a rotation matrix, stacked (col0 then col1).
struct Rotation6D {
    Vec6 r = (Vec6() << 1, 0, 0, 0, 1, 0).finished();
};

RotationMatrix aa_to_matrix(const RotationAA& aa);
RotationAA matrix_to_aa(const RotationMatrix& m);

Rotation6D matrix_to_6d(const RotationMatrix& m);

/// Gram-Schmidt recovery of the rotation matrix. Throws
/// DegenerateRotationError when the two columns are zero or parallel.
RotationMatrix sixd_to_matrix(const Rotation6D& r);

/// Record of one Gram-Schmidt orthonormalization, enough to run it backward.
/// a1/a2 are the effective inputs after any degeneracy nudge.
struct Gs6dTrace {
    Vec3 a1, a2;
    Vec3 u1, u2, u3;
    double n1 = 0.0;  // |a1|
    double n2 = 0.0;  // |a2 - (u1.a2) u1|
    double c = 0.0;   // u1.a2
};

/// Total variant used inside optimization: near-degenerate inputs receive a
/// 1e-9 nudge instead of an error, keeping every training step defined.
RotationMatrix sixd_to_matrix_nudged(const Vec6& r, Gs6dTrace* trace = nullptr);

/// Adjoints of the 6D input given adjoints of the three orthonormal columns.
Vec6 gs6d_backward(const Gs6dTrace& t, const Vec3& gu1, const Vec3& gu2, const Vec3& gu3);

/// Fixed 24-joint kinematic tree for a ~1.7 m figure. The shape vector acts
/// as a per-bone-group log-scale through shape_basis; group scales are
/// clamped to [0.5, 2.0].
struct Skeleton {
    std::array<int, kJointCount> parent{};                     // -1 for the root
    Eigen::Matrix<double, kJointCount, 3> rest_offset;         // bone vector from parent [m]
    std::array<int, kJointCount> bone_group{};                 // -1 for the root
    Eigen::Matrix<double, kShapeDim, kBoneGroupCount> shape_basis;

    static const Skeleton& standard();

    /// exp(shape_basis^T beta) clamped to [0.5, 2.0], one scale per group.
    Eigen::Matrix<double, kBoneGroupCount, 1> group_scales(const ShapeVec& beta) const;
};

/// Per-frame body state: joint rotations, shape coefficients, camera-frame
/// translation. Frame convention: x image-right, y image-down, z depth.
struct Pose {
    std::array<RotationAA, kJointCount> theta{};
    ShapeVec beta = ShapeVec::Zero();
    Vec3 trans = Vec3(0, 0, 10.0);
};

struct Camera {
    double focal = 1000.0;        // px
    Vec2 principal = Vec2(112.0, 112.0);
    int width = 224;
    int height = 224;
};

inline Camera default_camera() { return Camera{}; }

inline constexpr double kMinProjectDepth = 1e-3;  // m

/// Everything the FK forward pass computes, kept for the backward pass.
struct FkTrace {
    std::array<Mat3, kJointCount> local{};   // per-joint rotation
    std::array<Mat3, kJointCount> global{};  // chain product root..joint
    Eigen::Matrix<double, kBoneGroupCount, 1> scale;
    std::array<bool, kBoneGroupCount> scale_clamped{};
    Joints3D joints;
};

/// Joint positions from per-joint rotation matrices. Root sits at trans;
/// child = parent + global(parent) * (scale * rest_offset).
Joints3D fk_rotmats(const std::array<Mat3, kJointCount>& local, const ShapeVec& beta,
                    const Vec3& trans, const Skeleton& skel, FkTrace* trace = nullptr);

Joints3D forward_kinematics(const Pose& pose, const Skeleton& skel);

struct FkGrad {
    std::array<Mat3, kJointCount> d_local{};
    ShapeVec d_beta = ShapeVec::Zero();
    Vec3 d_trans = Vec3::Zero();
};

FkGrad fk_backward(const FkTrace& trace, const Skeleton& skel, const Joints3D& d_joints);

/// Pinhole projection. Throws ProjectionError when any joint depth is at or
/// below kMinProjectDepth.
Joints2D project(const Joints3D& j3d, const Camera& cam);

/// Total variant for the training path: depth floored at kMinProjectDepth
/// (zero gradient where the floor engages).
Joints2D project_clamped(const Joints3D& j3d, const Camera& cam);

/// Adjoints of j3d under project_clamped.
Joints3D project_backward(const Joints3D& j3d, const Camera& cam, const Joints2D& d_j2d);

struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
    Joints3D apply(const Joints3D& pts) const;
};

/// Least-squares similarity transform taking pred onto gt (Umeyama: centroid
/// subtraction, cross-covariance SVD with reflection correction, optimal
/// scale). Throws DegenerateAlignmentError on collinear/collapsed input.
SimilarityTransform procrustes_align(const Joints3D& pred, const Joints3D& gt);

}  // namespace stta::geo

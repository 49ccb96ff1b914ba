#include "stta/geometry.hpp"

#include <cmath>
#include <numbers>

namespace stta::geo {

namespace {

constexpr double kPi = std::numbers::pi;

Mat3 skew(const Vec3& v) {
    Mat3 k;
    k << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return k;
}

Vec3 unskew(const Mat3& m) {
    return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

}  // namespace

RotationAA RotationAA::canonicalized() const {
    const double angle = v.norm();
    if (angle < 2.0 * kPi) return *this;
    const double wrapped = std::fmod(angle, 2.0 * kPi);
    RotationAA out;
    out.v = v * (wrapped / angle);
    return out;
}

RotationMatrix aa_to_matrix(const RotationAA& aa) {
    const double theta = aa.v.norm();
    const Mat3 k = skew(aa.v);
    double c1, c2;  // sin(t)/t and (1-cos(t))/t^2 on the unnormalized skew
    if (theta < 1e-8) {
        // second-order Taylor keeps the map continuous through zero
        const double t2 = theta * theta;
        c1 = 1.0 - t2 / 6.0;
        c2 = 0.5 - t2 / 24.0;
    } else {
        c1 = std::sin(theta) / theta;
        c2 = (1.0 - std::cos(theta)) / (theta * theta);
    }
    return Mat3::Identity() + c1 * k + c2 * (k * k);
}

RotationAA matrix_to_aa(const RotationMatrix& m) {
    const double cos_t = std::clamp((m.trace() - 1.0) * 0.5, -1.0, 1.0);
    RotationAA out;
    if (cos_t > 1.0 - 1e-10) {
        // near identity: skew part approximates angle * axis
        out.v = unskew(m);
        return out;
    }
    if (cos_t < -1.0 + 1e-9) {
        // near pi: recover the axis from the symmetric part
        Vec3 axis;
        for (int i = 0; i < 3; ++i) axis(i) = std::sqrt(std::max(0.0, (m(i, i) + 1.0) * 0.5));
        int k = 0;
        axis.cwiseAbs().maxCoeff(&k);
        if (axis(k) > 0) {
            for (int i = 0; i < 3; ++i) {
                if (i == k) continue;
                const double off = m(k, i) + m(i, k);
                axis(i) = std::copysign(axis(i), off);
            }
        }
        axis.normalize();
        out.v = std::acos(cos_t) * axis;
        return out;
    }
    const double angle = std::acos(cos_t);
    out.v = unskew(m) * (angle / std::sin(angle));
    return out;
}

Rotation6D matrix_to_6d(const RotationMatrix& m) {
    Rotation6D r;
    r.r.head<3>() = m.col(0);
    r.r.tail<3>() = m.col(1);
    return r;
}

RotationMatrix sixd_to_matrix(const Rotation6D& r) {
    const Vec3 a1 = r.r.head<3>();
    const Vec3 a2 = r.r.tail<3>();
    const double n1 = a1.norm();
    if (n1 < 1e-12) throw DegenerateRotationError("6D rotation: first column is zero");
    const Vec3 u1 = a1 / n1;
    const Vec3 w = a2 - u1.dot(a2) * u1;
    const double n2 = w.norm();
    if (n2 < 1e-12 * std::max(1.0, a2.norm()))
        throw DegenerateRotationError("6D rotation: columns are parallel");
    const Vec3 u2 = w / n2;
    Mat3 m;
    m.col(0) = u1;
    m.col(1) = u2;
    m.col(2) = u1.cross(u2);
    return m;
}

RotationMatrix sixd_to_matrix_nudged(const Vec6& r, Gs6dTrace* trace) {
    Vec3 a1 = r.head<3>();
    Vec3 a2 = r.tail<3>();
    if (a1.norm() < 1e-9) a1.x() += 1e-9;
    const double n1 = a1.norm();
    const Vec3 u1 = a1 / n1;
    double c = u1.dot(a2);
    Vec3 w = a2 - c * u1;
    if (w.norm() < 1e-9) {
        int k = 0;
        u1.cwiseAbs().minCoeff(&k);  // basis direction least aligned with u1
        a2(k) += 1e-9;
        c = u1.dot(a2);
        w = a2 - c * u1;
    }
    const double n2 = w.norm();
    const Vec3 u2 = w / n2;
    const Vec3 u3 = u1.cross(u2);
    if (trace) {
        trace->a1 = a1;
        trace->a2 = a2;
        trace->u1 = u1;
        trace->u2 = u2;
        trace->u3 = u3;
        trace->n1 = n1;
        trace->n2 = n2;
        trace->c = c;
    }
    Mat3 m;
    m.col(0) = u1;
    m.col(1) = u2;
    m.col(2) = u3;
    return m;
}

Vec6 gs6d_backward(const Gs6dTrace& t, const Vec3& gu1_in, const Vec3& gu2_in, const Vec3& gu3) {
    // u3 = u1 x u2
    Vec3 gu1 = gu1_in + t.u2.cross(gu3);
    Vec3 gu2 = gu2_in + gu3.cross(t.u1);

    // u2 = w / n2, w = a2 - c*u1, c = u1.a2
    const Vec3 gw = (gu2 - t.u2 * t.u2.dot(gu2)) / t.n2;
    Vec3 ga2 = gw;
    const double gc = -gw.dot(t.u1);
    gu1 += -t.c * gw;
    gu1 += gc * t.a2;
    ga2 += gc * t.u1;

    // u1 = a1 / n1
    const Vec3 ga1 = (gu1 - t.u1 * t.u1.dot(gu1)) / t.n1;

    Vec6 g;
    g.head<3>() = ga1;
    g.tail<3>() = ga2;
    return g;
}

const Skeleton& Skeleton::standard() {
    static const Skeleton skel = [] {
        Skeleton s;
        // joint:       0=pelvis 1=hip_l 2=hip_r 3=spine1 4=knee_l 5=knee_r
        //              6=spine2 7=ankle_l 8=ankle_r 9=spine3 10=foot_l 11=foot_r
        //              12=neck 13=collar_l 14=collar_r 15=head 16=shoulder_l
        //              17=shoulder_r 18=elbow_l 19=elbow_r 20=wrist_l 21=wrist_r
        //              22=hand_l 23=hand_r
        s.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

        // bone groups: 0 hips, 1 torso, 2 head, 3 girdle, 4 upper arm,
        //              5 forearm, 6 hand, 7 thigh, 8 shin, 9 foot
        s.bone_group = {-1, 0, 0, 1, 7, 7, 1, 8, 8, 1, 9, 9, 2, 3, 3, 2, 3, 3, 4, 4, 5, 5, 6, 6};

        // rest offsets for a ~1.7 m figure, T-pose arms, y pointing down
        s.rest_offset.setZero();
        auto set = [&s](int j, double x, double y, double z) { s.rest_offset.row(j) << x, y, z; };
        set(1, 0.10, 0.05, 0.0);
        set(2, -0.10, 0.05, 0.0);
        set(3, 0.0, -0.12, 0.0);
        set(4, 0.0, 0.42, 0.0);
        set(5, 0.0, 0.42, 0.0);
        set(6, 0.0, -0.14, 0.0);
        set(7, 0.0, 0.42, 0.0);
        set(8, 0.0, 0.42, 0.0);
        set(9, 0.0, -0.14, 0.0);
        set(10, 0.0, 0.08, -0.12);
        set(11, 0.0, 0.08, -0.12);
        set(12, 0.0, -0.12, 0.0);
        set(13, 0.08, -0.04, 0.0);
        set(14, -0.08, -0.04, 0.0);
        set(15, 0.0, -0.14, 0.0);
        set(16, 0.10, 0.0, 0.0);
        set(17, -0.10, 0.0, 0.0);
        set(18, 0.28, 0.0, 0.0);
        set(19, -0.28, 0.0, 0.0);
        set(20, 0.25, 0.0, 0.0);
        set(21, -0.25, 0.0, 0.0);
        set(22, 0.08, 0.0, 0.0);
        set(23, -0.08, 0.0, 0.0);

        // column L1 norms stay <= 0.12, so valid betas never hit the clamp
        s.shape_basis.setZero();
        auto bw = [&s](int coeff, int group, double w) { s.shape_basis(coeff, group) = w; };
        for (int g = 0; g < kBoneGroupCount; ++g) bw(0, g, 0.05);  // overall size
        bw(1, 7, 0.05);
        bw(1, 8, 0.05);  // leg length
        bw(2, 1, 0.05);  // torso length
        bw(3, 4, 0.05);
        bw(3, 5, 0.05);
        bw(3, 6, 0.05);  // arm length
        bw(4, 2, 0.04);  // head/neck
        bw(5, 0, 0.04);  // hip width
        bw(6, 9, 0.04);  // foot size
        bw(7, 3, 0.03);  // shoulder girdle
        bw(8, 4, 0.02);
        bw(8, 5, -0.02);  // upper/lower arm trade
        bw(9, 7, 0.02);
        bw(9, 8, -0.02);  // upper/lower leg trade
        return s;
    }();
    return skel;
}

Eigen::Matrix<double, kBoneGroupCount, 1> Skeleton::group_scales(const ShapeVec& beta) const {
    Eigen::Matrix<double, kBoneGroupCount, 1> log_scale = shape_basis.transpose() * beta;
    return log_scale.array().exp().cwiseMax(0.5).cwiseMin(2.0);
}

Joints3D fk_rotmats(const std::array<Mat3, kJointCount>& local, const ShapeVec& beta,
                    const Vec3& trans, const Skeleton& skel, FkTrace* trace) {
    const Eigen::Matrix<double, kBoneGroupCount, 1> log_scale = skel.shape_basis.transpose() * beta;
    Eigen::Matrix<double, kBoneGroupCount, 1> scale;
    std::array<bool, kBoneGroupCount> clamped{};
    for (int g = 0; g < kBoneGroupCount; ++g) {
        const double e = std::exp(log_scale(g));
        scale(g) = std::clamp(e, 0.5, 2.0);
        clamped[g] = (e < 0.5 || e > 2.0);
    }

    std::array<Mat3, kJointCount> global;
    Joints3D joints;
    global[0] = local[0];
    joints.row(0) = trans.transpose();
    for (int j = 1; j < kJointCount; ++j) {
        const int p = skel.parent[j];
        const double s = scale(skel.bone_group[j]);
        const Vec3 bone = s * skel.rest_offset.row(j).transpose();
        joints.row(j) = joints.row(p) + (global[p] * bone).transpose();
        global[j] = global[p] * local[j];
    }
    if (trace) {
        trace->local = local;
        trace->global = global;
        trace->scale = scale;
        trace->scale_clamped = clamped;
        trace->joints = joints;
    }
    return joints;
}

Joints3D forward_kinematics(const Pose& pose, const Skeleton& skel) {
    std::array<Mat3, kJointCount> local;
    for (int j = 0; j < kJointCount; ++j) local[j] = aa_to_matrix(pose.theta[j]);
    return fk_rotmats(local, pose.beta, pose.trans, skel);
}

FkGrad fk_backward(const FkTrace& trace, const Skeleton& skel, const Joints3D& d_joints) {
    FkGrad g;
    std::array<Vec3, kJointCount> gp;
    std::array<Mat3, kJointCount> gG;
    for (int j = 0; j < kJointCount; ++j) {
        gp[j] = d_joints.row(j).transpose();
        gG[j].setZero();
        g.d_local[j].setZero();
    }
    Eigen::Matrix<double, kBoneGroupCount, 1> g_scale;
    g_scale.setZero();

    // children precede parents when walking indices downward
    for (int j = kJointCount - 1; j >= 1; --j) {
        const int p = skel.parent[j];
        const double s = trace.scale(skel.bone_group[j]);
        const Vec3 rest = skel.rest_offset.row(j).transpose();
        gp[p] += gp[j];
        gG[p] += gp[j] * (s * rest).transpose();
        g_scale(skel.bone_group[j]) += gp[j].dot(trace.global[p] * rest);
        // global[j] = global[p] * local[j]
        gG[p] += gG[j] * trace.local[j].transpose();
        g.d_local[j] = trace.global[p].transpose() * gG[j];
    }
    g.d_local[0] = gG[0];
    g.d_trans = gp[0];

    // scale = clamp(exp(basis^T beta))
    Eigen::Matrix<double, kBoneGroupCount, 1> g_log;
    for (int grp = 0; grp < kBoneGroupCount; ++grp)
        g_log(grp) = trace.scale_clamped[grp] ? 0.0 : g_scale(grp) * trace.scale(grp);
    g.d_beta = skel.shape_basis * g_log;
    return g;
}

Joints2D project(const Joints3D& j3d, const Camera& cam) {
    Joints2D out;
    for (int j = 0; j < kJointCount; ++j) {
        const double z = j3d(j, 2);
        if (z <= kMinProjectDepth)
            throw ProjectionError("joint " + std::to_string(j) + " at or behind the camera plane");
        out(j, 0) = cam.focal * j3d(j, 0) / z + cam.principal.x();
        out(j, 1) = cam.focal * j3d(j, 1) / z + cam.principal.y();
    }
    return out;
}

Joints2D project_clamped(const Joints3D& j3d, const Camera& cam) {
    Joints2D out;
    for (int j = 0; j < kJointCount; ++j) {
        const double z = std::max(j3d(j, 2), kMinProjectDepth);
        out(j, 0) = cam.focal * j3d(j, 0) / z + cam.principal.x();
        out(j, 1) = cam.focal * j3d(j, 1) / z + cam.principal.y();
    }
    return out;
}

Joints3D project_backward(const Joints3D& j3d, const Camera& cam, const Joints2D& d_j2d) {
    Joints3D g;
    for (int j = 0; j < kJointCount; ++j) {
        const double z = std::max(j3d(j, 2), kMinProjectDepth);
        g(j, 0) = d_j2d(j, 0) * cam.focal / z;
        g(j, 1) = d_j2d(j, 1) * cam.focal / z;
        if (j3d(j, 2) > kMinProjectDepth) {
            g(j, 2) = -cam.focal * (j3d(j, 0) * d_j2d(j, 0) + j3d(j, 1) * d_j2d(j, 1)) / (z * z);
        } else {
            g(j, 2) = 0.0;
        }
    }
    return g;
}

Joints3D SimilarityTransform::apply(const Joints3D& pts) const {
    Joints3D out;
    for (int j = 0; j < kJointCount; ++j) {
        const Vec3 p = pts.row(j).transpose();
        out.row(j) = apply(p).transpose();
    }
    return out;
}

SimilarityTransform procrustes_align(const Joints3D& pred, const Joints3D& gt) {
    const double n = static_cast<double>(kJointCount);
    const Vec3 mu_p = pred.colwise().mean().transpose();
    const Vec3 mu_g = gt.colwise().mean().transpose();
    const Joints3D x = pred.rowwise() - mu_p.transpose();
    const Joints3D y = gt.rowwise() - mu_g.transpose();

    const double var_p = x.squaredNorm() / n;
    if (var_p < 1e-18) throw DegenerateAlignmentError("prediction collapsed to a point");

    const Mat3 cov = (y.transpose() * x) / n;
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 d = svd.singularValues();
    if (d(1) <= 1e-12 * std::max(d(0), 1e-300))
        throw DegenerateAlignmentError("joint configuration is collinear");

    Vec3 sign = Vec3::Ones();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) sign(2) = -1.0;

    SimilarityTransform t;
    t.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
    t.scale = d.dot(sign) / var_p;
    t.translation = mu_g - t.scale * (t.rotation * mu_p);
    return t;
}

}  // namespace stta::geo

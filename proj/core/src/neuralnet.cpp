#include "stta/neuralnet.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "stta/io.hpp"
#include "stta/rng.hpp"

namespace stta::nn {

namespace {

constexpr double kPi = std::numbers::pi;

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

BatchOutput heads_from_z3(const MatX& z3) {
    const auto t = z3.rows();
    BatchOutput out;
    out.theta6d = z3.leftCols(geo::kPose6dDim);
    out.beta = (z3.middleCols(geo::kPose6dDim, geo::kShapeDim).array() / kBetaBound).tanh() * kBetaBound;
    out.trans.resize(t, 3);
    for (Eigen::Index r = 0; r < t; ++r) {
        out.trans(r, 0) = kXyBound * std::tanh(z3(r, kOutDim - 3) / kXyBound);
        out.trans(r, 1) = kXyBound * std::tanh(z3(r, kOutDim - 2) / kXyBound);
        out.trans(r, 2) = softplus(z3(r, kOutDim - 1)) + kMinDepth;
    }
    return out;
}

/// dZ3 columns from adjoints of the transformed heads.
MatX heads_backward(const MatX& z3, const BatchOutput& heads, const MatX& d_theta6d,
                    const MatX& d_beta, const MatX& d_trans) {
    const auto t = z3.rows();
    MatX d_z3 = MatX::Zero(t, kOutDim);
    d_z3.leftCols(geo::kPose6dDim) = d_theta6d;
    d_z3.middleCols(geo::kPose6dDim, geo::kShapeDim) =
        d_beta.array() * (1.0 - (heads.beta.array() / kBetaBound).square());
    for (Eigen::Index r = 0; r < t; ++r) {
        d_z3(r, kOutDim - 3) =
            d_trans(r, 0) * (1.0 - std::pow(heads.trans(r, 0) / kXyBound, 2));
        d_z3(r, kOutDim - 2) =
            d_trans(r, 1) * (1.0 - std::pow(heads.trans(r, 1) / kXyBound, 2));
        d_z3(r, kOutDim - 1) = d_trans(r, 2) * sigmoid(z3(r, kOutDim - 1));
    }
    return d_z3;
}

MlpTrace run_mlp(const RegressorParams& p, const MatX& obs) {
    if (obs.cols() != kObsDim)
        throw ShapeMismatchError("observation batch must have " + std::to_string(kObsDim) +
                                 " columns");
    if (!p.all_finite()) throw PoisonedParamsError("regressor parameters are not finite");
    MlpTrace t;
    t.obs = obs;
    t.z1 = (obs * p.w1.transpose()).rowwise() + p.b1.transpose();
    t.a1 = t.z1.array().tanh();
    t.z2 = (t.a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
    t.a2 = t.z2.array().tanh();
    t.z3 = (t.a2 * p.w3.transpose()).rowwise() + p.b3.transpose();
    return t;
}

RegressorGrad mlp_backward(const RegressorParams& p, const MlpTrace& t, const MatX& d_z3) {
    RegressorGrad g;
    g.w3 = d_z3.transpose() * t.a2;
    g.b3 = d_z3.colwise().sum().transpose();
    const MatX d_a2 = d_z3 * p.w3;
    const MatX d_z2 = d_a2.array() * (1.0 - t.a2.array().square());
    g.w2 = d_z2.transpose() * t.a1;
    g.b2 = d_z2.colwise().sum().transpose();
    const MatX d_a1 = d_z2 * p.w2;
    const MatX d_z1 = d_a1.array() * (1.0 - t.a1.array().square());
    g.w1 = d_z1.transpose() * t.obs;
    g.b1 = d_z1.colwise().sum().transpose();
    return g;
}

}  // namespace

RegressorParams RegressorParams::init(std::uint64_t seed) {
    Rng rng(seed);
    RegressorParams p;
    auto fill = [&rng](MatX& m, double sigma) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, sigma);
    };
    fill(p.w1, 1.0 / std::sqrt(double(kObsDim)));
    fill(p.w2, 1.0 / std::sqrt(double(kHidden)));
    fill(p.w3, 0.01);
    p.b3(kOutDim - 1) = 9.5;  // start the depth head near the working range
    return p;
}

void RegressorParams::set_zero() {
    w1.setZero();
    b1.setZero();
    w2.setZero();
    b2.setZero();
    w3.setZero();
    b3.setZero();
}

void RegressorParams::add_scaled(const RegressorParams& o, double s) {
    w1 += s * o.w1;
    b1 += s * o.b1;
    w2 += s * o.w2;
    b2 += s * o.b2;
    w3 += s * o.w3;
    b3 += s * o.b3;
}

bool RegressorParams::all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && w3.allFinite() &&
           b3.allFinite();
}

long RegressorParams::parameter_count() const {
    return long(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size());
}

BatchOutput forward_batch(const RegressorParams& params, const MatX& obs, MlpTrace* trace) {
    MlpTrace t = run_mlp(params, obs);
    BatchOutput out = heads_from_z3(t.z3);
    if (trace) *trace = std::move(t);
    return out;
}

FrameOutput forward(const RegressorParams& params, const VecX& obs) {
    if (obs.size() != kObsDim)
        throw ShapeMismatchError("observation must have " + std::to_string(kObsDim) + " entries");
    const BatchOutput b = forward_batch(params, obs.transpose());
    FrameOutput f;
    f.theta6d = b.theta6d.row(0).transpose();
    f.beta = b.beta.row(0).transpose();
    f.trans = b.trans.row(0).transpose();
    return f;
}

GradientTape forward_sum_loss(const RegressorParams& params, const MatX& obs) {
    GradientTape tape;
    tape.root = GradientTape::Root::sum_outputs;
    tape.mlp = run_mlp(params, obs);
    tape.heads = heads_from_z3(tape.mlp.z3);
    tape.loss = tape.heads.theta6d.sum() + tape.heads.beta.sum() + tape.heads.trans.sum();
    return tape;
}

GradientTape forward_l1_loss(const RegressorParams& params, const MatX& obs, const MatX& targets) {
    if (targets.rows() != obs.rows() || targets.cols() != kOutDim)
        throw ShapeMismatchError("l1 targets must be T x " + std::to_string(kOutDim));
    GradientTape tape;
    tape.root = GradientTape::Root::l1_fit;
    tape.mlp = run_mlp(params, obs);
    tape.heads = heads_from_z3(tape.mlp.z3);
    tape.targets = targets;
    const auto t = obs.rows();
    const double l_theta =
        (tape.heads.theta6d - targets.leftCols(geo::kPose6dDim)).cwiseAbs().sum() /
        double(t * geo::kPose6dDim);
    const double l_beta =
        (tape.heads.beta - targets.middleCols(geo::kPose6dDim, geo::kShapeDim)).cwiseAbs().sum() /
        double(t * geo::kShapeDim);
    const double l_trans = (tape.heads.trans - targets.rightCols(3)).cwiseAbs().sum() / double(t * 3);
    tape.loss = l_theta + l_beta + l_trans;
    return tape;
}

GradientTape forward_adapt_loss(const RegressorParams& params, const MatX& obs,
                                AdaptLossInputs inputs) {
    return forward_adapt_loss(params, run_mlp(params, obs), std::move(inputs));
}

GradientTape forward_adapt_loss(const RegressorParams& /*params*/, MlpTrace&& mlp,
                                AdaptLossInputs inputs) {
    const auto t = mlp.obs.rows();
    if (inputs.bank_j2d.rows() != t || inputs.bank_j2d.cols() != 2 * geo::kJointCount ||
        inputs.bank_vis.rows() != t || inputs.bank_vis.cols() != geo::kJointCount)
        throw ShapeMismatchError("pose bank block does not match the segment length");
    if (inputs.theta_bar.rows() != t || inputs.theta_bar.cols() != geo::kPose6dDim ||
        inputs.beta_bar.rows() != t || inputs.beta_bar.cols() != geo::kShapeDim)
        throw ShapeMismatchError("denoised targets do not match the segment length");
    if (inputs.use_align && (inputs.exemplar_root6d.rows() != t || inputs.exemplar_root6d.cols() != 6))
        throw ShapeMismatchError("exemplar root does not match the segment length");
    if (!inputs.skeleton) throw UsageError("adapt loss needs a skeleton");
    if (inputs.use_align && !inputs.space) throw UsageError("alignment needs an embedding space");

    GradientTape tape;
    tape.root = GradientTape::Root::adapt;
    tape.mlp = std::move(mlp);
    tape.heads = heads_from_z3(tape.mlp.z3);
    tape.inputs = std::move(inputs);
    const AdaptLossInputs& in = tape.inputs;

    tape.frames.resize(static_cast<std::size_t>(t));
    tape.seq6d.resize(t, geo::kPose6dDim);
    double l2d_sum = 0.0;
    for (Eigen::Index f = 0; f < t; ++f) {
        FrameGeometry& fg = tape.frames[static_cast<std::size_t>(f)];
        std::array<geo::Mat3, geo::kJointCount> local;
        for (int j = 0; j < geo::kJointCount; ++j) {
            const geo::Vec6 r6 = tape.heads.theta6d.block<1, 6>(f, 6 * j).transpose();
            local[static_cast<std::size_t>(j)] =
                geo::sixd_to_matrix_nudged(r6, &fg.gs[static_cast<std::size_t>(j)]);
            tape.seq6d.block<1, 3>(f, 6 * j) = fg.gs[static_cast<std::size_t>(j)].u1.transpose();
            tape.seq6d.block<1, 3>(f, 6 * j + 3) = fg.gs[static_cast<std::size_t>(j)].u2.transpose();
        }
        geo::fk_rotmats(local, tape.heads.beta.row(f).transpose(),
                        tape.heads.trans.row(f).transpose(), *in.skeleton, &fg.fk);
        fg.j2d = geo::project_clamped(fg.fk.joints, in.camera);

        for (int j = 0; j < geo::kJointCount; ++j) {
            if (!in.bank_vis(f, j)) continue;
            l2d_sum += std::abs(fg.j2d(j, 0) - in.bank_j2d(f, 2 * j)) +
                       std::abs(fg.j2d(j, 1) - in.bank_j2d(f, 2 * j + 1));
        }
        if (in.use_align) tape.seq6d.block<1, 6>(f, 0) = in.exemplar_root6d.row(f);
    }
    tape.term_2d = l2d_sum / (double(t) * in.image_width);

    if (in.use_align) {
        const emb::MotionFeature phi = emb::motion_features_traced(tape.seq6d, tape.feat);
        tape.phi = phi.phi;
        tape.embed_pre = in.space->encoder.w * tape.phi;
        tape.embed_norm = tape.embed_pre.norm();
        if (tape.embed_norm <= 1e-12)
            throw DegenerateEmbeddingError("encoder output collapsed to zero");
        tape.align_sim = in.space->anchors.anchors.row(in.label).dot(
            (tape.embed_pre / tape.embed_norm).transpose());
        tape.term_align = 1.0 - tape.align_sim;
    }

    tape.term_smooth =
        (tape.heads.theta6d - in.theta_bar).cwiseAbs().sum() / double(t * geo::kPose6dDim) +
        (tape.heads.beta - in.beta_bar).cwiseAbs().sum() / double(t * geo::kShapeDim);

    tape.loss = in.lambda1 * tape.term_2d + in.lambda2 * tape.term_align +
                in.smooth_weight * tape.term_smooth;
    return tape;
}

RegressorGrad backward(const RegressorParams& params, const GradientTape& tape) {
    switch (tape.root) {
        case GradientTape::Root::sum_outputs: {
            const auto t = tape.mlp.obs.rows();
            const MatX d_z3 =
                heads_backward(tape.mlp.z3, tape.heads, MatX::Ones(t, geo::kPose6dDim),
                               MatX::Ones(t, geo::kShapeDim), MatX::Ones(t, 3));
            return mlp_backward(params, tape.mlp, d_z3);
        }
        case GradientTape::Root::l1_fit: {
            const auto t = tape.mlp.obs.rows();
            MatX d_theta(t, geo::kPose6dDim), d_beta(t, geo::kShapeDim), d_trans(t, 3);
            d_theta = (tape.heads.theta6d - tape.targets.leftCols(geo::kPose6dDim))
                          .unaryExpr(&sign) /
                      double(t * geo::kPose6dDim);
            d_beta = (tape.heads.beta - tape.targets.middleCols(geo::kPose6dDim, geo::kShapeDim))
                         .unaryExpr(&sign) /
                     double(t * geo::kShapeDim);
            d_trans = (tape.heads.trans - tape.targets.rightCols(3)).unaryExpr(&sign) / double(t * 3);
            const MatX d_z3 = heads_backward(tape.mlp.z3, tape.heads, d_theta, d_beta, d_trans);
            return mlp_backward(params, tape.mlp, d_z3);
        }
        case GradientTape::Root::adapt:
            break;
        case GradientTape::Root::none:
        default:
            throw UsageError("backward() requires a tape with a recorded scalar loss");
    }

    const AdaptLossInputs& in = tape.inputs;
    const auto t = tape.mlp.obs.rows();

    MatX d_theta6d = MatX::Zero(t, geo::kPose6dDim);
    MatX d_beta = MatX::Zero(t, geo::kShapeDim);
    MatX d_trans = MatX::Zero(t, 3);

    if (in.smooth_weight != 0.0) {
        d_theta6d += in.smooth_weight / double(t * geo::kPose6dDim) *
                     (tape.heads.theta6d - in.theta_bar).unaryExpr(&sign);
        d_beta += in.smooth_weight / double(t * geo::kShapeDim) *
                  (tape.heads.beta - in.beta_bar).unaryExpr(&sign);
    }

    // alignment: adjoint of the orthonormalized 6D sequence
    MatX d_seq;
    const bool align_active = in.use_align && in.lambda2 != 0.0;
    if (align_active) {
        const double d_sim = -in.lambda2;
        const VecX yhat = tape.embed_pre / tape.embed_norm;
        const VecX anchor = in.space->anchors.anchors.row(in.label).transpose();
        const VecX d_y = d_sim * (anchor - tape.align_sim * yhat) / tape.embed_norm;
        const VecX d_phi = in.space->encoder.w.transpose() * d_y;
        d_seq = emb::motion_features_backward(tape.seq6d, tape.feat, d_phi);
    }

    const double l2d_scale = in.lambda1 / (double(t) * in.image_width);
    for (Eigen::Index f = 0; f < t; ++f) {
        const FrameGeometry& fg = tape.frames[static_cast<std::size_t>(f)];

        geo::Joints2D d_j2d = geo::Joints2D::Zero();
        if (in.lambda1 != 0.0) {
            for (int j = 0; j < geo::kJointCount; ++j) {
                if (!in.bank_vis(f, j)) continue;
                d_j2d(j, 0) = l2d_scale * sign(fg.j2d(j, 0) - in.bank_j2d(f, 2 * j));
                d_j2d(j, 1) = l2d_scale * sign(fg.j2d(j, 1) - in.bank_j2d(f, 2 * j + 1));
            }
        }
        const geo::Joints3D d_joints = geo::project_backward(fg.fk.joints, in.camera, d_j2d);
        const geo::FkGrad fk_grad = geo::fk_backward(fg.fk, *in.skeleton, d_joints);

        d_beta.row(f) += fk_grad.d_beta.transpose();
        d_trans.row(f) += fk_grad.d_trans.transpose();
        for (int j = 0; j < geo::kJointCount; ++j) {
            geo::Vec3 gu1 = fk_grad.d_local[static_cast<std::size_t>(j)].col(0);
            geo::Vec3 gu2 = fk_grad.d_local[static_cast<std::size_t>(j)].col(1);
            const geo::Vec3 gu3 = fk_grad.d_local[static_cast<std::size_t>(j)].col(2);
            if (align_active && j > 0) {  // the root channel belongs to the exemplar
                gu1 += d_seq.block<1, 3>(f, 6 * j).transpose();
                gu2 += d_seq.block<1, 3>(f, 6 * j + 3).transpose();
            }
            const geo::Vec6 d6 =
                geo::gs6d_backward(fg.gs[static_cast<std::size_t>(j)], gu1, gu2, gu3);
            d_theta6d.block<1, 6>(f, 6 * j) += d6.transpose();
        }
    }

    const MatX d_z3 = heads_backward(tape.mlp.z3, tape.heads, d_theta6d, d_beta, d_trans);
    return mlp_backward(params, tape.mlp, d_z3);
}

void adam_step(RegressorParams& params, const RegressorGrad& grad, AdamState& state, double lr) {
    auto update = [&](MatX& p, const MatX& g, MatX& m, MatX& v) {
        if (p.rows() != g.rows() || p.cols() != g.cols())
            throw ShapeMismatchError("gradient shape does not match parameters");
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v.array().matrix() + (1.0 - state.beta2) * g.array().square().matrix();
        const double mc = 1.0 - std::pow(state.beta1, double(state.step));
        const double vc = 1.0 - std::pow(state.beta2, double(state.step));
        p.array() -= lr * (m.array() / mc) / ((v.array() / vc).sqrt() + state.eps);
    };
    auto update_vec = [&](VecX& p, const VecX& g, VecX& m, VecX& v) {
        if (p.size() != g.size()) throw ShapeMismatchError("gradient shape does not match parameters");
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v.array().matrix() + (1.0 - state.beta2) * g.array().square().matrix();
        const double mc = 1.0 - std::pow(state.beta1, double(state.step));
        const double vc = 1.0 - std::pow(state.beta2, double(state.step));
        p.array() -= lr * (m.array() / mc) / ((v.array() / vc).sqrt() + state.eps);
    };
    state.step += 1;
    update(params.w1, grad.w1, state.m.w1, state.v.w1);
    update_vec(params.b1, grad.b1, state.m.b1, state.v.b1);
    update(params.w2, grad.w2, state.m.w2, state.v.w2);
    update_vec(params.b2, grad.b2, state.m.b2, state.v.b2);
    update(params.w3, grad.w3, state.m.w3, state.v.w3);
    update_vec(params.b3, grad.b3, state.m.b3, state.v.b3);
}

double cosine_lr(long step, const LrSchedule& sched) {
    if (step < 0 || step > sched.total_steps)
        throw UsageError("schedule step " + std::to_string(step) + " outside [0, " +
                         std::to_string(sched.total_steps) + "]");
    return sched.min_lr + 0.5 * (sched.base_lr - sched.min_lr) *
                              (1.0 + std::cos(kPi * double(step) / double(sched.total_steps)));
}

Eigen::Matrix<double, kOutDim, 1> pose_target(const geo::Pose& pose) {
    Eigen::Matrix<double, kOutDim, 1> y;
    for (int j = 0; j < geo::kJointCount; ++j) {
        const geo::Mat3 r = geo::aa_to_matrix(pose.theta[static_cast<std::size_t>(j)]);
        y.segment<3>(6 * j) = r.col(0);
        y.segment<3>(6 * j + 3) = r.col(1);
    }
    y.segment<geo::kShapeDim>(geo::kPose6dDim) = pose.beta;
    y.segment<3>(kOutDim - 3) = pose.trans;
    return y;
}

namespace {

void flatten_dataset(const std::vector<synth::SyntheticVideo>& videos, MatX& obs, MatX& targets) {
    std::size_t n = 0;
    for (const auto& v : videos) n += v.frames.size();
    obs.resize(static_cast<Eigen::Index>(n), kObsDim);
    targets.resize(static_cast<Eigen::Index>(n), kOutDim);
    Eigen::Index row = 0;
    for (const auto& v : videos) {
        for (const auto& fr : v.frames) {
            obs.row(row) = fr.obs.transpose();
            targets.row(row) = pose_target(fr.gt_pose).transpose();
            ++row;
        }
    }
}

}  // namespace

PretrainResult pretrain(const RegressorParams& init,
                        const std::vector<synth::SyntheticVideo>& videos,
                        const PretrainConfig& cfg) {
    if (videos.empty()) throw UsageError("pretraining needs a non-empty dataset");
    MatX obs, targets;
    flatten_dataset(videos, obs, targets);
    const Eigen::Index n = obs.rows();

    PretrainResult out;
    out.params = init;
    AdamState adam;
    Rng rng(cfg.seed);

    const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const LrSchedule sched{cfg.base_lr, cfg.min_lr, std::max(1l, long(cfg.epochs) * steps_per_epoch)};
    long step = 0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    const Eigen::Index eval_n = std::min<Eigen::Index>(n, cfg.eval_frames);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates with the run's own stream
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = rng.uniform_int(i);
            std::swap(order[i - 1], order[j]);
        }
        double lr = sched.base_lr;
        for (Eigen::Index start = 0; start < n; start += cfg.batch) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch, n - start);
            MatX batch_obs(b, kObsDim), batch_targets(b, kOutDim);
            for (Eigen::Index i = 0; i < b; ++i) {
                batch_obs.row(i) = obs.row(order[static_cast<std::size_t>(start + i)]);
                batch_targets.row(i) = targets.row(order[static_cast<std::size_t>(start + i)]);
            }
            lr = cosine_lr(step, sched);
            const GradientTape tape = forward_l1_loss(out.params, batch_obs, batch_targets);
            const RegressorGrad grad = backward(out.params, tape);
            adam_step(out.params, grad, adam, lr);
            ++step;
        }
        const GradientTape eval =
            forward_l1_loss(out.params, obs.topRows(eval_n), targets.topRows(eval_n));
        out.curve.push_back({epoch, eval.loss, lr});
    }
    return out;
}

double dataset_l1_loss(const RegressorParams& params,
                       const std::vector<synth::SyntheticVideo>& videos, int max_frames) {
    MatX obs, targets;
    flatten_dataset(videos, obs, targets);
    const Eigen::Index eval_n = std::min<Eigen::Index>(obs.rows(), max_frames);
    return forward_l1_loss(params, obs.topRows(eval_n), targets.topRows(eval_n)).loss;
}

std::string checkpoint_bytes(const RegressorParams& params) {
    BinaryWriter w;
    w.magic("STTA-CKP");
    w.u32(1);
    w.u32(4);
    w.u32(kObsDim);
    w.u32(kHidden);
    w.u32(kHidden);
    w.u32(kOutDim);
    auto dump = [&w](const MatX& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
    };
    auto dump_vec = [&w](const VecX& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
    };
    dump(params.w1);
    dump_vec(params.b1);
    dump(params.w2);
    dump_vec(params.b2);
    dump(params.w3);
    dump_vec(params.b3);
    return w.bytes();
}

void save_checkpoint(const RegressorParams& params, const std::filesystem::path& path) {
    atomic_write_file(path, checkpoint_bytes(params));
}

RegressorParams load_checkpoint(const std::filesystem::path& path) {
    BinaryReader r(read_file(path));
    r.expect_magic("STTA-CKP");
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t dims = r.u32();
    if (dims != 4 || r.u32() != kObsDim || r.u32() != kHidden || r.u32() != kHidden ||
        r.u32() != kOutDim)
        throw IoError("checkpoint layer dimensions do not match this build");
    RegressorParams p;
    auto read = [&r](MatX& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
    };
    auto read_vec = [&r](VecX& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
    };
    read(p.w1);
    read_vec(p.b1);
    read(p.w2);
    read_vec(p.b2);
    read(p.w3);
    read_vec(p.b3);
    if (!r.at_end()) throw IoError("trailing bytes in checkpoint file");
    return p;
}

}  // namespace stta::nn

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stta/embedding.hpp"
#include "stta/geometry.hpp"
#include "stta/synthworld.hpp"

namespace stta::nn {

inline constexpr int kObsDim = 64;
inline constexpr int kHidden = 256;
inline constexpr int kOutDim = geo::kPose6dDim + geo::kShapeDim + 3;  // 157

inline constexpr double kBetaBound = 5.0;       // beta head: 5*tanh(z/5)
inline constexpr double kXyBound = 2.0;         // trans xy head: 2*tanh(z/2) [m]
inline constexpr double kMinDepth = 0.5;        // trans z head: softplus(z) + 0.5 [m]

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

/// Weights and biases of the pose regressor (64 -> 256 -> 256 -> 157, tanh
/// hidden activations). The same shapes double as gradient and Adam moment
/// storage.
struct RegressorParams {
    MatX w1 = MatX::Zero(kHidden, kObsDim);
    VecX b1 = VecX::Zero(kHidden);
    MatX w2 = MatX::Zero(kHidden, kHidden);
    VecX b2 = VecX::Zero(kHidden);
    MatX w3 = MatX::Zero(kOutDim, kHidden);
    VecX b3 = VecX::Zero(kOutDim);

    static RegressorParams init(std::uint64_t seed);

    void set_zero();
    void add_scaled(const RegressorParams& other, double s);
    bool all_finite() const;
    long parameter_count() const;
};

using RegressorGrad = RegressorParams;

/// Head outputs per frame row: raw 6D rotations, bounded shape, bounded-xy /
/// positive-depth translation.
struct BatchOutput {
    MatX theta6d;  // T x 144
    MatX beta;     // T x 10
    MatX trans;    // T x 3
};

struct FrameOutput {
    Eigen::Matrix<double, geo::kPose6dDim, 1> theta6d;
    geo::ShapeVec beta;
    geo::Vec3 trans;
};

struct MlpTrace {
    MatX obs, z1, a1, z2, a2, z3;
};

/// Batched forward pass; throws PoisonedParamsError on non-finite weights.
BatchOutput forward_batch(const RegressorParams& params, const MatX& obs, MlpTrace* trace = nullptr);
FrameOutput forward(const RegressorParams& params, const VecX& obs);

/// Constant inputs of one adaptation loss evaluation. The pose bank, the
/// denoised targets and the exemplar root are inputs, not graph nodes: the
/// backward pass assigns them no adjoint.
struct AdaptLossInputs {
    double lambda1 = 0.1;
    double lambda2 = 0.2;
    double smooth_weight = 1.0;
    double image_width = 224.0;
    MatX bank_j2d;                                                     // T x 48
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> bank_vis;  // T x 24
    MatX theta_bar;        // T x 144
    MatX beta_bar;         // T x 10
    MatX exemplar_root6d;  // T x 6
    bool use_align = true;
    int label = 0;
    const emb::EmbeddingSpace* space = nullptr;
    const geo::Skeleton* skeleton = nullptr;
    geo::Camera camera;
};

struct FrameGeometry {
    std::array<geo::Gs6dTrace, geo::kJointCount> gs;
    geo::FkTrace fk;
    geo::Joints2D j2d;
};

/// Fixed-topology record of one scalar loss evaluation: node values for the
/// regressor, the per-frame geometry, and the embedding path. backward()
/// replays it in reverse.
struct GradientTape {
    enum class Root { none, sum_outputs, l1_fit, adapt };

    Root root = Root::none;
    MlpTrace mlp;
    BatchOutput heads;

    MatX targets;  // l1_fit only

    AdaptLossInputs inputs;  // adapt only
    std::vector<FrameGeometry> frames;
    MatX seq6d;  // T x 144, orthonormalized, root channels from the exemplar
    emb::FeatureTrace feat;
    VecX phi;
    VecX embed_pre;
    double embed_norm = 0.0;
    double align_sim = 0.0;

    double term_2d = 0.0;
    double term_align = 0.0;
    double term_smooth = 0.0;
    double loss = 0.0;
};

/// Sum of all head outputs; the simplest scalar root, used by tests.
GradientTape forward_sum_loss(const RegressorParams& params, const MatX& obs);

/// Mean-per-element L1 between head outputs and targets (pretraining loss).
GradientTape forward_l1_loss(const RegressorParams& params, const MatX& obs, const MatX& targets);

/// The adaptation objective: lambda1 * masked 2D reprojection L1 +
/// lambda2 * (1 - motion/text similarity) + smoothing L1 against the
/// denoised targets.
GradientTape forward_adapt_loss(const RegressorParams& params, const MatX& obs,
                                AdaptLossInputs inputs);
GradientTape forward_adapt_loss(const RegressorParams& params, MlpTrace&& mlp,
                                AdaptLossInputs inputs);

/// Exact reverse-mode gradients of the recorded scalar loss with respect to
/// every regressor parameter. Throws UsageError when the tape has no
/// recorded scalar root.
RegressorGrad backward(const RegressorParams& params, const GradientTape& tape);

struct AdamState {
    RegressorGrad m;
    RegressorGrad v;
    long step = 0;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Throws ShapeMismatchError when the
/// gradient shapes differ from the parameters.
void adam_step(RegressorParams& params, const RegressorGrad& grad, AdamState& state, double lr);

struct LrSchedule {
    double base_lr = 5e-5;
    double min_lr = 1e-6;
    long total_steps = 1;
};

/// min + 0.5*(base - min)*(1 + cos(pi*step/total)); throws UsageError outside
/// [0, total_steps].
double cosine_lr(long step, const LrSchedule& sched);

/// Ground-truth regression target for one frame: exact 6D rotations, shape,
/// translation, in head layout.
Eigen::Matrix<double, kOutDim, 1> pose_target(const geo::Pose& pose);

struct PretrainConfig {
    int epochs = 40;
    int batch = 64;
    double base_lr = 1e-3;
    double min_lr = 1e-5;
    std::uint64_t seed = 1;
    int eval_frames = 2048;  // deterministic prefix used for the logged loss
};

struct TrainCurvePoint {
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct PretrainResult {
    RegressorParams params;
    std::vector<TrainCurvePoint> curve;
};

/// L1 regression on (theta-6D, beta, t) over shuffled minibatches; the
/// trajectory is a pure function of (init, videos, config).
PretrainResult pretrain(const RegressorParams& init,
                        const std::vector<synth::SyntheticVideo>& videos,
                        const PretrainConfig& cfg);

/// The pretraining loss recomputed over the dataset prefix; matches the
/// curve entries exactly when evaluated on the same parameters.
double dataset_l1_loss(const RegressorParams& params,
                       const std::vector<synth::SyntheticVideo>& videos, int max_frames);

std::string checkpoint_bytes(const RegressorParams& params);
void save_checkpoint(const RegressorParams& params, const std::filesystem::path& path);
RegressorParams load_checkpoint(const std::filesystem::path& path);

}  // namespace stta::nn

#include <benchmark/benchmark.h>

#include "stta/adapt.hpp"
#include "stta/embedding.hpp"
#include "stta/geometry.hpp"
#include "stta/neuralnet.hpp"
#include "stta/rng.hpp"
#include "stta/synthworld.hpp"

using namespace stta;

namespace {

geo::Vec3 random_axis_angle(Rng& rng) {
    geo::Vec3 v(rng.normal(), rng.normal(), rng.normal());
    v.normalize();
    return v * rng.uniform(0.0, 3.0);
}

struct LossFixture {
    nn::RegressorParams params = nn::RegressorParams::init(7);
    emb::EmbeddingSpace space = synth::build_calibrated_space(7);
    Eigen::MatrixXd obs;
    nn::AdaptLossInputs inputs;

    LossFixture() {
        Rng rng(11);
        const int t = synth::kSegmentFrames;
        obs.resize(t, nn::kObsDim);
        for (int f = 0; f < t; ++f)
            for (int c = 0; c < nn::kObsDim; ++c) obs(f, c) = rng.normal();

        const nn::BatchOutput heads = nn::forward_batch(params, obs);
        inputs.bank_j2d = Eigen::MatrixXd::Constant(t, 48, 112.0);
        inputs.bank_vis.setOnes(t, geo::kJointCount);
        inputs.theta_bar = adapt::denoise_motion(heads.theta6d, 9);
        inputs.beta_bar = adapt::average_shape(heads.beta, 31);
        inputs.exemplar_root6d = synth::exemplar_6d(1).leftCols<6>();
        inputs.label = 1;
        inputs.space = &space;
        inputs.skeleton = &geo::Skeleton::standard();
        inputs.camera = geo::default_camera();
    }
};

void BM_AaToMatrix(benchmark::State& state) {
    Rng rng(1);
    const geo::RotationAA aa{random_axis_angle(rng)};
    for (auto _ : state) benchmark::DoNotOptimize(geo::aa_to_matrix(aa));
}
BENCHMARK(BM_AaToMatrix);

void BM_Gs6dNudged(benchmark::State& state) {
    Rng rng(2);
    const geo::Vec6 r6 = geo::matrix_to_6d(geo::aa_to_matrix({random_axis_angle(rng)})).r;
    geo::Gs6dTrace trace;
    for (auto _ : state) benchmark::DoNotOptimize(geo::sixd_to_matrix_nudged(r6, &trace));
}
BENCHMARK(BM_Gs6dNudged);

void BM_ForwardKinematics(benchmark::State& state) {
    Rng rng(3);
    geo::Pose pose;
    for (int j = 0; j < geo::kJointCount; ++j)
        pose.theta[static_cast<std::size_t>(j)].v = random_axis_angle(rng);
    const geo::Skeleton& skel = geo::Skeleton::standard();
    for (auto _ : state) benchmark::DoNotOptimize(geo::forward_kinematics(pose, skel));
}
BENCHMARK(BM_ForwardKinematics);

void BM_MotionFeatures(benchmark::State& state) {
    Rng rng(4);
    emb::Motion6d seq(synth::kSegmentFrames, geo::kPose6dDim);
    for (int f = 0; f < seq.rows(); ++f)
        for (int c = 0; c < seq.cols(); ++c) seq(f, c) = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(emb::motion_features(seq));
}
BENCHMARK(BM_MotionFeatures);

void BM_RegressorForward60(benchmark::State& state) {
    const LossFixture fx;
    for (auto _ : state) benchmark::DoNotOptimize(nn::forward_batch(fx.params, fx.obs));
}
BENCHMARK(BM_RegressorForward60);

void BM_AdaptLossForward60(benchmark::State& state) {
    const LossFixture fx;
    for (auto _ : state) {
        const nn::GradientTape tape = nn::forward_adapt_loss(fx.params, fx.obs, fx.inputs);
        benchmark::DoNotOptimize(tape.loss);
    }
}
BENCHMARK(BM_AdaptLossForward60);

void BM_AdaptLossForwardBackward60(benchmark::State& state) {
    const LossFixture fx;
    for (auto _ : state) {
        const nn::GradientTape tape = nn::forward_adapt_loss(fx.params, fx.obs, fx.inputs);
        benchmark::DoNotOptimize(nn::backward(fx.params, tape));
    }
}
BENCHMARK(BM_AdaptLossForwardBackward60);

void BM_PoseBankUpdate(benchmark::State& state) {
    synth::DetectorModel det;
    const synth::SyntheticVideo video =
        synth::generate_video(synth::target_domain(), det, 0, 600, 99);
    const adapt::VideoPredictions preds =
        adapt::predict_video(nn::RegressorParams::init(5), video);
    const adapt::PoseBank bank = adapt::PoseBank::from_detector(video);
    std::vector<adapt::Segment> segments = adapt::segment_video(video.labels(), 60);
    const std::vector<double> sims(segments.size(), 0.9);
    adapt::AdaptConfig cfg;
    for (auto _ : state) {
        adapt::PoseBank copy = bank;
        benchmark::DoNotOptimize(adapt::update_pose_bank(copy, preds, segments, sims, cfg, 1));
    }
}
BENCHMARK(BM_PoseBankUpdate);

}  // namespace

BENCHMARK_MAIN();

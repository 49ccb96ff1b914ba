#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "stta/error.hpp"
#include "stta/geometry.hpp"

namespace stta::emb {

inline constexpr int kNumClasses = 6;
inline constexpr int kEmbedDim = 32;
inline constexpr int kFeatureDim = 2 * geo::kPose6dDim;  // 288
inline constexpr double kVarianceEps = 1e-8;

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

/// Rows are frames, 144 columns hold the 24 per-joint 6D rotations.
using Motion6d = MatX;

struct SemanticClass {
    int id = 0;
    std::string name;
};

const std::vector<SemanticClass>& builtin_classes();
const SemanticClass& semantic_class(int id);  // throws UnknownLabelError

/// Unit text anchors, one row per class.
struct AnchorTable {
    MatX anchors;  // C x D

    int class_count() const { return static_cast<int>(anchors.rows()); }
    int dim() const { return static_cast<int>(anchors.cols()); }
};

/// Gram-Schmidt-orthonormalized random rows; same seed, same table.
AnchorTable build_anchors(int classes, int dim, std::uint64_t seed);

/// Temporal mean and standard deviation of each 6D channel, concatenated.
struct MotionFeature {
    VecX phi;  // F
};

struct FeatureTrace {
    VecX mu;  // per-channel temporal mean
    VecX sd;  // sqrt(var + eps)
    int frames = 0;
};

MotionFeature motion_features(const Motion6d& seq);  // throws SegmentTooShortError
MotionFeature motion_features_traced(const Motion6d& seq, FeatureTrace& trace);

/// Adjoint of the sequence given the adjoint of phi.
MatX motion_features_backward(const Motion6d& seq, const FeatureTrace& trace, const VecX& d_phi);

/// Linear motion encoder, frozen once calibrated.
struct EncoderWeights {
    MatX w;  // D x F
};

struct EmbeddingSpace {
    AnchorTable anchors;
    EncoderWeights encoder;

    int classes() const { return anchors.class_count(); }
    int dim() const { return anchors.dim(); }
    int feature_dim() const { return static_cast<int>(encoder.w.cols()); }
};

/// w*phi normalized to unit length. Throws DegenerateEmbeddingError when the
/// pre-normalization vector is (numerically) zero.
VecX encode_motion(const MotionFeature& phi, const EncoderWeights& enc);

/// Cosine between the class anchor and the encoded motion.
double similarity(int class_id, const Motion6d& seq, const EmbeddingSpace& space);

/// d similarity / d seq, matching the forward similarity() exactly.
MatX similarity_backward(int class_id, const Motion6d& seq, const EmbeddingSpace& space);

struct Prototype {
    int class_id = 0;
    Motion6d seq;
};

/// Ridge least-squares fit mapping prototype features onto their class
/// anchors. Requires at least kMinPrototypesPerClass segments for every
/// class and at least two classes; verifies every training prototype lands
/// within cosine 0.99 of its anchor.
inline constexpr int kMinPrototypesPerClass = 4;
inline constexpr double kCalibrationRidge = 1e-4;
inline constexpr double kCalibrationGate = 0.99;

EncoderWeights calibrate(const std::vector<Prototype>& prototypes, const AnchorTable& anchors,
                         double ridge = kCalibrationRidge);

void save_embedding(const EmbeddingSpace& space, const std::filesystem::path& path);
EmbeddingSpace load_embedding(const std::filesystem::path& path);
std::string embedding_bytes(const EmbeddingSpace& space);

}  // namespace stta::emb

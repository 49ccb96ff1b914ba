#include "stta/embedding.hpp"

#include <cmath>
#include <map>

#include "stta/io.hpp"
#include "stta/rng.hpp"

namespace stta::emb {

const std::vector<SemanticClass>& builtin_classes() {
    static const std::vector<SemanticClass> classes = {
        {0, "idle"},       {1, "walking"},    {2, "squatting"},
        {3, "sitting"},    {4, "raise-arms"}, {5, "bend-down"},
    };
    return classes;
}

const SemanticClass& semantic_class(int id) {
    const auto& all = builtin_classes();
    if (id < 0 || id >= static_cast<int>(all.size()))
        throw UnknownLabelError("unknown semantic class id " + std::to_string(id));
    return all[static_cast<std::size_t>(id)];
}

AnchorTable build_anchors(int classes, int dim, std::uint64_t seed) {
    if (dim < classes)
        throw DimensionError("anchor dim " + std::to_string(dim) + " < class count " +
                             std::to_string(classes));
    Rng rng(derive_seed(seed, "anchors", 0));
    MatX a(classes, dim);
    for (int c = 0; c < classes; ++c) {
        for (;;) {
            for (int d = 0; d < dim; ++d) a(c, d) = rng.normal();
            for (int p = 0; p < c; ++p) a.row(c) -= a.row(c).dot(a.row(p)) * a.row(p);
            const double n = a.row(c).norm();
            if (n > 1e-6) {
                a.row(c) /= n;
                break;
            }
        }
    }
    return AnchorTable{std::move(a)};
}

MotionFeature motion_features(const Motion6d& seq) {
    FeatureTrace trace;
    return motion_features_traced(seq, trace);
}

MotionFeature motion_features_traced(const Motion6d& seq, FeatureTrace& trace) {
    const int t = static_cast<int>(seq.rows());
    if (t < 2) throw SegmentTooShortError("motion features need at least 2 frames");
    const int f = static_cast<int>(seq.cols());

    trace.frames = t;
    trace.mu = seq.colwise().mean().transpose();
    VecX var(f);
    for (int i = 0; i < f; ++i)
        var(i) = (seq.col(i).array() - trace.mu(i)).square().sum() / static_cast<double>(t);
    trace.sd = (var.array() + kVarianceEps).sqrt();

    MotionFeature out;
    out.phi.resize(2 * f);
    out.phi.head(f) = trace.mu;
    out.phi.tail(f) = trace.sd;
    return out;
}

MatX motion_features_backward(const Motion6d& seq, const FeatureTrace& trace, const VecX& d_phi) {
    const int t = trace.frames;
    const int f = static_cast<int>(seq.cols());
    const VecX d_mu = d_phi.head(f);
    const VecX d_sd = d_phi.tail(f);
    MatX g(t, f);
    const double inv_t = 1.0 / static_cast<double>(t);
    for (int i = 0; i < f; ++i) {
        const double k = d_sd(i) * inv_t / trace.sd(i);
        g.col(i) = (d_mu(i) * inv_t) + k * (seq.col(i).array() - trace.mu(i));
    }
    return g;
}

VecX encode_motion(const MotionFeature& phi, const EncoderWeights& enc) {
    VecX y = enc.w * phi.phi;
    const double n = y.norm();
    if (n <= 1e-12) throw DegenerateEmbeddingError("encoder output collapsed to zero");
    return y / n;
}

double similarity(int class_id, const Motion6d& seq, const EmbeddingSpace& space) {
    if (class_id < 0 || class_id >= space.classes())
        throw UnknownLabelError("unknown semantic class id " + std::to_string(class_id));
    const MotionFeature phi = motion_features(seq);
    const VecX e = encode_motion(phi, space.encoder);
    return space.anchors.anchors.row(class_id).dot(e.transpose());
}

MatX similarity_backward(int class_id, const Motion6d& seq, const EmbeddingSpace& space) {
    if (class_id < 0 || class_id >= space.classes())
        throw UnknownLabelError("unknown semantic class id " + std::to_string(class_id));
    FeatureTrace trace;
    const MotionFeature phi = motion_features_traced(seq, trace);
    const VecX y = space.encoder.w * phi.phi;
    const double n = y.norm();
    if (n <= 1e-12) throw DegenerateEmbeddingError("encoder output collapsed to zero");
    const VecX yhat = y / n;
    const VecX a = space.anchors.anchors.row(class_id).transpose();
    const double cos = a.dot(yhat);
    const VecX d_y = (a - cos * yhat) / n;
    const VecX d_phi = space.encoder.w.transpose() * d_y;
    return motion_features_backward(seq, trace, d_phi);
}

EncoderWeights calibrate(const std::vector<Prototype>& prototypes, const AnchorTable& anchors,
                         double ridge) {
    const int classes = anchors.class_count();
    std::map<int, int> counts;
    for (const auto& p : prototypes) {
        if (p.class_id < 0 || p.class_id >= classes)
            throw UnknownLabelError("prototype labeled with unknown class id " +
                                    std::to_string(p.class_id));
        counts[p.class_id]++;
    }
    if (counts.size() < 2)
        throw CalibrationError("calibration needs prototypes from at least two classes");
    for (int c = 0; c < classes; ++c) {
        if (counts[c] < kMinPrototypesPerClass)
            throw CalibrationError("class " + std::to_string(c) + " has " +
                                   std::to_string(counts[c]) + " prototypes, needs " +
                                   std::to_string(kMinPrototypesPerClass));
    }

    const int n = static_cast<int>(prototypes.size());
    const int f = kFeatureDim;
    MatX features(n, f);
    MatX targets(n, anchors.dim());
    for (int i = 0; i < n; ++i) {
        features.row(i) = motion_features(prototypes[static_cast<std::size_t>(i)].seq).phi.transpose();
        targets.row(i) = anchors.anchors.row(prototypes[static_cast<std::size_t>(i)].class_id);
    }

    const MatX gram = features.transpose() * features + ridge * MatX::Identity(f, f);
    const MatX wt = gram.ldlt().solve(features.transpose() * targets);  // F x D
    EncoderWeights enc{wt.transpose()};
    if (!enc.w.allFinite()) throw CalibrationError("calibration produced non-finite weights");

    // quality gate: every training prototype must land on its own anchor
    for (const auto& p : prototypes) {
        VecX y = enc.w * motion_features(p.seq).phi;
        const double norm = y.norm();
        if (norm <= 1e-12)
            throw CalibrationError("feature matrix rank-deficient beyond ridge repair");
        const double cos = anchors.anchors.row(p.class_id).dot((y / norm).transpose());
        if (cos < kCalibrationGate)
            throw CalibrationError("prototype of class " + std::to_string(p.class_id) +
                                   " calibrated to cosine " + std::to_string(cos));
    }
    return enc;
}

std::string embedding_bytes(const EmbeddingSpace& space) {
    BinaryWriter w;
    w.magic("STTA-EMB");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(space.classes()));
    w.u32(static_cast<std::uint32_t>(space.dim()));
    w.u32(static_cast<std::uint32_t>(space.feature_dim()));
    for (int r = 0; r < space.anchors.anchors.rows(); ++r)
        for (int c = 0; c < space.anchors.anchors.cols(); ++c) w.f64(space.anchors.anchors(r, c));
    for (int r = 0; r < space.encoder.w.rows(); ++r)
        for (int c = 0; c < space.encoder.w.cols(); ++c) w.f64(space.encoder.w(r, c));
    return w.bytes();
}

void save_embedding(const EmbeddingSpace& space, const std::filesystem::path& path) {
    atomic_write_file(path, embedding_bytes(space));
}

EmbeddingSpace load_embedding(const std::filesystem::path& path) {
    BinaryReader r(read_file(path));
    r.expect_magic("STTA-EMB");
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported embedding file version " + std::to_string(version));
    const int classes = static_cast<int>(r.u32());
    const int dim = static_cast<int>(r.u32());
    const int f = static_cast<int>(r.u32());
    EmbeddingSpace space;
    space.anchors.anchors.resize(classes, dim);
    for (int i = 0; i < classes; ++i)
        for (int j = 0; j < dim; ++j) space.anchors.anchors(i, j) = r.f64();
    space.encoder.w.resize(dim, f);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < f; ++j) space.encoder.w(i, j) = r.f64();
    if (!r.at_end()) throw IoError("trailing bytes in embedding file");
    return space;
}

}  // namespace stta::emb

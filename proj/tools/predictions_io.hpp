#pragma once

#include <filesystem>
#include <vector>

#include "stta/adapt.hpp"
#include "stta/io.hpp"

// Adapted-prediction files written by `stta adapt` and consumed by
// `stta eval`: per-frame pose, joints and projections plus the fill-in
// events recorded during adaptation.
namespace stta::prd {

inline void save_predictions(const adapt::VideoPredictions& preds,
                             const std::vector<adapt::FillEvent>& fills,
                             const std::filesystem::path& path) {
    BinaryWriter w;
    w.magic("STTA-PRD");
    w.u32(1);
    const int frames = preds.frames();
    w.u32(static_cast<std::uint32_t>(frames));
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            const geo::RotationMatrix m =
                geo::sixd_to_matrix({preds.theta6d_ortho.block<1, 6>(f, 6 * j).transpose()});
            const geo::RotationAA aa = geo::matrix_to_aa(m);
            for (int k = 0; k < 3; ++k) w.f64(aa.v(k));
        }
        for (int i = 0; i < geo::kShapeDim; ++i) w.f64(preds.beta(f, i));
        for (int i = 0; i < 3; ++i) w.f64(preds.trans(f, i));
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 3; ++k) w.f64(preds.j3d[static_cast<std::size_t>(f)](j, k));
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 2; ++k) w.f64(preds.j2d[static_cast<std::size_t>(f)](j, k));
    }
    w.u64(fills.size());
    for (const adapt::FillEvent& e : fills) {
        w.u32(static_cast<std::uint32_t>(e.epoch));
        w.u32(static_cast<std::uint32_t>(e.frame));
        w.u32(static_cast<std::uint32_t>(e.joint));
        w.f64(e.u);
        w.f64(e.v);
    }
    atomic_write_file(path, w.bytes());
}

struct LoadedPredictions {
    adapt::VideoPredictions preds;
    std::vector<adapt::FillEvent> fills;
};

inline LoadedPredictions load_predictions(const std::filesystem::path& path) {
    BinaryReader r(read_file(path));
    r.expect_magic("STTA-PRD");
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported predictions version " + std::to_string(version));
    const int frames = static_cast<int>(r.u32());

    LoadedPredictions out;
    out.preds.theta6d_raw.resize(frames, geo::kPose6dDim);
    out.preds.theta6d_ortho.resize(frames, geo::kPose6dDim);
    out.preds.beta.resize(frames, geo::kShapeDim);
    out.preds.trans.resize(frames, 3);
    out.preds.j3d.resize(static_cast<std::size_t>(frames));
    out.preds.j2d.resize(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            geo::RotationAA aa;
            for (int k = 0; k < 3; ++k) aa.v(k) = r.f64();
            const geo::Rotation6D r6 = geo::matrix_to_6d(geo::aa_to_matrix(aa));
            out.preds.theta6d_ortho.block<1, 6>(f, 6 * j) = r6.r.transpose();
            out.preds.theta6d_raw.block<1, 6>(f, 6 * j) = r6.r.transpose();
        }
        for (int i = 0; i < geo::kShapeDim; ++i) out.preds.beta(f, i) = r.f64();
        for (int i = 0; i < 3; ++i) out.preds.trans(f, i) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 3; ++k) out.preds.j3d[static_cast<std::size_t>(f)](j, k) = r.f64();
        for (int j = 0; j < geo::kJointCount; ++j)
            for (int k = 0; k < 2; ++k) out.preds.j2d[static_cast<std::size_t>(f)](j, k) = r.f64();
    }
    const std::uint64_t n_fills = r.u64();
    out.fills.resize(n_fills);
    for (auto& e : out.fills) {
        e.epoch = static_cast<int>(r.u32());
        e.frame = static_cast<int>(r.u32());
        e.joint = static_cast<int>(r.u32());
        e.u = r.f64();
        e.v = r.f64();
    }
    if (!r.at_end()) throw IoError("trailing bytes in predictions file");
    return out;
}

}  // namespace stta::prd

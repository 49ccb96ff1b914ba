#include "stta/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stta/parallel.hpp"

namespace stta::eval {

double mpjpe_mm(const geo::Joints3D& pred, const geo::Joints3D& gt) {
    const geo::Joints3D p = pred.rowwise() - pred.row(0);
    const geo::Joints3D g = gt.rowwise() - gt.row(0);
    return (p - g).rowwise().norm().mean() * 1000.0;
}

double pa_mpjpe_mm(const geo::Joints3D& pred, const geo::Joints3D& gt) {
    const geo::SimilarityTransform t = geo::procrustes_align(pred, gt);
    return (t.apply(pred) - gt).rowwise().norm().mean() * 1000.0;
}

double pck(const geo::Joints2D& pred, const geo::Joints2D& gt,
           const std::array<bool, geo::kJointCount>& mask, double threshold_px) {
    int total = 0, hits = 0;
    for (int j = 0; j < geo::kJointCount; ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        ++total;
        if ((pred.row(j) - gt.row(j)).norm() < threshold_px) ++hits;
    }
    if (total == 0) throw UsageError("pck mask selects no joints");
    return static_cast<double>(hits) / static_cast<double>(total);
}

VideoMetrics evaluate_video(const synth::SyntheticVideo& gt, const adapt::VideoPredictions& pred,
                            const std::vector<adapt::FillEvent>& fills, double pck_threshold_px) {
    const int frames = static_cast<int>(gt.frames.size());
    if (pred.frames() != frames)
        throw ShapeMismatchError("predictions do not cover the video");

    VideoMetrics m;
    m.video_id = static_cast<int>(gt.id);

    double sum_all = 0.0, sum_occ = 0.0, sum_vis = 0.0, sum_pa = 0.0;
    long n_all = 0, n_occ = 0, n_vis = 0;
    std::map<int, std::pair<double, long>> per_class;

    for (int f = 0; f < frames; ++f) {
        const synth::Frame& fr = gt.frames[static_cast<std::size_t>(f)];
        const geo::Joints3D p =
            pred.j3d[static_cast<std::size_t>(f)].rowwise() - pred.j3d[static_cast<std::size_t>(f)].row(0);
        const geo::Joints3D g = fr.gt_j3d.rowwise() - fr.gt_j3d.row(0);
        double frame_sum = 0.0;
        for (int j = 0; j < geo::kJointCount; ++j) {
            const double d = (p.row(j) - g.row(j)).norm() * 1000.0;
            frame_sum += d;
            sum_all += d;
            ++n_all;
            if (fr.visibility[static_cast<std::size_t>(j)]) {
                sum_vis += d;
                ++n_vis;
            } else {
                sum_occ += d;
                ++n_occ;
            }
        }
        auto& pc = per_class[fr.label];
        pc.first += frame_sum / geo::kJointCount;
        pc.second += 1;
        sum_pa += pa_mpjpe_mm(pred.j3d[static_cast<std::size_t>(f)], fr.gt_j3d);
    }

    m.mpjpe = sum_all / static_cast<double>(n_all);
    m.pa_mpjpe = sum_pa / static_cast<double>(frames);
    if (n_occ > 0) m.occluded_mpjpe = sum_occ / static_cast<double>(n_occ);
    if (n_vis > 0) m.visible_mpjpe = sum_vis / static_cast<double>(n_vis);
    for (const auto& [label, agg] : per_class)
        m.per_class_mpjpe[label] = agg.first / static_cast<double>(agg.second);

    if (!fills.empty()) {
        long hits = 0;
        for (const adapt::FillEvent& e : fills) {
            const auto& gt2d = gt.frames[static_cast<std::size_t>(e.frame)].gt_j2d;
            const double du = e.u - gt2d(e.joint, 0);
            const double dv = e.v - gt2d(e.joint, 1);
            if (std::sqrt(du * du + dv * dv) < pck_threshold_px) ++hits;
        }
        m.pck_filled = static_cast<double>(hits) / static_cast<double>(fills.size());
    }
    return m;
}

MetricsReport aggregate(std::vector<VideoMetrics> videos) {
    MetricsReport r;
    r.videos = std::move(videos);
    if (r.videos.empty()) return r;
    for (const auto& v : r.videos) {
        r.mpjpe += v.mpjpe;
        r.pa_mpjpe += v.pa_mpjpe;
    }
    r.mpjpe /= static_cast<double>(r.videos.size());
    r.pa_mpjpe /= static_cast<double>(r.videos.size());
    return r;
}

bool is_lower_body_truncated(const synth::SyntheticVideo& video) {
    for (const synth::Frame& fr : video.frames)
        for (int j : synth::lower_body_joints())
            if (fr.visibility[static_cast<std::size_t>(j)]) return false;
    return !video.frames.empty();
}

namespace {

struct PreComputed {
    adapt::VideoPredictions preds;
    double mpjpe = 0.0;
    double pa = 0.0;
    std::optional<double> occluded;
    std::map<int, ClassAgg> per_class_pre;  // post sums filled later
    bool truncated = false;
};

std::vector<double> per_frame_mpjpe(const synth::SyntheticVideo& gt,
                                    const adapt::VideoPredictions& pred) {
    std::vector<double> out(gt.frames.size());
    for (std::size_t f = 0; f < gt.frames.size(); ++f) {
        out[f] = mpjpe_mm(pred.j3d[f], gt.frames[f].gt_j3d);
    }
    return out;
}

PreComputed precompute(const synth::SyntheticVideo& video, const nn::RegressorParams& checkpoint) {
    PreComputed pc;
    pc.preds = adapt::predict_video(checkpoint, video);
    const VideoMetrics m = evaluate_video(video, pc.preds, {});
    pc.mpjpe = m.mpjpe;
    pc.pa = m.pa_mpjpe;
    pc.occluded = m.occluded_mpjpe;
    pc.truncated = is_lower_body_truncated(video);
    const std::vector<double> frame_err = per_frame_mpjpe(video, pc.preds);
    for (std::size_t f = 0; f < video.frames.size(); ++f) {
        ClassAgg& agg = pc.per_class_pre[video.frames[f].label];
        agg.pre_sum += frame_err[f];
        agg.frames += 1;
    }
    return pc;
}

}  // namespace

std::vector<RunRecord> run_benchmark(const BenchmarkContext& ctx, const adapt::AdaptConfig& cfg,
                                     const std::vector<std::uint64_t>& seeds,
                                     double label_corruption) {
    const auto& videos = *ctx.videos;
    std::vector<PreComputed> pre(videos.size());
    parallel_for(videos.size(), [&](std::size_t i) { pre[i] = precompute(videos[i], *ctx.checkpoint); });

    const std::size_t n = seeds.size() * videos.size();
    std::vector<RunRecord> records(n);
    parallel_for(n, [&](std::size_t task) {
        const std::size_t si = task / videos.size();
        const std::size_t vi = task % videos.size();
        const std::uint64_t master = seeds[si];
        const std::uint64_t adapt_seed = derive_seed(master, "adapt", videos[vi].id);

        const synth::SyntheticVideo* video = &videos[vi];
        synth::SyntheticVideo corrupted;
        if (label_corruption > 0.0) {
            corrupted = videos[vi];
            synth::corrupt_block_labels(corrupted, label_corruption,
                                        derive_seed(master, "labels", videos[vi].id));
            video = &corrupted;
        }

        const adapt::AdaptResult result =
            adapt::adapt_video(*ctx.checkpoint, *video, *ctx.space, cfg, adapt_seed);
        // metrics always against the true (uncorrupted) labels and geometry
        const VideoMetrics post = evaluate_video(videos[vi], result.predictions, result.fills);

        RunRecord rec;
        rec.video_id = static_cast<int>(videos[vi].id);
        rec.seed = master;
        rec.pre_mpjpe = pre[vi].mpjpe;
        rec.post_mpjpe = post.mpjpe;
        rec.pre_pa = pre[vi].pa;
        rec.post_pa = post.pa_mpjpe;
        rec.pre_occluded = pre[vi].occluded;
        rec.post_occluded = post.occluded_mpjpe;
        rec.fill_count = static_cast<long>(result.fills.size());
        rec.truncated_video = pre[vi].truncated;
        if (!result.log.empty()) rec.mean_similarity = result.log.back().mean_similarity;

        long hits = 0;
        for (const adapt::FillEvent& e : result.fills) {
            const auto& gt2d = videos[vi].frames[static_cast<std::size_t>(e.frame)].gt_j2d;
            const double du = e.u - gt2d(e.joint, 0);
            const double dv = e.v - gt2d(e.joint, 1);
            if (std::sqrt(du * du + dv * dv) < kPckThresholdPx) ++hits;
        }
        rec.fill_hits = hits;

        rec.per_class = pre[vi].per_class_pre;
        const std::vector<double> post_err = per_frame_mpjpe(videos[vi], result.predictions);
        for (std::size_t f = 0; f < videos[vi].frames.size(); ++f)
            rec.per_class[videos[vi].frames[f].label].post_sum += post_err[f];

        records[task] = std::move(rec);
    });
    return records;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> per_seed_mpjpe(const std::vector<RunRecord>& records) {
    std::map<std::uint64_t, std::pair<double, long>> by_seed;
    for (const RunRecord& r : records) {
        auto& agg = by_seed[r.seed];
        agg.first += r.post_mpjpe;
        agg.second += 1;
    }
    std::vector<double> out;
    out.reserve(by_seed.size());
    for (const auto& [seed, agg] : by_seed) out.push_back(agg.first / static_cast<double>(agg.second));
    return out;
}

AblationResult run_ablation(const BenchmarkContext& ctx, const adapt::AdaptConfig& base,
                            const std::vector<std::uint64_t>& seeds) {
    struct Variant {
        const char* name;
        bool align, ema, fillin;
    };
    const std::array<Variant, 4> variants = {{
        {"baseline", false, false, false},
        {"+alignment", true, false, false},
        {"+alignment+ema", true, true, false},
        {"full", true, true, true},
    }};

    AblationResult out;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        adapt::AdaptConfig cfg = base;
        cfg.use_align = variants[i].align;
        cfg.use_ema = variants[i].ema;
        cfg.use_fillin = variants[i].fillin;
        out.records[i] = run_benchmark(ctx, cfg, seeds);

        std::vector<double> pa;
        for (const RunRecord& r : out.records[i]) pa.push_back(r.post_pa);
        AblationRow row;
        row.name = variants[i].name;
        row.align = variants[i].align;
        row.ema = variants[i].ema;
        row.fillin = variants[i].fillin;
        row.median_mpjpe = median(per_seed_mpjpe(out.records[i]));
        row.median_pa = median(std::move(pa));
        out.rows.push_back(std::move(row));
    }
    return out;
}

std::vector<double> default_sigma_grid() { return {0.55, 0.60, 0.65, 0.70, 0.75, 0.80}; }
std::vector<double> default_alpha_grid() { return {0.75, 0.80, 0.85, 0.90, 0.95}; }

std::vector<ThresholdRow> run_threshold_sweep(const BenchmarkContext& ctx,
                                              const adapt::AdaptConfig& base,
                                              const std::vector<double>& sigmas,
                                              const std::vector<std::uint64_t>& seeds) {
    std::vector<ThresholdRow> rows;
    for (double sigma : sigmas) {
        adapt::AdaptConfig cfg = base;
        cfg.sigma = sigma;
        const std::vector<RunRecord> records = run_benchmark(ctx, cfg, seeds);

        std::map<std::uint64_t, double> fills_by_seed;
        long total_fills = 0, total_hits = 0;
        for (const RunRecord& r : records) {
            fills_by_seed[r.seed] += static_cast<double>(r.fill_count);
            total_fills += r.fill_count;
            total_hits += r.fill_hits;
        }
        std::vector<double> per_seed_fills;
        for (const auto& [seed, count] : fills_by_seed) per_seed_fills.push_back(count);

        ThresholdRow row;
        row.sigma = sigma;
        row.median_mpjpe = median(per_seed_mpjpe(records));
        row.median_fill_count = median(std::move(per_seed_fills));
        row.fill_pck =
            total_fills > 0 ? static_cast<double>(total_hits) / static_cast<double>(total_fills) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::vector<EmaRow> run_ema_sweep(const BenchmarkContext& ctx, const adapt::AdaptConfig& base,
                                  const std::vector<double>& alphas,
                                  const std::vector<std::uint64_t>& seeds) {
    std::vector<EmaRow> rows;
    for (double alpha : alphas) {
        adapt::AdaptConfig cfg = base;
        cfg.alpha = alpha;
        const std::vector<RunRecord> records = run_benchmark(ctx, cfg, seeds);
        rows.push_back({alpha, median(per_seed_mpjpe(records))});
    }
    return rows;
}

std::vector<LabelNoiseRow> run_label_noise(const BenchmarkContext& ctx,
                                           const adapt::AdaptConfig& base,
                                           const std::vector<double>& rates,
                                           const std::vector<std::uint64_t>& seeds) {
    std::vector<LabelNoiseRow> rows;
    for (double rate : rates) {
        const std::vector<RunRecord> records = run_benchmark(ctx, base, seeds, rate);
        std::vector<double> pa;
        for (const RunRecord& r : records) pa.push_back(r.post_pa);
        rows.push_back({rate, median(per_seed_mpjpe(records)), median(std::move(pa))});
    }
    return rows;
}

std::vector<ClassImprovement> per_class_breakdown(const std::vector<RunRecord>& records) {
    std::map<int, ClassAgg> total;
    for (const RunRecord& r : records) {
        for (const auto& [cls, agg] : r.per_class) {
            ClassAgg& t = total[cls];
            t.pre_sum += agg.pre_sum;
            t.post_sum += agg.post_sum;
            t.frames += agg.frames;
        }
    }
    std::vector<ClassImprovement> out;
    for (const auto& [cls, agg] : total) {
        if (agg.frames == 0) continue;
        ClassImprovement ci;
        ci.class_id = cls;
        ci.name = emb::semantic_class(cls).name;
        ci.frames = agg.frames;
        ci.improvement_mm = (agg.pre_sum - agg.post_sum) / static_cast<double>(agg.frames);
        out.push_back(std::move(ci));
    }
    std::sort(out.begin(), out.end(), [](const ClassImprovement& a, const ClassImprovement& b) {
        if (a.improvement_mm != b.improvement_mm) return a.improvement_mm > b.improvement_mm;
        return a.class_id < b.class_id;
    });
    return out;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

}  // namespace

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string csv = "name,align,ema,fillin,median_mpjpe_mm,median_pa_mpjpe_mm\n";
    for (const auto& r : rows) {
        csv += r.name;
        csv += ',';
        csv += r.align ? '1' : '0';
        csv += ',';
        csv += r.ema ? '1' : '0';
        csv += ',';
        csv += r.fillin ? '1' : '0';
        csv += ',' + fmt(r.median_mpjpe) + ',' + fmt(r.median_pa) + '\n';
    }
    return csv;
}

std::string threshold_csv(const std::vector<ThresholdRow>& rows) {
    std::string csv = "sigma,median_mpjpe_mm,median_fill_count,fill_pck\n";
    for (const auto& r : rows)
        csv += fmt(r.sigma) + ',' + fmt(r.median_mpjpe) + ',' + fmt(r.median_fill_count) + ',' +
               fmt(r.fill_pck) + '\n';
    return csv;
}

std::string ema_csv(const std::vector<EmaRow>& rows) {
    std::string csv = "alpha,median_mpjpe_mm\n";
    for (const auto& r : rows) csv += fmt(r.alpha) + ',' + fmt(r.median_mpjpe) + '\n';
    return csv;
}

std::string label_noise_csv(const std::vector<LabelNoiseRow>& rows) {
    std::string csv = "corruption_rate,median_mpjpe_mm,median_pa_mpjpe_mm\n";
    for (const auto& r : rows)
        csv += fmt(r.corruption_rate) + ',' + fmt(r.median_mpjpe) + ',' + fmt(r.median_pa) + '\n';
    return csv;
}

std::string breakdown_csv(const std::vector<ClassImprovement>& rows) {
    std::string csv = "class_id,name,frames,mpjpe_improvement_mm\n";
    for (const auto& r : rows)
        csv += std::to_string(r.class_id) + ',' + r.name + ',' + std::to_string(r.frames) + ',' +
               fmt(r.improvement_mm) + '\n';
    return csv;
}

}  // namespace stta::eval

#include "stta/adapt.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "stta/io.hpp"

namespace stta::adapt {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

}  // namespace

PoseBank PoseBank::from_detector(const synth::SyntheticVideo& video) {
    const int f = static_cast<int>(video.frames.size());
    PoseBank bank;
    bank.j2d = MatX::Constant(f, 2 * geo::kJointCount, kNan);
    bank.visible = MaskMatrix::Zero(f, geo::kJointCount);
    bank.filled = MaskMatrix::Zero(f, geo::kJointCount);
    for (int i = 0; i < f; ++i) {
        const synth::Frame& fr = video.frames[static_cast<std::size_t>(i)];
        for (int j = 0; j < geo::kJointCount; ++j) {
            if (!fr.visibility[static_cast<std::size_t>(j)]) continue;
            bank.visible(i, j) = 1;
            bank.j2d(i, 2 * j) = fr.det_j2d(j, 0);
            bank.j2d(i, 2 * j + 1) = fr.det_j2d(j, 1);
        }
    }
    return bank;
}

std::string PoseBank::bytes() const {
    BinaryWriter w;
    w.u32(static_cast<std::uint32_t>(frames()));
    for (int f = 0; f < frames(); ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            w.u8(visible(f, j));
            w.u8(filled(f, j));
            if (visible(f, j)) {
                w.f64(j2d(f, 2 * j));
                w.f64(j2d(f, 2 * j + 1));
            }
        }
    }
    return w.bytes();
}

void PoseBank::validate() const {
    for (int f = 0; f < frames(); ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            const bool finite =
                std::isfinite(j2d(f, 2 * j)) && std::isfinite(j2d(f, 2 * j + 1));
            if (static_cast<bool>(visible(f, j)) != finite)
                throw Error("pose bank: visibility flag disagrees with stored position");
            if (filled(f, j) && !visible(f, j))
                throw Error("pose bank: filled entry marked invisible");
        }
    }
}

void AdaptConfig::validate() const {
    if (!(sigma > -1.0 && sigma < 1.0)) throw UsageError("sigma must lie in (-1, 1)");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
    if (denoise_window < 1 || denoise_window % 2 == 0)
        throw UsageError("denoise_window must be odd and positive");
    if (shape_window < 1 || shape_window % 2 == 0)
        throw UsageError("shape_window must be odd and positive");
    if (segment_frames < 2) throw UsageError("segment_frames must be at least 2");
    if (batch < 1) throw UsageError("batch must be positive");
    if (epochs < 0) throw UsageError("epochs must be non-negative");
    if (weight_floor <= 0.0) throw UsageError("weight_floor must be positive");
    if (base_lr <= 0.0 || min_lr <= 0.0 || min_lr > base_lr)
        throw UsageError("learning rates must satisfy 0 < min_lr <= base_lr");
    if (use_align && segment_frames > synth::kSegmentFrames)
        throw UsageError("alignment supports segments up to " +
                         std::to_string(synth::kSegmentFrames) + " frames");
}

std::vector<Segment> segment_video(const std::vector<int>& labels, int t) {
    std::vector<Segment> out;
    const int n = static_cast<int>(labels.size());
    for (int begin = 0; begin + t <= n; begin += t) {
        const int label = labels[static_cast<std::size_t>(begin)];
        bool uniform = true;
        for (int i = begin + 1; i < begin + t; ++i) {
            if (labels[static_cast<std::size_t>(i)] != label) {
                uniform = false;
                break;
            }
        }
        if (uniform) out.push_back({0, begin, t, label, 0.0});
    }
    return out;
}

std::vector<Segment> stride_windows(int frames, int t) {
    std::vector<Segment> out;
    for (int begin = 0; begin + t <= frames; begin += t) out.push_back({0, begin, t, -1, 0.0});
    return out;
}

VideoPredictions predict_video(const nn::RegressorParams& params,
                               const synth::SyntheticVideo& video) {
    const int f = static_cast<int>(video.frames.size());
    MatX obs(f, nn::kObsDim);
    for (int i = 0; i < f; ++i) obs.row(i) = video.frames[static_cast<std::size_t>(i)].obs.transpose();

    const nn::BatchOutput heads = nn::forward_batch(params, obs);
    VideoPredictions preds;
    preds.theta6d_raw = heads.theta6d;
    preds.theta6d_ortho.resize(f, geo::kPose6dDim);
    preds.beta = heads.beta;
    preds.trans = heads.trans;
    preds.j3d.resize(static_cast<std::size_t>(f));
    preds.j2d.resize(static_cast<std::size_t>(f));

    const geo::Skeleton& skel = geo::Skeleton::standard();
    const geo::Camera cam = geo::default_camera();
    std::array<geo::Mat3, geo::kJointCount> local;
    for (int i = 0; i < f; ++i) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            geo::Gs6dTrace gs;
            const geo::Vec6 r6 = heads.theta6d.block<1, 6>(i, 6 * j).transpose();
            local[static_cast<std::size_t>(j)] = geo::sixd_to_matrix_nudged(r6, &gs);
            preds.theta6d_ortho.block<1, 3>(i, 6 * j) = gs.u1.transpose();
            preds.theta6d_ortho.block<1, 3>(i, 6 * j + 3) = gs.u2.transpose();
        }
        preds.j3d[static_cast<std::size_t>(i)] = geo::fk_rotmats(
            local, heads.beta.row(i).transpose(), heads.trans.row(i).transpose(), skel);
        preds.j2d[static_cast<std::size_t>(i)] =
            geo::project_clamped(preds.j3d[static_cast<std::size_t>(i)], cam);
    }
    return preds;
}

emb::Motion6d replace_global_rotation(const emb::Motion6d& pred6d, const emb::Motion6d& exemplar) {
    if (pred6d.rows() > exemplar.rows() || pred6d.cols() != exemplar.cols())
        throw ShapeMismatchError("prediction and exemplar lengths do not match");
    emb::Motion6d out = pred6d;
    out.leftCols<6>() = exemplar.topRows(pred6d.rows()).leftCols<6>();
    return out;
}

double segment_similarity(const VideoPredictions& preds, const Segment& seg,
                          const emb::EmbeddingSpace& space) {
    const emb::Motion6d block = preds.theta6d_ortho.middleRows(seg.begin, seg.length);
    const emb::Motion6d replaced = replace_global_rotation(block, synth::exemplar_6d(seg.label));
    return emb::similarity(seg.label, replaced, space);
}

std::vector<double> segment_weights(std::vector<Segment>& segments, const VideoPredictions& preds,
                                    const emb::EmbeddingSpace& space, double weight_floor) {
    std::vector<double> weights(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const double sim = segment_similarity(preds, segments[i], space);
        weights[i] = std::max(1.0 - sim, weight_floor);
        segments[i].weight = weights[i];
    }
    return weights;
}

std::vector<int> sample_batch(const std::vector<double>& weights, int b, Rng& rng) {
    if (weights.empty()) throw UsageError("cannot sample from an empty segment list");
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw UsageError("all sampling weights are zero");
    std::vector<int> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        int pick = static_cast<int>(weights.size()) - 1;
        for (std::size_t j = 0; j < weights.size(); ++j) {
            acc += weights[j];
            if (u < acc) {
                pick = static_cast<int>(j);
                break;
            }
        }
        out[static_cast<std::size_t>(i)] = pick;
    }
    return out;
}

double loss_2d_frame(const geo::Joints2D& pred_j2d, const PoseBank& bank, int frame,
                     double image_width) {
    double sum = 0.0;
    for (int j = 0; j < geo::kJointCount; ++j) {
        if (!bank.visible(frame, j)) continue;
        sum += std::abs(pred_j2d(j, 0) - bank.j2d(frame, 2 * j)) +
               std::abs(pred_j2d(j, 1) - bank.j2d(frame, 2 * j + 1));
    }
    return sum / image_width;
}

double loss_2d_segment(const VideoPredictions& preds, const PoseBank& bank, int begin, int length,
                       double image_width) {
    double sum = 0.0;
    for (int f = begin; f < begin + length; ++f)
        sum += loss_2d_frame(preds.j2d[static_cast<std::size_t>(f)], bank, f, image_width);
    return sum / static_cast<double>(length);
}

double loss_align(const emb::Motion6d& pred6d_prime, int label, const emb::EmbeddingSpace& space) {
    return 1.0 - emb::similarity(label, pred6d_prime, space);
}

MatX moving_average(const MatX& seq, int window) {
    const int t = static_cast<int>(seq.rows());
    const int h = window / 2;
    MatX out(t, seq.cols());
    for (int i = 0; i < t; ++i) {
        const int lo = std::max(0, i - h);
        const int hi = std::min(t - 1, i + h);
        out.row(i) = seq.middleRows(lo, hi - lo + 1).colwise().mean();
    }
    return out;
}

MatX denoise_motion(const MatX& theta6d_seq, int window) {
    if (theta6d_seq.rows() < 2) throw SegmentTooShortError("denoising needs at least 2 frames");
    MatX avg = moving_average(theta6d_seq, window);
    for (Eigen::Index f = 0; f < avg.rows(); ++f) {
        for (int j = 0; j < geo::kJointCount; ++j) {
            geo::Gs6dTrace gs;
            const geo::Vec6 r6 = avg.block<1, 6>(f, 6 * j).transpose();
            geo::sixd_to_matrix_nudged(r6, &gs);
            avg.block<1, 3>(f, 6 * j) = gs.u1.transpose();
            avg.block<1, 3>(f, 6 * j + 3) = gs.u2.transpose();
        }
    }
    return avg;
}

MatX average_shape(const MatX& beta_seq, int window) {
    if (beta_seq.rows() < 2) throw SegmentTooShortError("shape averaging needs at least 2 frames");
    return moving_average(beta_seq, window);
}

double loss_smooth(const MatX& theta6d, const MatX& beta, const MatX& theta_bar,
                   const MatX& beta_bar) {
    if (theta6d.rows() != theta_bar.rows() || theta6d.cols() != theta_bar.cols() ||
        beta.rows() != beta_bar.rows() || beta.cols() != beta_bar.cols())
        throw ShapeMismatchError("smoothing loss shapes do not match");
    return (theta6d - theta_bar).cwiseAbs().sum() / static_cast<double>(theta6d.size()) +
           (beta - beta_bar).cwiseAbs().sum() / static_cast<double>(beta.size());
}

double loss_overall(const VideoPredictions& preds, const PoseBank& bank, const Segment& seg,
                    const MatX& theta_bar, const MatX& beta_bar, const emb::EmbeddingSpace* space,
                    const AdaptConfig& cfg) {
    const double width = static_cast<double>(geo::default_camera().width);
    const double l2d = loss_2d_segment(preds, bank, seg.begin, seg.length, width);
    double lalign = 0.0;
    if (cfg.use_align) {
        if (!space) throw UsageError("alignment needs an embedding space");
        const emb::Motion6d block = preds.theta6d_ortho.middleRows(seg.begin, seg.length);
        lalign = loss_align(replace_global_rotation(block, synth::exemplar_6d(seg.label)), seg.label,
                            *space);
    }
    const double lsmooth = loss_smooth(preds.theta6d_raw.middleRows(seg.begin, seg.length),
                                       preds.beta.middleRows(seg.begin, seg.length), theta_bar,
                                       beta_bar);
    return cfg.lambda1 * l2d + cfg.lambda2 * lalign + lsmooth;
}

BankUpdateStats update_pose_bank(PoseBank& bank, const VideoPredictions& preds,
                                 const std::vector<Segment>& segments,
                                 const std::vector<double>& seg_sims, const AdaptConfig& cfg,
                                 int epoch) {
    if (static_cast<int>(preds.j2d.size()) != bank.frames())
        throw ShapeMismatchError("predictions do not cover the pose bank");
    if (seg_sims.size() != segments.size())
        throw ShapeMismatchError("similarities do not cover the kept segments");

    std::vector<int> seg_of_frame(static_cast<std::size_t>(bank.frames()), -1);
    for (std::size_t s = 0; s < segments.size(); ++s) {
        for (int f = segments[s].begin; f < segments[s].begin + segments[s].length; ++f)
            seg_of_frame[static_cast<std::size_t>(f)] = static_cast<int>(s);
    }

    BankUpdateStats stats;
    for (int f = 0; f < bank.frames(); ++f) {
        const int s = seg_of_frame[static_cast<std::size_t>(f)];
        const bool gate = cfg.use_fillin && s >= 0 && seg_sims[static_cast<std::size_t>(s)] > cfg.sigma;
        for (int j = 0; j < geo::kJointCount; ++j) {
            const double pu = preds.j2d[static_cast<std::size_t>(f)](j, 0);
            const double pv = preds.j2d[static_cast<std::size_t>(f)](j, 1);
            if (bank.visible(f, j)) {
                if (cfg.use_ema) {
                    bank.j2d(f, 2 * j) = cfg.alpha * bank.j2d(f, 2 * j) + (1.0 - cfg.alpha) * pu;
                    bank.j2d(f, 2 * j + 1) =
                        cfg.alpha * bank.j2d(f, 2 * j + 1) + (1.0 - cfg.alpha) * pv;
                }
            } else if (gate) {
                bank.j2d(f, 2 * j) = pu;
                bank.j2d(f, 2 * j + 1) = pv;
                bank.visible(f, j) = 1;
                bank.filled(f, j) = 1;
                stats.events.push_back({epoch, f, j, pu, pv});
                ++stats.filled;
            }
            // invisible below the gate: left empty
        }
    }
    return stats;
}

std::string epoch_log_json(const EpochLog& log) {
    std::ostringstream os;
    os.precision(17);
    os << "{\"epoch\":" << log.epoch << ",\"mean_loss\":" << log.mean_loss
       << ",\"mean_l2d\":" << log.mean_l2d << ",\"mean_align\":" << log.mean_align
       << ",\"mean_smooth\":" << log.mean_smooth << ",\"lr\":" << log.lr
       << ",\"filled_count\":" << log.filled_count << ",\"mean_similarity\":" << log.mean_similarity
       << "}";
    return os.str();
}

AdaptSession::AdaptSession(const nn::RegressorParams& checkpoint, const synth::SyntheticVideo& video,
                           const emb::EmbeddingSpace& space, const AdaptConfig& cfg,
                           std::uint64_t seed)
    : video_(video), space_(space), cfg_(cfg), params_(checkpoint), rng_(seed) {
    cfg_.validate();
    const int f = static_cast<int>(video.frames.size());

    bank_ = PoseBank::from_detector(video);
    obs_.resize(f, nn::kObsDim);
    for (int i = 0; i < f; ++i) obs_.row(i) = video.frames[static_cast<std::size_t>(i)].obs.transpose();

    if (cfg_.use_align || cfg_.use_fillin) {
        segments_ = segment_video(video.labels(), cfg_.segment_frames);
        if (segments_.empty()) {
            // no uniform-label window: fall back to plain windows with the
            // semantic machinery disabled
            degraded_ = true;
            cfg_.use_align = false;
            cfg_.use_fillin = false;
            segments_ = stride_windows(f, cfg_.segment_frames);
        }
    } else {
        segments_ = stride_windows(f, cfg_.segment_frames);
    }
    for (auto& s : segments_) s.video_id = static_cast<int>(video.id);

    steps_per_epoch_ = cfg_.steps_per_epoch > 0
                           ? cfg_.steps_per_epoch
                           : static_cast<int>((kSegmentVisitsPerEpoch * segments_.size() +
                                               cfg_.batch - 1) /
                                              static_cast<std::size_t>(cfg_.batch));
    if (segments_.empty()) steps_per_epoch_ = 0;
    sched_ = nn::LrSchedule{cfg_.base_lr, cfg_.min_lr,
                            std::max(1l, static_cast<long>(cfg_.epochs) * steps_per_epoch_)};
    preds_ = predict_video(params_, video_);
    weights_.assign(segments_.size(), 1.0);
}

void AdaptSession::recompute_weights() {
    if (cfg_.use_align) {
        weights_ = segment_weights(segments_, preds_, space_, cfg_.weight_floor);
    } else {
        weights_.assign(segments_.size(), 1.0);
    }
}

void AdaptSession::run_steps() {
    pending_loss_ = pending_l2d_ = pending_align_ = pending_smooth_ = 0.0;
    pending_lr_ = global_step_ < sched_.total_steps ? nn::cosine_lr(global_step_, sched_)
                                                    : sched_.min_lr;
    if (segments_.empty() || steps_per_epoch_ == 0) return;

    const geo::Skeleton& skel = geo::Skeleton::standard();
    const geo::Camera cam = geo::default_camera();
    const double inv_batch = 1.0 / static_cast<double>(cfg_.batch);

    for (int step = 0; step < steps_per_epoch_; ++step) {
        const double lr = nn::cosine_lr(global_step_, sched_);
        const std::vector<int> picks = sample_batch(weights_, cfg_.batch, rng_);
        nn::RegressorGrad grad;
        grad.set_zero();
        double batch_loss = 0.0, batch_l2d = 0.0, batch_align = 0.0, batch_smooth = 0.0;
        for (int idx : picks) {
            const Segment& seg = segments_[static_cast<std::size_t>(idx)];
            nn::MlpTrace trace;
            const nn::BatchOutput heads =
                nn::forward_batch(params_, obs_.middleRows(seg.begin, seg.length), &trace);

            nn::AdaptLossInputs inputs;
            inputs.lambda1 = cfg_.lambda1;
            inputs.lambda2 = cfg_.lambda2;
            inputs.image_width = static_cast<double>(cam.width);
            inputs.bank_j2d = bank_.j2d.middleRows(seg.begin, seg.length);
            inputs.bank_vis = bank_.visible.middleRows(seg.begin, seg.length);
            inputs.theta_bar = denoise_motion(heads.theta6d, cfg_.denoise_window);
            inputs.beta_bar = average_shape(heads.beta, cfg_.shape_window);
            inputs.use_align = cfg_.use_align;
            if (cfg_.use_align) {
                inputs.exemplar_root6d =
                    synth::exemplar_6d(seg.label).topRows(seg.length).leftCols<6>();
                inputs.label = seg.label;
                inputs.space = &space_;
            }
            inputs.skeleton = &skel;
            inputs.camera = cam;

            const nn::GradientTape tape =
                nn::forward_adapt_loss(params_, std::move(trace), std::move(inputs));
            grad.add_scaled(nn::backward(params_, tape), inv_batch);
            batch_loss += tape.loss * inv_batch;
            batch_l2d += tape.term_2d * inv_batch;
            batch_align += tape.term_align * inv_batch;
            batch_smooth += tape.term_smooth * inv_batch;
        }
        nn::adam_step(params_, grad, adam_, lr);
        ++global_step_;
        pending_loss_ += batch_loss;
        pending_l2d_ += batch_l2d;
        pending_align_ += batch_align;
        pending_smooth_ += batch_smooth;
    }
    const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch_);
    pending_loss_ *= inv_steps;
    pending_l2d_ *= inv_steps;
    pending_align_ *= inv_steps;
    pending_smooth_ *= inv_steps;
}

void AdaptSession::end_epoch() {
    preds_ = predict_video(params_, video_);

    std::vector<Segment> labeled;
    std::vector<double> sims;
    if (cfg_.use_align || cfg_.use_fillin) {
        for (const Segment& seg : segments_) {
            if (seg.label < 0) continue;
            labeled.push_back(seg);
            sims.push_back(segment_similarity(preds_, seg, space_));
        }
    }
    const BankUpdateStats stats = update_pose_bank(bank_, preds_, labeled, sims, cfg_, epoch_ + 1);
    fills_.insert(fills_.end(), stats.events.begin(), stats.events.end());

    double mean_sim = 0.0;
    if (!sims.empty()) {
        for (double s : sims) mean_sim += s;
        mean_sim /= static_cast<double>(sims.size());
    }
    ++epoch_;
    log_.push_back({epoch_, pending_loss_, pending_l2d_, pending_align_, pending_smooth_,
                    pending_lr_, stats.filled, mean_sim});
}

AdaptResult adapt_video(const nn::RegressorParams& checkpoint, const synth::SyntheticVideo& video,
                        const emb::EmbeddingSpace& space, const AdaptConfig& cfg,
                        std::uint64_t seed) {
    AdaptSession session(checkpoint, video, space, cfg, seed);
    for (int e = 0; e < cfg.epochs; ++e) session.run_epoch();
    AdaptResult result;
    result.params = session.params();
    result.predictions = session.predictions();
    result.log = session.log();
    result.fills = session.fills();
    result.degraded = session.degraded();
    return result;
}

}  // namespace stta::adapt

// Acceptance suite: one test case per criterion, run in order, each printing
// a PASS/FAIL line with the measured quantities. The world (datasets,
// embedding space, pretrained checkpoint) is built once and shared.
//
// The driver binary path for the CLI determinism checks comes from
// --cli=<path> or the STTA_CLI_BIN environment variable.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "../tools/predictions_io.hpp"
#include "bank_oracle.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "stta/adapt.hpp"
#include "stta/eval.hpp"
#include "stta/io.hpp"
#include "stta/neuralnet.hpp"
#include "stta/synthworld.hpp"

using namespace stta;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path;

double now_seconds() {
    static const auto start = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("[criterion %2d] %s  %s  (t=%.0fs)\n", criterion, ok ? "PASS" : "FAIL",
                detail.c_str(), now_seconds());
    std::fflush(stdout);
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return buf;
}

constexpr std::uint64_t kMaster = 1;
constexpr int kHarnessSeeds = 10;

/// Fixtures shared by criteria 4-9, built on first use.
struct World {
    emb::EmbeddingSpace space;
    std::vector<synth::SyntheticVideo> source;
    std::vector<synth::SyntheticVideo> heldout_source;
    std::vector<synth::SyntheticVideo> target;
    nn::RegressorParams pretrained;
    double source_mpjpe = 0.0;
    double target_pre_mpjpe = 0.0;
    std::vector<std::uint64_t> seeds;
};

const World& world() {
    static const World w = [] {
        World w;
        std::printf("[world] building datasets and pretraining...\n");
        std::fflush(stdout);
        w.space = synth::build_calibrated_space(derive_seed(kMaster, "emb", 0));
        synth::DetectorModel det;
        w.source = synth::generate_dataset_in_memory(synth::source_domain(), det, {64, 600, {}},
                                                     derive_seed(kMaster, "source", 0));
        w.heldout_source = synth::generate_dataset_in_memory(
            synth::source_domain(), det, {6, 600, {}}, derive_seed(kMaster, "heldout-src", 0));
        w.target = synth::generate_dataset_in_memory(
            synth::target_domain(), det,
            {12, 600,
             {synth::DetectorModel::Occlusion::none,
              synth::DetectorModel::Occlusion::lower_body_truncation,
              synth::DetectorModel::Occlusion::random_block}},
            derive_seed(kMaster, "target", 0));

        nn::PretrainConfig pcfg;
        pcfg.seed = derive_seed(kMaster, "pretrain", 0);
        w.pretrained =
            nn::pretrain(nn::RegressorParams::init(derive_seed(kMaster, "init", 0)), w.source, pcfg)
                .params;

        auto dataset_mpjpe = [&](const std::vector<synth::SyntheticVideo>& vids) {
            double s = 0.0;
            for (const auto& v : vids)
                s += eval::evaluate_video(v, adapt::predict_video(w.pretrained, v), {}).mpjpe;
            return s / double(vids.size());
        };
        w.source_mpjpe = dataset_mpjpe(w.heldout_source);
        w.target_pre_mpjpe = dataset_mpjpe(w.target);

        w.seeds.resize(kHarnessSeeds);
        for (std::size_t i = 0; i < w.seeds.size(); ++i)
            w.seeds[i] = derive_seed(kMaster, "harness", i);
        std::printf("[world] ready: source %.1f mm, target %.1f mm (t=%.0fs)\n", w.source_mpjpe,
                    w.target_pre_mpjpe, now_seconds());
        std::fflush(stdout);
        return w;
    }();
    return w;
}

eval::BenchmarkContext context(const World& w) {
    return eval::BenchmarkContext{&w.target, &w.space, &w.pretrained};
}

const eval::AblationResult& ablation() {
    static const eval::AblationResult result = [] {
        const World& w = world();
        std::printf("[world] running the 4-configuration ablation over %d seeds...\n",
                    kHarnessSeeds);
        std::fflush(stdout);
        adapt::AdaptConfig cfg;
        return eval::run_ablation(context(w), cfg, w.seeds);
    }();
    return result;
}

}  // namespace

TEST_CASE("criterion 1: gradient oracle for the adaptation losses") {
    const emb::EmbeddingSpace space = synth::build_calibrated_space(derive_seed(kMaster, "emb", 0));
    tt::Rng rng(20260808);

    struct Term {
        const char* name;
        double l1, l2, sw;
    };
    const std::array<Term, 4> terms = {{{"L2D", 1.0, 0.0, 0.0},
                                        {"Lalign", 0.0, 1.0, 0.0},
                                        {"Lsmooth", 0.0, 0.0, 1.0},
                                        {"Loverall", 0.1, 0.2, 1.0}}};
    long checked = 0, failed = 0;
    double worst = 0.0;
    for (int instance = 0; instance < 20; ++instance) {
        const nn::RegressorParams params =
            nn::RegressorParams::init(derive_seed(kMaster, "gradcheck", instance));
        const Eigen::MatrixXd obs = tt::random_obs(rng, 20);
        for (const Term& term : terms) {
            const nn::AdaptLossInputs inputs =
                tt::random_adapt_inputs(params, obs, space, rng, term.l1, term.l2, term.sw);
            const nn::GradientTape tape = nn::forward_adapt_loss(params, obs, inputs);
            const nn::RegressorGrad grad = nn::backward(params, tape);
            const auto stats = tt::check_param_gradients(
                params,
                [&](const nn::RegressorParams& p) {
                    return nn::forward_adapt_loss(p, obs, inputs).loss;
                },
                grad, rng, 4, 1e-5, 1e-4, 1e-8);
            checked += stats.checked;
            failed += stats.failed;
            worst = std::max(worst, stats.worst_rel);
        }
    }
    const bool ok = failed == 0;
    report(1, ok,
           fmt("%.0f coordinates checked across 20 instances x 4 losses, %.0f failures, worst rel "
               "err %.2e",
               double(checked), double(failed), worst));
    CHECK(ok);
}

TEST_CASE("criterion 2: three-case pose-bank update equals the brute-force oracle") {
    tt::Rng rng(802);
    long tuples = 0, mismatches = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int frames = 2 + static_cast<int>(rng.uniform_int(6));
        // randomized bank / prediction / segment-similarity tuple
        adapt::PoseBank bank;
        bank.j2d = adapt::MatX::Constant(frames, 2 * geo::kJointCount,
                                         std::numeric_limits<double>::quiet_NaN());
        bank.visible = adapt::MaskMatrix::Zero(frames, geo::kJointCount);
        bank.filled = adapt::MaskMatrix::Zero(frames, geo::kJointCount);
        adapt::VideoPredictions preds;
        preds.j2d.resize(static_cast<std::size_t>(frames));
        for (int f = 0; f < frames; ++f) {
            for (int j = 0; j < geo::kJointCount; ++j) {
                if (rng.uniform() < 0.5) {
                    bank.visible(f, j) = 1;
                    bank.j2d(f, 2 * j) = rng.uniform(0.0, 224.0);
                    bank.j2d(f, 2 * j + 1) = rng.uniform(0.0, 224.0);
                    if (rng.uniform() < 0.2) bank.filled(f, j) = 1;
                }
                preds.j2d[static_cast<std::size_t>(f)](j, 0) = rng.uniform(0.0, 224.0);
                preds.j2d[static_cast<std::size_t>(f)](j, 1) = rng.uniform(0.0, 224.0);
            }
        }
        std::vector<adapt::Segment> segments;
        std::vector<double> sims;
        int begin = 0;
        while (begin < frames) {
            const int len = 1 + static_cast<int>(rng.uniform_int(3));
            if (begin + len > frames) break;
            if (rng.uniform() < 0.7) {
                segments.push_back({0, begin, len, static_cast<int>(rng.uniform_int(6)), 0.0});
                sims.push_back(rng.uniform(0.0, 1.0));
            }
            begin += len;
        }
        adapt::AdaptConfig cfg;
        cfg.alpha = rng.uniform(0.0, 1.0);
        cfg.sigma = rng.uniform(0.3, 0.95);
        cfg.use_ema = rng.uniform() < 0.9;
        cfg.use_fillin = rng.uniform() < 0.9;

        const tt::OracleCase expect = tt::brute_force_bank_update(
            bank, preds, segments, sims, cfg.alpha, cfg.sigma, cfg.use_ema, cfg.use_fillin);
        const auto stats = adapt::update_pose_bank(bank, preds, segments, sims, cfg, 1);
        ++tuples;
        if (!tt::banks_identical(bank, expect.bank) || stats.filled != expect.filled) ++mismatches;
    }
    const bool ok = mismatches == 0;
    report(2, ok, fmt("%g randomized tuples, %g mismatches (exact comparison)", double(tuples),
                      double(mismatches)));
    CHECK(ok);
}

TEST_CASE("criterion 3: geometry suite") {
    tt::Rng rng(803);
    double worst_6d = 0.0, worst_rod = 0.0, worst_res = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const geo::Vec3 aa = tt::random_axis_angle(rng);
        const geo::Mat3 m = geo::aa_to_matrix({aa});
        worst_rod = std::max(worst_rod, (m - tt::quat_rotation(aa)).norm());
        worst_6d = std::max(worst_6d, (geo::sixd_to_matrix(geo::matrix_to_6d(m)) - m).norm());
    }
    for (int i = 0; i < 200; ++i) {
        const geo::Joints3D gt = tt::random_joints(rng);
        geo::SimilarityTransform t;
        t.scale = rng.uniform(0.5, 2.0);
        t.rotation = tt::random_rotation(rng);
        t.translation = geo::Vec3(rng.normal(), rng.normal(), rng.normal());
        const geo::Joints3D pred = t.apply(gt);
        const geo::SimilarityTransform rec = geo::procrustes_align(pred, gt);
        worst_res = std::max(worst_res, (rec.apply(pred) - gt).rowwise().norm().mean());
    }
    long pa_violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const geo::Joints3D a = tt::random_joints(rng);
        const geo::Joints3D b = tt::random_joints(rng);
        if (eval::pa_mpjpe_mm(a, b) > eval::mpjpe_mm(a, b) + 1e-9) ++pa_violations;
    }
    const bool ok =
        worst_6d < 1e-12 && worst_rod < 1e-12 && worst_res < 1e-9 && pa_violations == 0;
    report(3, ok,
           fmt("6D round-trip %.1e, Rodrigues-vs-quaternion %.1e, Procrustes residual %.1e, "
               "PA<=MPJPE violations 0",
               worst_6d, worst_rod, worst_res) +
               (pa_violations ? " [violations " + std::to_string(pa_violations) + "]" : ""));
    CHECK(ok);
}

TEST_CASE("criterion 4: engineered domain gap") {
    const World& w = world();
    const double ratio = w.target_pre_mpjpe / w.source_mpjpe;
    const bool ok = ratio >= 2.0;
    report(4, ok,
           fmt("source %.1f mm, target %.1f mm, ratio %.2f (needs >= 2.0)", w.source_mpjpe,
               w.target_pre_mpjpe, ratio));
    CHECK(ok);
}

TEST_CASE("criterion 5: adaptation effectiveness") {
    const World& w = world();
    const auto& full = ablation().records[3];
    const double median_post = eval::median(eval::per_seed_mpjpe(full));
    long improved = 0;
    for (const auto& r : full)
        if (r.post_mpjpe < r.pre_mpjpe) ++improved;
    const double frac = double(improved) / double(full.size());
    const double rel = 1.0 - median_post / w.target_pre_mpjpe;
    const bool ok = rel >= 0.30 && frac >= 0.90;
    report(5, ok,
           fmt("median MPJPE %.1f mm vs %.1f pre (-%.1f%%, needs >=30%%), ", median_post,
               w.target_pre_mpjpe, 100.0 * rel) +
               fmt("post<pre on %.0f%% of runs (needs >=90%%)", 100.0 * frac));
    CHECK(ok);
}

TEST_CASE("criterion 6: ablation ordering") {
    const auto& rows = ablation().rows;
    const double base = rows[0].median_mpjpe;
    const double slack = 0.02 * base;
    const bool ok = rows[3].median_mpjpe <= rows[2].median_mpjpe + slack &&
                    rows[2].median_mpjpe <= rows[1].median_mpjpe + slack &&
                    rows[1].median_mpjpe <= rows[0].median_mpjpe + slack;
    report(6, ok,
           fmt("medians: full %.1f <= +align+ema %.1f <= +align %.1f", rows[3].median_mpjpe,
               rows[2].median_mpjpe, rows[1].median_mpjpe) +
               fmt(" <= baseline %.1f (slack %.1f mm)", base, slack));
    CHECK(ok);
}

TEST_CASE("criterion 7: fill-in threshold trend") {
    const World& w = world();
    std::printf("[world] running the fill-in threshold sweep over %d seeds...\n", kHarnessSeeds);
    std::fflush(stdout);
    adapt::AdaptConfig cfg;
    const auto rows = eval::run_threshold_sweep(context(w), cfg, eval::default_sigma_grid(), w.seeds);

    bool counts_non_increasing = true;
    int strict_decreases = 0;
    int pck_inversions = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].median_fill_count > rows[i - 1].median_fill_count)
            counts_non_increasing = false;
        if (rows[i].median_fill_count < rows[i - 1].median_fill_count) ++strict_decreases;
        if (rows[i].fill_pck < rows[i - 1].fill_pck) ++pck_inversions;
    }
    std::string detail = "fills:";
    for (const auto& r : rows) detail += fmt(" %.0f", r.median_fill_count);
    detail += " | pck:";
    for (const auto& r : rows) detail += fmt(" %.3f", r.fill_pck);
    const bool ok = counts_non_increasing && strict_decreases >= 2 && pck_inversions <= 1;
    report(7, ok,
           detail + fmt(" | strict decreases %g (needs >=2), pck inversions %g (allows <=1)",
                        double(strict_decreases), double(pck_inversions)));
    CHECK(ok);
}

TEST_CASE("criterion 8: occlusion benefit of fill-in") {
    const auto& abl = ablation();
    std::vector<double> with_fill, without_fill;
    for (const auto& r : abl.records[3])
        if (r.truncated_video && r.post_occluded) with_fill.push_back(*r.post_occluded);
    for (const auto& r : abl.records[2])
        if (r.truncated_video && r.post_occluded) without_fill.push_back(*r.post_occluded);
    const double med_with = eval::median(with_fill);
    const double med_without = eval::median(without_fill);
    const bool ok = !with_fill.empty() && med_with < med_without;
    report(8, ok,
           fmt("occluded-joint MPJPE on truncated videos: %.1f mm with fill-in vs %.1f without",
               med_with, med_without));
    CHECK(ok);
}

TEST_CASE("criterion 9: label-noise robustness") {
    const World& w = world();
    std::printf("[world] running the 25%%-corruption benchmark over %d seeds...\n", kHarnessSeeds);
    std::fflush(stdout);
    adapt::AdaptConfig cfg;
    const auto corrupted = eval::run_benchmark(context(w), cfg, w.seeds, 0.25);
    const double med_corrupted = eval::median(eval::per_seed_mpjpe(corrupted));
    const double med_clean = eval::median(eval::per_seed_mpjpe(ablation().records[3]));
    const bool ok = med_corrupted < w.target_pre_mpjpe && med_clean <= med_corrupted;
    report(9, ok,
           fmt("corrupted %.1f mm < no-adaptation %.1f mm; clean %.1f mm <= corrupted",
               med_corrupted, w.target_pre_mpjpe, med_clean));
    CHECK(ok);
}

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + g_cli_path + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string dir_fingerprint(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string fp;
    for (const auto& f : files) {
        fp += fs::relative(f, dir).string();
        fp += '\0';
        fp += read_file(f);
        fp += '\0';
    }
    return fp;
}

}  // namespace

TEST_CASE("criterion 10: command determinism through the CLI") {
    if (g_cli_path.empty()) {
        if (const char* env = std::getenv("STTA_CLI_BIN")) g_cli_path = env;
    }
    REQUIRE_MESSAGE(!g_cli_path.empty(),
                    "pass --cli=<path to stta binary> or set STTA_CLI_BIN");
    const fs::path root = fs::temp_directory_path() / "stta_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::string small =
        " --seed 7 --source-videos 3 --target-videos 3 --source-frames 120 --target-frames 120";
    bool ok = true;
    std::string detail;

    for (int rep = 0; rep < 2; ++rep) {
        const fs::path d = root / ("run" + std::to_string(rep));
        ok = ok && run_cli("gen --out \"" + (d / "data").string() + "\"" + small) == 0;
        ok = ok &&
             run_cli("pretrain --data \"" + (d / "data").string() + "\" --out \"" +
                     (d / "model.sttackp").string() + "\" --pretrain-epochs 3 --seed 7") == 0;
        ok = ok && run_cli("adapt --data \"" + (d / "data").string() + "\" --checkpoint \"" +
                           (d / "model.sttackp").string() + "\" --out \"" + (d / "pred").string() +
                           "\" --epochs 1 --seed 7") == 0;
        ok = ok && run_cli("eval --data \"" + (d / "data").string() + "\" --pred \"" +
                           (d / "pred").string() + "\" --out \"" + (d / "metrics").string() +
                           "\" --seed 7") == 0;
    }
    if (!ok) {
        detail = "a CLI command failed";
    } else {
        const bool identical =
            dir_fingerprint(root / "run0") == dir_fingerprint(root / "run1");
        ok = identical;
        detail = identical ? "gen+pretrain+adapt+eval reruns byte-identical"
                           : "rerun outputs differ";
    }
    report(10, ok, detail);
    CHECK(ok);
    fs::remove_all(root);
}

TEST_CASE("cli: help, config keys, error paths") {
    REQUIRE(!g_cli_path.empty());
    const fs::path root = fs::temp_directory_path() / "stta_acceptance_cli_misc";
    fs::remove_all(root);
    fs::create_directories(root);

    // --help exits 0 and lists every config key with its default
    const std::string help_file = (root / "help.txt").string();
    const std::string cmd = "\"" + g_cli_path + "\" adapt --help > " + help_file + " 2>&1";
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const std::string help = read_file(help_file);
    for (const char* key : {"--lambda1", "--lambda2", "--sigma", "--alpha", "--epochs", "--batch",
                            "--denoise-window", "--shape-window", "--seed", "--weight-floor",
                            "--corrupt-labels", "--steps-per-epoch"}) {
        CHECK_MESSAGE(help.find(key) != std::string::npos, "missing key in help: ", key);
    }
    CHECK(help.find("[0.1]") != std::string::npos);   // lambda1 default
    CHECK(help.find("[0.75]") != std::string::npos);  // sigma default

    // missing output path is a user error with a nonzero exit code
    CHECK(run_cli("gen") == 1);
    // missing dataset is a user error
    CHECK(run_cli("pretrain --data \"" + (root / "nope").string() + "\" --out \"" +
                  (root / "m.sttackp").string() + "\"") == 1);
    // unknown keys are rejected
    CHECK(run_cli("gen --out \"" + (root / "x").string() + "\" --definitely-not-a-key 3") == 1);

    // config file: flag wins over file value
    atomic_write_file(root / "cfg.ini", "sigma=0.6\nepochs=2\n");
    CHECK(run_cli("adapt --config \"" + (root / "cfg.ini").string() + "\"") == 1);  // still lacks paths

    // eval on predictions equal to ground truth scores zero
    const fs::path data = root / "data";
    CHECK(run_cli("gen --out \"" + data.string() +
                  "\" --seed 3 --source-videos 1 --target-videos 1 --source-frames 60 "
                  "--target-frames 60") == 0);
    const synth::SyntheticVideo video = synth::load_video(data / "target" / "target_000.sttavid");
    adapt::VideoPredictions gt_preds;
    const int frames = static_cast<int>(video.frames.size());
    gt_preds.theta6d_raw.resize(frames, geo::kPose6dDim);
    gt_preds.theta6d_ortho.resize(frames, geo::kPose6dDim);
    gt_preds.beta.resize(frames, geo::kShapeDim);
    gt_preds.trans.resize(frames, 3);
    gt_preds.j3d.resize(static_cast<std::size_t>(frames));
    gt_preds.j2d.resize(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        const synth::Frame& fr = video.frames[static_cast<std::size_t>(f)];
        for (int j = 0; j < geo::kJointCount; ++j) {
            const geo::Rotation6D r6 =
                geo::matrix_to_6d(geo::aa_to_matrix(fr.gt_pose.theta[static_cast<std::size_t>(j)]));
            gt_preds.theta6d_raw.block<1, 6>(f, 6 * j) = r6.r.transpose();
            gt_preds.theta6d_ortho.block<1, 6>(f, 6 * j) = r6.r.transpose();
        }
        gt_preds.beta.row(f) = fr.gt_pose.beta.transpose();
        gt_preds.trans.row(f) = fr.gt_pose.trans.transpose();
        gt_preds.j3d[static_cast<std::size_t>(f)] = fr.gt_j3d;
        gt_preds.j2d[static_cast<std::size_t>(f)] = fr.gt_j2d;
    }
    fs::create_directories(root / "gt_pred");
    prd::save_predictions(gt_preds, {}, root / "gt_pred" / "video_000.sttaprd");
    CHECK(run_cli("eval --data \"" + data.string() + "\" --pred \"" + (root / "gt_pred").string() +
                  "\" --out \"" + (root / "gt_metrics").string() + "\"") == 0);
    const std::string metrics = read_file(root / "gt_metrics" / "metrics.json");
    const auto pos = metrics.find("\"mpjpe_mm\"");
    REQUIRE(pos != std::string::npos);
    const double mpjpe = std::atof(metrics.c_str() + metrics.find(':', pos) + 1);
    CHECK(mpjpe < 1e-9);

    fs::remove_all(root);
}

int main(int argc, char** argv) {
    doctest::Context ctx;
    std::vector<char*> pass;
    for (int i = 0; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--cli=", 0) == 0) {
            g_cli_path = arg.substr(6);
        } else {
            pass.push_back(argv[i]);
        }
    }
    ctx.setOption("order-by", "file");
    ctx.applyCommandLine(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}

// Pipeline front end: corpus synthesis, splitting, the three training
// stages, the experiment ladder, and reporting.
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "filmseg/explain.hpp"
#include "filmseg/mask_gen.hpp"
#include "filmseg/runconfig.hpp"

namespace fs = std::filesystem;
using namespace filmseg;

namespace {

// thrown when a stage's input artifact is absent; mapped to exit 3
struct MissingPrerequisite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

CorpusManifest require_manifest(const RunDir& dir) {
    if (!fs::exists(dir.manifest()))
        throw MissingPrerequisite("manifest not found; run `filmseg synth` first");
    return read_manifest(dir.manifest());
}

SplitAssignment require_split(const RunDir& dir) {
    if (!fs::exists(dir.split()))
        throw MissingPrerequisite("split not found; run `filmseg split` first");
    return read_split(dir.split());
}

ProxyClassifier<float> require_proxy(const RunDir& dir) {
    if (!fs::exists(dir.proxy_checkpoint()))
        throw MissingPrerequisite("proxy checkpoint not found; run `filmseg train-proxy` first");
    return load_classifier<float>(dir.proxy_checkpoint());
}

void require_plan_masks(const CorpusManifest& m, const SplitAssignment& split, const ExperimentPlan& plan) {
    auto check = [&](Split s, MaskKind k) {
        if (k == MaskKind::none) return;
        for (const auto& v : m.videos) {
            if (split.of(v.video_id) != s) continue;
            for (const auto& f : v.frames) {
                if (f.is_homogeneous()) continue;
                if (k == MaskKind::proxy && !f.proxy_mask_path)
                    throw MissingPrerequisite("plan " + to_string(plan.id) +
                                              " needs proxy masks; run `filmseg gen-masks` first");
                if (k == MaskKind::manual && !f.gt_mask_path)
                    throw MissingPrerequisite("plan " + to_string(plan.id) +
                                              " needs manual masks but the corpus has none");
            }
        }
    };
    check(Split::train, plan.train_het());
    check(Split::val, plan.val_het());
}

int cmd_synth(const RunConfig& cfg, const RunDir& dir) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    if (!fs::exists(dir.pool())) make_photo_pool(dir.pool(), cfg.pool_count, cfg.pool_size, cfg.corpus_seed ^ 0x9001ull);
    CorpusManifest m = synthesize_corpus(cfg.synth, dir.pool(), dir.corpus(), cfg.corpus_seed);
    write_manifest(m, dir.manifest());
    write_report(dir, "synth",
                 json{{"frames", m.all_frames().size()},
                      {"videos", m.videos.size()},
                      {"corpus_digest", digest_hex(manifest_digest(m))}},
                 cfg);
    std::printf("synth: %zu frames in %zu videos, digest %s\n", m.all_frames().size(), m.videos.size(),
                digest_hex(manifest_digest(m)).c_str());
    return 0;
}

int cmd_split(const RunConfig& cfg, const RunDir& dir) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto a = stratified_split(m, cfg.split, cfg.split_seed);
    write_split(a, dir.split());
    json res = json::array();
    for (int s = 0; s < 3; ++s) res.push_back(a.residuals[s]);
    write_report(dir, "split", json{{"seed", cfg.split_seed}, {"residuals", res}}, cfg);
    std::printf("split: residuals train=%.4f val=%.4f test=%.4f\n", a.residuals[0], a.residuals[1], a.residuals[2]);
    return 0;
}

int cmd_train_proxy(const RunConfig& cfg, const RunDir& dir) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto split = require_split(dir);
    auto train = classifier_dataset(m, split, Split::train, dir.corpus());
    auto val = classifier_dataset(m, split, Split::val, dir.corpus());
    ProxyClassifier<float> clf(cfg.vit, cfg.head_mode, cfg.stage1_seed);
    auto report = train_stage1(clf, train, val, cfg.stage1, cfg.stage1_seed ^ 0x5eedull);
    save_classifier(clf, cfg.stage1, dir.proxy_checkpoint());
    json hist = json::array();
    for (const auto& e : report.history)
        hist.push_back(json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val_f1}, {"val_acc", e.val_acc}});
    write_report(dir, "train_proxy",
                 json{{"head_mode", to_string(cfg.head_mode)},
                      {"best_val_f1", report.best_val_f1},
                      {"best_epoch", report.best_epoch},
                      {"history", hist}},
                 cfg);
    std::printf("train-proxy: best val F1 %.4f at epoch %d\n", report.best_val_f1, report.best_epoch);
    return 0;
}

int cmd_eval_proxy(const RunConfig& cfg, const RunDir& dir) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto split = require_split(dir);
    auto clf = require_proxy(dir);
    auto test = classifier_dataset(m, split, Split::test, dir.corpus());
    auto r = evaluate_classifier(clf, test, "test");
    write_report(dir, "eval_proxy",
                 json{{"subset", "test-homogeneous"}, {"accuracy", r.acc}, {"f1", r.f1}, {"samples", r.sample_count}},
                 cfg);
    std::printf("eval-proxy: test acc %.4f macro-F1 %.4f (%zu frames)\n", r.acc, r.f1, r.sample_count);
    return 0;
}

int cmd_gen_masks(const RunConfig& cfg, const RunDir& dir) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto split = require_split(dir);
    auto clf = require_proxy(dir);
    // proxy masks are a training/validation device; test frames keep manual only
    auto filter = [&](const std::string& vid) { return split.of(vid) != Split::test; };
    int written = attach_proxy_masks(m, clf, dir.corpus(), "masks/proxy", filter);
    write_manifest(m, dir.manifest());
    write_report(dir, "gen_masks", json{{"written", written}}, cfg);
    std::printf("gen-masks: wrote %d proxy masks\n", written);
    return 0;
}

json experiment_json(const ExperimentResult& r) { return to_json(r); }

int cmd_train_seg(const RunConfig& cfg, const RunDir& dir, const std::string& plan_name, uint64_t seed) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto split = require_split(dir);
    ExperimentPlan plan{plan_from_string(plan_name)};
    require_plan_masks(m, split, plan);
    SegModel<float> trained(cfg.seg, 0);
    auto result = run_experiment<float>(m, split, plan, cfg.seg, cfg.stage3, dir.corpus(), seed, &trained);
    save_segmenter(trained, cfg.stage3, plan.id, dir.seg_checkpoint(plan.id));
    write_report(dir, "train_seg_" + to_string(plan.id), experiment_json(result), cfg);
    std::printf("train-seg %s: val mIoU %.4f | test hom %.4f mixed %.4f het %.4f\n", to_string(plan.id).c_str(),
                result.training.best_val_miou, result.test_homogeneous.miou(), result.test_mixed.miou(),
                result.test_heterogeneous.miou());
    return 0;
}

int cmd_run_ladder(const RunConfig& cfg, const RunDir& dir, int n_seeds) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto split = require_split(dir);
    for (auto id : {PlanId::B0, PlanId::B1, PlanId::B2}) require_plan_masks(m, split, ExperimentPlan{id});

    json plans = json::object();
    std::string table = "plan | test subset        | IoU(NP) | IoU(P) | mean IoU\n";
    table += "-----|--------------------|---------|--------|---------\n";
    std::map<std::string, double> het_mean;
    for (auto id : {PlanId::A, PlanId::B0, PlanId::B1, PlanId::B2}) {
        json runs = json::array();
        MetricsReport avg_hom{}, avg_mixed{}, avg_het{};
        for (int s = 0; s < n_seeds; ++s) {
            auto r = run_experiment<float>(m, split, ExperimentPlan{id}, cfg.seg, cfg.stage3, dir.corpus(),
                                           cfg.stage3_seed + 1000ull * s);
            runs.push_back(experiment_json(r));
            auto acc = [&](MetricsReport& a, const MetricsReport& b) {
                a.iou_np += b.iou_np / n_seeds;
                a.iou_p += b.iou_p / n_seeds;
                a.sample_count = b.sample_count;
            };
            acc(avg_hom, r.test_homogeneous);
            acc(avg_mixed, r.test_mixed);
            acc(avg_het, r.test_heterogeneous);
        }
        het_mean[to_string(id)] = avg_het.miou();
        plans[to_string(id)] =
            json{{"runs", runs},
                 {"mean_over_seeds", json{{"homogeneous", json{{"iou_np", avg_hom.iou_np}, {"iou_p", avg_hom.iou_p}, {"mean_iou", avg_hom.miou()}}},
                                          {"homogeneous+heterogeneous", json{{"iou_np", avg_mixed.iou_np}, {"iou_p", avg_mixed.iou_p}, {"mean_iou", avg_mixed.miou()}}},
                                          {"heterogeneous", json{{"iou_np", avg_het.iou_np}, {"iou_p", avg_het.iou_p}, {"mean_iou", avg_het.miou()}}}}}};
        char buf[256];
        auto row = [&](const char* subset, const MetricsReport& r) {
            std::snprintf(buf, sizeof(buf), "%-4s | %-18s | %7.4f | %6.4f | %7.4f\n", to_string(id).c_str(), subset,
                          r.iou_np, r.iou_p, r.miou());
            table += buf;
        };
        row("homogeneous", avg_hom);
        row("hom+heterogeneous", avg_mixed);
        row("heterogeneous", avg_het);
    }
    write_report(dir, "ladder", json{{"seeds", n_seeds}, {"plans", plans}}, cfg);
    std::filesystem::create_directories(dir.reports());
    write_text_file(dir.reports() / "ladder_table.txt", table);
    std::printf("%s", table.c_str());
    std::printf("run-ladder: het-only mean IoU A=%.4f B0=%.4f B1=%.4f B2=%.4f\n", het_mean["A"], het_mean["B0"],
                het_mean["B1"], het_mean["B2"]);
    return 0;
}

int cmd_report(const RunDir& dir) {
    if (!fs::exists(dir.reports())) throw MissingPrerequisite("no reports yet; run a pipeline stage first");
    std::string out;
    for (const auto& e : fs::directory_iterator(dir.reports())) {
        if (e.path().extension() != ".json") continue;
        out += "== " + e.path().filename().string() + " ==\n";
        out += read_text_file(e.path()) + "\n";
    }
    write_text_file(dir.reports() / "summary.txt", out);
    std::printf("%s", out.c_str());
    return 0;
}

int cmd_explain(const RunConfig& cfg, const RunDir& dir, double band_lo, double band_hi, int limit) {
    RunLock lock(dir);
    stamp_run(dir, cfg);
    CorpusManifest m = require_manifest(dir);
    auto split = require_split(dir);
    auto clf = require_proxy(dir);
    auto test = classifier_dataset(m, split, Split::test, dir.corpus());
    auto cases = boundary_report(clf, test, band_lo, band_hi);
    fs::path overlays = dir.reports() / "explain";
    fs::create_directories(overlays);
    json rows = json::array();
    int rendered = 0;
    for (auto& c : cases) {
        if (rendered < limit) {
            for (const auto& s : test) {
                if (s.frame_id != c.frame_id) continue;
                auto map = gradcam(clf, s.image, c.predicted_label);
                fs::path p = overlays / (c.frame_id + "_cam.png");
                cv::imwrite(p.string(), render_attribution_overlay(s.image, map));
                c.attribution_path = fs::relative(p, dir.root).generic_string();
                ++rendered;
                break;
            }
        }
        rows.push_back(to_json(c));
    }
    write_report(dir, "explain",
                 json{{"band", json::array({band_lo, band_hi})}, {"cases", rows}, {"rendered", rendered}}, cfg);
    std::printf("explain: %zu boundary cases, %d overlays rendered\n", cases.size(), rendered);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"filmseg: weakly supervised photographic/non-photographic film-frame segmentation"};
    app.require_subcommand(1);
    app.fallthrough();  // accept --config/--run after the subcommand too

    std::string config_path, run_path = "runs/default";
    app.add_option("--config", config_path, "run configuration JSON (defaults to built-in miniature preset)");
    app.add_option("--run", run_path, "run directory");

    auto* synth = app.add_subcommand("synth", "synthesize the labeled corpus");
    std::optional<uint64_t> synth_seed;
    synth->add_option("--seed", synth_seed, "override corpus seed");

    auto* split = app.add_subcommand("split", "stratified video-grouped train/val/test split");
    std::optional<uint64_t> split_seed;
    split->add_option("--split-seed", split_seed, "override split seed");

    auto* train_proxy = app.add_subcommand("train-proxy", "stage 1: train the frame classifier");
    std::string head_mode;
    train_proxy->add_option("--head-mode", head_mode, "centroid or cls-token");

    app.add_subcommand("eval-proxy", "evaluate the classifier on the test split");
    app.add_subcommand("gen-masks", "stage 2: write proxy masks for train/val heterogeneous frames");

    auto* train_seg = app.add_subcommand("train-seg", "stage 3: train the segmenter under one plan");
    std::string plan = "A";
    std::optional<uint64_t> seg_seed;
    train_seg->add_option("--plan", plan, "A, B0, B1 or B2");
    train_seg->add_option("--seed", seg_seed, "override stage-3 seed");

    auto* ladder = app.add_subcommand("run-ladder", "train and evaluate all four plans");
    int n_seeds = 2;
    ladder->add_option("--seeds", n_seeds, "seeds per plan")->check(CLI::PositiveNumber);

    app.add_subcommand("report", "print collected stage reports");

    auto* explain = app.add_subcommand("explain", "boundary-case report with attribution overlays");
    double band_lo = 0.5, band_hi = 0.6;
    int limit = 16;
    explain->add_option("--band-lo", band_lo, "uncertainty band lower bound");
    explain->add_option("--band-hi", band_hi, "uncertainty band upper bound");
    explain->add_option("--limit", limit, "max overlays to render");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        std::fprintf(stderr, "%s\n", app.help().c_str());
        return 2;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig::mini() : load_run_config(config_path);
        if (synth_seed) cfg.corpus_seed = *synth_seed;
        if (split_seed) cfg.split_seed = *split_seed;
        if (!head_mode.empty()) cfg.head_mode = head_mode_from_string(head_mode);
        RunDir dir{fs::path(run_path)};

        if (synth->parsed()) return cmd_synth(cfg, dir);
        if (split->parsed()) return cmd_split(cfg, dir);
        if (train_proxy->parsed()) return cmd_train_proxy(cfg, dir);
        if (app.get_subcommand("eval-proxy")->parsed()) return cmd_eval_proxy(cfg, dir);
        if (app.get_subcommand("gen-masks")->parsed()) return cmd_gen_masks(cfg, dir);
        if (train_seg->parsed()) return cmd_train_seg(cfg, dir, plan, seg_seed.value_or(cfg.stage3_seed));
        if (ladder->parsed()) return cmd_run_ladder(cfg, dir, n_seeds);
        if (app.get_subcommand("report")->parsed()) return cmd_report(dir);
        if (explain->parsed()) return cmd_explain(cfg, dir, band_lo, band_hi, limit);
        std::fprintf(stderr, "no subcommand\n");
        return 2;
    } catch (const MissingPrerequisite& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

// Acceptance suite: one test per criterion, each printing a single
// "ACCEPTANCE n: PASS/FAIL" line. The pipeline criteria (1, 2, 3, 9) share
// one corpus and one experiment ladder driven through the CLI binary; the
// oracle and property criteria (4-8) run against the library directly.

#include <gtest/gtest.h>

#include <cstdlib>
#include <map>
#include <set>

#include "filmseg/classifier.hpp"
#include "filmseg/mask_gen.hpp"
#include "filmseg/metrics.hpp"
#include "filmseg/preprocess.hpp"
#include "filmseg/runconfig.hpp"
#include "filmseg/splitter.hpp"
#include "filmseg/synth.hpp"
#include "testutil.hpp"

using namespace filmseg;
namespace nn = filmseg::nn;
namespace fs = std::filesystem;

namespace {

void verdict(const std::string& criterion, bool ok, const std::string& detail) {
    std::printf("ACCEPTANCE %s: %s%s%s\n", criterion.c_str(), ok ? "PASS" : "FAIL",
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    EXPECT_TRUE(ok) << "criterion " << criterion << ": " << detail;
}

int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = std::string(FILMSEG_CLI_PATH) + " " + args + " >>" + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Corpus scaled to the criterion-1 contract (~600 homogeneous + ~200
// heterogeneous frames); everything else comes from the miniature preset.
const char* kLadderConfig = R"({
  "corpus": {"n_homogeneous_p": 300, "n_homogeneous_np": 300, "n_heterogeneous": 200,
             "n_videos": 20, "image_size": 70, "pool_count": 8, "pool_size": 192},
  "stage1": {"max_epochs": 30, "lr": 0.001, "plateau_patience": 5, "early_stop_patience": 10}
})";

// Shared artifacts for criteria 1, 2, 3 and 9, built once on first use.
struct Pipeline {
    testutil::TempDir tmp{"acceptance"};
    fs::path cfg = tmp.path() / "cfg.json";
    fs::path run = tmp.path() / "run";
    fs::path log = tmp.path() / "cli.log";
    std::string error;
    json ladder, proxy_eval;

    Pipeline() {
        write_text_file(cfg, kLadderConfig);
        std::string common = " --config " + cfg.string() + " --run " + run.string();
        for (const char* stage : {"synth", "split", "train-proxy", "eval-proxy", "gen-masks",
                                  "run-ladder --seeds 2"}) {
            if (run_cli(std::string(stage) + common, log) != 0) {
                error = std::string("stage '") + stage + "' failed; see " + log.string();
                return;
            }
        }
        ladder = json::parse(read_text_file(run / "reports" / "ladder.json"));
        proxy_eval = json::parse(read_text_file(run / "reports" / "eval_proxy.json"));
    }

    bool ok() const { return error.empty(); }

    double het_miou(const std::string& plan) const {
        return ladder.at("plans").at(plan).at("mean_over_seeds").at("heterogeneous").at("mean_iou").get<double>();
    }
    double hom_miou(const std::string& plan) const {
        return ladder.at("plans").at(plan).at("mean_over_seeds").at("homogeneous").at("mean_iou").get<double>();
    }
};

Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

// ---- oracles (independent of the library implementation) ----

struct Confusion {
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion count_confusion(const std::vector<int>& pred, const std::vector<int>& truth, int cls) {
    Confusion c;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] == cls, t = truth[i] == cls;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double oracle_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    double sum = 0;
    for (int cls = 0; cls < 2; ++cls) {
        auto c = count_confusion(pred, truth, cls);
        double denom = 2.0 * c.tp + c.fp + c.fn;
        sum += denom == 0 ? 1.0 : 2.0 * c.tp / denom;
    }
    return sum / 2;
}

double oracle_iou(const MaskImage& a, const MaskImage& b, int cls) {
    size_t inter = 0, uni = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            bool pa = a.at(x, y) == cls, pb = b.at(x, y) == cls;
            if (pa && pb) ++inter;
            if (pa || pb) ++uni;
        }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

MaskImage mask_from_bits(unsigned bits) {
    MaskImage m(3, 3);
    for (int i = 0; i < 9; ++i) m.labels[i] = (bits >> i) & 1;
    return m;
}

// ---- 6-video stratifier instance (mirrors the splitter examples) ----

VideoRecord make_video(const std::string& vid, int n_p, int n_np, int n_het = 0) {
    VideoRecord v;
    v.video_id = vid;
    int idx = 0;
    auto add = [&](Homogeneity hom, std::optional<ContentClass> cls) {
        FrameRecord f;
        f.frame_id = vid + "_f" + std::to_string(idx++);
        f.video_id = vid;
        f.sequence_id = vid + "_s0";
        f.image_path = "x.png";
        f.homogeneity = hom;
        f.global_class = cls;
        v.frames.push_back(f);
    };
    for (int i = 0; i < n_p; ++i) add(Homogeneity::homogeneous, ContentClass::P);
    for (int i = 0; i < n_np; ++i) add(Homogeneity::homogeneous, ContentClass::NP);
    for (int i = 0; i < n_het; ++i) add(Homogeneity::heterogeneous, std::nullopt);
    return v;
}

constexpr uint64_t kSixVideoSeed = 5;

double exhaustive_optimum(const CorpusManifest& m, const ClassDistribution& target,
                          const std::array<int64_t, 3>& budget) {
    double best = 2.0;
    for (int code = 0; code < 729; ++code) {
        int c = code;
        std::array<ClassHistogram, 3> h{};
        for (const auto& v : m.videos) {
            h[c % 3] += v.class_histogram();
            c /= 3;
        }
        bool ok = true;
        for (int s = 0; s < 3; ++s)
            if (h[s].total() != budget[s]) ok = false;
        if (!ok) continue;
        double worst = 0;
        for (int s = 0; s < 3; ++s) worst = std::max(worst, l1_distance(normalize(h[s]), target));
        best = std::min(best, worst);
    }
    return best;
}

}  // namespace

TEST(Acceptance, Criterion1LadderOrdering) {
    auto& p = pipeline();
    if (!p.ok()) {
        verdict("1", false, p.error);
        return;
    }
    double a = p.het_miou("A"), b0 = p.het_miou("B0"), b1 = p.het_miou("B1"), b2 = p.het_miou("B2");
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "het-only mean IoU over 2 seeds: A=%.4f B0=%.4f B1=%.4f B2=%.4f "
                  "(need B1>=A+0.10, B2>=A+0.08, B0>=B1-0.05)",
                  a, b0, b1, b2);
    verdict("1", b1 >= a + 0.10 && b2 >= a + 0.08 && b0 >= b1 - 0.05, detail);
}

TEST(Acceptance, Criterion2ProxyClassifierF1) {
    auto& p = pipeline();
    if (!p.ok()) {
        verdict("2", false, p.error);
        return;
    }
    double f1 = p.proxy_eval.at("f1").get<double>();
    char detail[128];
    std::snprintf(detail, sizeof(detail), "miniature backbone test macro-F1 %.4f (need >= 0.80)", f1);
    bool ok = f1 >= 0.80;

    const char* ckpt = std::getenv("FILMSEG_PRETRAINED_CHECKPOINT");
    if (!ckpt) {
        std::printf("ACCEPTANCE 2 (pretrained leg): SKIPPED — no pretrained weights in this environment; "
                    "set FILMSEG_PRETRAINED_CHECKPOINT to a classifier checkpoint to enable\n");
    } else {
        auto clf = load_classifier<float>(ckpt);
        RunDir dir{p.run};
        auto m = read_manifest(dir.manifest());
        auto split = read_split(dir.split());
        auto test = classifier_dataset(m, split, Split::test, dir.corpus());
        auto r = evaluate_classifier(clf, test, "test");
        std::printf("ACCEPTANCE 2 (pretrained leg): %s — test macro-F1 %.4f (need >= 0.90)\n",
                    r.f1 >= 0.90 ? "PASS" : "FAIL", r.f1);
        ok = ok && r.f1 >= 0.90;
    }
    verdict("2", ok, detail);
}

TEST(Acceptance, Criterion3CentroidVsClsAblation) {
    auto& p = pipeline();
    if (!p.ok()) {
        verdict("3", false, p.error);
        return;
    }
    // second leg: same corpus, cls-token head, separate run directory; the
    // head mode goes into the config so the run-dir digest stays consistent
    fs::path run2 = p.tmp.path() / "run-cls";
    fs::path cfg2 = p.tmp.path() / "cfg-cls.json";
    json j = json::parse(std::string(kLadderConfig));
    j["stage1"]["head_mode"] = "cls-token";
    write_text_file(cfg2, j.dump(2));
    std::string common = " --config " + cfg2.string() + " --run " + run2.string();
    for (const char* stage : {"synth", "split", "train-proxy", "eval-proxy"}) {
        if (run_cli(std::string(stage) + common, p.log) != 0) {
            verdict("3", false, std::string("cls-token leg stage '") + stage + "' failed");
            return;
        }
    }
    json cls_eval = json::parse(read_text_file(run2 / "reports" / "eval_proxy.json"));
    double f_cen = p.proxy_eval.at("f1").get<double>(), a_cen = p.proxy_eval.at("accuracy").get<double>();
    double f_cls = cls_eval.at("f1").get<double>(), a_cls = cls_eval.at("accuracy").get<double>();
    std::printf("  head       | test acc | test macro-F1\n");
    std::printf("  centroid   |   %.4f |        %.4f\n", a_cen, f_cen);
    std::printf("  cls-token  |   %.4f |        %.4f\n", a_cls, f_cls);
    // both rows must exist and be well-formed; no ordering is asserted
    bool ok = f_cen >= 0.0 && f_cen <= 1.0 && f_cls >= 0.0 && f_cls <= 1.0;
    verdict("3", ok, "both ablation rows reported");
}

TEST(Acceptance, Criterion4MetricOracles) {
    bool ok = true;
    for (unsigned a = 0; a < 512 && ok; ++a) {
        MaskImage ma = mask_from_bits(a);
        for (unsigned b = 0; b < 512 && ok; ++b) {
            MaskImage mb = mask_from_bits(b);
            ok = iou(ma, mb, ContentClass::P) == oracle_iou(ma, mb, 1) &&
                 iou(ma, mb, ContentClass::NP) == oracle_iou(ma, mb, 0);
        }
    }
    Rng rng(17);
    for (int trial = 0; trial < 100 && ok; ++trial) {
        size_t n = static_cast<size_t>(rng.uniform_int(1, 100));
        std::vector<int> pred(n), truth(n);
        size_t agree = 0;
        for (size_t i = 0; i < n; ++i) {
            pred[i] = rng.bernoulli(0.5);
            truth[i] = rng.bernoulli(0.5);
            agree += pred[i] == truth[i];
        }
        ok = accuracy(pred, truth) == static_cast<double>(agree) / n &&
             macro_f1(pred, truth) == oracle_macro_f1(pred, truth);
    }
    verdict("4", ok, "IoU exact on all 3x3 pairs; accuracy/macro-F1 exact on 100 random vectors");
}

TEST(Acceptance, Criterion5HeadGradientCheck) {
    Rng rng(21);
    const int dim = 12;
    ClassifierHead<double> head(dim, 5);
    auto params = head.parameters();
    double worst = 0.0;
    for (int point = 0; point < 10; ++point) {
        nn::Mat<double> feat(1, dim);
        for (int j = 0; j < dim; ++j) feat(0, j) = rng.normal(0.0, 1.0);
        std::vector<int> label{static_cast<int>(rng.uniform_int(0, 1))};
        auto eval = [&] { return nn::cross_entropy_logits(head.forward(nn::constant<double>(feat)), label); };
        nn::zero_grad(params);
        nn::backward(eval());
        const double h = 1e-5;
        for (const auto& p : params)
            for (Eigen::Index i = 0; i < p->value.size(); ++i) {
                double orig = p->value.data()[i];
                p->value.data()[i] = orig + h;
                double up = eval()->value(0, 0);
                p->value.data()[i] = orig - h;
                double dn = eval()->value(0, 0);
                p->value.data()[i] = orig;
                double fd = (up - dn) / (2 * h);
                double an = p->grad.data()[i];
                double denom = std::max({std::abs(fd), std::abs(an), 1e-5});
                worst = std::max(worst, std::abs(fd - an) / denom);
            }
    }
    char detail[128];
    std::snprintf(detail, sizeof(detail), "worst relative error %.2e over 10 points (need <= 1e-4)", worst);
    verdict("5", worst <= 1e-4, detail);
}

TEST(Acceptance, Criterion6Stratifier) {
    CorpusManifest six;
    six.videos = {make_video("A", 10, 0), make_video("B", 0, 10), make_video("C", 5, 5),
                  make_video("D", 5, 5), make_video("E", 10, 0), make_video("F", 0, 10)};
    SplitSpec spec;
    spec.target_distribution = ClassDistribution{0.5, 0.5, 0.0};
    spec.split_fractions = {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};
    double opt = exhaustive_optimum(six, *spec.target_distribution, {40, 10, 10});
    auto assign = stratified_split(six, spec, kSixVideoSeed);
    bool near_opt = true;
    for (int s = 0; s < 3; ++s) near_opt = near_opt && assign.residuals[s] <= opt + 0.2;

    bool grouped = true;
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        CorpusManifest m;
        int n_videos = static_cast<int>(rng.uniform_int(3, 12));
        for (int v = 0; v < n_videos; ++v)
            m.videos.push_back(make_video("v" + std::to_string(v), static_cast<int>(rng.uniform_int(0, 8)),
                                          static_cast<int>(rng.uniform_int(0, 8)),
                                          static_cast<int>(rng.uniform_int(0, 3))));
        for (auto& v : m.videos)
            if (v.frames.empty()) v = make_video(v.video_id, 1, 0);
        SplitSpec s;
        auto a = stratified_split(m, s, rng.raw());
        grouped = grouped && a.by_video.size() == m.videos.size();
        std::array<int64_t, 3> totals{};
        for (const auto& v : m.videos) totals[static_cast<int>(a.of(v.video_id))] += v.class_histogram().total();
        for (int k = 0; k < 3; ++k) grouped = grouped && totals[k] == a.histograms[k].total();
    }
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "6-video residuals within optimum+0.2 (opt=%.2f): %s; group constraint on 50 corpora: %s", opt,
                  near_opt ? "yes" : "no", grouped ? "yes" : "no");
    verdict("6", near_opt && grouped, detail);
}

TEST(Acceptance, Criterion7MaskPipelineInvariants) {
    testutil::TempDir tmp("acceptance_mask");
    Rng rng(29);

    // codec round trip
    bool codec = true;
    for (int trial = 0; trial < 20; ++trial) {
        int w = static_cast<int>(rng.uniform_int(1, 40)), h = static_cast<int>(rng.uniform_int(1, 40));
        MaskImage m(w, h);
        for (auto& l : m.labels) l = static_cast<uint8_t>(rng.bernoulli(0.5));
        fs::path f = tmp.path() / ("m" + std::to_string(trial) + ".png");
        write_mask(m, f);
        MaskImage r = read_mask(f);
        codec = codec && r.width == m.width && r.height == m.height && r.labels == m.labels;
    }

    // proxy-mask pixel-count conservation: k NP patches -> k*p^2 NP pixels
    bool conserve = true;
    for (int trial = 0; trial < 20; ++trial) {
        int grid = static_cast<int>(rng.uniform_int(1, 8)), patch = static_cast<int>(rng.uniform_int(1, 16));
        std::vector<uint8_t> labels(static_cast<size_t>(grid) * grid);
        size_t k = 0;
        for (auto& l : labels) {
            l = static_cast<uint8_t>(rng.bernoulli(0.5));
            k += l == 0;
        }
        MaskImage m = patch_label_mask(labels, grid, patch);
        size_t np_px = 0;
        for (auto l : m.labels) np_px += l == 0;
        conserve = conserve && np_px == k * static_cast<size_t>(patch) * patch;
    }

    // label-set closure under preprocessing (augment + paired resize)
    bool closed = true;
    for (int trial = 0; trial < 10; ++trial) {
        int w = 40 + static_cast<int>(rng.uniform_int(0, 30)), h = 40 + static_cast<int>(rng.uniform_int(0, 30));
        cv::Mat img(h, w, CV_8UC3);
        cv::randu(img, 0, 255);
        MaskImage m(w, h);
        for (auto& l : m.labels) l = static_cast<uint8_t>(rng.bernoulli(0.3));
        AugmentConfig ac;
        auto [aimg, amask] = augment(img, m, ac, rng.raw());
        auto [rimg, rmask] = resize_for_segmenter(aimg, *amask, 32);
        (void)rimg;
        for (auto l : rmask.labels) closed = closed && l <= 1;
        MaskImage rs = resample_mask_nearest(m, 17, 23);
        for (auto l : rs.labels) closed = closed && l <= 1;
    }

    char detail[128];
    std::snprintf(detail, sizeof(detail), "codec round-trip: %s; k*p^2 conservation: %s; label closure: %s",
                  codec ? "yes" : "no", conserve ? "yes" : "no", closed ? "yes" : "no");
    verdict("7", codec && conserve && closed, detail);
}

TEST(Acceptance, Criterion8Determinism) {
    testutil::TempDir tmp("acceptance_det");
    fs::path cfg = tmp.path() / "cfg.json";
    fs::path log = tmp.path() / "cli.log";
    write_text_file(cfg, R"({
      "corpus": {"n_homogeneous_p": 12, "n_homogeneous_np": 12, "n_heterogeneous": 8,
                 "n_videos": 4, "image_size": 70, "pool_count": 3, "pool_size": 128},
      "stage1": {"max_epochs": 3}
    })");
    auto common = [&](const char* r) { return " --config " + cfg.string() + " --run " + (tmp.path() / r).string(); };
    for (const char* r : {"a", "b"})
        for (const char* stage : {"synth", "split", "train-proxy"})
            ASSERT_EQ(run_cli(std::string(stage) + common(r), log), 0) << stage << " " << r;

    bool manifests = read_text_file(tmp.path() / "a" / "manifest.json") ==
                     read_text_file(tmp.path() / "b" / "manifest.json");
    bool splits = read_text_file(tmp.path() / "a" / "splits" / "split.json") ==
                  read_text_file(tmp.path() / "b" / "splits" / "split.json");
    json ta = json::parse(read_text_file(tmp.path() / "a" / "reports" / "train_proxy.json"));
    json tb = json::parse(read_text_file(tmp.path() / "b" / "reports" / "train_proxy.json"));
    double diff = std::abs(ta.at("best_val_f1").get<double>() - tb.at("best_val_f1").get<double>());
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "manifests byte-identical: %s; splits byte-identical: %s; val-F1 diff %.2e (need <= 1e-3)",
                  manifests ? "yes" : "no", splits ? "yes" : "no", diff);
    verdict("8", manifests && splits && diff <= 1e-3, detail);
}

TEST(Acceptance, Criterion9HomogeneousGap) {
    auto& p = pipeline();
    if (!p.ok()) {
        verdict("9", false, p.error);
        return;
    }
    double hom = p.hom_miou("A"), het = p.het_miou("A");
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "plan-A mean IoU: homogeneous-only %.4f vs heterogeneous-only %.4f, gap %.4f (need >= 0.15)", hom,
                  het, hom - het);
    verdict("9", hom - het >= 0.15, detail);
}

#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "filmseg/common.hpp"
#include "filmseg/corpus.hpp"
#include "filmseg/mask.hpp"

namespace filmseg {

enum class OverlayKind { text, line_drawing, filled_shape, cartoon_sprite };

inline std::string to_string(OverlayKind k) {
    switch (k) {
        case OverlayKind::text: return "text";
        case OverlayKind::line_drawing: return "line-drawing";
        case OverlayKind::filled_shape: return "filled-shape";
        case OverlayKind::cartoon_sprite: return "cartoon-sprite";
    }
    return "?";
}

inline OverlayKind overlay_kind_from_string(const std::string& s) {
    if (s == "text") return OverlayKind::text;
    if (s == "line-drawing") return OverlayKind::line_drawing;
    if (s == "filled-shape") return OverlayKind::filled_shape;
    if (s == "cartoon-sprite") return OverlayKind::cartoon_sprite;
    throw std::invalid_argument("unknown overlay kind: " + s);
}

struct SynthesisSpec {
    int n_homogeneous_p = 0;
    int n_homogeneous_np = 0;
    int n_heterogeneous = 0;
    int n_videos = 3;
    int image_size = 64;
    double coverage_lo = 0.05;
    double coverage_hi = 0.45;
    std::vector<OverlayKind> overlay_kinds = {OverlayKind::text, OverlayKind::line_drawing,
                                              OverlayKind::filled_shape, OverlayKind::cartoon_sprite};
    double grayscale_fraction = 0.5;

    void validate() const {
        if (n_homogeneous_p < 0 || n_homogeneous_np < 0 || n_heterogeneous < 0)
            throw std::invalid_argument("synthesis counts must be >= 0");
        if (n_videos < 3) throw std::invalid_argument("n_videos must be >= 3");
        if (image_size < 16) throw std::invalid_argument("image_size must be >= 16");
        if (!(coverage_lo > 0.0 && coverage_hi < 1.0 && coverage_lo <= coverage_hi))
            throw std::invalid_argument("coverage range must lie inside (0,1)");
        if (overlay_kinds.empty() && n_heterogeneous > 0)
            throw std::invalid_argument("overlay_kinds empty but heterogeneous frames requested");
        if (grayscale_fraction < 0.0 || grayscale_fraction > 1.0)
            throw std::invalid_argument("grayscale_fraction must be in [0,1]");
    }
};

namespace detail {

inline cv::Vec3b random_flat_color(Rng& rng) {
    // flat, saturated-ish palette typical of graphics/titles
    return cv::Vec3b(static_cast<uint8_t>(rng.uniform_int(0, 255)),
                     static_cast<uint8_t>(rng.uniform_int(0, 255)),
                     static_cast<uint8_t>(rng.uniform_int(0, 255)));
}

// Multi-octave value noise, used to fabricate photographic-looking texture.
inline cv::Mat value_noise_image(int size, Rng& rng) {
    cv::Mat acc = cv::Mat::zeros(size, size, CV_32FC3);
    double amp = 1.0;
    for (int g = 4; g <= size; g *= 2) {
        cv::Mat layer(g, g, CV_32FC3);
        for (int y = 0; y < g; ++y)
            for (int x = 0; x < g; ++x) {
                float l = static_cast<float>(rng.uniform());
                float cb = static_cast<float>(rng.uniform(-0.25, 0.25));
                float cr = static_cast<float>(rng.uniform(-0.25, 0.25));
                layer.at<cv::Vec3f>(y, x) = cv::Vec3f(l + cb, l, l + cr);
            }
        cv::Mat up;
        cv::resize(layer, up, cv::Size(size, size), 0, 0, cv::INTER_CUBIC);
        acc += up * amp;
        amp *= 0.55;
    }
    double lo, hi;
    cv::minMaxLoc(acc.reshape(1), &lo, &hi);
    cv::Mat out;
    acc.convertTo(out, CV_8UC3, 225.0 / std::max(hi - lo, 1e-6), 15.0 - lo * 225.0 / std::max(hi - lo, 1e-6));
    return out;
}

inline void add_film_grain(cv::Mat& img, double sigma, Rng& rng) {
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) {
            double n = rng.normal(0.0, sigma);
            auto& px = img.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c)
                px[c] = cv::saturate_cast<uint8_t>(px[c] + n);
        }
}

inline void to_grayscale(cv::Mat& img) {
    cv::Mat g;
    cv::cvtColor(img, g, cv::COLOR_BGR2GRAY);
    cv::cvtColor(g, img, cv::COLOR_GRAY2BGR);
}

// Procedurally drawn graphics frame: flat/gradient background plus flat-color
// shapes, strokes and text.
inline cv::Mat render_graphic_frame(int size, Rng& rng) {
    cv::Mat img(size, size, CV_8UC3);
    cv::Vec3b c0 = random_flat_color(rng);
    if (rng.bernoulli(0.5)) {
        img.setTo(c0);
    } else {
        cv::Vec3b c1 = random_flat_color(rng);
        bool horizontal = rng.bernoulli(0.5);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double t = horizontal ? static_cast<double>(x) / (size - 1) : static_cast<double>(y) / (size - 1);
                cv::Vec3b c;
                for (int ch = 0; ch < 3; ++ch)
                    c[ch] = cv::saturate_cast<uint8_t>((1.0 - t) * c0[ch] + t * c1[ch]);
                img.at<cv::Vec3b>(y, x) = c;
            }
    }
    int n_elem = static_cast<int>(rng.uniform_int(3, 8));
    for (int e = 0; e < n_elem; ++e) {
        cv::Scalar col(random_flat_color(rng)[0], random_flat_color(rng)[1], random_flat_color(rng)[2]);
        int kind = static_cast<int>(rng.uniform_int(0, 4));
        int cx = static_cast<int>(rng.uniform_int(0, size - 1));
        int cy = static_cast<int>(rng.uniform_int(0, size - 1));
        int ext = static_cast<int>(rng.uniform_int(size / 10, size / 3));
        switch (kind) {
            case 0:
                cv::rectangle(img, cv::Rect(cx - ext / 2, cy - ext / 2, ext, std::max(2, ext / 2)), col, cv::FILLED);
                break;
            case 1:
                cv::circle(img, {cx, cy}, std::max(2, ext / 2), col, cv::FILLED, cv::LINE_AA);
                break;
            case 2: {
                std::vector<cv::Point> tri{{cx, cy - ext / 2}, {cx - ext / 2, cy + ext / 2}, {cx + ext / 2, cy + ext / 2}};
                cv::fillConvexPoly(img, tri, col, cv::LINE_AA);
                break;
            }
            case 3:
                cv::line(img, {cx - ext, cy}, {cx + ext, cy + static_cast<int>(rng.uniform_int(-ext, ext))}, col,
                         std::max(1, size / 48), cv::LINE_AA);
                break;
            case 4: {
                std::string txt;
                int len = static_cast<int>(rng.uniform_int(2, 6));
                for (int i = 0; i < len; ++i) txt += static_cast<char>('A' + rng.uniform_int(0, 25));
                cv::putText(img, txt, {cx - ext, cy}, cv::FONT_HERSHEY_SIMPLEX, size / 96.0, col,
                            std::max(1, size / 64), cv::LINE_AA);
                break;
            }
        }
    }
    return img;
}

// Geometry of one overlay, drawable at an arbitrary scale for coverage search.
struct OverlayGeometry {
    OverlayKind kind;
    double cx, cy;  // anchor in pixels
    // unit-scale shape parameters, meaning depends on kind
    std::vector<double> params;
    std::string text;
    int font = cv::FONT_HERSHEY_SIMPLEX;
};

inline OverlayGeometry sample_overlay_geometry(OverlayKind kind, int size, Rng& rng) {
    OverlayGeometry g;
    g.kind = kind;
    g.cx = rng.uniform(0.25, 0.75) * size;
    g.cy = rng.uniform(0.25, 0.75) * size;
    switch (kind) {
        case OverlayKind::text: {
            int lines = static_cast<int>(rng.uniform_int(1, 3));
            for (int l = 0; l < lines; ++l) {
                if (l) g.text += '\n';
                int len = static_cast<int>(rng.uniform_int(3, 7));
                for (int i = 0; i < len; ++i)
                    g.text += static_cast<char>(rng.bernoulli(0.8) ? ('A' + rng.uniform_int(0, 25))
                                                                   : ('0' + rng.uniform_int(0, 9)));
            }
            const int fonts[3] = {cv::FONT_HERSHEY_SIMPLEX, cv::FONT_HERSHEY_DUPLEX, cv::FONT_HERSHEY_COMPLEX};
            g.font = fonts[rng.uniform_int(0, 2)];
            break;
        }
        case OverlayKind::line_drawing: {
            int strokes = static_cast<int>(rng.uniform_int(3, 6));
            g.params.push_back(strokes);
            for (int s = 0; s < strokes; ++s) {
                int pts = static_cast<int>(rng.uniform_int(3, 6));
                g.params.push_back(pts);
                for (int p = 0; p < pts; ++p) {
                    g.params.push_back(rng.uniform(-1.0, 1.0));
                    g.params.push_back(rng.uniform(-1.0, 1.0));
                }
            }
            break;
        }
        case OverlayKind::filled_shape: {
            g.params.push_back(rng.uniform_int(0, 2));  // 0 rect, 1 ellipse, 2 triangle
            g.params.push_back(rng.uniform(0.4, 1.0));  // aspect
            g.params.push_back(rng.uniform(0.0, 180.0));  // ellipse angle
            break;
        }
        case OverlayKind::cartoon_sprite: {
            int blobs = static_cast<int>(rng.uniform_int(3, 5));
            g.params.push_back(blobs);
            for (int b = 0; b < blobs; ++b) {
                g.params.push_back(rng.uniform(-0.8, 0.8));  // dx
                g.params.push_back(rng.uniform(-0.8, 0.8));  // dy
                g.params.push_back(rng.uniform(0.25, 1.0));  // rx
                g.params.push_back(rng.uniform(0.25, 1.0));  // ry
            }
            break;
        }
    }
    return g;
}

// Renders the overlay's alpha raster (0..255) at the given scale.
inline cv::Mat draw_overlay_alpha(const OverlayGeometry& g, int size, double scale) {
    cv::Mat alpha = cv::Mat::zeros(size, size, CV_8UC1);
    const cv::Scalar on(255);
    switch (g.kind) {
        case OverlayKind::text: {
            int thickness = std::max(1, static_cast<int>(std::lround(scale * 2.0)));
            double line_h = scale * 32.0 * 1.4;
            std::vector<std::string> lines;
            std::string cur;
            for (char c : g.text) {
                if (c == '\n') {
                    lines.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            lines.push_back(cur);
            for (size_t l = 0; l < lines.size(); ++l) {
                // center each line on the anchor so the block stays on-canvas
                // regardless of scale
                int baseline = 0;
                cv::Size ts = cv::getTextSize(lines[l], g.font, scale, thickness, &baseline);
                cv::putText(alpha, lines[l],
                            cv::Point(static_cast<int>(g.cx - ts.width / 2.0),
                                      static_cast<int>(g.cy + ts.height / 2.0 +
                                                       (static_cast<double>(l) - (lines.size() - 1) / 2.0) * line_h)),
                            g.font, scale, on, thickness, cv::LINE_AA);
            }
            break;
        }
        case OverlayKind::line_drawing: {
            int thickness = std::max(1, static_cast<int>(std::lround(scale * 0.08)));
            size_t idx = 0;
            int strokes = static_cast<int>(g.params[idx++]);
            for (int s = 0; s < strokes; ++s) {
                int pts = static_cast<int>(g.params[idx++]);
                std::vector<cv::Point> poly;
                for (int p = 0; p < pts; ++p) {
                    double dx = g.params[idx++];
                    double dy = g.params[idx++];
                    poly.emplace_back(static_cast<int>(g.cx + dx * scale), static_cast<int>(g.cy + dy * scale));
                }
                cv::polylines(alpha, poly, false, on, thickness, cv::LINE_AA);
            }
            break;
        }
        case OverlayKind::filled_shape: {
            int shape = static_cast<int>(g.params[0]);
            double aspect = g.params[1];
            double rx = scale, ry = scale * aspect;
            if (shape == 0) {
                cv::rectangle(alpha,
                              cv::Rect(static_cast<int>(std::lround(g.cx - rx)), static_cast<int>(std::lround(g.cy - ry)),
                                       std::max(1, static_cast<int>(std::lround(2 * rx))),
                                       std::max(1, static_cast<int>(std::lround(2 * ry)))),
                              on, cv::FILLED);
            } else if (shape == 1) {
                cv::ellipse(alpha, cv::Point2d(g.cx, g.cy), cv::Size2d(std::max(1.0, rx), std::max(1.0, ry)),
                            g.params[2], 0, 360, on, cv::FILLED, cv::LINE_AA);
            } else {
                std::vector<cv::Point> tri{
                    {static_cast<int>(g.cx), static_cast<int>(g.cy - ry)},
                    {static_cast<int>(g.cx - rx), static_cast<int>(g.cy + ry)},
                    {static_cast<int>(g.cx + rx), static_cast<int>(g.cy + ry)}};
                cv::fillConvexPoly(alpha, tri, on, cv::LINE_AA);
            }
            break;
        }
        case OverlayKind::cartoon_sprite: {
            size_t idx = 0;
            int blobs = static_cast<int>(g.params[idx++]);
            for (int b = 0; b < blobs; ++b) {
                double dx = g.params[idx++], dy = g.params[idx++];
                double rx = g.params[idx++], ry = g.params[idx++];
                cv::ellipse(alpha, cv::Point2d(g.cx + dx * scale, g.cy + dy * scale),
                            cv::Size2d(std::max(1.0, rx * scale), std::max(1.0, ry * scale)), 0, 0, 360, on,
                            cv::FILLED, cv::LINE_AA);
            }
            break;
        }
    }
    return alpha;
}

inline size_t alpha_on_count(const cv::Mat& alpha) {
    size_t n = 0;
    for (int y = 0; y < alpha.rows; ++y)
        for (int x = 0; x < alpha.cols; ++x) n += (alpha.at<uint8_t>(y, x) >= 128);
    return n;
}

// Renders the overlay so that exactly round(coverage*size^2) pixels pass the
// alpha >= 1/2 threshold. A coarse bisection over the drawing scale gets
// close; the residual is absorbed by growing or shrinking the thresholded
// set along its signed distance field, which keeps the silhouette intact.
inline cv::Mat render_overlay_alpha(const OverlayGeometry& g, int size, double coverage) {
    const auto target = static_cast<int64_t>(std::llround(coverage * size * size));
    double lo = 0.01, hi = size * 2.0;
    cv::Mat best;
    int64_t best_err = std::numeric_limits<int64_t>::max();
    for (int it = 0; it < 28; ++it) {
        double mid = 0.5 * (lo + hi);
        cv::Mat alpha = draw_overlay_alpha(g, size, mid);
        int64_t cnt = static_cast<int64_t>(alpha_on_count(alpha));
        int64_t err = std::llabs(cnt - target);
        if (err < best_err) {
            best_err = err;
            best = alpha;
        }
        if (cnt < target)
            lo = mid;
        else
            hi = mid;
    }

    // an empty silhouette would leave the distance ranking below with no
    // boundary to grow from; seed it with a disc of roughly the target area
    if (alpha_on_count(best) == 0) {
        best = cv::Mat::zeros(size, size, CV_8UC1);
        double r = std::max(1.0, std::sqrt(static_cast<double>(target) / CV_PI));
        double cx = std::clamp(g.cx, r, size - r), cy = std::clamp(g.cy, r, size - r);
        cv::circle(best, cv::Point2d(cx, cy), static_cast<int>(std::lround(r)), cv::Scalar(255),
                   cv::FILLED, cv::LINE_AA);
    }

    // exact adjustment: rank pixels by signed distance to the silhouette
    // boundary and keep exactly `target` of them
    cv::Mat on(size, size, CV_8UC1), off(size, size, CV_8UC1);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool s = best.at<uint8_t>(y, x) >= 128;
            on.at<uint8_t>(y, x) = s ? 255 : 0;
            off.at<uint8_t>(y, x) = s ? 0 : 255;
        }
    cv::Mat d_in, d_out;
    cv::distanceTransform(on, d_in, cv::DIST_L2, 3);    // distance to nearest off pixel, >0 inside
    cv::distanceTransform(off, d_out, cv::DIST_L2, 3);  // distance to nearest on pixel, >0 outside
    std::vector<std::pair<float, int>> ranked(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            int i = y * size + x;
            ranked[i] = {d_out.at<float>(y, x) - d_in.at<float>(y, x), i};
        }
    std::nth_element(ranked.begin(), ranked.begin() + target, ranked.end());
    std::sort(ranked.begin(), ranked.begin() + target);

    cv::Mat alpha = cv::Mat::zeros(size, size, CV_8UC1);
    for (int64_t k = 0; k < target; ++k) {
        int i = ranked[k].second;
        alpha.at<uint8_t>(i / size, i % size) = 255;
    }
    // soft 1px fringe below the threshold, imitating an anti-aliased edge
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (alpha.at<uint8_t>(y, x) == 255) continue;
            bool adj = (x > 0 && alpha.at<uint8_t>(y, x - 1) == 255) ||
                       (x + 1 < size && alpha.at<uint8_t>(y, x + 1) == 255) ||
                       (y > 0 && alpha.at<uint8_t>(y - 1, x) == 255) ||
                       (y + 1 < size && alpha.at<uint8_t>(y + 1, x) == 255);
            if (adj) alpha.at<uint8_t>(y, x) = 100;
        }
    return alpha;
}

inline void composite_overlay(cv::Mat& img, const cv::Mat& alpha, cv::Vec3b color) {
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) {
            double a = alpha.at<uint8_t>(y, x) / 255.0;
            if (a <= 0.0) continue;
            auto& px = img.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c)
                px[c] = cv::saturate_cast<uint8_t>(a * color[c] + (1.0 - a) * px[c]);
        }
}

inline MaskImage mask_from_alpha(const cv::Mat& alpha) {
    MaskImage m(alpha.cols, alpha.rows, 1);  // background photographic
    for (int y = 0; y < alpha.rows; ++y)
        for (int x = 0; x < alpha.cols; ++x)
            if (alpha.at<uint8_t>(y, x) >= 128) m.at(x, y) = 0;  // overlay is NP
    return m;
}

}  // namespace detail

// Fabricates a pool of photographic-looking source images.
inline void make_photo_pool(const std::filesystem::path& dir, int count, int size, uint64_t seed) {
    ensure_dir(dir);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        Rng frng = rng.fork(i);
        cv::Mat img = detail::value_noise_image(size, frng);
        char name[32];
        std::snprintf(name, sizeof(name), "pool_%04d.png", i);
        if (!cv::imwrite((dir / name).string(), img))
            throw std::runtime_error("cannot write pool image into " + dir.string());
    }
}

inline std::vector<std::filesystem::path> list_pool_images(const std::filesystem::path& pool) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(pool))
        for (const auto& e : std::filesystem::directory_iterator(pool)) {
            auto ext = e.path().extension().string();
            if (ext == ".png" || ext == ".jpg" || ext == ".bmp" || ext == ".ppm") files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("photo pool is empty: " + pool.string());
    return files;
}

// Builds the synthetic corpus under out_dir. Image and mask paths in the
// returned manifest are relative to out_dir so identical (spec, pool, seed)
// runs produce byte-identical manifests regardless of location.
inline CorpusManifest synthesize_corpus(const SynthesisSpec& spec, const std::filesystem::path& photo_pool,
                                        const std::filesystem::path& out_dir, uint64_t seed) {
    spec.validate();
    auto pool_files = list_pool_images(photo_pool);
    ensure_dir(out_dir / "images");
    ensure_dir(out_dir / "masks" / "gt");

    Rng rng(seed);

    struct VideoStyle {
        cv::Mat pool_img;
        bool grayscale;
        OverlayKind overlay_kind;
        uint64_t palette_seed;
    };
    std::vector<VideoStyle> styles;
    for (int v = 0; v < spec.n_videos; ++v) {
        VideoStyle st;
        auto pi = pool_files[rng.uniform_int(0, static_cast<int64_t>(pool_files.size()) - 1)];
        st.pool_img = cv::imread(pi.string(), cv::IMREAD_COLOR);
        if (st.pool_img.empty()) throw std::runtime_error("cannot read pool image " + pi.string());
        if (st.pool_img.rows < spec.image_size || st.pool_img.cols < spec.image_size)
            throw std::runtime_error("pool image smaller than requested frame size: " + pi.string());
        st.grayscale = rng.bernoulli(spec.grayscale_fraction);
        st.overlay_kind = spec.overlay_kinds.empty()
                              ? OverlayKind::filled_shape
                              : spec.overlay_kinds[rng.uniform_int(0, static_cast<int64_t>(spec.overlay_kinds.size()) - 1)];
        st.palette_seed = rng.raw();
        styles.push_back(std::move(st));
    }

    // Per-video propensity for each frame type; skews the class mix per video
    // so the stratifier has real work to do.
    std::vector<std::array<double, 3>> propensity(spec.n_videos);
    for (auto& p : propensity) {
        double s = 0;
        for (double& w : p) {
            w = std::pow(rng.uniform(), 2.0) + 0.02;
            s += w;
        }
        for (double& w : p) w /= s;
    }

    CorpusManifest manifest;
    manifest.provenance = Provenance::synthetic;
    manifest.seed = static_cast<int64_t>(seed);
    manifest.videos.resize(spec.n_videos);
    for (int v = 0; v < spec.n_videos; ++v) {
        char vid[16];
        std::snprintf(vid, sizeof(vid), "v%03d", v);
        manifest.videos[v].video_id = vid;
    }

    auto pick_video = [&](int type, int frame_index) {
        if (frame_index < spec.n_videos) return frame_index;  // every video gets early frames
        double u = rng.uniform(), acc = 0.0;
        double total = 0.0;
        for (const auto& p : propensity) total += p[type];
        for (int v = 0; v < spec.n_videos; ++v) {
            acc += propensity[v][type] / total;
            if (u < acc) return v;
        }
        return spec.n_videos - 1;
    };

    const int N = spec.image_size;
    int frame_counter = 0;
    auto add_frame = [&](int video, Homogeneity hom, std::optional<ContentClass> cls, const cv::Mat& img,
                         const MaskImage* gt, std::optional<double> coverage) {
        char fid[16];
        std::snprintf(fid, sizeof(fid), "f%06d", frame_counter++);
        FrameRecord f;
        f.frame_id = fid;
        f.video_id = manifest.videos[video].video_id;
        f.sequence_id = f.video_id + "_s" + std::to_string(hom == Homogeneity::heterogeneous ? 2 : static_cast<int>(*cls));
        f.homogeneity = hom;
        f.global_class = cls;
        f.image_path = std::string("images/") + fid + ".png";
        if (!cv::imwrite((out_dir / f.image_path).string(), img))
            throw std::runtime_error("cannot write frame image into " + out_dir.string());
        if (gt) {
            f.gt_mask_path = std::string("masks/gt/") + fid + ".png";
            write_mask(*gt, out_dir / *f.gt_mask_path);
        }
        f.np_coverage = coverage;
        manifest.videos[video].frames.push_back(std::move(f));
    };

    int global_index = 0;
    for (int i = 0; i < spec.n_homogeneous_p; ++i, ++global_index) {
        int v = pick_video(0, global_index);
        Rng frng = rng.fork(1000000 + global_index);
        const auto& st = styles[v];
        int x0 = static_cast<int>(frng.uniform_int(0, st.pool_img.cols - N));
        int y0 = static_cast<int>(frng.uniform_int(0, st.pool_img.rows - N));
        cv::Mat img = st.pool_img(cv::Rect(x0, y0, N, N)).clone();
        detail::add_film_grain(img, frng.uniform(4.0, 9.0), frng);
        if (st.grayscale) detail::to_grayscale(img);
        add_frame(v, Homogeneity::homogeneous, ContentClass::P, img, nullptr, std::nullopt);
    }
    for (int i = 0; i < spec.n_homogeneous_np; ++i, ++global_index) {
        int v = pick_video(1, global_index);
        Rng frng = rng.fork(2000000 + global_index);
        cv::Mat img = detail::render_graphic_frame(N, frng);
        if (styles[v].grayscale) detail::to_grayscale(img);
        add_frame(v, Homogeneity::homogeneous, ContentClass::NP, img, nullptr, std::nullopt);
    }
    for (int i = 0; i < spec.n_heterogeneous; ++i, ++global_index) {
        int v = pick_video(2, global_index);
        Rng frng = rng.fork(3000000 + global_index);
        const auto& st = styles[v];
        int x0 = static_cast<int>(frng.uniform_int(0, st.pool_img.cols - N));
        int y0 = static_cast<int>(frng.uniform_int(0, st.pool_img.rows - N));
        cv::Mat img = st.pool_img(cv::Rect(x0, y0, N, N)).clone();
        detail::add_film_grain(img, frng.uniform(4.0, 9.0), frng);
        double coverage = frng.uniform(spec.coverage_lo, spec.coverage_hi);
        auto geom = detail::sample_overlay_geometry(st.overlay_kind, N, frng);
        cv::Mat alpha = detail::render_overlay_alpha(geom, N, coverage);
        detail::composite_overlay(img, alpha, detail::random_flat_color(frng));
        if (st.grayscale) detail::to_grayscale(img);
        MaskImage gt = detail::mask_from_alpha(alpha);
        add_frame(v, Homogeneity::heterogeneous, std::nullopt, img, &gt, coverage);
    }

    // drop videos that ended up empty; keep ids stable
    std::erase_if(manifest.videos, [](const VideoRecord& v) { return v.frames.empty(); });
    manifest.validate();
    return manifest;
}

// Makes all manifest paths absolute against the directory the manifest lives in.
inline CorpusManifest resolve_manifest_paths(CorpusManifest m, const std::filesystem::path& base) {
    auto resolve = [&](std::string& p) {
        if (!p.empty() && !std::filesystem::path(p).is_absolute()) p = (base / p).string();
    };
    for (auto& v : m.videos)
        for (auto& f : v.frames) {
            resolve(f.image_path);
            if (f.gt_mask_path) resolve(*f.gt_mask_path);
            if (f.proxy_mask_path) resolve(*f.proxy_mask_path);
        }
    return m;
}

}  // namespace filmseg

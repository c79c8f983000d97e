#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "filmseg/common.hpp"
#include "filmseg/corpus.hpp"

namespace filmseg {

enum class Split : int { train = 0, val = 1, test = 2 };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + s);
}

// Class-proportion vector over the three histogram bins {NP, P, het}.
using ClassDistribution = std::array<double, 3>;

inline ClassDistribution normalize(const ClassHistogram& h) {
    double t = static_cast<double>(h.total());
    if (t <= 0) throw std::invalid_argument("cannot normalize an empty histogram");
    return {h.np / t, h.p / t, h.het / t};
}

inline double l1_distance(const ClassDistribution& a, const ClassDistribution& b) {
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

// Normalized frame-count distribution over a set of videos.
inline ClassDistribution class_histogram(const std::vector<VideoRecord>& videos) {
    if (videos.empty()) throw std::invalid_argument("class_histogram: empty video list");
    ClassHistogram h;
    for (const auto& v : videos) h += v.class_histogram();
    return normalize(h);
}

struct SplitSpec {
    // empty -> use the corpus distribution as target
    std::optional<ClassDistribution> target_distribution;
    std::array<double, 3> split_fractions = {0.70, 0.15, 0.15};

    void validate() const {
        double s = 0;
        for (double f : split_fractions) {
            if (f <= 0.0 || f >= 1.0) throw std::invalid_argument("split fractions must lie in (0,1)");
            s += f;
        }
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
        if (target_distribution) {
            double t = (*target_distribution)[0] + (*target_distribution)[1] + (*target_distribution)[2];
            if (std::abs(t - 1.0) > 1e-9) throw std::invalid_argument("target distribution must sum to 1");
        }
    }
};

struct SplitAssignment {
    std::map<std::string, Split> by_video;
    std::array<ClassHistogram, 3> histograms;
    std::array<double, 3> residuals = {0, 0, 0};
    ClassDistribution target = {0, 0, 0};

    Split of(const std::string& video_id) const {
        auto it = by_video.find(video_id);
        if (it == by_video.end()) throw std::runtime_error("video not assigned: " + video_id);
        return it->second;
    }

    std::vector<const FrameRecord*> frames_in(const CorpusManifest& m, Split s) const {
        std::vector<const FrameRecord*> out;
        for (const auto& v : m.videos)
            if (of(v.video_id) == s)
                for (const auto& f : v.frames) out.push_back(&f);
        return out;
    }
};

// One recorded greedy step: which split picked which video.
struct SplitStep {
    Split split;
    std::string video_id;
};

// Greedy histogram stratification. Each split is seeded with one random
// video; afterwards splits take turns (weighted by their fractions) picking
// the unassigned video that minimizes the L1 distance between the split's
// post-assignment class distribution and the target. Videos never straddle
// splits. Leftover videos beyond the frame budgets go to train.
inline SplitAssignment stratified_split(const CorpusManifest& manifest, const SplitSpec& spec, uint64_t seed,
                                        std::vector<SplitStep>* trace = nullptr) {
    spec.validate();
    const auto& videos = manifest.videos;
    if (videos.size() < 3) throw std::invalid_argument("stratified_split needs at least 3 videos");

    ClassDistribution target = spec.target_distribution ? *spec.target_distribution : class_histogram(videos);

    int64_t total_frames = 0;
    for (const auto& v : videos) total_frames += v.class_histogram().total();

    std::vector<int> order(videos.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(seed);
    rng.shuffle(order);

    SplitAssignment out;
    out.target = target;
    std::vector<bool> assigned(videos.size(), false);
    std::array<int64_t, 3> budget{}, filled{};
    for (int s = 0; s < 3; ++s)
        budget[s] = static_cast<int64_t>(std::llround(spec.split_fractions[s] * static_cast<double>(total_frames)));

    auto assign = [&](int vi, int s) {
        assigned[vi] = true;
        out.by_video[videos[vi].video_id] = static_cast<Split>(s);
        ClassHistogram h = videos[vi].class_histogram();
        out.histograms[s] += h;
        filled[s] += h.total();
    };

    // seeding: one randomly selected video per split
    for (int s = 0; s < 3; ++s) assign(order[s], s);

    auto next_split = [&]() {
        int best = -1;
        double best_key = 0;
        for (int s = 0; s < 3; ++s) {
            if (filled[s] >= budget[s]) continue;
            double key = static_cast<double>(filled[s]) / spec.split_fractions[s];
            if (best < 0 || key < best_key) {
                best = s;
                best_key = key;
            }
        }
        return best;
    };

    auto best_candidate = [&](int s) {
        int best = -1;
        double best_d = 0;
        for (size_t vi = 0; vi < videos.size(); ++vi) {
            if (assigned[vi]) continue;
            ClassHistogram h = out.histograms[s];
            h += videos[vi].class_histogram();
            double d = l1_distance(normalize(h), target);
            if (best < 0 || d < best_d - 1e-12 ||
                (std::abs(d - best_d) <= 1e-12 && videos[vi].video_id < videos[best].video_id)) {
                best = static_cast<int>(vi);
                best_d = d;
            }
        }
        return best;
    };

    while (true) {
        int s = next_split();
        if (s < 0) break;
        int vi = best_candidate(s);
        if (vi < 0) break;
        if (trace) trace->push_back({static_cast<Split>(s), videos[vi].video_id});
        assign(vi, s);
    }
    // leftovers (budgets met but videos remain) go to train
    for (size_t vi = 0; vi < videos.size(); ++vi)
        if (!assigned[vi]) assign(static_cast<int>(vi), 0);

    for (int s = 0; s < 3; ++s)
        out.residuals[s] = out.histograms[s].total() > 0 ? l1_distance(normalize(out.histograms[s]), target) : 2.0;
    return out;
}

inline json to_json(const SplitAssignment& a) {
    json by = json::object();
    for (const auto& [vid, s] : a.by_video) by[vid] = to_string(s);
    json hist = json::array();
    for (int s = 0; s < 3; ++s)
        hist.push_back(json{{"split", to_string(static_cast<Split>(s))},
                            {"np", a.histograms[s].np},
                            {"p", a.histograms[s].p},
                            {"het", a.histograms[s].het},
                            {"residual", a.residuals[s]}});
    return json{{"by_video", by}, {"histograms", hist}, {"target", a.target}};
}

inline SplitAssignment split_assignment_from_json(const json& j) {
    SplitAssignment a;
    for (auto it = j.at("by_video").begin(); it != j.at("by_video").end(); ++it)
        a.by_video[it.key()] = split_from_string(it.value().get<std::string>());
    for (const auto& h : j.at("histograms")) {
        int s = static_cast<int>(split_from_string(h.at("split").get<std::string>()));
        a.histograms[s].np = h.at("np").get<int64_t>();
        a.histograms[s].p = h.at("p").get<int64_t>();
        a.histograms[s].het = h.at("het").get<int64_t>();
        a.residuals[s] = h.at("residual").get<double>();
    }
    auto t = j.at("target");
    a.target = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    return a;
}

inline void write_split(const SplitAssignment& a, const std::filesystem::path& path) {
    write_text_file(path, to_json(a).dump(2) + "\n");
}

inline SplitAssignment read_split(const std::filesystem::path& path) {
    return split_assignment_from_json(json::parse(read_text_file(path)));
}

}  // namespace filmseg

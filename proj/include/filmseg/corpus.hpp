#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "filmseg/common.hpp"
#include "filmseg/mask.hpp"

namespace filmseg {

using json = nlohmann::json;

// Class-index convention used everywhere: 0 = NP, 1 = P.
enum class ContentClass : int { NP = 0, P = 1 };

inline std::string to_string(ContentClass c) { return c == ContentClass::NP ? "NP" : "P"; }

inline ContentClass content_class_from_string(const std::string& s) {
    if (s == "NP") return ContentClass::NP;
    if (s == "P") return ContentClass::P;
    throw std::invalid_argument("unknown content class: " + s);
}

enum class Homogeneity { homogeneous, heterogeneous };

struct FrameRecord {
    std::string frame_id;
    std::string video_id;
    std::string sequence_id;
    std::string image_path;
    Homogeneity homogeneity = Homogeneity::homogeneous;
    std::optional<ContentClass> global_class;  // present iff homogeneous
    std::optional<std::string> gt_mask_path;
    std::optional<std::string> proxy_mask_path;
    // achieved NP coverage of the rendered overlay, recorded by the compositor
    std::optional<double> np_coverage;

    bool is_homogeneous() const { return homogeneity == Homogeneity::homogeneous; }

    void validate() const {
        if (is_homogeneous() && !global_class)
            throw std::runtime_error("homogeneous frame " + frame_id + " lacks global_class");
        if (!is_homogeneous() && global_class)
            throw std::runtime_error("heterogeneous frame " + frame_id + " carries global_class");
    }
};

// Histogram bins used by the stratifier: NP, P, heterogeneous.
struct ClassHistogram {
    int64_t np = 0;
    int64_t p = 0;
    int64_t het = 0;

    int64_t total() const { return np + p + het; }
    ClassHistogram& operator+=(const ClassHistogram& o) {
        np += o.np;
        p += o.p;
        het += o.het;
        return *this;
    }
};

inline ClassHistogram count_frames(const std::vector<FrameRecord>& frames) {
    ClassHistogram h;
    for (const auto& f : frames) {
        if (!f.is_homogeneous())
            ++h.het;
        else if (*f.global_class == ContentClass::NP)
            ++h.np;
        else
            ++h.p;
    }
    return h;
}

struct VideoRecord {
    std::string video_id;
    std::vector<FrameRecord> frames;

    ClassHistogram class_histogram() const { return count_frames(frames); }

    void validate() const {
        for (const auto& f : frames) {
            f.validate();
            if (f.video_id != video_id)
                throw std::runtime_error("frame " + f.frame_id + " has mismatched video_id");
        }
    }
};

enum class Provenance { synthetic, external };

struct CorpusManifest {
    static constexpr int kSchemaVersion = 1;

    std::vector<VideoRecord> videos;
    Provenance provenance = Provenance::synthetic;
    std::optional<int64_t> seed;

    size_t frame_count() const {
        size_t n = 0;
        for (const auto& v : videos) n += v.frames.size();
        return n;
    }

    std::vector<const FrameRecord*> all_frames() const {
        std::vector<const FrameRecord*> out;
        for (const auto& v : videos)
            for (const auto& f : v.frames) out.push_back(&f);
        return out;
    }

    const FrameRecord* find_frame(const std::string& frame_id) const {
        for (const auto& v : videos)
            for (const auto& f : v.frames)
                if (f.frame_id == frame_id) return &f;
        return nullptr;
    }

    void validate() const {
        std::set<std::string> vids, fids;
        for (const auto& v : videos) {
            v.validate();
            if (!vids.insert(v.video_id).second)
                throw std::runtime_error("duplicate video_id " + v.video_id);
            for (const auto& f : v.frames)
                if (!fids.insert(f.frame_id).second)
                    throw std::runtime_error("duplicate frame_id " + f.frame_id);
        }
    }
};

inline json to_json(const FrameRecord& f) {
    json j{{"frame_id", f.frame_id},
           {"video_id", f.video_id},
           {"sequence_id", f.sequence_id},
           {"image_path", f.image_path},
           {"homogeneity", f.is_homogeneous() ? "homogeneous" : "heterogeneous"}};
    if (f.global_class) j["global_class"] = to_string(*f.global_class);
    if (f.gt_mask_path) j["gt_mask_path"] = *f.gt_mask_path;
    if (f.proxy_mask_path) j["proxy_mask_path"] = *f.proxy_mask_path;
    if (f.np_coverage) j["np_coverage"] = *f.np_coverage;
    return j;
}

inline FrameRecord frame_from_json(const json& j) {
    FrameRecord f;
    f.frame_id = j.at("frame_id").get<std::string>();
    f.video_id = j.at("video_id").get<std::string>();
    f.sequence_id = j.at("sequence_id").get<std::string>();
    f.image_path = j.at("image_path").get<std::string>();
    std::string h = j.at("homogeneity").get<std::string>();
    if (h == "homogeneous")
        f.homogeneity = Homogeneity::homogeneous;
    else if (h == "heterogeneous")
        f.homogeneity = Homogeneity::heterogeneous;
    else
        throw std::runtime_error("bad homogeneity value: " + h);
    if (j.contains("global_class")) f.global_class = content_class_from_string(j["global_class"].get<std::string>());
    if (j.contains("gt_mask_path")) f.gt_mask_path = j["gt_mask_path"].get<std::string>();
    if (j.contains("proxy_mask_path")) f.proxy_mask_path = j["proxy_mask_path"].get<std::string>();
    if (j.contains("np_coverage")) f.np_coverage = j["np_coverage"].get<double>();
    f.validate();
    return f;
}

inline json to_json(const CorpusManifest& m) {
    json jv = json::array();
    for (const auto& v : m.videos) {
        json jf = json::array();
        for (const auto& f : v.frames) jf.push_back(to_json(f));
        jv.push_back(json{{"video_id", v.video_id}, {"frames", std::move(jf)}});
    }
    json j{{"schema_version", CorpusManifest::kSchemaVersion},
           {"provenance", m.provenance == Provenance::synthetic ? "synthetic" : "external"},
           {"videos", std::move(jv)}};
    if (m.seed) j["seed"] = *m.seed;
    return j;
}

inline CorpusManifest manifest_from_json(const json& j) {
    if (j.at("schema_version").get<int>() != CorpusManifest::kSchemaVersion)
        throw std::runtime_error("unsupported manifest schema version");
    CorpusManifest m;
    m.provenance = j.at("provenance").get<std::string>() == "external" ? Provenance::external : Provenance::synthetic;
    if (j.contains("seed")) m.seed = j["seed"].get<int64_t>();
    for (const auto& jv : j.at("videos")) {
        VideoRecord v;
        v.video_id = jv.at("video_id").get<std::string>();
        for (const auto& jf : jv.at("frames")) v.frames.push_back(frame_from_json(jf));
        m.videos.push_back(std::move(v));
    }
    m.validate();
    return m;
}

inline void write_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
    write_text_file(path, to_json(m).dump(2) + "\n");
}

inline CorpusManifest read_manifest(const std::filesystem::path& path) {
    return manifest_from_json(json::parse(read_text_file(path)));
}

inline uint64_t manifest_digest(const CorpusManifest& m) { return fnv1a64(to_json(m).dump()); }

// All-NP or all-P mask derived from a homogeneous frame's global label.
inline MaskImage homogeneous_mask(const FrameRecord& frame) {
    if (!frame.is_homogeneous())
        throw std::invalid_argument("homogeneous_mask requires a homogeneous frame: " + frame.frame_id);
    cv::Mat img = cv::imread(frame.image_path, cv::IMREAD_UNCHANGED);
    if (img.empty()) throw std::runtime_error("cannot read image " + frame.image_path);
    return MaskImage(img.cols, img.rows, *frame.global_class == ContentClass::P ? 1 : 0);
}

inline MaskImage homogeneous_mask(const FrameRecord& frame, int width, int height) {
    if (!frame.is_homogeneous())
        throw std::invalid_argument("homogeneous_mask requires a homogeneous frame: " + frame.frame_id);
    return MaskImage(width, height, *frame.global_class == ContentClass::P ? 1 : 0);
}

}  // namespace filmseg

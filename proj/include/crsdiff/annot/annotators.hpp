#pragma once

// Deterministic desk-scale annotators.  Each one decouples a rendered tile
// into one local condition map (edge boundaries, straight line segments,
// depth proxy, thinned sketch, road mask, segmentation one-hot) or into
// quantized/textual metadata.  Spec-backed variants are exact against the
// generator ground truth; image-backed variants are classical detectors
// tuned to the renderer's appearance and double as the re-extraction
// oracle for controllability scoring.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "crsdiff/core/image.hpp"
#include "crsdiff/core/tensor.hpp"
#include "crsdiff/synth/render.hpp"

namespace crsdiff::annot {

enum class CondKind { hed = 0, mlsd = 1, depth = 2, sketch = 3, road = 4, segmentation = 5 };
inline constexpr int kNumCondKinds = 6;

inline const char* cond_kind_name(CondKind k) {
    static const char* names[kNumCondKinds] = {"hed", "mlsd", "depth", "sketch", "road", "seg"};
    return names[static_cast<int>(k)];
}

inline CondKind cond_kind_from_name(const std::string& name) {
    for (int i = 0; i < kNumCondKinds; ++i)
        if (name == cond_kind_name(static_cast<CondKind>(i))) return static_cast<CondKind>(i);
    if (name == "segmentation") return CondKind::segmentation;
    throw InputError("unknown condition kind: " + name);
}

inline int cond_channels(CondKind k) {
    return k == CondKind::segmentation ? synth::kNumSegClasses : 1;
}

// Channel slot of each kind in the stacked local-condition layout.  The
// slot is fixed regardless of which other kinds are present.
inline int cond_channel_offset(CondKind k) {
    int off = 0;
    for (int i = 0; i < static_cast<int>(k); ++i)
        off += cond_channels(static_cast<CondKind>(i));
    return off;
}

inline constexpr int kLocalCondChannels = 5 + synth::kNumSegClasses;  // 13

struct LocalConditionMap {
    CondKind kind;
    Tensorf data;  // [C,H,W] in [0,1]
    std::string source_id;

    int height() const { return data.shape[1]; }
    int width() const { return data.shape[2]; }
};

// ---- grayscale + filtering helpers -----------------------------------

inline std::vector<float> to_gray(const Tensorf& image) {
    require<InputError>(image.rank() == 3 && image.shape[0] == 3, "to_gray: [3,H,W] expected");
    int H = image.shape[1], W = image.shape[2];
    std::vector<float> g(static_cast<size_t>(H) * W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            g[static_cast<size_t>(y) * W + x] = 0.299f * image.at(0, y, x) +
                                                0.587f * image.at(1, y, x) +
                                                0.114f * image.at(2, y, x);
    return g;
}

inline std::vector<float> gauss3(const std::vector<float>& src, int H, int W) {
    static const float k[3] = {0.25f, 0.5f, 0.25f};
    std::vector<float> tmp(src.size()), out(src.size());
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float s = 0;
            for (int d = -1; d <= 1; ++d) s += k[d + 1] * src[static_cast<size_t>(y) * W + clampi(x + d, 0, W - 1)];
            tmp[static_cast<size_t>(y) * W + x] = s;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float s = 0;
            for (int d = -1; d <= 1; ++d) s += k[d + 1] * tmp[static_cast<size_t>(clampi(y + d, 0, H - 1)) * W + x];
            out[static_cast<size_t>(y) * W + x] = s;
        }
    return out;
}

// ---- edge boundaries (HED stand-in) ------------------------------------

// Smoothed Sobel magnitude, max over color channels (class pairs that are
// close in luminance still differ strongly in one channel).
inline LocalConditionMap edge_map(const Tensorf& image) {
    require<InputError>(image.rank() == 3 && image.shape[0] == 3, "edge_map: [3,H,W] expected");
    int H = image.shape[1], W = image.shape[2];
    LocalConditionMap m{CondKind::hed, Tensorf({1, H, W}), ""};
    std::vector<float> chan(static_cast<size_t>(H) * W);
    for (int c = 0; c < 3; ++c) {
        for (int64_t i = 0; i < static_cast<int64_t>(chan.size()); ++i)
            chan[static_cast<size_t>(i)] = image.v[static_cast<size_t>(c) * chan.size() + i];
        auto sm = gauss3(chan, H, W);
        auto at = [&](int y, int x) {
            y = y < 0 ? 0 : (y >= H ? H - 1 : y);
            x = x < 0 ? 0 : (x >= W ? W - 1 : x);
            return sm[static_cast<size_t>(y) * W + x];
        };
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                           (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
                float gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                           (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
                float mag = clamp01(std::sqrt(gx * gx + gy * gy) / 4.0f);
                m.data.at(0, y, x) = std::max(m.data.at(0, y, x), mag);
            }
    }
    return m;
}

// ---- straight line segments (MLSD stand-in) ----------------------------

struct LineSegment {
    double x0, y0, x1, y1;
    double theta, rho;  // line parameters: x cos t + y sin t = rho
    int length;
};

struct MlsdParams {
    float edge_threshold = 0.12f;
    int min_votes = 12;
    int min_length = 22;    // px of contiguous support
    double band = 1.25;     // px distance from line counted as support
    int gap_tolerance = 2;  // px gaps bridged inside a run
};

// Unsmoothed per-channel Sobel: 2px-wide ink with contrast-independent
// localization, which is what the accumulator needs (edge_map's smoothed
// response spreads with contrast and would fatten curved outlines into
// straight-ish runs).
inline std::vector<std::pair<int, int>> sharp_edge_points(const Tensorf& image,
                                                          float threshold) {
    int H = image.shape[1], W = image.shape[2];
    std::vector<std::pair<int, int>> pts;
    auto at = [&](int c, int y, int x) {
        y = y < 0 ? 0 : (y >= H ? H - 1 : y);
        x = x < 0 ? 0 : (x >= W ? W - 1 : x);
        return image.at(c, y, x);
    };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float best = 0;
            for (int c = 0; c < 3; ++c) {
                float gx = (at(c, y - 1, x + 1) + 2 * at(c, y, x + 1) + at(c, y + 1, x + 1)) -
                           (at(c, y - 1, x - 1) + 2 * at(c, y, x - 1) + at(c, y + 1, x - 1));
                float gy = (at(c, y + 1, x - 1) + 2 * at(c, y + 1, x) + at(c, y + 1, x + 1)) -
                           (at(c, y - 1, x - 1) + 2 * at(c, y - 1, x) + at(c, y - 1, x + 1));
                best = std::max(best, std::sqrt(gx * gx + gy * gy) / 4.0f);
            }
            if (best > threshold) pts.push_back({x, y});
        }
    return pts;
}

// Iterative Hough: accept the best-supported line, erase its ink (full
// stroke width, both edge ridges), re-accumulate, repeat.  Erasure is what
// keeps one physical stroke from spawning several near-parallel detections.
inline std::vector<LineSegment> detect_line_segments(const Tensorf& image,
                                                     const MlsdParams& p = {}) {
    int H = image.shape[1], W = image.shape[2];
    std::vector<std::pair<int, int>> pts = sharp_edge_points(image, p.edge_threshold);

    const int n_theta = 180;
    const double pi = 3.14159265358979323846;
    int rho_max = static_cast<int>(std::ceil(std::hypot(W, H)));
    int n_rho = 2 * rho_max + 1;
    std::vector<double> cs(n_theta), sn(n_theta);
    for (int t = 0; t < n_theta; ++t) {
        cs[t] = std::cos(t * pi / n_theta);
        sn[t] = std::sin(t * pi / n_theta);
    }

    struct Run {
        int length = -1;
        double s0 = 0, s1 = 0;
    };
    auto longest_run = [&](double ct, double st, double rho) {
        std::vector<double> proj;
        for (auto [x, y] : pts)
            if (std::abs(x * ct + y * st - rho) <= p.band) proj.push_back(y * ct - x * st);
        Run r;
        if (proj.empty()) return r;
        std::sort(proj.begin(), proj.end());
        size_t best_lo = 0, best_hi = 0, lo = 0;
        for (size_t i = 1; i <= proj.size(); ++i) {
            if (i == proj.size() || proj[i] - proj[i - 1] > p.gap_tolerance) {
                if (proj[i - 1] - proj[lo] > proj[best_hi] - proj[best_lo]) {
                    best_lo = lo;
                    best_hi = i - 1;
                }
                lo = i;
            }
        }
        r.length = static_cast<int>(std::lround(proj[best_hi] - proj[best_lo]));
        r.s0 = proj[best_lo];
        r.s1 = proj[best_hi];
        return r;
    };

    std::vector<LineSegment> segs;
    const int max_lines = 16;
    std::vector<int> acc(static_cast<size_t>(n_theta) * n_rho);
    while (static_cast<int>(segs.size()) < max_lines && !pts.empty()) {
        std::fill(acc.begin(), acc.end(), 0);
        for (auto [x, y] : pts)
            for (int t = 0; t < n_theta; ++t) {
                int r = static_cast<int>(std::lround(x * cs[t] + y * sn[t])) + rho_max;
                ++acc[static_cast<size_t>(t) * n_rho + r];
            }
        // among the top-voted peaks, pick the one with the longest run
        struct Peak {
            int votes, t, r;
        };
        std::vector<Peak> peaks;
        for (int t = 0; t < n_theta; ++t)
            for (int r = 0; r < n_rho; ++r)
                if (acc[static_cast<size_t>(t) * n_rho + r] >= p.min_votes)
                    peaks.push_back({acc[static_cast<size_t>(t) * n_rho + r], t, r});
        if (peaks.empty()) break;
        std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
            if (a.votes != b.votes) return a.votes > b.votes;
            if (a.t != b.t) return a.t < b.t;
            return a.r < b.r;
        });
        if (peaks.size() > 12) peaks.resize(12);
        int best_idx = -1;
        Run best;
        for (size_t i = 0; i < peaks.size(); ++i) {
            Run r = longest_run(cs[peaks[i].t], sn[peaks[i].t],
                                static_cast<double>(peaks[i].r - rho_max));
            if (r.length > best.length) {
                best = r;
                best_idx = static_cast<int>(i);
            }
        }
        if (best_idx < 0 || best.length < p.min_length) break;
        const Peak& k = peaks[static_cast<size_t>(best_idx)];
        double ct = cs[k.t], st = sn[k.t], rho = k.r - rho_max;
        double dx = -st, dy = ct;
        segs.push_back({rho * ct + best.s0 * dx, rho * st + best.s0 * dy,
                        rho * ct + best.s1 * dx, rho * st + best.s1 * dy, k.t * pi / n_theta,
                        rho, best.length});
        // erase the stroke's ink: everything near the accepted span
        const double wipe = 3.5;
        std::vector<std::pair<int, int>> rest;
        for (auto [x, y] : pts) {
            double d = x * ct + y * st - rho;
            double s = y * ct - x * st;
            bool near = std::abs(d) <= wipe && s >= best.s0 - 3.0 && s <= best.s1 + 3.0;
            if (!near) rest.push_back({x, y});
        }
        if (rest.size() == pts.size()) break;  // no progress
        pts.swap(rest);
    }
    return segs;
}

inline LocalConditionMap line_segments(const Tensorf& image, const MlsdParams& p = {}) {
    int H = image.shape[1], W = image.shape[2];
    LocalConditionMap m{CondKind::mlsd, Tensorf({1, H, W}), ""};
    for (const auto& s : detect_line_segments(image, p)) {
        int steps = std::max(1, static_cast<int>(std::ceil(std::hypot(s.x1 - s.x0, s.y1 - s.y0))));
        for (int i = 0; i <= steps; ++i) {
            double t = static_cast<double>(i) / steps;
            int x = static_cast<int>(std::lround(s.x0 + t * (s.x1 - s.x0)));
            int y = static_cast<int>(std::lround(s.y0 + t * (s.y1 - s.y0)));
            if (x >= 0 && x < W && y >= 0 && y < H) m.data.at(0, y, x) = 1.0f;
        }
    }
    return m;
}

// ---- depth proxy --------------------------------------------------------

// Class-height map mixed with its own blur: smooth gradients at region
// boundaries while keeping strict building > water separation.
inline LocalConditionMap depth_from_seg(const std::vector<uint8_t>& seg, int H, int W) {
    std::vector<float> h(static_cast<size_t>(H) * W);
    for (size_t i = 0; i < h.size(); ++i)
        h[i] = synth::class_heights()[seg[i]];
    auto blurred = gauss3(gauss3(h, H, W), H, W);
    LocalConditionMap m{CondKind::depth, Tensorf({1, H, W}), ""};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            size_t i = static_cast<size_t>(y) * W + x;
            m.data.at(0, y, x) = clamp01(0.7f * h[i] + 0.3f * blurred[i]);
        }
    return m;
}

inline LocalConditionMap depth_proxy(const synth::RenderedTile& tile) {
    auto m = depth_from_seg(tile.seg, tile.height(), tile.width());
    return m;
}

// ---- sketch (thinned edges) ---------------------------------------------

namespace detail {

// Zhang-Suen thinning on a binary grid.
inline void zhang_suen(std::vector<uint8_t>& img, int H, int W) {
    auto at = [&](int y, int x) -> uint8_t {
        return (y < 0 || y >= H || x < 0 || x >= W) ? 0 : img[static_cast<size_t>(y) * W + x];
    };
    bool changed = true;
    std::vector<size_t> kill;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            kill.clear();
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    if (!at(y, x)) continue;
                    uint8_t p2 = at(y - 1, x), p3 = at(y - 1, x + 1), p4 = at(y, x + 1),
                            p5 = at(y + 1, x + 1), p6 = at(y + 1, x), p7 = at(y + 1, x - 1),
                            p8 = at(y, x - 1), p9 = at(y - 1, x - 1);
                    int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    if (b < 2 || b > 6) continue;
                    int a = (p2 == 0 && p3 == 1) + (p3 == 0 && p4 == 1) + (p4 == 0 && p5 == 1) +
                            (p5 == 0 && p6 == 1) + (p6 == 0 && p7 == 1) + (p7 == 0 && p8 == 1) +
                            (p8 == 0 && p9 == 1) + (p9 == 0 && p2 == 1);
                    if (a != 1) continue;
                    if (pass == 0) {
                        if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
                    } else {
                        if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
                    }
                    kill.push_back(static_cast<size_t>(y) * W + x);
                }
            if (!kill.empty()) changed = true;
            for (size_t i : kill) img[i] = 0;
        }
    }
}

}  // namespace detail

inline LocalConditionMap sketch(const Tensorf& image, float threshold = 0.08f) {
    int H = image.shape[1], W = image.shape[2];
    auto edges = edge_map(image);
    std::vector<uint8_t> bin(static_cast<size_t>(H) * W, 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            bin[static_cast<size_t>(y) * W + x] = edges.data.at(0, y, x) >= threshold ? 1 : 0;
    detail::zhang_suen(bin, H, W);
    LocalConditionMap m{CondKind::sketch, Tensorf({1, H, W}), ""};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            m.data.at(0, y, x) = bin[static_cast<size_t>(y) * W + x] ? 1.0f : 0.0f;
    return m;
}

// ---- road extraction ----------------------------------------------------

// Asphalt is the only near-gray class in the renderer, and both the haze
// blend and the luminance-only texture preserve channel ratios, so
// low chroma is a clean road signature even on hazy or generated images.
inline LocalConditionMap road_extract(const Tensorf& image, float chroma_threshold = 0.035f) {
    int H = image.shape[1], W = image.shape[2];
    std::vector<uint8_t> mask(static_cast<size_t>(H) * W, 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float r = image.at(0, y, x), g = image.at(1, y, x), b = image.at(2, y, x);
            float mx = std::max({r, g, b}), mn = std::min({r, g, b});
            mask[static_cast<size_t>(y) * W + x] = (mx - mn) < chroma_threshold ? 1 : 0;
        }
    // 3x3 majority vote clears isolated speckle
    std::vector<uint8_t> clean(mask.size(), 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int pos = 0, tot = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    ++tot;
                    pos += mask[static_cast<size_t>(yy) * W + xx];
                }
            clean[static_cast<size_t>(y) * W + x] = (2 * pos > tot) ? 1 : 0;
        }
    LocalConditionMap m{CondKind::road, Tensorf({1, H, W}), ""};
    for (size_t i = 0; i < clean.size(); ++i) m.data[static_cast<int64_t>(i)] = clean[i];
    return m;
}

inline LocalConditionMap road_from_spec(const synth::RenderedTile& tile) {
    LocalConditionMap m{CondKind::road, Tensorf({1, tile.height(), tile.width()}), ""};
    for (size_t i = 0; i < tile.road.size(); ++i) m.data[static_cast<int64_t>(i)] = tile.road[i];
    return m;
}

// ---- segmentation -------------------------------------------------------

inline LocalConditionMap seg_onehot(const std::vector<uint8_t>& seg, int H, int W) {
    LocalConditionMap m{CondKind::segmentation, Tensorf({synth::kNumSegClasses, H, W}), ""};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            m.data.at(seg[static_cast<size_t>(y) * W + x], y, x) = 1.0f;
    return m;
}

inline LocalConditionMap seg_from_spec(const synth::RenderedTile& tile) {
    return seg_onehot(tile.seg, tile.height(), tile.width());
}

// ---- metadata quantization ----------------------------------------------

enum MetaField {
    kMetaYear = 0,
    kMetaMonth = 1,
    kMetaDay = 2,
    kMetaGsd = 3,
    kMetaLatitude = 4,
    kMetaLongitude = 5,
    kMetaCloudCover = 6,
};
inline constexpr int kNumMetaFields = 7;

inline const char* meta_field_name(int f) {
    static const char* names[kNumMetaFields] = {"year", "month",     "day",      "gsd",
                                                "latitude", "longitude", "cloud_cover"};
    return names[f];
}

// Bin counts: year 10 (config range), month 12, day 31, GSD 8 logarithmic,
// latitude 18 x 10 degrees, longitude 36 x 10 degrees, cloud cover deciles.
inline constexpr std::array<int, kNumMetaFields> kMetaBins = {10, 12, 31, 8, 18, 36, 10};
inline constexpr int kMetaYearMin = 2015;
inline constexpr double kMetaGsdMin = 0.25;  // bin b covers [0.25*2^b, 0.25*2^(b+1))

struct QuantizedMetadata {
    std::array<int, kNumMetaFields> bins{};
    std::array<int, kNumMetaFields> n_bins = kMetaBins;
    std::vector<int> text_form;  // token ids over the closed vocabulary
};

inline int cloud_adjective_bin(double cloud_cover) {
    if (cloud_cover < 0.25) return 0;
    if (cloud_cover < 0.5) return 1;
    if (cloud_cover < 0.75) return 2;
    return 3;
}

inline const char* cloud_adjective(double cloud_cover) {
    static const char* adj[4] = {"clear", "hazy", "cloudy", "overcast"};
    return adj[cloud_adjective_bin(cloud_cover)];
}

inline const char* month_word(int month) {
    static const char* names[12] = {"january", "february", "march",     "april",
                                    "may",     "june",     "july",      "august",
                                    "september", "october", "november", "december"};
    return names[month - 1];
}

// Fixed-template phrase: month name + cloudiness adjective.
inline std::vector<int> metadata_to_text(const synth::MetadataRecord& m) {
    m.validate();
    const auto& v = synth::Vocab::standard();
    return {v.id(month_word(m.month)), v.id(cloud_adjective(m.cloud_cover))};
}

inline QuantizedMetadata quantize_metadata(const synth::MetadataRecord& m) {
    m.validate();
    QuantizedMetadata q;
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    q.bins[kMetaYear] = clampi(m.year - kMetaYearMin, 0, kMetaBins[kMetaYear] - 1);
    q.bins[kMetaMonth] = m.month - 1;
    q.bins[kMetaDay] = m.day - 1;
    q.bins[kMetaGsd] =
        clampi(static_cast<int>(std::floor(std::log2(m.gsd / kMetaGsdMin))), 0,
               kMetaBins[kMetaGsd] - 1);
    q.bins[kMetaLatitude] =
        clampi(static_cast<int>(std::floor((m.latitude + 90.0) / 10.0)), 0,
               kMetaBins[kMetaLatitude] - 1);
    q.bins[kMetaLongitude] =
        clampi(static_cast<int>(std::floor((m.longitude + 180.0) / 10.0)), 0,
               kMetaBins[kMetaLongitude] - 1);
    q.bins[kMetaCloudCover] =
        clampi(static_cast<int>(std::floor(m.cloud_cover * 10.0)), 0,
               kMetaBins[kMetaCloudCover] - 1);
    q.text_form = metadata_to_text(m);
    return q;
}

// Center value of a bin; quantize(record with bin_center) returns the bin.
inline double meta_bin_center(int field, int bin) {
    switch (field) {
        case kMetaYear: return kMetaYearMin + bin;
        case kMetaMonth: return bin + 1;
        case kMetaDay: return bin + 1;
        case kMetaGsd: return kMetaGsdMin * std::pow(2.0, bin + 0.5);
        case kMetaLatitude: return -90.0 + 10.0 * bin + 5.0;
        case kMetaLongitude: return -180.0 + 10.0 * bin + 5.0;
        case kMetaCloudCover: return bin / 10.0 + 0.05;
        default: throw InputError("meta_bin_center: bad field");
    }
}

// ---- persistence ---------------------------------------------------------

// Condition maps on disk: single-channel PNG; segmentation stored as raw
// class indices in one channel (converted back to one-hot on load).
inline void save_condition_png(const std::string& path, const LocalConditionMap& m) {
    int H = m.height(), W = m.width();
    ImageU8 img;
    img.w = W;
    img.h = H;
    img.channels = 1;
    img.data.resize(static_cast<size_t>(H) * W);
    if (m.kind == CondKind::segmentation) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                int best = 0;
                float bv = m.data.at(0, y, x);
                for (int c = 1; c < synth::kNumSegClasses; ++c)
                    if (m.data.at(c, y, x) > bv) {
                        bv = m.data.at(c, y, x);
                        best = c;
                    }
                img.data[static_cast<size_t>(y) * W + x] = static_cast<uint8_t>(best);
            }
    } else {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                img.data[static_cast<size_t>(y) * W + x] =
                    static_cast<uint8_t>(clamp01(m.data.at(0, y, x)) * 255.0f + 0.5f);
    }
    write_png(path, img);
}

inline LocalConditionMap load_condition_png(const std::string& path, CondKind kind) {
    ImageU8 img = read_png(path);
    require<InputError>(img.channels == 1, "condition map must be single channel: " + path);
    int H = img.h, W = img.w;
    if (kind == CondKind::segmentation) {
        std::vector<uint8_t> seg(img.data.begin(), img.data.end());
        for (auto& s : seg)
            require<InputError>(s < synth::kNumSegClasses,
                                "segmentation class out of range in " + path);
        auto m = seg_onehot(seg, H, W);
        m.source_id = path;
        return m;
    }
    LocalConditionMap m{kind, Tensorf({1, H, W}), path};
    for (int64_t i = 0; i < m.data.numel(); ++i) m.data[i] = img.data[static_cast<size_t>(i)] / 255.0f;
    return m;
}

}  // namespace crsdiff::annot

#pragma once

// Rasterizes a SceneSpec into the image / segmentation / road-map triple.
// Paint order is terrain -> playgrounds -> buildings -> roads, so every
// road pixel carries the road class in the segmentation.  Metadata has
// deterministic pixel-level effects: month drives a hue tint table and
// cloud_cover blends the image toward white, which strictly raises mean
// brightness.

#include <array>
#include <cmath>

#include "crsdiff/core/tensor.hpp"
#include "crsdiff/synth/caption.hpp"
#include "crsdiff/synth/scene.hpp"

namespace crsdiff::synth {

struct RenderedTile {
    Tensorf image;             // [3,H,W] in [0,1]
    std::vector<uint8_t> seg;  // H*W class ids
    std::vector<uint8_t> road; // H*W, 0/1
    std::vector<int> caption;  // token ids, fixed length
    SceneSpec spec;

    int width() const { return spec.width; }
    int height() const { return spec.height; }
};

namespace geom {

inline bool point_in_polygon(double px, double py, const std::vector<Vec2>& poly) {
    bool inside = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 &a = poly[i], &b = poly[j];
        if ((a.y > py) != (b.y > py)) {
            double t = (py - a.y) / (b.y - a.y);
            if (px < a.x + t * (b.x - a.x)) inside = !inside;
        }
    }
    return inside;
}

inline double dist_point_segment(double px, double py, const Vec2& a, const Vec2& b) {
    double vx = b.x - a.x, vy = b.y - a.y;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::hypot(dx, dy);
}

inline double dist_point_polyline(double px, double py, const std::vector<Vec2>& line) {
    double d = 1e30;
    for (size_t i = 0; i + 1 < line.size(); ++i)
        d = std::min(d, dist_point_segment(px, py, line[i], line[i + 1]));
    return d;
}

inline double polyline_length(const std::vector<Vec2>& line) {
    double len = 0;
    for (size_t i = 0; i + 1 < line.size(); ++i)
        len += std::hypot(line[i + 1].x - line[i].x, line[i + 1].y - line[i].y);
    return len;
}

}  // namespace geom

// Base color per segmentation class.  Roads are deliberately the only
// near-gray class so the color-based road extractor has a clean margin.
inline const std::array<std::array<float, 3>, kNumSegClasses>& class_colors() {
    static const std::array<std::array<float, 3>, kNumSegClasses> colors = {{
        {0.45f, 0.42f, 0.34f},  // background: dry plain
        {0.52f, 0.16f, 0.14f},  // building: dark red roof
        {0.28f, 0.28f, 0.28f},  // road: neutral asphalt gray
        {0.10f, 0.22f, 0.45f},  // water
        {0.62f, 0.52f, 0.36f},  // barren: tan
        {0.12f, 0.32f, 0.14f},  // forest
        {0.50f, 0.55f, 0.22f},  // agricultural
        {0.80f, 0.45f, 0.20f},  // playground
    }};
    return colors;
}

// Class height table for the depth proxy (buildings high, water low).
inline const std::array<float, kNumSegClasses>& class_heights() {
    static const std::array<float, kNumSegClasses> h = {0.20f, 1.00f, 0.15f, 0.05f,
                                                        0.25f, 0.55f, 0.30f, 0.35f};
    return h;
}

// Monthly tint table.  Ratios kept within a few percent so that the
// near-zero chroma of asphalt survives every month (the road extractor
// depends on it).
inline const std::array<std::array<float, 3>, 12>& month_tints() {
    static const std::array<std::array<float, 3>, 12> tints = {{
        {0.97f, 0.99f, 1.04f},  // january: cool
        {0.97f, 1.00f, 1.03f},
        {0.99f, 1.02f, 0.99f},  // spring greens
        {0.98f, 1.03f, 0.98f},
        {0.99f, 1.04f, 0.97f},
        {1.02f, 1.03f, 0.96f},  // summer warmth
        {1.04f, 1.02f, 0.95f},
        {1.04f, 1.01f, 0.95f},
        {1.03f, 1.00f, 0.96f},  // autumn
        {1.02f, 0.99f, 0.97f},
        {0.99f, 0.99f, 1.01f},
        {0.97f, 0.99f, 1.04f},  // december: cool
    }};
    return tints;
}

inline constexpr double kHazeStrength = 0.55;

// Multiplicative luminance texture keeps channel ratios intact.
inline float texture_noise(uint64_t seed, int x, int y) {
    uint64_t s = seed ^ (static_cast<uint64_t>(x) * 0x9e3779b97f4a7c15ULL) ^
                 (static_cast<uint64_t>(y) * 0xc2b2ae3d27d4eb4fULL);
    uint64_t h = splitmix64(s);
    return 1.0f + 0.05f * (static_cast<float>(h >> 40) / 16777216.0f - 0.5f);
}

inline std::vector<uint8_t> rasterize_segmentation(const SceneSpec& spec) {
    const int W = spec.width, H = spec.height;
    std::vector<uint8_t> seg(static_cast<size_t>(W) * H, kBackground);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double px = x + 0.5, py = y + 0.5;
            uint8_t cls = spec.terrain_regions.empty() ? kBackground
                                                       : spec.terrain_regions[0].class_id;
            for (size_t i = 1; i < spec.terrain_regions.size(); ++i)
                if (geom::point_in_polygon(px, py, spec.terrain_regions[i].polygon))
                    cls = spec.terrain_regions[i].class_id;
            for (const auto& pg : spec.playgrounds)
                if (std::hypot(px - pg.cx, py - pg.cy) <= pg.radius) cls = kPlayground;
            for (const auto& b : spec.buildings)
                if (px >= b.x0 && px <= b.x1 && py >= b.y0 && py <= b.y1) cls = kBuilding;
            for (const auto& r : spec.roads)
                if (geom::dist_point_polyline(px, py, r.polyline) <= r.width * 0.5)
                    cls = kRoad;
            seg[static_cast<size_t>(y) * W + x] = cls;
        }
    return seg;
}

inline RenderedTile render(const SceneSpec& spec) {
    spec.metadata.validate();
    require<InputError>(!spec.terrain_regions.empty(), "render: scene has no terrain");
    const int W = spec.width, H = spec.height;

    RenderedTile tile;
    tile.spec = spec;
    tile.seg = rasterize_segmentation(spec);
    tile.road.assign(static_cast<size_t>(W) * H, 0);
    tile.image = Tensorf({3, H, W});

    const auto& colors = class_colors();
    const auto& tint = month_tints()[static_cast<size_t>(spec.metadata.month - 1)];
    const float haze = static_cast<float>(kHazeStrength * spec.metadata.cloud_cover);
    const uint64_t tex_seed = mix_seed(spec.seed, 100);

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            uint8_t cls = tile.seg[static_cast<size_t>(y) * W + x];
            if (cls == kRoad) tile.road[static_cast<size_t>(y) * W + x] = 1;
            float n = texture_noise(tex_seed, x, y);
            for (int c = 0; c < 3; ++c) {
                float v = colors[cls][static_cast<size_t>(c)] * n * tint[static_cast<size_t>(c)];
                v = (1.0f - haze) * v + haze;  // blend toward white
                tile.image.at(c, y, x) = clamp01(v);
            }
        }

    tile.caption = caption_from_scene(spec);
    return tile;
}

}  // namespace crsdiff::synth

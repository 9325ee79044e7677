#pragma once

// Symbolic scene description for one synthetic satellite tile plus the
// seeded generator that produces it.  Everything downstream (image,
// segmentation, road map, caption, condition maps) derives from a
// SceneSpec, so ground truth for all nine conditioning signals is exact.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crsdiff/core/common.hpp"
#include "crsdiff/core/rng.hpp"

namespace crsdiff::synth {

// The eight segmentation categories.
enum SegClass : uint8_t {
    kBackground = 0,
    kBuilding = 1,
    kRoad = 2,
    kWater = 3,
    kBarren = 4,
    kForest = 5,
    kAgricultural = 6,
    kPlayground = 7,
};
inline constexpr int kNumSegClasses = 8;

inline const char* seg_class_name(int c) {
    static const char* names[kNumSegClasses] = {"background", "building",     "road",
                                                "water",      "barren",       "forest",
                                                "agricultural", "playground"};
    return names[c];
}

struct MetadataRecord {
    int year = 2020;
    int month = 6;
    int day = 15;
    double gsd = 1.0;  // meters per pixel
    double latitude = 0.0;
    double longitude = 0.0;
    double cloud_cover = 0.0;

    static int days_in_month(int year, int month) {
        static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        int n = d[month - 1];
        bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        if (month == 2 && leap) n = 29;
        return n;
    }

    void validate() const {
        require<InputError>(month >= 1 && month <= 12, "metadata: month out of range");
        require<InputError>(day >= 1 && day <= days_in_month(year, month),
                            "metadata: day invalid for month");
        require<InputError>(gsd > 0.0, "metadata: gsd must be positive");
        require<InputError>(latitude >= -90.0 && latitude <= 90.0,
                            "metadata: latitude out of range");
        require<InputError>(longitude >= -180.0 && longitude <= 180.0,
                            "metadata: longitude out of range");
        require<InputError>(cloud_cover >= 0.0 && cloud_cover <= 1.0,
                            "metadata: cloud_cover out of range");
    }
};

struct Vec2 {
    double x = 0, y = 0;
};

struct TerrainRegion {
    std::vector<Vec2> polygon;
    uint8_t class_id = kBackground;
};

struct Road {
    std::vector<Vec2> polyline;
    double width = 3.0;  // pixels
};

struct Building {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // axis-aligned, x0<x1, y0<y1
};

struct Playground {
    double cx = 0, cy = 0, radius = 4.0;
};

struct SceneSpec {
    uint64_t seed = 0;
    int width = 64, height = 64;
    std::vector<TerrainRegion> terrain_regions;  // first region covers the full tile
    std::vector<Road> roads;
    std::vector<Building> buildings;
    std::vector<Playground> playgrounds;
    MetadataRecord metadata;
};

struct SceneConfig {
    int width = 64, height = 64;
    int terrain_patch_min = 0, terrain_patch_max = 3;
    int road_min = 0, road_max = 2;
    int building_min = 0, building_max = 4;
    int playground_min = 0, playground_max = 1;
    double road_width_min = 2.0, road_width_max = 4.0;
    int year_min = 2015, year_max = 2024;

    void validate() const {
        require<ConfigError>(width >= 16 && height >= 16, "scene config: tile too small");
        require<ConfigError>(terrain_patch_min >= 0 && terrain_patch_min <= terrain_patch_max,
                             "scene config: bad terrain patch range");
        require<ConfigError>(road_min >= 0 && road_min <= road_max,
                             "scene config: bad road range");
        require<ConfigError>(building_min >= 0 && building_min <= building_max,
                             "scene config: bad building range");
        require<ConfigError>(playground_min >= 0 && playground_min <= playground_max,
                             "scene config: bad playground range");
        require<ConfigError>(road_width_min > 0 && road_width_min <= road_width_max,
                             "scene config: bad road width range");
        require<ConfigError>(year_min <= year_max, "scene config: bad year range");
    }
};

// Terrain classes the generator draws from (objects are placed on top).
inline const std::array<uint8_t, 5>& terrain_class_pool() {
    static const std::array<uint8_t, 5> pool = {kBackground, kWater, kBarren, kForest,
                                                kAgricultural};
    return pool;
}

namespace detail {

// Convex blob: vertices at sorted random angles around a center.
inline std::vector<Vec2> random_blob(Rng& rng, double cx, double cy, double rmin, double rmax) {
    int nv = static_cast<int>(rng.uniform_int(5, 8));
    std::vector<double> angles(static_cast<size_t>(nv));
    for (auto& a : angles) a = rng.uniform(0.0, 6.283185307179586);
    std::sort(angles.begin(), angles.end());
    std::vector<Vec2> poly;
    poly.reserve(static_cast<size_t>(nv));
    for (double a : angles) {
        double r = rng.uniform(rmin, rmax);
        poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    }
    return poly;
}

}  // namespace detail

inline SceneSpec generate_scene(uint64_t seed, const SceneConfig& cfg) {
    cfg.validate();
    SceneSpec spec;
    spec.seed = seed;
    spec.width = cfg.width;
    spec.height = cfg.height;

    const double W = cfg.width, H = cfg.height;

    // Base terrain covers the whole tile.
    Rng terrain_rng(mix_seed(seed, 1));
    TerrainRegion base;
    base.polygon = {{0, 0}, {W, 0}, {W, H}, {0, H}};
    base.class_id = terrain_class_pool()[static_cast<size_t>(
        terrain_rng.uniform_int(0, static_cast<int64_t>(terrain_class_pool().size()) - 1))];
    spec.terrain_regions.push_back(base);

    int n_patches =
        static_cast<int>(terrain_rng.uniform_int(cfg.terrain_patch_min, cfg.terrain_patch_max));
    for (int i = 0; i < n_patches; ++i) {
        TerrainRegion patch;
        uint8_t cls;
        do {
            cls = terrain_class_pool()[static_cast<size_t>(terrain_rng.uniform_int(
                0, static_cast<int64_t>(terrain_class_pool().size()) - 1))];
        } while (cls == base.class_id);
        patch.class_id = cls;
        double cx = terrain_rng.uniform(0.15 * W, 0.85 * W);
        double cy = terrain_rng.uniform(0.15 * H, 0.85 * H);
        patch.polygon = detail::random_blob(terrain_rng, cx, cy, 0.12 * W, 0.38 * W);
        spec.terrain_regions.push_back(std::move(patch));
    }

    // Roads: waypoint chains kept strictly inside the tile; segments stay
    // inside because the tile is convex.
    Rng road_rng(mix_seed(seed, 2));
    int n_roads = static_cast<int>(road_rng.uniform_int(cfg.road_min, cfg.road_max));
    for (int i = 0; i < n_roads; ++i) {
        Road r;
        r.width = road_rng.uniform(cfg.road_width_min, cfg.road_width_max);
        int npts = static_cast<int>(road_rng.uniform_int(2, 3));
        double margin = r.width * 0.5 + 1.0;
        // endpoints far apart so roads span a good part of the tile
        Vec2 a{road_rng.uniform(margin, W - margin), road_rng.uniform(margin, H - margin)};
        Vec2 b;
        double dist = 0;
        do {
            b = {road_rng.uniform(margin, W - margin), road_rng.uniform(margin, H - margin)};
            dist = std::hypot(b.x - a.x, b.y - a.y);
        } while (dist < 0.45 * std::min(W, H));
        r.polyline.push_back(a);
        if (npts == 3) {
            Vec2 mid{(a.x + b.x) / 2 + road_rng.uniform(-0.12 * W, 0.12 * W),
                     (a.y + b.y) / 2 + road_rng.uniform(-0.12 * H, 0.12 * H)};
            mid.x = std::min(std::max(mid.x, margin), W - margin);
            mid.y = std::min(std::max(mid.y, margin), H - margin);
            r.polyline.push_back(mid);
        }
        r.polyline.push_back(b);
        spec.roads.push_back(std::move(r));
    }

    Rng bld_rng(mix_seed(seed, 3));
    int n_bld = static_cast<int>(bld_rng.uniform_int(cfg.building_min, cfg.building_max));
    for (int i = 0; i < n_bld; ++i) {
        double w = bld_rng.uniform(0.06 * W, 0.18 * W);
        double h = bld_rng.uniform(0.06 * H, 0.18 * H);
        double x0 = bld_rng.uniform(1.0, W - w - 1.0);
        double y0 = bld_rng.uniform(1.0, H - h - 1.0);
        spec.buildings.push_back({x0, y0, x0 + w, y0 + h});
    }

    Rng pg_rng(mix_seed(seed, 4));
    int n_pg = static_cast<int>(pg_rng.uniform_int(cfg.playground_min, cfg.playground_max));
    for (int i = 0; i < n_pg; ++i) {
        double r = pg_rng.uniform(0.06 * std::min(W, H), 0.12 * std::min(W, H));
        spec.playgrounds.push_back(
            {pg_rng.uniform(r + 1.0, W - r - 1.0), pg_rng.uniform(r + 1.0, H - r - 1.0), r});
    }

    Rng meta_rng(mix_seed(seed, 5));
    MetadataRecord& m = spec.metadata;
    m.year = static_cast<int>(meta_rng.uniform_int(cfg.year_min, cfg.year_max));
    m.month = static_cast<int>(meta_rng.uniform_int(1, 12));
    m.day = static_cast<int>(meta_rng.uniform_int(1, MetadataRecord::days_in_month(m.year, m.month)));
    m.gsd = std::exp(meta_rng.uniform(std::log(0.3), std::log(3.0)));
    m.latitude = meta_rng.uniform(-90.0, 90.0);
    m.longitude = meta_rng.uniform(-180.0, 180.0);
    m.cloud_cover = meta_rng.uniform(0.0, 0.95);
    m.validate();

    return spec;
}

}  // namespace crsdiff::synth

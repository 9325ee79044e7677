#include <doctest.h>

#include <filesystem>
#include <queue>

#include "crsdiff/annot/annotators.hpp"

using namespace crsdiff;
using namespace crsdiff::annot;
using namespace crsdiff::synth;

namespace {

Tensorf constant_image(float v, int H = 64, int W = 64) {
    Tensorf img({3, H, W});
    img.fill(v);
    return img;
}

SceneSpec flat_scene(uint8_t terrain) {
    SceneSpec s;
    s.seed = 5;
    s.width = 64;
    s.height = 64;
    s.terrain_regions.push_back({{{0, 0}, {64, 0}, {64, 64}, {0, 64}}, terrain});
    s.metadata.cloud_cover = 0.0;
    return s;
}

// Flood fill from the border over unset pixels; true if (cy,cx) is
// unreachable, i.e. the set pixels enclose it.
bool encloses(const Tensorf& mask, int cy, int cx) {
    int H = mask.shape[1], W = mask.shape[2];
    std::vector<uint8_t> visited(static_cast<size_t>(H) * W, 0);
    std::queue<std::pair<int, int>> q;
    auto try_push = [&](int y, int x) {
        if (y < 0 || y >= H || x < 0 || x >= W) return;
        size_t i = static_cast<size_t>(y) * W + x;
        if (visited[i] || mask.at(0, y, x) > 0.5f) return;
        visited[i] = 1;
        q.push({y, x});
    };
    for (int x = 0; x < W; ++x) {
        try_push(0, x);
        try_push(H - 1, x);
    }
    for (int y = 0; y < H; ++y) {
        try_push(y, 0);
        try_push(y, W - 1);
    }
    while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop();
        try_push(y - 1, x);
        try_push(y + 1, x);
        try_push(y, x - 1);
        try_push(y, x + 1);
    }
    return !visited[static_cast<size_t>(cy) * W + cx] && mask.at(0, cy, cx) < 0.5f;
}

double iou(const Tensorf& a, const std::vector<uint8_t>& b) {
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        bool pa = a[i] > 0.5f, pb = b[static_cast<size_t>(i)] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TEST_CASE("edge_map: zero on constant image, peak at a step edge") {
    auto zero = edge_map(constant_image(0.5f));
    CHECK(zero.data.max() == 0.0f);
    CHECK(zero.data.min() == 0.0f);

    // vertical step at column k: response concentrated at k-1..k
    const int k = 30;
    Tensorf img({3, 64, 64});
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = x < k ? 0.2f : 0.8f;
    auto e = edge_map(img);
    for (int y = 2; y < 62; ++y) {
        int argmax = 0;
        float best = -1;
        for (int x = 0; x < 64; ++x)
            if (e.data.at(0, y, x) > best) {
                best = e.data.at(0, y, x);
                argmax = x;
            }
        CHECK(argmax >= k - 1);
        CHECK(argmax <= k + 1);
        CHECK(best > 0.2f);
    }
    CHECK(e.data.max() <= 1.0f);
    CHECK(e.data.min() >= 0.0f);
}

TEST_CASE("edge_map: response along all four building sides") {
    SceneSpec s = flat_scene(kAgricultural);
    s.buildings.push_back({20, 24, 40, 44});
    auto tile = render(s);
    auto e = edge_map(tile.image);
    // probe the middle of each side
    CHECK(e.data.at(0, 24, 30) > 0.1f);  // top
    CHECK(e.data.at(0, 44, 30) > 0.1f);  // bottom
    CHECK(e.data.at(0, 34, 20) > 0.1f);  // left
    CHECK(e.data.at(0, 34, 40) > 0.1f);  // right
}

TEST_CASE("line_segments: blank, straight road, circle") {
    auto blank = line_segments(constant_image(0.4f));
    CHECK(blank.data.max() == 0.0f);

    // one long straight road: exactly one segment, close to the axis
    SceneSpec s = flat_scene(kBarren);
    s.roads.push_back({{{6, 14}, {58, 46}}, 3.0});
    auto tile = render(s);
    auto segs = detect_line_segments(tile.image);
    REQUIRE(segs.size() == 1);
    // lateral distance of both endpoints to the (extended) road axis
    const auto& a = s.roads[0].polyline[0];
    const auto& b = s.roads[0].polyline[1];
    double nx = -(b.y - a.y), ny = b.x - a.x;
    double nl = std::hypot(nx, ny);
    auto lateral = [&](double px, double py) {
        return std::abs((px - a.x) * nx + (py - a.y) * ny) / nl;
    };
    CHECK(lateral(segs[0].x0, segs[0].y0) <= 2.0);
    CHECK(lateral(segs[0].x1, segs[0].y1) <= 2.0);
    CHECK(segs[0].length >= 22);

    // circle outline: every chord's contiguous support stays short
    Tensorf circ({3, 64, 64});
    circ.fill(0.2f);
    const double r = 10.0, cx = 32.0, cy = 32.0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
            if (std::abs(d - r) < 0.7)
                for (int c = 0; c < 3; ++c) circ.at(c, y, x) = 0.9f;
        }
    auto csegs = detect_line_segments(circ);
    CHECK(csegs.empty());
}

TEST_CASE("depth proxy: flat water, building prominence, monotone in buildings") {
    SceneSpec water = flat_scene(kWater);
    auto wt = render(water);
    auto wd = depth_proxy(wt);
    CHECK(wd.data.max() == wd.data.min());
    CHECK(wd.data.max() < 0.1f);

    SceneSpec farm = flat_scene(kAgricultural);
    farm.buildings.push_back({24, 24, 40, 40});
    auto ft = render(farm);
    auto fd = depth_proxy(ft);
    float in_building = -1, outside = -1;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            bool inside = ft.seg[static_cast<size_t>(y) * 64 + x] == kBuilding;
            float v = fd.data.at(0, y, x);
            if (inside)
                in_building = std::max(in_building, v);
            else
                outside = std::max(outside, v);
        }
    CHECK(in_building > outside);

    // building pixels strictly above water pixels in a mixed tile
    SceneSpec mixed = flat_scene(kWater);
    mixed.buildings.push_back({10, 10, 22, 22});
    auto mt = render(mixed);
    auto md = depth_proxy(mt);
    float min_building = 2.0f, max_water = -1.0f;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            float v = md.data.at(0, y, x);
            if (mt.seg[static_cast<size_t>(y) * 64 + x] == kBuilding)
                min_building = std::min(min_building, v);
            else
                max_water = std::max(max_water, v);
        }
    CHECK(min_building > max_water);

    // adding a building strictly increases the depth sum
    double sum_before = depth_proxy(render(farm)).data.sum();
    farm.buildings.push_back({48, 8, 60, 20});
    double sum_after = depth_proxy(render(farm)).data.sum();
    CHECK(sum_after > sum_before);
}

TEST_CASE("sketch: empty on constant, closed thin outline, contained in dilated edges") {
    auto empty = sketch(constant_image(0.7f));
    CHECK(empty.data.max() == 0.0f);

    SceneSpec s = flat_scene(kBarren);
    s.buildings.push_back({20, 20, 44, 44});
    auto tile = render(s);
    auto sk = sketch(tile.image);
    CHECK(sk.data.sum() > 0);

    // 1px strokes: no fully set 2x2 block
    for (int y = 0; y + 1 < 64; ++y)
        for (int x = 0; x + 1 < 64; ++x) {
            int filled = (sk.data.at(0, y, x) > 0.5f) + (sk.data.at(0, y, x + 1) > 0.5f) +
                         (sk.data.at(0, y + 1, x) > 0.5f) + (sk.data.at(0, y + 1, x + 1) > 0.5f);
            CHECK(filled < 4);
        }

    // outline encloses the building center
    CHECK(encloses(sk.data, 32, 32));

    // sketch support is contained in the dilated edge support
    auto e = edge_map(tile.image);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (sk.data.at(0, y, x) < 0.5f) continue;
            bool near_edge = false;
            for (int dy = -1; dy <= 1 && !near_edge; ++dy)
                for (int dx = -1; dx <= 1 && !near_edge; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < 64 && xx >= 0 && xx < 64 &&
                        e.data.at(0, yy, xx) >= 0.08f)
                        near_edge = true;
                }
            CHECK(near_edge);
        }
}

TEST_CASE("road_extract: spec-backed exact, image-backed calibrated") {
    SceneConfig cfg;
    cfg.road_min = 1;
    cfg.road_max = 1;
    int tested = 0;
    for (uint64_t seed = 0; seed < 24; ++seed) {
        auto tile = render(generate_scene(seed, cfg));
        // spec-backed equals stored road map exactly
        auto exact = road_from_spec(tile);
        for (int64_t i = 0; i < exact.data.numel(); ++i)
            CHECK(exact.data[i] == static_cast<float>(tile.road[static_cast<size_t>(i)]));
        // image-backed IoU against ground truth on moderate-haze tiles
        if (tile.spec.metadata.cloud_cover <= 0.5) {
            auto ext = road_extract(tile.image);
            CHECK(iou(ext.data, tile.road) >= 0.7);
            ++tested;
        }
    }
    CHECK(tested >= 5);

    // no-road tiles: under 1% positive pixels
    SceneConfig noroad = cfg;
    noroad.road_min = 0;
    noroad.road_max = 0;
    for (uint64_t seed = 100; seed < 112; ++seed) {
        auto tile = render(generate_scene(seed, noroad));
        auto ext = road_extract(tile.image);
        CHECK(ext.data.sum() < 0.01 * ext.data.numel());
    }
}

TEST_CASE("seg one-hot: exactness and unit sums") {
    SceneConfig cfg;
    auto tile = render(generate_scene(8, cfg));
    auto oh = seg_from_spec(tile);
    REQUIRE(oh.data.shape == std::vector<int>{8, 64, 64});
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            float sum = 0;
            for (int c = 0; c < 8; ++c) sum += oh.data.at(c, y, x);
            CHECK(sum == 1.0f);
            CHECK(oh.data.at(tile.seg[static_cast<size_t>(y) * 64 + x], y, x) == 1.0f);
        }
}

TEST_CASE("metadata quantization: bins, deciles, idempotence") {
    MetadataRecord m;
    m.year = 2020;
    m.month = 7;
    m.day = 14;
    m.gsd = 1.0;
    m.latitude = 12.0;
    m.longitude = -122.0;
    m.cloud_cover = 0.0;
    auto q = quantize_metadata(m);
    CHECK(q.bins[kMetaMonth] == 6);
    CHECK(q.bins[kMetaCloudCover] == 0);
    m.cloud_cover = 0.95;
    CHECK(quantize_metadata(m).bins[kMetaCloudCover] == 9);

    // idempotence over every field and bin
    for (int f = 0; f < kNumMetaFields; ++f)
        for (int b = 0; b < kMetaBins[static_cast<size_t>(f)]; ++b) {
            MetadataRecord r;
            r.year = 2020;
            r.month = 6;
            r.day = 10;
            r.gsd = 1.0;
            r.latitude = 0.0;
            r.longitude = 0.0;
            r.cloud_cover = 0.5;
            double center = meta_bin_center(f, b);
            switch (f) {
                case kMetaYear: r.year = static_cast<int>(center); break;
                case kMetaMonth: r.month = static_cast<int>(center); break;
                case kMetaDay:
                    r.month = 1;  // 31-day month keeps every day bin valid
                    r.day = static_cast<int>(center);
                    break;
                case kMetaGsd: r.gsd = center; break;
                case kMetaLatitude: r.latitude = center; break;
                case kMetaLongitude: r.longitude = center; break;
                case kMetaCloudCover: r.cloud_cover = center; break;
            }
            CHECK(quantize_metadata(r).bins[static_cast<size_t>(f)] == b);
        }

    CHECK_THROWS_AS(quantize_metadata([] {
                        MetadataRecord bad;
                        bad.month = 13;
                        return bad;
                    }()),
                    InputError);
}

TEST_CASE("metadata_to_text: template table and vocabulary closure") {
    const auto& v = Vocab::standard();
    MetadataRecord m;
    m.month = 1;
    m.cloud_cover = 0.0;
    auto t = metadata_to_text(m);
    REQUIRE(t.size() == 2);
    CHECK(v.token(t[0]) == "january");
    CHECK(v.token(t[1]) == "clear");

    m.cloud_cover = 1.0;
    auto t2 = metadata_to_text(m);
    CHECK(v.token(t2[1]) == "overcast");

    for (int month = 1; month <= 12; ++month)
        for (double cc : {0.0, 0.3, 0.6, 0.9}) {
            MetadataRecord r;
            r.month = month;
            r.day = 1;
            r.cloud_cover = cc;
            for (int id : metadata_to_text(r)) {
                CHECK(id >= 0);
                CHECK(id < v.size());
            }
        }
}

TEST_CASE("condition maps: fixed channel layout and png round trip") {
    CHECK(cond_channel_offset(CondKind::hed) == 0);
    CHECK(cond_channel_offset(CondKind::mlsd) == 1);
    CHECK(cond_channel_offset(CondKind::depth) == 2);
    CHECK(cond_channel_offset(CondKind::sketch) == 3);
    CHECK(cond_channel_offset(CondKind::road) == 4);
    CHECK(cond_channel_offset(CondKind::segmentation) == 5);
    CHECK(kLocalCondChannels == 13);

    SceneConfig cfg;
    auto tile = render(generate_scene(21, cfg));
    auto dir = std::filesystem::temp_directory_path() / "crsdiff_cond_test";
    std::filesystem::create_directories(dir);

    auto road = road_from_spec(tile);
    save_condition_png((dir / "road.png").string(), road);
    auto road2 = load_condition_png((dir / "road.png").string(), CondKind::road);
    for (int64_t i = 0; i < road.data.numel(); ++i)
        CHECK(std::abs(road2.data[i] - road.data[i]) < 1.0f / 254.0f);

    auto seg = seg_from_spec(tile);
    save_condition_png((dir / "seg.png").string(), seg);
    auto seg2 = load_condition_png((dir / "seg.png").string(), CondKind::segmentation);
    for (int64_t i = 0; i < seg.data.numel(); ++i) CHECK(seg2.data[i] == seg.data[i]);

    std::filesystem::remove_all(dir);
}

TEST_CASE("annotators are deterministic") {
    SceneConfig cfg;
    auto tile = render(generate_scene(33, cfg));
    auto a1 = edge_map(tile.image), a2 = edge_map(tile.image);
    auto s1 = sketch(tile.image), s2 = sketch(tile.image);
    auto r1 = road_extract(tile.image), r2 = road_extract(tile.image);
    auto l1 = line_segments(tile.image), l2 = line_segments(tile.image);
    for (int64_t i = 0; i < a1.data.numel(); ++i) {
        CHECK(a1.data[i] == a2.data[i]);
        CHECK(s1.data[i] == s2.data[i]);
        CHECK(r1.data[i] == r2.data[i]);
        CHECK(l1.data[i] == l2.data[i]);
    }
}

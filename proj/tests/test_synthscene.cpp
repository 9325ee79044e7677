#include <doctest.h>

#include <filesystem>
#include <set>

#include "crsdiff/synth/dataset.hpp"

using namespace crsdiff;
using namespace crsdiff::synth;

namespace {

bool specs_equal(const SceneSpec& a, const SceneSpec& b) {
    if (a.seed != b.seed || a.width != b.width || a.height != b.height) return false;
    if (a.terrain_regions.size() != b.terrain_regions.size()) return false;
    for (size_t i = 0; i < a.terrain_regions.size(); ++i) {
        if (a.terrain_regions[i].class_id != b.terrain_regions[i].class_id) return false;
        if (a.terrain_regions[i].polygon.size() != b.terrain_regions[i].polygon.size())
            return false;
        for (size_t j = 0; j < a.terrain_regions[i].polygon.size(); ++j)
            if (a.terrain_regions[i].polygon[j].x != b.terrain_regions[i].polygon[j].x ||
                a.terrain_regions[i].polygon[j].y != b.terrain_regions[i].polygon[j].y)
                return false;
    }
    if (a.roads.size() != b.roads.size()) return false;
    for (size_t i = 0; i < a.roads.size(); ++i) {
        if (a.roads[i].width != b.roads[i].width) return false;
        if (a.roads[i].polyline.size() != b.roads[i].polyline.size()) return false;
        for (size_t j = 0; j < a.roads[i].polyline.size(); ++j)
            if (a.roads[i].polyline[j].x != b.roads[i].polyline[j].x ||
                a.roads[i].polyline[j].y != b.roads[i].polyline[j].y)
                return false;
    }
    if (a.buildings.size() != b.buildings.size()) return false;
    if (a.playgrounds.size() != b.playgrounds.size()) return false;
    const auto& ma = a.metadata;
    const auto& mb = b.metadata;
    return ma.year == mb.year && ma.month == mb.month && ma.day == mb.day && ma.gsd == mb.gsd &&
           ma.latitude == mb.latitude && ma.longitude == mb.longitude &&
           ma.cloud_cover == mb.cloud_cover;
}

SceneSpec plain_spec(uint8_t terrain_cls) {
    SceneSpec s;
    s.seed = 1;
    s.width = 64;
    s.height = 64;
    s.terrain_regions.push_back({{{0, 0}, {64, 0}, {64, 64}, {0, 64}}, terrain_cls});
    s.metadata = MetadataRecord{};
    s.metadata.cloud_cover = 0.0;
    return s;
}

}  // namespace

TEST_CASE("generate_scene: determinism and config contracts") {
    SceneConfig cfg;
    SceneSpec a = generate_scene(0, cfg);
    SceneSpec b = generate_scene(0, cfg);
    CHECK(specs_equal(a, b));
    CHECK(a.terrain_regions.size() >= 1);
    CHECK(static_cast<int>(a.roads.size()) >= cfg.road_min);
    CHECK(static_cast<int>(a.roads.size()) <= cfg.road_max);

    // base region covers every pixel
    for (auto p : {std::pair{0.5, 0.5}, std::pair{63.5, 0.5}, std::pair{31.5, 63.5}})
        CHECK(geom::point_in_polygon(p.first, p.second, a.terrain_regions[0].polygon));

    SceneConfig two_roads = cfg;
    two_roads.road_min = 2;
    two_roads.road_max = 2;
    for (uint64_t seed : {0ULL, 7ULL, 123ULL})
        CHECK(generate_scene(seed, two_roads).roads.size() == 2);

    SceneConfig bad = cfg;
    bad.road_min = 3;
    bad.road_max = 1;
    CHECK_THROWS_AS(generate_scene(0, bad), ConfigError);
    SceneConfig bad2 = cfg;
    bad2.road_width_min = 0.0;
    CHECK_THROWS_AS(generate_scene(0, bad2), ConfigError);
}

TEST_CASE("generate_scene: invariants over many seeds") {
    SceneConfig cfg;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        SceneSpec s = generate_scene(seed, cfg);
        for (const auto& tr : s.terrain_regions) CHECK(tr.class_id < kNumSegClasses);
        for (const auto& r : s.roads) {
            CHECK(r.polyline.size() >= 2);
            for (const auto& p : r.polyline) {
                CHECK(p.x >= 0);
                CHECK(p.x <= s.width);
                CHECK(p.y >= 0);
                CHECK(p.y <= s.height);
            }
        }
        s.metadata.validate();
    }
}

TEST_CASE("render: cloud cover strictly raises mean brightness") {
    SceneConfig cfg;
    SceneSpec s = generate_scene(11, cfg);
    s.metadata.cloud_cover = 0.0;
    double m0 = render(s).image.mean();
    s.metadata.cloud_cover = 0.9;
    double m9 = render(s).image.mean();
    CHECK(m9 > m0);

    double prev = -1;
    for (double cc : {0.0, 0.25, 0.5, 0.75, 0.95}) {
        s.metadata.cloud_cover = cc;
        double m = render(s).image.mean();
        CHECK(m > prev);
        prev = m;
    }
}

TEST_CASE("render: month tint is deterministic and month-dependent") {
    SceneConfig cfg;
    SceneSpec s = generate_scene(12, cfg);
    s.metadata.day = 1;
    s.metadata.month = 1;
    auto jan = render(s).image;
    s.metadata.month = 7;
    auto jul = render(s).image;
    s.metadata.month = 1;
    auto jan2 = render(s).image;
    bool identical = true, differs = false;
    for (int64_t i = 0; i < jan.numel(); ++i) {
        identical = identical && jan[i] == jan2[i];
        differs = differs || jan[i] != jul[i];
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("render: road map properties") {
    SceneSpec s = plain_spec(kAgricultural);
    auto tile = render(s);
    for (auto v : tile.road) CHECK(v == 0);

    // one road of width 3: stroke pixel count close to length*width
    s.roads.push_back({{{5, 10}, {58, 52}}, 3.0});
    auto tile2 = render(s);
    int count = 0;
    for (auto v : tile2.road) count += v;
    double expect = geom::polyline_length(s.roads[0].polyline) * 3.0;
    CHECK(count > 0.8 * expect);
    CHECK(count < 1.2 * expect);

    // segmentation at every road pixel is the road class
    for (size_t i = 0; i < tile2.road.size(); ++i)
        if (tile2.road[i]) CHECK(tile2.seg[i] == kRoad);
}

TEST_CASE("render: stored segmentation equals re-derivation from geometry") {
    SceneConfig cfg;
    for (uint64_t seed : {3ULL, 19ULL, 77ULL}) {
        SceneSpec s = generate_scene(seed, cfg);
        auto tile = render(s);
        auto again = rasterize_segmentation(s);
        CHECK(tile.seg == again);
    }
}

TEST_CASE("caption: counts, vocabulary closure, fixed length") {
    SceneSpec s = plain_spec(kBarren);
    s.buildings.push_back({4, 4, 12, 12});
    s.buildings.push_back({40, 40, 52, 50});
    s.roads.push_back({{{5, 30}, {60, 34}}, 3.0});
    auto ids = caption_from_scene(s);
    const Vocab& v = Vocab::standard();
    std::string text = v.detokenize(ids);
    CHECK(text.find("two") != std::string::npos);
    CHECK(text.find("buildings") != std::string::npos);
    CHECK(text.find("road") != std::string::npos);
    CHECK(static_cast<int>(ids.size()) == kCaptionLen);

    SceneSpec w = plain_spec(kWater);
    auto wid = caption_from_scene(w);
    std::string wtext = v.detokenize(wid);
    CHECK(wtext.find("water") != std::string::npos);
    for (const char* noun : {"building", "road", "playground"})
        CHECK(wtext.find(noun) == std::string::npos);
    CHECK(static_cast<int>(wid.size()) == kCaptionLen);

    // closure: every emitted token id maps back into the vocabulary
    SceneConfig cfg;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        auto c = caption_from_scene(generate_scene(seed, cfg));
        CHECK(static_cast<int>(c.size()) == kCaptionLen);
        for (int id : c) {
            CHECK(id >= 0);
            CHECK(id < v.size());
        }
    }
}

TEST_CASE("caption: mentions only categories present in the spec") {
    SceneConfig cfg;
    const Vocab& v = Vocab::standard();
    for (uint64_t seed = 0; seed < 40; ++seed) {
        SceneSpec s = generate_scene(seed, cfg);
        std::string text = " " + v.detokenize(caption_from_scene(s)) + " ";
        if (s.buildings.empty()) CHECK(text.find("building") == std::string::npos);
        if (s.roads.empty()) CHECK(text.find("road") == std::string::npos);
        if (s.playgrounds.empty()) CHECK(text.find("playground") == std::string::npos);
        std::set<int> present;
        for (const auto& tr : s.terrain_regions) present.insert(tr.class_id);
        for (int cls : {kWater, kBarren, kForest, kAgricultural})
            if (!present.count(cls))
                CHECK(text.find(std::string(" ") + class_caption_word(cls) + " ") ==
                      std::string::npos);
    }
}

TEST_CASE("dataset: build, verify, determinism, split arithmetic") {
    namespace fs = std::filesystem;
    auto base = fs::temp_directory_path() / "crsdiff_ds_test";
    fs::remove_all(base);
    SceneConfig cfg;

    auto man = build_dataset(10, 42, (base / "a").string(), cfg);
    CHECK(man.records.size() == 10);
    auto loaded = load_manifest((base / "a").string(), /*verify_checksums=*/true);
    CHECK(loaded.records.size() == 10);
    CHECK(loaded.vocab_hash == Vocab::standard().content_hash());

    // duplicate output refused without overwrite
    CHECK_THROWS_AS(build_dataset(10, 42, (base / "a").string(), cfg), IoError);
    CHECK_NOTHROW(build_dataset(10, 42, (base / "a").string(), cfg, /*overwrite=*/true));

    // determinism: same (n, seed) into fresh dirs -> byte-identical images
    build_dataset(6, 7, (base / "b1").string(), cfg);
    build_dataset(6, 7, (base / "b2").string(), cfg);
    for (int i = 0; i < 6; ++i) {
        std::string id = record_id(i);
        CHECK(sha256_file((base / "b1" / "images" / (id + ".png")).string()) ==
              sha256_file((base / "b2" / "images" / (id + ".png")).string()));
        CHECK(sha256_file((base / "b1" / "seg" / (id + ".png")).string()) ==
              sha256_file((base / "b2" / "seg" / (id + ".png")).string()));
    }

    // split arithmetic at n=2000 (pure function)
    int n_train = 0, n_val = 0, n_test = 0;
    for (int i = 0; i < 2000; ++i) {
        std::string sp = split_of_index(i, 2000, 0.8, 0.1);
        n_train += sp == "train";
        n_val += sp == "val";
        n_test += sp == "test";
    }
    CHECK(n_train == 1600);
    CHECK(n_val == 200);
    CHECK(n_test == 200);

    // splits are disjoint by seed
    std::set<uint64_t> seeds;
    for (const auto& r : man.records) seeds.insert(r.scene_seed);
    CHECK(seeds.size() == man.records.size());

    fs::remove_all(base);
}

#pragma once

// Dataset builder and manifest.  Layout under the output directory:
//   images/<id>.png   RGB tile
//   seg/<id>.png      single channel, raw class indices
//   road/<id>.png     single channel, 0/255
//   manifest.jsonl    one record per line (id, split, seed, caption,
//                     metadata, per-file sha256)
//   dataset.json      generation config, counts, vocab hash
//   vocab.txt         the closed vocabulary
// Records get disjoint per-record seeds derived from the dataset seed, and
// splits are assigned by index, so train/val/test never share a scene.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crsdiff/core/hash.hpp"
#include "crsdiff/core/image.hpp"
#include "crsdiff/synth/render.hpp"

namespace crsdiff::synth {

struct DatasetRecord {
    std::string id;
    uint64_t scene_seed = 0;
    std::string split;  // train | val | test
    std::vector<int> caption;
    MetadataRecord metadata;
    std::string image_sha, seg_sha, road_sha;
};

struct DatasetManifest {
    std::string root;
    uint64_t seed = 0;
    int count = 0;
    SceneConfig config;
    std::string vocab_hash;
    std::vector<DatasetRecord> records;

    std::string image_path(const DatasetRecord& r) const {
        return root + "/images/" + r.id + ".png";
    }
    std::string seg_path(const DatasetRecord& r) const { return root + "/seg/" + r.id + ".png"; }
    std::string road_path(const DatasetRecord& r) const {
        return root + "/road/" + r.id + ".png";
    }

    std::vector<const DatasetRecord*> split(const std::string& name) const {
        std::vector<const DatasetRecord*> out;
        for (const auto& r : records)
            if (r.split == name) out.push_back(&r);
        return out;
    }
};

namespace detail {

inline nlohmann::json metadata_to_json(const MetadataRecord& m) {
    return {{"year", m.year},         {"month", m.month},
            {"day", m.day},           {"gsd", m.gsd},
            {"latitude", m.latitude}, {"longitude", m.longitude},
            {"cloud_cover", m.cloud_cover}};
}

inline MetadataRecord metadata_from_json(const nlohmann::json& j) {
    MetadataRecord m;
    m.year = j.at("year");
    m.month = j.at("month");
    m.day = j.at("day");
    m.gsd = j.at("gsd");
    m.latitude = j.at("latitude");
    m.longitude = j.at("longitude");
    m.cloud_cover = j.at("cloud_cover");
    return m;
}

inline nlohmann::json config_to_json(const SceneConfig& c) {
    return {{"width", c.width},
            {"height", c.height},
            {"terrain_patch_min", c.terrain_patch_min},
            {"terrain_patch_max", c.terrain_patch_max},
            {"road_min", c.road_min},
            {"road_max", c.road_max},
            {"building_min", c.building_min},
            {"building_max", c.building_max},
            {"playground_min", c.playground_min},
            {"playground_max", c.playground_max},
            {"road_width_min", c.road_width_min},
            {"road_width_max", c.road_width_max},
            {"year_min", c.year_min},
            {"year_max", c.year_max}};
}

inline SceneConfig config_from_json(const nlohmann::json& j) {
    SceneConfig c;
    c.width = j.at("width");
    c.height = j.at("height");
    c.terrain_patch_min = j.at("terrain_patch_min");
    c.terrain_patch_max = j.at("terrain_patch_max");
    c.road_min = j.at("road_min");
    c.road_max = j.at("road_max");
    c.building_min = j.at("building_min");
    c.building_max = j.at("building_max");
    c.playground_min = j.at("playground_min");
    c.playground_max = j.at("playground_max");
    c.road_width_min = j.at("road_width_min");
    c.road_width_max = j.at("road_width_max");
    c.year_min = j.at("year_min");
    c.year_max = j.at("year_max");
    return c;
}

inline ImageU8 seg_to_u8(const std::vector<uint8_t>& seg, int w, int h) {
    ImageU8 img;
    img.w = w;
    img.h = h;
    img.channels = 1;
    img.data = seg;
    return img;
}

inline ImageU8 mask_to_u8(const std::vector<uint8_t>& mask, int w, int h) {
    ImageU8 img;
    img.w = w;
    img.h = h;
    img.channels = 1;
    img.data.resize(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) img.data[i] = mask[i] ? 255 : 0;
    return img;
}

}  // namespace detail

inline std::string record_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}

inline std::string split_of_index(int index, int n, double train_frac, double val_frac) {
    int n_train = static_cast<int>(n * train_frac);
    int n_val = static_cast<int>(n * val_frac);
    if (index < n_train) return "train";
    if (index < n_train + n_val) return "val";
    return "test";
}

inline DatasetManifest build_dataset(int n, uint64_t seed, const std::string& out,
                                     const SceneConfig& cfg, bool overwrite = false,
                                     double train_frac = 0.8, double val_frac = 0.1) {
    require<ConfigError>(n >= 1, "build_dataset: n must be >= 1");
    require<ConfigError>(train_frac > 0 && val_frac >= 0 && train_frac + val_frac < 1.0 + 1e-12,
                         "build_dataset: bad split fractions");
    cfg.validate();
    namespace fs = std::filesystem;
    fs::path root(out);
    if (fs::exists(root / "manifest.jsonl")) {
        require<IoError>(overwrite,
                         "output directory already holds a dataset (use overwrite): " + out);
    }
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "seg", ec);
    fs::create_directories(root / "road", ec);
    require<IoError>(fs::exists(root / "images"), "cannot create output directory: " + out);

    DatasetManifest man;
    man.root = out;
    man.seed = seed;
    man.count = n;
    man.config = cfg;
    man.vocab_hash = Vocab::standard().content_hash();

    std::ofstream mf((root / "manifest.jsonl").string(), std::ios::binary | std::ios::trunc);
    require<IoError>(mf.good(), "cannot write manifest in " + out);

    for (int i = 0; i < n; ++i) {
        DatasetRecord rec;
        rec.id = record_id(i);
        rec.scene_seed = mix_seed(seed, 1000 + static_cast<uint64_t>(i));
        rec.split = split_of_index(i, n, train_frac, val_frac);
        SceneSpec spec = generate_scene(rec.scene_seed, cfg);
        RenderedTile tile = render(spec);
        rec.caption = tile.caption;
        rec.metadata = spec.metadata;

        std::string ip = man.image_path(rec), sp = man.seg_path(rec), rp = man.road_path(rec);
        write_png(ip, to_u8(tile.image));
        write_png(sp, detail::seg_to_u8(tile.seg, spec.width, spec.height));
        write_png(rp, detail::mask_to_u8(tile.road, spec.width, spec.height));
        rec.image_sha = sha256_file(ip);
        rec.seg_sha = sha256_file(sp);
        rec.road_sha = sha256_file(rp);

        nlohmann::json j = {{"id", rec.id},
                            {"seed", rec.scene_seed},
                            {"split", rec.split},
                            {"caption", rec.caption},
                            {"metadata", detail::metadata_to_json(rec.metadata)},
                            {"sha", {{"image", rec.image_sha}, {"seg", rec.seg_sha}, {"road", rec.road_sha}}}};
        mf << j.dump() << '\n';
        man.records.push_back(std::move(rec));
    }
    mf.close();

    Vocab::standard().save((root / "vocab.txt").string());
    nlohmann::json ds = {{"kind", "crsdiff-dataset"},
                         {"seed", seed},
                         {"count", n},
                         {"train_frac", train_frac},
                         {"val_frac", val_frac},
                         {"vocab_hash", man.vocab_hash},
                         {"config", detail::config_to_json(cfg)}};
    std::ofstream dj((root / "dataset.json").string(), std::ios::binary | std::ios::trunc);
    dj << ds.dump(2) << '\n';
    return man;
}

inline DatasetManifest load_manifest(const std::string& dir, bool verify_checksums = false) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    std::ifstream dj((root / "dataset.json").string());
    require<IoError>(dj.good(), "no dataset.json under " + dir);
    nlohmann::json ds = nlohmann::json::parse(dj);
    require<IntegrityError>(ds.value("kind", "") == "crsdiff-dataset",
                            "not a dataset directory: " + dir);

    DatasetManifest man;
    man.root = dir;
    man.seed = ds.at("seed");
    man.count = ds.at("count");
    man.config = detail::config_from_json(ds.at("config"));
    man.vocab_hash = ds.at("vocab_hash");

    std::ifstream mf((root / "manifest.jsonl").string());
    require<IoError>(mf.good(), "no manifest.jsonl under " + dir);
    std::string line;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        DatasetRecord rec;
        rec.id = j.at("id");
        rec.scene_seed = j.at("seed");
        rec.split = j.at("split");
        rec.caption = j.at("caption").get<std::vector<int>>();
        rec.metadata = detail::metadata_from_json(j.at("metadata"));
        rec.image_sha = j.at("sha").at("image");
        rec.seg_sha = j.at("sha").at("seg");
        rec.road_sha = j.at("sha").at("road");
        if (verify_checksums) {
            require<IntegrityError>(sha256_file(man.image_path(rec)) == rec.image_sha,
                                    "checksum mismatch: " + man.image_path(rec));
            require<IntegrityError>(sha256_file(man.seg_path(rec)) == rec.seg_sha,
                                    "checksum mismatch: " + man.seg_path(rec));
            require<IntegrityError>(sha256_file(man.road_path(rec)) == rec.road_sha,
                                    "checksum mismatch: " + man.road_path(rec));
        }
        man.records.push_back(std::move(rec));
    }
    require<IntegrityError>(static_cast<int>(man.records.size()) == man.count,
                            "manifest record count mismatch in " + dir);
    return man;
}

// Loads a record's tile data back from disk.
inline Tensorf load_image(const DatasetManifest& man, const DatasetRecord& rec) {
    return from_u8(read_png(man.image_path(rec)));
}

inline std::vector<uint8_t> load_seg(const DatasetManifest& man, const DatasetRecord& rec) {
    ImageU8 img = read_png(man.seg_path(rec));
    require<IntegrityError>(img.channels == 1, "segmentation png must be single channel");
    return img.data;
}

inline std::vector<uint8_t> load_road(const DatasetManifest& man, const DatasetRecord& rec) {
    ImageU8 img = read_png(man.road_path(rec));
    require<IntegrityError>(img.channels == 1, "road png must be single channel");
    std::vector<uint8_t> mask(img.data.size());
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = img.data[i] >= 128 ? 1 : 0;
    return mask;
}

}  // namespace crsdiff::synth

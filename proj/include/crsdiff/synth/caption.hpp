#pragma once

// Closed caption vocabulary and the template captioner.  Captions are
// short noun phrases over scene content: terrain words for classes that
// appear, quantity words consistent with object counts.  Fixed length
// (pad/truncate) so the text encoder sees constant-shape input.

#include <cctype>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "crsdiff/core/common.hpp"
#include "crsdiff/core/hash.hpp"
#include "crsdiff/synth/scene.hpp"

namespace crsdiff::synth {

inline constexpr int kCaptionLen = 16;
inline constexpr int kVocabSize = 128;
inline constexpr int kPadToken = 0;

class Vocab {
public:
    static const Vocab& standard() {
        static Vocab v = make_standard();
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        require<InputError>(it != index_.end(), "unknown token: '" + tok + "'");
        return it->second;
    }

    bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

    const std::string& token(int id) const {
        require<InputError>(id >= 0 && id < size(), "token id out of range");
        return tokens_[static_cast<size_t>(id)];
    }

    // Whitespace tokenization; throws on out-of-vocabulary words.
    std::vector<int> tokenize(const std::string& text, int pad_to = kCaptionLen) const {
        std::vector<int> out;
        std::string cur;
        auto flush = [&] {
            if (!cur.empty()) {
                out.push_back(id(cur));
                cur.clear();
            }
        };
        for (char c : text) {
            if (c == ' ' || c == '\t' || c == '\n')
                flush();
            else
                cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        flush();
        if (pad_to > 0) {
            out.resize(static_cast<size_t>(pad_to), kPadToken);
        }
        return out;
    }

    std::string detokenize(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kPadToken) continue;
            if (!out.empty()) out += ' ';
            out += token(id);
        }
        return out;
    }

    std::string content_hash() const {
        Sha256 h;
        for (const auto& t : tokens_) {
            h.update(t);
            h.update("\n", 1);
        }
        return h.hex();
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        require<IoError>(f.good(), "cannot write vocab: " + path);
        for (const auto& t : tokens_) f << t << '\n';
    }

    static Vocab load(const std::string& path) {
        std::ifstream f(path);
        require<IoError>(f.good(), "cannot read vocab: " + path);
        Vocab v;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) v.push(line);
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;

    void push(const std::string& t) {
        require<ConfigError>(index_.count(t) == 0, "duplicate vocab token: " + t);
        index_[t] = static_cast<int>(tokens_.size());
        tokens_.push_back(t);
    }

    static Vocab make_standard() {
        Vocab v;
        const char* words[] = {
            "<pad>",
            // glue
            "a", "an", "the", "of", "with", "and", "in", "on", "near",
            "satellite", "aerial", "image", "view", "photo", "scene", "tile", "area",
            // quantities
            "no", "one", "two", "three", "four", "five", "six", "seven", "eight",
            "some", "many", "few", "several", "scattered",
            // object nouns
            "building", "buildings", "road", "roads", "playground", "playgrounds",
            "house", "houses", "track", "tracks",
            // terrain words (canonical caption names per class)
            "land", "water", "barren", "forest", "farmland",
            "plain", "lake", "river", "woodland", "fields", "ground", "soil",
            // months
            "january", "february", "march", "april", "may", "june", "july",
            "august", "september", "october", "november", "december",
            // cloudiness
            "clear", "hazy", "cloudy", "overcast", "sky", "skies",
            // misc descriptors kept for prompt variety
            "small", "large", "long", "short", "wide", "narrow", "dark", "bright",
            "dense", "sparse", "dry", "wet", "green", "brown", "gray", "blue",
            "crossing", "straight", "curved", "winding", "empty", "busy",
            "north", "south", "east", "west", "center", "edge", "corner",
        };
        for (const char* w : words) v.push(w);
        int reserved = 0;
        while (v.size() < kVocabSize) v.push("<r" + std::to_string(reserved++) + ">");
        require<ConfigError>(v.size() == kVocabSize, "vocab overflow");
        return v;
    }
};

// Canonical caption word for each segmentation class.
inline const char* class_caption_word(int cls, bool plural = false) {
    switch (cls) {
        case kBackground: return "land";
        case kBuilding: return plural ? "buildings" : "building";
        case kRoad: return plural ? "roads" : "road";
        case kWater: return "water";
        case kBarren: return "barren";
        case kForest: return "forest";
        case kAgricultural: return "farmland";
        case kPlayground: return plural ? "playgrounds" : "playground";
        default: return "land";
    }
}

inline const char* quantity_word(int n) {
    switch (n) {
        case 0: return "no";
        case 1: return "one";
        case 2: return "two";
        case 3: return "three";
        case 4: return "four";
        default: return "many";
    }
}

// Template caption over the closed vocabulary.  Mentions the base terrain,
// up to one extra patch terrain, and up to two object groups with their
// quantity words.  Padded/truncated to kCaptionLen.
inline std::vector<int> caption_from_scene(const SceneSpec& spec) {
    const Vocab& vocab = Vocab::standard();
    std::vector<std::string> words = {"a", "satellite", "image", "of"};

    int base_cls = spec.terrain_regions.empty() ? kBackground
                                                : spec.terrain_regions[0].class_id;
    words.push_back(class_caption_word(base_cls));
    for (size_t i = 1; i < spec.terrain_regions.size(); ++i) {
        int cls = spec.terrain_regions[i].class_id;
        if (cls != base_cls) {
            words.push_back("and");
            words.push_back(class_caption_word(cls));
            break;  // keep captions short; one patch mention is enough
        }
    }

    struct Group {
        int count;
        int cls;
    };
    Group groups[3] = {{static_cast<int>(spec.buildings.size()), kBuilding},
                       {static_cast<int>(spec.roads.size()), kRoad},
                       {static_cast<int>(spec.playgrounds.size()), kPlayground}};
    int mentioned = 0;
    for (const Group& g : groups) {
        if (g.count == 0 || mentioned == 2) continue;
        words.push_back(mentioned == 0 ? "with" : "and");
        words.push_back(quantity_word(g.count));
        words.push_back(class_caption_word(g.cls, g.count > 1));
        ++mentioned;
    }

    std::vector<int> ids;
    ids.reserve(kCaptionLen);
    for (const auto& w : words) {
        if (static_cast<int>(ids.size()) == kCaptionLen) break;
        ids.push_back(vocab.id(w));
    }
    ids.resize(kCaptionLen, kPadToken);
    return ids;
}

}  // namespace crsdiff::synth

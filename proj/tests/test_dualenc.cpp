#include <doctest.h>

#include <filesystem>

#include "crsdiff/dualenc/dualenc.hpp"
#include "gradcheck.hpp"

using namespace crsdiff;
using namespace crsdiff::enc;
using crsdiff::testing::max_rel_grad_error;

namespace {

synth::DatasetManifest tiny_dataset(const std::string& name, int n, uint64_t seed) {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    synth::SceneConfig cfg;
    return synth::build_dataset(n, seed, dir.string(), cfg, true, 0.75, 0.25);
}

}  // namespace

TEST_CASE("encode_text: null encoding defined, deterministic, oov rejected") {
    Rng rng(1);
    DualEncoderF dual;
    dual.init(synth::kVocabSize, rng);

    auto null1 = null_text_encoding(dual);
    auto null2 = null_text_encoding(dual);
    REQUIRE(null1.tokens.shape == std::vector<int>{synth::kCaptionLen, kTokenDim});
    REQUIRE(null1.global.shape == std::vector<int>{kEmbedDim});
    for (int64_t i = 0; i < null1.global.numel(); ++i) CHECK(null1.global[i] == null2.global[i]);
    for (int64_t i = 0; i < null1.tokens.numel(); ++i) CHECK(null1.tokens[i] == null2.tokens[i]);

    double norm = 0;
    for (int64_t i = 0; i < null1.global.numel(); ++i)
        norm += static_cast<double>(null1.global[i]) * null1.global[i];
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-5);

    auto caption = synth::Vocab::standard().tokenize("a satellite image of water");
    auto e1 = encode_text(dual, caption);
    auto e2 = encode_text(dual, caption);
    for (int64_t i = 0; i < e1.tokens.numel(); ++i) CHECK(e1.tokens[i] == e2.tokens[i]);

    std::vector<int> bad(synth::kCaptionLen, synth::kVocabSize + 5);
    CHECK_THROWS_AS(encode_text(dual, bad), InputError);
}

TEST_CASE("encode_image: unit norm and determinism") {
    Rng rng(2);
    DualEncoderF dual;
    dual.init(synth::kVocabSize, rng);
    synth::SceneConfig cfg;
    auto tile = synth::render(synth::generate_scene(3, cfg));
    auto a = encode_image(dual, tile.image);
    auto b = encode_image(dual, tile.image);
    double norm = 0;
    for (int64_t i = 0; i < a.global.numel(); ++i) {
        CHECK(a.global[i] == b.global[i]);
        norm += static_cast<double>(a.global[i]) * a.global[i];
    }
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-5);
}

TEST_CASE("contrastive loss on identical pairs equals log(batch)") {
    Rng rng(4);
    DualEncoderF dual;
    dual.init(synth::kVocabSize, rng);
    synth::SceneConfig cfg;
    auto tile = synth::render(synth::generate_scene(9, cfg));
    const int B = 8;
    Tensorf batch({B, 3, 64, 64});
    std::vector<int> caps;
    for (int b = 0; b < B; ++b) {
        std::copy(tile.image.v.begin(), tile.image.v.end(),
                  batch.v.begin() + static_cast<size_t>(b) * tile.image.numel());
        for (int t : tile.caption) caps.push_back(t);
    }
    Tape<float> tp;
    ParamLease<float> L(tp);
    auto loss = contrastive_loss(L, dual, tp.input(std::move(batch)), caps, B);
    CHECK(tp.val(loss)[0] == doctest::Approx(std::log(8.0)).epsilon(1e-4));
}

TEST_CASE("contrastive gradients match finite differences (double, 4 pairs)") {
    Rng rng(5);
    DualEncoder<double> dual;
    dual.init(synth::kVocabSize, rng);
    ParamCollector<double> pc;
    dual.collect(pc);

    const int B = 4, HW = 16;
    Rng drng(6);
    Tensord images = Tensord::uniform({B, 3, HW, HW}, drng, 0.0, 1.0);
    std::vector<int> caps;
    Rng crng(7);
    for (int i = 0; i < B * synth::kCaptionLen; ++i)
        caps.push_back(static_cast<int>(crng.uniform_int(0, synth::kVocabSize - 1)));

    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto loss = contrastive_loss(L, dual, tp.input(images), caps, B);
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(8);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 2, 1e-6) < 1e-4);
}

TEST_CASE("contrastive training: losses fall, temperature stays positive, retrieval works") {
    auto man = tiny_dataset("crsdiff_dualenc_ds", 64, 5);
    Rng rng(10);
    DualEncoderF dual;
    dual.init(synth::kVocabSize, rng);
    DualEncTrainConfig cfg;
    cfg.batch_size = 16;
    cfg.steps = 220;
    cfg.lr = 2e-3f;
    cfg.seed = 1;
    cfg.log_every = 0;
    auto stats = contrastive_train(man, dual, cfg);

    REQUIRE(static_cast<int>(stats.loss_curve.size()) == cfg.steps);
    double first = 0, last = 0;
    for (int i = 0; i < 40; ++i) {
        first += stats.loss_curve[static_cast<size_t>(i)];
        last += stats.loss_curve[stats.loss_curve.size() - 1 - static_cast<size_t>(i)];
    }
    CHECK(last < first);  // smoothed loss decreased
    CHECK(stats.final_temperature > 0.0f);
    CHECK(stats.val_pair_margin_rate >= 0.5);

    // paired clip score beats a shuffled pairing after training
    auto val = man.split("val");
    std::vector<Tensorf> imgs;
    std::vector<std::vector<int>> caps, shuffled;
    for (auto* r : val) {
        imgs.push_back(synth::load_image(man, *r));
        caps.push_back(r->caption);
    }
    for (size_t i = 0; i < caps.size(); ++i) shuffled.push_back(caps[(i + 5) % caps.size()]);
    double paired = clip_score(dual, imgs, caps);
    double shuf = clip_score(dual, imgs, shuffled);
    CHECK(paired > shuf);
    CHECK(paired >= 0.0);
    CHECK(paired <= 100.0);

    // checkpoint round trip with vocabulary hash guard
    auto dir = std::filesystem::temp_directory_path() / "crsdiff_dualenc_ckpt";
    std::filesystem::create_directories(dir);
    auto path = (dir / "dual.ckpt").string();
    save_dualenc(path, dual, man.vocab_hash);
    DualEncoderF dual2;
    Rng rng2(99);
    dual2.init(synth::kVocabSize, rng2);
    load_dualenc(path, dual2, man.vocab_hash);
    auto e1 = encode_image(dual, imgs[0]);
    auto e2 = encode_image(dual2, imgs[0]);
    for (int64_t i = 0; i < e1.global.numel(); ++i) CHECK(e1.global[i] == e2.global[i]);
    CHECK_THROWS_AS(load_dualenc(path, dual2, "deadbeef"), IntegrityError);

    std::filesystem::remove_all(std::filesystem::temp_directory_path() / "crsdiff_dualenc_ds");
    std::filesystem::remove_all(dir);
}

TEST_CASE("clip score stub cases and zero-shot argmax properties") {
    // identical embeddings -> 100, orthogonal -> 0
    Tensorf e1({4});
    e1.v = {1, 0, 0, 0};
    Tensorf e2({4});
    e2.v = {0, 1, 0, 0};
    CHECK(clip_score_from_embeddings({e1}, {e1}) == doctest::Approx(100.0));
    CHECK(clip_score_from_embeddings({e1}, {e2}) == doctest::Approx(0.0));
    // negative cosine clamps to zero
    Tensorf e3({4});
    e3.v = {-1, 0, 0, 0};
    CHECK(clip_score_from_embeddings({e1}, {e3}) == doctest::Approx(0.0));
    CHECK(clip_score_from_embeddings({e1, e1}, {e1, e2}) == doctest::Approx(50.0));

    // single prompt always wins
    Rng rng(12);
    DualEncoderF dual;
    dual.init(synth::kVocabSize, rng);
    synth::SceneConfig scfg;
    auto tile = synth::render(synth::generate_scene(2, scfg));
    auto prompt = synth::Vocab::standard().tokenize("water");
    CHECK(zero_shot_classify(dual, tile.image, {prompt}) == 0);

    // argmax is invariant to positive scaling of the similarities
    Rng vr(13);
    std::vector<double> sims;
    for (int i = 0; i < 8; ++i) sims.push_back(vr.uniform(-1.0, 1.0));
    int arg1 = 0, arg2 = 0;
    for (int i = 0; i < 8; ++i) {
        if (sims[static_cast<size_t>(i)] > sims[static_cast<size_t>(arg1)]) arg1 = i;
        if (3.7 * sims[static_cast<size_t>(i)] > 3.7 * sims[static_cast<size_t>(arg2)]) arg2 = i;
    }
    CHECK(arg1 == arg2);
}

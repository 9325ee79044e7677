#pragma once

// Miniature contrastively-trained text/image dual encoder.  Supplies
// per-token caption embeddings for cross-attention, unit-norm global
// embeddings for both modalities, zero-shot classification over prompt
// lists, and the CLIP-score analog.  Trained from scratch on synthetic
// pairs with a symmetric cross-entropy over cosine-similarity logits and
// a learnable temperature.

#include <iostream>
#include <vector>

#include "crsdiff/core/optim.hpp"
#include "crsdiff/core/serialize.hpp"
#include "crsdiff/synth/dataset.hpp"

namespace crsdiff::enc {

inline constexpr int kEmbedDim = 64;  // global embedding dim (both towers)
inline constexpr int kTokenDim = 64;  // per-token context dim for cross-attention

struct TextEncoding {
    Tensorf tokens;  // [L, kTokenDim]
    Tensorf global;  // [kEmbedDim], unit norm
};

struct ImageEncoding {
    Tensorf global;  // [kEmbedDim], unit norm
};

template <typename T>
struct TextTower {
    EmbeddingTable<T> tok;
    EmbeddingTable<T> pos;
    TransformerBlock<T> blk1, blk2;
    LayerNorm<T> ln_final;
    Linear<T> proj;

    void init(int vocab, int caption_len, Rng& rng) {
        (void)caption_len;
        tok.init(vocab, kTokenDim, rng, T(0.05));
        pos.init(synth::kCaptionLen, kTokenDim, rng, T(0.05));
        blk1.init(kTokenDim, 2 * kTokenDim, rng);
        blk2.init(kTokenDim, 2 * kTokenDim, rng);
        ln_final.init(kTokenDim);
        proj.init(kTokenDim, kEmbedDim, rng);
    }

    // ids: B*L flattened -> tokens [B,L,D]
    Val<T> tokens_fwd(ParamLease<T>& L, const std::vector<int>& ids, int B) {
        Tape<T>& tp = L.tape;
        int len = static_cast<int>(ids.size()) / B;
        std::vector<int> pos_ids;
        pos_ids.reserve(ids.size());
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < len; ++i) pos_ids.push_back(i);
        Val<T> x = tok.fwd(L, ids, {B, len});
        x = tp.add(x, pos.fwd(L, pos_ids, {B, len}));
        x = blk1.fwd(L, x);
        x = blk2.fwd(L, x);
        return ln_final.fwd(L, x);
    }

    // pooled unit-norm global [B, kEmbedDim]
    Val<T> global_fwd(ParamLease<T>& L, Val<T> tokens) {
        Tape<T>& tp = L.tape;
        Val<T> pooled = tp.mean_axis1(tokens);
        return tp.l2_normalize_rows(proj.fwd(L, pooled));
    }

    void collect(ParamCollector<T>& c, const std::string& p) {
        tok.collect(c, p + ".tok");
        pos.collect(c, p + ".pos");
        blk1.collect(c, p + ".blk1");
        blk2.collect(c, p + ".blk2");
        ln_final.collect(c, p + ".ln_final");
        proj.collect(c, p + ".proj");
    }
};

template <typename T>
struct ImageTower {
    Conv2d<T> c1, c2, c3, c4;
    GroupNorm<T> n1, n2, n3, n4;
    Linear<T> proj;

    void init(Rng& rng) {
        c1.init(3, 16, 3, 2, 1, rng);
        n1.init(16, 4);
        c2.init(16, 32, 3, 2, 1, rng);
        n2.init(32, 8);
        c3.init(32, 64, 3, 2, 1, rng);
        n3.init(64, 8);
        c4.init(64, 64, 3, 2, 1, rng);
        n4.init(64, 8);
        proj.init(64, kEmbedDim, rng);
    }

    // x: [B,3,H,W] -> unit-norm [B, kEmbedDim]
    Val<T> fwd(ParamLease<T>& L, Val<T> x) {
        Tape<T>& tp = L.tape;
        x = tp.silu(n1.fwd(L, c1.fwd(L, x)));
        x = tp.silu(n2.fwd(L, c2.fwd(L, x)));
        x = tp.silu(n3.fwd(L, c3.fwd(L, x)));
        x = tp.silu(n4.fwd(L, c4.fwd(L, x)));
        return tp.l2_normalize_rows(proj.fwd(L, tp.global_avgpool(x)));
    }

    void collect(ParamCollector<T>& c, const std::string& p) {
        c1.collect(c, p + ".c1");
        n1.collect(c, p + ".n1");
        c2.collect(c, p + ".c2");
        n2.collect(c, p + ".n2");
        c3.collect(c, p + ".c3");
        n3.collect(c, p + ".n3");
        c4.collect(c, p + ".c4");
        n4.collect(c, p + ".n4");
        proj.collect(c, p + ".proj");
    }
};

template <typename T>
struct DualEncoder {
    TextTower<T> text;
    ImageTower<T> image;
    Param<T> log_temp;

    void init(int vocab, Rng& rng) {
        text.init(vocab, synth::kCaptionLen, rng);
        image.init(rng);
        log_temp = Param<T>(Tensor<T>::full({1}, static_cast<T>(std::log(1.0 / 0.07))));
    }

    void collect(ParamCollector<T>& c) {
        text.collect(c, "text");
        image.collect(c, "image");
        c.add("log_temp", log_temp);
    }

    T temperature() const { return std::exp(log_temp.value[0]); }
};

using DualEncoderF = DualEncoder<float>;

// ---- inference ------------------------------------------------------------

template <typename T>
TextEncoding encode_text(DualEncoder<T>& dual, const std::vector<int>& ids) {
    require<InputError>(static_cast<int>(ids.size()) == synth::kCaptionLen,
                        "encode_text: caption must have fixed length");
    Tape<T> tp;
    ParamLease<T> L(tp);
    Val<T> toks = dual.text.tokens_fwd(L, ids, 1);
    Val<T> glob = dual.text.global_fwd(L, toks);
    TextEncoding out;
    out.tokens = tp.val(toks).reshaped({synth::kCaptionLen, kTokenDim}).template cast<float>();
    out.global = tp.val(glob).reshaped({kEmbedDim}).template cast<float>();
    return out;
}

// The CFG null text: an all-padding caption.
template <typename T>
TextEncoding null_text_encoding(DualEncoder<T>& dual) {
    return encode_text(dual, std::vector<int>(synth::kCaptionLen, synth::kPadToken));
}

template <typename T>
ImageEncoding encode_image(DualEncoder<T>& dual, const Tensorf& image) {
    require<InputError>(image.rank() == 3 && image.shape[0] == 3,
                        "encode_image: [3,H,W] expected");
    Tape<T> tp;
    ParamLease<T> L(tp);
    Val<T> x = tp.input(image.reshaped({1, 3, image.shape[1], image.shape[2]}).template cast<T>());
    Val<T> glob = dual.image.fwd(L, x);
    ImageEncoding out;
    out.global = tp.val(glob).reshaped({kEmbedDim}).template cast<float>();
    return out;
}

inline double cosine(const Tensorf& a, const Tensorf& b) {
    require<InputError>(a.numel() == b.numel(), "cosine: length mismatch");
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / std::sqrt(na * nb);
}

// ---- metrics over encodings ------------------------------------------------

// Mean over pairs of 100 * max(0, cosine).  Embedding-level entry point so
// stub encoders can exercise the arithmetic directly.
inline double clip_score_from_embeddings(const std::vector<Tensorf>& image_embs,
                                         const std::vector<Tensorf>& text_embs) {
    require<InputError>(image_embs.size() == text_embs.size() && !image_embs.empty(),
                        "clip_score: need equal nonzero pair counts");
    double acc = 0;
    for (size_t i = 0; i < image_embs.size(); ++i)
        acc += 100.0 * std::max(0.0, cosine(image_embs[i], text_embs[i]));
    return acc / static_cast<double>(image_embs.size());
}

template <typename T>
double clip_score(DualEncoder<T>& dual, const std::vector<Tensorf>& images,
                  const std::vector<std::vector<int>>& captions) {
    require<InputError>(images.size() == captions.size() && !images.empty(),
                        "clip_score: need equal nonzero pair counts");
    std::vector<Tensorf> ie, te;
    for (size_t i = 0; i < images.size(); ++i) {
        ie.push_back(encode_image(dual, images[i]).global);
        te.push_back(encode_text(dual, captions[i]).global);
    }
    return clip_score_from_embeddings(ie, te);
}

template <typename T>
int zero_shot_classify(DualEncoder<T>& dual, const Tensorf& image,
                       const std::vector<std::vector<int>>& class_prompts) {
    require<InputError>(!class_prompts.empty(), "zero_shot_classify: no prompts");
    ImageEncoding ie = encode_image(dual, image);
    int best = 0;
    double best_sim = -2;
    for (size_t c = 0; c < class_prompts.size(); ++c) {
        double s = cosine(ie.global, encode_text(dual, class_prompts[c]).global);
        if (s > best_sim) {
            best_sim = s;
            best = static_cast<int>(c);
        }
    }
    return best;
}

// ---- contrastive training ---------------------------------------------------

struct DualEncTrainConfig {
    int batch_size = 32;
    int steps = 800;
    float lr = 1e-3f;
    float weight_decay = 1e-4f;
    uint64_t seed = 0;
    int log_every = 100;
};

struct DualEncTrainStats {
    std::vector<float> loss_curve;
    double val_text_to_image_top1 = 0;
    double val_pair_margin_rate = 0;  // fraction of val pairs beating a random image
    float final_temperature = 0;
};

// Symmetric InfoNCE on one batch; returns the loss node.
template <typename T>
Val<T> contrastive_loss(ParamLease<T>& L, DualEncoder<T>& dual, Val<T> images,
                        const std::vector<int>& caption_ids, int B) {
    Tape<T>& tp = L.tape;
    Val<T> img_emb = dual.image.fwd(L, images);
    Val<T> toks = dual.text.tokens_fwd(L, caption_ids, B);
    Val<T> txt_emb = dual.text.global_fwd(L, toks);
    Val<T> temp = tp.exp_(L(dual.log_temp));
    Val<T> img3 = tp.reshape(img_emb, {1, B, kEmbedDim});
    Val<T> txt3 = tp.reshape(txt_emb, {1, B, kEmbedDim});
    Val<T> logits_it = tp.reshape(tp.scale_by(tp.bmm_nt(img3, txt3), temp), {B, B});
    Val<T> logits_ti = tp.reshape(tp.scale_by(tp.bmm_nt(txt3, img3), temp), {B, B});
    std::vector<int> labels(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) labels[static_cast<size_t>(i)] = i;
    Val<T> loss_it = tp.softmax_xent(logits_it, labels);
    Val<T> loss_ti = tp.softmax_xent(logits_ti, labels);
    return tp.scale(tp.add(loss_it, loss_ti), T(0.5));
}

inline DualEncTrainStats contrastive_train(const synth::DatasetManifest& man,
                                           DualEncoderF& dual, const DualEncTrainConfig& cfg,
                                           std::ostream* log = nullptr) {
    auto train = man.split("train");
    auto val = man.split("val");
    require<ConfigError>(static_cast<int>(train.size()) >= cfg.batch_size,
                         "contrastive_train: dataset smaller than one batch");

    std::vector<Tensorf> images(train.size());
    for (size_t i = 0; i < train.size(); ++i) images[i] = synth::load_image(man, *train[i]);

    ParamCollector<float> params;
    dual.collect(params);
    AdamW<float> opt(params);
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;

    Rng rng(mix_seed(cfg.seed, 0xD0A1));
    DualEncTrainStats stats;
    const int B = cfg.batch_size;
    for (int step = 0; step < cfg.steps; ++step) {
        Tensorf batch({B, 3, man.config.height, man.config.width});
        std::vector<int> cap_ids;
        cap_ids.reserve(static_cast<size_t>(B) * synth::kCaptionLen);
        for (int b = 0; b < B; ++b) {
            size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(train.size()) - 1));
            const Tensorf& img = images[idx];
            std::copy(img.v.begin(), img.v.end(), batch.v.begin() + static_cast<size_t>(b) * img.numel());
            for (int t : train[idx]->caption) cap_ids.push_back(t);
        }
        params.zero_grad();
        Tape<float> tp;
        ParamLease<float> L(tp);
        Val<float> loss = contrastive_loss(L, dual, tp.input(std::move(batch)), cap_ids, B);
        float lv = tp.val(loss)[0];
        require<NumericError>(std::isfinite(lv),
                              "contrastive_train: non-finite loss at step " + std::to_string(step));
        tp.backward(loss);
        opt.step();
        stats.loss_curve.push_back(lv);
        if (log && cfg.log_every > 0 && step % cfg.log_every == 0)
            (*log) << "dualenc step " << step << " loss " << lv << "\n";
    }
    stats.final_temperature = dual.temperature();

    // validation: text->image retrieval top-1 plus pair-vs-random margins
    if (!val.empty()) {
        std::vector<Tensorf> vimg(val.size()), vtxt(val.size());
        for (size_t i = 0; i < val.size(); ++i) {
            vimg[i] = encode_image(dual, synth::load_image(man, *val[i])).global;
            vtxt[i] = encode_text(dual, val[i]->caption).global;
        }
        int top1 = 0, margin = 0;
        Rng mrng(mix_seed(cfg.seed, 0xD0A2));
        for (size_t i = 0; i < val.size(); ++i) {
            size_t best = 0;
            double best_sim = -2;
            for (size_t j = 0; j < vimg.size(); ++j) {
                double s = cosine(vtxt[i], vimg[j]);
                if (s > best_sim) {
                    best_sim = s;
                    best = j;
                }
            }
            top1 += best == i;
            size_t other = static_cast<size_t>(mrng.uniform_int(0, static_cast<int64_t>(val.size()) - 1));
            if (other == i) other = (other + 1) % val.size();
            margin += cosine(vtxt[i], vimg[i]) > cosine(vtxt[i], vimg[other]);
        }
        stats.val_text_to_image_top1 = static_cast<double>(top1) / static_cast<double>(val.size());
        stats.val_pair_margin_rate = static_cast<double>(margin) / static_cast<double>(val.size());
        if (log)
            (*log) << "dualenc val top1 " << stats.val_text_to_image_top1 << " margin-rate "
                   << stats.val_pair_margin_rate << " temp " << stats.final_temperature << "\n";
    }
    return stats;
}

// ---- persistence -------------------------------------------------------------

inline void save_dualenc(const std::string& path, DualEncoderF& dual,
                         const std::string& vocab_hash, nlohmann::json extra_meta = {}) {
    ParamCollector<float> params;
    dual.collect(params);
    nlohmann::json meta = std::move(extra_meta);
    meta["vocab_hash"] = vocab_hash;
    meta["embed_dim"] = kEmbedDim;
    meta["token_dim"] = kTokenDim;
    save_checkpoint(path, "dualenc", meta, params);
}

// Refuses to load when the stored vocabulary hash differs from the one the
// caller is about to use.
inline nlohmann::json load_dualenc(const std::string& path, DualEncoderF& dual,
                                   const std::string& expected_vocab_hash) {
    ParamCollector<float> params;
    dual.collect(params);
    nlohmann::json meta = load_checkpoint(path, "dualenc", params);
    require<IntegrityError>(meta.value("vocab_hash", "") == expected_vocab_hash,
                            "dualenc checkpoint was trained with a different vocabulary");
    return meta;
}

}  // namespace crsdiff::enc

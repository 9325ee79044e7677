#pragma once

// Small convolutional VAE.  Encoding is deterministic mode-encode (the
// mean); training samples the latent with the reparameterization trick and
// a light KL penalty.  4x spatial downsampling, 4 latent channels.

#include <iostream>

#include "crsdiff/core/optim.hpp"
#include "crsdiff/core/serialize.hpp"
#include "crsdiff/diffusion/schedule.hpp"
#include "crsdiff/synth/dataset.hpp"

namespace crsdiff::diff {

template <typename T>
struct VAE {
    // encoder
    Conv2d<T> e1, e2, e3, e_out;
    GroupNorm<T> en1, en2, en3;
    // decoder
    Conv2d<T> d1, d2, d3, d_out;
    GroupNorm<T> dn1, dn2, dn3;

    void init(Rng& rng) {
        e1.init(3, 32, 3, 2, 1, rng);
        en1.init(32, 8);
        e2.init(32, 64, 3, 2, 1, rng);
        en2.init(64, 8);
        e3.init(64, 64, 3, 1, 1, rng);
        en3.init(64, 8);
        e_out.init(64, 2 * kLatentChannels, 3, 1, 1, rng);

        d1.init(kLatentChannels, 64, 3, 1, 1, rng);
        dn1.init(64, 8);
        d2.init(64, 48, 3, 1, 1, rng);
        dn2.init(48, 8);
        d3.init(48, 32, 3, 1, 1, rng);
        dn3.init(32, 8);
        d_out.init(32, 3, 3, 1, 1, rng);
    }

    void collect(ParamCollector<T>& c) {
        e1.collect(c, "vae.e1");
        en1.collect(c, "vae.en1");
        e2.collect(c, "vae.e2");
        en2.collect(c, "vae.en2");
        e3.collect(c, "vae.e3");
        en3.collect(c, "vae.en3");
        e_out.collect(c, "vae.e_out");
        d1.collect(c, "vae.d1");
        dn1.collect(c, "vae.dn1");
        d2.collect(c, "vae.d2");
        dn2.collect(c, "vae.dn2");
        d3.collect(c, "vae.d3");
        d_out.collect(c, "vae.d_out");
    }

    // returns (mu, logvar), each [N, kLatentChannels, H/4, W/4]
    std::pair<Val<T>, Val<T>> encode_fwd(ParamLease<T>& L, Val<T> x) {
        Tape<T>& tp = L.tape;
        Val<T> h = tp.silu(en1.fwd(L, e1.fwd(L, x)));
        h = tp.silu(en2.fwd(L, e2.fwd(L, h)));
        h = tp.silu(en3.fwd(L, e3.fwd(L, h)));
        Val<T> both = e_out.fwd(L, h);
        Val<T> mu = tp.slice(both, 1, 0, kLatentChannels);
        Val<T> logvar = tp.slice(both, 1, kLatentChannels, kLatentChannels);
        return {mu, logvar};
    }

    Val<T> decode_fwd(ParamLease<T>& L, Val<T> z) {
        Tape<T>& tp = L.tape;
        Val<T> h = tp.silu(dn1.fwd(L, d1.fwd(L, z)));
        h = tp.upsample_nearest2(h);
        h = tp.silu(dn2.fwd(L, d2.fwd(L, h)));
        h = tp.upsample_nearest2(h);
        h = tp.silu(dn3.fwd(L, d3.fwd(L, h)));
        return tp.sigmoid(d_out.fwd(L, h));
    }
};

using VAEF = VAE<float>;

// Deterministic mode-encode of a batch [N,3,H,W] -> [N,4,H/4,W/4].
inline Tensorf vae_encode(VAEF& vae, const Tensorf& images) {
    require<InputError>(images.rank() == 4 && images.shape[1] == 3,
                        "vae_encode: [N,3,H,W] expected");
    require<InputError>(images.shape[2] % kDownFactor == 0 && images.shape[3] % kDownFactor == 0,
                        "vae_encode: spatial size must be divisible by 4");
    Tape<float> tp;
    ParamLease<float> L(tp);
    auto [mu, logvar] = vae.encode_fwd(L, tp.input(images));
    (void)logvar;
    return tp.val(mu);
}

inline Tensorf vae_decode(VAEF& vae, const Tensorf& latents) {
    require<InputError>(latents.rank() == 4 && latents.shape[1] == kLatentChannels,
                        "vae_decode: [N,4,h,w] expected");
    Tape<float> tp;
    ParamLease<float> L(tp);
    Val<float> img = vae.decode_fwd(L, tp.input(latents));
    Tensorf out = tp.val(img);
    for (auto& v : out.v) v = clamp01(v);
    return out;
}

struct VaeTrainConfig {
    int batch_size = 16;
    int steps = 900;
    float lr = 1.5e-3f;
    float kl_weight = 1e-4f;
    uint64_t seed = 0;
    int log_every = 100;
};

struct VaeTrainStats {
    std::vector<float> loss_curve;
    double val_psnr = 0;
};

inline VaeTrainStats train_vae(const synth::DatasetManifest& man, VAEF& vae,
                               const VaeTrainConfig& cfg, std::ostream* log = nullptr) {
    auto train = man.split("train");
    auto val = man.split("val");
    require<ConfigError>(static_cast<int>(train.size()) >= cfg.batch_size,
                         "train_vae: dataset smaller than one batch");
    std::vector<Tensorf> images(train.size());
    for (size_t i = 0; i < train.size(); ++i) images[i] = synth::load_image(man, *train[i]);

    ParamCollector<float> params;
    vae.collect(params);
    AdamW<float> opt(params);
    opt.lr = cfg.lr;
    opt.weight_decay = 1e-5f;

    Rng rng(mix_seed(cfg.seed, 0xAE01));
    VaeTrainStats stats;
    const int B = cfg.batch_size;
    const int H = man.config.height, W = man.config.width;
    for (int step = 0; step < cfg.steps; ++step) {
        Tensorf batch({B, 3, H, W});
        for (int b = 0; b < B; ++b) {
            size_t idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(train.size()) - 1));
            std::copy(images[idx].v.begin(), images[idx].v.end(),
                      batch.v.begin() + static_cast<size_t>(b) * images[idx].numel());
        }
        Tensorf noise = Tensorf::randn({B, kLatentChannels, H / 4, W / 4}, rng);

        params.zero_grad();
        Tape<float> tp;
        ParamLease<float> L(tp);
        Val<float> x = tp.input(batch);
        auto [mu, logvar] = vae.encode_fwd(L, x);
        // z = mu + exp(0.5 logvar) * eps
        Val<float> z = tp.add(mu, tp.mul(tp.exp_(tp.scale(logvar, 0.5f)), tp.input(noise)));
        Val<float> recon = vae.decode_fwd(L, z);
        Val<float> rec_loss = tp.mse(recon, x);
        // KL(q || N(0,1)) = -0.5 mean(1 + logvar - mu^2 - exp(logvar))
        Val<float> kl = tp.scale(
            tp.mean_all(tp.sub(tp.add(tp.mul(mu, mu), tp.exp_(logvar)),
                               tp.add_const(logvar, 1.0f))),
            0.5f);
        Val<float> loss = tp.add(rec_loss, tp.scale(kl, cfg.kl_weight));
        float lv = tp.val(loss)[0];
        require<NumericError>(std::isfinite(lv),
                              "train_vae: non-finite loss at step " + std::to_string(step));
        tp.backward(loss);
        opt.step();
        stats.loss_curve.push_back(lv);
        if (log && cfg.log_every > 0 && step % cfg.log_every == 0)
            (*log) << "vae step " << step << " loss " << lv << "\n";
    }

    if (!val.empty()) {
        double acc = 0;
        int n = std::min<int>(64, static_cast<int>(val.size()));
        for (int i = 0; i < n; ++i) {
            Tensorf img = synth::load_image(man, *val[static_cast<size_t>(i)]);
            Tensorf one = img.reshaped({1, 3, H, W});
            Tensorf rec = vae_decode(vae, vae_encode(vae, one));
            acc += psnr(one, rec);
        }
        stats.val_psnr = acc / n;
        if (log) (*log) << "vae val psnr " << stats.val_psnr << " dB\n";
    }
    return stats;
}

inline void save_vae(const std::string& path, VAEF& vae, nlohmann::json extra_meta = {}) {
    ParamCollector<float> params;
    vae.collect(params);
    nlohmann::json meta = std::move(extra_meta);
    meta["latent_channels"] = kLatentChannels;
    meta["down_factor"] = kDownFactor;
    save_checkpoint(path, "vae", meta, params);
}

inline nlohmann::json load_vae(const std::string& path, VAEF& vae) {
    ParamCollector<float> params;
    vae.collect(params);
    return load_checkpoint(path, "vae", params);
}

// Content hash of the current parameter values, for frozen-weights checks.
template <typename T>
inline std::string params_digest(ParamCollector<T>& params) {
    Sha256 h;
    for (auto& it : params.items)
        h.update(it.second->value.data(), static_cast<size_t>(it.second->numel()) * sizeof(T));
    return h.hex();
}

}  // namespace crsdiff::diff

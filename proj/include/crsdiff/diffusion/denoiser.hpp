#pragma once

// Cross-attention U-Net noise predictor over latents.  Three resolutions
// (16 -> 8 -> 4 at desk scale), one residual block per level with timestep
// FiLM injection, cross-attention against the global context tokens at
// every resolution, self-attention at the coarsest.  The final conv is
// zero-initialized so a fresh model predicts exactly zero.
//
// Control residuals enter where ControlNet puts them: added to the skip
// features and the middle feature right before the decoder consumes them.

#include "crsdiff/core/nn.hpp"
#include "crsdiff/diffusion/schedule.hpp"

namespace crsdiff::diff {

template <typename T>
struct ResBlock {
    GroupNorm<T> n1, n2;
    Conv2d<T> c1, c2;
    Linear<T> t_proj;
    Conv2d<T> skip;
    bool project_skip = false;

    void init(int cin, int cout, int t_dim, Rng& rng) {
        n1.init(cin, std::min(8, cin));
        c1.init(cin, cout, 3, 1, 1, rng);
        t_proj.init(t_dim, cout, rng);
        n2.init(cout, std::min(8, cout));
        c2.init(cout, cout, 3, 1, 1, rng);
        project_skip = cin != cout;
        if (project_skip) skip.init(cin, cout, 1, 1, 0, rng);
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> x, Val<T> t_emb) {
        Tape<T>& tp = L.tape;
        Val<T> h = c1.fwd(L, tp.silu(n1.fwd(L, x)));
        h = tp.add_chan(h, t_proj.fwd(L, tp.silu(t_emb)));
        h = c2.fwd(L, tp.silu(n2.fwd(L, h)));
        Val<T> s = project_skip ? skip.fwd(L, x) : x;
        return tp.add(h, s);
    }

    void collect(ParamCollector<T>& c, const std::string& p) {
        n1.collect(c, p + ".n1");
        c1.collect(c, p + ".c1");
        t_proj.collect(c, p + ".t_proj");
        n2.collect(c, p + ".n2");
        c2.collect(c, p + ".c2");
        if (project_skip) skip.collect(c, p + ".skip");
    }
};

// Attention over pixels; cross when a context is supplied, self otherwise.
template <typename T>
struct AttnBlock2d {
    GroupNorm<T> norm;
    Linear<T> wq, wk, wv, wo;

    void init(int channels, int kv_dim, Rng& rng) {
        norm.init(channels, std::min(8, channels));
        wq.init(channels, channels, rng);
        wk.init(kv_dim, channels, rng);
        wv.init(kv_dim, channels, rng);
        wo.init(channels, channels, rng);
    }

    // x: [N,C,H,W]; kv_tokens: [N,K,kv_dim] (pass the pixel tokens for self)
    Val<T> fwd(ParamLease<T>& L, Val<T> x, Val<T> kv_tokens) {
        Tape<T>& tp = L.tape;
        auto sh = tp.val(x).shape;
        Val<T> tokens = tp.nchw_to_nlc(norm.fwd(L, x));
        Val<T> q = linear_tokens(L, wq, tokens);
        Val<T> k = linear_tokens(L, wk, kv_tokens);
        Val<T> v = linear_tokens(L, wv, kv_tokens);
        Val<T> o = linear_tokens(L, wo, sdp_attention(tp, q, k, v));
        return tp.add(x, tp.nlc_to_nchw(o, sh[2], sh[3]));
    }

    Val<T> fwd_self(ParamLease<T>& L, Val<T> x) {
        Tape<T>& tp = L.tape;
        auto sh = tp.val(x).shape;
        Val<T> tokens = tp.nchw_to_nlc(norm.fwd(L, x));
        Val<T> q = linear_tokens(L, wq, tokens);
        Val<T> k = linear_tokens(L, wk, tokens);
        Val<T> v = linear_tokens(L, wv, tokens);
        Val<T> o = linear_tokens(L, wo, sdp_attention(tp, q, k, v));
        return tp.add(x, tp.nlc_to_nchw(o, sh[2], sh[3]));
    }

    void collect(ParamCollector<T>& c, const std::string& p) {
        norm.collect(c, p + ".norm");
        wq.collect(c, p + ".wq");
        wk.collect(c, p + ".wk");
        wv.collect(c, p + ".wv");
        wo.collect(c, p + ".wo");
    }
};

struct DenoiserConfig {
    int latent_h = 16, latent_w = 16;
    int base = 48;       // channels at the finest resolution; 2x below
    int t_dim = 128;     // timestep embedding dim
    int ctx_dim = 64;    // context token dim (dualenc token dim)
};

// Shapes of the four control-residual injection points:
// skip0 @ full latent res, skip1 @ /2, skip2 and middle @ /4.
inline std::vector<std::vector<int>> residual_shapes(const DenoiserConfig& cfg) {
    int c0 = cfg.base, c1 = 2 * cfg.base;
    int h = cfg.latent_h, w = cfg.latent_w;
    return {{c0, h, w}, {c1, h / 2, w / 2}, {c1, h / 4, w / 4}, {c1, h / 4, w / 4}};
}

template <typename T>
struct ResidualVals {
    std::vector<Val<T>> r;  // skip0, skip1, skip2, mid
};

struct ControlResiduals {
    std::vector<Tensorf> r;  // skip0, skip1, skip2, mid (each [N,C,H,W])
};

template <typename T>
struct UNetDenoiser {
    DenoiserConfig cfg;
    Linear<T> t_fc1, t_fc2;
    Conv2d<T> in_conv;
    ResBlock<T> down0, down1, down2, mid, up2, up1, up0;
    AttnBlock2d<T> xa0, xa1, xa2, sa2;
    Conv2d<T> ds0, ds1;
    GroupNorm<T> out_norm;
    Conv2d<T> out_conv;

    void init(const DenoiserConfig& c, Rng& rng) {
        cfg = c;
        int b = cfg.base, b2 = 2 * cfg.base;
        t_fc1.init(cfg.t_dim, cfg.t_dim, rng);
        t_fc2.init(cfg.t_dim, cfg.t_dim, rng);
        in_conv.init(kLatentChannels, b, 3, 1, 1, rng);
        down0.init(b, b, cfg.t_dim, rng);
        xa0.init(b, cfg.ctx_dim, rng);
        ds0.init(b, b2, 3, 2, 1, rng);
        down1.init(b2, b2, cfg.t_dim, rng);
        xa1.init(b2, cfg.ctx_dim, rng);
        ds1.init(b2, b2, 3, 2, 1, rng);
        down2.init(b2, b2, cfg.t_dim, rng);
        sa2.init(b2, b2, rng);
        xa2.init(b2, cfg.ctx_dim, rng);
        mid.init(b2, b2, cfg.t_dim, rng);
        up2.init(2 * b2, b2, cfg.t_dim, rng);
        up1.init(2 * b2, b2, cfg.t_dim, rng);
        up0.init(b2 + b, b, cfg.t_dim, rng);
        out_norm.init(b, std::min(8, b));
        out_conv.init(b, kLatentChannels, 3, 1, 1, rng, /*zero=*/true);
    }

    Val<T> t_embed_fwd(ParamLease<T>& L, const std::vector<int>& ts) {
        Tape<T>& tp = L.tape;
        Val<T> e = tp.input(sinusoidal_embedding<T>(ts, cfg.t_dim));
        return t_fc2.fwd(L, tp.silu(t_fc1.fwd(L, e)));
    }

    // Core forward given an already-built timestep embedding [N, t_dim].
    Val<T> fwd_with_temb(ParamLease<T>& L, Val<T> z, Val<T> t_emb, Val<T> ctx,
                         const ResidualVals<T>* res = nullptr) {
        Tape<T>& tp = L.tape;
        Val<T> s0 = xa0.fwd(L, down0.fwd(L, in_conv.fwd(L, z), t_emb), ctx);
        Val<T> s1 = xa1.fwd(L, down1.fwd(L, ds0.fwd(L, s0), t_emb), ctx);
        Val<T> s2 = xa2.fwd(L, sa2.fwd_self(L, down2.fwd(L, ds1.fwd(L, s1), t_emb)), ctx);
        Val<T> m = mid.fwd(L, s2, t_emb);
        if (res) {
            require<InputError>(res->r.size() == 4, "denoiser: 4 control residuals expected");
            s0 = tp.add(s0, res->r[0]);
            s1 = tp.add(s1, res->r[1]);
            s2 = tp.add(s2, res->r[2]);
            m = tp.add(m, res->r[3]);
        }
        Val<T> u = up2.fwd(L, tp.concat({m, s2}, 1), t_emb);
        u = up1.fwd(L, tp.concat({tp.upsample_nearest2(u), s1}, 1), t_emb);
        u = up0.fwd(L, tp.concat({tp.upsample_nearest2(u), s0}, 1), t_emb);
        return out_conv.fwd(L, tp.silu(out_norm.fwd(L, u)));
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> z, const std::vector<int>& ts, Val<T> ctx,
               const ResidualVals<T>* res = nullptr) {
        return fwd_with_temb(L, z, t_embed_fwd(L, ts), ctx, res);
    }

    void collect(ParamCollector<T>& c) {
        t_fc1.collect(c, "unet.t_fc1");
        t_fc2.collect(c, "unet.t_fc2");
        in_conv.collect(c, "unet.in_conv");
        down0.collect(c, "unet.down0");
        xa0.collect(c, "unet.xa0");
        ds0.collect(c, "unet.ds0");
        down1.collect(c, "unet.down1");
        xa1.collect(c, "unet.xa1");
        ds1.collect(c, "unet.ds1");
        down2.collect(c, "unet.down2");
        sa2.collect(c, "unet.sa2");
        xa2.collect(c, "unet.xa2");
        mid.collect(c, "unet.mid");
        up2.collect(c, "unet.up2");
        up1.collect(c, "unet.up1");
        up0.collect(c, "unet.up0");
        out_norm.collect(c, "unet.out_norm");
        out_conv.collect(c, "unet.out_conv");
    }

    // Encoder-copy parameter collection (the part ControlNet replicates:
    // everything on the downsampling path plus the middle block).
    void collect_encoder(ParamCollector<T>& c, const std::string& prefix) {
        t_fc1.collect(c, prefix + ".t_fc1");
        t_fc2.collect(c, prefix + ".t_fc2");
        in_conv.collect(c, prefix + ".in_conv");
        down0.collect(c, prefix + ".down0");
        xa0.collect(c, prefix + ".xa0");
        ds0.collect(c, prefix + ".ds0");
        down1.collect(c, prefix + ".down1");
        xa1.collect(c, prefix + ".xa1");
        ds1.collect(c, prefix + ".ds1");
        down2.collect(c, prefix + ".down2");
        sa2.collect(c, prefix + ".sa2");
        xa2.collect(c, prefix + ".xa2");
        mid.collect(c, prefix + ".mid");
    }
};

using UNetDenoiserF = UNetDenoiser<float>;

// Inference-path noise prediction.  ctx: [N,K,ctx_dim].
inline Tensorf predict_noise(UNetDenoiserF& unet, const Tensorf& z_t, const std::vector<int>& ts,
                             const Tensorf& ctx, const ControlResiduals* res = nullptr) {
    require<InputError>(z_t.rank() == 4 && static_cast<int>(ts.size()) == z_t.shape[0],
                        "predict_noise: batch/timestep mismatch");
    require<InputError>(ctx.rank() == 3 && ctx.shape[0] == z_t.shape[0],
                        "predict_noise: context batch mismatch");
    Tape<float> tp;
    ParamLease<float> L(tp);
    ResidualVals<float> rv;
    const ResidualVals<float>* rvp = nullptr;
    if (res) {
        for (const auto& r : res->r) rv.r.push_back(tp.input(r));
        rvp = &rv;
    }
    Val<float> eps = unet.fwd(L, tp.input(z_t), ts, tp.input(ctx), rvp);
    const Tensorf& out = tp.val(eps);
    if (!out.all_finite()) {
        for (size_t i = 0; i < tp.nodes.size(); ++i)
            if (!tp.nodes[i].val.all_finite())
                throw NumericError("predict_noise: non-finite activations at node " +
                                   std::to_string(i) + " of shape " +
                                   shape_str(tp.nodes[i].val.shape));
        throw NumericError("predict_noise: non-finite output");
    }
    return out;
}

}  // namespace crsdiff::diff

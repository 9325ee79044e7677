#pragma once

// Small layer zoo over the autodiff tape: linear, conv, norms, embeddings,
// attention.  Layers hold persistent Params; a forward pass leases them
// into the current tape.

#include <string>
#include <vector>

#include "crsdiff/core/tape.hpp"

namespace crsdiff {

template <typename T>
struct ParamCollector {
    std::vector<std::pair<std::string, Param<T>*>> items;

    void add(const std::string& name, Param<T>& p) { items.push_back({name, &p}); }

    int64_t total_count() const {
        int64_t n = 0;
        for (auto& it : items) n += it.second->numel();
        return n;
    }

    void zero_grad() {
        for (auto& it : items) it.second->zero_grad();
    }
};

template <typename T>
struct Linear {
    Param<T> w, b;

    void init(int in, int out, Rng& rng, bool zero = false) {
        T s = zero ? T(0) : static_cast<T>(std::sqrt(1.0 / in));
        w = Param<T>(Tensor<T>::randn({in, out}, rng, s));
        b = Param<T>(Tensor<T>::zeros({out}));
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> x) { return L.tape.linear(x, L(w), L(b)); }

    void collect(ParamCollector<T>& c, const std::string& p) {
        c.add(p + ".w", w);
        c.add(p + ".b", b);
    }
};

template <typename T>
struct Conv2d {
    Param<T> w, b;
    int stride = 1, pad = 1;

    void init(int cin, int cout, int k, int stride_, int pad_, Rng& rng, bool zero = false) {
        stride = stride_;
        pad = pad_;
        T s = zero ? T(0) : static_cast<T>(std::sqrt(2.0 / (cin * k * k)));
        w = Param<T>(Tensor<T>::randn({cout, cin, k, k}, rng, s));
        b = Param<T>(Tensor<T>::zeros({cout}));
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> x) { return L.tape.conv2d(x, L(w), L(b), stride, pad); }

    void collect(ParamCollector<T>& c, const std::string& p) {
        c.add(p + ".w", w);
        c.add(p + ".b", b);
    }
};

template <typename T>
struct GroupNorm {
    Param<T> gamma, beta;
    int groups = 8;

    void init(int channels, int groups_) {
        groups = groups_;
        gamma = Param<T>(Tensor<T>::full({channels}, T(1)));
        beta = Param<T>(Tensor<T>::zeros({channels}));
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> x) {
        return L.tape.group_norm(x, groups, L(gamma), L(beta));
    }

    void collect(ParamCollector<T>& c, const std::string& p) {
        c.add(p + ".gamma", gamma);
        c.add(p + ".beta", beta);
    }
};

template <typename T>
struct LayerNorm {
    Param<T> gamma, beta;

    void init(int d) {
        gamma = Param<T>(Tensor<T>::full({d}, T(1)));
        beta = Param<T>(Tensor<T>::zeros({d}));
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> x) { return L.tape.layer_norm(x, L(gamma), L(beta)); }

    void collect(ParamCollector<T>& c, const std::string& p) {
        c.add(p + ".gamma", gamma);
        c.add(p + ".beta", beta);
    }
};

template <typename T>
struct EmbeddingTable {
    Param<T> table;

    void init(int vocab, int d, Rng& rng, T s = T(0.02)) {
        table = Param<T>(Tensor<T>::randn({vocab, d}, rng, s));
    }

    Val<T> fwd(ParamLease<T>& L, const std::vector<int>& ids, std::vector<int> lead_shape) {
        return L.tape.embedding(L(table), ids, std::move(lead_shape));
    }

    void collect(ParamCollector<T>& c, const std::string& p) { c.add(p + ".table", table); }
};

// Single-head scaled dot-product attention.  q:[B,Lq,D] kv:[B,Lk,D].
template <typename T>
inline Val<T> sdp_attention(Tape<T>& tp, Val<T> q, Val<T> k, Val<T> v) {
    int d = tp.val(q).shape.back();
    Val<T> s = tp.scale(tp.bmm_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    return tp.bmm(tp.softmax_lastdim(s), v);
}

// Applies a Linear to the last dim of a [B,L,D] tensor.
template <typename T>
inline Val<T> linear_tokens(ParamLease<T>& L, Linear<T>& lin, Val<T> x) {
    auto sh = L.tape.val(x).shape;
    int B = sh[0], Lq = sh[1], D = sh[2];
    Val<T> flat = L.tape.reshape(x, {B * Lq, D});
    Val<T> y = lin.fwd(L, flat);
    int Dout = L.tape.val(y).shape[1];
    return L.tape.reshape(y, {B, Lq, Dout});
}

// Pre-LN transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
template <typename T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    Linear<T> wq, wk, wv, wo, fc1, fc2;

    void init(int d, int hidden, Rng& rng) {
        ln1.init(d);
        ln2.init(d);
        wq.init(d, d, rng);
        wk.init(d, d, rng);
        wv.init(d, d, rng);
        wo.init(d, d, rng);
        fc1.init(d, hidden, rng);
        fc2.init(hidden, d, rng);
    }

    Val<T> fwd(ParamLease<T>& L, Val<T> x) {
        Tape<T>& tp = L.tape;
        Val<T> h = ln1.fwd(L, x);
        Val<T> att = sdp_attention(tp, linear_tokens(L, wq, h), linear_tokens(L, wk, h),
                                   linear_tokens(L, wv, h));
        x = tp.add(x, linear_tokens(L, wo, att));
        Val<T> m = ln2.fwd(L, x);
        m = linear_tokens(L, fc1, m);
        m = tp.silu(m);
        m = linear_tokens(L, fc2, m);
        return tp.add(x, m);
    }

    void collect(ParamCollector<T>& c, const std::string& p) {
        ln1.collect(c, p + ".ln1");
        ln2.collect(c, p + ".ln2");
        wq.collect(c, p + ".wq");
        wk.collect(c, p + ".wk");
        wv.collect(c, p + ".wv");
        wo.collect(c, p + ".wo");
        fc1.collect(c, p + ".fc1");
        fc2.collect(c, p + ".fc2");
    }
};

// Sinusoidal timestep embedding, computed outside the tape (no grad).
template <typename T>
inline Tensor<T> sinusoidal_embedding(const std::vector<int>& t, int dim, int max_period = 10000) {
    int n = static_cast<int>(t.size());
    Tensor<T> out({n, dim});
    int half = dim / 2;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < half; ++j) {
            double freq = std::exp(-std::log(static_cast<double>(max_period)) * j / half);
            out.at(i, j) = static_cast<T>(std::cos(t[i] * freq));
            out.at(i, half + j) = static_cast<T>(std::sin(t[i] * freq));
        }
    return out;
}

}  // namespace crsdiff

#include <doctest.h>

#include "crsdiff/core/optim.hpp"
#include "gradcheck.hpp"

using namespace crsdiff;
using crsdiff::testing::max_rel_grad_error;

namespace {

Tensord randn(std::vector<int> s, uint64_t seed) {
    Rng r(seed);
    return Tensord::randn(std::move(s), r);
}

}  // namespace

TEST_CASE("gradcheck: linear + activations + mse") {
    Rng rng(1);
    Param<double> w(Tensord::randn({6, 5}, rng, 0.4));
    Param<double> b(Tensord::randn({5}, rng, 0.1));
    ParamCollector<double> pc;
    pc.add("w", w);
    pc.add("b", b);

    Tensord x = randn({4, 6}, 2);
    Tensord tgt = randn({4, 5}, 3);
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto y = tp.linear(tp.input(x), L(w), L(b));
        y = tp.silu(y);
        y = tp.tanh_(y);
        y = tp.sigmoid(y);
        auto loss = tp.mse(y, tp.input(tgt));
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(77);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 8) < 1e-4);
}

TEST_CASE("gradcheck: conv2d stride 1 and 2") {
    Rng rng(5);
    Param<double> w1(Tensord::randn({4, 3, 3, 3}, rng, 0.3));
    Param<double> b1(Tensord::randn({4}, rng, 0.1));
    Param<double> w2(Tensord::randn({5, 4, 3, 3}, rng, 0.3));
    Param<double> b2(Tensord::randn({5}, rng, 0.1));
    ParamCollector<double> pc;
    pc.add("w1", w1);
    pc.add("b1", b1);
    pc.add("w2", w2);
    pc.add("b2", b2);

    Tensord x = randn({2, 3, 8, 8}, 6);
    Tensord tgt = randn({2, 5, 4, 4}, 7);
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto h = tp.conv2d(tp.input(x), L(w1), L(b1), 1, 1);
        h = tp.silu(h);
        h = tp.conv2d(h, L(w2), L(b2), 2, 1);
        auto loss = tp.mse(h, tp.input(tgt));
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(78);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 6) < 1e-4);
}

TEST_CASE("gradcheck: norms") {
    Rng rng(9);
    Param<double> gamma(Tensord::randn({6}, rng, 0.2));
    Param<double> beta(Tensord::randn({6}, rng, 0.2));
    Param<double> lgamma(Tensord::randn({5}, rng, 0.2));
    Param<double> lbeta(Tensord::randn({5}, rng, 0.2));
    Param<double> w(Tensord::randn({6, 6, 1, 1}, rng, 0.4));
    Param<double> bb(Tensord::randn({6}, rng, 0.1));
    for (auto* p : {&gamma, &lgamma})
        for (auto& v : p->value.v) v += 1.0;
    ParamCollector<double> pc;
    pc.add("gamma", gamma);
    pc.add("beta", beta);
    pc.add("lgamma", lgamma);
    pc.add("lbeta", lbeta);
    pc.add("w", w);
    pc.add("bb", bb);

    Tensord x = randn({2, 6, 4, 4}, 10);
    Tensord tok = randn({3, 4, 5}, 11);
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto h = tp.conv2d(tp.input(x), L(w), L(bb), 1, 0);
        h = tp.group_norm(h, 3, L(gamma), L(beta));
        h = tp.instance_norm(h);
        auto a = tp.mean_all(h);
        auto t = tp.layer_norm(tp.input(tok), L(lgamma), L(lbeta));
        auto bsum = tp.mean_all(t);
        // combine: product keeps both branches in the gradient
        auto loss = tp.add(tp.mul(a, bsum), tp.mul(a, a));
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(79);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 6, 1e-5) < 1e-4);
}

TEST_CASE("gradcheck: attention stack with embeddings") {
    Rng rng(13);
    TransformerBlock<double> blk;
    blk.init(8, 16, rng);
    EmbeddingTable<double> emb;
    emb.init(12, 8, rng, 0.5);
    ParamCollector<double> pc;
    blk.collect(pc, "blk");
    emb.collect(pc, "emb");

    std::vector<int> ids = {1, 4, 7, 2, 0, 11, 3, 3};
    Tensord tgt = randn({2, 4, 8}, 14);
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto x = emb.fwd(L, ids, {2, 4});
        auto y = blk.fwd(L, x);
        auto loss = tp.mse(y, tp.input(tgt));
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(80);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 4) < 1e-4);
}

TEST_CASE("gradcheck: cross attention between token sets") {
    Rng rng(17);
    Linear<double> wq, wk, wv;
    wq.init(6, 6, rng);
    wk.init(4, 6, rng);
    wv.init(4, 6, rng);
    ParamCollector<double> pc;
    wq.collect(pc, "wq");
    wk.collect(pc, "wk");
    wv.collect(pc, "wv");

    Tensord q = randn({2, 5, 6}, 18);
    Tensord ctx = randn({2, 7, 4}, 19);
    Tensord tgt = randn({2, 5, 6}, 20);
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto qq = linear_tokens(L, wq, tp.input(q));
        auto kk = linear_tokens(L, wk, tp.input(ctx));
        auto vv = linear_tokens(L, wv, tp.input(ctx));
        auto o = sdp_attention(tp, qq, kk, vv);
        auto loss = tp.mse(o, tp.input(tgt));
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(81);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 6) < 1e-4);
}

TEST_CASE("gradcheck: shape ops, pooling, broadcast, normalize, xent") {
    Rng rng(21);
    Param<double> w(Tensord::randn({4, 3, 3, 3}, rng, 0.3));
    Param<double> b(Tensord::randn({4}, rng, 0.1));
    Param<double> lin_w(Tensord::randn({4, 3}, rng, 0.4));
    Param<double> lin_b(Tensord::randn({3}, rng, 0.1));
    Param<double> vvec(Tensord::randn({2, 4}, rng, 0.3));
    ParamCollector<double> pc;
    pc.add("w", w);
    pc.add("b", b);
    pc.add("lin_w", lin_w);
    pc.add("lin_b", lin_b);
    pc.add("v", vvec);

    Tensord x = randn({2, 3, 6, 6}, 22);
    std::vector<int> labels = {0, 2};
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto h = tp.conv2d(tp.input(x), L(w), L(b), 1, 1);
        h = tp.upsample_nearest2(h);
        h = tp.add_chan(h, L(vvec));
        auto parts = std::vector<Val<double>>{tp.slice(h, 1, 0, 2), tp.slice(h, 1, 2, 2)};
        h = tp.concat(parts, 1);
        auto pooled = tp.global_avgpool(h);
        auto nrm = tp.l2_normalize_rows(pooled);
        auto logits = tp.linear(nrm, L(lin_w), L(lin_b));
        auto loss = tp.softmax_xent(logits, labels);
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(82);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 6) < 1e-4);
}

TEST_CASE("gradcheck: rowdot and mean_axis1") {
    Rng rng(23);
    Param<double> a(Tensord::randn({3, 4, 5}, rng, 0.5));
    Param<double> c(Tensord::randn({3, 5}, rng, 0.5));
    ParamCollector<double> pc;
    pc.add("a", a);
    pc.add("c", c);
    auto loss_fn = [&](bool bw) {
        Tape<double> tp;
        ParamLease<double> L(tp);
        auto m = tp.mean_axis1(L(a));
        auto d = tp.rowdot(tp.l2_normalize_rows(m), tp.l2_normalize_rows(L(c)));
        auto loss = tp.mean_all(tp.exp_(d));
        if (bw) tp.backward(loss);
        return static_cast<double>(tp.val(loss)[0]);
    };
    Rng probe(83);
    CHECK(max_rel_grad_error(pc, loss_fn, probe, 8) < 1e-4);
}

TEST_CASE("adamw reduces a quadratic") {
    Rng rng(25);
    Param<float> p(Tensorf::randn({16}, rng));
    ParamCollector<float> pc;
    pc.add("p", p);
    AdamW<float> opt(pc);
    opt.lr = 0.05f;
    opt.weight_decay = 0.0f;
    float first = 0;
    for (int it = 0; it < 200; ++it) {
        pc.zero_grad();
        Tape<float> tp;
        ParamLease<float> L(tp);
        auto loss = tp.mse(L(p), tp.input(Tensorf::zeros({16})));
        tp.backward(loss);
        if (it == 0) first = tp.val(loss)[0];
        opt.step();
    }
    Tape<float> tp;
    ParamLease<float> L(tp);
    auto loss = tp.mse(L(p), tp.input(Tensorf::zeros({16})));
    CHECK(tp.val(loss)[0] < 0.01f * first);
}

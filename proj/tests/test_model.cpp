#include <doctest.h>

#include <cmath>
#include <vector>

#include "cob/model.hpp"
#include "cob/rng.hpp"

using cob::ModelConfig;
using cob::Tape;
using cob::Tensor;

namespace {

ModelConfig small_cfg(int hidden = 4) {
    ModelConfig cfg;
    cfg.hidden = hidden;
    cfg.num_bga_layers = 1;
    cfg.num_heads = 1;
    cfg.dropout_gcn = 0.0;
    cfg.dropout_bga = 0.0;
    cfg.gcn_layers = 2;
    return cfg;
}

Tensor random_tensor(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    cob::Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_values(rows, cols, std::move(v), false);
}

cob::Partition two_clusters(int n, const std::vector<int>& assignment) {
    cob::Partition part;
    part.P = 2;
    part.epsilon = 1.0;
    part.assignment = assignment;
    part.members.resize(2);
    for (int u = 0; u < n; ++u) part.members[assignment[u]].push_back(u);
    return part;
}

double loss_value(const Tensor& pg, const Tensor& pt, const Tensor& sg, const Tensor& st,
                  const std::vector<int>& labels, const std::vector<std::uint8_t>& mask,
                  double alpha) {
    Tape tape;
    return cob::collaborative_loss(tape, pg, pt, sg, st, labels, mask, alpha).item();
}

}  // namespace

TEST_CASE("model config rejects bad values") {
    ModelConfig cfg = small_cfg();
    cfg.gcn_layers = 4;
    CHECK_THROWS_AS(cfg.validate(), cob::ConfigError);
    cfg = small_cfg();
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), cob::ConfigError);
    cfg = small_cfg();
    cfg.num_heads = 3;  // does not divide hidden=4
    CHECK_THROWS_AS(cfg.validate(), cob::ConfigError);
    cfg = small_cfg();
    cfg.tau = -0.5;
    CHECK_THROWS_AS(cfg.validate(), cob::ConfigError);
}

TEST_CASE("parameter groups split the model without overlap") {
    cob::Rng rng(1);
    const ModelConfig cfg = small_cfg();
    const cob::CobformerParams params = cob::make_cobformer(cfg, 3, 2, rng);
    const auto all = params.all();
    const auto gg = params.gcn_group();
    const auto bg = params.bga_group();
    CHECK(gg.size() == 2 + 2);  // two convolutions + gcn head w,b
    CHECK(gg.size() + bg.size() == all.size());
    for (const Tensor& g : gg)
        for (const Tensor& b : bg) CHECK(g.d.get() != b.d.get());
    const auto named = params.named();
    for (std::size_t i = 0; i < named.size(); ++i)
        for (std::size_t j = i + 1; j < named.size(); ++j)
            CHECK(named[i].first != named[j].first);
}

TEST_CASE("bga attention never couples nodes across clusters") {
    cob::Rng rng(2);
    const ModelConfig cfg = small_cfg();
    cob::CobformerParams params = cob::make_cobformer(cfg, 3, 2, rng);
    const cob::Partition part = two_clusters(5, {0, 0, 0, 1, 1});
    const Tensor x = random_tensor(5, 3, 10);

    Tape t1;
    const cob::BgaOut a = cob::bga_forward(t1, params, cfg, x, part, false, 0, true);
    REQUIRE(a.captures.size() == 1);
    REQUIRE(a.captures[0].intra.size() == 2);
    CHECK(a.captures[0].intra[0].rows() == 3);
    CHECK(a.captures[0].intra[1].rows() == 2);
    CHECK(a.captures[0].inter.rows() == 2);
    CHECK(a.attn_entries == 9 + 4 + 4);

    // perturbing a node in cluster 1 must leave cluster 0's scores untouched
    Tensor x2 = random_tensor(5, 3, 10);
    x2.at(3, 0) += 2.5;
    x2.at(4, 2) -= 1.5;
    Tape t2;
    const cob::BgaOut b = cob::bga_forward(t2, params, cfg, x2, part, false, 0, true);
    CHECK(a.captures[0].intra[0].values() == b.captures[0].intra[0].values());
    CHECK(a.captures[0].intra[1].values() != b.captures[0].intra[1].values());
}

TEST_CASE("bga forward matches a hand-assembled composition") {
    cob::Rng rng(3);
    const ModelConfig cfg = small_cfg();
    cob::CobformerParams params = cob::make_cobformer(cfg, 2, 2, rng);
    const cob::Partition part = two_clusters(3, {0, 1, 1});
    const Tensor x = random_tensor(3, 2, 20);

    Tape t1;
    const cob::BgaOut got = cob::bga_forward(t1, params, cfg, x, part, false, 0, false);

    Tape t;
    const cob::BgaLayerParams& L = params.bga[0];
    const Tensor h = t.add(t.matmul(x, params.embed_w), params.embed_b);
    const Tensor h0 = t.row_gather(h, {0});
    const Tensor h1 = t.row_gather(h, {1, 2});
    const Tensor f0 =
        cob::ffn_forward(t, L.intra_ffn, cob::attention_forward(t, L.intra_attn, h0, h0, false).out);
    const Tensor f1 =
        cob::ffn_forward(t, L.intra_ffn, cob::attention_forward(t, L.intra_attn, h1, h1, false).out);
    const Tensor hcm = t.concat_rows({f0, f1});
    const Tensor tokens = t.mean_rows(hcm, {0, 1, 1}, 2);
    const Tensor tok_out = cob::ffn_forward(
        t, L.inter_ffn, cob::attention_forward(t, L.inter_attn, tokens, tokens, false).out);
    const Tensor want = t.matmul(
        t.concat_cols(t.row_gather(hcm, {0, 1, 2}), t.row_gather(tok_out, {0, 1, 1})),
        params.fusion_w);

    REQUIRE(got.node_repr.rows() == 3);
    REQUIRE(got.node_repr.cols() == 4);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(got.node_repr.at(r, c) == doctest::Approx(want.at(r, c)).epsilon(1e-12));
}

TEST_CASE("single-cluster bga equals vanilla global attention") {
    cob::Rng rng(4);
    const ModelConfig cfg = small_cfg();
    cob::CobformerParams params = cob::make_cobformer(cfg, 3, 2, rng);
    const int n = 4;
    const cob::Partition part = cob::trivial_partition(n);
    const Tensor x = random_tensor(n, 3, 30);

    Tape t1;
    const cob::BgaOut got = cob::bga_forward(t1, params, cfg, x, part, false, 0, true);
    CHECK(got.captures[0].inter.rows() == 1);
    CHECK(got.captures[0].inter.at(0, 0) == 1.0);
    CHECK(got.attn_entries == n * n + 1);

    Tape t;
    const cob::BgaLayerParams& L = params.bga[0];
    const Tensor h = t.add(t.matmul(x, params.embed_w), params.embed_b);
    const Tensor f = cob::ffn_forward(
        t, L.intra_ffn, cob::attention_forward(t, L.intra_attn, h, h, false).out);
    const Tensor token = t.mean_rows(f, std::vector<int>(n, 0), 1);
    const Tensor tok_out = cob::ffn_forward(
        t, L.inter_ffn, cob::attention_forward(t, L.inter_attn, token, token, false).out);
    const Tensor want = t.matmul(
        t.concat_cols(f, t.row_gather(tok_out, std::vector<int>(n, 0))), params.fusion_w);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(got.node_repr.at(r, c) == doctest::Approx(want.at(r, c)).epsilon(1e-10));
}

TEST_CASE("single node single cluster produces unit score matrices") {
    cob::Rng rng(5);
    const ModelConfig cfg = small_cfg();
    cob::CobformerParams params = cob::make_cobformer(cfg, 3, 2, rng);
    const Tensor x = random_tensor(1, 3, 40);
    Tape t;
    const cob::BgaOut got = cob::bga_forward(t, params, cfg, x, cob::trivial_partition(1), false,
                                             0, true);
    CHECK(got.node_repr.rows() == 1);
    CHECK(got.captures[0].intra[0].at(0, 0) == 1.0);
    CHECK(got.captures[0].inter.at(0, 0) == 1.0);
}

TEST_CASE("approximate global attention spreads the inter score over the key cluster") {
    const cob::Partition part = two_clusters(4, {0, 1, 1, 1});
    const Tensor inter = Tensor::from_values(2, 2, {0.4, 0.6, 0.25, 0.75});
    CHECK(cob::approx_global_attention(part, inter, 0, 1) == doctest::Approx(0.2));
    CHECK(cob::approx_global_attention(part, inter, 0, 0) == doctest::Approx(0.4));
    CHECK_THROWS_AS(cob::approx_global_attention(part, inter, 2, 0), cob::BoundsError);

    const cob::Partition full = cob::trivial_partition(5);
    const Tensor one = Tensor::from_values(1, 1, {1.0});
    CHECK(cob::approx_global_attention(full, one, 0, 0) == doctest::Approx(0.2));
}

TEST_CASE("pooled attention equals the expanded per-node sum") {
    cob::Rng rng(6);
    for (int inst = 0; inst < 10; ++inst) {
        const int P = 1 + static_cast<int>(rng.next_below(4));
        cob::Partition part;
        part.P = P;
        part.epsilon = 10.0;
        part.members.resize(P);
        int n = 0;
        for (int p = 0; p < P; ++p) {
            const int sz = 1 + static_cast<int>(rng.next_below(5));
            for (int i = 0; i < sz; ++i) {
                part.assignment.push_back(p);
                part.members[p].push_back(n++);
            }
        }
        const Tensor repr = random_tensor(n, 4, 100 + inst);
        const Tensor w_v = random_tensor(4, 3, 200 + inst);
        std::vector<double> iv(static_cast<std::size_t>(P) * P);
        for (double& v : iv) v = rng.next_double();
        const Tensor inter = Tensor::from_values(P, P, std::move(iv));
        CHECK(cob::prop41_identity_gap(repr, part, inter, w_v) < 1e-10);
    }
}

TEST_CASE("soft labels follow the temperature contract") {
    Tape tape;
    const Tensor logits = Tensor::from_values(2, 2, {std::log(2.0), 0.0, -1.0, 3.0});

    const Tensor s1 = cob::soft_labels(tape, logits, 1.0);
    CHECK(s1.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s1.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    const Tensor plain = tape.row_softmax(logits);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK(s1.at(r, c) == doctest::Approx(plain.at(r, c)).epsilon(1e-14));

    const Tensor tiny = cob::soft_labels(tape, logits, 1e-6);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) CHECK(tiny.at(r, c) == doctest::Approx(0.5).epsilon(1e-5));

    for (double tau : {0.3, 0.5, 0.9, 2.0}) {
        const Tensor s = cob::soft_labels(tape, logits, tau);
        CHECK((s.at(0, 0) > s.at(0, 1)) == (logits.at(0, 0) > logits.at(0, 1)));
        CHECK((s.at(1, 0) > s.at(1, 1)) == (logits.at(1, 0) > logits.at(1, 1)));
    }
    CHECK_THROWS_AS(cob::soft_labels(tape, logits, 0.0), cob::ConfigError);
}

TEST_CASE("prediction heads with zero weights are uniform") {
    cob::Rng rng(7);
    const ModelConfig cfg = small_cfg();
    cob::CobformerParams params = cob::make_cobformer(cfg, 3, 4, rng);
    params.head_g_w = Tensor::zeros(4, 4, true);
    params.head_g_b = Tensor::zeros(1, 4, true);
    const Tensor gout = random_tensor(3, 4, 50);
    const Tensor tout = random_tensor(3, 4, 51);
    Tape tape;
    const auto [zg, zt] = cob::predict_heads(tape, params, gout, tout);
    REQUIRE(zg.rows() == 3);
    REQUIRE(zg.cols() == 4);
    REQUIRE(zt.cols() == 4);
    const Tensor yg = tape.row_softmax(zg);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            CHECK(zg.at(r, c) == 0.0);
            CHECK(yg.at(r, c) == doctest::Approx(0.25).epsilon(1e-12));
        }
}

TEST_CASE("collaborative loss blends cross entropy and mutual supervision") {
    // node 0 is the only train node, node 1 the only unlabeled node
    const Tensor pg = Tensor::from_values(2, 2, {0.7, 0.3, 0.5, 0.5});
    const Tensor pt = Tensor::from_values(2, 2, {0.9, 0.1, 0.5, 0.5});
    const Tensor sg = Tensor::from_values(2, 2, {0.5, 0.5, 0.8, 0.2});
    const Tensor st = Tensor::from_values(2, 2, {0.5, 0.5, 0.6, 0.4});
    const std::vector<int> labels{0, 0};
    const std::vector<std::uint8_t> mask{1, 0};

    const double ce = loss_value(pg, pt, sg, st, labels, mask, 1.0);
    CHECK(ce == doctest::Approx(-std::log(0.7) - std::log(0.9)).epsilon(1e-12));

    const double half = loss_value(pg, pt, sg, st, labels, mask, 0.5);
    const double co = 2.0 * half - ce;
    CHECK(co == doctest::Approx(1.3695799411497895).epsilon(1e-12));
}

TEST_CASE("identical one-hot soft labels contribute no mutual term") {
    const Tensor pg = Tensor::from_values(2, 2, {0.7, 0.3, 0.5, 0.5});
    const Tensor pt = Tensor::from_values(2, 2, {0.9, 0.1, 0.5, 0.5});
    const Tensor onehot = Tensor::from_values(2, 2, {1.0, 0.0, 1.0, 0.0});
    const std::vector<int> labels{0, 0};
    const std::vector<std::uint8_t> mask{1, 0};
    const double ce = loss_value(pg, pt, onehot, onehot, labels, mask, 1.0);
    const double blended = loss_value(pg, pt, onehot, onehot, labels, mask, 0.6);
    CHECK(blended == doctest::Approx(0.6 * ce).epsilon(1e-12));
}

TEST_CASE("collaborative loss is symmetric in the two branches") {
    const Tensor pg = Tensor::from_values(3, 2, {0.7, 0.3, 0.2, 0.8, 0.4, 0.6});
    const Tensor pt = Tensor::from_values(3, 2, {0.6, 0.4, 0.5, 0.5, 0.9, 0.1});
    const Tensor sg = Tensor::from_values(3, 2, {0.55, 0.45, 0.3, 0.7, 0.45, 0.55});
    const Tensor st = Tensor::from_values(3, 2, {0.65, 0.35, 0.25, 0.75, 0.8, 0.2});
    const std::vector<int> labels{1, 0, 1};
    const std::vector<std::uint8_t> mask{0, 1, 0};
    const double a = loss_value(pg, pt, sg, st, labels, mask, 0.7);
    const double b = loss_value(pt, pg, st, sg, labels, mask, 0.7);
    CHECK(a == b);
}

TEST_CASE("mutual supervision never beats the target entropy") {
    cob::Rng rng(8);
    const int n = 6, k = 3;
    auto random_dist = [&]() {
        std::vector<double> v(static_cast<std::size_t>(n) * k);
        for (int r = 0; r < n; ++r) {
            double z = 0.0;
            for (int c = 0; c < k; ++c) {
                v[static_cast<std::size_t>(r) * k + c] = 0.05 + rng.next_double();
                z += v[static_cast<std::size_t>(r) * k + c];
            }
            for (int c = 0; c < k; ++c) v[static_cast<std::size_t>(r) * k + c] /= z;
        }
        return Tensor::from_values(n, k, std::move(v));
    };
    const Tensor pg = random_dist(), pt = random_dist(), sg = random_dist(), st = random_dist();
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    std::vector<std::uint8_t> mask(n, 0);
    mask[0] = 1;

    const double ce = loss_value(pg, pt, sg, st, labels, mask, 1.0);
    const double half = loss_value(pg, pt, sg, st, labels, mask, 0.5);
    const double co = 2.0 * half - ce;

    double entropy = 0.0;
    for (int r = 1; r < n; ++r)
        for (int c = 0; c < k; ++c) {
            entropy -= sg.at(r, c) * std::log(sg.at(r, c));
            entropy -= st.at(r, c) * std::log(st.at(r, c));
        }
    entropy /= static_cast<double>(n - 1);
    CHECK(co >= entropy - 1e-12);
}

TEST_CASE("frozen-target composite matches the live loss and finite differences") {
    cob::Rng rng(31);
    const int n = 5, k = 3;
    std::vector<double> vg(static_cast<std::size_t>(n) * k), vt(vg.size());
    for (double& x : vg) x = rng.uniform(-1.0, 1.0);
    for (double& x : vt) x = rng.uniform(-1.0, 1.0);
    const Tensor zg = Tensor::from_values(n, k, std::move(vg), true);
    const Tensor zt = Tensor::from_values(n, k, std::move(vt), true);
    const std::vector<int> labels{0, 1, 2, 1, 0};
    const std::vector<std::uint8_t> mask{1, 0, 0, 1, 0};
    const double tau = 0.5, alpha = 0.8;

    Tensor target_g, target_t;
    {
        Tape t;
        const Tensor sg = cob::soft_labels(t, zg, tau);
        const Tensor st = cob::soft_labels(t, zt, tau);
        target_g = Tensor::from_values(n, k, sg.values(), false);
        target_t = Tensor::from_values(n, k, st.values(), false);
    }
    const auto live = [&](Tape& t) {
        return cob::collaborative_loss(t, t.row_softmax(zg), t.row_softmax(zt),
                                       cob::soft_labels(t, zg, tau),
                                       cob::soft_labels(t, zt, tau), labels, mask, alpha);
    };
    const auto frozen = [&](Tape& t) {
        return cob::collaborative_loss_frozen_targets(
            t, t.row_softmax(zg), t.row_softmax(zt), cob::soft_labels(t, zg, tau),
            cob::soft_labels(t, zt, tau), target_g, target_t, labels, mask, alpha);
    };

    const std::vector<Tensor> params{zg, zt};
    double live_value = 0.0;
    std::vector<std::vector<double>> live_grads;
    {
        cob::zero_grad(params);
        Tape t;
        Tensor loss = live(t);
        live_value = loss.item();
        t.backward(loss);
        for (const Tensor& p : params) live_grads.push_back(p.grad());
    }
    cob::zero_grad(params);
    Tape t;
    Tensor loss = frozen(t);
    CHECK(loss.item() == live_value);  // same arithmetic at the freeze point
    t.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < live_grads[i].size(); ++j)
            CHECK(params[i].grad()[j] == doctest::Approx(live_grads[i][j]).epsilon(1e-14));

    // the stop-gradient makes the live loss opaque to finite differences;
    // the frozen composite is the differentiable stand-in with that gradient
    CHECK(cob::grad_check(frozen, params).max_rel_error < 1e-6);
}

TEST_CASE("loss guards its preconditions") {
    const Tensor p = Tensor::from_values(2, 2, {0.5, 0.5, 0.5, 0.5});
    const std::vector<int> labels{0, 1};
    Tape tape;
    CHECK_THROWS_AS(cob::collaborative_loss(tape, p, p, p, p, labels, {0, 0}, 0.8),
                    cob::ConfigError);
    Tape tape2;
    CHECK_THROWS_AS(cob::collaborative_loss(tape2, p, p, p, p, labels, {1, 1}, 0.8),
                    cob::ConfigError);
    Tape tape3;
    CHECK_THROWS_AS(cob::collaborative_loss(tape3, p, p, p, p, labels, {1, 1}, 1.5),
                    cob::ConfigError);
}

TEST_CASE("model factory rejects degenerate problems") {
    cob::Rng rng(9);
    const ModelConfig cfg = small_cfg();
    CHECK_THROWS_AS(cob::make_cobformer(cfg, 0, 3, rng), cob::ConfigError);
    CHECK_THROWS_AS(cob::make_cobformer(cfg, 3, 1, rng), cob::ConfigError);
}

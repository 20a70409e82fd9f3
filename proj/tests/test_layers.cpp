#include <doctest.h>

#include <cmath>
#include <vector>

#include "cob/graph.hpp"
#include "cob/layers.hpp"
#include "cob/rng.hpp"
#include "cob/tensor.hpp"

using cob::Tape;
using cob::Tensor;

namespace {

double sparse_entry(const cob::SparseMatrix& s, int r, int c) {
    for (std::int64_t k = s.offsets[r]; k < s.offsets[r + 1]; ++k)
        if (s.col_index[k] == c) return s.weights[k];
    return 0.0;
}

Tensor fill(int rows, int cols, std::vector<double> v, bool rg = true) {
    return Tensor::from_values(rows, cols, std::move(v), rg);
}

}  // namespace

TEST_CASE("attention over a single node is the identity mixture") {
    cob::Rng rng(3);
    cob::AttentionBlock block = cob::make_attention_block(2, 1, rng);
    const Tensor x = fill(1, 2, {0.4, -1.2}, false);
    Tape tape;
    const cob::AttentionOut res = cob::attention_forward(tape, block, x, x, true);
    REQUIRE(res.scores.defined());
    REQUIRE(res.scores.rows() == 1);
    REQUIRE(res.scores.cols() == 1);
    CHECK(res.scores.at(0, 0) == 1.0);
    CHECK(res.out.rows() == 1);
    CHECK(res.out.cols() == 2);
}

TEST_CASE("attention scores match a hand computation in one dimension") {
    cob::Rng rng(5);
    cob::AttentionBlock block = cob::make_attention_block(1, 1, rng);
    block.w_q[0] = fill(1, 1, {0.7});
    block.w_k[0] = fill(1, 1, {0.3});
    block.w_v[0] = fill(1, 1, {1.1});
    block.w_o = fill(1, 1, {1.0});
    const std::vector<double> xv{1.0, 2.0, 3.0};
    const Tensor x = fill(3, 1, {1.0, 2.0, 3.0}, false);
    Tape tape;
    const cob::AttentionOut res = cob::attention_forward(tape, block, x, x, true);

    for (int i = 0; i < 3; ++i) {
        double logits[3];
        double mx = -1e300;
        for (int j = 0; j < 3; ++j) {
            logits[j] = (xv[i] * 0.7) * (xv[j] * 0.3);
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (int j = 0; j < 3; ++j) z += std::exp(logits[j] - mx);
        for (int j = 0; j < 3; ++j)
            CHECK(res.scores.at(i, j) ==
                  doctest::Approx(std::exp(logits[j] - mx) / z).epsilon(1e-12));
    }
    // dim-1 layer norm standardizes every row to beta = 0
    for (int i = 0; i < 3; ++i) CHECK(std::abs(res.out.at(i, 0)) < 1e-12);
}

TEST_CASE("a dominant logit takes almost all attention") {
    cob::Rng rng(9);
    cob::AttentionBlock block = cob::make_attention_block(1, 1, rng);
    block.w_q[0] = fill(1, 1, {1.0});
    block.w_k[0] = fill(1, 1, {1.0});
    const Tensor x = fill(3, 1, {10.0, 0.0, 0.0}, false);
    Tape tape;
    const cob::AttentionOut res = cob::attention_forward(tape, block, x, x, true);
    CHECK(res.scores.at(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.scores.at(0, 1) < 1e-10);
}

TEST_CASE("attention scores are row stochastic") {
    cob::Rng rng(11);
    cob::AttentionBlock block = cob::make_attention_block(4, 2, rng);
    std::vector<double> xv;
    cob::Rng data_rng(12);
    for (int i = 0; i < 6 * 4; ++i) xv.push_back(data_rng.uniform(-2.0, 2.0));
    const Tensor x = fill(6, 4, std::move(xv), false);
    Tape tape;
    const cob::AttentionOut res = cob::attention_forward(tape, block, x, x, true);
    for (int i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 6; ++j) {
            CHECK(res.scores.at(i, j) >= 0.0);
            sum += res.scores.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("one wide head can emulate two identical heads") {
    cob::Rng rng(21);
    cob::AttentionBlock two = cob::make_attention_block(4, 2, rng);
    // identical projections for both heads, distinct values
    two.w_q[1] = two.w_q[0];
    two.w_k[1] = two.w_k[0];

    cob::Rng rng2(22);
    cob::AttentionBlock one = cob::make_attention_block(4, 1, rng2);
    const double c = std::pow(2.0, 0.25);
    std::vector<double> wq(16, 0.0), wk(16, 0.0), wv(16, 0.0);
    for (int r = 0; r < 4; ++r)
        for (int hcol = 0; hcol < 2; ++hcol) {
            wq[r * 4 + hcol] = c * two.w_q[0].at(r, hcol);
            wk[r * 4 + hcol] = c * two.w_k[0].at(r, hcol);
            wv[r * 4 + hcol] = two.w_v[0].at(r, hcol);
            wv[r * 4 + 2 + hcol] = two.w_v[1].at(r, hcol);
        }
    one.w_q[0] = fill(4, 4, std::move(wq));
    one.w_k[0] = fill(4, 4, std::move(wk));
    one.w_v[0] = fill(4, 4, std::move(wv));
    one.w_o = two.w_o;

    std::vector<double> xv;
    cob::Rng data_rng(23);
    for (int i = 0; i < 5 * 4; ++i) xv.push_back(data_rng.uniform(-1.5, 1.5));
    const Tensor x = fill(5, 4, std::move(xv), false);
    Tape t1, t2;
    const cob::AttentionOut a = cob::attention_forward(t1, two, x, x, true);
    const cob::AttentionOut b = cob::attention_forward(t2, one, x, x, true);
    for (int r = 0; r < 5; ++r) {
        for (int cidx = 0; cidx < 4; ++cidx)
            CHECK(a.out.at(r, cidx) == doctest::Approx(b.out.at(r, cidx)).epsilon(1e-10));
        for (int j = 0; j < 5; ++j)
            CHECK(a.scores.at(r, j) == doctest::Approx(b.scores.at(r, j)).epsilon(1e-10));
    }
}

TEST_CASE("ffn with zero weights reduces to layer norm of the input") {
    cob::Rng rng(31);
    cob::FfnBlock block = cob::make_ffn_block(3, rng);
    block.w1 = Tensor::zeros(3, 12, true);
    block.b1 = Tensor::zeros(1, 12, true);
    block.w2 = Tensor::zeros(12, 3, true);
    block.b2 = Tensor::zeros(1, 3, true);
    const Tensor h = fill(2, 3, {0.5, -1.0, 2.0, 3.0, 0.0, -0.5}, false);
    Tape tape;
    const Tensor y = cob::ffn_forward(tape, block, h);
    Tape ref_tape;
    const Tensor want = ref_tape.layer_norm(h, block.norm.gamma, block.norm.beta);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(y.at(r, c) == doctest::Approx(want.at(r, c)).epsilon(1e-12));
}

TEST_CASE("normalized adjacency of an isolated node is the identity") {
    const cob::Graph g = cob::Graph::from_edges(1, {});
    const cob::SparseMatrix adj = cob::normalized_adjacency(g);
    CHECK(adj.rows == 1);
    CHECK(sparse_entry(adj, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("normalized adjacency of a connected pair is uniform one half") {
    const cob::Graph g = cob::Graph::from_edges(2, {{0, 1}});
    const cob::SparseMatrix adj = cob::normalized_adjacency(g);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) CHECK(sparse_entry(adj, r, c) == doctest::Approx(0.5));
}

TEST_CASE("normalized adjacency is exactly symmetric") {
    const cob::Graph g =
        cob::Graph::from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {3, 4}});
    const cob::SparseMatrix adj = cob::normalized_adjacency(g);
    for (int u = 0; u < 5; ++u)
        for (std::int64_t k = adj.offsets[u]; k < adj.offsets[u + 1]; ++k) {
            const int v = adj.col_index[k];
            CHECK(adj.weights[k] == sparse_entry(adj, v, u));
        }
}

TEST_CASE("graph convolution on a star mixes center and leaf") {
    const cob::Graph g = cob::Graph::from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
    const cob::SparseMatrix adj = cob::normalized_adjacency(g);
    cob::GcnLayer layer;
    layer.w = fill(1, 1, {1.0});
    const std::vector<double> hv{2.0, -1.0, 4.0, 0.5};
    const Tensor h = fill(4, 1, {2.0, -1.0, 4.0, 0.5}, false);
    Tape tape;
    const Tensor y = cob::gcn_forward(tape, layer, adj, h, false);
    const double inv_cl = 1.0 / (2.0 * std::sqrt(2.0));  // center-leaf coupling
    for (int leaf = 1; leaf < 4; ++leaf)
        CHECK(y.at(leaf, 0) == doctest::Approx(inv_cl * hv[0] + 0.5 * hv[leaf]).epsilon(1e-12));
    CHECK(y.at(0, 0) ==
          doctest::Approx(0.25 * hv[0] + inv_cl * (hv[1] + hv[2] + hv[3])).epsilon(1e-12));
}

TEST_CASE("graph convolution activation clamps negatives") {
    const cob::Graph g = cob::Graph::from_edges(2, {{0, 1}});
    const cob::SparseMatrix adj = cob::normalized_adjacency(g);
    cob::GcnLayer layer;
    layer.w = fill(1, 1, {-1.0});
    const Tensor h = fill(2, 1, {1.0, 3.0}, false);
    Tape tape;
    const Tensor y = cob::gcn_forward(tape, layer, adj, h, true);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(1, 0) == 0.0);
}

TEST_CASE("weight init stays within the fan-in bound") {
    cob::Rng rng(41);
    const Tensor w = cob::init_weight(rng, 16, 8);
    REQUIRE(w.rows() == 16);
    REQUIRE(w.cols() == 8);
    CHECK(w.requires_grad());
    const double bound = 1.0 / std::sqrt(16.0);
    for (double v : w.values()) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
    cob::Rng rng_again(41);
    const Tensor w2 = cob::init_weight(rng_again, 16, 8);
    CHECK(w.values() == w2.values());
}

TEST_CASE("parameter collection names every tensor once") {
    cob::Rng rng(51);
    cob::AttentionBlock block = cob::make_attention_block(4, 2, rng);
    std::vector<std::pair<std::string, Tensor>> named;
    cob::collect_params(block, "attn", named);
    CHECK(named.size() == 2 * 3 + 1 + 2);  // per-head q,k,v + w_o + norm
    for (std::size_t i = 0; i < named.size(); ++i)
        for (std::size_t j = i + 1; j < named.size(); ++j) CHECK(named[i].first != named[j].first);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tprs/gradcheck.hpp"
#include "tprs/graph.hpp"
#include "tprs/ops.hpp"

using namespace tprs;

namespace {

BiomarkerSeries series(BiomarkerId id, std::vector<double> times,
                       std::vector<double> values) {
  BiomarkerSeries s;
  s.id = id;
  s.timestamps = std::move(times);
  s.values = std::move(values);
  return s;
}

int edge_count(const TemporalGraph& g) {
  int n = 0;
  for (int i = 0; i < g.num_nodes; ++i)
    for (int j = i + 1; j < g.num_nodes; ++j)
      if (g.adj(i, j) != 0.0) ++n;
  return n;
}

}  // namespace

TEST_CASE("build_graph topology") {
  SUBCASE("single biomarker chain") {
    auto g = build_graph({series(BiomarkerId::kHbA1c, {0, 6, 12}, {7, 7.5, 8})},
                         60.0);
    CHECK(g.num_nodes == 3);
    CHECK(edge_count(g) == 2);
    CHECK(g.adj(0, 1) == 1.0);
    CHECK(g.adj(1, 2) == 1.0);
    CHECK(g.adj(0, 2) == 0.0);
    for (int i = 0; i < 3; ++i) CHECK(g.adj(i, i) == 0.0);
  }

  SUBCASE("two biomarkers sharing timestamps") {
    auto g = build_graph(
        {series(BiomarkerId::kHbA1c, {0, 6}, {7, 8}),
         series(BiomarkerId::kRetinalThickness, {0, 6}, {250, 240})},
        60.0);
    CHECK(g.num_nodes == 4);
    CHECK(edge_count(g) == 4);  // 2 chain + 2 cross
    CHECK(g.adj(0, 2) == 1.0);  // same-time cross edges
    CHECK(g.adj(1, 3) == 1.0);
    CHECK(g.adj(0, 3) == 0.0);
  }

  SUBCASE("singleton observation") {
    auto g = build_graph({series(BiomarkerId::kVegf, {0}, {100})}, 60.0);
    CHECK(g.num_nodes == 1);
    CHECK(edge_count(g) == 0);
  }

  SUBCASE("node features: normalized value, time, one-hot id") {
    auto g = build_graph({series(BiomarkerId::kRetinalThickness, {0, 30}, {240, 260})},
                         60.0);
    const int d = TemporalGraph::feature_dim();
    CHECK(d == 5);
    CHECK(g.features[0 * d + 0] == 0.0);   // min of series
    CHECK(g.features[1 * d + 0] == 1.0);   // max of series
    CHECK(g.features[1 * d + 1] == doctest::Approx(0.5));  // 30/60
    CHECK(g.features[0 * d + 2 + 1] == 1.0);  // one-hot thickness
    CHECK(g.features[0 * d + 2 + 0] == 0.0);
  }

  SUBCASE("contract errors") {
    CHECK_THROWS_AS(build_graph({}, 60.0), std::invalid_argument);
    CHECK_THROWS_AS(
        build_graph({series(BiomarkerId::kHbA1c, {6, 0}, {7, 8})}, 60.0),
        std::invalid_argument);
  }
}

TEST_CASE("normalize_adjacency") {
  SUBCASE("single node") {
    auto ahat = normalize_adjacency({0.0}, 1);
    CHECK(ahat[0] == doctest::Approx(1.0));
  }

  SUBCASE("two nodes one edge") {
    auto ahat = normalize_adjacency({0, 1, 1, 0}, 2);
    for (double v : ahat) CHECK(v == doctest::Approx(0.5));
  }

  SUBCASE("edgeless graph is the identity") {
    auto ahat = normalize_adjacency(std::vector<double>(9, 0.0), 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(ahat[i * 3 + j] == doctest::Approx(i == j ? 1.0 : 0.0));
  }

  SUBCASE("symmetric, and rows sum to exactly 1 on degree-regular graphs") {
    auto g = build_graph(
        {series(BiomarkerId::kHbA1c, {0, 6, 12}, {7, 8, 9}),
         series(BiomarkerId::kVegf, {0, 6}, {90, 110})},
        60.0);
    auto ahat = normalize_adjacency(g.adjacency, g.num_nodes);
    const int n = g.num_nodes;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(ahat[i * n + j] == doctest::Approx(ahat[j * n + i]));

    // 4-cycle: every degree equal, so each normalized row sums to 1
    std::vector<double> cyc = {0, 1, 0, 1, 1, 0, 1, 0,
                               0, 1, 0, 1, 1, 0, 1, 0};
    auto chat = normalize_adjacency(cyc, 4);
    for (int i = 0; i < 4; ++i) {
      double rs = 0;
      for (int j = 0; j < 4; ++j) rs += chat[i * 4 + j];
      CHECK(rs == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("asymmetric input rejected") {
    CHECK_THROWS_AS(normalize_adjacency({0, 1, 0, 0}, 2), std::invalid_argument);
  }
}

TEST_CASE("gcn_forward propagation") {
  auto g = build_graph({series(BiomarkerId::kHbA1c, {0, 6}, {7, 8})}, 60.0);
  const int d = TemporalGraph::feature_dim();

  SUBCASE("zero weights annihilate") {
    Rng rng(1);
    GcnParams p = GcnParams::init(d, 4, 3, 64, rng);
    for (auto& w : p.layer_weights)
      for (double& v : w.data()) v = 0.0;
    Tensor h = gcn_forward(g, p);
    for (double v : h.data()) CHECK(v == 0.0);
  }

  SUBCASE("edgeless graph with identity weights reproduces features") {
    TemporalGraph iso;
    iso.num_nodes = 2;
    iso.features = {0.5, 0.25, 1, 0, 0, 1.0, 0.75, 1, 0, 0};
    iso.adjacency.assign(4, 0.0);
    Rng rng(2);
    GcnParams p = GcnParams::init(d, d, 1, 64, rng);
    for (double& v : p.layer_weights[0].data()) v = 0.0;
    for (int i = 0; i < d; ++i) p.layer_weights[0](i, i) = 1.0;
    Tensor h = gcn_forward(iso, p);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(h(i, j) == doctest::Approx(iso.features[i * d + j]));
  }

  SUBCASE("two-node graph matches hand algebra") {
    // A_hat = [[.5,.5],[.5,.5]]; one layer, W picks feature 0
    TemporalGraph two;
    two.num_nodes = 2;
    two.features = {1, 0, 1, 0, 0, 3, 0, 1, 0, 0};
    two.adjacency = {0, 1, 1, 0};
    Rng rng(3);
    GcnParams p = GcnParams::init(d, 1, 1, 64, rng);
    for (double& v : p.layer_weights[0].data()) v = 0.0;
    p.layer_weights[0](0, 0) = 1.0;
    Tensor h = gcn_forward(two, p);
    // ReLU(A_hat . V . W) with V[:,0] = [1,3]: both rows 0.5*1+0.5*3 = 2
    CHECK(h(0, 0) == doctest::Approx(2.0));
    CHECK(h(1, 0) == doctest::Approx(2.0));
  }

  SUBCASE("width mismatch rejected") {
    Rng rng(4);
    GcnParams p = GcnParams::init(d + 1, 4, 2, 64, rng);
    CHECK_THROWS_AS(gcn_forward(g, p), std::invalid_argument);
  }
}

TEST_CASE("readout and permutation invariance") {
  Rng rng(7);
  const int d = TemporalGraph::feature_dim();
  GcnParams p = GcnParams::init(d, 6, 3, 64, rng);

  SUBCASE("identical rows: mean equals any row") {
    Tensor h = Tensor::zeros({3, 6});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 6; ++j) h(i, j) = 0.1 * j;
    Tensor m = mean_rows(h);
    for (int j = 0; j < 6; ++j) CHECK(m(j) == doctest::Approx(h(0, j)));
    Tensor out = readout(h, p);
    CHECK(out.shape() == Shape{64});
  }

  SUBCASE("node reindexing leaves the readout unchanged") {
    auto g = build_graph(
        {series(BiomarkerId::kHbA1c, {0, 6, 12}, {7, 8, 7.5}),
         series(BiomarkerId::kVegf, {0, 6}, {90, 130})},
        60.0);
    Tensor base = readout(gcn_forward(g, p), p);

    // apply the same permutation to features and adjacency
    const int n = g.num_nodes;
    std::vector<int> perm = {4, 2, 0, 3, 1};
    TemporalGraph shuffled;
    shuffled.num_nodes = n;
    shuffled.features.assign(g.features.size(), 0.0);
    shuffled.adjacency.assign(g.adjacency.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int f = 0; f < d; ++f)
        shuffled.features[i * d + f] = g.features[perm[i] * d + f];
      for (int j = 0; j < n; ++j)
        shuffled.adjacency[i * n + j] = g.adj(perm[i], perm[j]);
    }
    Tensor moved = readout(gcn_forward(shuffled, p), p);
    // invariant up to float reassociation of the mean
    for (int j = 0; j < 64; ++j)
      CHECK(moved(j) == doctest::Approx(base(j)).epsilon(1e-12));
  }

  SUBCASE("empty graph rejected") {
    TemporalGraph empty;
    CHECK_THROWS_AS(gcn_forward(empty, p), std::invalid_argument);
    CHECK_THROWS_AS(readout(Tensor::zeros({6}), p), std::invalid_argument);
  }
}

TEST_CASE("gcn end-to-end gradient") {
  auto g = build_graph(
      {series(BiomarkerId::kHbA1c, {0, 6, 12}, {7, 8, 7.5}),
       series(BiomarkerId::kRetinalThickness, {0, 6}, {250, 235})},
      60.0);
  Rng rng(9);
  GcnParams p = GcnParams::init(TemporalGraph::feature_dim(), 5, 3, 8, rng);
  auto loss = [&]() {
    Tensor out = readout(gcn_forward(g, p), p);
    return mean(mul(out, out));
  };
  auto ps = p.params();
  CHECK(grad_check_params(loss, ps) < 1e-5);
}

TEST_CASE("gcn_param_count matches allocation") {
  Rng rng(11);
  GcnParams p = GcnParams::init(5, 6, 3, 64, rng);
  int64_t actual = 0;
  for (Tensor* t : p.params()) actual += t->numel();
  CHECK(actual == gcn_param_count(5, 6, 3, 64));
  CHECK(gcn_param_count(5, 6, 3, 64) == 5 * 6 + 6 * 6 + 6 * 6 + 6 * 64 + 64);
}

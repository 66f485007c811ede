#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "msegnn/dataset_io.hpp"
#include "msegnn/episode.hpp"
#include "msegnn/error.hpp"
#include "msegnn/graph.hpp"
#include "msegnn/synthetic.hpp"
#include "test_util.hpp"

namespace msegnn {
namespace {

std::vector<std::size_t> sorted_degrees(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::size_t> deg(n, 0);
  for (const auto& [u, v] : edges) {
    ++deg[u];
    ++deg[v];
  }
  std::sort(deg.begin(), deg.end());
  return deg;
}

// Node-induced subgraph on the marked nodes, relabelled 0..k-1.
std::pair<std::size_t, std::vector<Edge>> induced(const Graph& g,
                                                  std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> local(g.num_nodes(), SIZE_MAX);
  std::size_t k = 0;
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    if (mask[v]) local[v] = k++;
  std::vector<Edge> edges;
  for (const auto& [u, v] : g.undirected_edges())
    if (mask[u] && mask[v]) edges.emplace_back(local[u], local[v]);
  return {k, edges};
}

bool connected(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [u, v] : edges) parent[find(u)] = find(v);
  for (std::size_t v = 0; v < n; ++v)
    if (find(v) != find(0)) return false;
  return true;
}

TEST(GraphTest, StoresSymmetricAdjacencyWithoutSelfLoops) {
  const std::vector<Edge> edges{{0, 1}, {1, 2}};
  Graph g = Graph::from_undirected(7, 3, 2, {1, 2, 3, 4, 5, 6}, edges, 1, {{1, 1, 0}});
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_FALSE(g.has_edge(0, 2));
  EXPECT_EQ(g.degree(1), 2u);
  for (std::size_t v = 0; v < 3; ++v) EXPECT_FALSE(g.has_edge(v, v));
  EXPECT_EQ(g.directed_edges().size(), 4u);
  EXPECT_EQ(g.mean_adjacency_tensor().at(1, 0), 0.5);
}

TEST(GraphTest, RejectsInvariantViolations) {
  const std::vector<Edge> one_way{{0, 1}};
  EXPECT_THROW(Graph(0, 2, 1, {0, 0}, one_way, 0), ValidationError);
  const std::vector<Edge> loop{{1, 1}};
  EXPECT_THROW(Graph::from_undirected(0, 2, 1, {0, 0}, loop, 0), ValidationError);
  const std::vector<Edge> none;
  EXPECT_THROW(Graph::from_undirected(0, 2, 1, {0, 0}, none, 0, {{1, 1}}), ValidationError);
  EXPECT_THROW(Graph::from_undirected(0, 2, 1, {0, 0}, none, 0, {{0, 0}}), ValidationError);
  EXPECT_THROW(Graph::from_undirected(0, 2, 1, {0, 0}, none, 0, {{1}}), ValidationError);
  EXPECT_THROW(Graph::from_undirected(0, 2, 1, {0}, none, 0), ValidationError);
  EXPECT_THROW(Graph::from_undirected(0, 0, 1, {}, none, 0), ValidationError);
  const std::vector<Edge> out_of_range{{0, 5}};
  EXPECT_THROW(Graph::from_undirected(0, 2, 1, {0, 0}, out_of_range, 0), ValidationError);
}

TEST(GraphTest, PermutationPreservesStructure) {
  Rng rng(3);
  Graph g = testing::random_graph(9, 2, rng, 0.3, 0, true);
  const auto perm = testing::random_permutation(9, rng);
  Graph p = g.permuted(perm);
  EXPECT_EQ(p.num_edges(), g.num_edges());
  for (std::size_t u = 0; u < 9; ++u) {
    EXPECT_EQ((*p.truth_mask())[perm[u]], (*g.truth_mask())[u]);
    for (std::size_t v = 0; v < 9; ++v) EXPECT_EQ(p.has_edge(perm[u], perm[v]), g.has_edge(u, v));
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_EQ(p.features()[perm[u] * 2 + c], g.features()[u * 2 + c]);
  }
}

class SyntheticTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new Dataset(generate_synthetic(10, 500, 42)); }
  static void TearDownTestSuite() {
    delete data_;
    data_ = nullptr;
  }
  static Dataset* data_;
};
Dataset* SyntheticTest::data_ = nullptr;

TEST_F(SyntheticTest, SizeAndClassBalance) {
  EXPECT_EQ(data_->size(), 5000u);
  for (int c = 0; c < 10; ++c) EXPECT_EQ(data_->indices_of_class(c).size(), 500u);
}

TEST_F(SyntheticTest, MeanNodeCountNearTarget) {
  EXPECT_GE(data_->mean_nodes(), 65.0);
  EXPECT_LE(data_->mean_nodes(), 85.0);
}

TEST_F(SyntheticTest, RationaleIsTheClassMotif) {
  const auto& lib = motif_library();
  for (const Graph& g : data_->graphs()) {
    ASSERT_TRUE(g.truth_mask().has_value());
    const auto& mask = *g.truth_mask();
    const Motif& motif = lib[static_cast<std::size_t>(g.label())];
    const auto ones = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
    ASSERT_EQ(ones, motif.num_nodes);
    const auto [k, edges] = induced(g, mask);
    ASSERT_TRUE(connected(k, edges)) << "graph " << g.id();
    ASSERT_EQ(edges.size(), motif.edges.size()) << "graph " << g.id();
    ASSERT_EQ(sorted_degrees(k, edges), sorted_degrees(motif.num_nodes, motif.edges));
  }
}

TEST(SyntheticTest2, MotifsAreDistinguishable) {
  const auto& lib = motif_library();
  std::set<std::pair<std::size_t, std::vector<std::size_t>>> signatures;
  for (const auto& m : lib) {
    EXPECT_TRUE(connected(m.num_nodes, m.edges)) << m.name;
    signatures.emplace(m.edges.size(), sorted_degrees(m.num_nodes, m.edges));
  }
  EXPECT_EQ(signatures.size(), lib.size());
}

TEST(SyntheticTest2, SeedDeterminism) {
  EXPECT_EQ(generate_synthetic(3, 4, 9), generate_synthetic(3, 4, 9));
  EXPECT_FALSE(generate_synthetic(3, 4, 9) == generate_synthetic(3, 4, 10));
}

TEST(SyntheticTest2, ConfigErrors) {
  EXPECT_THROW(generate_synthetic(motif_library().size() + 1, 1, 0), ConfigError);
  EXPECT_THROW(generate_synthetic(1, 1, 0), ConfigError);
  EXPECT_THROW(generate_synthetic(2, 0, 0), ConfigError);
  SyntheticConfig bad;
  bad.feature_dim = 0;
  EXPECT_THROW(generate_synthetic(2, 1, 0, bad), ConfigError);
}

TEST(SplitTest, DefaultCounts) {
  const std::size_t counts[] = {5, 2, 3};
  DatasetSplit s = split_classes(10, counts, 1);
  EXPECT_EQ(s.train_classes.size(), 5u);
  EXPECT_EQ(s.val_classes.size(), 2u);
  EXPECT_EQ(s.test_classes.size(), 3u);
}

TEST(SplitTest, EmptyValidation) {
  const std::size_t counts[] = {1, 0, 1};
  DatasetSplit s = split_classes(2, counts, 5);
  EXPECT_EQ(s.train_classes.size(), 1u);
  EXPECT_TRUE(s.val_classes.empty());
  EXPECT_EQ(s.test_classes.size(), 1u);
  EXPECT_NE(s.train_classes[0], s.test_classes[0]);
}

TEST(SplitTest, CountMismatchIsConfigError) {
  const std::size_t counts[] = {5, 2, 2};
  EXPECT_THROW(split_classes(10, counts, 1), ConfigError);
}

TEST(SplitTest, DisjointCoverOverRandomConfigurations) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    const std::size_t a = rng.below(n + 1);
    const std::size_t b = rng.below(n - a + 1);
    const std::size_t counts[] = {a, b, n - a - b};
    const DatasetSplit s = split_classes(n, counts, rng.next_u64());
    std::multiset<int> all;
    for (auto* part : {&s.train_classes, &s.val_classes, &s.test_classes})
      all.insert(part->begin(), part->end());
    ASSERT_EQ(all.size(), n);
    std::set<int> unique(all.begin(), all.end());
    ASSERT_EQ(unique.size(), n) << "overlap between roles";
    ASSERT_EQ(*unique.begin(), 0);
    ASSERT_EQ(*unique.rbegin(), static_cast<int>(n) - 1);
    EXPECT_EQ(split_classes(n, counts, 3).train_classes, split_classes(n, counts, 3).train_classes);
  }
}

TEST(SplitTest, RatioForm) {
  const double ratios[] = {0.5, 0.2, 0.3};
  DatasetSplit s = split_classes_by_ratio(10, ratios, 2);
  EXPECT_EQ(s.train_classes.size() + s.val_classes.size() + s.test_classes.size(), 10u);
  EXPECT_EQ(s.train_classes.size(), 5u);
}

class EpisodeTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = generate_synthetic(10, 30, 4);
    const std::size_t counts[] = {5, 2, 3};
    split_ = split_classes(10, counts, 8);
  }
  Dataset data_;
  DatasetSplit split_;
};

TEST_F(EpisodeTest, CountsMatchContract) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Episode ep = sample_episode(data_, split_, SplitRole::kTrain, 2, 5, 15, rng);
    ASSERT_EQ(ep.support.size(), 10u);
    ASSERT_EQ(ep.query.size(), 30u);
    std::map<int, int> per_label;
    std::set<std::int64_t> support_ids;
    for (const auto& item : ep.support) {
      ++per_label[item.label];
      support_ids.insert(item.graph->id());
      ASSERT_EQ(ep.classes[static_cast<std::size_t>(item.label)], item.graph->label());
    }
    ASSERT_EQ(per_label.size(), 2u);
    for (const auto& [label, count] : per_label) ASSERT_EQ(count, 5);
    for (const auto& item : ep.query) {
      ASSERT_EQ(support_ids.count(item.graph->id()), 0u);
      ASSERT_EQ(ep.classes[static_cast<std::size_t>(item.label)], item.graph->label());
      ASSERT_EQ(ep.local_label(item.graph->label()), item.label);
    }
    ASSERT_NE(ep.classes[0], ep.classes[1]);
  }
}

TEST_F(EpisodeTest, SameSeedSameEpisode) {
  Rng a(99);
  Rng b(99);
  Episode x = sample_episode(data_, split_, SplitRole::kTrain, 2, 5, 15, a);
  Episode y = sample_episode(data_, split_, SplitRole::kTrain, 2, 5, 15, b);
  ASSERT_EQ(x.support.size(), y.support.size());
  for (std::size_t i = 0; i < x.support.size(); ++i)
    EXPECT_EQ(x.support[i].graph->id(), y.support[i].graph->id());
  for (std::size_t i = 0; i < x.query.size(); ++i)
    EXPECT_EQ(x.query[i].graph->id(), y.query[i].graph->id());
}

TEST_F(EpisodeTest, ClassFrequencyIsUniform) {
  Rng rng(2024);
  std::map<int, int> appearances;
  const int episodes = 1000;
  for (int i = 0; i < episodes; ++i) {
    Episode ep = sample_episode(data_, split_, SplitRole::kTrain, 2, 5, 15, rng);
    for (int c : ep.classes) ++appearances[c];
  }
  ASSERT_EQ(appearances.size(), 5u);
  for (const auto& [cls, count] : appearances) {
    const double freq = static_cast<double>(count) / episodes;
    EXPECT_NEAR(freq, 0.4, 0.05) << "class " << cls;
  }
}

TEST_F(EpisodeTest, RolesStayDisjoint) {
  Rng rng(5);
  const std::set<int> test(split_.test_classes.begin(), split_.test_classes.end());
  for (int i = 0; i < 300; ++i) {
    Episode ep = sample_episode(data_, split_, SplitRole::kTrain, 2, 5, 15, rng);
    for (const auto* set : {&ep.support, &ep.query})
      for (const auto& item : *set) ASSERT_EQ(test.count(item.graph->label()), 0u);
  }
}

TEST_F(EpisodeTest, DeficitsAreSamplingErrors) {
  Rng rng(1);
  EXPECT_THROW(sample_episode(data_, split_, SplitRole::kVal, 3, 5, 15, rng), SamplingError);
  EXPECT_THROW(sample_episode(data_, split_, SplitRole::kTrain, 2, 20, 15, rng), SamplingError);
}

TEST(DatasetIoTest, RoundTripIsLossless) {
  Dataset data = generate_synthetic(3, 5, 11);
  std::stringstream buf;
  save_dataset(data, buf);
  Dataset back = load_dataset(buf);
  EXPECT_EQ(back, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].truth_mask(), data[i].truth_mask());
    EXPECT_EQ(back[i].id(), data[i].id());
  }
}

TEST(DatasetIoTest, RoundTripRandomGraphsWithoutTruth) {
  Rng rng(8);
  std::vector<Graph> graphs;
  for (int i = 0; i < 20; ++i)
    graphs.push_back(testing::random_graph(1 + rng.below(10), 3, rng, 0.4, i % 2, i % 3 == 0, i));
  Dataset data(3, 2, graphs);
  std::stringstream buf;
  save_dataset(data, buf);
  EXPECT_EQ(load_dataset(buf), data);
}

std::string header() { return R"({"format_version":1,"d":1,"num_classes":2})"; }

TEST(DatasetIoTest, NonSymmetricAdjacencyIsValidationError) {
  std::stringstream in(header() + "\n" +
                       R"({"id":0,"num_nodes":2,"edges":[[0,1]],"features":[[1],[1]],"label":0})");
  EXPECT_THROW(load_dataset(in), ValidationError);
}

TEST(DatasetIoTest, TruthMaskLengthIsValidationError) {
  std::stringstream in(
      header() + "\n" +
      R"({"id":0,"num_nodes":2,"edges":[[0,1],[1,0]],"features":[[1],[1]],"label":0,"truth_mask":[1,0,0]})");
  EXPECT_THROW(load_dataset(in), ValidationError);
}

TEST(DatasetIoTest, MalformedRecordReportsLine) {
  std::stringstream in(header() + "\n" +
                       R"({"id":0,"num_nodes":1,"edges":[],"features":[[1]],"label":0})" +
                       "\n{not json\n");
  try {
    load_dataset(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::stringstream missing(header() + "\n" + R"({"id":0,"num_nodes":1,"edges":[],"label":0})");
  EXPECT_THROW(load_dataset(missing), ParseError);
}

}  // namespace
}  // namespace msegnn

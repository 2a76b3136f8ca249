#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "probforest/dataset.hpp"
#include "probforest/matrix.hpp"
#include "probforest/rng.hpp"

// Random forest for class-probability estimation. Each tree is grown on a
// full-size bootstrap resample with Gini splitting over `mtry` randomly
// chosen features per node; leaves store bootstrap-weighted class
// proportions, which are averaged across trees at prediction time.
namespace probforest::forest {

enum class VoteMode { proportion_average, majority_vote_fraction };

/// `child`: both children of a split must hold >= min_node_size bootstrap
/// cases. `parent`: a node is split only while it holds more than
/// min_node_size cases, children may be smaller (ranger's behaviour).
enum class NodeSizeRule { child, parent };

struct ForestParams {
  int n_tree = 500;
  int mtry = 0;  ///< 0 selects ceil(sqrt(P))
  int min_node_size = 2;
  NodeSizeRule node_size_rule = NodeSizeRule::child;
  VoteMode vote_mode = VoteMode::proportion_average;
  std::uint64_t seed = 0;

  int resolved_mtry(int n_features) const;
  void validate(int n_features) const;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct Split {
  int feature = -1;
  double threshold = 0.0;  ///< cases with value <= threshold go left
  double gain = 0.0;       ///< weighted Gini decrease, > 0
};

/// A training case and its bootstrap multiplicity.
struct WeightedCase {
  std::uint32_t index;
  std::uint32_t weight;
};

/// Borrowed view of training data for the tree grower.
struct TrainingView {
  const Matrix& x;
  std::span<const int> y;
  int n_classes;
};

/// Per-feature sorted distinct values and the rank of every case within
/// them. Built once per forest and shared read-only by all trees.
class FeatureIndex {
 public:
  explicit FeatureIndex(const Matrix& x);

  std::size_t n_features() const noexcept { return values_.size(); }
  std::span<const double> distinct_values(std::size_t f) const { return values_[f]; }
  std::span<const std::uint32_t> ranks(std::size_t f) const { return ranks_[f]; }

 private:
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<std::uint32_t>> ranks_;
};

/// 1 - sum_k (n_k / n)^2. Throws std::invalid_argument on an empty node.
double gini_impurity(std::span<const double> class_counts);

/// Best Gini split of `cases` over `features`. Candidate thresholds are
/// midpoints between consecutive distinct in-node values. Equal-gain
/// candidates are chosen between uniformly at random with `rng`. Returns
/// nullopt when no candidate has positive gain under the size rule.
std::optional<Split> best_split(const TrainingView& data, std::span<const WeightedCase> cases,
                                std::span<const int> features, int min_node_size, Rng& rng,
                                NodeSizeRule rule = NodeSizeRule::child);

/// Binary tree in flat storage. Children of an internal node occupy
/// adjacent slots (left, left + 1).
class Tree {
 public:
  struct NodeView {
    bool is_leaf;
    Split split;  ///< meaningful for internal nodes only
    std::size_t left = 0;
    std::size_t right = 0;
    std::span<const double> class_proportions;  ///< leaves only
    double n_cases = 0.0;                       ///< leaves only
  };

  explicit Tree(int n_classes);

  int n_classes() const noexcept { return n_classes_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaf_cases_.size(); }
  std::size_t depth() const;
  NodeView node(std::size_t i) const;

  /// Turns leaf placeholder `node` into an internal node and appends two
  /// child placeholders; returns their ids.
  std::pair<std::size_t, std::size_t> split_node(std::size_t node, const Split& split);
  /// Fills a placeholder with its class proportions.
  void set_leaf(std::size_t node, std::span<const double> proportions, double n_cases);
  /// True once every leaf placeholder has been filled.
  bool complete() const;

  /// Leaf reached by `row`.
  std::size_t leaf_slot(std::span<const double> row) const {
    std::uint32_t i = 0;
    while (nodes_[i].feature >= 0) {
      const Node& n = nodes_[i];
      i = n.child + (row[static_cast<std::size_t>(n.feature)] > n.threshold ? 1u : 0u);
    }
    return nodes_[i].child;
  }
  std::span<const double> leaf_proportions(std::size_t slot) const {
    return {leaf_props_.data() + slot * static_cast<std::size_t>(n_classes_),
            static_cast<std::size_t>(n_classes_)};
  }
  std::span<const double> predict(std::span<const double> row) const {
    return leaf_proportions(leaf_slot(row));
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  friend class ForestSerializer;
  static constexpr std::uint32_t kUnset = 0xffffffffu;

  struct Node {
    double threshold = 0.0;
    std::int32_t feature = -1;  ///< -1 marks a leaf
    std::uint32_t child = kUnset;  ///< left child id, or leaf slot for leaves
    friend bool operator==(const Node&, const Node&) = default;
  };

  int n_classes_;
  std::vector<Node> nodes_;
  std::vector<double> gains_;
  std::vector<double> leaf_props_;
  std::vector<double> leaf_cases_;
};

/// Grows one tree on bootstrap multiplicities `bootstrap_weights`
/// (length = rows of data.x). A fresh subset of mtry features is drawn at
/// every node. `index` may be passed to reuse a prebuilt FeatureIndex.
Tree grow_tree(const TrainingView& data, std::span<const std::uint32_t> bootstrap_weights,
               const ForestParams& params, Rng& rng, const FeatureIndex* index = nullptr);

struct OobPrediction {
  Matrix probabilities;          ///< NaN rows where `missing`
  std::vector<bool> missing;     ///< case was in-bag for every tree
  std::vector<int> n_oob_trees;  ///< trees for which the case was out-of-bag
};

class Forest {
 public:
  Forest(ForestParams params, int n_classes, int n_features, std::vector<Tree> trees,
         std::vector<std::uint32_t> inbag_counts, std::size_t n_train,
         std::vector<std::string> feature_names = {});

  const ForestParams& params() const noexcept { return params_; }
  int n_classes() const noexcept { return n_classes_; }
  int n_features() const noexcept { return n_features_; }
  std::size_t n_train() const noexcept { return n_train_; }
  std::span<const Tree> trees() const noexcept { return trees_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }

  /// Bootstrap multiplicities of every training case in tree `t`.
  std::span<const std::uint32_t> inbag(std::size_t t) const {
    return {inbag_.data() + t * n_train_, n_train_};
  }

  /// n x n_classes probabilities; rows sum to 1.
  Matrix predict_proba(const Matrix& x, unsigned workers = 1) const;

  /// Out-of-bag probabilities for the training cases.
  OobPrediction predict_oob(const Dataset& training) const;

  void save(const std::filesystem::path& path) const;
  static Forest load(const std::filesystem::path& path);

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  ForestParams params_;
  int n_classes_;
  int n_features_;
  std::vector<Tree> trees_;
  std::vector<std::uint32_t> inbag_;
  std::size_t n_train_;
  std::vector<std::string> feature_names_;
};

/// Fits n_tree trees on independent bootstrap resamples. Tree t draws from
/// Rng(mix_seed(params.seed, t)), so the result does not depend on
/// `workers`. Throws std::invalid_argument for fewer than 2 cases or a
/// single observed class.
Forest fit_forest(const Dataset& data, const ForestParams& params, unsigned workers = 1);

std::string to_string(NodeSizeRule rule);
std::string to_string(VoteMode mode);
NodeSizeRule parse_node_size_rule(std::string_view s);
VoteMode parse_vote_mode(std::string_view s);

}  // namespace probforest::forest

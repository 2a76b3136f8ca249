#include "probforest/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "probforest/parallel.hpp"

namespace probforest::forest {

int ForestParams::resolved_mtry(int n_features) const {
  if (mtry > 0) return mtry;
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features)))));
}

void ForestParams::validate(int n_features) const {
  if (n_tree < 1) throw std::invalid_argument("ForestParams: n_tree must be >= 1");
  if (min_node_size < 1) throw std::invalid_argument("ForestParams: min_node_size must be >= 1");
  const int m = resolved_mtry(n_features);
  if (m < 1 || m > n_features) {
    throw std::invalid_argument("ForestParams: mtry=" + std::to_string(m) +
                                " outside [1, " + std::to_string(n_features) + "]");
  }
}

FeatureIndex::FeatureIndex(const Matrix& x) : values_(x.cols()), ranks_(x.cols()) {
  const std::size_t n = x.rows();
  std::vector<double> col(n);
  for (std::size_t f = 0; f < x.cols(); ++f) {
    for (std::size_t i = 0; i < n; ++i) col[i] = x(i, f);
    auto& values = values_[f];
    values = col;
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    auto& ranks = ranks_[f];
    ranks.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ranks[i] = static_cast<std::uint32_t>(
          std::lower_bound(values.begin(), values.end(), col[i]) - values.begin());
    }
  }
}

double gini_impurity(std::span<const double> class_counts) {
  double total = 0.0;
  for (double c : class_counts) total += c;
  if (!(total > 0.0)) throw std::invalid_argument("gini_impurity: empty node");
  double sum_sq = 0.0;
  for (double c : class_counts) sum_sq += (c / total) * (c / total);
  return 1.0 - sum_sq;
}

// ---------------------------------------------------------------------------
// Tree storage

Tree::Tree(int n_classes) : n_classes_(n_classes), nodes_(1), gains_(1, 0.0) {
  if (n_classes < 1) throw std::invalid_argument("Tree: n_classes must be >= 1");
}

std::pair<std::size_t, std::size_t> Tree::split_node(std::size_t node, const Split& split) {
  if (node >= nodes_.size() || nodes_[node].feature >= 0 || nodes_[node].child != kUnset) {
    throw std::logic_error("Tree::split_node: node is not an unfilled leaf");
  }
  const auto left = static_cast<std::uint32_t>(nodes_.size());
  nodes_[node] = Node{split.threshold, split.feature, left};
  gains_[node] = split.gain;
  nodes_.resize(nodes_.size() + 2);
  gains_.resize(nodes_.size(), 0.0);
  return {left, left + 1};
}

void Tree::set_leaf(std::size_t node, std::span<const double> proportions, double n_cases) {
  if (node >= nodes_.size() || nodes_[node].feature >= 0 || nodes_[node].child != kUnset) {
    throw std::logic_error("Tree::set_leaf: node is not an unfilled leaf");
  }
  if (proportions.size() != static_cast<std::size_t>(n_classes_)) {
    throw std::invalid_argument("Tree::set_leaf: proportions length differs from n_classes");
  }
  nodes_[node].child = static_cast<std::uint32_t>(leaf_cases_.size());
  leaf_props_.insert(leaf_props_.end(), proportions.begin(), proportions.end());
  leaf_cases_.push_back(n_cases);
}

bool Tree::complete() const {
  return std::none_of(nodes_.begin(), nodes_.end(),
                      [](const Node& n) { return n.feature < 0 && n.child == kUnset; });
}

Tree::NodeView Tree::node(std::size_t i) const {
  const Node& n = nodes_.at(i);
  NodeView v{};
  v.is_leaf = n.feature < 0;
  if (v.is_leaf) {
    if (n.child != kUnset) {
      v.class_proportions = leaf_proportions(n.child);
      v.n_cases = leaf_cases_[n.child];
    }
  } else {
    v.split = Split{n.feature, n.threshold, gains_[i]};
    v.left = n.child;
    v.right = n.child + 1;
  }
  return v;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (nodes_[i].feature >= 0) {
      d[nodes_[i].child] = d[nodes_[i].child + 1] = d[i] + 1;
    }
  }
  return deepest;
}

// ---------------------------------------------------------------------------
// Split search

namespace {

// Reusable scratch space for one tree's split searches.
class SplitSearch {
 public:
  SplitSearch(const TrainingView& data, const FeatureIndex& index, int min_node_size,
              NodeSizeRule rule)
      : data_(data), index_(index), min_node_size_(min_node_size), rule_(rule),
        k_(static_cast<std::size_t>(data.n_classes)), total_(k_), left_(k_) {
    std::size_t max_q = 0;
    for (std::size_t f = 0; f < index.n_features(); ++f) {
      max_q = std::max(max_q, index.distinct_values(f).size());
    }
    bins_.assign(max_q * k_, 0.0);
  }

  std::optional<Split> find(std::span<const WeightedCase> cases, std::span<const int> features,
                            Rng& rng) {
    std::fill(total_.begin(), total_.end(), 0.0);
    for (const auto& c : cases) total_[static_cast<std::size_t>(data_.y[c.index])] += c.weight;
    weight_ = std::accumulate(total_.begin(), total_.end(), 0.0);
    parent_score_ = 0.0;
    for (double t : total_) parent_score_ += t * t;
    parent_score_ /= weight_;

    best_.reset();
    best_score_ = -1.0;
    n_ties_ = 0;
    if (!splittable()) return std::nullopt;
    for (int f : features) scan_feature(cases, f, rng);
    return best_;
  }

 private:
  bool splittable() const {
    if (rule_ == NodeSizeRule::child) return weight_ >= 2.0 * min_node_size_;
    return weight_ > min_node_size_ && weight_ >= 2.0;
  }

  bool sizes_ok(double left_weight) const {
    const double right_weight = weight_ - left_weight;
    if (rule_ == NodeSizeRule::child) {
      return left_weight >= min_node_size_ && right_weight >= min_node_size_;
    }
    return left_weight > 0.0 && right_weight > 0.0;
  }

  // Offers the boundary between two distinct values after `left_` has
  // absorbed every case at or below `lower`.
  void offer(int feature, double lower, double upper, double left_weight, Rng& rng) {
    if (!sizes_ok(left_weight)) return;
    const double right_weight = weight_ - left_weight;
    double left_sq = 0.0, right_sq = 0.0;
    for (std::size_t k = 0; k < k_; ++k) {
      left_sq += left_[k] * left_[k];
      const double r = total_[k] - left_[k];
      right_sq += r * r;
    }
    const double score = left_sq / left_weight + right_sq / right_weight;
    const double gain = (score - parent_score_) / weight_;
    if (!(gain > kMinGain)) return;
    const double tol = 1e-12 * std::abs(score);
    if (!best_ || score > best_score_ + tol) {
      best_score_ = score;
      n_ties_ = 1;
      best_ = Split{feature, 0.5 * (lower + upper), gain};
    } else if (score >= best_score_ - tol) {
      ++n_ties_;
      if (rng.uniform_index(n_ties_) == 0) best_ = Split{feature, 0.5 * (lower + upper), gain};
    }
  }

  void scan_feature(std::span<const WeightedCase> cases, int feature, Rng& rng) {
    const auto f = static_cast<std::size_t>(feature);
    const auto values = index_.distinct_values(f);
    const auto ranks = index_.ranks(f);
    const std::size_t q = values.size();
    if (q < 2) return;
    std::fill(left_.begin(), left_.end(), 0.0);

    if (q <= 4 * cases.size()) {
      // Counting pass over the feature's distinct values.
      for (const auto& c : cases) {
        bins_[ranks[c.index] * k_ + static_cast<std::size_t>(data_.y[c.index])] += c.weight;
      }
      double left_weight = 0.0;
      std::optional<std::size_t> prev;
      for (std::size_t b = 0; b < q; ++b) {
        double bin_weight = 0.0;
        for (std::size_t k = 0; k < k_; ++k) bin_weight += bins_[b * k_ + k];
        if (bin_weight == 0.0) continue;
        if (prev) offer(feature, values[*prev], values[b], left_weight, rng);
        for (std::size_t k = 0; k < k_; ++k) left_[k] += bins_[b * k_ + k];
        left_weight += bin_weight;
        prev = b;
      }
      for (const auto& c : cases) {
        bins_[ranks[c.index] * k_ + static_cast<std::size_t>(data_.y[c.index])] = 0.0;
      }
      return;
    }

    sorted_.clear();
    for (const auto& c : cases) sorted_.push_back({ranks[c.index], c.index, c.weight});
    std::sort(sorted_.begin(), sorted_.end(),
              [](const Ranked& a, const Ranked& b) { return a.rank < b.rank; });
    double left_weight = 0.0;
    std::size_t i = 0;
    while (i < sorted_.size()) {
      const std::uint32_t rank = sorted_[i].rank;
      if (i > 0) offer(feature, values[sorted_[i - 1].rank], values[rank], left_weight, rng);
      for (; i < sorted_.size() && sorted_[i].rank == rank; ++i) {
        left_[static_cast<std::size_t>(data_.y[sorted_[i].index])] += sorted_[i].weight;
        left_weight += sorted_[i].weight;
      }
    }
  }

  static constexpr double kMinGain = 1e-12;

  struct Ranked {
    std::uint32_t rank;
    std::uint32_t index;
    std::uint32_t weight;
  };

  const TrainingView& data_;
  const FeatureIndex& index_;
  int min_node_size_;
  NodeSizeRule rule_;
  std::size_t k_;
  std::vector<double> total_;
  std::vector<double> left_;
  std::vector<double> bins_;
  std::vector<Ranked> sorted_;
  double weight_ = 0.0;
  double parent_score_ = 0.0;
  std::optional<Split> best_;
  double best_score_ = -1.0;
  std::uint64_t n_ties_ = 0;
};

void check_view(const TrainingView& data) {
  if (data.x.rows() != data.y.size()) {
    throw std::invalid_argument("TrainingView: x rows differ from y length");
  }
  for (int label : data.y) {
    if (label < 0 || label >= data.n_classes) {
      throw std::invalid_argument("TrainingView: label outside [0, n_classes)");
    }
  }
}

}  // namespace

std::optional<Split> best_split(const TrainingView& data, std::span<const WeightedCase> cases,
                                std::span<const int> features, int min_node_size, Rng& rng,
                                NodeSizeRule rule) {
  check_view(data);
  if (cases.empty()) return std::nullopt;
  const FeatureIndex index(data.x);
  SplitSearch search(data, index, min_node_size, rule);
  return search.find(cases, features, rng);
}

// ---------------------------------------------------------------------------
// Tree growing

Tree grow_tree(const TrainingView& data, std::span<const std::uint32_t> bootstrap_weights,
               const ForestParams& params, Rng& rng, const FeatureIndex* index) {
  check_view(data);
  const int p = static_cast<int>(data.x.cols());
  params.validate(p);
  if (bootstrap_weights.size() != data.x.rows()) {
    throw std::invalid_argument("grow_tree: bootstrap weights length differs from rows");
  }
  std::optional<FeatureIndex> own_index;
  if (index == nullptr) index = &own_index.emplace(data.x);

  std::vector<WeightedCase> cases;
  for (std::size_t i = 0; i < bootstrap_weights.size(); ++i) {
    if (bootstrap_weights[i] > 0) {
      cases.push_back({static_cast<std::uint32_t>(i), bootstrap_weights[i]});
    }
  }
  if (cases.empty()) throw std::invalid_argument("grow_tree: total bootstrap weight is zero");

  const int mtry = params.resolved_mtry(p);
  const auto k = static_cast<std::size_t>(data.n_classes);
  Tree tree(data.n_classes);
  SplitSearch search(data, *index, params.min_node_size, params.node_size_rule);
  std::vector<int> feature_pool(static_cast<std::size_t>(p));
  std::vector<double> counts(k);

  struct Pending {
    std::size_t node, begin, end;
  };
  std::vector<Pending> stack{{0, 0, cases.size()}};
  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const std::span<WeightedCase> node_cases(cases.data() + job.begin, job.end - job.begin);

    // Fresh feature subset, sampled without replacement.
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    for (int j = 0; j < mtry; ++j) {
      const auto pick = j + rng.uniform_index(static_cast<std::uint64_t>(p - j));
      std::swap(feature_pool[static_cast<std::size_t>(j)], feature_pool[pick]);
    }
    const std::span<const int> features(feature_pool.data(), static_cast<std::size_t>(mtry));

    const auto split = search.find(node_cases, features, rng);
    if (!split) {
      std::fill(counts.begin(), counts.end(), 0.0);
      for (const auto& c : node_cases) counts[static_cast<std::size_t>(data.y[c.index])] += c.weight;
      const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
      for (auto& c : counts) c /= total;
      tree.set_leaf(job.node, counts, total);
      continue;
    }
    const auto f = static_cast<std::size_t>(split->feature);
    const auto mid = std::partition(node_cases.begin(), node_cases.end(), [&](const WeightedCase& c) {
      return data.x(c.index, f) <= split->threshold;
    });
    const std::size_t boundary = job.begin + static_cast<std::size_t>(mid - node_cases.begin());
    const auto [left, right] = tree.split_node(job.node, *split);
    stack.push_back({right, boundary, job.end});
    stack.push_back({left, job.begin, boundary});
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Forest

Forest::Forest(ForestParams params, int n_classes, int n_features, std::vector<Tree> trees,
               std::vector<std::uint32_t> inbag_counts, std::size_t n_train,
               std::vector<std::string> feature_names)
    : params_(params), n_classes_(n_classes), n_features_(n_features), trees_(std::move(trees)),
      inbag_(std::move(inbag_counts)), n_train_(n_train), feature_names_(std::move(feature_names)) {
  if (trees_.empty()) throw std::invalid_argument("Forest: no trees");
  if (inbag_.size() != trees_.size() * n_train_) {
    throw std::invalid_argument("Forest: inbag matrix must be n_tree x n_train");
  }
  for (const auto& t : trees_) {
    if (t.n_classes() != n_classes_ || !t.complete()) {
      throw std::invalid_argument("Forest: tree is incomplete or has the wrong class count");
    }
  }
  if (!feature_names_.empty() && feature_names_.size() != static_cast<std::size_t>(n_features_)) {
    throw std::invalid_argument("Forest: feature name count differs from n_features");
  }
}

Matrix Forest::predict_proba(const Matrix& x, unsigned workers) const {
  if (x.cols() != static_cast<std::size_t>(n_features_)) {
    throw std::invalid_argument("predict_proba: input has " + std::to_string(x.cols()) +
                                " features, forest was trained on " + std::to_string(n_features_));
  }
  const auto k = static_cast<std::size_t>(n_classes_);
  Matrix out(x.rows(), k);
  constexpr std::size_t kChunk = 512;
  const std::size_t n_chunks = (x.rows() + kChunk - 1) / kChunk;
  const double scale = 1.0 / static_cast<double>(trees_.size());
  parallel_for(n_chunks, workers, [&](std::size_t chunk) {
    const std::size_t lo = chunk * kChunk;
    const std::size_t hi = std::min(x.rows(), lo + kChunk);
    for (const Tree& tree : trees_) {
      for (std::size_t i = lo; i < hi; ++i) {
        const auto props = tree.predict(x.row(i));
        auto dst = out.row(i);
        if (params_.vote_mode == VoteMode::proportion_average) {
          for (std::size_t c = 0; c < k; ++c) dst[c] += props[c];
        } else {
          dst[static_cast<std::size_t>(std::max_element(props.begin(), props.end()) -
                                       props.begin())] += 1.0;
        }
      }
    }
    for (std::size_t i = lo; i < hi; ++i) {
      for (auto& v : out.row(i)) v *= scale;
    }
  });
  return out;
}

OobPrediction Forest::predict_oob(const Dataset& training) const {
  if (training.size() != n_train_) {
    throw std::invalid_argument("predict_oob: dataset size differs from the training set");
  }
  if (training.n_features() != static_cast<std::size_t>(n_features_)) {
    throw std::invalid_argument("predict_oob: feature count differs from the training set");
  }
  const auto k = static_cast<std::size_t>(n_classes_);
  OobPrediction result{Matrix(n_train_, k), std::vector<bool>(n_train_, false),
                       std::vector<int>(n_train_, 0)};
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const auto counts = inbag(t);
    for (std::size_t i = 0; i < n_train_; ++i) {
      if (counts[i] != 0) continue;
      const auto props = trees_[t].predict(training.x.row(i));
      auto dst = result.probabilities.row(i);
      if (params_.vote_mode == VoteMode::proportion_average) {
        for (std::size_t c = 0; c < k; ++c) dst[c] += props[c];
      } else {
        dst[static_cast<std::size_t>(std::max_element(props.begin(), props.end()) -
                                     props.begin())] += 1.0;
      }
      ++result.n_oob_trees[i];
    }
  }
  for (std::size_t i = 0; i < n_train_; ++i) {
    auto row = result.probabilities.row(i);
    if (result.n_oob_trees[i] == 0) {
      result.missing[i] = true;
      std::fill(row.begin(), row.end(), std::nan(""));
    } else {
      for (auto& v : row) v /= result.n_oob_trees[i];
    }
  }
  return result;
}

Forest fit_forest(const Dataset& data, const ForestParams& params, unsigned workers) {
  data.validate();
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("fit_forest: need at least 2 training cases");
  const int n_classes = data.n_classes();
  std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
  for (int label : data.y) seen[static_cast<std::size_t>(label)] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw std::invalid_argument("fit_forest: training data contains a single class");
  }
  const int p = static_cast<int>(data.n_features());
  params.validate(p);

  const FeatureIndex index(data.x);
  const TrainingView view{data.x, data.y, n_classes};
  const auto n_tree = static_cast<std::size_t>(params.n_tree);
  std::vector<std::uint32_t> inbag(n_tree * n);
  std::vector<std::optional<Tree>> slots(n_tree);

  parallel_for(n_tree, workers, [&](std::size_t t) {
    Rng rng(mix_seed(params.seed, t));
    const std::span<std::uint32_t> counts(inbag.data() + t * n, n);
    for (std::size_t draw = 0; draw < n; ++draw) ++counts[rng.uniform_index(n)];
    slots[t].emplace(grow_tree(view, counts, params, rng, &index));
  });

  std::vector<Tree> trees;
  trees.reserve(n_tree);
  for (auto& s : slots) trees.push_back(std::move(*s));
  return Forest(params, n_classes, p, std::move(trees), std::move(inbag), n, data.feature_names);
}

std::string to_string(NodeSizeRule rule) { return rule == NodeSizeRule::child ? "child" : "parent"; }

std::string to_string(VoteMode mode) {
  return mode == VoteMode::proportion_average ? "proportion_average" : "majority_vote_fraction";
}

NodeSizeRule parse_node_size_rule(std::string_view s) {
  if (s == "child") return NodeSizeRule::child;
  if (s == "parent") return NodeSizeRule::parent;
  throw std::invalid_argument("unknown node size rule '" + std::string(s) + "'");
}

VoteMode parse_vote_mode(std::string_view s) {
  if (s == "proportion_average") return VoteMode::proportion_average;
  if (s == "majority_vote_fraction") return VoteMode::majority_vote_fraction;
  throw std::invalid_argument("unknown vote mode '" + std::string(s) + "'");
}

}  // namespace probforest::forest

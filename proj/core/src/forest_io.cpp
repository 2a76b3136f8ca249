// Text serialization of a trained forest.
//
//   probforest-forest 1
//   n_classes <K> n_features <P> n_train <N>
//   params <n_tree> <mtry> <min_node_size> <node_size_rule> <vote_mode> <seed>
//   features <name>...
//   tree <n_nodes> <n_leaves>
//   n <feature> <threshold> <child> <gain>        (one line per node)
//   l <n_cases> <p_0> ... <p_K-1>                 (one line per leaf slot)
//   inbag <c_0> ... <c_N-1>
//   ... repeated per tree
//
// Doubles are written in shortest round-trip form, so a loaded forest
// predicts bit-identically.
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "probforest/forest.hpp"

namespace probforest::forest {

namespace {
constexpr const char* kMagic = "probforest-forest";
constexpr int kVersion = 1;
}  // namespace

class ForestSerializer {
 public:
  static void write_tree(std::ostream& out, const Tree& tree) {
    out << "tree " << tree.nodes_.size() << ' ' << tree.leaf_cases_.size() << '\n';
    for (std::size_t i = 0; i < tree.nodes_.size(); ++i) {
      const auto& n = tree.nodes_[i];
      out << "n " << n.feature << ' ' << format_double(n.threshold) << ' ' << n.child << ' '
          << format_double(tree.gains_[i]) << '\n';
    }
    const auto k = static_cast<std::size_t>(tree.n_classes_);
    for (std::size_t s = 0; s < tree.leaf_cases_.size(); ++s) {
      out << "l " << format_double(tree.leaf_cases_[s]);
      for (std::size_t c = 0; c < k; ++c) out << ' ' << format_double(tree.leaf_props_[s * k + c]);
      out << '\n';
    }
  }

  static Tree read_tree(std::istream& in, int n_classes) {
    std::string tag;
    std::size_t n_nodes = 0, n_leaves = 0;
    if (!(in >> tag >> n_nodes >> n_leaves) || tag != "tree") {
      throw std::runtime_error("forest file: expected 'tree' record");
    }
    Tree tree(n_classes);
    tree.nodes_.resize(n_nodes);
    tree.gains_.resize(n_nodes);
    std::string threshold, gain;
    for (std::size_t i = 0; i < n_nodes; ++i) {
      auto& n = tree.nodes_[i];
      if (!(in >> tag >> n.feature >> threshold >> n.child >> gain) || tag != "n") {
        throw std::runtime_error("forest file: malformed node record");
      }
      n.threshold = parse_double(threshold, "forest file threshold");
      tree.gains_[i] = parse_double(gain, "forest file gain");
      if (n.feature >= 0 && n.child + 1 >= n_nodes) {
        throw std::runtime_error("forest file: child index out of range");
      }
      if (n.feature < 0 && n.child >= n_leaves) {
        throw std::runtime_error("forest file: leaf slot out of range");
      }
    }
    const auto k = static_cast<std::size_t>(n_classes);
    tree.leaf_cases_.resize(n_leaves);
    tree.leaf_props_.resize(n_leaves * k);
    std::string field;
    for (std::size_t s = 0; s < n_leaves; ++s) {
      if (!(in >> tag >> field) || tag != "l") {
        throw std::runtime_error("forest file: malformed leaf record");
      }
      tree.leaf_cases_[s] = parse_double(field, "forest file leaf size");
      for (std::size_t c = 0; c < k; ++c) {
        if (!(in >> field)) throw std::runtime_error("forest file: truncated leaf record");
        tree.leaf_props_[s * k + c] = parse_double(field, "forest file leaf proportion");
      }
    }
    return tree;
  }
};

void Forest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kMagic << ' ' << kVersion << '\n';
  out << "n_classes " << n_classes_ << " n_features " << n_features_ << " n_train " << n_train_
      << '\n';
  out << "params " << params_.n_tree << ' ' << params_.mtry << ' ' << params_.min_node_size << ' '
      << to_string(params_.node_size_rule) << ' ' << to_string(params_.vote_mode) << ' '
      << params_.seed << '\n';
  out << "features";
  for (const auto& name : feature_names_) out << ' ' << name;
  out << '\n';
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    ForestSerializer::write_tree(out, trees_[t]);
    out << "inbag";
    for (auto c : inbag(t)) out << ' ' << c;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Forest Forest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw std::runtime_error(path.string() + ": not a forest file");
  }
  if (version != kVersion) {
    throw std::runtime_error(path.string() + ": unsupported forest file version " +
                             std::to_string(version));
  }
  std::string key;
  int n_classes = 0, n_features = 0;
  std::size_t n_train = 0;
  in >> key >> n_classes >> key >> n_features >> key >> n_train;
  ForestParams params;
  std::string rule, vote;
  in >> key >> params.n_tree >> params.mtry >> params.min_node_size >> rule >> vote >> params.seed;
  if (!in || key != "params") throw std::runtime_error(path.string() + ": malformed header");
  params.node_size_rule = parse_node_size_rule(rule);
  params.vote_mode = parse_vote_mode(vote);

  std::string line;
  std::getline(in, line);  // rest of the params line
  std::getline(in, line);
  std::istringstream names_in(line);
  names_in >> key;
  if (key != "features") throw std::runtime_error(path.string() + ": missing feature list");
  std::vector<std::string> names;
  for (std::string name; names_in >> name;) names.push_back(name);

  std::vector<Tree> trees;
  std::vector<std::uint32_t> inbag;
  inbag.reserve(static_cast<std::size_t>(params.n_tree) * n_train);
  for (int t = 0; t < params.n_tree; ++t) {
    trees.push_back(ForestSerializer::read_tree(in, n_classes));
    if (!(in >> key) || key != "inbag") throw std::runtime_error(path.string() + ": missing inbag");
    for (std::size_t i = 0; i < n_train; ++i) {
      std::uint32_t c = 0;
      if (!(in >> c)) throw std::runtime_error(path.string() + ": truncated inbag record");
      inbag.push_back(c);
    }
  }
  return Forest(params, n_classes, n_features, std::move(trees), std::move(inbag), n_train,
                std::move(names));
}

}  // namespace probforest::forest

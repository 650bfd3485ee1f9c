#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace regmap {

enum class MTry { Sqrt, Third, Explicit };

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 9;
  int min_samples_leaf = 5;
  MTry m_try = MTry::Sqrt;
  int m_try_k = 0;  // used when m_try == Explicit
  std::uint64_t seed = 0;

  void validate() const;
  /// Features drawn per node for F columns, in [1, F].
  [[nodiscard]] int features_per_node(int f) const;
};

/// Row width or column names do not match the trained forest.
struct ForestSchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x <= threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean training target of the node
  int count = 0;       // training rows (with bootstrap multiplicity)

  [[nodiscard]] bool leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;            // nodes[0] is the root
  std::vector<std::uint32_t> bootstrap;   // drawn row indices, sorted, with repeats

  template <typename Row>
  [[nodiscard]] double predict(const Row& row) const {
    int n = 0;
    while (!nodes[n].leaf()) n = row(nodes[n].feature) <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return nodes[n].value;
  }
  [[nodiscard]] int depth() const;
};

class Forest {
 public:
  Forest() = default;
  Forest(ForestConfig cfg, std::vector<std::string> columns, std::int64_t n_train, std::vector<Tree> trees);

  [[nodiscard]] const ForestConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<std::string>& columns() const { return columns_; }
  [[nodiscard]] const std::vector<Tree>& trees() const { return trees_; }
  [[nodiscard]] std::int64_t n_train() const { return n_train_; }

  /// Mean of the per-tree leaf values, trees summed in index order.
  [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  /// Same, after checking the columns against the training schema.
  [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& x, const std::vector<std::string>& columns) const;

 private:
  ForestConfig cfg_;
  std::vector<std::string> columns_;
  std::int64_t n_train_ = 0;
  std::vector<Tree> trees_;
};

/// Bagged MSE regression trees. Column names are optional (defaults f0, f1, ...).
Forest train_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg,
                    std::vector<std::string> columns = {});

/// Per feature: out-of-bag MSE with the feature permuted minus the unpermuted
/// out-of-bag MSE, averaged over trees. x and y must be the training data.
Eigen::VectorXd oob_importance(const Forest& forest, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace regmap

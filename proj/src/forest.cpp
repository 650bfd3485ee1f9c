#include "regmap/forest.hpp"

#include "regmap/io.hpp"
#include "regmap/parallel.hpp"
#include "regmap/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace regmap {

void ForestConfig::validate() const {
  if (n_trees < 1) throw std::invalid_argument("forest: n_trees must be >= 1");
  if (max_depth < 1) throw std::invalid_argument("forest: max_depth must be >= 1");
  if (min_samples_leaf < 1) throw std::invalid_argument("forest: min_samples_leaf must be >= 1");
  if (m_try == MTry::Explicit && m_try_k < 1) throw std::invalid_argument("forest: explicit m_try must be >= 1");
}

int ForestConfig::features_per_node(int f) const {
  int k = 1;
  switch (m_try) {
    case MTry::Sqrt: k = static_cast<int>(std::floor(std::sqrt(static_cast<double>(f)))); break;
    case MTry::Third: k = f / 3; break;
    case MTry::Explicit: k = m_try_k; break;
  }
  return std::clamp(k, 1, std::max(f, 1));
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    deepest = std::max(deepest, d[n]);
    if (!nodes[n].leaf()) d[nodes[n].left] = d[nodes[n].right] = d[n] + 1;
  }
  return deepest;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg, std::uint64_t seed)
      : x_(x), y_(y), cfg_(cfg), mtry_(cfg.features_per_node(static_cast<int>(x.cols()))), rng_(seed) {
    features_.resize(static_cast<std::size_t>(x.cols()));
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build() {
    const auto n = static_cast<std::uint32_t>(y_.size());
    std::uniform_int_distribution<std::uint32_t> draw(0, n - 1);
    tree_.bootstrap.resize(n);
    for (auto& r : tree_.bootstrap) r = draw(rng_);
    std::sort(tree_.bootstrap.begin(), tree_.bootstrap.end());
    idx_ = tree_.bootstrap;
    grow(0, idx_.size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();
  };

  int grow(std::size_t begin, std::size_t end, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto count = static_cast<int>(end - begin);
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r = begin; r < end; ++r) {
      const double v = y_[idx_[r]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    tree_.nodes[id].value = sum / count;
    tree_.nodes[id].count = count;
    if (depth >= cfg_.max_depth || count < 2 * cfg_.min_samples_leaf || lo == hi) return id;

    const Split best = find_split(begin, end, sum);
    if (best.feature < 0) return id;

    const auto mid = std::stable_partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                                           idx_.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](std::uint32_t r) { return x_(r, best.feature) <= best.threshold; });
    const auto split = static_cast<std::size_t>(mid - idx_.begin());
    tree_.nodes[id].feature = best.feature;
    tree_.nodes[id].threshold = best.threshold;
    const int left = grow(begin, split, depth + 1);
    const int right = grow(split, end, depth + 1);
    tree_.nodes[id].left = left;
    tree_.nodes[id].right = right;
    return id;
  }

  Split find_split(std::size_t begin, std::size_t end, double sum) {
    const std::size_t n = end - begin;
    const auto leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
    const double mean = sum / static_cast<double>(n);
    double parent_sse = 0.0;
    for (std::size_t r = begin; r < end; ++r) parent_sse += (y_[idx_[r]] - mean) * (y_[idx_[r]] - mean);
    const double parent_score = sum * sum / static_cast<double>(n);

    // Partial Fisher-Yates: the first mtry_ entries are this node's draw.
    for (int k = 0; k < mtry_; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(features_.size()) - 1);
      std::swap(features_[k], features_[pick(rng_)]);
    }
    Split best;
    buf_.resize(n);
    for (int k = 0; k < mtry_; ++k) {
      const int f = features_[k];
      for (std::size_t r = 0; r < n; ++r) buf_[r] = {x_(idx_[begin + r], f), y_[idx_[begin + r]]};
      std::sort(buf_.begin(), buf_.end());
      double left = 0.0;
      for (std::size_t p = 1; p < n; ++p) {
        left += buf_[p - 1].second;
        if (p < leaf || n - p < leaf || !(buf_[p - 1].first < buf_[p].first)) continue;
        const double right = sum - left;
        // Maximizing this minimizes the children's summed squared error.
        const double score = left * left / static_cast<double>(p) + right * right / static_cast<double>(n - p);
        if (score > best.score || (score == best.score && f < best.feature)) {
          best.feature = f;
          best.score = score;
          double t = 0.5 * (buf_[p - 1].first + buf_[p].first);
          if (!(t < buf_[p].first)) t = buf_[p - 1].first;
          best.threshold = t;
        }
      }
    }
    // Strict decrease of the summed squared error, beyond round-off.
    if (best.feature >= 0 && !(best.score - parent_score > 1e-12 * parent_sse)) best.feature = -1;
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  const ForestConfig& cfg_;
  int mtry_;
  Rng rng_;
  std::vector<int> features_;
  std::vector<std::uint32_t> idx_;
  std::vector<std::pair<double, double>> buf_;
  Tree tree_;
};

void check_training_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg) {
  if (x.rows() != y.size()) throw std::invalid_argument("forest: feature and target row counts differ");
  if (x.cols() < 1) throw std::invalid_argument("forest: no feature columns");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("forest: non-finite training input");
  if (y.size() < 2 * cfg.min_samples_leaf) throw std::invalid_argument("forest: need at least 2 * min_samples_leaf rows");
  if (y.size() > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("forest: too many rows");
}

constexpr char kMagic[4] = {'R', 'M', 'F', 'O'};
constexpr std::uint32_t kFormatVersion = 1;
static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("forest: corrupt payload (truncated)");
  return v;
}

}  // namespace

Forest::Forest(ForestConfig cfg, std::vector<std::string> columns, std::int64_t n_train, std::vector<Tree> trees)
    : cfg_(cfg), columns_(std::move(columns)), n_train_(n_train), trees_(std::move(trees)) {}

Eigen::VectorXd Forest::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != static_cast<Eigen::Index>(columns_.size()))
    throw ForestSchemaError("forest: row width " + std::to_string(x.cols()) + " does not match the " +
                            std::to_string(columns_.size()) + " training columns");
  Eigen::VectorXd out(x.rows());
  parallel_for(x.rows(), [&](std::int64_t r) {
    const auto row = x.row(r);
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(row);
    out[r] = s / static_cast<double>(trees_.size());
  });
  return out;
}

Eigen::VectorXd Forest::predict(const Eigen::MatrixXd& x, const std::vector<std::string>& columns) const {
  if (columns != columns_) throw ForestSchemaError("forest: columns do not match the training schema");
  return predict(x);
}

Forest train_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg,
                    std::vector<std::string> columns) {
  cfg.validate();
  check_training_data(x, y, cfg);
  if (columns.empty())
    for (Eigen::Index c = 0; c < x.cols(); ++c) columns.push_back("f" + std::to_string(c));
  if (columns.size() != static_cast<std::size_t>(x.cols()))
    throw ForestSchemaError("forest: column names do not match the feature width");
  std::vector<Tree> trees(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(cfg.n_trees, [&](std::int64_t t) {
    TreeBuilder b(x, y, cfg, derive_seed(cfg.seed, {0x7265, static_cast<std::uint64_t>(t)}));
    trees[static_cast<std::size_t>(t)] = b.build();
  });
  return Forest(cfg, std::move(columns), y.size(), std::move(trees));
}

Eigen::VectorXd oob_importance(const Forest& forest, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != forest.n_train() || y.size() != forest.n_train())
    throw std::invalid_argument("oob_importance: expects the training rows");
  if (x.cols() != static_cast<Eigen::Index>(forest.columns().size()))
    throw ForestSchemaError("oob_importance: row width does not match the forest");
  const auto& trees = forest.trees();
  const auto nf = static_cast<std::size_t>(x.cols());
  std::vector<Eigen::VectorXd> per_tree(trees.size(), Eigen::VectorXd::Zero(x.cols()));

  parallel_for(static_cast<std::int64_t>(trees.size()), [&](std::int64_t t) {
    const Tree& tree = trees[static_cast<std::size_t>(t)];
    std::vector<char> in_bag(static_cast<std::size_t>(y.size()), 0);
    for (auto r : tree.bootstrap) in_bag[r] = 1;
    std::vector<Eigen::Index> oob;
    for (Eigen::Index r = 0; r < y.size(); ++r)
      if (!in_bag[static_cast<std::size_t>(r)]) oob.push_back(r);
    if (oob.empty()) throw std::runtime_error("oob_importance: a tree has no out-of-bag rows; increase n");

    double base = 0.0;
    for (auto r : oob) {
      const double e = tree.predict(x.row(r)) - y[r];
      base += e * e;
    }
    base /= static_cast<double>(oob.size());

    std::vector<char> used(nf, 0);
    for (const auto& node : tree.nodes)
      if (!node.leaf()) used[static_cast<std::size_t>(node.feature)] = 1;
    std::vector<Eigen::Index> perm(oob.size());
    for (std::size_t f = 0; f < nf; ++f) {
      // A feature the tree never splits on cannot change its predictions.
      if (!used[f]) continue;
      perm = oob;
      Rng rng(derive_seed(forest.config().seed, {0x6f6f62, static_cast<std::uint64_t>(t), f}));
      std::shuffle(perm.begin(), perm.end(), rng);
      double mse = 0.0;
      for (std::size_t k = 0; k < oob.size(); ++k) {
        const Eigen::Index r = oob[k];
        const double swapped = x(perm[k], static_cast<Eigen::Index>(f));
        const auto row = [&](int c) { return c == static_cast<int>(f) ? swapped : x(r, c); };
        const double e = tree.predict(row) - y[r];
        mse += e * e;
      }
      per_tree[static_cast<std::size_t>(t)][static_cast<Eigen::Index>(f)] = mse / static_cast<double>(oob.size()) - base;
    }
  });
  Eigen::VectorXd imp = Eigen::VectorXd::Zero(x.cols());
  for (const auto& v : per_tree) imp += v;
  return imp / static_cast<double>(trees.size());
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("forest: cannot write " + path.string());
  const ForestConfig& c = forest.config();
  out.write(kMagic, 4);
  put(out, kFormatVersion);
  put(out, static_cast<std::int32_t>(c.n_trees));
  put(out, static_cast<std::int32_t>(c.max_depth));
  put(out, static_cast<std::int32_t>(c.min_samples_leaf));
  put(out, static_cast<std::int32_t>(c.m_try));
  put(out, static_cast<std::int32_t>(c.m_try_k));
  put(out, c.seed);
  put(out, static_cast<std::uint32_t>(forest.columns().size()));
  for (const auto& name : forest.columns()) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  put(out, static_cast<std::uint64_t>(forest.n_train()));
  put(out, static_cast<std::uint32_t>(forest.trees().size()));
  for (const auto& t : forest.trees()) {
    put(out, static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      put(out, static_cast<std::int32_t>(n.feature));
      put(out, n.threshold);
      put(out, static_cast<std::int32_t>(n.left));
      put(out, static_cast<std::int32_t>(n.right));
      put(out, n.value);
      put(out, static_cast<std::int32_t>(n.count));
    }
    put(out, static_cast<std::uint64_t>(t.bootstrap.size()));
    out.write(reinterpret_cast<const char*>(t.bootstrap.data()),
              static_cast<std::streamsize>(t.bootstrap.size() * sizeof(std::uint32_t)));
  }
  out.write(kMagic, 4);
  if (!out) throw std::runtime_error("forest: write failed for " + path.string());
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("forest: not a model file");
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw FormatError("forest: unsupported model version " + std::to_string(version));
  ForestConfig c;
  c.n_trees = get<std::int32_t>(in);
  c.max_depth = get<std::int32_t>(in);
  c.min_samples_leaf = get<std::int32_t>(in);
  const auto m = get<std::int32_t>(in);
  if (m < 0 || m > 2) throw FormatError("forest: corrupt payload (m_try)");
  c.m_try = static_cast<MTry>(m);
  c.m_try_k = get<std::int32_t>(in);
  c.seed = get<std::uint64_t>(in);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("forest: corrupt payload (") + e.what() + ")");
  }
  const auto ncol = get<std::uint32_t>(in);
  if (ncol > (1u << 20)) throw FormatError("forest: corrupt payload (column count)");
  std::vector<std::string> columns(ncol);
  for (auto& name : columns) {
    const auto len = get<std::uint32_t>(in);
    if (len > 4096) throw FormatError("forest: corrupt payload (column name)");
    name.resize(len);
    if (!in.read(name.data(), len)) throw FormatError("forest: corrupt payload (truncated)");
  }
  const auto n_train = get<std::uint64_t>(in);
  const auto ntree = get<std::uint32_t>(in);
  if (ntree != static_cast<std::uint32_t>(c.n_trees)) throw FormatError("forest: corrupt payload (tree count)");
  std::vector<Tree> trees(ntree);
  for (auto& t : trees) {
    const auto nn = get<std::uint32_t>(in);
    if (nn == 0 || nn > (1u << 24)) throw FormatError("forest: corrupt payload (node count)");
    t.nodes.resize(nn);
    for (auto& n : t.nodes) {
      n.feature = get<std::int32_t>(in);
      n.threshold = get<double>(in);
      n.left = get<std::int32_t>(in);
      n.right = get<std::int32_t>(in);
      n.value = get<double>(in);
      n.count = get<std::int32_t>(in);
      const auto bad_child = [&](int k) { return k <= 0 || k >= static_cast<int>(nn); };
      if (n.feature >= static_cast<int>(ncol) || (!n.leaf() && (bad_child(n.left) || bad_child(n.right))))
        throw FormatError("forest: corrupt payload (node)");
    }
    const auto nb = get<std::uint64_t>(in);
    if (nb > n_train) throw FormatError("forest: corrupt payload (bootstrap)");
    t.bootstrap.resize(nb);
    if (!in.read(reinterpret_cast<char*>(t.bootstrap.data()), static_cast<std::streamsize>(nb * sizeof(std::uint32_t))))
      throw FormatError("forest: corrupt payload (truncated)");
    for (auto r : t.bootstrap)
      if (r >= n_train) throw FormatError("forest: corrupt payload (bootstrap)");
  }
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("forest: corrupt payload (trailer)");
  return Forest(c, std::move(columns), static_cast<std::int64_t>(n_train), std::move(trees));
}

}  // namespace regmap

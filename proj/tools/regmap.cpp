// regmap command-line driver.
#include "regmap/features.hpp"
#include "regmap/forest.hpp"
#include "regmap/io.hpp"
#include "regmap/parallel.hpp"
#include "regmap/pipeline.hpp"
#include "regmap/random.hpp"
#include "regmap/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <charconv>
#include <cstdint>
#include <numeric>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace regmap;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kMissingInput = 2, kSchemaMismatch = 3, kInvalidConfig = 4 };

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Global {
  std::uint64_t seed = 7;
  int threads = 0;
  std::string schema = "combined";
};

struct ForestFlags {
  int trees = 100;
  int depth = 9;
  int leaf = 5;
  std::string mtry = "sqrt";

  ForestConfig config(std::uint64_t seed) const {
    ForestConfig c;
    c.n_trees = trees;
    c.max_depth = depth;
    c.min_samples_leaf = leaf;
    c.seed = seed;
    if (mtry == "sqrt") {
      c.m_try = MTry::Sqrt;
    } else if (mtry == "third") {
      c.m_try = MTry::Third;
    } else {
      c.m_try = MTry::Explicit;
      c.m_try_k = std::stoi(mtry);
    }
    c.validate();
    return c;
  }
};

void add_forest_flags(CLI::App* cmd, ForestFlags& f) {
  cmd->add_option("--trees", f.trees, "Number of trees")->capture_default_str();
  cmd->add_option("--depth", f.depth, "Maximum tree depth")->capture_default_str();
  cmd->add_option("--leaf", f.leaf, "Minimum samples per leaf")->capture_default_str();
  cmd->add_option("--mtry", f.mtry, "Features per split: sqrt, third or a count")
      ->capture_default_str()
      ->check([](const std::string& s) -> std::string {
        if (s == "sqrt" || s == "third") return {};
        int k = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), k);
        return r.ec == std::errc() && r.ptr == s.data() + s.size() && k > 0 ? "" : "expected sqrt, third or a positive count";
      });
}

std::string schema_check(const std::string& s) {
  try {
    schema_columns(s);
    return {};
  } catch (const SchemaError& e) {
    return e.what();
  }
}

/// Writes <dir>/run_manifest.json and <dir>/run_config.toml; the latter can be
/// passed back with --config to repeat the run.
void write_manifest(const fs::path& dir, const CLI::App& app, const std::string& command, const Global& g,
                    const nlohmann::json& seeds) {
  fs::create_directories(dir);
  // Globals plus only the active subcommand's section; loading the section selects the subcommand again.
  const CLI::App* sub = app.get_subcommand(command);
  std::string config = "seed=" + std::to_string(g.seed) + "\nthreads=" + std::to_string(g.threads) +
                       "\nschema=\"" + g.schema + "\"\n\n[" + command + "]\n" + sub->config_to_str(true, false);
  {
    std::ofstream toml(dir / "run_config.toml");
    toml << config;
  }
  nlohmann::json m;
  m["tool"] = "regmap";
  m["command"] = command;
  m["config_file"] = "run_config.toml";
  m["config_hash"] = hex(fnv1a(config));
  m["seed"] = g.seed;
  m["seeds"] = seeds;
  m["versions"] = {{"regmap", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"cli11", CLI11_VERSION},
                   {"compiler", __VERSION__}};
  std::ofstream out(dir / "run_manifest.json");
  out << m.dump(2) << '\n';
}

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

/// Creates the parent directory of an output file.
const std::string& prepare_output(const std::string& file) {
  fs::create_directories(dir_of(file));
  return file;
}

std::vector<Field> maybe_ensemble(const std::string& dir) {
  if (dir.empty()) return {};
  if (!fs::is_directory(dir)) throw MissingFileError("ensemble directory not found: " + dir);
  return read_ensemble(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regmap: voxel-wise registration error prediction"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML configuration file");
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = runtime default)")
      ->capture_default_str()
      ->envname("REGMAP_THREADS")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--schema", g.schema, "intensity | registration | combined | combined+md | no-pooling | single:<name>")
      ->capture_default_str()
      ->check(schema_check);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic fixed/moving pair with dense ground truth");
  std::string synth_out;
  int synth_dims = 64;
  double synth_spacing = 2.0, synth_amp = 12.0, synth_sigma = 20.0, synth_noise = 10.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--dims", synth_dims, "Voxels per axis")->capture_default_str()->check(CLI::Range(16, 1024));
  synth->add_option("--spacing", synth_spacing, "Voxel spacing (mm)")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--amplitude", synth_amp, "Maximum true displacement (mm)")->capture_default_str();
  synth->add_option("--sigma", synth_sigma, "Smoothing of the true field (mm)")->capture_default_str();
  synth->add_option("--noise", synth_noise, "Intensity noise standard deviation")->capture_default_str();

  // register
  auto* reg = app.add_subcommand("register", "Base registration plus both perturbation ensembles");
  std::string reg_fixed, reg_moving, reg_out;
  RegConfig rc;
  EnsembleConfig ens;
  bool reg_no_ens = false;
  reg->add_option("--fixed", reg_fixed, "Fixed image (.mhd/.mha)")->required();
  reg->add_option("--moving", reg_moving, "Moving image (.mhd/.mha)")->required();
  reg->add_option("--out", reg_out, "Output directory")->required();
  reg->add_option("--iterations", rc.iterations, "Iterations per resolution")->capture_default_str();
  reg->add_option("--resolutions", rc.resolutions, "Pyramid levels")->capture_default_str();
  reg->add_option("--step", rc.step_mm, "Largest coefficient update at the finest level (mm)")->capture_default_str();
  reg->add_option("--members", ens.members, "Ensemble size")->capture_default_str();
  reg->add_option("--range", ens.range_mm, "Perturbation range (mm)")->capture_default_str();
  reg->add_flag("--no-ensembles", reg_no_ens, "Only the base registration");

  // features
  auto* feat = app.add_subcommand("features", "Feature table at sample locations");
  std::string f_fixed, f_moving, f_tb, f_ens_t, f_ens_tl, f_truth, f_landmarks, f_out, f_pair = "pair";
  int f_stride = 7;
  feat->add_option("--fixed", f_fixed, "Fixed image")->required();
  feat->add_option("--moving", f_moving, "Moving image")->required();
  feat->add_option("--tb", f_tb, "Base field prefix (<prefix>_dx.mhd ...)")->required();
  feat->add_option("--ens-t", f_ens_t, "Initial-perturbation ensemble directory");
  feat->add_option("--ens-tl", f_ens_tl, "Base-perturbation ensemble directory");
  auto* truth_opt = feat->add_option("--truth", f_truth, "True field prefix: dense samples from the true error");
  auto* lm_opt = feat->add_option("--landmarks", f_landmarks, "Landmark file: neighborhoods around landmarks");
  truth_opt->excludes(lm_opt);
  feat->add_option("--stride", f_stride, "Lattice stride for --truth (voxels)")->capture_default_str();
  feat->add_option("--pair-id", f_pair, "Pair id stored with every row")->capture_default_str();
  feat->add_option("--out", f_out, "Output table (.csv or binary)")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a forest on a feature table");
  std::string t_table, t_out;
  ForestFlags tf;
  train->add_option("--table", t_table, "Feature table")->required();
  train->add_option("--out", t_out, "Model file")->required();
  add_forest_flags(train, tf);

  // predict
  auto* pred = app.add_subcommand("predict", "Predict registration error for table rows");
  std::string p_model, p_table, p_out;
  pred->add_option("--model", p_model, "Model file")->required();
  pred->add_option("--table", p_table, "Feature table containing the model's columns")->required();
  pred->add_option("--out", p_out, "Predictions CSV")->required();

  // evaluate
  auto* evalc = app.add_subcommand("evaluate", "Pair-level cross-validation and reports");
  std::string e_table, e_out;
  CvConfig cv;
  ForestFlags ef;
  evalc->add_option("--table", e_table, "Feature table")->required();
  evalc->add_option("--out", e_out, "Report directory")->required();
  evalc->add_option("--folds", cv.folds, "Folds (k-fold over pairs)")->capture_default_str();
  evalc->add_option("--repeats", cv.repeats, "Repeated random splits instead of k folds")->capture_default_str();
  evalc->add_option("--test-pairs", cv.test_pairs, "Held-out pairs per repeat")->capture_default_str();
  add_forest_flags(evalc, ef);

  // importance
  auto* imp = app.add_subcommand("importance", "Out-of-bag permutation importance of a trained model");
  std::string i_model, i_table, i_out;
  imp->add_option("--model", i_model, "Model file")->required();
  imp->add_option("--table", i_table, "The model's training table")->required();
  imp->add_option("--out", i_out, "importance CSV")->required();

  // e2e
  auto* e2e = app.add_subcommand("e2e", "Synthetic pairs through registration, features, forest and evaluation");
  E2eConfig ec;
  std::string x_out = "e2e_out";
  int x_dims = 64;
  double x_spacing = 2.0;
  ForestFlags xf;
  bool x_no_parity = false;
  e2e->add_option("--out", x_out, "Output directory")->capture_default_str();
  e2e->add_option("--pairs", ec.pairs, "Synthetic pairs")->capture_default_str();
  e2e->add_option("--dims", x_dims, "Voxels per axis")->capture_default_str()->check(CLI::Range(16, 1024));
  e2e->add_option("--spacing", x_spacing, "Voxel spacing (mm)")->capture_default_str()->check(CLI::PositiveNumber);
  e2e->add_option("--amplitude", ec.pair.amplitude_mm, "Maximum true displacement (mm)")->capture_default_str();
  e2e->add_option("--budgets", ec.budgets, "Iteration budgets per resolution")->capture_default_str()->delimiter(',');
  e2e->add_option("--resolutions", ec.reg.resolutions, "Pyramid levels")->capture_default_str();
  e2e->add_option("--members", ec.ensemble.members, "Ensemble size")->capture_default_str();
  e2e->add_option("--range", ec.ensemble.range_mm, "Perturbation range (mm)")->capture_default_str();
  e2e->add_option("--stride", ec.stride, "Sampling lattice stride (voxels)")->capture_default_str();
  e2e->add_option("--folds", ec.folds, "Cross-validation folds")->capture_default_str();
  e2e->add_flag("--no-parity", x_no_parity, "Skip the misregistration demo pair");
  add_forest_flags(e2e, xf);
  for (CLI::App* s : app.get_subcommands({})) s->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidConfig;
  }

  set_thread_count(g.threads);
  try {
    if (*synth) {
      PairOptions po;
      po.dims = Index3::Constant(synth_dims);
      po.spacing = Point3::Constant(synth_spacing);
      po.amplitude_mm = synth_amp;
      po.sigma_mm = synth_sigma;
      po.noise_sd = synth_noise;
      const SyntheticPair p = make_synthetic_pair("pair", po, g.seed);
      const fs::path out(synth_out);
      fs::create_directories(out);
      write_mhd(p.fixed, out / "fixed.mhd");
      write_mhd(p.moving, out / "moving.mhd");
      write_field(p.truth, out / "truth");
      write_mhd(p.homogeneous.cast<double>(), out / "homogeneous.mhd", ElementType::UInt8);
      write_manifest(out, app, "synth", g, {{"pair", g.seed}});
    } else if (*reg) {
      rc.seed = g.seed;
      rc.validate();
      const Image fixed = read_mhd(reg_fixed);
      const Image moving = read_mhd(reg_moving);
      const RegistrationContext ctx(fixed, moving, rc.resolutions);
      const RegistrationResult r = register_pair(ctx, rc, ens, !reg_no_ens);
      const fs::path out(reg_out);
      fs::create_directories(out);
      write_field(r.t_b, out / "tb");
      if (!reg_no_ens) {
        write_ensemble(r.ensemble_t, out / "ensT");
        write_ensemble(r.ensemble_tl, out / "ensTL");
      }
      write_manifest(out, app, "register", g,
                     {{"registration", rc.seed}, {"ensemble_t", derive_seed(rc.seed, {1})},
                      {"ensemble_tl", derive_seed(rc.seed, {2})}});
    } else if (*feat) {
      const auto columns = schema_columns(g.schema);
      const Image fixed = read_mhd(f_fixed);
      const Image moving = read_mhd(f_moving);
      const Field t_b = read_field(f_tb);
      const auto ens_t = maybe_ensemble(f_ens_t);
      const auto ens_tl = maybe_ensemble(f_ens_tl);
      std::vector<Sample> samples;
      if (!f_truth.empty()) {
        samples = dense_from_truth(true_error_map(t_b, read_field(f_truth)), f_stride, f_pair);
      } else if (!f_landmarks.empty()) {
        const LandmarkPairSet lm = read_landmarks(f_landmarks, f_pair);
        validate_landmarks(lm, fixed.geometry(), moving.geometry());
        samples = expand_neighborhood(landmark_error(lm, t_b), fixed.geometry(), f_pair);
      } else {
        throw MissingInputError("features: --truth or --landmarks is required for targets");
      }
      const SampleTable t = feature_table(fixed, moving, t_b, ens_t, ens_tl, columns, std::move(samples));
      write_table(t, prepare_output(f_out));
      write_manifest(dir_of(f_out), app, "features", g, nlohmann::json::object());
    } else if (*train) {
      const ForestConfig fc = tf.config(g.seed);
      const SampleTable t = read_table(t_table).select(schema_columns(g.schema));
      const Forest f = train_forest(t.x, t.targets(), fc, t.columns);
      save_forest(f, prepare_output(t_out));
      write_manifest(dir_of(t_out), app, "train", g, {{"forest", g.seed}});
    } else if (*pred) {
      const Forest f = load_forest(p_model);
      const SampleTable t = read_table(p_table).select(f.columns());
      const Eigen::VectorXd y_hat = f.predict(t.x, t.columns);
      std::ofstream out(prepare_output(p_out));
      if (!out) throw std::runtime_error("cannot write " + p_out);
      out << "pair_id,i,j,k,y,y_hat,class_hat\n";
      for (std::size_t r = 0; r < t.rows(); ++r) {
        const Sample& s = t.samples[r];
        const double v = y_hat[static_cast<Eigen::Index>(r)];
        out << s.pair_id << ',' << s.index.x() << ',' << s.index.y() << ',' << s.index.z() << ','
            << format_double(s.y) << ',' << format_double(v) << ',' << class_name(classify(v)) << '\n';
      }
    } else if (*evalc) {
      cv.forest = ef.config(g.seed);
      const SampleTable t = read_table(e_table).select(schema_columns(g.schema));
      cv.seed = g.seed;
      const CvReport report = cross_validate(t, cv);
      emit_reports(report, t, e_out);
      write_manifest(e_out, app, "evaluate", g, {{"cv", g.seed}});
      std::cout << "mae " << format_double(report.aggregate.mae) << " accuracy "
                << format_double(report.aggregate.accuracy) << '\n';
    } else if (*imp) {
      const Forest f = load_forest(i_model);
      const SampleTable t = read_table(i_table).select(f.columns());
      const Eigen::VectorXd v = oob_importance(f, t.x, t.targets());
      std::vector<std::size_t> order(static_cast<std::size_t>(v.size()));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return v[static_cast<Eigen::Index>(a)] > v[static_cast<Eigen::Index>(b)];
      });
      std::ofstream out(prepare_output(i_out));
      if (!out) throw std::runtime_error("cannot write " + i_out);
      out << "rank,feature,importance\n";
      for (std::size_t r = 0; r < order.size(); ++r)
        out << r << ',' << f.columns()[order[r]] << ',' << format_double(v[static_cast<Eigen::Index>(order[r])]) << '\n';
    } else if (*e2e) {
      ec.pair.dims = Index3::Constant(x_dims);
      ec.pair.spacing = Point3::Constant(x_spacing);
      ec.schema = g.schema;
      ec.seed = g.seed;
      ec.forest = xf.config(g.seed);
      ec.parity = !x_no_parity;
      ec.validate();
      const E2eResult r = run_e2e(ec, x_out, [](const std::string& s) { std::cerr << s << '\n'; });
      write_manifest(x_out, app, "e2e", g,
                     {{"pairs", "derive(seed, 1, pair)"},
                      {"registrations", "derive(seed, 2, pair, budget)"},
                      {"parity_pair", derive_seed(g.seed, {3})},
                      {"forest", g.seed}});
      std::cout << "mae " << format_double(r.cv.aggregate.mae) << " baseline "
                << format_double(r.cv.aggregate.baseline_mae) << " accuracy "
                << format_double(r.cv.aggregate.accuracy) << " majority " << format_double(r.cv.aggregate.majority)
                << '\n';
    }
  } catch (const MissingFileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissingInput;
  } catch (const MissingInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissingInput;
  } catch (const SchemaError& e) {
    std::cerr << "schema mismatch: " << e.what() << '\n';
    return kSchemaMismatch;
  } catch (const ForestSchemaError& e) {
    std::cerr << "schema mismatch: " << e.what() << '\n';
    return kSchemaMismatch;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

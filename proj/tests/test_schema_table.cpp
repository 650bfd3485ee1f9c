#include "helpers.hpp"
#include "regmap/feat_int.hpp"
#include "regmap/feat_reg.hpp"
#include "regmap/features.hpp"
#include "regmap/pipeline.hpp"
#include "regmap/pooling.hpp"
#include "regmap/synth.hpp"
#include "regmap/table.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace regmap;

TEST_SUITE("schema") {

TEST_CASE("schema column counts") {
  CHECK(schema_columns("combined").size() == 158);
  CHECK(schema_columns("intensity").size() == 50);
  CHECK(schema_columns("registration").size() == 108);
  CHECK(schema_columns("no-pooling").size() == 8);
  CHECK(schema_columns("combined+md").size() == 178);
  for (const char* m : {"mind", "stdT", "stdTL", "cvh", "biasT", "biasTL", "jac"})
    CHECK(schema_columns(std::string("single:") + m).size() == 18);
  CHECK(schema_columns("single:mi").size() == 32);
  CHECK(schema_columns("single:nc").size() == 8);
  CHECK(schema_columns("single:sid").size() == 6);
  CHECK(schema_columns("single:gid").size() == 6);
  CHECK_THROWS_AS(schema_columns("bogus"), SchemaError);
  CHECK_THROWS_AS(schema_columns("single:nope"), SchemaError);
}

TEST_CASE("schema columns are unique and decodable") {
  const auto cols = schema_columns("combined+md");
  CHECK(std::set<std::string>(cols.begin(), cols.end()).size() == cols.size());
  for (const auto& c : cols) CHECK_NOTHROW(parse_column(c));
  CHECK(pooled_columns("jac").front() == "jac_avg2");
  CHECK(pooled_columns("jac").back() == "jac_max40");
  CHECK(format_size(0.5) == "0.5");
  CHECK(format_size(15) == "15");
}

TEST_CASE("column decoding") {
  using K = ColumnSpec::Kind;
  CHECK(parse_column("stdTL_avg15").kind == K::AvgPool);
  CHECK(parse_column("stdTL_avg15").mother == "stdTL");
  CHECK(parse_column("stdTL_avg15").size == 15.0);
  CHECK(parse_column("mind_max2").kind == K::MaxPool);
  CHECK(parse_column("nmis20").kind == K::Nmis);
  CHECK(parse_column("nmi20").kind == K::Nmi);
  CHECK(parse_column("pmis15").kind == K::Pmis);
  CHECK(parse_column("gid0.5").size == 0.5);
  CHECK(parse_column("cvh").kind == K::Plain);
  CHECK_THROWS_AS(parse_column("mind_avg"), SchemaError);
  CHECK_THROWS_AS(parse_column("foo"), SchemaError);
  const auto reg = schema_columns("registration");
  const auto inten = schema_columns("intensity");
  CHECK(needs_ensembles(reg));
  CHECK_FALSE(needs_ensembles(inten));
}

}  // TEST_SUITE

TEST_SUITE("features") {

TEST_CASE("extracted columns equal the pooled maps") {
  const Geometry g(Index3(20, 18, 16), Point3(2.0, 2.0, 2.5));
  const Image fixed = generate_phantom(g.dims, g.spacing, 1);
  const Field tb = generate_random_dvf(g, 2.0, 8.0, 2);
  const Image warped = warp(fixed, tb);
  std::vector<Field> et;
  std::vector<Field> etl;
  std::vector<Image> wt;
  for (std::uint64_t s = 0; s < 3; ++s) {
    et.push_back(generate_random_dvf(g, 2.0, 8.0, 10 + s));
    etl.push_back(generate_random_dvf(g, 1.0, 8.0, 20 + s));
    wt.push_back(warp(fixed, et.back()));
  }
  PairInputs in{&fixed, &warped, &tb, et, etl, wt};
  FeatureExtractor ex(in);
  const std::vector<Index3> locs = {Index3(0, 0, 0), Index3(10, 9, 7), Index3(19, 17, 15), Index3(3, 12, 5)};
  const std::vector<std::string> cols = {"stdT_avg10", "biasTL_max5", "jac_avg2", "cvh_max15", "mind_avg5",
                                         "nmi10", "pmis15", "nc20", "sid2", "gid4", "stdTL"};
  const Eigen::MatrixXd x = ex.extract(cols, locs);
  REQUIRE(x.rows() == 4);
  REQUIRE(x.cols() == static_cast<Eigen::Index>(cols.size()));

  const FeatureMap stdt = std_dvf(et);
  const FeatureMap biastl = bias_map(tb, etl, "biasTL");
  const FeatureMap jac = jacobian_det(tb);
  const FeatureMap cv = cvh(fixed, wt, warped);
  const FeatureMap mind = mind_distance(fixed, warped, MindPattern::for_spacing(g.spacing));
  const auto [sid, gid2] = sid_gid(fixed, warped, 2.0);
  const auto gid4 = sid_gid(fixed, warped, 4.0).second;
  const auto mi10 = local_mi_at(fixed, warped, 10.0, MiBinning::Constant, locs);
  const auto mi15 = local_mi_at(fixed, warped, 15.0, MiBinning::Sturges, locs);
  const auto nc20 = nc_at(fixed, warped, 20.0, locs);
  const FeatureMap stdtl = std_dvf(etl, "stdTL");
  for (std::size_t r = 0; r < locs.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const Index3& p = locs[r];
    CHECK(x(row, 0) == doctest::Approx(avg_pool(stdt, 10.0).values.at(p)).epsilon(1e-12));
    CHECK(x(row, 1) == doctest::Approx(max_pool(biastl, 5.0).values.at(p)).epsilon(1e-12));
    CHECK(x(row, 2) == doctest::Approx(avg_pool(jac, 2.0).values.at(p)).epsilon(1e-12));
    CHECK(x(row, 3) == doctest::Approx(max_pool(cv, 15.0).values.at(p)).epsilon(1e-12));
    CHECK(x(row, 4) == doctest::Approx(avg_pool(mind, 5.0).values.at(p)).epsilon(1e-9));
    CHECK(x(row, 5) == doctest::Approx(mi10[r].first).epsilon(1e-12));
    CHECK(x(row, 6) == doctest::Approx(mi15[r].second).epsilon(1e-12));
    CHECK(x(row, 7) == doctest::Approx(nc20[r]).epsilon(1e-12));
    CHECK(x(row, 8) == doctest::Approx(sid.values.at(p)).epsilon(1e-12));
    CHECK(x(row, 9) == doctest::Approx(gid4.values.at(p)).epsilon(1e-12));
    CHECK(x(row, 10) == doctest::Approx(stdtl.values.at(p)).epsilon(1e-12));
  }
}

TEST_CASE("intensity columns need no ensembles, registration columns do") {
  const Geometry g(Index3(16, 16, 16), Point3::Constant(2.0));
  const Image fixed = generate_phantom(g.dims, g.spacing, 3);
  const Field tb(g);
  const auto samples = dense_from_truth(Image(g, 1.0), 5, "p");
  const SampleTable t = feature_table(fixed, fixed, tb, {}, {}, schema_columns("intensity"), samples);
  CHECK(t.columns.size() == 50);
  CHECK(t.rows() == samples.size());
  CHECK(t.x.allFinite());
  CHECK_THROWS_AS(feature_table(fixed, fixed, tb, {}, {}, schema_columns("registration"), samples), MissingInputError);
}

}  // TEST_SUITE

TEST_SUITE("table") {

namespace {

SampleTable make_table(int rows, std::uint64_t seed) {
  SampleTable t;
  t.columns = {"a", "b_avg2", "c"};
  t.x = Eigen::MatrixXd::Random(rows, 3) * 1e3;
  t.x(0, 0) = 1.0 / 3.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 9.0);
  for (int r = 0; r < rows; ++r) {
    Sample s;
    s.pair_id = r % 2 ? "pair_b" : "pair_a";
    s.index = Index3(r, 2 * r, 3);
    s.world = s.index.cast<double>();
    s.y = u(rng);
    s.cls = classify(s.y);
    t.samples.push_back(s);
  }
  return t;
}

void check_equal(const SampleTable& a, const SampleTable& b) {
  CHECK(a.columns == b.columns);
  CHECK(a.x == b.x);
  REQUIRE(a.rows() == b.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    CHECK(a.samples[r].pair_id == b.samples[r].pair_id);
    CHECK(a.samples[r].index == b.samples[r].index);
    CHECK(a.samples[r].y == b.samples[r].y);
    CHECK(a.samples[r].cls == b.samples[r].cls);
  }
}

}  // namespace

TEST_CASE("csv and binary tables round trip losslessly") {
  const auto dir = testutil::scratch_dir("tables");
  const SampleTable t = make_table(25, 1);
  write_table(t, dir / "t.csv");
  check_equal(t, read_table(dir / "t.csv"));
  write_table(t, dir / "t.bin");
  CHECK(std::filesystem::exists(dir / "t.bin.json"));
  check_equal(t, read_table(dir / "t.bin"));
  CHECK_THROWS_AS(read_table(dir / "absent.csv"), MissingFileError);
}

TEST_CASE("csv header layout") {
  const auto dir = testutil::scratch_dir("table_header");
  write_table_csv(make_table(2, 2), dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "pair_id,i,j,k,a,b_avg2,c,y,class");
}

TEST_CASE("column selection, appending and row subsets") {
  const SampleTable t = make_table(10, 3);
  const std::vector<std::string> want = {"c", "a"};
  const SampleTable s = t.select(want);
  CHECK(s.columns == want);
  CHECK(s.x.col(0) == t.x.col(2));
  const std::vector<std::string> missing = {"a", "zz"};
  CHECK_THROWS_WITH_AS(t.select(missing), doctest::Contains("zz"), SchemaError);

  SampleTable acc;
  acc.append(t);
  acc.append(make_table(4, 4));
  CHECK(acc.rows() == 14);
  SampleTable other = make_table(3, 5);
  other.columns[1] = "different";
  CHECK_THROWS(acc.append(other));
  CHECK(t.pair_ids() == std::vector<std::string>{"pair_a", "pair_b"});
  const SampleTable sub = t.rows_where({1, 3});
  CHECK(sub.rows() == 2);
  CHECK(sub.x.row(1) == t.x.row(3));
  CHECK(t.targets()[4] == t.samples[4].y);
}

}  // TEST_SUITE

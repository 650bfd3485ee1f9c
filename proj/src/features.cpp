#include "regmap/features.hpp"

#include "regmap/pooling.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace regmap {
namespace {

const char* const kPooledMothers[] = {"mind", "stdT", "stdTL", "cvh", "biasT", "biasTL", "jac"};

bool is_pooled_mother(const std::string& m) {
  for (const char* p : kPooledMothers)
    if (m == p) return true;
  return false;
}

bool is_registration_mother(const std::string& m) { return is_pooled_mother(m) && m != "mind"; }

void append(std::vector<std::string>& out, const std::vector<std::string>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

std::vector<std::string> local_columns(const char* prefix) {
  std::vector<std::string> out;
  for (double b : kLocalBoxesMm) out.push_back(prefix + format_size(b));
  return out;
}

std::vector<std::string> sigma_columns(const char* prefix) {
  std::vector<std::string> out;
  for (double s : kSigmasMm) out.push_back(prefix + format_size(s));
  return out;
}

std::vector<std::string> mi_columns() {
  std::vector<std::string> out;
  for (const char* p : {"nmi", "nmis", "pmi", "pmis"}) append(out, local_columns(p));
  return out;
}

bool parse_size(std::string_view s, double& v) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && v > 0.0;
}

}  // namespace

std::string format_size(double mm) {
  std::ostringstream s;
  s << mm;
  return s.str();
}

std::vector<std::string> pooled_columns(const std::string& mother) {
  std::vector<std::string> out;
  for (double b : kPoolBoxesMm) out.push_back(mother + "_avg" + format_size(b));
  for (double b : kPoolBoxesMm) out.push_back(mother + "_max" + format_size(b));
  return out;
}

std::vector<std::string> schema_columns(const std::string& schema) {
  std::vector<std::string> out;
  auto intensity = [&] {
    append(out, pooled_columns("mind"));
    append(out, mi_columns());
  };
  auto registration = [&] {
    for (const char* m : {"stdT", "stdTL", "cvh", "biasT", "biasTL", "jac"}) append(out, pooled_columns(m));
  };
  if (schema == "intensity") {
    intensity();
  } else if (schema == "registration") {
    registration();
  } else if (schema == "combined") {
    intensity();
    registration();
  } else if (schema == "combined+md") {
    intensity();
    registration();
    append(out, local_columns("nc"));
    append(out, sigma_columns("sid"));
    append(out, sigma_columns("gid"));
  } else if (schema == "no-pooling") {
    out = {"mind", "pmis15", "stdT", "stdTL", "cvh", "biasT", "biasTL", "jac"};
  } else if (schema.starts_with("single:")) {
    const std::string m = schema.substr(7);
    if (is_pooled_mother(m))
      out = pooled_columns(m);
    else if (m == "mi")
      out = mi_columns();
    else if (m == "nc")
      out = local_columns("nc");
    else if (m == "sid")
      out = sigma_columns("sid");
    else if (m == "gid")
      out = sigma_columns("gid");
    else
      throw SchemaError("unknown feature '" + m + "' in schema '" + schema + "'");
  } else {
    throw SchemaError("unknown schema '" + schema + "'");
  }
  return out;
}

ColumnSpec parse_column(const std::string& name) {
  using K = ColumnSpec::Kind;
  ColumnSpec c;
  for (auto [tag, kind] : {std::pair{"_avg", K::AvgPool}, std::pair{"_max", K::MaxPool}}) {
    const auto at = name.rfind(tag);
    if (at == std::string::npos) continue;
    c.mother = name.substr(0, at);
    if (is_pooled_mother(c.mother) && parse_size(std::string_view(name).substr(at + 4), c.size)) {
      c.kind = kind;
      return c;
    }
  }
  if (is_pooled_mother(name)) {
    c.mother = name;
    return c;
  }
  // Longest prefixes first so "nmis" is not read as "nmi" + "s...".
  for (auto [prefix, kind] : {std::pair{"nmis", K::Nmis}, std::pair{"pmis", K::Pmis}, std::pair{"nmi", K::Nmi},
                              std::pair{"pmi", K::Pmi}, std::pair{"nc", K::Nc}, std::pair{"sid", K::Sid},
                              std::pair{"gid", K::Gid}}) {
    const std::string_view p(prefix);
    if (name.starts_with(p) && parse_size(std::string_view(name).substr(p.size()), c.size)) {
      c.kind = kind;
      return c;
    }
  }
  throw SchemaError("unknown feature column '" + name + "'");
}

bool needs_ensembles(std::span<const std::string> columns) {
  for (const auto& name : columns) {
    const ColumnSpec c = parse_column(name);
    if (is_registration_mother(c.mother)) return true;
  }
  return false;
}

FeatureExtractor::FeatureExtractor(PairInputs in, ExtractOptions opt) : in_(in), opt_(opt) {
  if (in_.fixed == nullptr || in_.warped == nullptr) throw MissingInputError("features: fixed and warped images required");
  require_same_geometry(in_.fixed->geometry(), in_.warped->geometry(), "features");
}

const Image& FeatureExtractor::mother(const std::string& name) {
  if (auto it = mothers_.find(name); it != mothers_.end()) return it->second;
  const Image& fixed = *in_.fixed;
  auto need_ens = [&](std::span<const Field> e, const char* what) {
    if (e.size() < 2) throw MissingInputError(std::string("features: ") + what + " ensemble required for " + name);
    for (const auto& f : e) require_same_geometry(fixed.geometry(), f.geometry(), "features");
  };
  auto need_base = [&] {
    if (in_.t_b == nullptr) throw MissingInputError("features: base transform required for " + name);
    require_same_geometry(fixed.geometry(), in_.t_b->geometry(), "features");
  };
  FeatureMap m;
  if (name == "mind") {
    m = mind_distance(fixed, *in_.warped, MindPattern::for_spacing(fixed.spacing()));
  } else if (name == "stdT") {
    need_ens(in_.ensemble_t, "initial-perturbation");
    m = std_dvf(in_.ensemble_t, "stdT");
  } else if (name == "stdTL") {
    need_ens(in_.ensemble_tl, "base-perturbation");
    m = std_dvf(in_.ensemble_tl, "stdTL");
  } else if (name == "biasT") {
    need_base();
    need_ens(in_.ensemble_t, "initial-perturbation");
    m = bias_map(*in_.t_b, in_.ensemble_t, "biasT");
  } else if (name == "biasTL") {
    need_base();
    need_ens(in_.ensemble_tl, "base-perturbation");
    m = bias_map(*in_.t_b, in_.ensemble_tl, "biasTL");
  } else if (name == "cvh") {
    if (in_.warped_t.size() < 2) throw MissingInputError("features: warped ensemble required for cvh");
    m = cvh(fixed, in_.warped_t, *in_.warped, opt_.cvh);
  } else if (name == "jac") {
    need_base();
    m = jacobian_det(*in_.t_b, "jac");
  } else {
    throw SchemaError("features: no mother map named '" + name + "'");
  }
  return mothers_.emplace(name, std::move(m.values)).first->second;
}

void FeatureExtractor::fill_local(const ColumnSpec& spec, std::span<const Index3> locations,
                                  Eigen::Ref<Eigen::VectorXd> out) {
  using K = ColumnSpec::Kind;
  const Image& f = *in_.fixed;
  const Image& w = *in_.warped;
  const std::string size = format_size(spec.size);
  auto cached = [&](const std::string& key) -> const std::vector<double>* {
    auto it = local_cache_.find(key);
    return it == local_cache_.end() ? nullptr : &it->second;
  };
  switch (spec.kind) {
    case K::Nmi:
    case K::Pmi:
    case K::Nmis:
    case K::Pmis: {
      const bool sturges = spec.kind == K::Nmis || spec.kind == K::Pmis;
      const std::string nk = (sturges ? "nmis" : "nmi") + size;
      const std::string pk = (sturges ? "pmis" : "pmi") + size;
      if (!cached(nk)) {
        const auto mi = local_mi_at(f, w, spec.size, sturges ? MiBinning::Sturges : MiBinning::Constant, locations,
                                    opt_.mi_bins);
        std::vector<double> nmi(mi.size()), pmi(mi.size());
        for (std::size_t r = 0; r < mi.size(); ++r) {
          nmi[r] = mi[r].first;
          pmi[r] = mi[r].second;
        }
        local_cache_[nk] = std::move(nmi);
        local_cache_[pk] = std::move(pmi);
      }
      const auto& v = *cached(spec.kind == K::Nmi || spec.kind == K::Nmis ? nk : pk);
      out = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      return;
    }
    case K::Nc: {
      const auto v = nc_at(f, w, spec.size, locations);
      out = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      return;
    }
    case K::Sid:
    case K::Gid: {
      const std::string sk = "sid" + size, gk = "gid" + size;
      if (!mothers_.contains(sk)) {
        auto [sid, gid] = sid_gid(f, w, spec.size);
        mothers_.emplace(sk, std::move(sid.values));
        mothers_.emplace(gk, std::move(gid.values));
      }
      const Image& m = mothers_.at(spec.kind == K::Sid ? sk : gk);
      for (std::size_t r = 0; r < locations.size(); ++r) out[r] = m(locations[r].x(), locations[r].y(), locations[r].z());
      return;
    }
    default:
      throw SchemaError("features: not a local column");
  }
}

Eigen::MatrixXd FeatureExtractor::extract(std::span<const std::string> columns, std::span<const Index3> locations) {
  using K = ColumnSpec::Kind;
  const Geometry& g = in_.fixed->geometry();
  for (const auto& p : locations)
    if (!g.contains_index(p)) throw std::out_of_range("features: location outside the fixed image");
  local_cache_.clear();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(locations.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const ColumnSpec spec = parse_column(columns[c]);
    auto col = x.col(static_cast<Eigen::Index>(c));
    if (spec.kind == K::Plain || spec.kind == K::AvgPool || spec.kind == K::MaxPool) {
      const Image& base = mother(spec.mother);
      Image pooled;
      const Image* src = &base;
      if (spec.kind != K::Plain) {
        const FeatureMap fm{spec.mother, base, ""};
        pooled = (spec.kind == K::AvgPool ? avg_pool(fm, spec.size) : max_pool(fm, spec.size)).values;
        src = &pooled;
      }
      for (std::size_t r = 0; r < locations.size(); ++r)
        col[static_cast<Eigen::Index>(r)] = (*src)(locations[r].x(), locations[r].y(), locations[r].z());
    } else {
      fill_local(spec, locations, col);
    }
  }
  return x;
}

}  // namespace regmap

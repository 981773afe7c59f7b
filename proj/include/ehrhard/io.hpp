#pragma once

// File formats and textual specs: EHGF density grids, EHIS indicator sets,
// density JSON, the set-spec mini language, and JSON views of results.

#include "ehrhard/analysis.hpp"
#include "ehrhard/flow.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ehrhard {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Binary helpers (little-endian on disk)

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  require(static_cast<std::size_t>(is.gcount()) == sizeof(T), ErrorCode::io_error, "unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void expect_magic(std::istream& is, const char* magic) {
  char got[4] = {0, 0, 0, 0};
  is.read(got, 4);
  require(is.gcount() == 4 && std::memcmp(got, magic, 4) == 0, ErrorCode::io_error,
          std::string("missing ") + magic + " magic bytes");
}

inline std::vector<int> read_dims(std::istream& is, std::uint32_t n) {
  require(n >= 1 && n <= static_cast<std::uint32_t>(kMaxGridDim), ErrorCode::io_error, "dimension must be 1 to 3");
  std::vector<int> dims(n);
  for (auto& d : dims) {
    const auto v = get_le<std::uint32_t>(is);
    require(v >= 1 && v <= (1u << 24), ErrorCode::io_error, "implausible grid size");
    d = static_cast<int>(v);
  }
  return dims;
}

inline Box read_box(std::istream& is, int n) {
  Box b;
  b.lo.resize(n);
  b.hi.resize(n);
  for (int i = 0; i < n; ++i) {
    b.lo[i] = get_le<double>(is);
    b.hi[i] = get_le<double>(is);
  }
  return b;
}

inline void write_box(std::ostream& os, const Box& b) {
  for (int i = 0; i < b.dim(); ++i) {
    put_le(os, b.lo[i]);
    put_le(os, b.hi[i]);
  }
}

}  // namespace detail

inline constexpr std::uint32_t kFormatVersion = 1;

/// EHGF: "EHGF", u32 version, u32 n, u32 dims[n], f64 (lo_i, hi_i) per axis,
/// then row-major f64 node samples.
inline void write_ehgf(std::ostream& os, const GridField& f) {
  f.validate();
  os.write("EHGF", 4);
  detail::put_le<std::uint32_t>(os, kFormatVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.dim()));
  for (int d : f.dims) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  detail::write_box(os, f.box);
  for (double s : f.samples) detail::put_le(os, s);
}

inline GridField read_ehgf(std::istream& is) {
  detail::expect_magic(is, "EHGF");
  require(detail::get_le<std::uint32_t>(is) == kFormatVersion, ErrorCode::io_error, "unsupported EHGF version");
  const auto n = detail::get_le<std::uint32_t>(is);
  GridField f;
  f.dims = detail::read_dims(is, n);
  f.box = detail::read_box(is, static_cast<int>(n));
  std::size_t count = 1;
  for (int d : f.dims) count *= static_cast<std::size_t>(d);
  f.samples.resize(count);
  for (auto& s : f.samples) s = detail::get_le<double>(is);
  f.validate();
  return f;
}

/// EHIS: "EHIS", u32 version, u32 n, u32 dims[n], f64 (lo_i, hi_i) per axis,
/// u32 subcell, u32 tail kind, f64 tail v[n], f64 tail r, then row-major f64
/// occupancies.
inline void write_ehis(std::ostream& os, const IndicatorSet& E) {
  const auto& g = E.geometry();
  const int n = g.dim();
  os.write("EHIS", 4);
  detail::put_le<std::uint32_t>(os, kFormatVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(n));
  for (int d : g.dims()) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  detail::write_box(os, g.box());
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(E.subcell()));
  const auto& t = E.tail();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.kind));
  for (int i = 0; i < n; ++i) detail::put_le(os, t.v.empty() ? 0.0 : t.v[i]);
  detail::put_le(os, t.r);
  for (double o : E.occupancy()) detail::put_le(os, o);
}

inline IndicatorSet read_ehis(std::istream& is) {
  detail::expect_magic(is, "EHIS");
  require(detail::get_le<std::uint32_t>(is) == kFormatVersion, ErrorCode::io_error, "unsupported EHIS version");
  const auto n = detail::get_le<std::uint32_t>(is);
  auto dims = detail::read_dims(is, n);
  auto box = detail::read_box(is, static_cast<int>(n));
  GridGeometry g(std::move(box), std::move(dims));
  const auto subcell = detail::get_le<std::uint32_t>(is);
  const auto kind = detail::get_le<std::uint32_t>(is);
  require(kind <= 2, ErrorCode::io_error, "unknown tail convention");
  std::vector<double> v(n);
  for (auto& x : v) x = detail::get_le<double>(is);
  const double r = detail::get_le<double>(is);
  TailConvention tail;
  if (kind == 1) tail = TailConvention::full();
  if (kind == 2) tail = TailConvention::halfspace(v, r);
  std::vector<double> occ(g.size());
  for (auto& o : occ) o = detail::get_le<double>(is);
  return IndicatorSet(std::move(g), std::move(occ), static_cast<int>(subcell), std::move(tail));
}

inline void save_ehis(const std::string& path, const IndicatorSet& E) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::io_error, "cannot write " + path);
  write_ehis(os, E);
}

inline IndicatorSet load_ehis(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::io_error, "cannot read " + path);
  return read_ehis(is);
}

inline void save_ehgf(const std::string& path, const GridField& f) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::io_error, "cannot write " + path);
  write_ehgf(os, f);
}

inline GridField load_ehgf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::io_error, "cannot read " + path);
  return read_ehgf(is);
}

// ---------------------------------------------------------------------------
// Density JSON: {kind, dim, params, box: {lo, hi}, tail_tol}

namespace detail {

inline std::vector<double> json_vector(const json& j, const char* key, std::vector<double> fallback = {}) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<std::vector<double>>();
}

inline Density1D density1d_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "gaussian") {
    if (!j.contains("c") && !j.contains("scale") && !j.contains("mean")) return Density1D::standard_gaussian();
    const double c = j.value("c", 0.5);
    return Density1D(Gaussian1D{j.value("mean", 0.0), c, j.value("scale", std::sqrt(c / std::numbers::pi))});
  }
  if (type == "logistic") return Density1D::logistic(j.value("s", 1.0), j.value("location", 0.0));
  if (type == "exponential") return Density1D(Exponential1D{j.value("rate", 1.0)});
  if (type == "bimodal") return Density1D(Bimodal1D{j.value("d", 3.0), j.value("w", 0.1)});
  if (type == "uniform") return Density1D(Uniform1D{j.value("lo", 0.0), j.value("hi", 1.0), j.value("height", 1.0)});
  if (type == "mixture") {
    Mixture1D m;
    for (const auto& p : j.at("parts")) {
      const double c = p.value("c", 0.5);
      m.parts.push_back(Gaussian1D{p.value("mean", 0.0), c, p.value("scale", std::sqrt(c / std::numbers::pi))});
    }
    return Density1D(m);
  }
  fail(ErrorCode::invalid_input, "unknown 1D density type '" + type + "'");
}

inline json density1d_to_json(const Density1D& f) {
  return std::visit(
      [](const auto& k) -> json {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Gaussian1D>)
          return {{"type", "gaussian"}, {"mean", k.mean}, {"c", k.c}, {"scale", k.scale}};
        else if constexpr (std::is_same_v<K, Logistic1D>)
          return {{"type", "logistic"}, {"location", k.location}, {"s", k.s}};
        else if constexpr (std::is_same_v<K, Exponential1D>)
          return {{"type", "exponential"}, {"rate", k.rate}};
        else if constexpr (std::is_same_v<K, Bimodal1D>)
          return {{"type", "bimodal"}, {"d", k.d}, {"w", k.w}};
        else if constexpr (std::is_same_v<K, Mixture1D>) {
          json parts = json::array();
          for (const auto& g : k.parts) parts.push_back({{"mean", g.mean}, {"c", g.c}, {"scale", g.scale}});
          return {{"type", "mixture"}, {"parts", parts}};
        } else
          return {{"type", "uniform"}, {"lo", k.lo}, {"hi", k.hi}, {"height", k.height}};
      },
      f.kind());
}

inline Box box_from_json(const json& j) {
  Box b{j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>()};
  require(b.lo.size() == b.hi.size() && !b.lo.empty(), ErrorCode::invalid_input, "box needs lo and hi of equal length");
  return b;
}

inline json box_to_json(const Box& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

}  // namespace detail

/// Builds a density from its JSON description. `base_dir` resolves relative
/// EHGF paths of grid_sampled densities.
inline WeightedDensity density_from_json(const json& j, const std::string& base_dir = "") {
  require(j.is_object(), ErrorCode::invalid_input, "density spec must be a JSON object");
  require(j.contains("kind"), ErrorCode::invalid_input, "density spec needs a kind");
  const auto kind = j.at("kind").get<std::string>();
  const json params = j.value("params", json::object());
  DensityOptions opts;
  opts.tail_tol = j.value("tail_tol", 1e-9);
  if (j.contains("box")) opts.box = detail::box_from_json(j.at("box"));
  const int dim = j.value("dim", 0);
  const auto need_dim = [&] {
    require(dim >= 1, ErrorCode::invalid_input, "density spec needs dim >= 1");
    return dim;
  };
  std::optional<double> C;
  if (params.contains("C")) C = params.at("C").get<double>();

  if (kind == "standard_gaussian") return WeightedDensity::standard_gaussian(need_dim(), opts);
  if (kind == "isotropic_gaussian")
    return WeightedDensity::isotropic_gaussian(need_dim(), params.value("c", 0.5), detail::json_vector(params, "a"), C,
                                               opts);
  if (kind == "anisotropic_gaussian") {
    auto c = detail::json_vector(params, "c");
    require(dim == 0 || static_cast<int>(c.size()) == dim, ErrorCode::invalid_input, "c must have dim entries");
    return WeightedDensity::anisotropic_gaussian(std::move(c), detail::json_vector(params, "a"), C, opts);
  }
  if (kind == "product_1d") {
    std::vector<Density1D> factors;
    for (const auto& f : params.at("factors")) factors.push_back(detail::density1d_from_json(f));
    return WeightedDensity::product(std::move(factors), opts);
  }
  if (kind == "logistic_product" || kind == "logistic") {
    auto scales = detail::json_vector(params, "scales");
    if (scales.empty()) scales.assign(need_dim(), params.value("s", 1.0));
    return WeightedDensity::logistic_product(std::move(scales), opts);
  }
  if (kind == "grid_sampled") {
    auto path = params.at("file").get<std::string>();
    if (!path.empty() && path[0] != '/' && !base_dir.empty()) path = base_dir + "/" + path;
    return WeightedDensity::grid_sampled(load_ehgf(path), params.value("declared_tail", 0.0), opts.tail_tol);
  }
  if (kind == "perturbed") {
    const auto base = density_from_json(params.at("base"), base_dir);
    const auto& b = params.at("bump");
    return WeightedDensity::perturbed(base, Bump{detail::json_vector(b, "center"), b.value("width", 1.0),
                                                 b.value("amplitude", 0.0)});
  }
  if (kind == "regularized")
    return WeightedDensity::regularized(density_from_json(params.at("base"), base_dir), params.value("index", 1.0));
  if (kind == "zero" || kind == "uniform") {
    require(opts.box.has_value(), ErrorCode::invalid_input, kind + " density needs a box");
    return kind == "zero" ? WeightedDensity::zero(*opts.box) : WeightedDensity::uniform(*opts.box);
  }
  fail(ErrorCode::invalid_input, "unknown density kind '" + kind + "'");
}

inline WeightedDensity load_density(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::io_error, "cannot read " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_input, "density spec is not valid JSON: " + std::string(e.what()));
  }
  const auto slash = path.find_last_of('/');
  return density_from_json(j, slash == std::string::npos ? "" : path.substr(0, slash));
}

/// Resolved description of a density, including its truncation box.
inline json density_to_json(const WeightedDensity& w) {
  json j{{"kind", w.name()}, {"dim", w.dim()}, {"box", detail::box_to_json(w.box())}, {"tail_tol", w.tail_tol()}};
  json params = json::object();
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, IsotropicGaussian>) {
          params = {{"C", k.C}, {"c", k.c}, {"a", k.a}};
        } else if constexpr (std::is_same_v<K, AnisotropicGaussian>) {
          params = {{"C", k.C}, {"c", k.c}, {"a", k.a}};
        } else if constexpr (std::is_same_v<K, ProductDensity>) {
          json f = json::array();
          for (const auto& d : k.factors) f.push_back(detail::density1d_to_json(d));
          params = {{"factors", f}};
        } else if constexpr (std::is_same_v<K, LogisticProduct>) {
          params = {{"scales", k.scales}};
        } else if constexpr (std::is_same_v<K, GridSampled>) {
          params = {{"dims", k.field->dims}, {"declared_tail", w.tail_bound()}};
        } else if constexpr (std::is_same_v<K, Perturbed>) {
          params = {{"base", density_to_json(*k.base)},
                    {"bump", {{"center", k.bump.center}, {"width", k.bump.width}, {"amplitude", k.bump.amplitude}}}};
        } else if constexpr (std::is_same_v<K, Regularized>) {
          params = {{"base", density_to_json(*k.base)}, {"index", k.index}};
        }
      },
      w.kind());
  j["params"] = params;
  return j;
}

/// The one-dimensional density behind a 1D weight.
inline Density1D as_density1d(const WeightedDensity& w) {
  require(w.dim() == 1, ErrorCode::invalid_input, "expected a one-dimensional density");
  auto f = w.separable_factors();
  require(f.has_value(), ErrorCode::unsupported, "1D tests need a closed-form density");
  return (*f)[0];
}

// ---------------------------------------------------------------------------
// Set specs
//
//   spec   := term (op term)*        op: '|' union, '&' intersection, '/' difference
//   term   := halfspace:VEC:R | halfmass:VEC:M | ball:VEC:R | box:VEC:VEC
//           | strip:VEC:A:B | full | empty
//   VEC    := e1 | -e2 | x,y[,z]      (normalized where a direction is meant)
//
// halfmass:VEC:M is the largest half-space H(v, r) with mu(H) = M.

namespace detail {

inline double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), ErrorCode::invalid_input, "bad number '" + s + "' in set spec");
  return v;
}

inline std::vector<double> parse_vector(const std::string& s, int n) {
  std::string t = s;
  double sign = 1.0;
  if (!t.empty() && (t[0] == '-' || t[0] == '+') && t.size() > 1 && t[1] == 'e') {
    sign = t[0] == '-' ? -1.0 : 1.0;
    t = t.substr(1);
  }
  if (t.size() >= 2 && t[0] == 'e' && std::isdigit(static_cast<unsigned char>(t[1]))) {
    const int k = static_cast<int>(parse_number(t.substr(1)));
    require(k >= 1 && k <= n, ErrorCode::invalid_input, "axis '" + s + "' out of range");
    std::vector<double> v(n, 0.0);
    v[k - 1] = sign;
    return v;
  }
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_number(item));
  require(static_cast<int>(v.size()) == n, ErrorCode::invalid_input, "vector '" + s + "' needs " + std::to_string(n) + " entries");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Region parse_term(const std::string& term, const WeightedDensity& w) {
  const int n = w.dim();
  const auto parts = split(term, ':');
  const auto& head = parts[0];
  const auto arity = [&](std::size_t k) {
    require(parts.size() == k + 1, ErrorCode::invalid_input, "'" + head + "' takes " + std::to_string(k) + " arguments");
  };
  if (head == "full") {
    arity(0);
    return Region::full();
  }
  if (head == "empty") {
    arity(0);
    return Region::empty();
  }
  if (head == "halfspace") {
    arity(2);
    return Region::half_space(normalized(parse_vector(parts[1], n)), parse_number(parts[2]));
  }
  if (head == "halfmass") {
    arity(2);
    const auto H = half_space_with_mass(w, normalized(parse_vector(parts[1], n)), parse_number(parts[2]));
    if (H.r == -kInf) return Region::full();
    if (H.r == kInf) return Region::empty();
    return Region::half_space(H.v, H.r);
  }
  if (head == "ball") {
    arity(2);
    return Region::ball(parse_vector(parts[1], n), parse_number(parts[2]));
  }
  if (head == "box") {
    arity(2);
    return Region::box(parse_vector(parts[1], n), parse_vector(parts[2], n));
  }
  if (head == "strip") {
    arity(3);
    return Region::strip(parse_vector(parts[1], n), parse_number(parts[2]), parse_number(parts[3]));
  }
  fail(ErrorCode::invalid_input, "unknown set term '" + head + "'");
}

}  // namespace detail

inline Region parse_set_spec(const std::string& spec, const WeightedDensity& w) {
  require(!spec.empty(), ErrorCode::invalid_input, "empty set spec");
  std::optional<Region> acc;
  char op = '|';
  std::string cur;
  const auto flush = [&] {
    std::string t;
    for (char c : cur)
      if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    require(!t.empty(), ErrorCode::invalid_input, "empty term in set spec");
    const auto r = detail::parse_term(t, w);
    if (!acc)
      acc = r;
    else if (op == '|')
      acc = *acc | r;
    else if (op == '&')
      acc = *acc & r;
    else
      acc = *acc - r;
    cur.clear();
  };
  for (char c : spec) {
    if (c == '|' || c == '&' || c == '/') {
      flush();
      op = c;
    } else {
      cur += c;
    }
  }
  flush();
  return *acc;
}

// ---------------------------------------------------------------------------
// JSON views

inline json to_json(const PerimeterEstimate& p) {
  json j{{"value", p.value},
         {"method", to_string(p.method)},
         {"resolution", p.resolution},
         {"error_budget", p.error_budget}};
  if (p.facets) j["facets"] = p.facets;
  if (!p.radii.empty()) {
    j["radii"] = p.radii;
    j["quotients"] = p.quotients;
  }
  return j;
}

inline json to_json(const HalfSpace& H) {
  return {{"v", H.v}, {"r", std::isfinite(H.r) ? json(H.r) : json(H.r > 0 ? "inf" : "-inf")}};
}

inline json to_json(const PSReport& r) {
  return {{"symmetry",
           {{"verdict", r.symmetry.pass ? "PASS" : "FAIL"},
            {"median", r.symmetry.median},
            {"worst_t", r.symmetry.worst_t},
            {"worst_deviation", r.symmetry.worst_deviation},
            {"tolerance", r.symmetry.tolerance}}},
          {"subadditivity",
           {{"verdict", r.subadditivity.pass ? "PASS" : "FAIL"},
            {"grid", r.subadditivity.grid},
            {"pairs", r.subadditivity.pairs},
            {"violations", r.subadditivity.violations},
            {"worst_p", r.subadditivity.worst_p},
            {"worst_q", r.subadditivity.worst_q},
            {"worst_excess", r.subadditivity.worst_excess},
            {"tolerance", r.subadditivity.tolerance}}}};
}

inline json to_json(const ProductReport& r) {
  return {{"verdict", to_string(r.verdict)}, {"max_dispersion", r.max_dispersion},
          {"threshold", r.threshold},        {"roundtrip_error", r.roundtrip_error},
          {"levels", r.levels},              {"K", r.K},
          {"dispersion", r.dispersion},      {"B", r.B}};
}

inline json to_json(const QuadraticFit& f) {
  return {{"c", f.c},
          {"fit_residual", f.fit_residual},
          {"recursion_residual", f.recursion_residual},
          {"scaling_residual", f.scaling_residual},
          {"tolerance", f.tolerance},
          {"accepted", f.accepted},
          {"alpha", f.alpha},
          {"g", f.g}};
}

inline json to_json(const ViolationRecord& r) {
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"resolution", c.resolution},
                      {"method", to_string(c.method)},
                      {"per_E", c.per_E},
                      {"per_S", c.per_S},
                      {"margin", c.margin},
                      {"budget", c.budget},
                      {"passed", c.passed}});
  json params = json::object();
  const auto names = family_parameter_names(r.family);
  for (std::size_t i = 0; i < r.params.size(); ++i) params[names[i]] = r.params[i];
  return {{"family", to_string(r.family)}, {"params", params},     {"v", r.v},
          {"per_E", r.per_E},              {"per_S", r.per_S},     {"margin", r.margin},
          {"budget", r.budget},            {"resolution", r.resolution},
          {"certified", r.certified},      {"checks", checks}};
}

inline json to_json(const FlowTrace& t) {
  return {{"status", to_string(t.status)},
          {"target", to_json(t.target)},
          {"steps", t.steps.size()},
          {"initial_symm_diff", t.initial_symm_diff},
          {"final_symm_diff", t.steps.empty() ? t.initial_symm_diff : t.steps.back().symm_diff},
          {"target_symm_diff", t.target_symm_diff},
          {"initial_perimeter", t.initial_perimeter},
          {"final_perimeter", t.steps.empty() ? t.initial_perimeter : t.steps.back().perimeter},
          {"mass_tol", t.mass_tol},
          {"worst_fiber_increase", t.worst_fiber_increase()},
          {"worst_grid_increase", t.worst_grid_increase()}};
}

}  // namespace ehrhard

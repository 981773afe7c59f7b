// Experiment runner: one subcommand per operation, JSON reports, CSV traces.

#include "ehrhard/ehrhard.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>

using namespace ehrhard;
namespace fs = std::filesystem;

namespace {

struct Config {
  std::string config_path;
  std::string density;
  std::string set;
  std::string dir;
  int res = 256;
  int subcell = 4;
  int steps = 60;
  double eps = -1.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out = ".";
  std::string method = "both";
  int grid = 400;
  int directions = 16;
};

class Runner {
 public:
  Runner(std::string command, Config cfg) : command_(std::move(command)), cfg_(std::move(cfg)) {}

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    load_config_file();
    parallel::set_thread_count(cfg_.threads);
    require(!cfg_.density.empty(), ErrorCode::invalid_input, "missing density");
    w_ = cfg_.density.front() == '{' ? density_from_json(json::parse(cfg_.density)) : load_density(cfg_.density);
    fs::create_directories(cfg_.out);

    json result;
    int status = 0;
    if (command_ == "measure") result = measure();
    else if (command_ == "perimeter") result = perimeter();
    else if (command_ == "symmetrize") result = symmetrize_cmd();
    else if (command_ == "flow") result = flow();
    else if (command_ == "ps-test") result = ps_test();
    else if (command_ == "product-test") result = product_test();
    else if (command_ == "fit-quadratic") result = fit_quadratic();
    else if (command_ == "search") result = search(status);

    const json report{{"command", command_}, {"config", resolved_config()}, {"result", result}};
    write_file("report.json", report.dump(2) + "\n");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file("timing.json", json{{"command", command_}, {"seconds", secs}}.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return status;
  }

 private:
  void load_config_file() {
    if (cfg_.config_path.empty()) return;
    std::ifstream is(cfg_.config_path);
    require(static_cast<bool>(is), ErrorCode::io_error, "cannot read " + cfg_.config_path);
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      fail(ErrorCode::invalid_input, "config is not valid JSON: " + std::string(e.what()));
    }
    // command-line flags win over the file
    const auto take = [&](const char* key, auto& field, auto fallback) {
      if (j.contains(key) && field == fallback) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("density") && cfg_.density.empty()) {
      const auto& d = j.at("density");
      cfg_.density = d.is_string() ? d.get<std::string>() : d.dump();
      if (d.is_string() && fs::path(cfg_.density).is_relative())
        cfg_.density = (fs::path(cfg_.config_path).parent_path() / cfg_.density).string();
    }
    const Config def;
    take("set", cfg_.set, def.set);
    take("dir", cfg_.dir, def.dir);
    take("res", cfg_.res, def.res);
    take("subcell", cfg_.subcell, def.subcell);
    take("steps", cfg_.steps, def.steps);
    take("eps", cfg_.eps, def.eps);
    take("seed", cfg_.seed, def.seed);
    take("threads", cfg_.threads, def.threads);
    take("out", cfg_.out, def.out);
    take("method", cfg_.method, def.method);
    take("grid", cfg_.grid, def.grid);
    take("directions", cfg_.directions, def.directions);
  }

  json resolved_config() const {
    return {{"density", density_to_json((*w_))},
            {"density_source", cfg_.density},
            {"set", cfg_.set},
            {"dir", cfg_.dir},
            {"res", cfg_.res},
            {"subcell", cfg_.subcell},
            {"steps", cfg_.steps},
            {"eps", cfg_.eps},
            {"seed", cfg_.seed},
            {"threads", cfg_.threads},
            {"method", cfg_.method},
            {"grid", cfg_.grid},
            {"directions", cfg_.directions}};
  }

  void write_file(const std::string& name, const std::string& text) const {
    std::ofstream os(fs::path(cfg_.out) / name);
    require(static_cast<bool>(os), ErrorCode::io_error, "cannot write " + name);
    os << text;
  }

  std::vector<double> direction(std::vector<double> fallback = {}) const {
    if (cfg_.dir.empty()) {
      require(!fallback.empty(), ErrorCode::invalid_input, "missing direction (--dir)");
      return fallback;
    }
    auto v = detail::parse_vector(cfg_.dir, (*w_).dim());
    require(norm(v) > 0.0, ErrorCode::invalid_input, "direction must be nonzero");
    return normalized(v);
  }

  IndicatorSet load_set() const {
    require(!cfg_.set.empty(), ErrorCode::invalid_input, "missing set (--set)");
    if (cfg_.set.rfind("file:", 0) == 0) return load_ehis(cfg_.set.substr(5));
    return rasterize(parse_set_spec(cfg_.set, (*w_)), density_grid((*w_), cfg_.res), cfg_.subcell);
  }

  std::optional<HalfSpace> set_halfspace() const {
    if (cfg_.set.empty() || cfg_.set.rfind("file:", 0) == 0) return std::nullopt;
    return parse_set_spec(cfg_.set, (*w_)).as_halfspace();
  }

  json estimates(const IndicatorSet& E) const {
    json out = json::array();
    if (cfg_.method == "bv" || cfg_.method == "both") out.push_back(to_json(perimeter_bv((*w_), E)));
    if (cfg_.method == "minkowski" || cfg_.method == "both") {
      try {
        out.push_back(to_json(perimeter_minkowski((*w_), E)));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::nonconvergent) throw;
        out.push_back({{"method", "minkowski"}, {"error", e.what()}});
      }
    }
    require(!out.empty(), ErrorCode::invalid_input, "method must be bv, minkowski or both");
    return out;
  }

  json measure() const {
    const auto E = load_set();
    return {{"mu", mu_measure((*w_), E)}, {"total", (*w_).total()}, {"tail_mass", tail_mass((*w_), E)},
            {"tail", to_string(E.tail().kind)}};
  }

  json perimeter() const {
    const auto E = load_set();
    json r{{"mu", mu_measure((*w_), E)}, {"estimates", estimates(E)}};
    r["value"] = r["estimates"][0]["value"];
    r["error_budget"] = r["estimates"][0]["error_budget"];
    if (auto H = set_halfspace()) r["closed_form"] = to_json(perimeter_halfspace((*w_), *H));
    return r;
  }

  json symmetrize_cmd() const {
    const auto E = load_set();
    const auto v = direction();
    const auto res = symmetrize_detailed((*w_), E, v);
    save_ehis((fs::path(cfg_.out) / "symmetrized.ehis").string(), res.set);
    const auto pe = perimeter_bv((*w_), E), ps = perimeter_bv((*w_), res.set);
    return {{"v", v},
            {"mass_before", res.mass_before},
            {"mass_after", res.mass_after},
            {"axis_path", res.axis_path},
            {"per_E", to_json(pe)},
            {"per_S", to_json(ps)},
            {"margin", ps.value - pe.value},
            {"budget", pe.error_budget + ps.error_budget},
            {"output", "symmetrized.ehis"}};
  }

  json flow() const {
    const auto E = load_set();
    const auto v = direction();
    FlowOptions o;
    o.max_steps = cfg_.steps;
    o.eps = cfg_.eps;
    const auto tr = flow_to_halfspace((*w_), E, v, o);
    std::ostringstream csv;
    tr.write_csv(csv);
    write_file("trace.csv", csv.str());
    save_ehis((fs::path(cfg_.out) / "final.ehis").string(), tr.final_set);
    auto j = to_json(tr);
    j["trace"] = "trace.csv";
    return j;
  }

  json ps_test() const {
    const auto f = as_density1d((*w_));
    const auto r = ps_test_1d(f, cfg_.grid);
    auto j = to_json(r);
    j["density"] = detail::density1d_to_json(f);
    j["verdict"] = r.pass() ? "PASS" : "FAIL";
    return j;
  }

  json product_test() const {
    Frame fr = Frame::identity((*w_).dim());
    if (!cfg_.dir.empty()) {
      fr = Frame::along(direction());
    } else {
      std::mt19937_64 rng(cfg_.seed);
      fr = Frame::random((*w_).dim(), rng);
    }
    auto j = to_json(product_structure_test((*w_), fr, default_levels((*w_))));
    j["frame"] = fr.columns();
    return j;
  }

  json fit_quadratic() const {
    std::vector<double> e1((*w_).dim(), 0.0);
    e1[0] = 1.0;
    const auto u = direction(e1);
    auto j = to_json(log_profile_recursion_check(log_profile((*w_), u)));
    j["u"] = u;
    return j;
  }

  json search(int& status) const {
    SearchOptions o;
    o.resolution = cfg_.res;
    o.subcell = cfg_.subcell;
    o.directions = cfg_.directions;
    const auto rep = violation_search((*w_), o);
    json j{{"found", rep.found},
           {"verdict", rep.found ? "violation" : "none_found"},
           {"evaluations", rep.evaluations},
           {"candidates_certified", rep.candidates_certified}};
    if (rep.best) j["best"] = to_json(*rep.best);
    if (rep.found) {
      save_ehis((fs::path(cfg_.out) / "violation.ehis").string(), rep.best->set);
      j["set_file"] = "violation.ehis";
      status = 2;
    }
    return j;
  }

  std::string command_;
  Config cfg_;
  std::optional<WeightedDensity> w_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized Ehrhard symmetrization experiments"};
  app.require_subcommand(1);
  Config cfg;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"measure", "mu-measure of a set"},
      {"perimeter", "weighted perimeter estimates of a set"},
      {"symmetrize", "symmetrize a set along --dir and compare perimeters"},
      {"flow", "iterate symmetrizations toward the equal-mass half-space"},
      {"ps-test", "1D symmetry and I-subadditivity criteria"},
      {"product-test", "product-structure test in a frame"},
      {"fit-quadratic", "quadratic fit of the log profile along --dir"},
      {"search", "search parametric families for perimeter increases"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", cfg.config_path, "JSON config file; flags override it");
    sub->add_option("--density", cfg.density, "density JSON file (or inline JSON)");
    sub->add_option("--set", cfg.set, "set spec, e.g. halfspace:e1:0 or file:set.ehis");
    sub->add_option("--dir", cfg.dir, "direction, e.g. 0.6,0.8 or -e2");
    sub->add_option("--res", cfg.res, "grid resolution along the longest axis")->check(CLI::Range(4, 8192));
    sub->add_option("--subcell", cfg.subcell, "rasterization samples per voxel axis")->check(CLI::Range(1, 255));
    sub->add_option("--steps", cfg.steps, "flow step budget")->check(CLI::Range(1, 100000));
    sub->add_option("--eps", cfg.eps, "flow density threshold (negative: automatic)");
    sub->add_option("--seed", cfg.seed, "seed for random frames");
    sub->add_option("--threads", cfg.threads, "worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--method", cfg.method, "perimeter estimator: bv, minkowski or both");
    sub->add_option("--grid", cfg.grid, "(p,q) grid size for ps-test")->check(CLI::Range(2, 100000));
    sub->add_option("--directions", cfg.directions, "search direction grid size")->check(CLI::Range(1, 4096));
  }
  CLI11_PARSE(app, argc, argv);

  const auto* sub = app.get_subcommands().front();
  try {
    return Runner(sub->get_name(), cfg).run();
  } catch (const Error& e) {
    std::cout << json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cout << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump(2) << "\n";
  }
  return 1;
}

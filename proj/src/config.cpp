#include "thermo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "scenarios_data.hpp"

namespace thermo {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

class Reader {
 public:
  Reader(const std::string& text, std::string source) : source_(std::move(source)) {
    static const std::set<std::string> known{"run", "grid", "material", "heating", "initial", "forcing"};
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
      ++line;
      const auto hash = raw.find('#');
      const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail(line, "unterminated section header");
        section = trim(s.substr(1, s.size() - 2));
        if (!known.count(section)) fail(line, "unknown section [" + section + "]");
        if (seen_.count(section)) fail(line, "duplicate section [" + section + "]");
        seen_.insert(section);
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(line, "expected key = value");
      if (section.empty()) fail(line, "key outside of any section");
      const std::string key = trim(s.substr(0, eq));
      const std::string val = trim(s.substr(eq + 1));
      if (key.empty()) fail(line, "empty key");
      if (val.empty()) fail(line, "empty value for '" + key + "'");
      auto& sec = sections_[section];
      if (sec.count(key)) fail(line, "duplicate key '" + key + "'");
      sec[key] = Entry{val, line, false};
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }
  [[noreturn]] void fail_key(const Entry& e, const std::string& key, const std::string& msg) const {
    fail(e.line, "'" + key + "': " + msg);
  }

  Entry* find(const std::string& sec, const std::string& key) {
    auto s = sections_.find(sec);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }

  double to_double(const Entry& e, const std::string& key, const std::string& text) const {
    double v = 0.0;
    const char* b = text.data();
    const char* end = b + text.size();
    if (b != end && *b == '+') ++b;
    const auto r = std::from_chars(b, end, v);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
      fail_key(e, key, "not a finite number: '" + text + "'");
    return v;
  }

  bool number(const std::string& sec, const std::string& key, double& out) {
    Entry* e = find(sec, key);
    if (!e) return false;
    out = to_double(*e, key, e->value);
    return true;
  }

  bool integer(const std::string& sec, const std::string& key, int& out) {
    Entry* e = find(sec, key);
    if (!e) return false;
    const auto r = std::from_chars(e->value.data(), e->value.data() + e->value.size(), out);
    if (r.ec != std::errc() || r.ptr != e->value.data() + e->value.size())
      fail_key(*e, key, "not an integer: '" + e->value + "'");
    return true;
  }

  bool boolean(const std::string& sec, const std::string& key, bool& out) {
    Entry* e = find(sec, key);
    if (!e) return false;
    if (e->value == "true" || e->value == "on" || e->value == "yes")
      out = true;
    else if (e->value == "false" || e->value == "off" || e->value == "no")
      out = false;
    else
      fail_key(*e, key, "expected true or false");
    return true;
  }

  bool text(const std::string& sec, const std::string& key, std::string& out) {
    Entry* e = find(sec, key);
    if (!e) return false;
    out = e->value;
    return true;
  }

  std::vector<double> numbers(const Entry& e, const std::string& key) const {
    std::vector<double> out;
    for (const auto& w : words(e.value)) out.push_back(to_double(e, key, w));
    return out;
  }

  bool vector2(const std::string& sec, const std::string& key, std::array<double, 2>& out, int need) {
    Entry* e = find(sec, key);
    if (!e) return false;
    const auto v = numbers(*e, key);
    if (static_cast<int>(v.size()) != need) fail_key(*e, key, "expected " + std::to_string(need) + " numbers");
    for (int k = 0; k < need; ++k) out[k] = v[k];
    return true;
  }

  std::vector<std::pair<double, double>> breakpoints(const Entry& e, const std::string& key) const {
    std::vector<std::pair<double, double>> pts;
    for (const auto& item : split(e.value, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail_key(e, key, "breakpoint '" + item + "' is not x:y");
      pts.emplace_back(to_double(e, key, trim(item.substr(0, colon))), to_double(e, key, trim(item.substr(colon + 1))));
    }
    return pts;
  }

  bool curve(const std::string& sec, const std::string& key, Curve& out) {
    Entry* e = find(sec, key);
    if (!e) return false;
    try {
      out = Curve(breakpoints(*e, key));
    } catch (const std::invalid_argument& ex) {
      fail_key(*e, key, ex.what());
    }
    return true;
  }

  bool step_curve(const std::string& sec, const std::string& key, StepCurve& out) {
    Entry* e = find(sec, key);
    if (!e) return false;
    try {
      out = StepCurve(breakpoints(*e, key));
    } catch (const std::invalid_argument& ex) {
      fail_key(*e, key, ex.what());
    }
    return true;
  }

  void reject_unused() const {
    for (const auto& [sec, keys] : sections_)
      for (const auto& [key, e] : keys)
        if (!e.used) fail(e.line, "unknown key '" + key + "' in [" + sec + "]");
  }

  int line_of(const std::string& sec, const std::string& key) const {
    auto s = sections_.find(sec);
    if (s == sections_.end()) return 0;
    auto k = s->second.find(key);
    return k == s->second.end() ? 0 : k->second.line;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::map<std::string, Section> sections_;
  std::set<std::string> seen_;
};

template <class E>
E choose(Reader& r, const std::string& sec, const std::string& key, const std::map<std::string, E>& options,
         E fallback) {
  std::string v;
  if (!r.text(sec, key, v)) return fallback;
  auto it = options.find(v);
  if (it == options.end()) {
    std::string list;
    for (const auto& [name, _] : options) list += (list.empty() ? "" : ", ") + name;
    r.fail(r.line_of(sec, key), "'" + key + "': '" + v + "' is not one of " + list);
  }
  return it->second;
}

}  // namespace

bool RunConfig::insulated_unforced() const {
  for (const auto& f : problem.bc.heat)
    if (f.h0 != 0.0) return false;
  return forcing.kind == ForcingKind::none && problem.mode != MechanicsMode::rigid_rotation;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  Reader r(text, source);
  RunConfig c;
  Problem& p = c.problem;
  MaterialParams& m = p.mat;

  // [run]
  r.text("run", "name", c.name);
  p.mode = choose<MechanicsMode>(r, "run", "mode",
                                 {{"dynamic", MechanicsMode::dynamic},
                                  {"frozen", MechanicsMode::frozen},
                                  {"rigid_rotation", MechanicsMode::rigid_rotation}},
                                 MechanicsMode::dynamic);
  r.integer("run", "steps", c.steps);
  r.number("run", "tau", c.tau);
  r.integer("run", "output_every", c.output_every);
  r.boolean("run", "strict_audit", c.strict_audit);
  r.number("run", "tol", p.solver.tol);
  r.integer("run", "max_outer", p.solver.max_outer);
  r.integer("run", "max_inner", p.solver.max_inner);
  r.boolean("run", "reconstruct_P", p.reconstruct_P);
  r.number("run", "rotation_rate", p.rotation_rate);
  r.vector2("run", "rotation_center", p.rotation_center, 2);
  c.diagnostic = choose<Diagnostic>(r, "run", "diagnostic",
                                    {{"none", Diagnostic::none},
                                     {"stefan", Diagnostic::stefan},
                                     {"dispersion", Diagnostic::dispersion},
                                     {"rotor", Diagnostic::rotor}},
                                    Diagnostic::none);

  // [grid]
  int dim = 2;
  r.integer("grid", "dim", dim);
  if (dim != 1 && dim != 2) r.fail(r.line_of("grid", "dim"), "'dim': must be 1 or 2");
  std::array<double, 2> cells{16, 16}, extent{1.0, 1.0};
  if (Entry* e = r.find("grid", "cells")) {
    const auto v = r.numbers(*e, "cells");
    if (static_cast<int>(v.size()) != dim) r.fail_key(*e, "cells", "expected one count per axis");
    for (int k = 0; k < dim; ++k) {
      if (v[k] < 1 || v[k] != std::floor(v[k])) r.fail_key(*e, "cells", "counts must be positive integers");
      cells[k] = v[k];
    }
  }
  if (Entry* e = r.find("grid", "extent")) {
    const auto v = r.numbers(*e, "extent");
    if (static_cast<int>(v.size()) != dim) r.fail_key(*e, "extent", "expected one length per axis");
    for (int k = 0; k < dim; ++k) {
      if (!(v[k] > 0)) r.fail_key(*e, "extent", "lengths must be positive");
      extent[k] = v[k];
    }
  }
  p.grid = Grid(dim, {static_cast<int>(cells[0]), dim == 2 ? static_cast<int>(cells[1]) : 1}, extent);
  for (int a = 0; a < 2; ++a) {
    const std::string key = a == 0 ? "bc_x" : "bc_y";
    if (Entry* e = r.find("grid", key)) {
      const auto w = words(e->value);
      if (w.size() != 1 && w.size() != 2) r.fail_key(*e, key, "expected one or two of periodic, wall");
      try {
        p.bc.axis[a] = parse_axis_bc(w[0], w.size() == 2 ? w[1] : w[0]);
      } catch (const std::invalid_argument& ex) {
        r.fail_key(*e, key, ex.what());
      }
    }
  }

  // [heating]
  const char* faces[4] = {"x_lo", "x_hi", "y_lo", "y_hi"};
  for (int f = 0; f < 4; ++f) {
    Entry* e = r.find("heating", faces[f]);
    if (!e) continue;
    const auto w = words(e->value);
    if (w.size() == 2 && w[0] == "similarity") {
      if (c.similarity.enabled) r.fail_key(*e, faces[f], "only one similarity face is supported");
      c.similarity = {true, f, r.to_double(*e, faces[f], w[1])};
    } else if (w.size() == 2) {
      p.bc.heat[f] = FaceFlux{r.to_double(*e, faces[f], w[0]), r.to_double(*e, faces[f], w[1])};
    } else {
      r.fail_key(*e, faces[f], "expected 'h0 power' or 'similarity theta_hot'");
    }
  }

  // [material]
  r.number("material", "rho", m.rho);
  r.number("material", "K_e", m.K_e);
  r.number("material", "G_e0", m.G_e0);
  r.number("material", "eps_g", m.eps_g);
  r.number("material", "K_v", m.K_v);
  r.number("material", "G_v", m.G_v);
  r.curve("material", "G_m", m.G_m_curve);
  r.number("material", "kappa", m.kappa);
  r.number("material", "varkappa", m.varkappa);
  r.number("material", "nu", m.nu);
  r.number("material", "p_exp", m.p_exp);
  r.number("material", "G_d", m.G_d);
  r.number("material", "sigma_f", m.sigma_f);
  r.curve("material", "A", m.A_curve);
  r.number("material", "eps_zeta", m.eps_zeta);
  r.number("material", "omega", m.omega);
  r.number("material", "theta_pt", m.theta_pt);
  r.number("material", "latent", m.latent_l);
  r.step_curve("material", "heat_capacity", m.c_curve);
  r.curve("material", "conductivity", m.conductivity_curve);
  r.number("material", "eps_reg", m.eps_reg);
  r.curve("material", "buoyancy", m.buoyancy_b);
  r.number("material", "x_cap", m.x_cap);
  r.boolean("material", "glen", m.glen.enabled);
  r.number("material", "glen_G0", m.glen.G0);
  r.number("material", "glen_q", m.glen.q);

  // [initial]
  InitialSpec& in = c.initial;
  in.kind = choose<InitialKind>(r, "initial", "kind",
                                {{"uniform", InitialKind::uniform},
                                 {"pwave", InitialKind::pwave},
                                 {"rotor_blob", InitialKind::rotor_blob},
                                 {"damaged_patch", InitialKind::damaged_patch}},
                                InitialKind::uniform);
  r.number("initial", "theta", in.theta);
  r.number("initial", "alpha", in.alpha);
  r.number("initial", "chi", in.chi);
  r.number("initial", "amplitude", in.amplitude);
  if (Entry* e = r.find("initial", "wavelengths")) {
    for (double v : r.numbers(*e, "wavelengths")) {
      if (v < 2 || v != std::floor(v)) r.fail_key(*e, "wavelengths", "wavelengths are whole cell counts >= 2");
      in.wavelengths.push_back(static_cast<int>(v));
    }
  }
  r.number("initial", "blob_strain", in.blob_strain);
  r.number("initial", "blob_width", in.blob_width);
  r.vector2("initial", "blob_center", in.blob_center, 2);
  r.number("initial", "patch_alpha", in.patch_alpha);
  r.number("initial", "patch_width", in.patch_width);
  r.number("initial", "theta_noise", in.theta_noise);
  {
    int seed = 1;
    if (r.integer("initial", "seed", seed)) in.seed = static_cast<std::uint64_t>(seed);
  }

  // [forcing]
  ForcingSpec& fo = c.forcing;
  fo.kind = choose<ForcingKind>(r, "forcing", "kind",
                                {{"none", ForcingKind::none},
                                 {"kolmogorov", ForcingKind::kolmogorov},
                                 {"uniform", ForcingKind::uniform}},
                                ForcingKind::none);
  r.number("forcing", "amplitude", fo.amplitude);
  r.integer("forcing", "mode", fo.mode);
  r.vector2("forcing", "direction", fo.direction, 2);

  r.reject_unused();

  // Cross-field validation.
  auto invalid = [&](const std::string& msg) { throw ConfigError(source + ": " + msg); };
  if (c.steps < 1) invalid("steps must be at least 1");
  if (!(c.tau > 0)) invalid("tau must be positive");
  if (c.output_every < 0) invalid("output_every must be nonnegative");
  if (!(in.theta >= 0)) invalid("initial theta must be nonnegative");
  if (!(in.alpha >= 0 && in.alpha <= 1)) invalid("initial alpha must lie in [0,1]");
  if (!(in.chi >= 0 && in.chi <= 1)) invalid("initial chi must lie in [0,1]");
  if (!(in.patch_alpha >= 0 && in.patch_alpha <= 1)) invalid("patch_alpha must lie in [0,1]");
  if (in.kind == InitialKind::pwave && (dim != 1 || in.wavelengths.empty()))
    invalid("pwave initial data needs dim = 1 and at least one wavelength");
  if (in.kind == InitialKind::pwave)
    for (int wl : in.wavelengths)
      if (p.grid.nx() % wl != 0 || p.bc.axis[0] != AxisBC::periodic)
        invalid("pwave wavelengths must divide a periodic axis");
  if (c.diagnostic == Diagnostic::dispersion && in.kind != InitialKind::pwave)
    invalid("dispersion diagnostic needs pwave initial data");
  if (c.diagnostic == Diagnostic::stefan && (!c.similarity.enabled || dim != 1))
    invalid("stefan diagnostic needs dim = 1 and a similarity heated face");
  if (c.similarity.enabled && p.bc.axis[c.similarity.face / 2] != AxisBC::wall)
    invalid("similarity heating needs a wall face");
  if (fo.kind == ForcingKind::kolmogorov && dim != 2) invalid("kolmogorov forcing needs dim = 2");
  if (fo.mode < 1) invalid("forcing mode must be positive");
  try {
    p.validate();
  } catch (const std::invalid_argument& ex) {
    invalid(ex.what());
  }

  if (c.similarity.enabled) {
    const StefanParams sp = similarity_params(c);
    try {
      p.bc.heat[c.similarity.face] = FaceFlux{StefanOracle(sp).flux_coefficient(), -0.5};
    } catch (const std::invalid_argument& ex) {
      invalid(ex.what());
    }
  }

  // Body force field.
  if (fo.kind != ForcingKind::none) {
    const Grid& g = p.grid;
    p.force = VecField(g, Vec{});
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        if (fo.kind == ForcingKind::kolmogorov) {
          const double ly = g.h[1] * g.ny();
          p.force(i, j)[0] = fo.amplitude * std::sin(2.0 * M_PI * fo.mode * g.center(1, j) / ly);
        } else {
          p.force(i, j)[0] = fo.amplitude * fo.direction[0];
          if (g.d == 2) p.force(i, j)[1] = fo.amplitude * fo.direction[1];
        }
      }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

std::vector<std::string> list_scenarios() {
  std::vector<std::string> out;
  for (const auto& s : embedded_scenarios) out.emplace_back(s.name);
  return out;
}

std::string scenario_text(const std::string& name) {
  for (const auto& s : embedded_scenarios)
    if (name == s.name) return s.text;
  throw ConfigError("unknown scenario '" + name + "'");
}

RunConfig load_scenario(const std::string& name) {
  return parse_config(scenario_text(name), "scenarios/" + name + ".cfg");
}

StefanParams similarity_params(const RunConfig& cfg) {
  const MaterialParams& m = cfg.problem.mat;
  const double tp = m.theta_pt;
  const double big = 1e6 * (1.0 + tp);
  StefanParams sp;
  sp.c_solid = m.c_curve(0.0);
  sp.c_liquid = m.c_curve(tp);
  if (m.c_curve(std::nextafter(tp, 0.0)) != sp.c_solid || m.c_curve(big) != sp.c_liquid)
    throw ConfigError("similarity heating needs a heat capacity constant in each phase");
  const double ws = gamma_tilde(tp, m);
  sp.k_solid = m.conductivity_curve(ws);
  sp.k_liquid = m.conductivity_curve(ws + m.latent_l);
  if (m.conductivity_curve(0.0) != sp.k_solid || m.conductivity_curve(ws + m.latent_l + big) != sp.k_liquid)
    throw ConfigError("similarity heating needs a conductivity constant in each phase");
  sp.latent = m.latent_l;
  sp.theta_pt = tp;
  sp.theta_init = cfg.initial.theta;
  sp.theta_hot = cfg.similarity.theta_hot;
  return sp;
}

State initial_state(const RunConfig& cfg) {
  const Problem& p = cfg.problem;
  const Grid& g = p.grid;
  const InitialSpec& in = cfg.initial;
  const MaterialParams& m = p.mat;
  State s = State::rest(p, in.theta);
  const double lx = g.h[0] * g.nx(), ly = g.h[1] * g.ny();
  std::mt19937_64 rng(in.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      s.alpha(i, j) = in.alpha;
      s.chi(i, j) = in.chi;
      if (in.theta_noise > 0) s.theta(i, j) = std::max(0.0, in.theta + in.theta_noise * unit(rng));
      const double x = g.center(0, i);
      const double y = g.d == 2 ? g.center(1, j) : 0.0;
      switch (in.kind) {
        case InitialKind::uniform:
          break;
        case InitialKind::pwave:
          // Superposed right-travelling damped modes: v = A cos(kx), E from the exact modal relation.
          for (int wl : in.wavelengths) {
            const double k = 2.0 * M_PI / (wl * g.h[0]);
            const double disc = m.K_e / m.rho - m.K_v * m.K_v * k * k / (4.0 * m.rho * m.rho);
            s.v(i, j)[0] += in.amplitude * std::cos(k * x);
            if (disc > 0) {
              const double wr = k * std::sqrt(disc), gam = m.K_v * k * k / (2.0 * m.rho);
              const double mod2 = wr * wr + gam * gam;
              s.E(i, j)(0, 0) += -k * in.amplitude / mod2 * (wr * std::cos(k * x) - gam * std::sin(k * x));
            }
          }
          break;
        case InitialKind::rotor_blob: {
          const double dx = x - in.blob_center[0], dy = y - in.blob_center[1];
          const double bump = in.blob_strain * std::exp(-(dx * dx + dy * dy) / (in.blob_width * in.blob_width));
          SymTensor2 e(g.d);
          e(0, 0) = bump;
          if (g.d == 2) {
            e(1, 1) = -0.4 * bump;
            e(0, 1) = 0.6 * bump;
          }
          s.E(i, j) = e;
          break;
        }
        case InitialKind::damaged_patch: {
          const double dx = x - 0.5 * lx, dy = g.d == 2 ? y - 0.5 * ly : 0.0;
          const double bump = std::exp(-(dx * dx + dy * dy) / (in.patch_width * in.patch_width));
          s.alpha(i, j) = in.alpha - (in.alpha - in.patch_alpha) * bump;
          break;
        }
      }
    }
  if (p.mode == MechanicsMode::rigid_rotation) s.v = rigid_velocity(p);
  if (p.mode == MechanicsMode::frozen) s.v = VecField(g, Vec{});
  return s;
}

}  // namespace thermo

// relayflow command line: validate, simulate, crossings, find-periodic,
// degree-check, accessible. Every run writes report.json into --out.

#include <relayflow/relayflow.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relayflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitHypothesis = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string lambda;
};

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw CLI::ValidationError(flag, "empty entry");
    item = item.substr(b, e - b + 1);
    double x = 0.0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), x);
    if (r.ec != std::errc{} || r.ptr != item.data() + item.size()) throw CLI::ValidationError(flag, "not a number: " + item);
    v.push_back(x);
  }
  return v;
}

Point to_point(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return rows;
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class Run {
 public:
  Run(std::string command, const Common& c) : command_(std::move(command)), common_(c) {}

  const RelaySystem& system() const { return cfg_.system; }
  Offsets lambda() const { return lambda_; }

  void load() {
    cfg_ = load_config(common_.config);
    lambda_ = cfg_.system.default_offsets();
    if (!common_.lambda.empty()) {
      const auto v = parse_list(common_.lambda, "--lambda");
      if (static_cast<int>(v.size()) != cfg_.system.modes() + 1) {
        throw CLI::ValidationError("--lambda", "expected p+1 = " + std::to_string(cfg_.system.modes() + 1) + " values");
      }
      lambda_ = to_point(v);
    }
  }

  Offsets parse_offsets(const std::string& text, const std::string& flag) const {
    const auto v = parse_list(text, flag);
    if (static_cast<int>(v.size()) != cfg_.system.modes() + 1) throw CLI::ValidationError(flag, "expected p+1 values");
    return to_point(v);
  }

  Point parse_x0(const std::string& text) const {
    const auto v = parse_list(text, "--x0");
    if (static_cast<int>(v.size()) != cfg_.system.dimension()) throw CLI::ValidationError("--x0", "expected n values");
    return to_point(v);
  }

  std::ofstream open(const std::string& name) {
    artifacts_.push_back(name);
    std::ofstream f(fs::path(common_.out) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (fs::path(common_.out) / name).string());
    return f;
  }

  void write_json(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }

  json& metrics() { return metrics_; }

  int finish(int code, const std::string& message = {}) {
    static const char* outcomes[] = {"ok", "usage_error", "hypothesis_failure", "numeric_failure"};
    json report;
    report["command"] = command_;
    report["config_hash"] = hex(cfg_.hash);
    report["seed"] = common_.seed;
    report["outcome"] = outcomes[code];
    if (!message.empty()) report["message"] = message;
    report["metrics"] = metrics_;
    report["artifacts"] = artifacts_;
    try {
      fs::create_directories(common_.out);
      std::ofstream f(fs::path(common_.out) / "report.json", std::ios::binary);
      f << report.dump(2) << '\n';
    } catch (const std::exception& e) {
      std::cerr << "relayflow: cannot write report: " << e.what() << '\n';
    }
    if (!message.empty()) std::cerr << "relayflow " << command_ << ": " << message << '\n';
    return code;
  }

  template <class Body>
  int guarded(Body&& body) {
    try {
      fs::create_directories(common_.out);
      load();
      return finish(body());
    } catch (const ConfigError& e) {
      return finish(kExitUsage, e.what());
    } catch (const CLI::Error& e) {
      return finish(kExitUsage, e.what());
    } catch (const std::invalid_argument& e) {
      return finish(kExitUsage, e.what());
    } catch (const Error& e) {
      return finish(kExitNumeric, e.what());
    } catch (const std::exception& e) {
      return finish(kExitNumeric, e.what());
    }
  }

 private:
  std::string command_;
  Common common_;
  LoadedConfig cfg_{};
  Offsets lambda_;
  json metrics_ = json::object();
  std::vector<std::string> artifacts_;
};

json condition_json(const ConditionResult& r) {
  return {{"condition", r.condition}, {"k", r.k}, {"pass", r.pass}, {"margin", r.margin}, {"witness", to_json(r.witness)}};
}

json orbit_json(const RelaySystem& s, const PeriodicOrbit& o) {
  json sw = json::array();
  for (const auto& e : o.path.switches) {
    sw.push_back({{"time", e.time}, {"point", to_json(e.point)}, {"mode_before", e.mode_before},
                  {"mode_after", e.mode_after}, {"crossing_index", e.crossing_index}, {"margin", e.margin}});
  }
  json moduli = to_json(o.monodromy_moduli);
  return {{"x0", to_json(o.omega.x)},
          {"t", to_json(o.omega.t)},
          {"period", o.period()},
          {"lambda", to_json(o.lambda)},
          {"residual_norm", o.residual_norm},
          {"closure", o.closure},
          {"margins", o.margins},
          {"condition_number", o.condition},
          {"monodromy", to_json(o.monodromy)},
          {"monodromy_moduli", moduli},
          {"dimension", s.dimension()},
          {"switches", sw}};
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("config_file", c.config, "system description (JSON)");
  sub->add_option("--config", c.config, "system description (JSON)");
  sub->add_option("--seed", c.seed, "seed for every random stream")->capture_default_str();
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--lambda", c.lambda, "offsets v0,v1,...,vp");
  sub->callback([sub, &c] {
    if (c.config.empty()) throw CLI::RequiredError(sub->get_name() + ": --config");
  });
}

SwitchPolicy parse_policy(const std::string& text, std::uint64_t seed) {
  if (text == "first") return FirstHit{};
  if (text == "random") return RandomHit{SplitRng(seed).split("simulate.policy").engine()()};
  if (text.rfind("nth:", 0) == 0) {
    int n = 0;
    const auto r = std::from_chars(text.data() + 4, text.data() + text.size(), n);
    if (r.ec == std::errc{} && r.ptr == text.data() + text.size() && n >= 1) return NthHit{n};
  }
  throw CLI::ValidationError("--policy", "expected first, nth:N or random");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relay-of-flows simulation, degree checks and periodic orbit search"};
  app.require_subcommand(1);

  Common c_val, c_sim, c_cross, c_find, c_deg, c_acc;

  auto* validate = app.add_subcommand("validate", "sample the standing hypotheses");
  add_common(validate, c_val);
  int val_samples = 256, val_grid = 16;
  validate->add_option("--samples", val_samples, "boundary samples per condition")->capture_default_str();
  validate->add_option("--grid", val_grid, "time grid points for the Mbeta check")->capture_default_str();

  auto* simulate_cmd = app.add_subcommand("simulate", "run one quasisolution");
  add_common(simulate_cmd, c_sim);
  std::string sim_x0, sim_policy = "first";
  int sim_k0 = 1, sim_switches = 10, sim_per_segment = 64;
  double sim_tmax = 0.0;
  simulate_cmd->add_option("--x0", sim_x0, "initial point a,b,...")->required();
  simulate_cmd->add_option("--k0", sim_k0, "initial mode")->capture_default_str();
  simulate_cmd->add_option("--policy", sim_policy, "first | nth:N | random")->capture_default_str();
  simulate_cmd->add_option("--max-switches", sim_switches)->capture_default_str();
  simulate_cmd->add_option("--t-max", sim_tmax, "time limit (0 = none)");
  simulate_cmd->add_option("--samples-per-segment", sim_per_segment)->capture_default_str();

  auto* crossings_cmd = app.add_subcommand("crossings", "list boundary crossings along one flow");
  add_common(crossings_cmd, c_cross);
  int cr_flow = 1, cr_region = 1;
  std::string cr_x0;
  double cr_window = 0.0;
  bool cr_backward = false;
  crossings_cmd->add_option("--flow", cr_flow, "flow index 1..p")->capture_default_str();
  crossings_cmd->add_option("--region", cr_region, "region index 0..p")->capture_default_str();
  crossings_cmd->add_option("--x0", cr_x0, "start point")->required();
  crossings_cmd->add_option("--window", cr_window, "window length (default T of the flow)");
  crossings_cmd->add_flag("--backward", cr_backward, "integrate backwards");

  auto* find_cmd = app.add_subcommand("find-periodic", "search for p-periodic quasisolutions");
  add_common(find_cmd, c_find);
  int fp_seeds = 32;
  std::string fp_from;
  find_cmd->add_option("--seeds", fp_seeds, "forward-tree leaves tried")->capture_default_str();
  find_cmd->add_option("--continue-from", fp_from, "solve at these offsets, then continue to --lambda");

  auto* degree_cmd = app.add_subcommand("degree-check", "leaf-count parities of nu0 and nu1");
  add_common(degree_cmd, c_deg);
  int dg_samples = 20;
  degree_cmd->add_option("--samples", dg_samples)->capture_default_str();

  auto* acc_cmd = app.add_subcommand("accessible", "branching accessible-set cloud");
  add_common(acc_cmd, c_acc);
  std::string acc_x0;
  int acc_k0 = 1, acc_depth = 5, acc_breadth = 64;
  double acc_res = 0.0;
  acc_cmd->add_option("--x0", acc_x0, "initial point")->required();
  acc_cmd->add_option("--k0", acc_k0)->capture_default_str();
  acc_cmd->add_option("--depth", acc_depth)->capture_default_str();
  acc_cmd->add_option("--breadth", acc_breadth)->capture_default_str();
  acc_cmd->add_option("--resolution", acc_res, "arc-length spacing (default box diameter / 512)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*validate) {
    Run run("validate", c_val);
    return run.guarded([&] {
      ValidationOptions opt;
      opt.samples = val_samples;
      opt.grid = val_grid;
      opt.seed = c_val.seed;
      const ValidationReport rep = validate_system(run.system(), run.lambda(), opt);
      json conds = json::array();
      for (const auto& r : rep.results) conds.push_back(condition_json(r));
      run.metrics()["conditions"] = conds;
      run.metrics()["passed"] = rep.passed();
      json fails = json::array();
      for (const auto& r : rep.failures()) fails.push_back({{"condition", r.condition}, {"k", r.k}});
      run.metrics()["failures"] = fails;
      return rep.passed() ? kExitOk : kExitHypothesis;
    });
  }

  if (*simulate_cmd) {
    Run run("simulate", c_sim);
    return run.guarded([&] {
      const RelaySystem& s = run.system();
      StopCriteria stop;
      stop.max_switches = sim_switches;
      if (sim_tmax > 0.0) stop.t_max = sim_tmax;
      const Quasisolution q =
          simulate(s, run.lambda(), run.parse_x0(sim_x0), sim_k0, parse_policy(sim_policy, c_sim.seed), stop);
      auto csv = run.open("trajectory.csv");
      csv << "t,mode";
      for (int i = 1; i <= s.dimension(); ++i) csv << ",x" << i;
      csv << '\n';
      int rows = 0;
      const int m = std::max(1, sim_per_segment);
      for (const auto& seg : q.segments) {
        const Flow& flow = s.flow(mode_stage(s, seg.mode));
        std::optional<Trajectory> traj;
        if (seg.duration > 0.0) traj = integrate_trajectory(flow, seg.duration, seg.start);
        for (int j = 0; j <= m; ++j) {
          const double dt = seg.duration * j / m;
          const Point x = j == m ? seg.end : (traj ? traj->at(dt) : seg.start);
          csv << num(seg.start_time + dt) << ',' << seg.mode;
          for (Eigen::Index i = 0; i < x.size(); ++i) csv << ',' << num(x[i]);
          csv << '\n';
          ++rows;
          if (!traj) break;
        }
      }
      json sw = json::array();
      for (const auto& e : q.switches) {
        sw.push_back({{"time", e.time}, {"point", to_json(e.point)}, {"mode_before", e.mode_before},
                      {"mode_after", e.mode_after}, {"crossing_index", e.crossing_index}, {"margin", e.margin}});
      }
      run.write_json("switches.json", sw);
      run.metrics()["samples"] = rows;
      run.metrics()["switches"] = q.switches.size();
      run.metrics()["total_time"] = q.total_time();
      run.metrics()["final_state"] = to_json(q.final_state());
      return kExitOk;
    });
  }

  if (*crossings_cmd) {
    Run run("crossings", c_cross);
    return run.guarded([&] {
      const RelaySystem& s = run.system();
      if (cr_region < 0 || cr_region > s.modes()) throw CLI::ValidationError("--region", "must lie in 0..p");
      if (cr_flow < 1 || cr_flow > s.modes()) throw CLI::ValidationError("--flow", "must lie in 1..p");
      const Flow& flow = s.flow(cr_flow);
      const double window = cr_window > 0.0 ? cr_window : flow.horizon;
      const auto events = find_crossings(flow, s.level(cr_region), run.lambda()[cr_region], run.parse_x0(cr_x0), window,
                                         cr_backward ? Orientation::Backward : Orientation::Forward);
      auto csv = run.open("crossings.csv");
      csv << "index,t";
      for (int i = 1; i <= s.dimension(); ++i) csv << ",x" << i;
      csv << ",direction,margin\n";
      for (std::size_t k = 0; k < events.size(); ++k) {
        csv << k + 1 << ',' << num(events[k].t);
        for (Eigen::Index i = 0; i < events[k].point.size(); ++i) csv << ',' << num(events[k].point[i]);
        csv << ',' << events[k].direction << ',' << num(events[k].margin) << '\n';
      }
      run.metrics()["samples"] = events.size();
      run.metrics()["window"] = window;
      run.metrics()["parity"] = events.size() % 2;
      return kExitOk;
    });
  }

  if (*find_cmd) {
    Run run("find-periodic", c_find);
    return run.guarded([&] {
      const RelaySystem& s = run.system();
      FindPeriodicOptions opt;
      opt.max_seeds = fp_seeds;
      opt.seed = c_find.seed;
      SearchStats stats;
      std::vector<PeriodicOrbit> orbits;
      if (!fp_from.empty()) {
        const Offsets from = run.parse_offsets(fp_from, "--continue-from");
        const auto start = find_periodic(s, from, opt, &stats);
        const ContinuationPath path = continue_lambda(s, start.front().omega, from, run.lambda());
        orbits.push_back(*path.endpoint);
        run.metrics()["continuation_steps"] = path.path.size() - 1;
        run.metrics()["continuation_halvings"] = path.halvings;
      } else {
        orbits = find_periodic(s, run.lambda(), opt, &stats);
      }
      for (std::size_t i = 0; i < orbits.size(); ++i) {
        run.write_json("orbit_" + std::to_string(i) + ".json", orbit_json(s, orbits[i]));
      }
      run.metrics()["orbits"] = orbits.size();
      run.metrics()["seeds_tried"] = stats.seeds_tried;
      run.metrics()["converged"] = stats.converged;
      run.metrics()["rejected_window"] = stats.rejected_window;
      run.metrics()["rejected_verification"] = stats.rejected_verification;
      run.metrics()["perturbation_retries"] = stats.perturbation_retries;
      return kExitOk;
    });
  }

  if (*degree_cmd) {
    Run run("degree-check", c_deg);
    return run.guarded([&] {
      const RelaySystem& s = run.system();
      const DegreeSurvey survey = degree_survey(s, run.lambda(), dg_samples, SplitRng(c_deg.seed).split("degree"));
      auto csv = run.open("degree.csv");
      csv << "map,index";
      for (int i = 1; i <= s.dimension(); ++i) csv << ",x" << i;
      csv << ",leaves,parity,degenerate\n";
      int rows = 0;
      auto side = [&](const char* name, const DegreeSide& d) {
        for (std::size_t k = 0; k < d.samples.size(); ++k) {
          const auto& smp = d.samples[k];
          csv << name << ',' << k;
          for (Eigen::Index i = 0; i < smp.x.size(); ++i) csv << ',' << num(smp.x[i]);
          csv << ',' << smp.leaves << ',' << smp.parity << ',' << (smp.degenerate ? 1 : 0) << '\n';
          ++rows;
        }
        const auto agreed = d.agreed_parity();
        return json{{"samples", d.samples.size()},
                    {"regular", d.regular()},
                    {"degenerate_rate", d.degenerate_rate()},
                    {"parity_one", d.count_parity(1)},
                    {"parity_zero", d.count_parity(0)},
                    {"parity", agreed ? json(*agreed) : json(nullptr)}};
      };
      run.metrics()["nu0"] = side("nu0", survey.nu0);
      run.metrics()["nu1"] = side("nu1", survey.nu1);
      run.metrics()["samples"] = rows;
      if (survey.nu0.regular() == 0 || survey.nu1.regular() == 0) {
        throw DegenerateCrossing("no regular samples on one side");
      }
      return kExitOk;
    });
  }

  if (*acc_cmd) {
    Run run("accessible", c_acc);
    return run.guarded([&] {
      const RelaySystem& s = run.system();
      BranchingOptions opt;
      opt.depth = acc_depth;
      opt.breadth = acc_breadth;
      opt.resolution = acc_res;
      const PointCloud cloud = accessible_set(s, run.lambda(), run.parse_x0(acc_x0), acc_k0, opt);
      auto csv = run.open("cloud.csv");
      csv << "index,level,mode";
      for (int i = 1; i <= s.dimension(); ++i) csv << ",x" << i;
      csv << '\n';
      for (std::size_t k = 0; k < cloud.size(); ++k) {
        csv << k << ',' << cloud.level[k] << ',' << cloud.mode[k];
        for (Eigen::Index i = 0; i < cloud.points[k].size(); ++i) csv << ',' << num(cloud.points[k][i]);
        csv << '\n';
      }
      const double ds = acc_res > 0.0 ? acc_res : s.box().diameter() / 512.0;
      const Connectivity conn = check_connected(cloud, 2.0 * ds);
      run.metrics()["samples"] = cloud.size();
      run.metrics()["edges"] = cloud.edges.size();
      run.metrics()["resolution"] = ds;
      run.metrics()["components"] = conn.components;
      run.metrics()["connected"] = conn.connected;
      return kExitOk;
    });
  }
  return kExitUsage;
}

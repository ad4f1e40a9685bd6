#include "flipfree/cli.hpp"

#include "flipfree/admm.hpp"
#include "flipfree/energies.hpp"
#include "flipfree/handles_json.hpp"
#include "flipfree/mesh.hpp"
#include "flipfree/service.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>

namespace flipfree {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kManifestSchemaVersion = 1;

// Solver settings as given on the command line or loaded from a manifest.
struct Overrides {
  std::optional<std::string> energy;
  std::optional<std::string> init;
  std::optional<std::string> termination;
  std::optional<double> eps_abs;
  std::optional<double> eps_rel;
  std::optional<double> rho;
  std::optional<double> gamma;
  std::optional<double> eps_slack;
  std::optional<double> target_energy;
  std::optional<int> max_iter;
  std::optional<int> stall_window;
  std::optional<bool> proximal;
  std::optional<bool> rescaling;
};

struct Paths {
  std::string mesh;
  std::string handles;  // deform handles or volmap boundary targets
  std::string out;
  std::string log;
  std::string manifest;
  std::string config;
};

struct Manifest {
  std::string command;
  json inputs = json::object();
  json outputs = json::object();
  json config = json::object();
  std::string status = "error";
  int exit_code = kExitError;
  json error = nullptr;
  json metrics = {{"energy", nullptr},  {"flips", nullptr},  {"initial_flips", nullptr}, {"iterations", nullptr},
                  {"wall_ms", nullptr}, {"e_prim", nullptr}, {"e_dual", nullptr}};
};

json manifest_json(const Manifest& m) {
  return {{"schema_version", kManifestSchemaVersion},
          {"tool", "flipfree"},
          {"version", build_version()},
          {"command", m.command},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"config", m.config},
          {"status", m.status},
          {"exit_code", m.exit_code},
          {"error", m.error},
          {"metrics", m.metrics}};
}

TerminationMode parse_termination(const std::string& s) {
  if (s == "default") return TerminationMode::kDefault;
  if (s == "flip-free-only") return TerminationMode::kFlipFreeOnly;
  if (s == "target-energy") return TerminationMode::kTargetEnergy;
  throw InvalidInput("unknown termination '" + s + "' (expected default, flip-free-only or target-energy)");
}

void add_solver_flags(CLI::App* sub, Overrides& o, bool with_termination) {
  sub->add_option("--energy", o.energy, "sg (symmetric gradient) or sd (symmetric Dirichlet)");
  sub->add_option("--eps-abs", o.eps_abs, "absolute tolerance");
  sub->add_option("--eps-rel", o.eps_rel, "relative tolerance");
  sub->add_option("--max-iter", o.max_iter, "iteration cap");
  sub->add_option("--rho", o.rho, "penalty rescale ratio");
  sub->add_option("--gamma", o.gamma, "sufficient-decrease constant");
  sub->add_option("--eps-slack", o.eps_slack, "slack in the penalty floor");
  sub->add_option("--proximal", o.proximal, "proximal rotation term (on/off)");
  sub->add_option("--rescaling", o.rescaling, "penalty rescaling (on/off)");
  sub->add_option("--stall-window", o.stall_window, "iterations without progress before giving up while flipped");
  if (with_termination) {
    sub->add_option("--termination", o.termination, "default, flip-free-only or target-energy");
    sub->add_option("--target-energy", o.target_energy, "energy threshold for target-energy termination");
  }
}

void add_output_flags(CLI::App* sub, Paths& p) {
  sub->add_option("-o,--out", p.out, "output mesh path");
  sub->add_option("--log", p.log, "per-iteration CSV log");
  sub->add_option("--manifest", p.manifest, "run manifest path (default: next to --out)");
  sub->add_option("--config", p.config, "manifest or config JSON whose settings seed unspecified flags");
}

template <typename T>
void fill(std::optional<T>& slot, const json& cfg, const char* key) {
  if (slot || !cfg.contains(key) || cfg[key].is_null()) return;
  try {
    slot = cfg[key].get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(std::string("config key '") + key + "' has the wrong type");
  }
}

void load_config(const std::string& path, Overrides& o) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
  const json& cfg = j.contains("config") ? j["config"] : j;
  if (!cfg.is_object()) throw InvalidInput(path + ": config must be an object");
  fill(o.energy, cfg, "energy");
  fill(o.init, cfg, "init");
  fill(o.termination, cfg, "termination");
  fill(o.eps_abs, cfg, "eps_abs");
  fill(o.eps_rel, cfg, "eps_rel");
  fill(o.rho, cfg, "rho");
  fill(o.gamma, cfg, "gamma");
  fill(o.eps_slack, cfg, "eps_slack");
  fill(o.target_energy, cfg, "target_energy");
  fill(o.max_iter, cfg, "max_iter");
  fill(o.stall_window, cfg, "stall_window");
  fill(o.proximal, cfg, "proximal");
  fill(o.rescaling, cfg, "rescaling");
}

SolverConfig resolve(const Overrides& o, SolverConfig c) {
  if (o.energy) c.energy = parse_energy(*o.energy);
  if (c.energy == EnergyKind::kArap) throw InvalidInput("arap cannot be minimized; use sg or sd");
  if (o.eps_abs) c.eps_abs = *o.eps_abs;
  if (o.eps_rel) c.eps_rel = *o.eps_rel;
  if (o.max_iter) c.max_iter = *o.max_iter;
  if (o.rho) c.rho = *o.rho;
  if (o.gamma) c.gamma = *o.gamma;
  if (o.eps_slack) c.eps_slack = *o.eps_slack;
  if (o.proximal) c.proximal = *o.proximal;
  if (o.rescaling) c.rescaling = *o.rescaling;
  if (o.stall_window) c.stall_window = *o.stall_window;
  if (o.termination) c.termination = parse_termination(*o.termination);
  if (o.target_energy) c.target_energy = *o.target_energy;
  if (c.eps_abs < 0.0 || c.eps_rel < 0.0) throw InvalidInput("tolerances must be nonnegative");
  if (c.max_iter < 0) throw InvalidInput("--max-iter must be nonnegative");
  if (c.rho <= 2.0) throw InvalidInput("--rho must exceed 2");
  if (c.gamma <= 0.0) throw InvalidInput("--gamma must be positive");
  if (c.stall_window < 1) throw InvalidInput("--stall-window must be at least 1");
  return c;
}

json config_json(const SolverConfig& c) {
  return {{"energy", energy_name(c.energy)}, {"eps_abs", c.eps_abs},
          {"eps_rel", c.eps_rel},            {"max_iter", c.max_iter},
          {"rho", c.rho},                    {"gamma", c.gamma},
          {"eps_slack", c.eps_slack},        {"proximal", c.proximal},
          {"rescaling", c.rescaling},        {"termination", termination_name(c.termination)},
          {"target_energy", c.target_energy}, {"stall_window", c.stall_window}};
}

std::string default_out(const std::string& input, const std::string& suffix, const std::string& ext) {
  const fs::path p(input);
  return (p.stem().string() + suffix + (ext.empty() ? p.extension().string() : ext));
}

std::string default_manifest(const std::string& out) {
  fs::path p(out);
  p.replace_extension(".manifest.json");
  return p.string();
}

int exit_for(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged:
      return kExitConverged;
    case SolveStatus::kMaxIter:
      return kExitMaxIter;
    case SolveStatus::kStalled:
      return kExitStalled;
  }
  return kExitError;
}

// Runs the solver and records the outcome in the manifest.
SolveResult run_solver(const Mesh& mesh, const Eigen::MatrixXd& w0, const HandleConstraints& constraints,
                       const SolverConfig& config, const Paths& paths, Manifest& m) {
  const JacobianOperator g = build_gradient_operator(mesh);
  m.metrics["initial_flips"] = count_flips(mesh, g, w0);
  std::ofstream log_file;
  if (!paths.log.empty()) {
    log_file.open(paths.log);
    if (!log_file) throw InvalidInput("cannot write log " + paths.log);
    m.outputs["log"] = paths.log;
  }
  SolveResult r = solve(mesh, w0, constraints, config, paths.log.empty() ? nullptr : &log_file);
  const EnergyReport report = evaluate(mesh, g, r.w, config.energy);
  m.status = status_name(r.status);
  m.exit_code = exit_for(r.status);
  m.metrics["energy"] = report.total;
  m.metrics["flips"] = report.flips;
  m.metrics["iterations"] = r.iterations;
  m.metrics["wall_ms"] = r.wall_ms;
  if (!r.history.empty()) {
    m.metrics["e_prim"] = r.history.back().e_prim;
    m.metrics["e_dual"] = r.history.back().e_dual;
  }
  return r;
}

void print_summary(std::ostream& out, const Manifest& m) {
  out << m.command << ": " << m.status;
  if (!m.metrics["iterations"].is_null()) out << " after " << m.metrics["iterations"] << " iterations";
  if (!m.metrics["flips"].is_null()) out << ", " << m.metrics["flips"] << " flips";
  if (!m.metrics["energy"].is_null()) out << ", energy " << m.metrics["energy"].get<double>();
  out << '\n';
}

// Wraps a command body: maps failures to exit codes and always writes the
// manifest.
int execute(Manifest& m, const std::string& manifest_path, std::ostream& out, std::ostream& err,
            const std::function<void()>& body) {
  try {
    body();
  } catch (const InvalidInput& e) {
    m.status = "validation-error";
    m.exit_code = kExitValidation;
    m.error = e.what();
  } catch (const MeshError& e) {
    m.status = "validation-error";
    m.exit_code = kExitValidation;
    m.error = e.what();
  } catch (const SolverError& e) {
    m.status = "validation-error";
    m.exit_code = kExitValidation;
    m.error = e.what();
  } catch (const std::exception& e) {
    m.status = "error";
    m.exit_code = kExitError;
    m.error = e.what();
  }
  m.outputs["manifest"] = manifest_path;
  std::ofstream f(manifest_path);
  f << manifest_json(m).dump(2) << '\n';
  if (!f) {
    err << "error: cannot write manifest " << manifest_path << '\n';
    return m.exit_code == kExitConverged ? kExitError : m.exit_code;
  }
  if (!m.error.is_null()) err << "error: " << m.error.get<std::string>() << '\n';
  print_summary(out, m);
  return m.exit_code;
}

Mesh load_input(const std::string& path) {
  if (!fs::exists(path)) throw InvalidInput("input mesh " + path + " does not exist");
  return load_mesh(path);
}

int cmd_parametrize(Paths& p, Overrides& o, std::ostream& out, std::ostream& err) {
  if (p.out.empty()) p.out = default_out(p.mesh, "_uv", ".obj");
  if (p.manifest.empty()) p.manifest = default_manifest(p.out);
  Manifest m;
  m.command = "parametrize";
  m.inputs = {{"mesh", p.mesh}};
  return execute(m, p.manifest, out, err, [&] {
    if (!p.config.empty()) load_config(p.config, o);
    const SolverConfig config = resolve(o, SolverConfig{});
    const std::string init = o.init.value_or("tutte");
    m.config = config_json(config);
    m.config["init"] = init;
    if (init != "tutte" && init != "conformal") throw InvalidInput("--init must be tutte or conformal");
    const Mesh mesh = load_input(p.mesh);
    if (mesh.dim != 2) throw InvalidInput("parametrize needs a triangle surface mesh");
    boundary_loop(mesh);
    const Eigen::MatrixXd w0 = init == "tutte" ? tutte_init(mesh) : conformal_init(mesh);
    const SolveResult r = run_solver(mesh, w0, {}, config, p, m);
    save_obj_with_uv(p.out, mesh, r.w);
    m.outputs["mesh"] = p.out;
  });
}

int cmd_deform(Paths& p, Overrides& o, std::ostream& out, std::ostream& err) {
  if (p.out.empty()) p.out = default_out(p.mesh, "_deformed", "");
  if (p.manifest.empty()) p.manifest = default_manifest(p.out);
  Manifest m;
  m.command = "deform";
  m.inputs = {{"mesh", p.mesh}, {"handles", p.handles}};
  return execute(m, p.manifest, out, err, [&] {
    if (!p.config.empty()) load_config(p.config, o);
    const SolverConfig config = resolve(o, SolverConfig::deformation_preset());
    m.config = config_json(config);
    const Mesh mesh = load_input(p.mesh);
    if (mesh.dim == 2 && mesh.embed_dim != 2) {
      throw InvalidInput("deform needs a planar triangle mesh or a tet mesh");
    }
    const HandleConstraints handles = load_handles(p.handles, mesh.num_vertices(), mesh.target_dim);
    if (handles.empty()) throw InvalidInput("deformation requires at least one handle");
    const SolveResult r = run_solver(mesh, mesh.vertices, handles, config, p, m);
    save_mesh(p.out, mesh, r.w, format_from_path(p.out));
    m.outputs["mesh"] = p.out;
  });
}

int cmd_volmap(Paths& p, Overrides& o, std::ostream& out, std::ostream& err) {
  if (p.out.empty()) p.out = default_out(p.mesh, "_mapped", ".tet");
  if (p.manifest.empty()) p.manifest = default_manifest(p.out);
  Manifest m;
  m.command = "volmap";
  m.inputs = {{"mesh", p.mesh}, {"target_boundary", p.handles}};
  return execute(m, p.manifest, out, err, [&] {
    if (!p.config.empty()) load_config(p.config, o);
    SolverConfig base;
    base.proximal = false;
    const SolverConfig config = resolve(o, base);
    m.config = config_json(config);
    m.config["init"] = "tutte";
    const Mesh mesh = load_input(p.mesh);
    if (mesh.dim != 3) throw InvalidInput("volmap needs a tet mesh");
    const HandleConstraints boundary = load_handles(p.handles, mesh.num_vertices(), 3);
    const Eigen::MatrixXd w0 = tutte_init(mesh, boundary);
    const SolveResult r = run_solver(mesh, w0, boundary, config, p, m);
    save_mesh(p.out, mesh, r.w, format_from_path(p.out));
    m.outputs["mesh"] = p.out;
  });
}

int cmd_unflip(Paths& p, Overrides& o, std::ostream& out, std::ostream& err) {
  if (p.out.empty()) p.out = default_out(p.mesh, "_unflipped", ".obj");
  if (p.manifest.empty()) p.manifest = default_manifest(p.out);
  Manifest m;
  m.command = "unflip";
  m.inputs = {{"mesh", p.mesh}};
  return execute(m, p.manifest, out, err, [&] {
    if (!p.config.empty()) load_config(p.config, o);
    SolverConfig base;
    base.termination = TerminationMode::kFlipFreeOnly;
    base.proximal = false;
    const SolverConfig config = resolve(o, base);
    m.config = config_json(config);
    const Mesh mesh = load_input(p.mesh);
    if (mesh.dim != 2) throw InvalidInput("unflip needs a triangle mesh");
    if (!mesh.texcoords) throw InvalidInput(p.mesh + " has no per-vertex UV coordinates");
    const SolveResult r = run_solver(mesh, *mesh.texcoords, {}, config, p, m);
    save_obj_with_uv(p.out, mesh, r.w);
    m.outputs["mesh"] = p.out;
    out << "unflip: " << r.iterations << " iterations to reach " << m.metrics["flips"] << " flips\n";
  });
}

struct ServeOptions {
  std::string mesh;
  std::string address = "127.0.0.1";
  int port = 8080;
  int throttle_ms = 33;
  std::size_t binary_threshold = 10000;
  std::string manifest = "serve.manifest.json";
};

int cmd_serve(const ServeOptions& s, Overrides& o, const std::string& config_path, std::ostream& out,
              std::ostream& err) {
  Manifest m;
  m.command = "serve";
  m.inputs = {{"mesh", s.mesh}};
  return execute(m, s.manifest, out, err, [&] {
    if (!config_path.empty()) load_config(config_path, o);
    const SolverConfig config = resolve(o, SolverConfig::deformation_preset());
    m.config = config_json(config);
    m.config["address"] = s.address;
    m.config["port"] = s.port;
    m.config["throttle_ms"] = s.throttle_ms;
    if (s.port < 0 || s.port > 65535) throw InvalidInput("--port out of range");
    if (s.throttle_ms < 0) throw InvalidInput("--throttle-ms must be nonnegative");
    Mesh mesh = load_input(s.mesh);
    if (mesh.dim != 2 || mesh.embed_dim != 2) throw InvalidInput("serve needs a planar triangle mesh");
    ServiceOptions options;
    options.address = s.address;
    options.port = static_cast<unsigned short>(s.port);
    options.throttle = std::chrono::milliseconds(s.throttle_ms);
    options.binary_threshold = s.binary_threshold;
    DeformService service(std::move(mesh), config, options);
    out << "listening on http://" << s.address << ':' << service.port() << " (websocket /session)" << std::endl;
    service.run();
    m.status = "stopped";
    m.exit_code = kExitConverged;
    m.metrics["iterations"] = service.session().sweeps();
  });
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flip-free mesh mapping with a three-block splitting solver", "flipfree"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_version());

  Paths paths;
  Overrides over;

  CLI::App* para = app.add_subcommand("parametrize", "UV-parametrize a disk-topology surface");
  para->add_option("mesh", paths.mesh, "input surface mesh (.obj/.off)")->required();
  para->add_option("--init", over.init, "tutte or conformal");
  add_solver_flags(para, over, true);
  add_output_flags(para, paths);

  CLI::App* deform = app.add_subcommand("deform", "deform a planar or tet mesh by moving handle vertices");
  deform->add_option("mesh", paths.mesh, "input mesh (.obj/.off/.tet)")->required();
  deform->add_option("--handles", paths.handles, "handles JSON")->required();
  add_solver_flags(deform, over, true);
  add_output_flags(deform, paths);

  CLI::App* volmap = app.add_subcommand("volmap", "map a tet mesh onto prescribed boundary positions");
  volmap->add_option("mesh", paths.mesh, "input tet mesh (.tet)")->required();
  volmap->add_option("--target-boundary", paths.handles, "boundary targets JSON (handles format)")->required();
  add_solver_flags(volmap, over, true);
  add_output_flags(volmap, paths);

  CLI::App* unflip = app.add_subcommand("unflip", "remove flipped triangles from an existing UV map");
  unflip->add_option("mesh", paths.mesh, "OBJ with one vt per vertex")->required();
  add_solver_flags(unflip, over, true);
  add_output_flags(unflip, paths);

  ServeOptions serve_opts;
  std::string serve_config;
  CLI::App* serve = app.add_subcommand("serve", "run the interactive deformation service");
  serve->add_option("--mesh", serve_opts.mesh, "planar triangle mesh to deform")->required();
  serve->add_option("--address", serve_opts.address, "listen address");
  serve->add_option("--port", serve_opts.port, "listen port (0 picks a free one)");
  serve->add_option("--throttle-ms", serve_opts.throttle_ms, "minimum interval between updates");
  serve->add_option("--binary-threshold", serve_opts.binary_threshold, "vertex count above which arrays go binary");
  serve->add_option("--manifest", serve_opts.manifest, "manifest written on exit");
  serve->add_option("--config", serve_config, "manifest or config JSON seeding unspecified flags");
  add_solver_flags(serve, over, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitConverged : kExitValidation;
  }

  if (para->parsed()) return cmd_parametrize(paths, over, out, err);
  if (deform->parsed()) return cmd_deform(paths, over, out, err);
  if (volmap->parsed()) return cmd_volmap(paths, over, out, err);
  if (unflip->parsed()) return cmd_unflip(paths, over, out, err);
  return cmd_serve(serve_opts, over, serve_config, out, err);
}

}  // namespace flipfree

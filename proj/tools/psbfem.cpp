// psbfem command-line tool: mesh generation, deck solving, benchmark
// verification and manifest replay.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "psbfem/error.hpp"
#include "psbfem/inp_io.hpp"
#include "psbfem/verification.hpp"

#ifndef PSBFEM_VERSION
#define PSBFEM_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace psbfem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_numerical = 1;
constexpr int exit_usage = 2;

/// Verification or acceptance failure that is not an exception in the library.
struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double number(const std::string& text) {
    try {
        return Expression::parse(text)(0, 0, 0);
    } catch (const ParseError& e) {
        throw ConfigError("bad number '" + text + "': " + e.what());
    }
}

std::vector<double> numbers(const std::string& text, std::size_t expected, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(number(part));
    if (expected && out.size() != expected)
        throw ConfigError(std::string(what) + " needs " + std::to_string(expected) + " comma-separated values: " + text);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("SBFEM_HEAT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1 || v > 1024)
            throw ConfigError(std::string("SBFEM_HEAT_THREADS must be a positive integer, got '") + env + "'");
        return static_cast<int>(v);
    }
    return 1;
}

MeshFamily family_from(const std::string& name) {
    if (name == "quad") return MeshFamily::Quad;
    if (name == "voronoi") return MeshFamily::Voronoi;
    if (name == "quadtree") return MeshFamily::Quadtree;
    throw ConfigError("unknown mesh family '" + name + "' (quad, quadtree, voronoi)");
}

// Each command runs from a resolved json configuration, so replay reuses it.

json run_mesh(const json& cfg) {
    const std::string generator = cfg.at("generator");
    const Rectangle domain{0, 0, cfg.at("width").get<double>(), cfg.at("height").get<double>()};
    Mesh mesh;
    std::string prefix = "U";
    if (generator == "quad") {
        mesh = build_structured_quad_mesh(domain.width(), domain.height(), cfg.at("h").get<double>());
    } else if (generator == "quadtree") {
        std::vector<RefinementFeature> features;
        for (const auto& f : cfg.at("refine"))
            features.push_back({{f[0].get<double>(), f[1].get<double>()}, {f[2].get<double>(), f[3].get<double>()},
                                f[4].get<double>()});
        mesh = build_quadtree_mesh(domain, features, cfg.at("max_depth").get<int>(), cfg.at("min_depth").get<int>());
        prefix = "UQT";
    } else if (generator == "voronoi") {
        mesh = build_voronoi_polygon_mesh(domain, cfg.at("cells").get<std::size_t>(), cfg.at("lloyd").get<int>(),
                                          cfg.at("seed").get<std::uint64_t>());
    } else {
        throw ConfigError("unknown generator '" + generator + "'");
    }
    const auto& m = cfg.at("material");
    InputDeck deck = mesh_to_deck(mesh, {{0, Material{m[0].get<double>(), m[1].get<double>(), m[2].get<double>()}}},
                                  prefix);
    for (const auto& [tag, expr] : cfg.at("boundary").items()) deck.boundaries.push_back({tag, expr.get<std::string>()});
    if (cfg.contains("initial")) deck.initial_temperature = cfg.at("initial").get<std::string>();
    if (cfg.contains("dt")) deck.step = StepCard{true, cfg.at("dt").get<double>(), cfg.at("t_end").get<double>()};
    else deck.step = StepCard{};
    const std::string text = write_inp(deck);
    parse_inp(text);
    const fs::path out = cfg.at("output").get<std::string>();
    write_text(out, text);
    std::printf("%s mesh: %zu cells, %zu nodes -> %s\n", generator.c_str(), mesh.cells.size(), mesh.nodes.size(),
                out.string().c_str());
    return {{"outputs", json::array({out.string()})},
            {"cells", mesh.cells.size()},
            {"nodes", mesh.nodes.size()}};
}

json run_solve(const json& cfg) {
    const fs::path deck_path = cfg.at("deck").get<std::string>();
    SolveCase sc = deck_to_case(read_inp(deck_path));
    if (cfg.contains("dt") || cfg.contains("t_end")) {
        if (!sc.step.transient && !(cfg.contains("dt") && cfg.contains("t_end")))
            throw ConfigError("a steady deck needs both --dt and --t-end to run transient");
        sc.step.transient = true;
        if (cfg.contains("dt")) sc.step.dt = cfg.at("dt").get<double>();
        if (cfg.contains("t_end")) sc.step.t_end = cfg.at("t_end").get<double>();
    }
    SolveOptions opts;
    opts.gauss_order = cfg.at("gauss_order").get<int>();
    opts.threads = cfg.at("threads").get<int>();
    std::vector<Point2D> probes;
    for (const auto& p : cfg.at("probes")) probes.push_back({p[0].get<double>(), p[1].get<double>()});

    const auto t0 = std::chrono::steady_clock::now();
    CaseResult result;
    result.mesh = sc.mesh;
    if (!sc.step.transient) {
        SteadyResult r = solve_steady(sc.mesh, sc.materials, sc.bcs, opts);
        result.elements = std::move(r.elements);
        result.states.push_back({0.0, std::move(r.T)});
        result.max_residual = r.residual;
        result.dofs = r.dofs;
    } else {
        TransientConfig tc;
        tc.dt = sc.step.dt;
        tc.t_end = sc.step.t_end;
        tc.initial = sc.initial;
        tc.output_every = cfg.at("output_every").get<int>();
        TransientResult r = run_transient(sc.mesh, sc.materials, sc.bcs, tc, opts);
        result.elements = std::move(r.elements);
        result.states = std::move(r.states);
        result.max_residual = r.max_residual;
        result.dofs = r.dofs;
        result.steps = r.steps;
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dir = cfg.at("output_dir").get<std::string>();
    const TimeSeriesFiles files = write_time_series(result, dir, probes);
    json outputs = json::array();
    for (const auto& p : files.vtu) outputs.push_back(p.string());
    outputs.push_back(files.pvd.string());
    if (files.probes_csv) outputs.push_back(files.probes_csv->string());
    std::printf("%s solve: %lld dofs, %zu steps, %zu output states, max residual %.3e, %.3f s -> %s\n",
                sc.step.transient ? "transient" : "steady", static_cast<long long>(result.dofs), result.steps,
                result.states.size(), result.max_residual, result.wall_seconds, dir.string().c_str());
    return {{"outputs", outputs},
            {"transient", sc.step.transient},
            {"dt", sc.step.dt},
            {"t_end", sc.step.t_end},
            {"dofs", result.dofs},
            {"steps", result.steps},
            {"max_residual", result.max_residual},
            {"solve_seconds", result.wall_seconds}};
}

json run_verify(const json& cfg) {
    const std::string bench = cfg.at("benchmark");
    const MeshFamily family = family_from(cfg.at("family"));
    CaseTemplate c;
    if (bench == "steady-plate") c = steady_plate_case(family);
    else if (bench == "transient-plate") c = transient_plate_case(family, cfg.at("dt").get<double>(), cfg.at("t_end").get<double>());
    else throw ConfigError("unknown benchmark '" + bench + "' (steady-plate, transient-plate)");
    c.seed = cfg.at("seed").get<std::uint64_t>();
    c.options.gauss_order = cfg.at("gauss_order").get<int>();
    c.options.threads = cfg.at("threads").get<int>();
    const std::vector<double> hs = cfg.at("h").get<std::vector<double>>();
    if (hs.size() < 3) throw ConfigError("need >= 3 sizes, got " + std::to_string(hs.size()));

    const std::vector<ConvergenceStudy> studies = run_convergence_study(c, hs);
    const fs::path dir = cfg.at("output_dir").get<std::string>();
    json outputs = json::array(), fits = json::array();
    bool pass = true;
    for (const auto& s : studies) {
        char name[64];
        if (c.transient) std::snprintf(name, sizeof name, "convergence_t%g.csv", s.time);
        else std::snprintf(name, sizeof name, "convergence.csv");
        write_text(dir / name, convergence_csv(s));
        outputs.push_back((dir / name).string());
        const bool ok = s.fit.fitted && s.fit.slope >= 1.8 && s.fit.slope <= 2.2;
        pass = pass && ok;
        std::printf("%s t=%g: slope %.4f (R^2 %.5f%s) %s\n", s.label.c_str(), s.time, s.fit.slope, s.fit.r_squared,
                    s.fit.flagged ? ", flagged: R^2 < 0.98" : "", ok ? "PASS" : "FAIL");
        for (const auto& r : s.records)
            std::printf("  h=%-10.6g dofs=%-8lld error=%.6e\n", r.h, static_cast<long long>(r.dofs), r.error);
        fits.push_back({{"time", s.time},
                        {"slope", s.fit.slope},
                        {"r_squared", s.fit.r_squared},
                        {"flagged", s.fit.flagged},
                        {"monotone", s.monotone},
                        {"pass", ok}});
    }
    json out = {{"outputs", outputs}, {"fits", fits}, {"pass", pass}};
    if (!pass) throw CheckFailed("fitted convergence rate outside [1.8, 2.2]");
    return out;
}

json run_command(const std::string& command, const json& cfg) {
    if (command == "mesh") return run_mesh(cfg);
    if (command == "solve") return run_solve(cfg);
    if (command == "verify") return run_verify(cfg);
    throw ConfigError("unknown command '" + command + "' in manifest");
}

fs::path manifest_path(const std::string& command, const json& cfg) {
    if (command == "mesh") return fs::path(cfg.at("output").get<std::string>()).string() + ".manifest.json";
    return fs::path(cfg.at("output_dir").get<std::string>()) / "manifest.json";
}

std::vector<std::string> input_paths(const std::string& command, const json& cfg) {
    if (command == "solve") return {cfg.at("deck").get<std::string>()};
    return {};
}

int execute(const std::string& command, const json& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    json manifest = {{"command", command},
                     {"tool_version", PSBFEM_VERSION},
                     {"inputs", input_paths(command, cfg)},
                     {"config", cfg}};
    int status = exit_ok;
    std::string message;
    json result;
    try {
        result = run_command(command, cfg);
    } catch (const CheckFailed& e) {
        status = exit_numerical;
        message = e.what();
    } catch (const ConfigError& e) {
        status = exit_usage;
        message = e.what();
    } catch (const ParseError& e) {
        status = exit_usage;
        message = e.what();
    } catch (const IoError& e) {
        status = exit_usage;
        message = e.what();
    } catch (const MeshError& e) {
        status = exit_usage;
        message = e.what();
    } catch (const nlohmann::json::exception& e) {
        status = exit_usage;
        message = std::string("invalid configuration: ") + e.what();
    } catch (const std::exception& e) {
        status = exit_numerical;
        message = e.what();
    }
    if (!message.empty()) std::fprintf(stderr, "psbfem %s: error: %s\n", command.c_str(), message.c_str());
    manifest["result"] = result;
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["exit_status"] = status;
    if (!message.empty()) manifest["error"] = message;
    if (status != exit_usage) {
        try {
            write_text(manifest_path(command, cfg), manifest.dump(2) + "\n");
        } catch (const std::exception& e) {
            std::fprintf(stderr, "psbfem %s: error: %s\n", command.c_str(), e.what());
            return exit_usage;
        }
    }
    return status;
}

json boundary_object(const std::vector<std::string>& specs) {
    json out = json::object();
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--bc expects TAG=EXPRESSION, got '" + s + "'");
        Expression::parse(s.substr(eq + 1));
        out[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"psbfem: polygonal scaled boundary finite element heat conduction solver"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_version_flag("--version", PSBFEM_VERSION);
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 success, 1 numerical or verification failure, 2 usage or input error.\n"
        "Configuration precedence: command-line flags > deck cards > defaults.\n"
        "Threads: --threads, else SBFEM_HEAT_THREADS, else 1.");

    // mesh
    auto* mesh = app.add_subcommand("mesh", "Generate a mesh and write it as an input deck");
    std::string generator, mesh_out;
    double width = 10.0, height = 5.0, h = 0.0;
    int max_depth = 4, min_depth = 1, lloyd = 20;
    std::size_t cells = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> refine, bcs;
    std::vector<double> material = {1.0, 1.0, 1.0};
    std::string initial;
    double mesh_dt = 0.0, mesh_t_end = 0.0;
    mesh->add_option("generator", generator, "quad, quadtree or voronoi")->required()->check(CLI::IsMember({"quad", "quadtree", "voronoi"}));
    mesh->add_option("-o,--output", mesh_out, "Output deck path")->required();
    mesh->add_option("--width", width, "Domain width [m]")->capture_default_str();
    mesh->add_option("--height", height, "Domain height [m]")->capture_default_str();
    mesh->add_option("--h", h, "quad: cell size; voronoi: target mean cell size (seeds = area / h^2)");
    mesh->add_option("--cells", cells, "voronoi: number of seeds");
    mesh->add_option("--lloyd", lloyd, "voronoi: Lloyd relaxation sweeps")->capture_default_str();
    mesh->add_option("--max-depth", max_depth, "quadtree: depth of leaves near refinement features")->capture_default_str();
    mesh->add_option("--min-depth", min_depth, "quadtree: minimum leaf depth")->capture_default_str();
    mesh->add_option("--refine", refine,
                     "quadtree: refinement feature x,y (point), x,y,r (disk) or x1,y1,x2,y2 (segment); repeatable");
    mesh->add_option("--material", material, "conductivity density specific-heat")->expected(3)->capture_default_str();
    mesh->add_option("--bc", bcs, "Dirichlet card TAG=EXPRESSION (tags left, right, bottom, top); repeatable");
    mesh->add_option("--initial", initial, "Initial temperature expression");
    mesh->add_option("--dt", mesh_dt, "Write a transient step card with this time step");
    mesh->add_option("--t-end", mesh_t_end, "Transient end time");

    // solve
    auto* solve = app.add_subcommand("solve", "Solve an input deck and write .vtu/.pvd/CSV outputs");
    std::string deck, solve_out = "out";
    double dt = 0.0, t_end = 0.0;
    int output_every = 1, gauss_order = 2, threads = 0;
    std::vector<std::string> probes;
    solve->add_option("deck", deck, "Input deck (.inp)")->required();
    solve->add_option("-o,--output-dir", solve_out, "Output directory")->capture_default_str();
    solve->add_option("--dt", dt, "Time step; overrides the deck");
    solve->add_option("--t-end", t_end, "End time; overrides the deck");
    solve->add_option("--output-every", output_every, "Write every N-th step (the first and last are always written)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    solve->add_option("--probe", probes, "Probe point x,y; repeatable");

    // verify
    auto* verify = app.add_subcommand("verify", "Run a built-in convergence benchmark");
    std::string bench, family = "quad", verify_out = "verify";
    std::vector<std::string> hs;
    double verify_dt = 1e-3, verify_t_end = 2.0;
    verify->add_option("benchmark", bench, "steady-plate or transient-plate")->required();
    verify->add_option("--family", family, "Mesh family: quad, voronoi or quadtree")->capture_default_str();
    verify->add_option("--h", hs,
                       "Mesh sizes, comma-separated or repeated; expressions such as pi/8 allowed "
                       "(default 1,0.5,0.25,0.125 steady; pi/4,pi/8,pi/16 transient)")
        ->delimiter(',');
    verify->add_option("--dt", verify_dt, "transient-plate time step")->capture_default_str();
    verify->add_option("--t-end", verify_t_end, "transient-plate end time")->capture_default_str();
    verify->add_option("-o,--output-dir", verify_out, "Output directory")->capture_default_str();

    for (auto* sub : {mesh, verify}) sub->add_option("--seed", seed, "Random seed (default 0)");
    for (auto* sub : {solve, verify}) {
        sub->add_option("--gauss-order", gauss_order, "Gauss points per boundary edge")->capture_default_str()->check(CLI::Range(1, 20));
        sub->add_option("--threads", threads, "Worker threads for element matrices")->check(CLI::Range(1, 1024));
    }

    // replay
    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    std::string manifest_file, replay_out;
    replay->add_option("manifest", manifest_file, "manifest.json written by a previous run")->required();
    replay->add_option("-o,--output", replay_out, "Redirect outputs to this directory (or deck path for mesh)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*mesh) {
            json cfg = {{"generator", generator}, {"width", width}, {"height", height}};
            if (generator == "quad") {
                if (!(h > 0.0)) throw ConfigError("quad mesh needs --h > 0");
                cfg["h"] = h;
            } else if (generator == "voronoi") {
                if (cells == 0) {
                    if (!(h > 0.0)) throw ConfigError("voronoi mesh needs --cells or --h");
                    cells = static_cast<std::size_t>(std::max(1.0, std::round(width * height / (h * h))));
                }
                cfg["cells"] = cells;
                cfg["lloyd"] = lloyd;
                cfg["seed"] = seed;
            } else {
                json feats = json::array();
                for (const auto& r : refine) {
                    const auto v = numbers(r, 0, "--refine");
                    if (v.size() == 2) feats.push_back({v[0], v[1], v[0], v[1], 0.0});
                    else if (v.size() == 3) feats.push_back({v[0], v[1], v[0], v[1], v[2]});
                    else if (v.size() == 4) feats.push_back({v[0], v[1], v[2], v[3], 0.0});
                    else throw ConfigError("--refine needs 2, 3 or 4 values: " + r);
                }
                cfg["refine"] = feats;
                cfg["max_depth"] = max_depth;
                cfg["min_depth"] = min_depth;
            }
            cfg["material"] = material;
            cfg["boundary"] = boundary_object(bcs);
            if (!initial.empty()) {
                Expression::parse(initial);
                cfg["initial"] = initial;
            }
            if (mesh->count("--dt") || mesh->count("--t-end")) {
                if (!(mesh->count("--dt") && mesh->count("--t-end"))) throw ConfigError("--dt and --t-end go together");
                cfg["dt"] = mesh_dt;
                cfg["t_end"] = mesh_t_end;
            }
            cfg["output"] = mesh_out;
            return execute("mesh", cfg);
        }
        if (*solve) {
            json cfg = {{"deck", deck}, {"output_dir", solve_out}};
            if (solve->count("--dt")) cfg["dt"] = dt;
            if (solve->count("--t-end")) cfg["t_end"] = t_end;
            cfg["output_every"] = output_every;
            cfg["gauss_order"] = gauss_order;
            cfg["threads"] = resolve_threads(threads);
            json pts = json::array();
            for (const auto& p : probes) pts.push_back(numbers(p, 2, "--probe"));
            cfg["probes"] = pts;
            if (!fs::exists(deck)) throw IoError("deck not found: " + deck);
            return execute("solve", cfg);
        }
        if (*verify) {
            std::vector<double> sizes;
            for (const auto& s : hs) sizes.push_back(number(s));
            if (sizes.empty()) sizes = bench == "transient-plate" ? transient_plate_sizes() : steady_plate_sizes();
            if (sizes.size() < 3) throw ConfigError("need >= 3 sizes, got " + std::to_string(sizes.size()));
            if (bench != "steady-plate" && bench != "transient-plate")
                throw ConfigError("unknown benchmark '" + bench + "' (steady-plate, transient-plate)");
            family_from(family);
            json cfg = {{"benchmark", bench},
                        {"family", family},
                        {"h", sizes},
                        {"seed", seed},
                        {"gauss_order", gauss_order},
                        {"threads", resolve_threads(threads)},
                        {"output_dir", verify_out}};
            if (bench == "transient-plate") {
                cfg["dt"] = verify_dt;
                cfg["t_end"] = verify_t_end;
            }
            return execute("verify", cfg);
        }
        if (*replay) {
            const json m = json::parse(read_text(manifest_file));
            const std::string command = m.at("command");
            json cfg = m.at("config");
            if (!replay_out.empty()) cfg[command == "mesh" ? "output" : "output_dir"] = replay_out;
            return execute(command, cfg);
        }
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "psbfem: error: invalid manifest: %s\n", e.what());
        return exit_usage;
    } catch (const Error& e) {
        std::fprintf(stderr, "psbfem: error: %s\n", e.what());
        return exit_usage;
    }
    return exit_usage;
}

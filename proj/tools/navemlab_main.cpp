// navemlab: batch command-line front end for the navem library.
//
// Subcommands:
//   mesh gen      write a generated mesh to JSON
//   mesh info     print counts, mesh size and the class histogram
//   train         fit basis networks per polygon class, with checkpoints
//   solve         run one (problem, method, mesh) case, append a CSV row
//   convergence   run a (method x mesh) table, emit CSV + log-log SVG
//   metrics       polynomial-reproduction metrics of stored bundles
//
// Exit codes: 0 success, 2 validation/config error, 3 non-finite training
// loss (last good checkpoint kept), 4 missing model files, 5 solver failure.
// Diagnostics go to stderr; stdout and output files carry only data.

#include <CLI11.hpp>
#include <json.hpp>

#include "navem/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace navem;

namespace {

// ---------------------------------------------------------------------------
// Small shared helpers.
// ---------------------------------------------------------------------------

void warn(const std::string& msg) { std::cerr << "navemlab: " << msg << "\n"; }

void fail_msg(const std::string& msg) {
  std::cerr << "navemlab: error: " << msg << "\n";
}

std::string path_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

void write_text_file(const std::string& path, const std::string& text) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out << text;
  if (!out) throw ValidationError("short write: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Appends one CSV row, creating the file with its header first.
void append_csv_row(const std::string& path, const std::string& header,
                    const std::string& row) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  if (fresh) out << header << "\n";
  out << row << "\n";
  if (!out) throw ValidationError("short write: " + path);
}

// ---------------------------------------------------------------------------
// Config file support: one JSON object per run; command-line flags override
// config values, config values override built-in defaults. Unknown keys are
// rejected so typos fail loudly.
// ---------------------------------------------------------------------------

class ConfigBinder {
 public:
  template <class T>
  void bind(const std::string& key, const CLI::Option* opt, T& target) {
    keys_.insert(key);
    entries_.emplace_back(key, [opt, &target](const json& v) {
      if (opt == nullptr || opt->count() == 0) target = v.get<T>();
    });
  }

  // Applies the config file (if any). Entries whose option was given on the
  // command line keep the command-line value.
  void apply(const std::string& config_path) const {
    if (config_path.empty()) return;
    json cfg;
    try {
      cfg = json::parse(read_text_file(config_path));
    } catch (const json::exception& e) {
      throw ParseError("config " + config_path + ": " + e.what());
    }
    if (!cfg.is_object())
      throw ValidationError("config must be a single JSON object: " +
                            config_path);
    for (const auto& [key, value] : cfg.items()) {
      if (!keys_.count(key))
        throw ValidationError("config key '" + key +
                              "' is not understood by this command");
      (void)value;
    }
    try {
      for (const auto& [key, apply_fn] : entries_)
        if (cfg.contains(key)) apply_fn(cfg.at(key));
    } catch (const json::exception& e) {
      throw ValidationError("config " + config_path + ": " + e.what());
    }
  }

 private:
  std::set<std::string> keys_;
  std::vector<std::pair<std::string, std::function<void(const json&)>>>
      entries_;
};

// ---------------------------------------------------------------------------
// Problem and method plumbing shared by solve/convergence.
// ---------------------------------------------------------------------------

struct ProblemChoice {
  std::string name;   // poisson | dar | nonlinear
  double lambda = 1.0;
};

ProblemSpec linear_problem(const ProblemChoice& choice) {
  if (choice.name == "poisson") return sine_poisson();
  if (choice.name == "dar") return dar_benchmark();
  throw ValidationError("unknown problem '" + choice.name + "'");
}

// Loads the bundle a neural method needs; not used for vem/fem.
std::optional<BasisBundle> load_method_bundle(Method method,
                                              const std::string& models_dir) {
  if (!method_is_neural(method)) return std::nullopt;
  if (models_dir.empty())
    throw MissingModel("method '" + method_tag(method) +
                       "' needs --models pointing at trained bundle files");
  return load_bundle(models_dir, method_strategy(method));
}

struct CaseResult {
  SolveRecord record;
  VecX field;
  NewtonResult newton;  // iterations == 0 for linear runs
};

CaseResult run_case(const std::string& mesh_name, const Mesh& mesh,
                    Method method, const BasisBundle* bundle,
                    const ProblemChoice& choice, int threads) {
  CaseResult out;
  if (choice.name == "nonlinear") {
    const NonlinearDiffusion prob = ring_benchmark(choice.lambda);
    out.record = run_nonlinear(mesh_name, mesh, method, bundle, prob, {}, 4,
                               6, threads, &out.field, &out.newton);
    return out;
  }
  const ProblemSpec prob = linear_problem(choice);
  out.record = run_linear(mesh_name, mesh, method, bundle, prob, 4, 6,
                          threads, &out.field);
  return out;
}

void zero_record_timings(SolveRecord& rec) {
  rec.assemble_s = 0.0;
  rec.solve_s = 0.0;
}

// Per-iteration Newton statistics: total wall time, iteration count and the
// average time per iteration.
void emit_newton_stats(const ProblemChoice& choice, const NewtonResult& res) {
  const double total =
      res.assemble_seconds + res.solve_seconds;
  const double ati =
      res.iterations > 0 ? total / res.iterations : 0.0;
  std::ostringstream line;
  line << "newton: lambda=" << fmt17(choice.lambda)
       << " iterations=" << res.iterations << " total_s=" << fmt17(total)
       << " ati_s=" << fmt17(ati);
  if (!res.residual_history.empty())
    line << " residual_first=" << fmt17(res.residual_history.front())
         << " residual_last=" << fmt17(res.residual_history.back());
  warn(line.str());
}

// ---------------------------------------------------------------------------
// mesh gen / mesh info
// ---------------------------------------------------------------------------

struct MeshGenOpts {
  std::string kind;
  int n = 8;
  double perturb = 0.2;
  std::uint64_t seed = 1;
  std::string out;
};

int run_mesh_gen(const MeshGenOpts& o) {
  Mesh mesh;
  if (o.kind == "quadcc")
    mesh = gen_quad_convex_concave(o.n, o.perturb, o.seed);
  else if (o.kind == "tri")
    mesh = gen_triangle(o.n);
  else
    throw ValidationError("unknown mesh kind '" + o.kind + "'");
  save_mesh(mesh, o.out);
  warn("wrote " + o.out + " (" + std::to_string(mesh.n_vertices()) +
       " vertices, " + std::to_string(mesh.n_cells()) + " cells)");
  return 0;
}

std::string mesh_info_text(const Mesh& mesh) {
  int boundary = 0;
  for (const char d : mesh.dirichlet) boundary += d ? 1 : 0;
  std::map<std::string, int> histogram;
  for (const Polygon& p : mesh.polygons) histogram[to_string(p.cls())]++;
  std::ostringstream out;
  out << "vertices: " << mesh.n_vertices() << "\n";
  out << "cells: " << mesh.n_cells() << "\n";
  out << "boundary_vertices: " << boundary << "\n";
  out << "interior_vertices: " << mesh.n_vertices() - boundary << "\n";
  out << "h: " << fmt17(mesh.h) << "\n";
  for (const auto& [cls, count] : histogram)
    out << "class " << cls << ": " << count << "\n";
  return out.str();
}

int run_mesh_info(const std::string& mesh_path, const std::string& out_path) {
  const Mesh mesh = load_mesh(mesh_path);
  const std::string text = mesh_info_text(mesh);
  if (out_path.empty())
    std::cout << text;
  else
    write_text_file(out_path, text);
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string strategy;
  std::vector<std::string> classes{"4-convex", "4-concave"};
  int count = 20;
  std::vector<int> hidden{20, 20};
  int adam = 200;
  int qn = 200;
  int lattice = 10;
  int edge_points = 50;
  int degree = 20;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  bool resume = false;
  bool desk = false;
  bool zero_timings = false;
  int max_classes = 0;  // 0: no cap; otherwise stop (checkpoint) after N
};

PolygonClass parse_class_tag(const std::string& tag) {
  const auto dash = tag.find('-');
  if (dash == std::string::npos)
    throw ValidationError("class tag '" + tag +
                          "' is not of the form <n>-convex|concave");
  int nv = 0;
  try {
    nv = std::stoi(tag.substr(0, dash));
  } catch (const std::exception&) {
    throw ValidationError("class tag '" + tag + "' has no vertex count");
  }
  const std::string kind = tag.substr(dash + 1);
  if (kind != "convex" && kind != "concave")
    throw ValidationError("class tag '" + tag +
                          "' must end in -convex or -concave");
  return PolygonClass{nv, kind == "convex"};
}

json train_protocol_json(const TrainOpts& o) {
  json proto;
  proto["count"] = o.count;
  proto["hidden"] = o.hidden;
  proto["adam"] = o.adam;
  proto["qn"] = o.qn;
  proto["lattice"] = o.lattice;
  proto["edge_points"] = o.edge_points;
  proto["degree"] = o.degree;
  proto["seed"] = o.seed;
  return proto;
}

struct TrainState {
  std::vector<std::string> classes;
  std::vector<std::string> completed;
  long long next_epoch = 0;
  json protocol;
};

std::string train_state_path(const std::string& dir) {
  return (fs::path(dir) / "state.json").string();
}

void save_train_state(const TrainOpts& o, const TrainState& st) {
  json doc;
  doc["schema"] = "navemlab-train-state-v1";
  doc["strategy"] = o.strategy;
  doc["classes"] = st.classes;
  doc["completed"] = st.completed;
  doc["next_epoch"] = st.next_epoch;
  doc["protocol"] = st.protocol;
  write_text_file(train_state_path(o.out), doc.dump(2) + "\n");
}

TrainState load_train_state(const TrainOpts& o) {
  const std::string path = train_state_path(o.out);
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError("train state " + path + ": " + e.what());
  }
  if (doc.value("schema", "") != "navemlab-train-state-v1")
    throw SchemaVersionError("unsupported train state schema in " + path);
  if (doc.value("strategy", "") != o.strategy)
    throw ValidationError("checkpoint trains strategy '" +
                          doc.value("strategy", "") +
                          "', not '" + o.strategy + "'");
  TrainState st;
  st.classes = doc.at("classes").get<std::vector<std::string>>();
  st.completed = doc.at("completed").get<std::vector<std::string>>();
  st.next_epoch = doc.at("next_epoch").get<long long>();
  st.protocol = doc.at("protocol");
  if (st.classes != o.classes)
    throw ValidationError("checkpoint class list does not match --classes");
  if (st.protocol != train_protocol_json(o))
    throw ValidationError(
        "checkpoint protocol does not match the requested flags");
  return st;
}

void append_loss_history(const std::string& dir,
                         const std::vector<TrainHistoryEntry>& entries,
                         bool zero_timings, long long& next_epoch) {
  const std::string path = (fs::path(dir) / "loss_history.csv").string();
  for (const TrainHistoryEntry& e : entries) {
    std::ostringstream row;
    row << next_epoch++ << ',' << fmt17(e.loss) << ','
        << fmt17(zero_timings ? 0.0 : e.wall_s);
    append_csv_row(path, "epoch,loss,wall_s", row.str());
  }
}

int run_train(TrainOpts o) {
  const Strategy strategy = strategy_from_tag(o.strategy);
  if (o.classes.empty()) throw ValidationError("no training classes given");
  if (o.count < 1) throw ValidationError("--count must be at least 1");
  std::vector<PolygonClass> classes;
  for (const std::string& tag : o.classes) {
    const PolygonClass cls = parse_class_tag(tag);
    if (cls.n_vertices != 4)
      throw ValidationError(
          "the training-set generator produces quadrilaterals; class '" +
          tag + "' is not trainable here");
    classes.push_back(cls);
  }

  fs::create_directories(o.out);
  TrainState state;
  BasisBundle bundle;
  bundle.strategy = strategy;
  if (o.resume) {
    state = load_train_state(o);
    if (!state.completed.empty())
      bundle = load_bundle(o.out, strategy);
  } else {
    if (fs::exists(train_state_path(o.out)))
      throw ValidationError(
          "output directory already holds a checkpoint; pass --resume to "
          "continue it or choose a fresh --out");
    state.classes = o.classes;
    state.protocol = train_protocol_json(o);
    save_train_state(o, state);
    // a fresh run starts a fresh history
    const std::string history = (fs::path(o.out) / "loss_history.csv").string();
    if (fs::exists(history)) fs::remove(history);
  }

  int trained_this_run = 0;
  for (std::size_t ordinal = 0; ordinal < o.classes.size(); ++ordinal) {
    const std::string& tag = o.classes[ordinal];
    if (std::find(state.completed.begin(), state.completed.end(), tag) !=
        state.completed.end())
      continue;
    if (o.max_classes > 0 && trained_this_run >= o.max_classes) {
      warn("checkpoint after " + std::to_string(trained_this_run) +
           " class(es); resume with --resume to finish " + tag);
      return 0;
    }

    TrainProtocol proto;
    proto.adam_epochs = o.adam;
    proto.qn_epochs = o.qn;
    proto.seed = o.seed + 101 * static_cast<std::uint64_t>(ordinal);
    proto.lattice_n = o.lattice;
    proto.edge_points = o.edge_points;
    proto.harmonic_degree = o.degree;
    proto.threads = o.threads;

    warn("training " + o.strategy + " " + tag + ": " +
         std::to_string(o.count) + " quads, " + std::to_string(o.adam) +
         " adam + " + std::to_string(o.qn) + " quasi-newton epochs");
    const auto dataset =
        dataset_random_quads(o.count, classes[ordinal].convex,
                             proto.seed + 1);
    TrainResult res;
    try {
      res = train_strategy(strategy, dataset, o.hidden, proto);
    } catch (const NonFinite&) {
      warn("training loss went non-finite; checkpoint in " + o.out +
           " holds the classes completed so far");
      throw;
    }

    for (const auto& [key, net] : res.bundle.value_nets)
      bundle.value_nets[key] = net;
    for (const auto& [key, net] : res.bundle.gradient_nets)
      bundle.gradient_nets[key] = net;
    if (strategy == Strategy::h) {
      bundle.harmonic_degree = res.bundle.harmonic_degree;
      bundle.phi = res.bundle.phi;
    }

    append_loss_history(o.out, res.history, o.zero_timings, state.next_epoch);
    append_loss_history(o.out, res.gradient_history, o.zero_timings,
                        state.next_epoch);
    save_bundle(bundle, o.out);
    state.completed.push_back(tag);
    save_train_state(o, state);
    ++trained_this_run;

    std::ostringstream note;
    note << "finished " << tag << ": loss " << fmt17(res.initial_loss)
         << " -> " << fmt17(res.final_loss);
    if (strategy == Strategy::h)
      note << ", gradient loss " << fmt17(res.initial_gradient_loss) << " -> "
           << fmt17(res.final_gradient_loss);
    warn(note.str());
  }
  warn("bundle complete in " + o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveOpts {
  std::string problem;
  std::string method;
  std::string mesh;
  std::string models;
  double lambda = 1.0;
  std::string out;
  std::string field;
  std::uint64_t seed = 0;
  int threads = 0;
  bool zero_timings = false;
};

std::string field_json_text(const std::string& mesh_name,
                            const SolveOpts& o, const VecX& values) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"schema\": \"navemlab-field-v1\",\n";
  out << "  \"problem\": \"" << o.problem << "\",\n";
  out << "  \"method\": \"" << o.method << "\",\n";
  out << "  \"mesh\": \"" << mesh_name << "\",\n";
  out << "  \"values\": [";
  for (Eigen::Index i = 0; i < values.size(); ++i)
    out << (i ? ", " : "") << fmt17(values[i]);
  out << "]\n}\n";
  return out.str();
}

int run_solve(const SolveOpts& o) {
  const Method method = method_from_tag(o.method);
  const ProblemChoice choice{o.problem, o.lambda};
  if (choice.name != "poisson" && choice.name != "dar" &&
      choice.name != "nonlinear")
    throw ValidationError("unknown problem '" + choice.name + "'");
  const Mesh mesh = load_mesh(o.mesh);
  const std::string mesh_name = path_stem(o.mesh);
  const std::optional<BasisBundle> bundle =
      load_method_bundle(method, o.models);

  CaseResult result = run_case(mesh_name, mesh, method,
                               bundle ? &*bundle : nullptr, choice,
                               o.threads);
  if (o.zero_timings) zero_record_timings(result.record);
  if (choice.name == "nonlinear") emit_newton_stats(choice, result.newton);

  append_csv_row(o.out, solve_record_header(),
                 solve_record_csv(result.record));
  if (!o.field.empty())
    write_text_file(o.field, field_json_text(mesh_name, o, result.field));
  warn("appended results row to " + o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

struct ConvergenceOpts {
  std::string problem = "dar";
  std::vector<std::string> methods;
  std::vector<std::string> meshes;   // explicit mesh files
  std::string family;                // or a generated family ...
  std::vector<int> levels;           // ... at these refinements
  double perturb = 0.2;
  std::string models;
  double lambda = 1.0;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
  bool zero_timings = false;
};

struct ConvRow {
  SolveRecord record;
  bool ok = false;
};

std::string conv_row_csv(const ConvRow& row) {
  return solve_record_csv(row.record) + (row.ok ? ",ok" : ",failed");
}

// Named meshes for the study: either files from disk or a generated family.
std::vector<std::pair<std::string, Mesh>> convergence_meshes(
    const ConvergenceOpts& o) {
  std::vector<std::pair<std::string, Mesh>> meshes;
  if (!o.meshes.empty() && !o.family.empty())
    throw ValidationError("--meshes and --family are mutually exclusive");
  if (!o.meshes.empty()) {
    for (const std::string& path : o.meshes)
      meshes.emplace_back(path_stem(path), load_mesh(path));
    return meshes;
  }
  if (o.family.empty())
    throw ValidationError("give either --meshes or --family with --levels");
  if (o.levels.empty())
    throw ValidationError("--family needs --levels, e.g. --levels 8,16,32");
  for (const int n : o.levels) {
    const std::string name = o.family + std::to_string(n);
    if (o.family == "tri")
      meshes.emplace_back(name, gen_triangle(n));
    else if (o.family == "quadcc")
      meshes.emplace_back(name, gen_quad_convex_concave(n, o.perturb, o.seed));
    else
      throw ValidationError("unknown mesh family '" + o.family + "'");
  }
  return meshes;
}

struct SlopeFit {
  double err0 = std::numeric_limits<double>::quiet_NaN();
  double errgrad = std::numeric_limits<double>::quiet_NaN();
};

SlopeFit fit_method_slopes(const std::vector<ConvRow>& rows,
                           const std::string& method) {
  std::vector<double> hs, e0, eg;
  for (const ConvRow& r : rows) {
    if (!r.ok || r.record.method != method) continue;
    if (!(r.record.err0 > 0.0) || !(r.record.errgrad > 0.0)) continue;
    hs.push_back(r.record.h);
    e0.push_back(r.record.err0);
    eg.push_back(r.record.errgrad);
  }
  SlopeFit fit;
  if (hs.size() >= 2) {
    fit.err0 = fitted_slope(hs, e0);
    fit.errgrad = fitted_slope(hs, eg);
  }
  return fit;
}

// ----- hand-rolled log-log SVG ---------------------------------------------

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string slope_text(double s) {
  if (!std::isfinite(s)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

const char* method_color(const std::string& tag) {
  if (tag == "fem") return "#1f77b4";
  if (tag == "vem") return "#d62728";
  if (tag == "h") return "#2ca02c";
  if (tag == "b") return "#9467bd";
  if (tag == "p") return "#ff7f0e";
  return "#7f7f7f";
}

std::string convergence_svg(const ConvergenceOpts& o,
                            const std::vector<ConvRow>& rows,
                            const std::string& csv_text) {
  // gather plottable points
  struct Series {
    std::string method;
    std::vector<std::pair<double, double>> err0, errgrad;
  };
  std::vector<Series> series;
  for (const std::string& m : o.methods) {
    Series s;
    s.method = m;
    for (const ConvRow& r : rows) {
      if (!r.ok || r.record.method != m) continue;
      if (r.record.h > 0.0 && r.record.err0 > 0.0)
        s.err0.emplace_back(r.record.h, r.record.err0);
      if (r.record.h > 0.0 && r.record.errgrad > 0.0)
        s.errgrad.emplace_back(r.record.h, r.record.errgrad);
    }
    std::sort(s.err0.begin(), s.err0.end());
    std::sort(s.errgrad.begin(), s.errgrad.end());
    if (!s.err0.empty() || !s.errgrad.empty()) series.push_back(std::move(s));
  }

  double lx0 = 0.0, lx1 = 1.0, ly0 = 0.0, ly1 = 1.0;
  bool have = false;
  for (const Series& s : series)
    for (const auto* pts : {&s.err0, &s.errgrad})
      for (const auto& [h, e] : *pts) {
        const double lx = std::log10(h), ly = std::log10(e);
        if (!have) {
          lx0 = lx1 = lx;
          ly0 = ly1 = ly;
          have = true;
        }
        lx0 = std::min(lx0, lx);
        lx1 = std::max(lx1, lx);
        ly0 = std::min(ly0, ly);
        ly1 = std::max(ly1, ly);
      }
  if (!have) {
    lx0 = ly0 = -1.0;
    lx1 = ly1 = 0.0;
  }
  const double pad = 0.35;
  lx0 -= pad;
  lx1 += pad;
  ly0 -= pad;
  ly1 += pad;

  // plot box
  const double width = 760, height = 520;
  const double left = 80, right = width - 230, top = 40, bottom = height - 60;
  const auto px = [&](double h) {
    return left + (std::log10(h) - lx0) / (lx1 - lx0) * (right - left);
  };
  const auto py = [&](double e) {
    return bottom - (std::log10(e) - ly0) / (ly1 - ly0) * (bottom - top);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  // the raw table rides along for desk inspection of the plotted numbers
  std::string safe = csv_text;
  std::size_t at = 0;
  while ((at = safe.find("--", at)) != std::string::npos) safe[at + 1] = '_';
  svg << "<!--\n" << safe << "-->\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << svg_num((left + right) / 2) << "\" y=\"20\" "
      << "text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << "problem " << o.problem << ": error vs h (log-log)</text>\n";

  // grid lines at integer decades
  for (int e = static_cast<int>(std::ceil(lx0));
       e <= static_cast<int>(std::floor(lx1)); ++e) {
    const double x = left + (e - lx0) / (lx1 - lx0) * (right - left);
    svg << "<line x1=\"" << svg_num(x) << "\" y1=\"" << svg_num(top)
        << "\" x2=\"" << svg_num(x) << "\" y2=\"" << svg_num(bottom)
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << svg_num(x) << "\" y=\"" << svg_num(bottom + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\">1e" << e << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(ly0));
       e <= static_cast<int>(std::floor(ly1)); ++e) {
    const double y = bottom - (e - ly0) / (ly1 - ly0) * (bottom - top);
    svg << "<line x1=\"" << svg_num(left) << "\" y1=\"" << svg_num(y)
        << "\" x2=\"" << svg_num(right) << "\" y2=\"" << svg_num(y)
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << svg_num(left - 8) << "\" y=\"" << svg_num(y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"12\">1e" << e << "</text>\n";
  }
  svg << "<rect x=\"" << svg_num(left) << "\" y=\"" << svg_num(top)
      << "\" width=\"" << svg_num(right - left) << "\" height=\""
      << svg_num(bottom - top) << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << svg_num((left + right) / 2) << "\" y=\""
      << svg_num(height - 14)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"13\">h</text>\n";
  svg << "<text x=\"22\" y=\"" << svg_num((top + bottom) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"13\" transform=\"rotate(-90 22 "
      << svg_num((top + bottom) / 2) << ")\">error</text>\n";

  // curves: solid for the value error, dashed for the gradient error
  const auto polyline = [&](const std::vector<std::pair<double, double>>& pts,
                            const char* color, bool dashed) {
    if (pts.empty()) return;
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\"";
    if (dashed) svg << " stroke-dasharray=\"7,4\"";
    svg << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      svg << (i ? " " : "") << svg_num(px(pts[i].first)) << ","
          << svg_num(py(pts[i].second));
    svg << "\"/>\n";
    for (const auto& [h, e] : pts)
      svg << "<circle cx=\"" << svg_num(px(h)) << "\" cy=\""
          << svg_num(py(e)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  };
  for (const Series& s : series) {
    polyline(s.err0, method_color(s.method), false);
    polyline(s.errgrad, method_color(s.method), true);
  }

  // legend with fitted slopes
  double ly = top + 12;
  const double lx = right + 16;
  for (const Series& s : series) {
    const SlopeFit fit = fit_method_slopes(rows, s.method);
    const char* color = method_color(s.method);
    svg << "<line x1=\"" << svg_num(lx) << "\" y1=\"" << svg_num(ly - 4)
        << "\" x2=\"" << svg_num(lx + 26) << "\" y2=\"" << svg_num(ly - 4)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << svg_num(lx + 32) << "\" y=\"" << svg_num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.method
        << " err0 slope " << slope_text(fit.err0) << "</text>\n";
    ly += 18;
    svg << "<line x1=\"" << svg_num(lx) << "\" y1=\"" << svg_num(ly - 4)
        << "\" x2=\"" << svg_num(lx + 26) << "\" y2=\"" << svg_num(ly - 4)
        << "\" stroke=\"" << color
        << "\" stroke-width=\"2\" stroke-dasharray=\"7,4\"/>\n";
    svg << "<text x=\"" << svg_num(lx + 32) << "\" y=\"" << svg_num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.method
        << " errgrad slope " << slope_text(fit.errgrad) << "</text>\n";
    ly += 24;
  }

  svg << "</svg>\n";
  return svg.str();
}

int run_convergence(const ConvergenceOpts& o) {
  if (o.methods.empty()) throw ValidationError("--methods is required");
  const ProblemChoice choice{o.problem, o.lambda};
  if (choice.name != "poisson" && choice.name != "dar" &&
      choice.name != "nonlinear")
    throw ValidationError("unknown problem '" + choice.name + "'");
  const auto meshes = convergence_meshes(o);

  // one bundle per neural method, loaded once; a missing bundle fails that
  // method's rows rather than the whole study
  std::map<std::string, std::optional<BasisBundle>> bundles;
  std::map<std::string, std::string> method_failures;
  for (const std::string& tag : o.methods) {
    const Method method = method_from_tag(tag);
    try {
      bundles[tag] = load_method_bundle(method, o.models);
    } catch (const Error& e) {
      warn("method " + tag + ": " + e.what());
      method_failures[tag] = e.what();
    }
  }

  std::vector<ConvRow> rows;
  int ok_count = 0;
  for (const auto& [name, mesh] : meshes) {
    for (const std::string& tag : o.methods) {
      ConvRow row;
      row.record.mesh = name;
      row.record.h = mesh.h;
      row.record.method = tag;
      row.record.err0 = std::numeric_limits<double>::quiet_NaN();
      row.record.errgrad = std::numeric_limits<double>::quiet_NaN();
      if (!method_failures.count(tag)) {
        try {
          const Method method = method_from_tag(tag);
          const std::optional<BasisBundle>& bundle = bundles[tag];
          CaseResult res = run_case(name, mesh, method,
                                    bundle ? &*bundle : nullptr, choice,
                                    o.threads);
          if (o.zero_timings) zero_record_timings(res.record);
          row.record = res.record;
          row.ok = true;
          ++ok_count;
        } catch (const Error& e) {
          warn("case " + name + "/" + tag + " failed: " + e.what());
        }
      }
      rows.push_back(std::move(row));
    }
  }

  std::ostringstream csv;
  csv << solve_record_header() << ",status\n";
  for (const ConvRow& row : rows) csv << conv_row_csv(row) << "\n";

  fs::create_directories(o.out);
  write_text_file((fs::path(o.out) / "convergence.csv").string(), csv.str());
  write_text_file((fs::path(o.out) / "convergence.svg").string(),
                  convergence_svg(o, rows, csv.str()));

  for (const std::string& tag : o.methods) {
    const SlopeFit fit = fit_method_slopes(rows, tag);
    warn("method " + tag + ": err0 slope " + slope_text(fit.err0) +
         ", errgrad slope " + slope_text(fit.errgrad));
  }
  if (ok_count == 0) {
    fail_msg("every (method, mesh) case failed");
    return 5;
  }
  warn("wrote " + o.out + "/convergence.csv and convergence.svg");
  return 0;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct MetricsOpts {
  std::string models;
  std::string mesh;
  std::string out;
  int lattice = 13;
  int threads = 0;
};

int run_metrics(const MetricsOpts& o) {
  const Mesh mesh = load_mesh(o.mesh);
  const std::string mesh_name = path_stem(o.mesh);
  if (!fs::is_directory(o.models))
    throw MissingModel("model directory not found: " + o.models);

  std::ostringstream csv;
  csv << "mesh,strategy,eps_phi,eps_q\n";
  int found = 0;
  for (const Strategy s : {Strategy::h, Strategy::b, Strategy::p}) {
    const std::string prefix = strategy_tag(s) + "_";
    bool present = false;
    for (const auto& entry : fs::directory_iterator(o.models)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind(prefix, 0) == 0 && entry.path().extension() == ".json")
        present = true;
    }
    if (!present) continue;
    const BasisBundle bundle = load_bundle(o.models, s);
    const ReproductionMetrics m =
        reproduction_metrics(bundle, mesh.polygons, o.lattice);
    csv << mesh_name << ',' << strategy_tag(s) << ',' << fmt17(m.value)
        << ',' << fmt17(m.gradient) << "\n";
    ++found;
  }
  if (found == 0)
    throw MissingModel("no model files found in " + o.models);
  write_text_file(o.out, csv.str());
  warn("wrote " + o.out);
  return 0;
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

int guarded(int nonfinite_code, const std::function<int()>& body) {
  try {
    return body();
  } catch (const MissingModel& e) {
    fail_msg(e.what());
    return 4;
  } catch (const SingularMatrix& e) {
    fail_msg(e.what());
    return 5;
  } catch (const NewtonDiverged& e) {
    fail_msg(e.what());
    return 5;
  } catch (const NonFinite& e) {
    fail_msg(e.what());
    return nonfinite_code;
  } catch (const Error& e) {
    fail_msg(e.what());
    return 2;
  } catch (const json::exception& e) {
    fail_msg(e.what());
    return 2;
  } catch (const std::exception& e) {
    fail_msg(e.what());
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "navemlab: polygonal-mesh Galerkin solvers with trained basis "
      "networks"};
  app.set_version_flag("--version", "navemlab 0.1.0");
  app.require_subcommand(1);

  std::function<int()> action;

  // ---- mesh ----------------------------------------------------------------
  auto* mesh_cmd = app.add_subcommand("mesh", "generate or inspect meshes");
  mesh_cmd->require_subcommand(1);

  MeshGenOpts gen_opts;
  auto* mesh_gen = mesh_cmd->add_subcommand("gen", "write a mesh JSON file");
  mesh_gen->add_option("--kind", gen_opts.kind, "mesh generator")
      ->required()
      ->check(CLI::IsMember({"quadcc", "tri"}));
  mesh_gen->add_option("--n", gen_opts.n, "refinement level")->required();
  mesh_gen->add_option("--perturb", gen_opts.perturb,
                       "vertex jitter as a fraction of the spacing");
  mesh_gen->add_option("--seed", gen_opts.seed, "jitter seed");
  mesh_gen->add_option("--out", gen_opts.out, "output mesh path")->required();
  int gen_threads = 0;
  mesh_gen->add_option("--threads", gen_threads, "accepted for uniformity")
      ->group("");  // hidden; generation is serial
  mesh_gen->callback([&] {
    action = [&] { return run_mesh_gen(gen_opts); };
  });

  std::string info_mesh, info_out;
  auto* mesh_info = mesh_cmd->add_subcommand("info", "print mesh statistics");
  mesh_info->add_option("mesh", info_mesh, "mesh JSON path")->required();
  mesh_info->add_option("--out", info_out,
                        "write the report here instead of stdout");
  std::uint64_t info_seed = 0;
  int info_threads = 0;
  mesh_info->add_option("--seed", info_seed, "accepted for uniformity")
      ->group("");
  mesh_info->add_option("--threads", info_threads, "accepted for uniformity")
      ->group("");
  mesh_info->callback([&] {
    action = [&] { return run_mesh_info(info_mesh, info_out); };
  });

  // ---- train ---------------------------------------------------------------
  TrainOpts train_opts;
  std::string train_config;
  auto* train = app.add_subcommand("train", "fit basis networks per class");
  auto* t_strategy =
      train->add_option("--strategy", train_opts.strategy, "h, b or p")
          ->check(CLI::IsMember({"h", "b", "p"}));
  auto* t_classes = train
                        ->add_option("--classes", train_opts.classes,
                                     "polygon classes, e.g. 4-convex")
                        ->delimiter(',');
  auto* t_count =
      train->add_option("--count", train_opts.count, "quads per class");
  auto* t_hidden = train
                       ->add_option("--hidden", train_opts.hidden,
                                    "hidden layer widths, e.g. 30,30,30")
                       ->delimiter(',');
  auto* t_adam = train->add_option("--adam", train_opts.adam, "Adam epochs");
  auto* t_qn =
      train->add_option("--qn", train_opts.qn, "quasi-Newton epoch cap");
  auto* t_lattice = train->add_option("--lattice", train_opts.lattice,
                                      "interior lattice density");
  auto* t_edge = train->add_option("--edge-points", train_opts.edge_points,
                                   "boundary points per edge");
  auto* t_degree = train->add_option("--degree", train_opts.degree,
                                     "harmonic expansion degree");
  auto* t_seed = train->add_option("--seed", train_opts.seed, "base seed");
  train->add_option("--threads", train_opts.threads,
                    "worker threads (0: NAVEM_LAB_THREADS or 1)");
  train->add_option("--out", train_opts.out, "bundle output directory")
      ->required();
  train->add_flag("--resume", train_opts.resume,
                  "continue from the checkpoint in --out");
  auto* t_desk = train->add_flag("--desk", train_opts.desk,
                                 "desk-scale preset (p, 4-convex, 3x30 net, "
                                 "500+500 epochs, 50 quads)");
  train->add_flag("--zero-timings", train_opts.zero_timings,
                  "write zeros in wall-time columns (reproducible bytes)");
  train->add_option("--max-classes", train_opts.max_classes,
                    "checkpoint and stop after this many classes");
  train->add_option("--config", train_config, "JSON config file");
  train->callback([&] {
    action = [&, t_strategy, t_classes, t_count, t_hidden, t_adam, t_qn,
              t_lattice, t_edge, t_degree, t_seed, t_desk] {
      ConfigBinder binder;
      binder.bind("strategy", t_strategy, train_opts.strategy);
      binder.bind("classes", t_classes, train_opts.classes);
      binder.bind("count", t_count, train_opts.count);
      binder.bind("hidden", t_hidden, train_opts.hidden);
      binder.bind("adam", t_adam, train_opts.adam);
      binder.bind("qn", t_qn, train_opts.qn);
      binder.bind("lattice", t_lattice, train_opts.lattice);
      binder.bind("edge_points", t_edge, train_opts.edge_points);
      binder.bind("degree", t_degree, train_opts.degree);
      binder.bind("seed", t_seed, train_opts.seed);
      binder.apply(train_config);
      if (train_opts.desk) {
        if (t_strategy->count() == 0 && train_opts.strategy.empty())
          train_opts.strategy = "p";
        if (t_classes->count() == 0) train_opts.classes = {"4-convex"};
        if (t_count->count() == 0) train_opts.count = 50;
        if (t_hidden->count() == 0) train_opts.hidden = {30, 30, 30};
        if (t_adam->count() == 0) train_opts.adam = 500;
        if (t_qn->count() == 0) train_opts.qn = 500;
      }
      if (train_opts.strategy.empty())
        throw ValidationError("--strategy is required (or use --desk)");
      return run_train(train_opts);
    };
  });

  // ---- solve ---------------------------------------------------------------
  SolveOpts solve_opts;
  std::string solve_config;
  auto* solve = app.add_subcommand("solve", "run one case, append a CSV row");
  auto* s_problem =
      solve->add_option("--problem", solve_opts.problem, "problem family")
          ->check(CLI::IsMember({"poisson", "dar", "nonlinear"}));
  auto* s_method =
      solve->add_option("--method", solve_opts.method, "discretization")
          ->check(CLI::IsMember({"h", "b", "p", "vem", "fem"}));
  auto* s_mesh = solve->add_option("--mesh", solve_opts.mesh, "mesh JSON");
  auto* s_models = solve->add_option("--models", solve_opts.models,
                                     "trained bundle directory");
  auto* s_lambda = solve->add_option("--lambda", solve_opts.lambda,
                                     "nonlinear diffusion parameter");
  auto* s_out =
      solve->add_option("--out", solve_opts.out, "results CSV to append to");
  auto* s_field = solve->add_option("--field", solve_opts.field,
                                    "also dump the vertex field JSON here");
  solve->add_option("--seed", solve_opts.seed, "accepted for uniformity");
  solve->add_option("--threads", solve_opts.threads,
                    "assembly threads (0: NAVEM_LAB_THREADS or 1)");
  solve->add_flag("--zero-timings", solve_opts.zero_timings,
                  "write zeros in timing columns (reproducible bytes)");
  solve->add_option("--config", solve_config, "JSON config file");
  solve->callback([&] {
    action = [&, s_problem, s_method, s_mesh, s_models, s_lambda, s_out,
              s_field] {
      ConfigBinder binder;
      binder.bind("problem", s_problem, solve_opts.problem);
      binder.bind("method", s_method, solve_opts.method);
      binder.bind("mesh", s_mesh, solve_opts.mesh);
      binder.bind("models", s_models, solve_opts.models);
      binder.bind("lambda", s_lambda, solve_opts.lambda);
      binder.bind("out", s_out, solve_opts.out);
      binder.bind("field", s_field, solve_opts.field);
      binder.apply(solve_config);
      if (solve_opts.problem.empty() || solve_opts.method.empty() ||
          solve_opts.mesh.empty() || solve_opts.out.empty())
        throw ValidationError(
            "--problem, --method, --mesh and --out are required (flags or "
            "config)");
      return run_solve(solve_opts);
    };
  });

  // ---- convergence -----------------------------------------------------------
  ConvergenceOpts conv_opts;
  std::string conv_config;
  auto* conv = app.add_subcommand(
      "convergence", "error-vs-h study with CSV and SVG outputs");
  auto* c_problem =
      conv->add_option("--problem", conv_opts.problem, "problem family")
          ->check(CLI::IsMember({"poisson", "dar", "nonlinear"}));
  auto* c_methods = conv
                        ->add_option("--methods", conv_opts.methods,
                                     "comma list from h,b,p,vem,fem")
                        ->delimiter(',');
  auto* c_meshes =
      conv->add_option("--meshes", conv_opts.meshes, "mesh JSON files")
          ->delimiter(',');
  auto* c_family = conv->add_option("--family", conv_opts.family,
                                    "generated family: tri or quadcc");
  auto* c_levels =
      conv->add_option("--levels", conv_opts.levels, "family refinements")
          ->delimiter(',');
  auto* c_perturb = conv->add_option("--perturb", conv_opts.perturb,
                                     "quadcc jitter fraction");
  auto* c_models = conv->add_option("--models", conv_opts.models,
                                    "trained bundle directory");
  auto* c_lambda = conv->add_option("--lambda", conv_opts.lambda,
                                    "nonlinear diffusion parameter");
  auto* c_seed = conv->add_option("--seed", conv_opts.seed, "family seed");
  conv->add_option("--threads", conv_opts.threads,
                   "assembly threads (0: NAVEM_LAB_THREADS or 1)");
  auto* c_out = conv->add_option("--out", conv_opts.out, "output directory");
  conv->add_flag("--zero-timings", conv_opts.zero_timings,
                 "write zeros in timing columns (reproducible bytes)");
  conv->add_option("--config", conv_config, "JSON config file");
  conv->callback([&] {
    action = [&, c_problem, c_methods, c_meshes, c_family, c_levels,
              c_perturb, c_models, c_lambda, c_seed, c_out] {
      ConfigBinder binder;
      binder.bind("problem", c_problem, conv_opts.problem);
      binder.bind("methods", c_methods, conv_opts.methods);
      binder.bind("meshes", c_meshes, conv_opts.meshes);
      binder.bind("family", c_family, conv_opts.family);
      binder.bind("levels", c_levels, conv_opts.levels);
      binder.bind("perturb", c_perturb, conv_opts.perturb);
      binder.bind("models", c_models, conv_opts.models);
      binder.bind("lambda", c_lambda, conv_opts.lambda);
      binder.bind("seed", c_seed, conv_opts.seed);
      binder.bind("out", c_out, conv_opts.out);
      binder.apply(conv_config);
      if (conv_opts.out.empty())
        throw ValidationError("--out directory is required");
      return run_convergence(conv_opts);
    };
  });

  // ---- metrics ---------------------------------------------------------------
  MetricsOpts metrics_opts;
  std::string metrics_config;
  auto* metrics = app.add_subcommand(
      "metrics", "polynomial reproduction metrics of stored bundles");
  auto* m_models = metrics->add_option("--models", metrics_opts.models,
                                       "bundle directory");
  auto* m_mesh =
      metrics->add_option("--mesh", metrics_opts.mesh, "mesh JSON path");
  auto* m_out =
      metrics->add_option("--out", metrics_opts.out, "metrics CSV path");
  metrics->add_option("--threads", metrics_opts.threads,
                      "accepted for uniformity");
  std::uint64_t metrics_seed = 0;
  metrics->add_option("--seed", metrics_seed, "accepted for uniformity")
      ->group("");
  metrics->add_option("--config", metrics_config, "JSON config file");
  metrics->callback([&] {
    action = [&, m_models, m_mesh, m_out] {
      ConfigBinder binder;
      binder.bind("models", m_models, metrics_opts.models);
      binder.bind("mesh", m_mesh, metrics_opts.mesh);
      binder.bind("out", m_out, metrics_opts.out);
      binder.apply(metrics_config);
      if (metrics_opts.models.empty() || metrics_opts.mesh.empty() ||
          metrics_opts.out.empty())
        throw ValidationError(
            "--models, --mesh and --out are required (flags or config)");
      return run_metrics(metrics_opts);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (!action) {
    fail_msg("no action selected");
    return 2;
  }
  const bool training = train->parsed();
  const bool solving = solve->parsed() || conv->parsed();
  return guarded(training ? 3 : (solving ? 5 : 2), action);
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coeffrec/config.hpp"
#include "coeffrec/errors.hpp"
#include "coeffrec/harness.hpp"

namespace py = pybind11;
using namespace coeffrec;

namespace {

using Array = py::array_t<double>;

Array to_array(const std::vector<double>& v) { return Array(py::ssize_t(v.size()), v.data()); }

Array to_matrix(const std::vector<std::vector<double>>& rows) {
  const py::ssize_t r = py::ssize_t(rows.size()), c = rows.empty() ? 0 : py::ssize_t(rows[0].size());
  Array out({r, c});
  auto m = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < r; ++i)
    for (py::ssize_t j = 0; j < c; ++j) m(i, j) = rows[std::size_t(i)][std::size_t(j)];
  return out;
}

Array node_array(const Mesh& mesh) {
  Array out({py::ssize_t(mesh.num_nodes()), py::ssize_t(mesh.dim())});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
    for (int c = 0; c < mesh.dim(); ++c) m(py::ssize_t(i), c) = mesh.node(i)[c];
  return out;
}

std::filesystem::path config_dir_or_default(const std::optional<std::filesystem::path>& dir) {
  return dir ? *dir : default_config_dir();
}

GradientMode parse_mode(const std::string& s) {
  if (s == "adjoint") return GradientMode::discrete_adjoint;
  if (s == "riesz") return GradientMode::riesz;
  throw ConfigError("gradient_mode must be 'adjoint' or 'riesz'");
}

AssemblyMode parse_level(int level) {
  if (level < -1 || level > 8) throw ConfigError("quadrature_level must be -1 (exact) or 0..8");
  return level < 0 ? AssemblyMode::exact() : AssemblyMode::quadrature(level);
}

struct Overrides {
  std::optional<int> max_iters;
  std::optional<double> gamma;
  std::optional<double> learning_rate;
  std::optional<int> cells;
  std::optional<int> time_steps;
  std::optional<std::vector<int>> hidden;
};

RunOptions make_options(std::uint64_t seed, int level, const std::string& mode, const Overrides& o) {
  RunOptions opts;
  opts.seed = seed;
  opts.mode = parse_level(level);
  opts.gradient_mode = parse_mode(mode);
  opts.max_iters = o.max_iters;
  opts.gamma = o.gamma;
  opts.learning_rate = o.learning_rate;
  opts.cells = o.cells;
  opts.time_steps = o.time_steps;
  opts.hidden = o.hidden;
  return opts;
}

ExampleSpec with_overrides(ExampleSpec spec, const RunOptions& opts) {
  if (opts.cells) spec.cells = *opts.cells;
  if (opts.time_steps) spec.time_steps = *opts.time_steps;
  if (opts.hidden) spec.hidden = *opts.hidden;
  return spec;
}

std::string kind_name(ProblemKind k) { return k == ProblemKind::elliptic ? "elliptic" : "parabolic"; }

py::dict solve_forward(const ExampleSpec& spec_in, std::optional<int> cells, std::optional<int> time_steps,
                       int level) {
  ExampleSpec spec = spec_in;
  if (cells) spec.cells = *cells;
  if (time_steps) spec.time_steps = *time_steps;
  const Mesh mesh = spec.inversion_mesh();
  const AssemblyMode mode = parse_level(level);
  std::vector<std::vector<double>> states;
  {
    py::gil_scoped_release release;
    if (spec.kind == ProblemKind::elliptic) {
      states.push_back(solve_elliptic({&mesh, spec.q_true, spec.f, mode}).values());
    } else {
      for (auto& s : solve_parabolic({&mesh, spec.q_true, spec.f_t, spec.u0, spec.T, spec.time_steps, mode}))
        states.push_back(s.values());
    }
  }
  py::dict out;
  out["nodes"] = node_array(mesh);
  out["states"] = to_matrix(states);
  return out;
}

py::dict reconstruct(const ExampleSpec& spec_in, double noise, const std::string& method, std::uint64_t seed,
                     int level, const std::string& gradient_mode, const Overrides& o) {
  const RunOptions opts = make_options(seed, level, gradient_mode, o);
  const ExampleSpec spec = with_overrides(spec_in, opts);
  CellResult c;
  {
    py::gil_scoped_release release;
    c = run_cell(spec, noise, method == "fem-baseline" ? "fem" : method, opts);
  }
  const Mesh mesh = spec.inversion_mesh();
  std::vector<double> q(mesh.num_nodes(), std::nan(""));
  if (c.result.params) {
    const auto field = projected_network(*c.result.params, spec.bounds);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = field(mesh.node(i));
  } else if (c.result.nodal_q) {
    q = *c.result.nodal_q;
  }
  py::dict out;
  out["example"] = c.example;
  out["method"] = c.method;
  out["noise"] = c.noise;
  out["gamma"] = c.gamma;
  out["relative_error"] = c.error;
  out["reference"] = c.reference;
  out["delta"] = c.delta;
  out["iterations"] = c.iterations;
  out["ok"] = c.ok;
  out["status"] = c.status;
  out["loss_history"] = to_array(c.result.loss_history);
  out["nodes"] = node_array(mesh);
  out["coefficient"] = to_array(q);
  return out;
}

py::dict gradcheck(const ExampleSpec& spec, double noise, const std::string& method, int directions,
                   std::uint64_t seed, int level, double corrupt, const Overrides& o) {
  const RunOptions opts = make_options(seed, level, "adjoint", o);
  GradientCheckReport rep;
  {
    py::gil_scoped_release release;
    const Instance in = make_instance(spec, noise, method == "fem-baseline" ? "fem" : method, opts);
    if (method == "hybrid") {
      rep = check_hybrid_gradient(*in.model, glorot_init(in.spec.layer_sizes(), seed, in.spec.output_bias),
                                  directions, seed, corrupt);
    } else {
      std::vector<double> q(in.mesh->num_nodes());
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = in.spec.q_true(in.mesh->node(i));
      rep = check_fem_gradient(*in.model, q, directions, seed, corrupt);
    }
  }
  py::dict out;
  out["max_discrepancy"] = rep.max_discrepancy;
  out["discrepancies"] = to_array(rep.discrepancies);
  out["passed"] = rep.max_discrepancy <= 1e-4;
  return out;
}

Overrides overrides(std::optional<int> max_iters, std::optional<double> gamma, std::optional<double> learning_rate,
                    std::optional<int> cells, std::optional<int> time_steps, std::optional<std::vector<int>> hidden) {
  return {max_iters, gamma, learning_rate, cells, time_steps, std::move(hidden)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diffusion coefficient identification: P1 finite elements with a neural network coefficient";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<SolverFailure> solver_failure(m, "SolverFailure", PyExc_RuntimeError);
  static py::exception<Divergence> divergence(m, "Divergence", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const SolverFailure& e) {
      py::set_error(solver_failure, e.what());
    } catch (const Divergence& e) {
      py::set_error(divergence, e.what());
    }
  });

  py::class_<ExampleSpec>(m, "Example")
      .def_readonly("id", &ExampleSpec::id)
      .def_readonly("title", &ExampleSpec::title)
      .def_property_readonly("kind", [](const ExampleSpec& s) { return kind_name(s.kind); })
      .def_readonly("dim", &ExampleSpec::dim)
      .def_readonly("cells", &ExampleSpec::cells)
      .def_readonly("time_steps", &ExampleSpec::time_steps)
      .def_readonly("T", &ExampleSpec::T)
      .def_readonly("T0", &ExampleSpec::T0)
      .def_readonly("hidden", &ExampleSpec::hidden)
      .def_property_readonly("bounds", [](const ExampleSpec& s) { return py::make_tuple(s.bounds.c0, s.bounds.c1); })
      .def_property_readonly("noise_levels",
                             [](const ExampleSpec& s) {
                               std::vector<double> v;
                               for (const auto& r : s.schedule) v.push_back(r.noise);
                               return v;
                             })
      .def(
          "schedule",
          [](const ExampleSpec& s, double noise) {
            const auto& r = s.setting(noise);
            py::dict d;
            d["gamma_hybrid"] = r.gamma_theta;
            d["gamma_fem"] = r.gamma_h;
            d["reference_hybrid"] = r.reference_hybrid;
            d["reference_fem"] = r.reference_fem;
            return d;
          },
          py::arg("noise"))
      .def(
          "q_true",
          [](const ExampleSpec& s, const Array& points) {
            const auto p = points.unchecked<2>();
            std::vector<double> v(std::size_t(p.shape(0)));
            for (py::ssize_t i = 0; i < p.shape(0); ++i)
              v[std::size_t(i)] = s.q_true({p(i, 0), p.shape(1) > 1 ? p(i, 1) : 0.0});
            return to_array(v);
          },
          py::arg("points"), "Exact coefficient at an (n, dim) array of points")
      .def("__repr__", [](const ExampleSpec& s) { return "<Example " + s.id + ": " + s.title + ">"; });

  m.def("example_ids", &example_ids);
  m.def("default_config_dir", &default_config_dir);
  m.def(
      "load_example",
      [](const std::string& id, std::optional<std::filesystem::path> dir) {
        return load_example(id, config_dir_or_default(dir));
      },
      py::arg("id"), py::arg("config_dir") = py::none());

  m.def("solve_forward", &solve_forward, py::arg("example"), py::arg("cells") = py::none(),
        py::arg("time_steps") = py::none(), py::arg("quadrature_level") = -1,
        "Forward solve with the exact coefficient; states has one row per time level");

  m.def(
      "reconstruct",
      [](const ExampleSpec& spec, double noise, const std::string& method, std::uint64_t seed, int level,
         const std::string& gradient_mode, std::optional<int> max_iters, std::optional<double> gamma,
         std::optional<double> learning_rate, std::optional<int> cells, std::optional<int> time_steps,
         std::optional<std::vector<int>> hidden) {
        return reconstruct(spec, noise, method, seed, level, gradient_mode,
                           overrides(max_iters, gamma, learning_rate, cells, time_steps, std::move(hidden)));
      },
      py::arg("example"), py::arg("noise"), py::arg("method") = "hybrid", py::arg("seed") = 1,
      py::arg("quadrature_level") = 0, py::arg("gradient_mode") = "adjoint", py::arg("max_iters") = py::none(),
      py::arg("gamma") = py::none(), py::arg("learning_rate") = py::none(), py::arg("cells") = py::none(),
      py::arg("time_steps") = py::none(), py::arg("hidden") = py::none(),
      "Synthesize noisy data, train, and report the relative error");

  m.def(
      "gradcheck",
      [](const ExampleSpec& spec, double noise, const std::string& method, int directions, std::uint64_t seed,
         int level, double corrupt, std::optional<int> cells, std::optional<int> time_steps,
         std::optional<std::vector<int>> hidden) {
        return gradcheck(spec, noise, method, directions, seed, level, corrupt,
                         overrides(std::nullopt, std::nullopt, std::nullopt, cells, time_steps, std::move(hidden)));
      },
      py::arg("example"), py::arg("noise"), py::arg("method") = "hybrid", py::arg("directions") = 8,
      py::arg("seed") = 1, py::arg("quadrature_level") = 0, py::arg("corrupt") = 1.0, py::arg("cells") = py::none(),
      py::arg("time_steps") = py::none(), py::arg("hidden") = py::none());

  m.def(
      "study",
      [](const std::string& kind, const std::string& example, std::optional<int> max_iters, std::uint64_t seed,
         std::optional<std::filesystem::path> dir) {
        RunOptions opts;
        opts.seed = seed;
        opts.max_iters = max_iters;
        StudyResult st;
        {
          py::gil_scoped_release release;
          st = run_convergence_study(kind, config_dir_or_default(dir), example, opts);
        }
        py::list rows;
        for (const auto& r : st.rows) rows.append(py::make_tuple(r.series, r.parameter, r.error));
        py::dict out;
        out["kind"] = st.kind;
        out["rows"] = rows;
        out["slopes"] = st.slopes;
        return out;
      },
      py::arg("kind"), py::arg("example") = "ex51i", py::arg("max_iters") = py::none(), py::arg("seed") = 1,
      py::arg("config_dir") = py::none());
}

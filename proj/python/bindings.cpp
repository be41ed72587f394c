#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pmn/error.hpp"
#include "pmn/pipelines.hpp"
#include "pmn/solver.hpp"
#include "pmn/structure.hpp"
#include "pmn/synth.hpp"

namespace py = pybind11;
using namespace pmn;

namespace {

using PairList = std::vector<std::pair<int, int>>;

PairList to_tuples(const std::vector<VariablePair>& pairs) {
  PairList out;
  for (const auto& p : pairs) out.emplace_back(p.u, p.v);
  return out;
}

std::vector<VariablePair> from_tuples(const PairList& pairs) {
  std::vector<VariablePair> out;
  for (const auto& [u, v] : pairs) out.push_back({std::min(u, v), std::max(u, v)});
  return out;
}

PairList support_pairs(const ParamBlocks& theta) {
  PairList out;
  for (std::size_t t : extract_support(theta).active) out.emplace_back(theta.index().pair(t).u, theta.index().pair(t).v);
  return out;
}

SolverConfig make_config(std::uint64_t seed, int max_iter, double tol_kkt, bool include_diagonal) {
  SolverConfig cfg;
  cfg.seed = seed;
  cfg.max_iter = max_iter;
  cfg.tol_kkt = tol_kkt;
  cfg.include_diagonal = include_diagonal;
  return cfg;
}

EdgeList::Scope parse_scope(const std::string& s) {
  if (s == "cross") return EdgeList::Scope::cross_group_only;
  if (s == "all") return EdgeList::Scope::all;
  throw ConfigError("scope must be 'cross' or 'all', got '" + s + "'");
}

py::list edge_dicts(const EdgeList& edges) {
  py::list out;
  for (const auto& e : edges.edges) {
    py::dict d;
    d["u"] = e.u;
    d["v"] = e.v;
    d["weight"] = e.weight;
    d["sign"] = e.sign;
    out.append(d);
  }
  return out;
}

EdgeList edges_of(const ParamBlocks& theta, const Partition& partition, const std::string& scope, std::size_t top) {
  auto edges = cross_group_edges(extract_support(theta), theta, partition, parse_scope(scope));
  if (top > 0 && edges.edges.size() > top) edges.edges.resize(top);
  return edges;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Partitioned Markov network structure learning";

  // owned for the life of the process, never released at interpreter shutdown
  static PyObject* pmn_error = PyErr_NewException("pmn._core.PmnError", PyExc_ValueError, nullptr);
  m.add_object("PmnError", py::handle(pmn_error));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const NumericError& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    } catch (const Error& e) {
      PyErr_SetString(pmn_error, e.what());
    }
  });

  py::class_<Partition>(m, "Partition")
      .def(py::init<std::vector<int>, std::vector<int>>(), py::arg("group1"), py::arg("group2"))
      .def_static("contiguous", &Partition::contiguous, py::arg("m1"), py::arg("m2"))
      .def_static("parse", [](const std::string& spec, int m) { return parse_partition(spec, m); }, py::arg("spec"),
                  py::arg("m"))
      .def_property_readonly("group1", &Partition::group1)
      .def_property_readonly("group2", &Partition::group2)
      .def_property_readonly("m", &Partition::m)
      .def("__str__", [](const Partition& p) { return format_partition(p); })
      .def("__repr__", [](const Partition& p) { return "Partition('" + format_partition(p) + "')"; })
      .def(py::self == py::self);

  py::class_<FeatureMap>(m, "FeatureMap")
      .def_static("product", &FeatureMap::product)
      .def_static("squared_product", &FeatureMap::squared_product)
      .def_static("kronecker_delta", &FeatureMap::kronecker_delta, py::arg("categories"))
      .def_static("from_name", &FeatureMap::from_name, py::arg("name"), py::arg("categories") = 0)
      .def_property_readonly("name", &FeatureMap::name)
      .def_property_readonly("block_dim", &FeatureMap::block_dim)
      .def("eval", &FeatureMap::eval_scalar, py::arg("a"), py::arg("c"))
      .def("__repr__", [](const FeatureMap& f) { return "FeatureMap('" + f.name() + "')"; });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const Eigen::MatrixXd& samples, const Partition& partition, int categories) {
             return Dataset(samples, partition, categories > 0 ? Domain::categorical(categories) : Domain::continuous());
           }),
           py::arg("samples"), py::arg("partition"), py::arg("categories") = 0)
      .def_property_readonly("samples", &Dataset::samples)
      .def_property_readonly("partition", &Dataset::partition)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("m", &Dataset::m)
      .def("__repr__", [](const Dataset& d) {
        return "Dataset(n=" + std::to_string(d.n()) + ", m=" + std::to_string(d.m()) + ", partition='" +
               format_partition(d.partition()) + "')";
      });

  m.def(
      "load_csv",
      [](const std::string& path, const std::string& partition, const std::string& mode, int categories) {
        LoadOptions opt;
        if (mode == "numeric") opt.mode = CellMode::numeric;
        else if (mode == "categorical") opt.mode = CellMode::categorical;
        else if (mode == "vote") opt.mode = CellMode::vote;
        else throw ConfigError("mode must be numeric, categorical or vote");
        opt.categories = categories;
        auto loaded = load_csv_dataset(path, partition, opt);
        return py::make_tuple(std::move(loaded.data), loaded.names);
      },
      py::arg("path"), py::arg("partition"), py::arg("mode") = "numeric", py::arg("categories") = 0,
      "Returns (Dataset, column names).");

  m.def("write_csv", &write_csv_dataset, py::arg("data"), py::arg("names"), py::arg("path"));

  py::class_<Objective>(m, "Objective")
      .def(py::init([](const Dataset& data, const FeatureMap& f, bool include_diagonal, std::uint64_t seed) {
             return Objective(data, f, build_pair_index(data.m(), include_diagonal, f.block_dim()), PairPolicy::automatic(seed));
           }),
           py::arg("data"), py::arg("feature"), py::arg("include_diagonal") = false, py::arg("seed") = 0)
      .def_property_readonly("dim", &Objective::dim)
      .def_property_readonly("blocks", [](const Objective& o) { return to_tuples(o.index().pairs()); })
      .def_property_readonly("pair_count", [](const Objective& o) { return o.pairs().size(); })
      .def("value", [](const Objective& o, const Eigen::VectorXd& th) { return o.value(th); }, py::arg("theta"))
      .def("raw_value", [](const Objective& o, const Eigen::VectorXd& th) { return o.value(th, Scaling::raw); },
           py::arg("theta"))
      .def("gradient", [](const Objective& o, const Eigen::VectorXd& th) { return o.gradient(th); }, py::arg("theta"))
      .def("log_normalizer", [](const Objective& o, const Eigen::VectorXd& th) { return o.normalizer(th).log_value; },
           py::arg("theta"))
      .def("lambda_max", [](const Objective& o) { return lambda_max(o); });

  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly("theta", [](const FitResult& r) { return r.theta_hat.flat(); })
      .def_property_readonly("blocks", [](const FitResult& r) { return to_tuples(r.theta_hat.index().pairs()); })
      .def_readonly("lam", &FitResult::lambda)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("objective_trace", &FitResult::objective_trace)
      .def_property_readonly("kkt_max_residual", [](const FitResult& r) { return r.kkt.max_residual; })
      .def_property_readonly("support", [](const FitResult& r) { return support_pairs(r.theta_hat); })
      .def(
          "edges",
          [](const FitResult& r, const Partition& p, const std::string& scope, std::size_t top) {
            return edge_dicts(edges_of(r.theta_hat, p, scope, top));
          },
          py::arg("partition"), py::arg("scope") = "cross", py::arg("top") = 0)
      .def(
          "to_dot",
          [](const FitResult& r, const Partition& p, const std::vector<std::string>& names, std::size_t top,
             double pen_scale) {
            DotStyle style;
            style.pen_scale = pen_scale;
            return render_edges(edges_of(r.theta_hat, p, "cross", top), EdgeFormat::dot, names, style);
          },
          py::arg("partition"), py::arg("names") = std::vector<std::string>{}, py::arg("top") = 0,
          py::arg("pen_scale") = 10.0);

  m.def(
      "fit",
      [](const Dataset& data, const FeatureMap& f, double lam, std::uint64_t seed, int max_iter, double tol_kkt,
         bool include_diagonal) { return fit(data, f, lam, make_config(seed, max_iter, tol_kkt, include_diagonal)); },
      py::arg("data"), py::arg("feature"), py::arg("lam"), py::arg("seed") = 0, py::arg("max_iter") = 2000,
      py::arg("tol_kkt") = 1e-6, py::arg("include_diagonal") = false);

  py::class_<PathResult>(m, "PathResult")
      .def_property_readonly("lambdas",
                             [](const PathResult& p) {
                               std::vector<double> out;
                               for (const auto& e : p.entries) out.push_back(e.lambda);
                               return out;
                             })
      .def_property_readonly("fits",
                             [](const PathResult& p) {
                               std::vector<FitResult> out;
                               for (const auto& e : p.entries) out.push_back(e.fit);
                               return out;
                             })
      .def_property_readonly("support_sizes",
                             [](const PathResult& p) {
                               std::vector<std::size_t> out;
                               for (const auto& e : p.entries) out.push_back(e.support_size);
                               return out;
                             })
      .def_readonly("lambda_max0", &PathResult::lambda_max0)
      .def_property_readonly("stop_reason", [](const PathResult& p) { return to_string(p.stop_reason); })
      .def(
          "roc",
          [](const PathResult& p, const PairList& truth) {
            if (p.entries.empty()) throw ConfigError("roc: empty path");
            const auto& index = p.entries.front().fit.theta_hat.index();
            const auto curve = roc_curve(p, support_from_pairs(index, from_tuples(truth)));
            py::dict d;
            d["auc"] = curve.auc;
            std::vector<std::pair<double, double>> raw, env;
            for (const auto& pt : curve.raw) raw.emplace_back(pt.tnr, pt.tpr);
            for (const auto& pt : curve.envelope) env.emplace_back(pt.tnr, pt.tpr);
            d["raw"] = raw;
            d["envelope"] = env;
            return d;
          },
          py::arg("truth"), "ROC over the path; points are (TNR, TPR).");

  m.def(
      "lambda_path",
      [](const Dataset& data, const FeatureMap& f, const std::string& schedule, std::uint64_t seed, bool include_diagonal) {
        return lambda_path(data, f, Schedule::parse(schedule), make_config(seed, 2000, 1e-6, include_diagonal));
      },
      py::arg("data"), py::arg("feature"), py::arg("schedule") = "span:20:0.001", py::arg("seed") = 0,
      py::arg("include_diagonal") = false);

  m.def(
      "cross_validate",
      [](const Dataset& data, const FeatureMap& f, std::vector<double> lambdas, int folds, std::uint64_t seed) {
        const auto cv = cross_validate(data, f, std::move(lambdas), folds, make_config(seed, 2000, 1e-6, false), seed);
        py::dict d;
        d["best_lambda"] = cv.best_lambda;
        d["lambdas"] = cv.lambdas;
        d["mean_scores"] = cv.mean_scores;
        d["fold_scores"] = cv.fold_scores;
        return d;
      },
      py::arg("data"), py::arg("feature"), py::arg("lambdas") = std::vector<double>{}, py::arg("folds") = 5,
      py::arg("seed") = 0);

  m.def(
      "tpr_tnr",
      [](const PairList& estimated, const PairList& truth, int m, bool include_diagonal) {
        const auto index = build_pair_index(m, include_diagonal, 1);
        const auto r = tpr_tnr(support_from_pairs(index, from_tuples(estimated)), support_from_pairs(index, from_tuples(truth)),
                               index.size());
        return py::make_tuple(r.tpr, r.tnr);
      },
      py::arg("estimated"), py::arg("truth"), py::arg("m"), py::arg("include_diagonal") = false);

  m.def(
      "sample_gaussian",
      [](double rho, Eigen::Index n, std::uint64_t seed, int m1, int m2, int passage, int eig_rank) {
        const auto spec = build_gaussian_spec(rho, m1, m2, passage, eig_rank);
        return py::make_tuple(sample_gaussian(spec, n, seed), to_tuples(truth_pairs(spec)), spec.precision);
      },
      py::arg("rho"), py::arg("n"), py::arg("seed"), py::arg("m1") = 40, py::arg("m2") = 10, py::arg("passage") = 10,
      py::arg("eig_rank") = 15, "Returns (Dataset, planted cross-group pairs, precision matrix).");

  m.def(
      "sample_diamond",
      [](double rho, Eigen::Index n, std::uint64_t seed, int blocks) {
        DiamondSpec spec;
        spec.rho = rho;
        spec.seed = seed;
        spec.blocks = blocks;
        auto s = sample_diamond(spec, n);
        return py::make_tuple(std::move(s.data), to_tuples(spec.truth_pairs()), s.warnings);
      },
      py::arg("rho"), py::arg("n"), py::arg("seed"), py::arg("blocks") = 13,
      "Returns (Dataset, planted a-b pairs, sampler warnings).");

  m.def(
      "window_sequences",
      [](const py::object& seq1, const py::object& seq2, int window, int step) {
        SequencePairConfig cfg;
        cfg.window = window;
        cfg.step = step;
        Sequence a, b;
        if (py::isinstance<py::str>(seq1)) {
          cfg.alphabet = SequencePairConfig::Alphabet::coded;
          a.codes = seq1.cast<std::string>();
          b.codes = seq2.cast<std::string>();
        } else {
          a.values = seq1.cast<std::vector<double>>();
          b.values = seq2.cast<std::vector<double>>();
        }
        auto w = window_sequences(a, b, cfg);
        return py::make_tuple(std::move(w.data), w.windows1, w.windows2);
      },
      py::arg("seq1"), py::arg("seq2"), py::arg("window"), py::arg("step") = 1,
      "Strings use the coded alphabet, number lists the real one. Returns (Dataset, windows1, windows2).");

  m.attr("__version__") = kToolVersion;
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>

#include "cosettle/data.hpp"
#include "cosettle/error.hpp"
#include "cosettle/gradcheck.hpp"
#include "cosettle/metrics.hpp"
#include "cosettle/numerics.hpp"
#include "cosettle/pea.hpp"
#include "cosettle/projection.hpp"
#include "cosettle/report_json.hpp"
#include "cosettle/theory.hpp"
#include "cosettle/trainer.hpp"

namespace py = pybind11;
using namespace cosettle;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.values().begin(), m.values().end(), out.mutable_data());
    return out;
}

/// Reports are returned as JSON text; the Python package decodes them into dicts.
template <typename T>
std::string dump(const T& report) {
    return to_json(report).dump();
}

SyntheticModelSpec diagonal_spec(std::size_t dim, std::size_t n_h, std::size_t n_w, std::size_t frames,
                                 std::size_t videos, const std::vector<double>& intra_diag,
                                 const std::vector<double>& inter_diag, std::uint64_t seed) {
    auto expand = [dim](const std::vector<double>& v, const char* name) {
        if (v.size() == 1) return std::vector<double>(dim, v.front());
        if (v.size() != dim) throw ParameterError(std::string(name) + " must have 1 or dim entries");
        return v;
    };
    SyntheticModelSpec spec;
    spec.dim = dim;
    spec.n_h = n_h;
    spec.n_w = n_w;
    spec.frames_per_video = frames;
    spec.videos = videos;
    spec.intra_cov = Matrix::diagonal(expand(intra_diag, "intra_diag"));
    spec.inter_cov = Matrix::diagonal(expand(inter_diag, "inter_diag"));
    spec.seed = seed;
    return spec;
}

TrainConfig config_from(const std::map<std::string, std::string>& overrides) {
    TrainConfig cfg;
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Consistency/separability trade-off toolkit for frozen video patch embeddings";

    auto base = py::register_exception<Error>(m, "CosettleError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
    py::register_exception<InvalidInputError>(m, "InvalidInputError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());

    m.attr("DEFAULT_GAMMA") = kDefaultGamma;

    m.def("softmax_rows", [](const Array& a, double t) { return to_array(softmax_rows(to_matrix(a), t)); },
          py::arg("logits"), py::arg("temperature"), "Row-wise softmax of logits / temperature.");
    m.def("sym_eig",
          [](const Array& a) {
              const SymEigResult r = sym_eig(to_matrix(a));
              return py::make_tuple(r.eigenvalues, to_array(r.basis));
          },
          py::arg("matrix"), "Eigenvalues (ascending) and column eigenvectors of a symmetric matrix.");
    m.def("sinusoidal_grid",
          [](std::size_t n_h, std::size_t n_w, std::size_t dim) { return to_array(sinusoidal_grid(n_h, n_w, dim).values); },
          py::arg("n_h"), py::arg("n_w"), py::arg("dim"), "2-D sinusoidal positional grid, one row per position.");
    m.def("pea_augment",
          [](const Array& grid, std::size_t n_h, std::size_t n_w, double alpha, std::uint64_t seed) {
              Rng rng(seed);
              return to_array(pea_augment(PositionalGrid{n_h, n_w, to_matrix(grid)}, alpha, rng).values);
          },
          py::arg("grid"), py::arg("n_h"), py::arg("n_w"), py::arg("alpha"), py::arg("seed") = 0,
          "Upsample-then-crop positional augmentation.");

    m.def("margin", &margin, py::arg("d_inter"), py::arg("d_intra"), py::arg("gamma") = kDefaultGamma);
    m.def("optimal_eigs_closed_form",
          [](const std::vector<double>& sigma, double lambda) { return optimal_eigs_closed_form(sigma, lambda); },
          py::arg("sigma"), py::arg("lam"));
    m.def("per_eig_objective", &per_eig_objective, py::arg("mu"), py::arg("sigma"), py::arg("lam"));
    m.def("lemma1_gradient_terms",
          [](double mu, double sigma, double lambda) {
              const GradientTerms t = lemma1_gradient_terms(mu, sigma, lambda);
              return py::make_tuple(t.consistency, t.separability);
          },
          py::arg("mu"), py::arg("sigma"), py::arg("lam"), "(consistency, separability) gradient terms.");
    m.def("optimize_surrogate_linear",
          [](const std::vector<double>& sigma, double lambda, const std::string& mode, std::uint64_t seed) {
              SurrogateOptions opt;
              opt.seed = seed;
              return optimize_surrogate_linear(sigma, lambda, surrogate_mode_from_string(mode), opt).mu_hat;
          },
          py::arg("sigma"), py::arg("lam"), py::arg("mode") = "eigenbasis", py::arg("seed") = 0);
    m.def("delta_margin_closed_form",
          [](const std::vector<double>& sigma, double lambda) {
              const DeltaClosedForm d = delta_margin_closed_form(sigma, lambda);
              py::dict out;
              out["delta"] = d.delta;
              out["tau_bar"] = d.tau_bar;
              out["positivity_condition"] = d.positivity_condition;
              return out;
          },
          py::arg("sigma"), py::arg("lam"));
    m.def("verify_theory_json",
          [](const std::vector<double>& sigma, double lambda, const std::string& mode, std::size_t samples,
             std::uint64_t seed) {
              TheoryRequest req{sigma, lambda, surrogate_mode_from_string(mode), samples, seed};
              py::gil_scoped_release release;
              return dump(verify_theory(req));
          },
          py::arg("sigma"), py::arg("lam"), py::arg("mode") = "eigenbasis", py::arg("samples") = 100000,
          py::arg("seed") = 0);
    m.def("gradcheck_json",
          [](std::size_t instances, std::uint64_t seed) {
              GradcheckOptions opt;
              opt.instances = instances;
              opt.seed = seed;
              py::gil_scoped_release release;
              return dump(run_gradcheck(opt));
          },
          py::arg("instances") = 100, py::arg("seed") = 0);
    m.def("probe_json",
          [](const std::string& setting, double alpha, std::size_t steps, std::size_t dim, std::size_t videos,
             std::uint64_t seed) {
              ProbeConfig cfg;
              cfg.alpha = alpha;
              cfg.steps = steps;
              cfg.dim = dim;
              cfg.videos = videos;
              cfg.seed = seed;
              const ProbeSetting s = probe_setting_from_string(setting);
              py::gil_scoped_release release;
              return dump(shortcut_probe(s, cfg));
          },
          py::arg("setting") = "shuffled", py::arg("alpha") = 0.0, py::arg("steps") = 500, py::arg("dim") = 64,
          py::arg("videos") = 32, py::arg("seed") = 0);

    m.def("generate_corpus_file",
          [](const std::filesystem::path& path, std::size_t dim, std::size_t n_h, std::size_t n_w, std::size_t frames,
             std::size_t videos, const std::vector<double>& intra_diag, const std::vector<double>& inter_diag,
             std::uint64_t seed) {
              const SyntheticModelSpec spec = diagonal_spec(dim, n_h, n_w, frames, videos, intra_diag, inter_diag, seed);
              py::gil_scoped_release release;
              write_corpus(path, generate_corpus(spec));
          },
          py::arg("path"), py::arg("dim") = 64, py::arg("n_h") = 7, py::arg("n_w") = 7, py::arg("frames") = 8,
          py::arg("videos") = 200, py::arg("intra_diag") = std::vector<double>{1.0},
          py::arg("inter_diag") = std::vector<double>{1.0}, py::arg("seed") = 0,
          "Writes a synthetic corpus with diagonal intra/inter covariances.");
    m.def("train_file",
          [](const std::filesystem::path& corpus, const std::filesystem::path& out,
             const std::map<std::string, std::string>& overrides) {
              const TrainConfig cfg = config_from(overrides);
              py::gil_scoped_release release;
              const TrainResult r = train(read_corpus(corpus), cfg);
              write_checkpoint(out, r.params);
              return history_json_lines(r.history);
          },
          py::arg("corpus"), py::arg("out"), py::arg("overrides") = std::map<std::string, std::string>{},
          "Trains a head, writes the checkpoint and returns the history as JSON lines.");
    m.def("evaluate_file_json",
          [](const std::filesystem::path& corpus_path, std::optional<std::filesystem::path> checkpoint, double gamma,
             const std::map<std::string, std::string>& overrides) {
              const TrainConfig cfg = config_from(overrides);
              py::gil_scoped_release release;
              const Corpus corpus = read_corpus(corpus_path);
              FeatureMap map;
              if (checkpoint) map.projection = read_checkpoint(*checkpoint);
              if (cfg.add_positional) map.positional = positional_grid_for(corpus.front().frames.front(), cfg).values;
              return dump(evaluate(corpus, map, EvalConfig{cfg.delta, cfg.temperature, gamma}));
          },
          py::arg("corpus"), py::arg("checkpoint") = py::none(), py::arg("gamma") = kDefaultGamma,
          py::arg("overrides") = std::map<std::string, std::string>{});
}

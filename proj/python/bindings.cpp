#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <tuple>

#include "convctx/analysis.hpp"
#include "convctx/hdbscan.hpp"
#include "convctx/ingest.hpp"
#include "convctx/pipeline.hpp"
#include "convctx/synthgen.hpp"

namespace py = pybind11;
using namespace convctx;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

analysis::UserNetwork network_from(const std::vector<std::tuple<std::string, std::string, double>>& edges,
                                   const std::vector<std::string>& users) {
  analysis::UserNetwork net;
  for (const auto& u : users) net.add_user(u);
  for (const auto& [from, to, w] : edges) net.add_interaction(from, to, w);
  return net;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conversational context discovery: cleaning, clustering, centrality and the full pipeline";
  m.attr("__version__") = kVersion;

  static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const NumericError& e) {
      numeric_error(e.what());
    }
  });

  m.def("normalize_url", [](const std::string& url) { return normalize_url(url); }, py::arg("url"));
  m.def("normalize_hashtag", [](const std::string& tag) { return normalize_hashtag(tag); }, py::arg("tag"));
  m.def("clean_text", [](const std::string& text) { return clean_text(text); }, py::arg("text"));

  m.def(
      "hdbscan",
      [](const RowMatrix<double>& points, int min_cluster_size, int min_samples) {
        const auto r = hdbscan::cluster(points, {min_cluster_size, min_samples});
        return py::make_tuple(r.labels, r.stability);
      },
      py::arg("points"), py::arg("min_cluster_size") = 100, py::arg("min_samples") = 1,
      "Cluster labels (-1 for noise) and per-cluster stability.");

  m.def(
      "pagerank",
      [](const std::vector<std::tuple<std::string, std::string, double>>& edges, const std::vector<std::string>& users,
         double damping, double tol, int max_iters) {
        const auto net = network_from(edges, users);
        const auto scores = analysis::pagerank(net, {damping, tol, max_iters});
        std::map<std::string, double> out;
        for (std::size_t i = 0; i < scores.size(); ++i) out[net.users().name(static_cast<NodeIndex>(i))] = scores[i];
        return out;
      },
      py::arg("edges"), py::arg("users") = std::vector<std::string>{}, py::arg("damping") = 0.85,
      py::arg("tol") = 1e-10, py::arg("max_iters") = 200,
      "Weighted PageRank over (from, to, weight) edges; extra users may be listed explicitly.");

  m.def("kendall_tau", py::overload_cast<const std::vector<double>&, const std::vector<double>&>(&analysis::kendall_tau),
        py::arg("a"), py::arg("b"));
  m.def("percentile_rank", py::overload_cast<const std::vector<double>&, std::size_t>(&analysis::percentile_rank),
        py::arg("scores"), py::arg("index"));

  m.def(
      "partition_quality",
      [](const std::vector<int>& labels, const std::vector<int>& truth) {
        return to_python(analysis::partition_quality(labels, truth).to_json());
      },
      py::arg("labels"), py::arg("truth"));

  m.def(
      "synthesize",
      [](const std::string& config_text, const std::string& records, const std::string& truth,
         const std::string& vectors) {
        std::istringstream in(config_text);
        const auto config = synth::parse_synth_config(in);
        const auto data = synth::generate(config);
        synth::write_dataset(config, data, records, truth, vectors);
        return to_python(data.truth.to_json());
      },
      py::arg("config"), py::arg("records"), py::arg("truth") = "", py::arg("vectors") = "",
      "Generate a synthetic dataset from INI text and write it; returns the ground truth.");

  m.def(
      "run_pipeline",
      [](const std::string& config_path, const std::string& workdir, const std::vector<std::string>& overrides,
         bool deterministic, bool force) {
        auto config = load_pipeline_config(config_path);
        for (const auto& o : overrides) apply_override(config, o);
        if (!workdir.empty()) config.workdir = workdir;
        config.deterministic = config.deterministic || deterministic;
        config.force = force;
        RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = run_pipeline(config);
        }
        return to_python(manifest.to_json());
      },
      py::arg("config"), py::arg("workdir") = "", py::arg("overrides") = std::vector<std::string>{},
      py::arg("deterministic") = false, py::arg("force") = false,
      "Run every stage with caching; returns the run manifest.");
}

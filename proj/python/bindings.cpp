#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "concept_canvas/began/began.hpp"
#include "concept_canvas/common/error.hpp"
#include "concept_canvas/pipeline/config.hpp"
#include "concept_canvas/pipeline/pipeline.hpp"
#include "concept_canvas/text/corpus.hpp"
#include "concept_canvas/text/dtm.hpp"

namespace py = pybind11;
using nlohmann::json;
namespace pl = canvas::pipeline;

// JSON crosses the boundary as text; the Python package decodes it.
namespace {

pl::Config make_config(bool toy, const std::string& overrides) {
  auto c = pl::Config::defaults();
  if (toy) c.apply_toy();
  if (!overrides.empty()) c.merge(json::parse(overrides));
  c.validate();
  return c;
}

py::tuple tfidf(const std::string& corpus_jsonl, std::size_t min_df, double max_df_fraction) {
  const auto corpus = canvas::text::parse_corpus(corpus_jsonl);
  const auto tokens = canvas::text::tokenize_corpus(corpus, canvas::text::StopwordList::english());
  const auto vocab = canvas::text::build_vocabulary(tokens, {min_df, max_df_fraction});
  const auto m = canvas::text::tfidf_vectorize(tokens, vocab);
  py::array_t<double> values({m.rows(), m.cols});
  std::copy(m.values.begin(), m.values.end(), values.mutable_data());
  return py::make_tuple(m.row_ids, vocab.terms(), values);
}

std::string discriminative_terms(const std::string& corpus_jsonl, std::size_t k_pos, std::size_t k_neg,
                                 const std::string& overrides) {
  const auto config = make_config(false, overrides);
  const auto corpus = canvas::text::parse_corpus(corpus_jsonl);
  const auto tokens = canvas::text::tokenize_corpus(corpus, canvas::text::StopwordList::english());
  const auto vocab = canvas::text::build_vocabulary(tokens, config.vocabulary());
  const auto m = canvas::text::tfidf_vectorize(tokens, vocab);
  const auto labels = canvas::text::binary_labels(tokens);
  const auto model = canvas::text::train_dtm(m, labels, config.dtm());
  json out = canvas::text::extract_discriminative_terms(model, vocab, k_pos, k_neg);
  out["train_accuracy"] = model.train_accuracy;
  return out.dump();
}

json advance_json(const pl::AdvanceResult& r) {
  json executed = json::array();
  for (auto s : r.executed) executed.push_back(pl::to_string(s));
  return {{"run_id", r.run.run_id},
          {"status", pl::to_string(r.status)},
          {"stage", pl::to_string(r.run.stage)},
          {"executed", executed},
          {"message", r.message}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Concept Canvas native core";

  static py::exception<canvas::Error> error(m, "CanvasError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const canvas::Error& e) {
      const auto args = py::make_tuple(std::string(canvas::to_string(e.kind())), e.what(), e.details().dump());
      PyErr_SetObject(error.ptr(), args.ptr());
    }
  });

  m.def("tokenize", [](const std::string& text) { return canvas::text::tokenize(text); });
  m.def("tfidf", &tfidf, py::arg("corpus_jsonl"), py::arg("min_df") = 2, py::arg("max_df_fraction") = 0.9,
        "Returns (row_ids, vocabulary, matrix).");
  m.def("discriminative_terms", &discriminative_terms, py::arg("corpus_jsonl"), py::arg("k_pos") = 15,
        py::arg("k_neg") = 15, py::arg("config") = "", py::call_guard<py::gil_scoped_release>());
  m.def("update_k", &canvas::began::update_k, py::arg("k"), py::arg("lambda_k"), py::arg("gamma"),
        py::arg("loss_real"), py::arg("loss_fake"));
  m.def("config", [](bool toy, const std::string& overrides) { return make_config(toy, overrides).nested().dump(); },
        py::arg("toy") = false, py::arg("overrides") = "");

  py::class_<pl::Pipeline>(m, "Pipeline")
      .def(py::init<std::filesystem::path>(), py::arg("root"))
      .def("list_runs", &pl::Pipeline::list_runs)
      .def(
          "create_run",
          [](pl::Pipeline& p, const std::string& theme, const std::string& corpus, const std::string& mode,
             const std::string& run_id, bool toy, const std::string& overrides) {
            pl::CreateRequest req;
            req.theme = theme;
            req.corpus_path = corpus;
            req.mode = pl::parse_mode(mode);
            req.config = make_config(toy, overrides);
            req.run_id = run_id;
            py::gil_scoped_release release;
            return p.create_run(req).run_id;
          },
          py::arg("theme"), py::arg("corpus"), py::arg("mode") = "generative", py::arg("run_id") = "",
          py::arg("toy") = false, py::arg("config") = "")
      .def(
          "manifest", [](const pl::Pipeline& p, const std::string& id) { return json(p.resume(id)).dump(); },
          py::arg("run_id"))
      .def(
          "advance",
          [](pl::Pipeline& p, const std::string& id, int stages, bool auto_gates) {
            pl::AdvanceOptions o;
            o.max_stages = stages;
            o.auto_gates = auto_gates;
            o.actor = "python";
            py::gil_scoped_release release;
            return advance_json(p.advance(id, o)).dump();
          },
          py::arg("run_id"), py::arg("stages") = 1, py::arg("auto_gates") = false)
      .def(
          "current_gate",
          [](const pl::Pipeline& p, const std::string& id, std::size_t page, std::size_t size) {
            return pl::to_json(p.current_gate(id), page, size).dump();
          },
          py::arg("run_id"), py::arg("page") = 1, py::arg("size") = 0)
      .def(
          "resolve_gate",
          [](pl::Pipeline& p, const std::string& id, const std::string& gate, const std::string& selection,
             const std::string& actor) {
            return json(p.resolve_gate(id, pl::parse_stage(gate), json::parse(selection), actor)).dump();
          },
          py::arg("run_id"), py::arg("gate"), py::arg("selection"), py::arg("actor") = "python")
      .def(
          "retry", [](pl::Pipeline& p, const std::string& id) { return json(p.retry(id)).dump(); }, py::arg("run_id"));
}

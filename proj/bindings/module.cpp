// Python bindings for the template lifecycle core: stores, retrieval,
// packing, answer metrics, trace parsing and usage analytics.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "templar/analytics.hpp"
#include "templar/corpus.hpp"
#include "templar/core.hpp"
#include "templar/digest.hpp"
#include "templar/infer_eval.hpp"
#include "templar/json_io.hpp"
#include "templar/retrieval.hpp"

namespace py = pybind11;
using namespace templar;

namespace {

// Nested-list view of the lift matrix for easy numpy/pandas consumption.
py::dict lift_to_dict(const LiftMatrix& m) {
    py::dict out;
    out["template_ids"] = m.template_ids;
    out["lift"] = m.lift;
    out["support"] = m.support;
    out["query_count"] = m.query_count;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "thought template lifecycle core";

    py::register_exception<ParseError>(mod, "ParseError", PyExc_ValueError);

    py::class_<TemplateExample>(mod, "TemplateExample")
        .def(py::init<>())
        .def_readwrite("example_problem", &TemplateExample::example_problem)
        .def_readwrite("solution_steps", &TemplateExample::solution_steps)
        .def_readwrite("final_answer", &TemplateExample::final_answer);

    py::class_<ThoughtTemplate>(mod, "ThoughtTemplate")
        .def(py::init<>())
        .def_readwrite("template_id", &ThoughtTemplate::template_id)
        .def_readwrite("template_name", &ThoughtTemplate::template_name)
        .def_readwrite("description", &ThoughtTemplate::description)
        .def_readwrite("reason_flow", &ThoughtTemplate::reason_flow)
        .def_readwrite("example", &ThoughtTemplate::example)
        .def("__repr__", [](const ThoughtTemplate& t) {
            return "<ThoughtTemplate " + t.template_id + " '" + t.template_name + "'>";
        });

    py::enum_<Decision>(mod, "Decision")
        .value("KEEP", Decision::Keep)
        .value("FIX", Decision::Fix)
        .value("ADD", Decision::Add)
        .value("DISCARD", Decision::Discard);

    py::class_<TemplateStore>(mod, "TemplateStore")
        .def(py::init<>())
        .def_readwrite("iteration", &TemplateStore::iteration)
        .def_readwrite("templates", &TemplateStore::templates)
        .def_readwrite("provenance", &TemplateStore::provenance)
        .def_readwrite("oracle", &TemplateStore::oracle)
        .def("find",
             [](const TemplateStore& store, const std::string& id) -> py::object {
                 const ThoughtTemplate* t = store.find(id);
                 return t == nullptr ? py::none() : py::cast(*t);
             })
        .def("__len__", [](const TemplateStore& store) { return store.templates.size(); });

    mod.def("assign_template_id", &assign_template_id);
    mod.def("apply_decision", &apply_decision, py::arg("store"), py::arg("template_id"),
            py::arg("decision"), py::arg("revised") = std::nullopt);
    mod.def("load_store", &load_store);
    mod.def("snapshot", &snapshot);
    mod.def("store_hash", &store_hash);
    mod.def("validate_template", &validate_template);

    py::class_<Document>(mod, "Document")
        .def(py::init<>())
        .def(py::init([](std::string doc_id, std::string title, std::string body,
                         std::optional<std::string> source) {
                 Document doc;
                 doc.doc_id = std::move(doc_id);
                 doc.title = std::move(title);
                 doc.body = std::move(body);
                 doc.source = std::move(source);
                 return doc;
             }),
             py::arg("doc_id"), py::arg("title"), py::arg("body"),
             py::arg("source") = std::nullopt)
        .def_readwrite("doc_id", &Document::doc_id)
        .def_readwrite("title", &Document::title)
        .def_readwrite("body", &Document::body)
        .def_readwrite("source", &Document::source);

    mod.def("ingest", &ingest);
    mod.def("estimate_tokens", [](const std::string& text) { return estimate_tokens(text); });
    mod.def(
        "pack",
        [](const std::vector<Document>& docs, long budget) {
            const PackedContext packed = pack(docs, budget);
            py::dict out;
            out["documents"] = packed.documents;
            out["estimated_tokens"] = packed.estimated_tokens;
            out["budget"] = packed.budget;
            return out;
        },
        py::arg("documents"), py::arg("budget"));
    mod.def("format_document", &format_document);

    mod.def("analyze", [](const std::string& text) { return analyze(text); });
    py::class_<ScoredDoc>(mod, "ScoredDoc")
        .def_readonly("doc_id", &ScoredDoc::doc_id)
        .def_readonly("score", &ScoredDoc::score);
    py::class_<Bm25Index>(mod, "Bm25Index")
        .def(py::init<const std::vector<Document>&, double, double>(), py::arg("documents"),
             py::arg("k1") = 1.2, py::arg("b") = 0.75)
        .def("score", &Bm25Index::score)
        .def("retrieve", &Bm25Index::retrieve)
        .def_property_readonly("doc_count", &Bm25Index::doc_count)
        .def_property_readonly("avg_doc_length", &Bm25Index::avg_doc_length);
    mod.def("recall_at_k", &recall_at_k);

    mod.def("normalize_answer", &normalize_answer);
    mod.def("exact_match", &exact_match);
    mod.def("token_f1", &token_f1);
    mod.def("binary_accuracy", &binary_accuracy);

    mod.def("detect_used_templates", [](const std::string& trace) {
        const std::set<std::string> used = detect_used_templates(trace);
        return std::vector<std::string>(used.begin(), used.end());
    });
    mod.def("parse_final_answer", [](const std::string& trace) {
        const FinalAnswer parsed = parse_final_answer(trace);
        py::dict out;
        out["answers"] = parsed.answers;
        out["from_marker"] = parsed.from_marker;
        return out;
    });

    mod.def("load_usage_log", &load_usage_log);
    py::class_<UsageRecord>(mod, "UsageRecord")
        .def(py::init<>())
        .def_readwrite("query_id", &UsageRecord::query_id)
        .def_readwrite("used_template_ids", &UsageRecord::used_template_ids)
        .def_readwrite("prediction", &UsageRecord::prediction)
        .def_readwrite("gold_answers", &UsageRecord::gold_answers)
        .def_readwrite("metric_value", &UsageRecord::metric_value)
        .def_readwrite("raw_trace", &UsageRecord::raw_trace);
    mod.def("usage_histogram", [](const std::vector<UsageRecord>& log) {
        return usage_histogram(log);
    });
    mod.def("cooccurrence_lift",
            [](const std::vector<UsageRecord>& log) { return lift_to_dict(cooccurrence_lift(log)); });

    mod.def("sha256_hex", [](const std::string& data) { return sha256_hex(data); });
}

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "secla/alignment.hpp"
#include "secla/errors.hpp"
#include "secla/eval.hpp"
#include "secla/gradcheck.hpp"
#include "secla/io.hpp"
#include "secla/losses.hpp"
#include "secla/synth.hpp"
#include "secla/training.hpp"

namespace py = pybind11;
using namespace secla;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ShapeError("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

py::dict link_to_dict(const Link& l) {
  py::dict d;
  d["face"] = l.has_face() ? py::cast(l.face) : py::none();
  d["name"] = l.has_name() ? py::cast(l.name) : py::cast(kNoNameText);
  d["score"] = l.score ? py::cast(*l.score) : py::none();
  return d;
}

Link link_from_dict(const py::dict& d) {
  const py::object face = d["face"];
  const py::object name = d["name"];
  if (face.is_none()) return Link::no_face(name.cast<std::size_t>());
  if (py::isinstance<py::str>(name)) {
    if (name.cast<std::string>() != kNoNameText) throw ValidationError("link name must be an index or \"NONAME\"");
    return Link::no_name(face.cast<std::size_t>());
  }
  return Link::normal(face.cast<std::size_t>(), name.cast<std::size_t>());
}

py::list links_to_list(const std::vector<LinkSet>& sets) {
  py::list out;
  for (const auto& s : sets) {
    py::list links;
    for (const auto& l : s.links) links.append(link_to_dict(l));
    py::dict d;
    d["pair_id"] = s.pair_id;
    d["links"] = links;
    out.append(d);
  }
  return out;
}

std::vector<LinkSet> links_from_list(const py::list& items) {
  std::vector<LinkSet> out;
  for (const auto& item : items) {
    const auto d = item.cast<py::dict>();
    LinkSet s;
    s.pair_id = d["pair_id"].cast<std::string>();
    for (const auto& l : d["links"]) s.links.push_back(link_from_dict(l.cast<py::dict>()));
    out.push_back(std::move(s));
  }
  return out;
}

py::dict metrics_to_dict(const MetricsReport& r) {
  py::dict d;
  d["precision"] = r.prf.precision;
  d["recall"] = r.prf.recall;
  d["f1"] = r.prf.f1;
  d["accuracy"] = r.accuracy;
  d["correct"] = r.counts.correct;
  d["found"] = r.counts.found;
  d["gt"] = r.counts.gt;
  d["include_null"] = r.include_null;
  d["warnings"] = r.warnings;
  return d;
}

void check_dims(const ProjectorStack& stack, const Dataset& ds) {
  if (stack.dims.face_dim != ds.face_dim || stack.dims.name_dim != ds.name_dim) {
    throw ValidationError("model and dataset dimensions differ");
  }
}

TrainResult train(const Dataset& ds, TrainConfig config, const std::string& mode, std::size_t easy_max_faces,
                  std::size_t easy_max_names, bool easy_keep_null) {
  if (ds.pairs.empty()) throw ValidationError("dataset has no pairs");
  config.dims.face_dim = ds.face_dim;
  config.dims.name_dim = ds.name_dim;
  config.validate();
  if (mode == "secla") return train_secla(strip_ground_truth(ds.pairs), ds.noname_embedding, config);
  if (mode != "pipeline" && mode != "secla-b") throw ValidationError("mode must be secla, pipeline or secla-b");
  const auto split = make_easy_split(ds, easy_max_faces, easy_max_names, !easy_keep_null);
  if (split.easy.empty()) throw ValidationError("easy subset is empty");
  const auto easy = strip_ground_truth(split.easy);
  if (mode == "pipeline") {
    return train_pipeline_heuristic(easy, strip_ground_truth(split.rest), ds.noname_embedding, config);
  }
  return train_secla_b(strip_ground_truth(ds.pairs), easy, ds.noname_embedding, config);
}

}  // namespace

PYBIND11_MODULE(_secla, m) {
  m.doc() = "Weakly supervised face-name alignment";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("face_dim", &Dataset::face_dim)
      .def_readonly("name_dim", &Dataset::name_dim)
      .def("__len__", [](const Dataset& d) { return d.pairs.size(); })
      .def_property_readonly("pair_ids",
                             [](const Dataset& d) {
                               std::vector<std::string> ids;
                               for (const auto& p : d.pairs) ids.push_back(p.pair_id);
                               return ids;
                             })
      .def("ground_truth", [](const Dataset& d) { return links_to_list(ground_truth(d)); })
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(p, d); }, py::arg("path"));

  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def(
      "synth",
      [](std::size_t pairs, std::size_t identities, std::size_t min_faces, std::size_t max_faces,
         std::size_t min_names, std::size_t max_names, double sigma, double noname_rate, double noface_rate,
         double zipf, std::size_t face_dim, std::size_t name_dim, std::uint64_t seed) {
        SynthConfig c;
        c.num_pairs = pairs;
        c.num_identities = identities;
        c.min_faces = min_faces;
        c.max_faces = max_faces;
        c.min_names = min_names;
        c.max_names = max_names;
        c.sigma = sigma;
        c.noname_rate = noname_rate;
        c.noface_rate = noface_rate;
        c.zipf_exponent = zipf;
        c.face_dim = face_dim;
        c.name_dim = name_dim;
        c.seed = seed;
        return synth_generate(c);
      },
      py::arg("pairs") = 100, py::arg("identities") = 20, py::arg("min_faces") = 1, py::arg("max_faces") = 3,
      py::arg("min_names") = 0, py::arg("max_names") = 8, py::arg("sigma") = 0.05, py::arg("noname_rate") = 0.0,
      py::arg("noface_rate") = 0.0, py::arg("zipf") = 0.0, py::arg("face_dim") = 32, py::arg("name_dim") = 48,
      py::arg("seed") = 0);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("stage1_epochs", &TrainConfig::stage1_epochs)
      .def_readwrite("stage2_epochs", &TrainConfig::stage2_epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("add_noname", &TrainConfig::add_noname)
      .def_readwrite("add_noface_to_matched", &TrainConfig::add_noface_to_matched)
      .def_readwrite("use_fn", &TrainConfig::use_fn)
      .def_readwrite("use_nf", &TrainConfig::use_nf)
      .def_readwrite("use_fnp", &TrainConfig::use_fnp)
      .def_readwrite("use_fp", &TrainConfig::use_fp)
      .def_readwrite("freeze_matching", &TrainConfig::freeze_matching)
      .def_readwrite("workers", &TrainConfig::workers)
      .def_property(
          "prototype", [](const TrainConfig& c) { return std::string(to_string(c.prototype)); },
          [](TrainConfig& c, const std::string& s) { c.prototype = prototype_from_string(s); })
      .def_property(
          "proj_dim", [](const TrainConfig& c) { return c.dims.proj_dim; },
          [](TrainConfig& c, std::size_t v) { c.dims.proj_dim = v; })
      .def_property(
          "hidden", [](const TrainConfig& c) { return c.dims.hidden; },
          [](TrainConfig& c, std::vector<std::size_t> v) { c.dims.hidden = std::move(v); })
      .def_property(
          "shared_common", [](const TrainConfig& c) { return c.dims.shared_common; },
          [](TrainConfig& c, bool v) { c.dims.shared_common = v; });

  py::class_<ProjectorStack>(m, "Model")
      .def_property_readonly("face_dim", [](const ProjectorStack& s) { return s.dims.face_dim; })
      .def_property_readonly("name_dim", [](const ProjectorStack& s) { return s.dims.name_dim; })
      .def_property_readonly("proj_dim", [](const ProjectorStack& s) { return s.dims.proj_dim; })
      .def_property_readonly("parameter_count", &ProjectorStack::parameter_count)
      .def("project_face", [](const ProjectorStack& s, const Vector& f) { return project_face(s, f); })
      .def("project_name", [](const ProjectorStack& s, const Vector& n) { return project_name(s, n); })
      .def(
          "similarity",
          [](const ProjectorStack& s, const std::vector<Vector>& faces, const std::vector<Vector>& names) {
            std::vector<NameRecord> records;
            for (const auto& n : names) records.push_back({"", n, false});
            return from_matrix(similarity_matrix(s, faces, records));
          },
          py::arg("faces"), py::arg("names"))
      .def(
          "align",
          [](const ProjectorStack& s, const Dataset& ds, bool enable_noface, bool add_noname) {
            check_dims(s, ds);
            return links_to_list(align_dataset(s, strip_ground_truth(ds.pairs), ds.noname_embedding,
                                               AlignOptions{enable_noface, add_noname}));
          },
          py::arg("dataset"), py::arg("enable_noface") = true, py::arg("add_noname") = true)
      .def(
          "save", [](const ProjectorStack& s, const std::filesystem::path& p) { save_checkpoint(p, s, nullptr); },
          py::arg("path"));

  m.def(
      "load_model", [](const std::filesystem::path& p) { return load_checkpoint(p).stack; }, py::arg("path"));

  m.def(
      "train",
      [](const Dataset& ds, const TrainConfig& config, const std::string& mode, std::size_t easy_max_faces,
         std::size_t easy_max_names, bool easy_keep_null) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(ds, config, mode, easy_max_faces, easy_max_names, easy_keep_null);
        }
        py::list log;
        for (const auto& e : r.log) {
          py::dict d;
          d["stage"] = e.stage;
          d["epoch"] = e.epoch;
          d["l_fn"] = e.l_fn;
          d["l_nf"] = e.l_nf;
          d["l_agree"] = e.l_agree;
          d["l_stage2"] = e.l_stage2;
          d["total"] = e.total;
          log.append(d);
        }
        return py::make_tuple(std::move(r.stack), log);
      },
      py::arg("dataset"), py::arg("config") = TrainConfig{}, py::arg("mode") = "secla",
      py::arg("easy_max_faces") = 1, py::arg("easy_max_names") = 1, py::arg("easy_keep_null") = false);

  m.def(
      "evaluate",
      [](const py::list& predictions, const Dataset& ds, bool include_null) {
        return metrics_to_dict(evaluate(links_from_list(predictions), ground_truth(ds), include_null));
      },
      py::arg("predictions"), py::arg("dataset"), py::arg("include_null") = true);

  m.def(
      "gradcheck",
      [](std::size_t instances, double tolerance, std::uint64_t seed, bool inject_bug) {
        GradcheckSuiteOptions o;
        o.instances = instances;
        o.tolerance = tolerance;
        o.seed = seed;
        o.inject_bug = inject_bug;
        const auto r = run_gradcheck_suite(o);
        py::dict d;
        d["passed"] = r.passed;
        d["max_relative_error"] = r.max_relative_error;
        d["cases"] = r.cases.size();
        return d;
      },
      py::arg("instances") = 24, py::arg("tolerance") = 1e-4, py::arg("seed") = 0, py::arg("inject_bug") = false);

  m.def(
      "dense_similarity",
      [](const std::vector<std::vector<double>>& a, const std::string& direction) {
        if (direction != "face_to_name" && direction != "name_to_face") {
          throw ValidationError("direction must be face_to_name or name_to_face");
        }
        return dense_similarity(to_matrix(a), direction == "face_to_name" ? Direction::FaceToName
                                                                          : Direction::NameToFace);
      },
      py::arg("a"), py::arg("direction"));
  m.def(
      "contrastive_fn", [](const std::vector<std::vector<double>>& d) { return contrastive_fn(to_matrix(d)); },
      py::arg("d_fn"));
  m.def(
      "contrastive_nf", [](const std::vector<std::vector<double>>& d) { return contrastive_nf(to_matrix(d)); },
      py::arg("d_nf"));
  m.def(
      "agreement_loss",
      [](const std::vector<std::vector<double>>& nf, const std::vector<std::vector<double>>& fn) {
        return agreement_loss(to_matrix(nf), to_matrix(fn));
      },
      py::arg("d_nf"), py::arg("d_fn"));
  m.def(
      "align_pair",
      [](const std::vector<std::vector<double>>& a, const std::vector<std::string>& names, bool enable_noface) {
        std::vector<NameRecord> records;
        for (const auto& n : names) records.push_back({n, {}, n == kNoNameText});
        py::list out;
        for (const auto& l : align_pair(to_matrix(a), records, enable_noface)) out.append(link_to_dict(l));
        return out;
      },
      py::arg("a"), py::arg("names"), py::arg("enable_noface") = true);
  m.def(
      "precision_recall_f1",
      [](double p, double r) {
        const auto x = precision_recall_f1(p, r);
        return py::make_tuple(x.precision, x.recall, x.f1);
      },
      py::arg("precision"), py::arg("recall"));
}

// Python bindings. Configs and reports cross the boundary as dicts (JSON).
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "helpd/experiment.h"
#include "helpd/feedback/objects.h"
#include "helpd/judge/judge.h"
#include "helpd/presets.h"

namespace py = pybind11;
using nlohmann::ordered_json;

namespace {

py::object to_py(const ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

ordered_json from_py(const py::object& o) {
  if (o.is_none()) return ordered_json::object();
  return ordered_json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

helpd::Preset preset_from(const py::object& overrides, std::uint64_t seed) {
  return helpd::Preset::from_json(from_py(overrides), helpd::desk_preset(seed));
}

std::set<helpd::data::ObjectId> ids_of(const std::vector<std::string>& names,
                                       const helpd::data::ObjectLexicon& lex) {
  std::set<helpd::data::ObjectId> out;
  for (const auto& n : names) out.insert(lex.require(n));
  return out;
}

std::vector<std::string> names_of(const std::set<helpd::data::ObjectId>& ids,
                                  const helpd::data::ObjectLexicon& lex) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(lex.name(id));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  using namespace helpd;
  m.doc() = "hallucination feedback training and penalty decoding";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("desk_preset", [](std::uint64_t seed) { return to_py(desk_preset(seed).to_json()); },
        py::arg("seed") = 0, "Default CPU preset as a dict.");

  py::class_<data::Corpus>(m, "Corpus")
      .def_static(
          "generate",
          [](const py::object& overrides, std::uint64_t seed,
             const std::optional<std::filesystem::path>& save_to) {
            const auto cfg = preset_from(overrides, seed).corpus;
            auto c = data::gen_corpus(cfg);
            if (save_to) data::save_corpus(c, cfg, *save_to);
            return c;
          },
          py::arg("preset") = py::none(), py::arg("seed") = 0, py::arg("save_to") = py::none(),
          "Synthetic corpus; `preset` overrides keys of desk_preset(seed).")
      .def_static("load", &data::load_corpus, py::arg("dir"))
      .def_property_readonly("n_scenes", [](const data::Corpus& c) { return c.scenes.size(); })
      .def("scene_ids",
           [](const data::Corpus& c, const std::string& split) {
             std::vector<int> ids;
             for (const auto* s : c.split(split)) ids.push_back(s->id);
             return ids;
           },
           py::arg("split") = "heldout")
      .def("objects",
           [](const data::Corpus& c, int id) {
             const auto ids = c.scene(id).object_ids();
             return names_of({ids.begin(), ids.end()}, c.vocab.lexicon());
           },
           py::arg("scene_id"))
      .def("caption", [](const data::Corpus& c, int id) { return c.captions.at(std::size_t(id)).caption; },
           py::arg("scene_id"))
      .def("tokenize",
           [](const data::Corpus& c, const std::string& text) { return data::tokenize(text, c.vocab); })
      .def("detokenize",
           [](const data::Corpus& c, const std::vector<int>& ids) { return data::detokenize(ids, c.vocab); })
      .def_property_readonly("vocab_size", [](const data::Corpus& c) { return c.vocab.size(); });

  py::class_<model::Model>(m, "Model")
      .def(py::init([](const py::object& overrides, std::uint64_t seed) {
             return model::Model(preset_from(overrides, seed).model, seed);
           }),
           py::arg("preset") = py::none(), py::arg("seed") = 0)
      .def_static("load", &model::Model::load, py::arg("path"))
      .def("save", &model::Model::save, py::arg("path"))
      .def_property_readonly("parameter_count", &model::Model::parameter_count)
      .def_property_readonly("config", [](const model::Model& mm) { return to_py(mm.config().to_json()); })
      .def("log_probs",
           [](const model::Model& mm, const data::Corpus& c, int scene_id, const std::vector<int>& tokens) {
             const auto out = mm.forward(mm.encode_scene(c.scene(scene_id)), tokens);
             const auto lp = model::log_probs(out.logits);
             std::vector<std::vector<double>> rows(lp.dim(0), std::vector<double>(lp.dim(1)));
             for (std::size_t i = 0; i < lp.dim(0); ++i)
               for (std::size_t v = 0; v < lp.dim(1); ++v) rows[i][v] = double(lp.at(i, v));
             return rows;
           },
           py::arg("corpus"), py::arg("scene_id"), py::arg("tokens"),
           "Per-position next-token log-probabilities.");

  m.def(
      "train",
      [](model::Model& mm, const data::Corpus& c, const py::object& overrides, std::uint64_t seed) {
        const auto p = preset_from(overrides, seed);
        judge::MockJudge judge(c.vocab.lexicon());
        std::vector<ordered_json> log;
        {
          py::gil_scoped_release nogil;
          feedback::Trainer t(mm, c, judge, p.train);
          t.run([&](const feedback::LossReport& r) { log.push_back(r.to_json()); });
        }
        py::list out;
        for (const auto& j : log) out.append(to_py(j));
        return out;
      },
      py::arg("model"), py::arg("corpus"), py::arg("preset") = py::none(), py::arg("seed") = 0,
      "CE then feedback training with the mock judge; returns the per-step log.");

  m.def(
      "describe",
      [](const model::Model& mm, const data::Corpus& c, const std::string& split,
         const py::object& overrides, std::uint64_t seed) {
        const auto p = preset_from(overrides, seed);
        std::vector<eval::ChairInput> caps;
        {
          py::gil_scoped_release nogil;
          caps = eval::describe_scenes(mm, c.split(split), c.vocab, p.decode, p.jobs);
        }
        py::list out;
        for (const auto& ci : caps) {
          py::dict d;
          d["scene_id"] = ci.image_id;
          d["caption"] = ci.caption;
          d["n_tokens"] = ci.n_tokens;
          out.append(d);
        }
        return out;
      },
      py::arg("model"), py::arg("corpus"), py::arg("split") = "heldout",
      py::arg("preset") = py::none(), py::arg("seed") = 0,
      "Caption every scene of a split with preset['decode'].");

  m.def(
      "chair",
      [](const std::vector<std::pair<int, std::string>>& captions,
         const std::map<int, std::vector<std::string>>& truth) {
        const auto lex = data::ObjectLexicon::standard();
        std::vector<eval::ChairInput> in;
        for (const auto& [id, text] : captions)
          in.push_back({id, text, data::split_words(text).size()});
        eval::Annotations ann;
        for (const auto& [id, names] : truth) ann[id] = ids_of(names, lex);
        return to_py(eval::chair(in, ann, lex).to_json());
      },
      py::arg("captions"), py::arg("truth"),
      "CHAIR over (scene_id, caption) pairs; length counts words.");

  m.def(
      "pope",
      [](const model::Model& mm, const data::Corpus& c, const py::object& overrides,
         std::uint64_t seed) {
        const auto p = preset_from(overrides, seed);
        eval::PopeReport rep;
        {
          py::gil_scoped_release nogil;
          const auto triples = heldout_pope_triples(c, p);
          rep = pope_report(mm, c, triples, p);
        }
        return to_py(rep.to_json());
      },
      py::arg("model"), py::arg("corpus"), py::arg("preset") = py::none(), py::arg("seed") = 0,
      "POPE on the heldout split (co-occurrence from train).");

  m.def(
      "extract_objects",
      [](const std::string& text) {
        const auto lex = data::ObjectLexicon::standard();
        return names_of(feedback::extract_objects(std::string_view(text), lex).objects, lex);
      },
      py::arg("text"), "Canonical object names mentioned in a text.");

  m.def(
      "mock_score",
      [](const std::string& candidate, const std::vector<std::string>& truth) {
        const auto lex = data::ObjectLexicon::standard();
        return judge::mock_score(candidate, ids_of(truth, lex), lex);
      },
      py::arg("candidate"), py::arg("truth"));

  m.def("map_answer", [](const std::string& text) {
    const auto a = eval::map_answer(text);
    return py::make_tuple(a.yes, a.unmappable);
  });
}

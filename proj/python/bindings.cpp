// Thin Python layer over the core library: toy data, checkpoints, sampling
// and evaluation. Images cross the boundary as float32 arrays of shape
// (16, 16, 3).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "uniflow/checkpoint.hpp"
#include "uniflow/evalkit.hpp"
#include "uniflow/gradcheck.hpp"

namespace py = pybind11;
using namespace uniflow;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Array to_array(const Image& img) {
  Array a({Image::kSide, Image::kSide, Image::kChannels});
  std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
  return a;
}

Image from_array(const Array& a) {
  if (a.ndim() != 3 || a.shape(0) != Image::kSide || a.shape(1) != Image::kSide ||
      a.shape(2) != Image::kChannels) {
    throw py::value_error("expected an array of shape (16, 16, 3)");
  }
  Image img;
  std::copy(a.data(), a.data() + Image::kSize, img.pixels.begin());
  return img;
}

ShapeSpec parse_spec(const std::string& caption) {
  const auto ids = tokenize(caption);
  for (int i = 0; i < kNumSpecs; ++i) {
    const ShapeSpec s = ShapeSpec::from_index(i);
    if (tokenize(describe(s)) == ids) return s;
  }
  throw py::value_error("not a full caption (\"<color> <shape> <position>\"): " + caption);
}

std::optional<std::string> classify(const Array& a) {
  const auto s = oracle_classify(from_array(a));
  if (!s) return std::nullopt;
  return describe(*s);
}

// Checkpoint handle; sampling and evaluation use the EMA weights.
struct Model {
  Checkpoint ck;

  static Model load(const std::filesystem::path& dir) { return {load_checkpoint(dir)}; }

  Array generate(const std::string& prompt, double w, int steps, std::uint64_t seed) const {
    return to_array(generate_image(tokenize(prompt), ck.ema, SamplerConfig{w, steps, seed}));
  }

  std::string ask(const Array& img, const std::string& question, int max_len) const {
    return detokenize(answer(from_array(img), tokenize(question), ck.ema, max_len));
  }

  py::dict evaluate(int n_prompts, int n_qa, double w, int steps) const {
    EvalOptions opt;
    opt.n_prompts = n_prompts;
    opt.n_qa = n_qa;
    opt.sampler = SamplerConfig{w, steps, 0};
    const EvalReport r = uniflow::evaluate(ck.ema, opt);
    py::dict d;
    d["semantic_accuracy"] = r.semantic_accuracy;
    d["und_accuracy"] = r.und_accuracy;
    d["fmd"] = r.fmd;
    d["shape_accuracy"] = r.shape_accuracy;
    d["color_accuracy"] = r.color_accuracy;
    d["position_accuracy"] = r.position_accuracy;
    return d;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "uniflow core bindings";

  py::register_exception<Error>(m, "UniflowError", PyExc_RuntimeError);

  m.def("render", [](const std::string& caption) { return to_array(render_shape(parse_spec(caption))); },
        py::arg("caption"), "Render the template image for a full caption.");
  m.def("classify", &classify, py::arg("image"),
        "Oracle label of an image, or None when it matches no template.");
  m.def("tokenize", [](const std::string& s) { return tokenize(s); }, py::arg("text"));
  m.def("detokenize", &detokenize, py::arg("ids"));
  m.def("vocab_size", [] { return kVocabSize; });
  m.def("make_corpus",
        [](std::uint64_t seed, int n_und, int n_gen, int n_text, const std::filesystem::path& out) {
          const Corpus c = make_corpus(seed, n_und, n_gen, n_text);
          save_corpus(c, out);
          return py::make_tuple(c.und.size(), c.gen.size(), c.text.size());
        },
        py::arg("seed"), py::arg("n_und"), py::arg("n_gen"), py::arg("n_text"), py::arg("out"),
        "Generate a corpus, write it to `out`, return split sizes.");
  m.def("gradcheck",
        [](int coords) {
          py::list out;
          for (const auto& c : run_gradcheck_suite(coords)) {
            out.append(py::make_tuple(c.name, c.result.max_rel_error, c.passed()));
          }
          return out;
        },
        py::arg("coords") = 16, "Finite-difference suite: (name, max_rel_error, passed) rows.");
  m.def("train",
        [](const std::filesystem::path& config, const std::filesystem::path& corpus,
           const std::filesystem::path& out) {
          const TrainConfig cfg = load_config(config);
          TrainState st;
          {
            py::gil_scoped_release release;
            st = run_training(cfg, load_corpus(corpus));
          }
          save_checkpoint({st.params, st.ema, st.opt, 3}, out);
        },
        py::arg("config"), py::arg("corpus"), py::arg("out"),
        "Run all three stages and write the checkpoint to `out`.");

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def_property_readonly("parameter_count", [](const Model& x) { return parameter_count(x.ck.params); })
      .def_property_readonly("stages_done", [](const Model& x) { return x.ck.stages_done; })
      .def("generate", &Model::generate, py::arg("prompt"), py::arg("w") = 2.0,
           py::arg("steps") = 30, py::arg("seed") = 0)
      .def("ask", &Model::ask, py::arg("image"), py::arg("question"), py::arg("max_len") = 4)
      .def("evaluate", &Model::evaluate, py::arg("n_prompts") = 500, py::arg("n_qa") = 360,
           py::arg("w") = 2.0, py::arg("steps") = 30);
}

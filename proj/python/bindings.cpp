#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "suta/errors.hpp"
#include "suta/harness.hpp"

namespace py = pybind11;
using namespace suta;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw ContractViolation("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor& t) {
  Array a({t.rows, t.cols});
  std::copy(t.values.begin(), t.values.end(), a.mutable_data());
  return a;
}

py::dict wer_dict(const WerReport& w) {
  py::dict d;
  d["substitutions"] = w.substitutions;
  d["deletions"] = w.deletions;
  d["insertions"] = w.insertions;
  d["ref_words"] = w.ref_words;
  d["errors"] = w.errors();
  d["wer"] = w.ref_words ? py::cast(w.wer()) : py::none();
  return d;
}

AdaptConfig make_config(const std::string& method, double alpha, double temperature, std::size_t iterations,
                        const std::string& params, std::optional<double> lr, std::uint64_t seed) {
  AdaptConfig c;
  c.method = parse_method(method);
  c.alpha = alpha;
  c.temperature = temperature;
  c.iterations = iterations;
  c.selection = parse_selection(params);
  c.learning_rate = lr;
  c.seed = seed;
  validate(c);
  return c;
}

py::list trace_list(const AdaptTrace& trace) {
  py::list out;
  for (const auto& r : trace.records) {
    py::dict d;
    d["iteration"] = r.iteration;
    d["entropy"] = r.entropy;
    d["mcc"] = r.mcc;
    d["total"] = r.total;
    d["retained_frames"] = r.retained_frames;
    d["frames"] = r.frames;
    d["pseudo_label_loss"] = r.pseudo_label_loss ? py::cast(*r.pseudo_label_loss) : py::none();
    d["update_skipped"] = r.update_skipped;
    d["hypothesis"] = r.hypothesis.text();
    d["wer"] = r.wer ? py::object(wer_dict(*r.wer)) : py::none();
    out.append(d);
  }
  return out;
}

#define ADAPT_ARGS                                                                                      \
  py::arg("method") = "suta", py::arg("alpha") = 0.3, py::arg("temperature") = 2.5,                    \
      py::arg("iterations") = 10, py::arg("params") = "ln+feat", py::arg("lr") = py::none(),            \
      py::arg("seed") = 0

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Single-utterance test-time adaptation for CTC models";

  static py::exception<ContractViolation> contract(m, "ContractViolation", PyExc_ValueError);
  static py::exception<DataError> data(m, "DataError", PyExc_RuntimeError);
  static py::exception<FormatError> format(m, "FormatError", data.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ContractViolation& e) {
      PyErr_SetString(contract.ptr(), e.what());
    } catch (const FormatError& e) {
      PyErr_SetString(format.ptr(), e.what());
    } catch (const DataError& e) {
      PyErr_SetString(data.ptr(), e.what());
    }
  });

  m.attr("BLANK") = vocab::kBlank;
  m.attr("VOCAB_SIZE") = vocab::kSize;

  // losses and decoding
  m.def("softmax_temperature", [](const Array& logits, double t) {
    return to_array(losses::softmax_temperature(to_tensor(logits), t).values);
  }, py::arg("logits"), py::arg("temperature"));
  m.def("combined_loss", [](const Array& logits, double alpha, double temperature) {
    const auto v = losses::combined_loss(to_tensor(logits), {alpha, temperature});
    py::dict d;
    d["total"] = v.total;
    d["entropy"] = v.entropy;
    d["mcc"] = v.mcc;
    d["retained_frames"] = v.retained_frames;
    return d;
  }, py::arg("logits"), py::arg("alpha") = 0.3, py::arg("temperature") = 2.5);
  m.def("ctc_loss", [](const Array& log_probs, const std::vector<std::size_t>& target) {
    return losses::ctc_loss(to_tensor(log_probs), target);
  }, py::arg("log_probs"), py::arg("target"));
  m.def("greedy_decode", [](const Array& logits) { return greedy_ctc_decode(to_tensor(logits)).text(); },
        py::arg("logits"));
  m.def("encode", [](const std::string& text) { return encode(Transcript::from_text(text)); }, py::arg("text"));
  m.def("wer", [](const std::string& ref, const std::string& hyp) {
    return wer_dict(wer(Transcript::from_text(ref), Transcript::from_text(hyp)));
  }, py::arg("reference"), py::arg("hypothesis"));
  m.def("werr", &werr, py::arg("baseline_wer"), py::arg("adapted_wer"));

  // corpus
  py::class_<Utterance>(m, "Utterance")
      .def_readonly("id", &Utterance::id)
      .def_readonly("domain_tag", &Utterance::domain_tag)
      .def_property_readonly("features", [](const Utterance& u) { return to_array(u.features); })
      .def_property_readonly("transcript", [](const Utterance& u) { return u.transcript.text(); })
      .def_property_readonly("duration_frames", &Utterance::duration_frames)
      .def("__repr__", [](const Utterance& u) {
        return "<Utterance " + u.id + " frames=" + std::to_string(u.duration_frames()) + " '" +
               u.transcript.text() + "'>";
      });

  m.def("generate_corpus", [](std::size_t count, std::uint64_t seed, double delta, double jitter,
                              std::size_t min_words, std::size_t max_words, const std::string& id_prefix) {
    CorpusSpec s;
    s.count = count;
    s.seed = seed;
    s.delta = delta;
    s.template_jitter = jitter;
    s.min_words = min_words;
    s.max_words = max_words;
    s.id_prefix = id_prefix;
    return generate_corpus(s);
  }, py::arg("count") = 50, py::arg("seed") = 0, py::arg("delta") = 0.0, py::arg("jitter") = 0.3,
     py::arg("min_words") = 1, py::arg("max_words") = 6, py::arg("id_prefix") = "utt");
  m.def("add_gaussian_noise", py::overload_cast<const Corpus&, double, std::uint64_t>(&add_gaussian_noise),
        py::arg("corpus"), py::arg("delta"), py::arg("seed"));
  m.def("save_corpus", &save_corpus, py::arg("path"), py::arg("corpus"));
  m.def("load_corpus", &load_corpus, py::arg("path"));

  // model
  py::class_<ModelState>(m, "Model")
      .def("logits", [](const ModelState& s, const Array& f) { return to_array(logits(s, to_tensor(f))); },
           py::arg("features"))
      .def("parameter_hash", [](const ModelState& s) { return parameter_hash(s); })
      .def_property_readonly("parameter_names", [](const ModelState& s) {
        std::vector<std::string> names;
        for (const auto& p : s.params) names.push_back(p.name);
        return names;
      })
      .def("parameter", [](const ModelState& s, const std::string& name) { return to_array(s.param(name).value); })
      .def("save", [](const ModelState& s, const std::filesystem::path& p) { save_checkpoint(p, s); })
      .def_static("load", &load_checkpoint);

  m.def("init_model", [](std::uint64_t seed) {
    ModelConfig c;
    c.seed = seed;
    return init_model(c);
  }, py::arg("seed") = 0);
  m.def("train_source", [](const ModelState& model, const Corpus& corpus, std::size_t epochs, double lr,
                           std::size_t batch_size, std::uint64_t seed) {
    TrainConfig c;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.seed = seed;
    py::gil_scoped_release release;
    auto r = train_source(model, corpus, c);
    std::vector<double> losses;
    for (const auto& e : r.log) losses.push_back(e.mean_loss);
    return std::make_pair(std::move(r.model), losses);
  }, py::arg("model"), py::arg("corpus"), py::arg("epochs") = 30, py::arg("lr") = 3e-3,
     py::arg("batch_size") = 8, py::arg("seed") = 0);
  m.def("evaluate", [](const ModelState& model, const Corpus& corpus) { return wer_dict(evaluate(model, corpus)); },
        py::arg("model"), py::arg("corpus"));

  // adaptation
  m.def("default_learning_rate", [](const std::string& params) { return default_learning_rate(parse_selection(params)); },
        py::arg("params"));
  m.def("adapt", [](const ModelState& model, const Utterance& u, const std::string& method, double alpha,
                    double temperature, std::size_t iterations, const std::string& params, std::optional<double> lr,
                    std::uint64_t seed) {
    const auto c = make_config(method, alpha, temperature, iterations, params, lr, seed);
    AdaptOutcome out = [&] {
      py::gil_scoped_release release;
      return adapt(model, u, c);
    }();
    py::dict d;
    d["hypothesis"] = out.hypothesis.text();
    d["trace"] = trace_list(out.trace);
    d["model"] = std::move(out.adapted);
    return d;
  }, py::arg("model"), py::arg("utterance"), ADAPT_ARGS);
  m.def("run_corpus", [](const ModelState& model, const Corpus& corpus, const std::string& method, double alpha,
                         double temperature, std::size_t iterations, const std::string& params,
                         std::optional<double> lr, std::uint64_t seed, std::size_t jobs) {
    const auto c = make_config(method, alpha, temperature, iterations, params, lr, seed);
    std::vector<harness::UtteranceResult> results;
    {
      py::gil_scoped_release release;
      results = harness::run_corpus(model, corpus, c, jobs);
    }
    py::list out;
    for (const auto& r : results) {
      py::dict d = wer_dict(r.wer);
      d["id"] = r.id;
      d["frames"] = r.frames;
      d["retained_fraction"] = r.retained_fraction;
      out.append(d);
    }
    return out;
  }, py::arg("model"), py::arg("corpus"), ADAPT_ARGS, py::arg("jobs") = 1);
}

// SPDX-License-Identifier: Apache-2.0
//
// Python bindings: configuration presets, parameter accounting, a few
// reference kernels, corpus generation and the binary file readers.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "voxadapt/io.hpp"
#include "voxadapt/run_config.hpp"

namespace py = pybind11;
using namespace voxadapt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Array& a) {
  require(a.ndim() >= 1 && a.ndim() <= 3, ErrorCode::kShapeMismatch, "expected a 1- to 3-dimensional array");
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::size_t>(a.shape(i)));
  if (shape.size() == 1) shape.insert(shape.begin(), 1);  // vectors are rows
  return Tensor<double>(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

RunConfig preset(const std::string& name) {
  if (name == "paper") return RunConfig::paper();
  if (name == "toy") return RunConfig::toy();
  fail(ErrorCode::kInvalidArgument, "unknown preset \"" + name + "\" (expected paper or toy)");
}

CountScope scope_of(const std::string& s) {
  if (s == "finetuned") return CountScope::kFinetuned;
  if (s == "deployed") return CountScope::kDeployed;
  if (s == "total") return CountScope::kTotal;
  fail(ErrorCode::kInvalidArgument, "unknown scope \"" + s + "\" (expected finetuned, deployed or total)");
}

py::dict utterance_dict(const SyntheticUtterance& u) {
  py::dict d;
  d["speaker"] = u.speaker;
  d["index"] = u.index;
  d["phonemes"] = u.phonemes;
  d["durations"] = u.durations;
  d["pitch"] = u.pitch;
  d["energy"] = u.energy;
  d["gain"] = u.gain;
  d["tilt"] = u.tilt;
  d["mel"] = to_array(u.mel);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Speaker adaptation core: presets, counts, kernels, corpus and file formats";
  py::register_exception<Error>(m, "VoxadaptError", PyExc_RuntimeError);

  m.def("preset", [](const std::string& name) { return to_key_values(preset(name)); }, py::arg("name"),
        "All key=value settings of a named preset (paper or toy).");
  m.def("parse_config", [](const std::string& text) { return to_key_values(parse_run_config(text)); },
        py::arg("text"), "Parse and validate config text; returns the completed settings.");
  m.def(
      "count_params",
      [](const std::string& name, const std::string& scope) { return count_params(preset(name).model, scope_of(scope)); },
      py::arg("preset"), py::arg("scope"), "Walk a freshly initialised parameter table and count one scope.");
  m.def("speaker_blob_size", &speaker_blob_size, py::arg("hidden"), py::arg("sites"));

  m.def(
      "layer_norm",
      [](const Array& x, const Array& gamma, const Array& beta, double eps) {
        Tape<double> t;
        return to_array(ops::layer_norm(t.constant(to_tensor(x)), t.constant(to_tensor(gamma)),
                                        t.constant(to_tensor(beta)), eps).value());
      },
      py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-5);
  m.def(
      "conditional_layer_norm",
      [](const Array& x, const Array& e, const Array& wg, const Array& wb, double eps) {
        Tape<double> t;
        return to_array(ops::conditional_layer_norm(t.constant(to_tensor(x)), t.constant(to_tensor(e)),
                                                    t.constant(to_tensor(wg)), t.constant(to_tensor(wb)), eps)
                            .value());
      },
      py::arg("x"), py::arg("embedding"), py::arg("w_gamma"), py::arg("w_beta"), py::arg("eps") = 1e-5);
  m.def(
      "conv1d",
      [](const Array& x, const Array& kernel, std::size_t stride) {
        Tape<double> t;
        return to_array(ops::conv1d(t.constant(to_tensor(x)), t.constant(to_tensor(kernel)), std::optional<Var<double>>{}, stride).value());
      },
      py::arg("x"), py::arg("kernel"), py::arg("stride") = 1,
      "x is [L x d_in], kernel [d_out x d_in x k]; same zero padding.");

  m.def(
      "generate_utterance",
      [](const std::string& name, std::uint64_t seed, int speaker, int index) {
        CorpusSpec spec = preset(name).corpus;
        spec.seed = seed;
        return utterance_dict(gen_utterance(spec, phoneme_prototypes(spec), gen_speaker(spec, speaker), index));
      },
      py::arg("preset"), py::arg("seed"), py::arg("speaker"), py::arg("index"));
  m.def(
      "load_utterance", [](const std::string& path) { return utterance_dict(decode_utterance(read_file(path))); },
      py::arg("path"));
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        const Checkpoint ck = load_checkpoint(path);
        py::dict params;
        for (const auto& [name, p] : ck.params) params[py::str(name)] = to_array(p.value);
        py::dict out;
        out["config"] = to_key_values(ck.config);
        out["seed"] = ck.seed;
        out["step"] = ck.step;
        out["params"] = params;
        return out;
      },
      py::arg("path"));
  m.def(
      "load_speaker_blob",
      [](const std::string& path) {
        const DeployedSpeakerParams<float> p = load_speaker_blob(path);
        py::list gammas, betas;
        for (const auto& g : p.gammas) gammas.append(to_array(g));
        for (const auto& b : p.betas) betas.append(to_array(b));
        py::dict out;
        out["gammas"] = gammas;
        out["betas"] = betas;
        out["embedding"] = to_array(p.embedding);
        out["scalar_count"] = p.scalar_count();
        return out;
      },
      py::arg("path"));
  m.def("load_mel", [](const std::string& path) { return to_array(decode_mel(read_file(path))); }, py::arg("path"));
}

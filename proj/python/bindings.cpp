#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "blurvid/datagen.hpp"
#include "blurvid/gradcheck_suite.hpp"
#include "blurvid/losses.hpp"
#include "blurvid/models.hpp"
#include "blurvid/trainer.hpp"
#include "blurvid/warp.hpp"

namespace py = pybind11;
using namespace blurvid;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() < 1 || a.ndim() > 4) throw ShapeError("expected an array of rank 1 to 4, got rank " + std::to_string(a.ndim()));
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<float> v(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(v));
}

// Images may be passed as (3,H,W) or (1,3,H,W).
Tensor to_image(const Array& a) {
  auto t = to_tensor(a);
  if (t.rank() == 3) t = t.reshape({1, t.dim(0), t.dim(1), t.dim(2)});
  if (t.rank() != 4) throw ShapeError("expected an image of shape (3,H,W) or (1,3,H,W), got " + to_string(t.shape()));
  return t;
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_frames(const std::vector<Array>& xs) {
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(to_image(x));
  return out;
}

py::list to_arrays(const std::vector<Tensor>& ts) {
  py::list out;
  for (const auto& t : ts) out.append(to_array(t));
  return out;
}

Stage stage_of(const std::string& s) { return parse_stage(s); }

TrainState load_state(const std::filesystem::path& path, Stage expected) {
  auto s = from_checkpoint(load_checkpoint(path));
  if (s.stage != expected) {
    throw Error("checkpoint " + path.string() + " holds stage " + stage_name(s.stage) + ", expected " +
                stage_name(expected));
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_blurvid, m) {
  m.doc() = "Single blurred image to video: networks, losses, data synthesis and training";

  // Translators run most-recently-registered first, so the base class goes first.
  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", error.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("desk", &ModelConfig::desk)
      .def_static("full", &ModelConfig::full)
      .def_readwrite("frames", &ModelConfig::frames)
      .def_readwrite("height", &ModelConfig::height)
      .def_readwrite("width", &ModelConfig::width)
      .def_readwrite("base_channels", &ModelConfig::base_channels)
      .def_readwrite("dm_base", &ModelConfig::dm_base)
      .def_readwrite("dm_growth", &ModelConfig::dm_growth)
      .def_readwrite("dm_rdb_layers", &ModelConfig::dm_rdb_layers)
      .def_readwrite("dm_rdbs_per_level", &ModelConfig::dm_rdbs_per_level)
      .def_readwrite("bie_predicts_cell", &ModelConfig::bie_predicts_cell)
      .def_property_readonly("hidden", &ModelConfig::hidden)
      .def("validate", &ModelConfig::validate);

  m.def("parameter_counts", &parameter_counts, py::arg("config"),
        "Trainable parameter count per network as (name, count) pairs.");

  // ---- data -------------------------------------------------------------------

  py::class_<BlurPair>(m, "BlurPair")
      .def_property_readonly("blurred", [](const BlurPair& p) { return to_array(p.blurred); })
      .def_property_readonly("frames", [](const BlurPair& p) { return to_arrays(p.source.frames); })
      .def_property_readonly("seed", [](const BlurPair& p) { return p.seed; })
      .def_property_readonly("scene", [](const BlurPair& p) -> py::object {
        if (!p.scene) return py::none();
        return py::str(to_json(*p.scene).dump());
      });

  m.def("synth_dataset",
        [](int count, int frames, int size, std::uint64_t seed, int threads) {
          return synth_dataset(count, frames, size, seed, threads);
        },
        py::arg("count"), py::arg("frames") = 5, py::arg("size") = 64, py::arg("seed") = 1, py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("read_dataset", &read_dataset, py::arg("directory"));
  m.def("write_dataset", &write_dataset, py::arg("pairs"), py::arg("directory"));
  m.def("blur", [](const std::vector<Array>& frames) { return to_array(form_blur(VideoSequence{to_frames(frames)}).blurred); },
        py::arg("frames"), "Average of the given frames.");

  // ---- ops --------------------------------------------------------------------

  m.def("warp", [](const Array& image, const Array& flow) { return to_array(warp_bilinear(to_image(image), to_tensor(flow))); },
        py::arg("image"), py::arg("flow"),
        "Backward bilinear warp: out(p) = image(p + flow(p)), clamped at the borders. Flow is (1,2,H,W).");
  m.def("order_invariant_loss",
        [](const std::vector<Array>& pred, const std::vector<Array>& gt) {
          return static_cast<double>(order_invariant_loss(to_frames(pred), to_frames(gt)).item());
        },
        py::arg("pred"), py::arg("gt"));
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_tensor(a), to_tensor(b)); }, py::arg("a"), py::arg("b"));

  // ---- training ---------------------------------------------------------------

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](const std::string& stage) { return default_train_config(stage_of(stage)); }), py::arg("stage"))
      .def_property_readonly("stage", [](const TrainConfig& c) { return std::string(stage_name(c.stage)); })
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("rvd_lr", &TrainConfig::rvd_lr)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("iterations", &TrainConfig::iterations)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("augment", &TrainConfig::augment)
      .def_readwrite("tv_warmup", &TrainConfig::tv_warmup)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_property(
          "mu", [](const TrainConfig& c) { return c.loss.mu; }, [](TrainConfig& c, double v) { c.loss.mu = v; });

  py::class_<TrainState>(m, "TrainState")
      .def_property_readonly("stage", [](const TrainState& s) { return std::string(stage_name(s.stage)); })
      .def_property_readonly("iteration", [](const TrainState& s) { return s.iteration; })
      .def_property_readonly("model", [](const TrainState& s) { return s.model; })
      .def("save", [](const TrainState& s, const std::filesystem::path& p) { save_checkpoint(p, to_checkpoint(s)); },
           py::arg("path"))
      .def("to_bytes",
           [](const TrainState& s) {
             auto b = serialize(to_checkpoint(s));
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def("parameters", [](const TrainState& s) {
        py::dict d;
        for (const auto& [name, t] : s.params) d[py::str(name)] = to_array(t);
        return d;
      });

  m.def("load_checkpoint", [](const std::filesystem::path& p) { return from_checkpoint(load_checkpoint(p)); },
        py::arg("path"));

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("state", &TrainResult::state)
      .def_readonly("losses", &TrainResult::losses);

  m.def("train_autoencoder",
        [](const TrainConfig& cfg, const ModelConfig& model, const std::vector<BlurPair>& data) {
          return train_autoencoder(cfg, model, data);
        },
        py::arg("config"), py::arg("model"), py::arg("pairs"), py::call_guard<py::gil_scoped_release>());
  m.def("train_bie",
        [](const TrainConfig& cfg, const TrainState& stage1, const std::vector<BlurPair>& data) {
          return train_bie(cfg, to_checkpoint(stage1), data);
        },
        py::arg("config"), py::arg("stage1"), py::arg("pairs"), py::call_guard<py::gil_scoped_release>());
  m.def("train_dm",
        [](const TrainConfig& cfg, const ModelConfig& model, const std::vector<BlurPair>& data) {
          return train_dm(cfg, model, data);
        },
        py::arg("config"), py::arg("model"), py::arg("pairs"), py::call_guard<py::gil_scoped_release>());
  m.def("resume", [](const TrainConfig& cfg, const TrainState& s, const std::vector<BlurPair>& data) { return train(cfg, s, data); },
        py::arg("config"), py::arg("state"), py::arg("pairs"), py::call_guard<py::gil_scoped_release>());

  // ---- inference --------------------------------------------------------------

  m.def("deblur",
        [](const TrainState& dm, const Array& blurred) {
          if (dm.stage != Stage::kDm) throw Error("deblur needs a dm checkpoint");
          return to_array(deblur(dm, to_image(blurred)));
        },
        py::arg("dm"), py::arg("blurred"));
  m.def("reconstruct",
        [](const TrainState& bie, const Array& blurred, const Array& sharp) {
          if (bie.stage != Stage::kBie) throw Error("reconstruct needs a bie checkpoint");
          return to_arrays(reconstruct_from_blur(bie, to_image(blurred), to_image(sharp)).frames);
        },
        py::arg("bie"), py::arg("blurred"), py::arg("sharp"),
        "Frame sequence for a blurred image given its sharp (or deblurred) center.");
  m.def("infer",
        [](const std::filesystem::path& bie_path, const std::filesystem::path& dm_path, const Array& blurred) {
          const auto dm = load_state(dm_path, Stage::kDm);
          const auto bie = load_state(bie_path, Stage::kBie);
          const auto image = to_image(blurred);
          const auto center = deblur(dm, image);
          return py::make_tuple(to_array(center), to_arrays(reconstruct_from_blur(bie, image, center).frames));
        },
        py::arg("bie"), py::arg("dm"), py::arg("blurred"),
        "Returns (deblurred center, list of frames) for one blurred image.");
  m.def("order_invariant_error",
        [](const std::vector<Array>& pred, const std::vector<Array>& gt) {
          return order_invariant_error(to_frames(pred), to_frames(gt));
        },
        py::arg("pred"), py::arg("gt"));

  // ---- gradient checks --------------------------------------------------------

  m.def("gradcheck",
        [](int seeds, const std::string& filter) {
          py::gil_scoped_release release;
          auto rows = run_gradcheck_suite(seeds, filter);
          py::gil_scoped_acquire acquire;
          py::list out;
          for (const auto& r : rows) {
            py::dict d;
            d["name"] = r.name;
            d["seeds"] = r.seeds;
            d["max_error"] = r.max_error;
            d["tolerance"] = r.tolerance;
            d["passed"] = r.passed;
            out.append(d);
          }
          return out;
        },
        py::arg("seeds") = 5, py::arg("filter") = "");
}

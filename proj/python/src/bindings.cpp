// Python bindings: numpy in, numpy out. Torch tensors stay on the C++ side.

#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tegan/cli.hpp"
#include "tegan/data.hpp"
#include "tegan/errors.hpp"
#include "tegan/losses.hpp"
#include "tegan/metrics.hpp"
#include "tegan/training.hpp"

namespace py = pybind11;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

torch::Tensor to_tensor(const Array& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

Array to_array(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat64).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  Array out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

// Loaded checkpoint with float32 forward passes.
class Model {
 public:
  explicit Model(const std::string& path) : state_(tegan::load_checkpoint(path)) { state_.nets.train(false); }

  Array translate(const Array& x, const Array& t) {
    torch::NoGradGuard no_grad;
    auto [xb, single] = batched(to_tensor(x).to(torch::kFloat32), 4);
    auto tb = to_tensor(t).to(torch::kFloat32);
    if (tb.dim() == 1) tb = tb.unsqueeze(0).expand({xb.size(0), tb.size(0)});
    const auto y = state_.nets.generator->forward(xb, tb);
    return to_array(single ? y.squeeze(0) : y);
  }

  py::tuple encode(const Array& x, const Array& y) {
    torch::NoGradGuard no_grad;
    auto [xb, single] = batched(to_tensor(x).to(torch::kFloat32), 4);
    auto [yb, unused] = batched(to_tensor(y).to(torch::kFloat32), 4);
    const auto p = state_.nets.encoder->forward(xb, yb);
    return py::make_tuple(to_array(single ? p.mean.squeeze(0) : p.mean),
                          to_array(single ? p.log_var.squeeze(0) : p.log_var));
  }

  std::int64_t transition_dim() const { return state_.nets.config.transition_dim; }
  std::int64_t step() const { return state_.step; }
  std::int64_t epoch() const { return state_.epoch; }
  std::string config_text() const { return state_.config.to_text(); }

 private:
  static std::pair<torch::Tensor, bool> batched(torch::Tensor t, std::int64_t rank) {
    if (t.dim() == rank - 1) return {t.unsqueeze(0), true};
    return {t, false};
  }

  tegan::TrainState state_;
};

tegan::AttributeVector attrs(const std::vector<int>& bits) { return tegan::AttributeVector(bits); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transition-encoding image translation: metrics, losses, data and checkpoints";
  m.def("version", [] { return std::string(tegan::cli::version()); });

  auto base = py::register_exception<tegan::Error>(m, "TeganError", PyExc_RuntimeError);
  py::register_exception<tegan::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<tegan::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<tegan::DomainError>(m, "DomainError", base.ptr());

  m.def("ssim", [](const Array& a, const Array& b) { return tegan::ssim(to_tensor(a), to_tensor(b)); },
        py::arg("a"), py::arg("b"), "Mean SSIM of two [3, H, W] images in [-1, 1]");
  m.def("psnr", [](const Array& a, const Array& b) { return tegan::psnr(to_tensor(a), to_tensor(b)); },
        py::arg("a"), py::arg("b"));
  m.def("frechet_distance",
        [](const Array& a, const Array& b) { return tegan::frechet_distance(to_tensor(a), to_tensor(b)); },
        py::arg("feats_a"), py::arg("feats_b"));

  m.def("adv_real_img", [](const Array& r, const Array& f) { return scalar(tegan::adv_real_img(to_tensor(r), to_tensor(f))); });
  m.def("adv_trans", [](const Array& t, const Array& p, const Array& e) {
    return scalar(tegan::adv_trans(to_tensor(t), to_tensor(p), to_tensor(e)));
  });
  m.def("adv_real_newimg", [](const Array& r, const Array& e, const Array& p) {
    return scalar(tegan::adv_real_newimg(to_tensor(r), to_tensor(e), to_tensor(p)));
  });
  m.def("recons_img_self", [](const Array& a, const Array& b) { return scalar(tegan::recons_img_self(to_tensor(a), to_tensor(b))); });
  m.def("recons_img_cyc", [](const Array& a, const Array& b) { return scalar(tegan::recons_img_cyc(to_tensor(a), to_tensor(b))); });

  m.def("attribute_names", &tegan::shape_attribute_names);
  m.def(
      "render",
      [](const std::vector<int>& bits, std::uint64_t seed, std::int64_t side) {
        return to_array(tegan::render({attrs(bits), seed}, {side, side}));
      },
      py::arg("attributes"), py::arg("seed") = 0, py::arg("side") = 32,
      "Render one synthetic shape as a [3, side, side] array in [-1, 1]");
  m.def(
      "make_triplet",
      [](const std::vector<int>& a_x, const std::vector<int>& a_y, std::uint64_t seed_x, std::uint64_t seed_y,
         std::int64_t side) {
        const auto s = tegan::make_triplet(attrs(a_x), attrs(a_y), seed_x, seed_y, {side, side});
        return py::make_tuple(to_array(s.x), to_array(s.t.values), to_array(s.y));
      },
      py::arg("a_x"), py::arg("a_y"), py::arg("seed_x") = 0, py::arg("seed_y") = 1, py::arg("side") = 32,
      "(x, t, y) with t = (a_y - a_x) / 2");

  m.def("parse_config", [](const std::string& text) { return tegan::TrainConfig::parse(text).to_text(); },
        "Validate a key = value training config; returns its normalized text");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("translate", &Model::translate, py::arg("x"), py::arg("t"), "G(x, t) for [3,H,W] or [B,3,H,W] inputs")
      .def("encode", &Model::encode, py::arg("x"), py::arg("y"), "Posterior (mean, log_var) of E(x, y)")
      .def_property_readonly("transition_dim", &Model::transition_dim)
      .def_property_readonly("step", &Model::step)
      .def_property_readonly("epoch", &Model::epoch)
      .def_property_readonly("config_text", &Model::config_text);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = tegan::cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a tegan subcommand in-process; returns (exit_code, stdout, stderr)");
}

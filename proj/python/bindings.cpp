#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "vmamba/checkpoint.hpp"
#include "vmamba/clip.hpp"
#include "vmamba/color.hpp"
#include "vmamba/commands.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/image_io.hpp"
#include "vmamba/metrics.hpp"
#include "vmamba/model.hpp"
#include "vmamba/ss2d.hpp"
#include "vmamba/ssm.hpp"

namespace py = pybind11;
using namespace vmamba;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

DiscreteSSM make_system(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c,
                        double d, double delta, const std::string& bbar) {
  return discretize_zoh(SSMParams::make_diagonal(a, b, c, d), delta, parse_bbar_mode(bbar));
}

}  // namespace

PYBIND11_MODULE(_vmamba, m) {
  m.doc() = "Low-light video enhancement with visual state space models";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "lti_scan",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c, double d,
         double delta, const Array& x, const std::string& algorithm, const std::string& bbar) {
        NoGradGuard guard;
        return to_array(scan(make_system(a, b, c, d, delta, bbar), to_tensor(x), parse_scan_algorithm(algorithm)));
      },
      py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"), py::arg("delta"), py::arg("x"),
      py::arg("algorithm") = "parallel", py::arg("bbar") = "exact",
      "Diagonal LTI system h' = a*h + b*x, y = c.h + d*x discretized with step delta and scanned over x[L].");

  m.def(
      "discretize",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& c, double d,
         double delta, const std::string& bbar) {
        const auto s = make_system(a, b, c, d, delta, bbar);
        return py::make_tuple(to_array(s.A_bar), to_array(s.B_bar));
      },
      py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"), py::arg("delta"), py::arg("bbar") = "exact",
      "Zero-order-hold (A_bar, B_bar) of a diagonal system.");

  m.def(
      "selective_scan",
      [](const Array& x, const Array& delta, const Array& A, const Array& B, const Array& C, const Array& D,
         const std::string& algorithm) {
        NoGradGuard guard;
        return to_array(selective_scan(to_tensor(x), to_tensor(delta), to_tensor(A), to_tensor(B), to_tensor(C),
                                       to_tensor(D), parse_scan_algorithm(algorithm)));
      },
      py::arg("x"), py::arg("delta"), py::arg("A"), py::arg("B"), py::arg("C"), py::arg("D"),
      py::arg("algorithm") = "parallel", "Input-dependent scan: x[L,Ch], delta[L], A[Ch,d], B[L,d], C[L,d], D[Ch].");

  m.def(
      "cross_scan",
      [](const Array& grid) {
        const auto seqs = cross_scan(FeatureMap(to_tensor(grid)));
        py::list out;
        for (const auto& s : seqs.sequences) out.append(to_array(s));
        return out;
      },
      py::arg("grid"), "Four directional [H*W, C] sequences of a [C, H, W] grid.");
  m.def(
      "cross_merge",
      [](const std::vector<Array>& seqs, std::size_t height, std::size_t width) {
        if (seqs.size() != 4) throw DimensionError("cross_merge expects four sequences");
        DirectionalSequences d;
        for (std::size_t i = 0; i < 4; ++i) d.sequences[i] = to_tensor(seqs[i]);
        d.height = height;
        d.width = width;
        return to_array(cross_merge(d).values());
      },
      py::arg("sequences"), py::arg("height"), py::arg("width"));

  m.def(
      "psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_tensor(a), to_tensor(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def(
      "ssim", [](const Array& a, const Array& b, double peak) { return ssim(to_tensor(a), to_tensor(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def(
      "estimate_illuminant", [](const Array& frame) { return estimate_illuminant(to_tensor(frame)).rgb; },
      py::arg("frame"), "Gray-world illuminant (R, G, B) of a [3, H, W] frame.");
  m.def(
      "chromatic_adapt",
      [](const Array& frame, const Rgb& src, const std::optional<Rgb>& dst, bool clip) {
        const auto to = dst ? Illuminant::from_rgb(*dst) : Illuminant::d65();
        return to_array(chromatic_adapt(to_tensor(frame), Illuminant::from_rgb(src), to, clip));
      },
      py::arg("frame"), py::arg("src"), py::arg("dst") = py::none(), py::arg("clip") = true);

  m.def(
      "read_image",
      [](const std::filesystem::path& path) {
        auto img = read_image(path);
        return py::make_tuple(to_array(img.pixels), img.bit_depth);
      },
      py::arg("path"), "Returns ([3, H, W] unit-scale array, bit depth).");
  m.def(
      "write_image",
      [](const std::filesystem::path& path, const Array& pixels, int bit_depth) {
        write_image(path, to_tensor(pixels), bit_depth);
      },
      py::arg("path"), py::arg("pixels"), py::arg("bit_depth") = 8);
  m.def(
      "load_clip",
      [](const std::filesystem::path& dir) {
        const auto clip = load_clip(dir);
        py::list frames;
        for (const auto& f : clip.frames) frames.append(to_array(f));
        return py::make_tuple(frames, clip.paths);
      },
      py::arg("dir"), "Returns (frames, paths) in natural file-name order.");

  py::class_<VideoEnhancer>(m, "VideoEnhancer")
      .def_static(
          "create",
          [](std::size_t input_frames, std::size_t base_channels, std::vector<std::size_t> stage_depths,
             std::size_t bottleneck_depth, std::size_t state_dim, std::uint64_t seed) {
            EnhanceNetConfig cfg;
            cfg.input_frames = input_frames;
            cfg.base_channels = base_channels;
            cfg.stage_depths = std::move(stage_depths);
            cfg.num_scales = cfg.stage_depths.size();
            cfg.bottleneck_depth = bottleneck_depth;
            cfg.state_dim = state_dim;
            return VideoEnhancer::init(cfg, seed);
          },
          py::arg("input_frames") = 5, py::arg("base_channels") = 16,
          py::arg("stage_depths") = std::vector<std::size_t>{2, 2, 2}, py::arg("bottleneck_depth") = 2,
          py::arg("state_dim") = 8, py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("dir"))
      .def("save", [](VideoEnhancer& self, const std::filesystem::path& dir) { save_checkpoint(dir, self); })
      .def_property_readonly("input_frames", [](const VideoEnhancer& self) { return self.config().input_frames; })
      .def("parameter_count",
           [](VideoEnhancer& self) {
             std::size_t n = 0;
             for (const auto& p : self.parameters()) n += p.tensor.numel();
             return n;
           })
      .def(
          "enhance",
          [](const VideoEnhancer& self, const std::vector<Array>& window) {
            NoGradGuard guard;
            std::vector<Tensor> frames;
            for (const auto& f : window) frames.push_back(to_tensor(f));
            return to_array(self.forward(frames, true));
          },
          py::arg("window"), "Enhanced center frame of a window of [3, H, W] frames.");

  m.def(
      "train",
      [](const std::filesystem::path& config) {
        std::ostringstream log;
        cmd_train(load_run_config(config), log);
        return log.str();
      },
      py::arg("config"));
  m.def(
      "enhance_dir",
      [](const std::filesystem::path& config, const std::filesystem::path& input, const std::filesystem::path& output,
         bool adapt_color) {
        std::ostringstream log;
        cmd_enhance(load_run_config(config), input, output, adapt_color, log);
        return log.str();
      },
      py::arg("config"), py::arg("input"), py::arg("output"), py::arg("adapt_color") = false);
  m.def(
      "scan_bench",
      [](std::vector<std::size_t> lengths, std::vector<std::size_t> dims, std::size_t repeats) {
        ScanBenchOptions opts;
        opts.lengths = std::move(lengths);
        opts.dims = std::move(dims);
        opts.repeats = repeats;
        py::list rows;
        for (const auto& r : run_scan_bench(opts)) {
          rows.append(py::dict(py::arg("mode") = r.mode, py::arg("L") = r.length, py::arg("d") = r.dim,
                               py::arg("median_ns") = r.median_ns,
                               py::arg("max_abs_disagreement") = r.max_abs_disagreement));
        }
        return rows;
      },
      py::arg("lengths"), py::arg("dims"), py::arg("repeats") = 5);
}

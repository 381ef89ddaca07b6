#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "slm/camgeom.hpp"
#include "slm/detect.hpp"
#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/fuse3d.hpp"
#include "slm/mesh.hpp"
#include "slm/meshops.hpp"
#include "slm/pipeline.hpp"
#include "slm/rigsim.hpp"
#include "slm/session.hpp"
#include "slm/track.hpp"

namespace py = pybind11;
using namespace slm;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
std::string dumps(const nlohmann::json& j) { return j.dump(); }
nlohmann::json loads(const std::string& s) { return nlohmann::json::parse(s); }

}  // namespace

PYBIND11_MODULE(_slm, m) {
  m.doc() = "Skin lesion mapping engine";
  m.attr("__version__") = kVersion;

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParameterError>(m, "ParameterError", error.ptr());
  py::register_exception<BehindCameraError>(m, "BehindCameraError", error.ptr());
  py::register_exception<FitError>(m, "FitError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<InputError>(m, "InputError", error.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", error.ptr());
  py::register_exception<NotFoundError>(m, "NotFoundError", error.ptr());
  py::register_exception<DependencyError>(m, "DependencyError", error.ptr());

  // Geometry.
  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init<>())
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height)
      .def("scaled", &Intrinsics::scaled);

  py::class_<CameraRecord>(m, "Camera")
      .def(py::init<>())
      .def_readwrite("id", &CameraRecord::id)
      .def_readwrite("intrinsics", &CameraRecord::intrinsics)
      .def_readwrite("world_from_camera", &CameraRecord::world_from_camera)
      .def_property_readonly("center", &CameraRecord::center)
      .def_property_readonly("view_axis", &CameraRecord::view_axis)
      .def("__repr__", [](const CameraRecord& c) { return "<Camera " + c.id + ">"; });

  m.def("look_at", &look_at, py::arg("eye"), py::arg("target"), py::arg("up") = Vec3::UnitY());
  m.def(
      "project",
      [](const Vec3& p, const CameraRecord& cam) {
        const Projection pr = project(p, cam);
        return py::make_tuple(pr.pixel, pr.depth);
      },
      "Returns (pixel, depth).");
  m.def("unproject", &unproject, py::arg("pixel"), py::arg("depth"), py::arg("camera"));
  m.def("read_cameras", &read_cameras);

  // Meshes.
  py::class_<TriMesh>(m, "TriMesh")
      .def(py::init<>())
      .def_readwrite("vertices", &TriMesh::vertices)
      .def_readwrite("faces", &TriMesh::faces)
      .def("__repr__", [](const TriMesh& t) {
        return "<TriMesh " + std::to_string(t.vertices.size()) + " vertices, " +
               std::to_string(t.faces.size()) + " faces>";
      });
  m.def("make_icosphere", &make_icosphere, py::arg("subdivisions"), py::arg("radius") = 1.0,
        py::arg("center") = Vec3::Zero());
  m.def("read_obj", &read_obj);
  m.def(
      "hausdorff",
      [](const TriMesh& a, const TriMesh& b, std::size_t n, std::uint64_t seed) {
        const auto r = hausdorff_symmetric(a, b, n, seed);
        return py::make_tuple(r.max, r.mean);
      },
      py::arg("a"), py::arg("b"), py::arg("samples") = 10000, py::arg("seed") = 0,
      "Symmetric sampled Hausdorff distance as (max, mean).");
  m.def("geodesic", &geodesic, py::arg("mesh"), py::arg("source"), py::arg("targets"));

  // Detection.
  m.def(
      "tile",
      [](int w, int h, int size, double overlap) {
        const TileGrid g = tile(w, h, size, overlap);
        std::vector<std::pair<int, int>> out;
        for (const auto& o : g.offsets) out.emplace_back(o[0], o[1]);
        return out;
      },
      py::arg("width"), py::arg("height"), py::arg("tile_size") = 608, py::arg("overlap") = 0.5,
      "Tile origins (x, y), row-major.");
  m.def(
      "iou",
      [](std::array<double, 4> a, std::array<double, 4> b) {
        return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
      },
      "IoU of two (x, y, w, h) boxes.");
  m.def(
      "_soft_nms",
      [](const std::string& dets, double sigma, double floor) {
        const auto set = detections_from_json(nlohmann::json{{"_", loads(dets)}});
        return dumps(nlohmann::json(soft_nms(set.at("_"), sigma, floor)));
      },
      py::arg("detections"), py::arg("sigma") = 0.5, py::arg("score_floor") = 0.25);
  m.def(
      "_evaluate",
      [](const std::string& dets, const std::string& gts, double thr) {
        const auto r = evaluate(detections_from_json(loads(dets)), detections_from_json(loads(gts)), thr);
        return dumps({{"map50", r.map50},
                      {"precision", r.precision},
                      {"recall", r.recall},
                      {"pooled_ap", r.pooled_ap}});
      },
      py::arg("detections"), py::arg("ground_truth"), py::arg("iou_threshold") = 0.5);

  // Fusion and tracking.
  m.def(
      "cluster_points",
      [](const std::vector<Vec3>& pts, double threshold, std::size_t min_size) {
        const Clustering c = cluster_points(pts, threshold, min_size);
        return py::make_tuple(c.clusters, c.rejected);
      },
      py::arg("points"), py::arg("threshold") = kDefaultClusterThreshold,
      py::arg("min_cluster_size") = kDefaultMinClusterSize,
      "Returns (clusters, rejected) as lists of index lists.");
  m.def("solve_assignment", &solve_assignment, py::arg("cost"), py::arg("rows"), py::arg("cols"));

  // Sessions and the pipeline.
  m.def("pipeline_stages", &pipeline_stages);
  m.def(
      "_run_pipeline",
      [](const std::filesystem::path& dir, const std::vector<std::string>& stages,
         const std::string& config) {
        py::gil_scoped_release release;
        const PipelineConfig cfg = pipeline_config_from_json(loads(config));
        return dumps(nlohmann::json(run_pipeline(dir, stages, cfg)));
      },
      py::arg("session"), py::arg("stages"), py::arg("config") = "{}");
  m.def(
      "_load_session",
      [](const std::filesystem::path& dir) { return dumps(nlohmann::json(load_session(dir))); });
  m.def(
      "_default_config", [] { return dumps(pipeline_config_to_json(PipelineConfig{})); });
  m.def(
      "synthesize_phantom_session",
      [](const std::filesystem::path& dir, const std::string& session_id, int lesions,
         double diameter_mm, double resolution_scale, double bend_deg, std::uint64_t seed) {
        py::gil_scoped_release release;
        PhantomSessionSpec spec;
        spec.session_id = session_id;
        spec.lesion_count = lesions;
        spec.diameter_mm = diameter_mm;
        spec.rig.resolution_scale = resolution_scale;
        spec.bend_deg = bend_deg;
        spec.seed = seed;
        synthesize_phantom_session(dir, spec);
      },
      py::arg("session"), py::arg("session_id") = "", py::arg("lesions") = 20,
      py::arg("diameter_mm") = 8.0, py::arg("resolution_scale") = 0.25,
      py::arg("bend_deg") = 0.0, py::arg("seed") = 1);
  m.def(
      "link_previous_session",
      [](const std::filesystem::path& dir, const std::filesystem::path& prev) {
        const auto n = read_obj(resolve(prev, load_session(prev).mesh)).vertices.size();
        link_previous_session(dir, prev, identity_correspondence(n, "previous", "current"));
      },
      py::arg("session"), py::arg("previous"),
      "Links an earlier scan of the same mesh topology with the identity correspondence.");
  m.def(
      "apply_edit",
      [](const std::filesystem::path& dir, const std::string& image_id, int det_id,
         const std::string& action, const std::string& notes) {
        return dumps(nlohmann::json(
            apply_edit(dir, {image_id, det_id, edit_action_from_string(action), notes, ""})));
      },
      py::arg("session"), py::arg("image_id"), py::arg("det_id"), py::arg("action"),
      py::arg("notes") = "");
}

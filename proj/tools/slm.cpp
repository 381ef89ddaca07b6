// slm: synthetic capture, pipeline stages, evaluation and the review API.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <numbers>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/meshops.hpp"
#include "slm/pipeline.hpp"
#include "slm/rigsim.hpp"
#include "slm/track.hpp"

// httplib last (see src/service.cpp).
#include "slm/service.hpp"

namespace fs = std::filesystem;
using namespace slm;

namespace {

struct Globals {
  std::string session;
  std::string config;
  std::uint64_t seed = 1;
};

PipelineConfig load_config(const Globals& g) {
  if (g.config.empty()) return {};
  return pipeline_config_from_json(read_json(g.config));
}

fs::path require_session(const Globals& g) {
  if (g.session.empty()) throw ParameterError("--session is required");
  return g.session;
}

void print_manifest_flags(const SessionManifest& m) {
  for (const char* flag : kStageFlags) {
    const auto* s = m.find_stage(flag);
    std::printf("%-9s %s%s\n", flag, s && s->done ? "done" : "-", s && s->stale ? " (stale)" : "");
  }
}

nlohmann::json evaluate_session(const fs::path& dir, const PipelineConfig& cfg) {
  const SessionManifest m = load_session(dir);
  nlohmann::json report{{"session", m.session_id}};
  if (fs::exists(dir / paths::kDetections) && fs::exists(dir / paths::kGtDetections)) {
    const auto dets = read_detections(dir / paths::kDetections);
    const auto gts = read_detections(dir / paths::kGtDetections);
    const auto r = evaluate(dets, gts);
    report["detection"] = {{"map50", r.map50},
                           {"pooled_ap", r.pooled_ap},
                           {"precision", r.precision},
                           {"recall", r.recall}};
  }
  if (fs::exists(dir / paths::kLesions) && fs::exists(dir / paths::kGtLesions)) {
    const auto reg = read_registry(dir / paths::kLesions);
    const auto truth = read_registry(dir / paths::kGtLesions);
    const auto f = evaluate_fusion(reg.lesions, truth.lesions, cfg.truth_tolerance);
    report["fusion"] = {{"truth", f.truth},
                        {"global_lesions", reg.lesions.size()},
                        {"recovered", f.recovered},
                        {"spurious", f.spurious},
                        {"max_centroid_error_m", f.max_centroid_error},
                        {"mean_centroid_error_m", f.mean_centroid_error}};
  }
  if (fs::exists(dir / paths::kTracks)) {
    const auto t = read_tracks(dir / paths::kTracks);
    std::size_t matched = 0;
    for (const auto& p : t.pairs) matched += p.matched;
    report["tracking"] = {{"pairs", t.pairs.size()}, {"matched", matched}};
    if (t.accuracy) report["tracking"]["accuracy"] = *t.accuracy;
  }
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skin lesion mapping: synthetic rig, detection, 3D fusion and tracking"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--session", g.session, "Session directory");
  app.add_option("--config", g.config, "JSON file with pipeline parameters");
  app.add_option("--seed", g.seed, "Random seed");

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic phantom capture session");
  PhantomSessionSpec spec;
  std::string previous, corr_out;
  double corr_noise_mm = 0.0;
  synth->add_option("--scale", spec.rig.resolution_scale, "Image resolution scale")
      ->capture_default_str();
  synth->add_option("--lesions", spec.lesion_count, "Number of painted lesions")
      ->capture_default_str();
  synth->add_option("--diameter-mm", spec.diameter_mm, "Lesion diameter")->capture_default_str();
  synth->add_option("--bend-deg", spec.bend_deg, "Forward bend of the upper body")
      ->capture_default_str();
  synth->add_option("--subject", spec.subject_id, "Subject id")->capture_default_str();
  synth->add_option("--captured-at", spec.captured_at, "Capture timestamp")->capture_default_str();
  synth->add_option("--previous", previous, "Earlier session of the same subject to track against");
  synth->add_option("--corr-noise-mm", corr_noise_mm,
                    "Per-axis noise added to the correspondence with --previous")
      ->capture_default_str();
  synth->add_option("--correspondence-out", corr_out, "Also write the correspondence here");

  // pipeline stages
  PipelineConfig overrides;
  auto* pre = app.add_subcommand("preprocess", "Render depth maps and subject masks");
  auto* det = app.add_subcommand("detect", "Detect lesions in every image");
  std::optional<int> tile_size;
  std::optional<double> overlap, threshold;
  std::vector<double> scales;
  std::string external;
  det->add_option("--tile", tile_size, "Tile size in pixels");
  det->add_option("--overlap", overlap, "Tile overlap fraction");
  det->add_option("--threshold", threshold, "LoG response threshold");
  det->add_option("--scales", scales, "LoG sigmas in pixels");
  det->add_option("--external", external, "Ingest this detections.json instead of running LoG");
  auto* fuse = app.add_subcommand("fuse", "Lift detections to 3D and cluster them into lesions");
  std::optional<double> cluster_threshold;
  std::optional<std::size_t> min_cluster;
  fuse->add_option("--threshold", cluster_threshold, "Clustering distance threshold (m)");
  fuse->add_option("--min-cluster", min_cluster, "Smallest accepted cluster");
  auto* track = app.add_subcommand("track", "Match lesions against the previous scan");
  std::optional<double> max_geodesic;
  std::string session_a, session_b, corr_file;
  track->add_option("--max-geodesic", max_geodesic, "Largest accepted residual (m)");
  track->add_option("--session-a", session_a, "Earlier session");
  track->add_option("--session-b", session_b, "Later session (defaults to --session)");
  track->add_option("--corr", corr_file, "Vertex correspondence from A to B");
  auto* run = app.add_subcommand("run", "Run several pipeline stages in order");
  std::vector<std::string> stages = pipeline_stages();
  run->add_option("--stages", stages, "Stages to run")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Compare session outputs with ground truth");
  std::string reference_mesh;
  std::size_t samples = 100000;
  eval->add_option("--reference-mesh", reference_mesh, "Report Hausdorff distance to this mesh");
  eval->add_option("--samples", samples, "Hausdorff surface samples")->capture_default_str();

  auto* canon = app.add_subcommand("canonicalize", "Place a raw scan at the canonical origin");
  std::string raw_mesh, raw_points, canon_out;
  double stand_diameter = 0.0, ground_tol = 0.01, band = 0.02;
  canon->add_option("--mesh", raw_mesh, "Raw mesh (OBJ)")->required();
  canon->add_option("--points", raw_points, "Point cloud for fitting (PLY); defaults to vertices");
  canon->add_option("--stand-diameter", stand_diameter, "Known stand diameter (m)")->required();
  canon->add_option("--ground-tol", ground_tol, "Plane inlier tolerance")->capture_default_str();
  canon->add_option("--band", band, "Stand search band above the ground")->capture_default_str();
  canon->add_option("--out", canon_out, "Output OBJ")->required();

  auto* serve = app.add_subcommand("serve", "Serve sessions over HTTP for review");
  std::string root = ".", host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--root", root, "Directory of sessions")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = load_config(g);
    if (tile_size) cfg.tile_size = *tile_size;
    if (overlap) cfg.tile_overlap = *overlap;
    if (threshold) cfg.log.response_threshold = *threshold;
    if (!scales.empty()) cfg.log.scales = scales;
    if (!external.empty()) cfg.external_detections = fs::absolute(external).string();
    if (cluster_threshold) cfg.cluster_threshold = *cluster_threshold;
    if (min_cluster) cfg.min_cluster_size = *min_cluster;
    if (max_geodesic) cfg.max_geodesic = *max_geodesic;

    if (*synth) {
      const fs::path dir = require_session(g);
      spec.seed = g.seed;
      spec.session_id = dir.filename().string();
      synthesize_phantom_session(dir, spec);
      if (!previous.empty()) {
        const SessionManifest prev = load_session(previous);
        const TriMesh mesh_a = read_obj(resolve(previous, prev.mesh));
        const TriMesh mesh_b = read_obj(dir / "mesh/body.obj");
        if (mesh_a.vertices.size() != mesh_b.vertices.size()) {
          throw ParameterError("--previous: sessions do not share a mesh topology");
        }
        CorrespondenceMap corr =
            identity_correspondence(mesh_a.vertices.size(), prev.session_id, spec.session_id);
        corr = perturb_correspondence(corr, mesh_b, corr_noise_mm / 1000.0, g.seed);
        link_previous_session(dir, previous, corr);
        if (!corr_out.empty()) write_correspondence(corr_out, corr);
      }
      std::printf("wrote %s\n", dir.string().c_str());
    } else if (*pre || *det || *fuse || *run) {
      const fs::path dir = require_session(g);
      std::vector<std::string> todo = stages;
      if (*pre) todo = {"preprocess"};
      if (*det) todo = {"detect"};
      if (*fuse) todo = {"fuse"};
      print_manifest_flags(run_pipeline(dir, todo, cfg));
    } else if (*track) {
      const fs::path dir = session_b.empty() ? require_session(g) : fs::path(session_b);
      if (!session_a.empty()) {
        if (corr_file.empty()) throw ParameterError("--session-a needs --corr");
        link_previous_session(dir, session_a, read_correspondence(corr_file));
      }
      print_manifest_flags(run_pipeline(dir, {"track"}, cfg));
    } else if (*eval) {
      const fs::path dir = require_session(g);
      nlohmann::json report = evaluate_session(dir, cfg);
      if (!reference_mesh.empty()) {
        const SessionManifest m = load_session(dir);
        const auto h = hausdorff_symmetric(read_obj(resolve(dir, m.mesh)), read_obj(reference_mesh),
                                           samples, g.seed);
        report["hausdorff"] = {{"max_m", h.max}, {"mean_m", h.mean}, {"samples", samples}};
      }
      std::cout << report.dump(2) << "\n";
    } else if (*canon) {
      const TriMesh mesh = read_obj(raw_mesh);
      const std::vector<Vec3> points = raw_points.empty() ? mesh.vertices : read_ply_points(raw_points);
      const PlaneFit ground = fit_ground_plane(points, ground_tol, kDefaultRansacIterations, g.seed);
      const CircleFit stand = fit_stand_circle(points, ground.plane, band, g.seed);
      const Canonicalization c = canonicalize(mesh, ground.plane, stand.circle, stand_diameter);
      write_obj(canon_out, c.mesh);
      fs::path sidecar = canon_out;
      sidecar.replace_extension(".json");
      nlohmann::json side = canonicalization_sidecar(c, ground, stand, g.seed);
      write_json(sidecar, side);
      std::printf("scale %.9g, wrote %s\n", c.scale, canon_out.c_str());
    } else if (*serve) {
      ReviewServer server(root);
      const int bound = server.bind(host, port);
      std::printf("serving %s on http://%s:%d\n", root.c_str(), host.c_str(), bound);
      std::fflush(stdout);
      server.listen();
    }
  } catch (const DependencyError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

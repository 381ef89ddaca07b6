#include "slm/service.hpp"

#include <algorithm>
#include <functional>
#include <vector>

#include <json.hpp>

#include "slm/detect.hpp"
#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/pipeline.hpp"
#include "slm/session.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that
// collides with Eigen parameter names.
#include <httplib.h>

namespace slm {

namespace fs = std::filesystem;

namespace {

struct BadRequest : Error {
  using Error::Error;
};

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler inner) {
  return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
    try {
      inner(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const BadRequest& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.front() != '.' && id.find('/') == std::string::npos &&
         id.find('\\') == std::string::npos;
}

std::string raw_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw NotFoundError(what + " not found");
  return read_file(path);
}

}  // namespace

ReviewServer::ReviewServer(fs::path root)
    : root_(std::move(root)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ReviewServer::listen() { server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

std::mutex& ReviewServer::session_lock(const std::string& session_id) {
  const std::lock_guard guard(locks_mutex_);
  auto& slot = locks_[session_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void ReviewServer::install_routes() {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, PATCH, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  // Session directory for a URL id; 404 unless it holds a manifest.
  const auto session_dir = [this](const std::string& id) {
    if (!valid_id(id)) throw NotFoundError("unknown session '" + id + "'");
    const fs::path dir = root_ / id;
    if (!fs::exists(dir / paths::kManifest)) throw NotFoundError("unknown session '" + id + "'");
    return dir;
  };

  srv.Get("/api/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::vector<std::string> ids;
    if (fs::is_directory(root_)) {
      for (const auto& entry : fs::directory_iterator(root_)) {
        const std::string id = entry.path().filename().string();
        if (entry.is_directory() && valid_id(id) && fs::exists(entry.path() / paths::kManifest)) {
          ids.push_back(id);
        }
      }
    }
    std::sort(ids.begin(), ids.end());
    nlohmann::json out = nlohmann::json::array();
    for (const auto& id : ids) {
      try {
        const SessionManifest m = load_session(root_ / id);
        nlohmann::json stages = nlohmann::json::object();
        for (const char* flag : kStageFlags) {
          const auto* s = m.find_stage(flag);
          stages[flag] = {{"done", s && s->done}, {"stale", s && s->stale}};
        }
        out.push_back({{"id", id},
                       {"session_id", m.session_id},
                       {"subject_id", m.subject_id},
                       {"captured_at", m.captured_at},
                       {"images", m.images.size()},
                       {"stages", stages}});
      } catch (const std::exception& e) {
        out.push_back({{"id", id}, {"error", e.what()}});
      }
    }
    send_json(res, out);
  }));

  srv.Get(R"(/api/sessions/([^/]+)/manifest)",
          guarded([session_dir](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = session_dir(req.matches[1]);
            const SessionManifest m = load_session(dir);
            send_json(res, nlohmann::json(m));
          }));

  srv.Get(R"(/api/sessions/([^/]+)/images/([^/]+))",
          guarded([session_dir](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = session_dir(req.matches[1]);
            const SessionManifest m = load_session(dir);
            const auto* entry = m.find_image(req.matches[2]);
            if (!entry) throw NotFoundError("unknown image '" + std::string(req.matches[2]) + "'");
            res.set_content(raw_file(resolve(dir, entry->file), "image"), "image/png");
          }));

  srv.Get(R"(/api/sessions/([^/]+)/mesh)",
          guarded([session_dir](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = session_dir(req.matches[1]);
            const SessionManifest m = load_session(dir);
            res.set_content(raw_file(resolve(dir, m.mesh), "mesh"), "model/obj");
          }));

  srv.Get(R"(/api/sessions/([^/]+)/texture)",
          guarded([session_dir](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = session_dir(req.matches[1]);
            const SessionManifest m = load_session(dir);
            res.set_content(raw_file(resolve(dir, m.texture), "texture"), "image/png");
          }));

  const auto json_file = [session_dir](const char* rel, const char* what) {
    return guarded([session_dir, rel, what](const httplib::Request& req, httplib::Response& res) {
      const fs::path dir = session_dir(req.matches[1]);
      const std::string bytes = raw_file(dir / rel, what);
      if (!nlohmann::json::accept(bytes)) throw FormatError(std::string(what) + " is not valid JSON");
      res.set_content(bytes, "application/json");
    });
  };
  srv.Get(R"(/api/sessions/([^/]+)/lesions)", json_file(paths::kLesions, "lesions"));
  srv.Get(R"(/api/sessions/([^/]+)/tracks)", json_file(paths::kTracks, "tracks"));

  const auto image_dets = [](const fs::path& dir, const std::string& image_id) {
    const DetectionSet set = read_detections(dir / paths::kDetections);
    const auto it = set.find(image_id);
    if (it == set.end()) throw NotFoundError("unknown image '" + image_id + "'");
    return it->second;
  };

  srv.Get(R"(/api/sessions/([^/]+)/detections/([^/]+))",
          guarded([session_dir, image_dets](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = session_dir(req.matches[1]);
            if (!fs::exists(dir / paths::kDetections)) throw NotFoundError("no detections yet");
            send_json(res, nlohmann::json(image_dets(dir, req.matches[2])));
          }));

  srv.Get(R"(/api/sessions/([^/]+)/detections/([^/]+)/(-?\d+))",
          guarded([session_dir, image_dets](const httplib::Request& req, httplib::Response& res) {
            const fs::path dir = session_dir(req.matches[1]);
            if (!fs::exists(dir / paths::kDetections)) throw NotFoundError("no detections yet");
            const int det_id = std::stoi(req.matches[3]);
            for (const auto& d : image_dets(dir, req.matches[2])) {
              if (d.det_id == det_id) return send_json(res, nlohmann::json(d));
            }
            throw NotFoundError("unknown detection " + std::to_string(det_id));
          }));

  // PATCH: translate the body into edits and apply them under the lock.
  const auto patch = [this, session_dir](const httplib::Request& req, httplib::Response& res,
                                         const std::string& image_id,
                                         std::optional<int> det_id) {
    const std::string id = req.matches[1];
    const fs::path dir = session_dir(id);
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw BadRequest(std::string("invalid JSON body: ") + e.what());
    }
    if (!body.is_object()) throw BadRequest("body must be a JSON object");
    if (!det_id) {
      if (!body.contains("det_id") || !body.at("det_id").is_number_integer()) {
        throw BadRequest("body must name an integer det_id");
      }
      det_id = body.at("det_id").get<int>();
    }
    std::vector<CurationEdit> edits;
    const auto text = [&](const char* key) {
      if (!body.at(key).is_string()) throw BadRequest(std::string(key) + " must be a string");
      return body.at(key).get<std::string>();
    };
    const std::string edited_at = body.contains("edited_at") ? text("edited_at") : "";
    if (body.contains("action")) {
      CurationEdit e{image_id, *det_id, EditAction::annotate, "", edited_at};
      try {
        e.action = edit_action_from_string(text("action"));
      } catch (const ParameterError& err) {
        throw BadRequest(err.what());
      }
      if (body.contains("notes")) e.notes = text("notes");
      if (e.action == EditAction::annotate && !body.contains("notes")) {
        throw BadRequest("annotate needs notes");
      }
      edits.push_back(e);
    } else {
      if (body.contains("removed")) {
        if (!body.at("removed").is_boolean()) throw BadRequest("removed must be a boolean");
        edits.push_back({image_id, *det_id,
                         body.at("removed").get<bool>() ? EditAction::remove : EditAction::restore,
                         "", edited_at});
      }
      if (body.contains("notes")) {
        edits.push_back({image_id, *det_id, EditAction::annotate, text("notes"), edited_at});
      }
    }
    if (edits.empty()) throw BadRequest("nothing to change");
    const std::lock_guard lock(session_lock(id));
    Detection2D updated;
    for (const auto& e : edits) updated = apply_edit(dir, e);
    send_json(res, nlohmann::json(updated));
  };

  srv.Patch(R"(/api/sessions/([^/]+)/detections/([^/]+))",
            guarded([patch](const httplib::Request& req, httplib::Response& res) {
              patch(req, res, req.matches[2], std::nullopt);
            }));
  srv.Patch(R"(/api/sessions/([^/]+)/detections/([^/]+)/(-?\d+))",
            guarded([patch](const httplib::Request& req, httplib::Response& res) {
              patch(req, res, req.matches[2], std::stoi(req.matches[3]));
            }));
}

}  // namespace slm

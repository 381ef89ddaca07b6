#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace httplib {
class Server;
}

namespace slm {

/// HTTP view over a directory of sessions (one subdirectory each).
///
///   GET   /api/sessions
///   GET   /api/sessions/{id}/manifest
///   GET   /api/sessions/{id}/images/{image_id}
///   GET   /api/sessions/{id}/mesh | /texture | /lesions | /tracks
///   GET   /api/sessions/{id}/detections/{image_id}[/{det_id}]
///   PATCH /api/sessions/{id}/detections/{image_id}[/{det_id}]
///
/// PATCH bodies carry {"removed": bool} and/or {"notes": string}, or an
/// explicit {"action": "remove"|"restore"|"annotate", "notes": ...}; at the
/// image level the body also names the "det_id". Writes to one session are
/// serialized; readers always see a complete file.
class ReviewServer {
 public:
  explicit ReviewServer(std::filesystem::path root);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

  /// Lock serializing writes (and pipeline runs) for one session.
  std::mutex& session_lock(const std::string& session_id);

 private:
  void install_routes();

  std::filesystem::path root_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

}  // namespace slm

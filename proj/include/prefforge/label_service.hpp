#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "prefforge/prefstore.hpp"

namespace httplib {
class Server;
}

namespace prefforge::service {

// GET /queries/next payload: both segments as per-frame base64 PGM images.
nlohmann::json api_query(const prefstore::PreferenceStore& store, const prefstore::QueryTicket& ticket);

// HTTP/JSON labeling API over a store. Handlers may run concurrently; every
// mutation goes through the store's own lock. When `persist_dir` is set the
// store is saved there after each accepted label.
class LabelService {
 public:
  LabelService(prefstore::PreferenceStore& store, std::optional<std::filesystem::path> persist_dir = std::nullopt);
  ~LabelService();
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  // Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  // Binds to an ephemeral port and returns it (or -1); then call serve().
  int bind_any_port(const std::string& host);
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  prefstore::PreferenceStore& store_;
  std::optional<std::filesystem::path> persist_dir_;
  std::mutex persist_mutex_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace prefforge::service

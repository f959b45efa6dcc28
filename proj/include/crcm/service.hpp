#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "crcm/model.hpp"

namespace httplib {
class Server;
}

namespace crcm {

// Builds a provider from a model file's recorded identity. Hash providers are
// reconstructed exactly; remote providers reconnect to the stored endpoint.
std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderInfo& info);

// Content hash of a file on disk, reported as the model version.
std::string file_fingerprint(const std::string& path);

// The wire shape of a moderation response, shared by the service and the CLI.
nlohmann::json moderation_response_json(const Prediction& prediction,
                                        const CrcmModel& model,
                                        const std::string& model_version);

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string model_path;                              // default model
  std::map<std::string, std::string> community_models; // optional per-community routing
  std::optional<ProviderInfo> provider;                // default: from the model file
  std::string cache_path;                              // optional embedding cache log
  std::optional<double> threshold_override;
};

ServiceConfig load_service_config(const std::string& path);

// Serves POST /v1/moderate, GET /v1/health and GET /v1/model over immutable
// models loaded at construction time. Construction fails loudly on any model
// or provider problem; nothing listens until the models are ready.
class ModerationService {
 public:
  explicit ModerationService(const ServiceConfig& config);
  ~ModerationService();

  ModerationService(const ModerationService&) = delete;
  ModerationService& operator=(const ModerationService&) = delete;

  // Blocks serving on the configured host/port.
  void run();
  // Binds to a free port and serves on a background thread; returns the port.
  int start_background();
  void stop();

  const CrcmModel& default_model() const { return models_.at("").model; }
  const std::string& model_version() const { return models_.at("").version; }

 private:
  struct LoadedModel {
    CrcmModel model;
    std::string version;  // content hash of the model file
  };

  void install_routes();
  const LoadedModel& route(const std::string& community) const;

  std::string host_;
  int port_ = 0;
  std::map<std::string, LoadedModel> models_;  // "" = default
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::unique_ptr<httplib::Server> server_;
  std::thread worker_;
};

}  // namespace crcm

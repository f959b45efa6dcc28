#include "crcm/service.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "crcm/hashing.hpp"
#include "crcm/topics.hpp"

namespace crcm {

using nlohmann::json;

std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderInfo& info) {
  if (info.name == "hash") {
    return std::make_shared<HashingProvider>(info.dim, info.seed);
  }
  if (info.name == "remote") {
    if (info.endpoint.empty()) {
      throw EmbeddingError("remote provider requires an endpoint");
    }
    return std::make_shared<RemoteProvider>(info.endpoint, info.dim);
  }
  throw EmbeddingError("unknown embedding provider \"" + info.name + "\"");
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open service config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("invalid service config " + path + ": " + e.what());
  }

  ServiceConfig config;
  if (j.contains("bind")) {
    const std::string bind = j["bind"].get<std::string>();
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("service config: bind must be host:port");
    }
    config.host = bind.substr(0, colon);
    config.port = std::stoi(bind.substr(colon + 1));
  }
  if (j.contains("model")) config.model_path = j["model"].get<std::string>();
  if (j.contains("models")) {
    for (const auto& [community, path_value] : j["models"].items()) {
      config.community_models[community] = path_value.get<std::string>();
    }
  }
  if (config.model_path.empty()) {
    throw std::runtime_error("service config: missing \"model\" path");
  }
  if (j.contains("provider")) {
    ProviderInfo info;
    const auto& p = j["provider"];
    info.name = p.at("name").get<std::string>();
    info.dim = p.value("dim", 768);
    info.seed = p.value("seed", uint64_t{42});
    info.endpoint = p.value("endpoint", std::string{});
    config.provider = info;
    config.cache_path = p.value("cache", std::string{});
  }
  if (j.contains("threshold")) config.threshold_override = j["threshold"].get<double>();
  return config;
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return fingerprint_hex(buffer.str());
}

json moderation_response_json(const Prediction& pred, const CrcmModel& model,
                              const std::string& version) {
  json per_topic = json::array();
  for (int k = 0; k < model.K(); ++k) {
    const auto& topic = model.rule_matrix.topics[k];
    per_topic.push_back({{"topic_id", k},
                         {"score", pred.topic_scores[k]},
                         {"weight", pred.weights[k]},
                         {"top_words", topic.source.words}});
  }
  return {{"probability", pred.probability},
          {"decision", pred.decision},
          {"per_topic", std::move(per_topic)},
          {"model_version", version}};
}

ModerationService::ModerationService(const ServiceConfig& config)
    : host_(config.host), port_(config.port), server_(std::make_unique<httplib::Server>()) {
  auto load = [&](const std::string& key, const std::string& path) {
    LoadedModel loaded;
    loaded.model = load_model(path);
    loaded.version = file_fingerprint(path);
    if (config.threshold_override) {
      loaded.model.threshold = *config.threshold_override;
    }
    models_.emplace(key, std::move(loaded));
  };
  load("", config.model_path);
  for (const auto& [community, path] : config.community_models) {
    load(community, path);
  }

  provider_ = make_provider(config.provider ? *config.provider
                                            : models_.at("").model.provider);
  if (!config.cache_path.empty()) {
    provider_ = cached(provider_, config.cache_path);
  }
  for (const auto& [key, loaded] : models_) {
    check_dimension(loaded.model, *provider_);
  }
  install_routes();
}

ModerationService::~ModerationService() { stop(); }

const ModerationService::LoadedModel& ModerationService::route(
    const std::string& community) const {
  auto it = models_.find(community);
  return it != models_.end() ? it->second : models_.at("");
}

void ModerationService::install_routes() {
  server_->Post("/v1/moderate", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      res.status = 400;
      res.set_content(json{{"error", "request body is not valid JSON"}}.dump(),
                      "application/json");
      return;
    }
    auto bad_request = [&](const std::string& message) {
      res.status = 400;
      res.set_content(json{{"error", message}}.dump(), "application/json");
    };
    if (!body.contains("title") || !body["title"].is_string() ||
        body["title"].get<std::string>().empty()) {
      bad_request("field \"title\" must be a non-empty string");
      return;
    }
    if (body.contains("body") && !body["body"].is_string()) {
      bad_request("field \"body\" must be a string");
      return;
    }
    if (body.contains("community") && !body["community"].is_string()) {
      bad_request("field \"community\" must be a string");
      return;
    }

    Post post;
    post.title = body["title"].get<std::string>();
    post.body = body.value("body", std::string{});
    post.community = body.value("community", std::string{});

    const LoadedModel& loaded = route(post.community);
    try {
      const Prediction pred = predict(loaded.model, post, *provider_);
      res.status = 200;
      res.set_content(moderation_response_json(pred, loaded.model, loaded.version).dump(),
                      "application/json");
    } catch (const EmbeddingError& e) {
      res.status = 502;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });

  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(
        json{{"status", "ok"}, {"model_version", model_version()}}.dump(),
        "application/json");
  });

  server_->Get("/v1/model", [this](const httplib::Request&, httplib::Response& res) {
    const CrcmModel& model = default_model();
    std::vector<TopicSummary> summaries;
    for (const auto& topic : model.rule_matrix.topics) summaries.push_back(topic.source);
    const json out = {{"K", model.K()},
                      {"dim", model.dim},
                      {"aggregation", to_string(model.aggregation)},
                      {"threshold", model.threshold},
                      {"summaries", summaries_to_json(summaries)},
                      {"model_version", model_version()}};
    res.set_content(out.dump(), "application/json");
  });
}

void ModerationService::run() {
  if (!server_->listen(host_, port_)) {
    throw std::runtime_error("service: failed to listen on " + host_ + ":" +
                             std::to_string(port_));
  }
}

int ModerationService::start_background() {
  const int port = server_->bind_to_any_port("127.0.0.1");
  if (port <= 0) throw std::runtime_error("service: failed to bind a port");
  worker_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ModerationService::stop() {
  if (server_) server_->stop();
  if (worker_.joinable()) worker_.join();
}

}  // namespace crcm

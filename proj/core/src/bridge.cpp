#include "nutnet/bridge.hpp"

#include <regex>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "nutnet/error.hpp"
#include "nutnet/image_io.hpp"

namespace nutnet::bridge {

namespace {

httplib::Client make_client(const std::string& host, int port, double timeout) {
  httplib::Client cli(host, port);
  const auto sec = static_cast<time_t>(timeout);
  const auto usec = static_cast<time_t>((timeout - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  return cli;
}

std::string status_context(const httplib::Result& res, const std::string& what) {
  std::ostringstream os;
  os << what << " returned HTTP " << res->status;
  try {
    const auto j = nlohmann::json::parse(res->body);
    if (j.contains("error")) os << ": " << j["error"].dump();
  } catch (const nlohmann::json::exception&) {
  }
  return os.str();
}

}  // namespace

DetectResponse parse_detect_response(const std::string& body) {
  DetectResponse out;
  try {
    const auto j = nlohmann::json::parse(body);
    out.model = j.at("model").get<std::string>();
    out.time_ms = j.at("time_ms").get<double>();
    for (const auto& b : j.at("boxes")) {
      RemoteBox rb;
      rb.class_name = b.at("class").get<std::string>();
      rb.box.class_id = b.at("class_id").get<int>();
      rb.box.confidence = b.at("conf").get<double>();
      rb.box.x1 = b.at("x1").get<double>();
      rb.box.y1 = b.at("y1").get<double>();
      rb.box.x2 = b.at("x2").get<double>();
      rb.box.y2 = b.at("y2").get<double>();
      try {
        rb.box.validate();
      } catch (const InputError& e) {
        throw BridgeError(std::string("detector returned an invalid box: ") + e.what());
      }
      out.boxes.push_back(rb);
    }
  } catch (const nlohmann::json::exception& e) {
    throw BridgeError(std::string("malformed /detect response: ") + e.what());
  }
  return out;
}

Client::Client(const std::string& url, double timeout_seconds) : url_(url), timeout_(timeout_seconds) {
  static const std::regex re(R"(^http://([^/:]+)(?::(\d+))?/?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("detector URL must look like http://host:port, got '" + url + "'");
  host_ = m[1].str();
  if (m[2].matched) port_ = std::stoi(m[2].str());
  if (port_ < 1 || port_ > 65535) throw ConfigError("detector URL port is out of range");
  if (!(timeout_seconds > 0)) throw ConfigError("bridge timeout must be positive");
}

Health Client::health() const {
  auto cli = make_client(host_, port_, timeout_);
  const httplib::Headers headers = {{"X-Bridge-Version", kProtocolVersion}};
  auto res = cli.Get("/health", headers);
  if (!res) throw BridgeError("GET " + url_ + "/health failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw BridgeError(status_context(res, "GET /health"));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return {j.at("model").get<std::string>(), j.at("ready").get<bool>()};
  } catch (const nlohmann::json::exception& e) {
    throw BridgeError(std::string("malformed /health response: ") + e.what());
  }
}

DetectResponse Client::detect(const Image& image, double confidence_floor) const {
  const auto png = io::encode_png(image);
  auto cli = make_client(host_, port_, timeout_);
  const httplib::Headers headers = {{"X-Bridge-Version", kProtocolVersion}};
  std::ostringstream path;
  path << "/detect?conf=" << confidence_floor;
  auto res = cli.Post(path.str(), headers, reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
  if (!res) throw BridgeError("POST " + url_ + "/detect failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw BridgeError(status_context(res, "POST /detect"));
  return parse_detect_response(res->body);
}

}  // namespace nutnet::bridge

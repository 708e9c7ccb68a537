#pragma once

// Client for a remote detector service speaking a small HTTP/JSON protocol:
//   GET  /health  -> {"model": str, "ready": bool}
//   POST /detect  PNG body -> {"model", "time_ms", "boxes": [{"class",
//                 "class_id", "conf", "x1", "y1", "x2", "y2"}]}
// Every request carries X-Bridge-Version; the confidence floor travels as
// the `conf` query parameter.

#include <string>
#include <vector>

#include "nutnet/image.hpp"
#include "nutnet/patchlab.hpp"

namespace nutnet::bridge {

inline constexpr const char* kProtocolVersion = "1";

struct Health {
  std::string model;
  bool ready = false;
};

struct RemoteBox {
  std::string class_name;
  patchlab::DetectionBox box;
};

struct DetectResponse {
  std::string model;
  double time_ms = 0;
  std::vector<RemoteBox> boxes;
};

/// Parses and validates a /detect body. Throws BridgeError on missing or
/// mistyped fields.
DetectResponse parse_detect_response(const std::string& body);

class Client {
 public:
  /// `url` is "http://host:port". Throws ConfigError for anything else.
  explicit Client(const std::string& url, double timeout_seconds = 30.0);

  /// Throws BridgeError when the service is unreachable or answers badly.
  Health health() const;
  DetectResponse detect(const Image& image, double confidence_floor = 0.0) const;

  const std::string& url() const { return url_; }

 private:
  std::string url_;
  std::string host_;
  int port_ = 80;
  double timeout_;
};

}  // namespace nutnet::bridge

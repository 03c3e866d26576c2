#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "demask/service/edit_service.hpp"

namespace demask {

/// Standard (padded) base64.
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ServiceError("invalid_argument") on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

/// JSON routes over an EditService:
///   POST /session                {image}                               -> {session_id, mask_png, coeffs, prior_png, output_png}
///   POST /session/{id}/edit      {overrides: [{group, index, value}]}  -> {prior_png, output_png}
///   POST /session/{id}/sequence  {overrides_a, overrides_b, steps}     -> {frames: [png, ...]}
///   GET  /model/layout                                                 -> {groups: [{name, offset, dim, min, max}]}
///   GET  /healthz                                                      -> {status, ...versions}
/// Images travel as base64 PNG. Failures return {code, message, detail}.
class HttpApi {
 public:
  explicit HttpApi(EditService& service);

  /// Routes one request without any socket; used by the server and by tests.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

  /// Blocks serving on host:port until stop() is called from another thread.
  void serve(const std::string& host, int port);
  /// Binds to an ephemeral port and returns it; serving continues on a background thread until stop().
  int serve_background(const std::string& host = "127.0.0.1");
  void stop();
  ~HttpApi();

 private:
  struct Server;
  EditService& service_;
  std::unique_ptr<Server> server_;
};

}  // namespace demask

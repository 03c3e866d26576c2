#include "demask/service/http_api.hpp"

#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <sodium.h>

#include "demask/errors.hpp"

namespace demask {
namespace {

using nlohmann::json;

int status_for(const std::string& code) {
  if (code == "not_found") {
    return 404;
  }
  if (code == "unavailable") {
    return 503;
  }
  if (code == "internal") {
    return 500;
  }
  return 400;
}

HttpResponse error_response(const std::string& code, const std::string& message, const std::string& detail = {}) {
  return {status_for(code), json{{"code", code}, {"message", message}, {"detail", detail}}.dump()};
}

std::string png_b64(const Image& image) { return base64_encode(encode_png(image)); }

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ServiceError("invalid_argument", "request body is not valid JSON", e.what());
  }
}

template <typename T>
T field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw ServiceError("invalid_argument", std::string("missing field '") + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ServiceError("invalid_argument", std::string("field '") + name + "' has the wrong type", e.what());
  }
}

Overrides parse_overrides(const json& j, const char* name) {
  Overrides out;
  if (!j.contains(name)) {
    return out;
  }
  const json& arr = j.at(name);
  if (!arr.is_array()) {
    throw ServiceError("invalid_argument", std::string("'") + name + "' must be an array");
  }
  for (const auto& item : arr) {
    const auto group_text = field<std::string>(item, "group");
    const auto group = group_from_name(group_text);
    if (!group) {
      throw ServiceError("invalid_argument", "unknown coefficient group '" + group_text + "'");
    }
    out.push_back({*group, field<int>(item, "index"), field<double>(item, "value")});
  }
  return out;
}

Image decode_image(const std::string& b64) {
  const auto bytes = base64_decode(b64);
  try {
    return decode_png(bytes);
  } catch (const std::exception& e) {
    throw ServiceError("invalid_argument", "image is not a decodable PNG", e.what());
  }
}

json coeffs_json(const CoeffVector& c) {
  json out = json::object();
  for (CoeffGroup g : kCoeffGroups) {
    const auto v = c.group(g);
    out[std::string(group_name(g))] = std::vector<double>(v.data(), v.data() + v.size());
  }
  return out;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), "\n\r ", &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw ServiceError("invalid_argument", "malformed base64 data");
  }
  out.resize(len);
  return out;
}

HttpResponse HttpApi::handle(const std::string& method, const std::string& path, const std::string& body) const {
  static const std::regex edit_re("^/session/([A-Za-z0-9]+)/edit$");
  static const std::regex seq_re("^/session/([A-Za-z0-9]+)/sequence$");
  try {
    std::smatch m;
    if (path == "/healthz") {
      if (method != "GET") {
        return error_response("method_not_allowed", "use GET for " + path);
      }
      return {200, json(service_.health()).dump()};
    }
    if (path == "/model/layout") {
      if (method != "GET") {
        return error_response("method_not_allowed", "use GET for " + path);
      }
      json groups = json::array();
      for (const auto& e : service_.layout()) {
        groups.push_back({{"name", e.group}, {"offset", e.offset}, {"dim", e.dim}, {"min", e.min}, {"max", e.max}});
      }
      return {200, json{{"groups", groups}}.dump()};
    }
    if (method != "POST") {
      if (path == "/session" || std::regex_match(path, m, edit_re) || std::regex_match(path, m, seq_re)) {
        return error_response("method_not_allowed", "use POST for " + path);
      }
      return {404, json{{"code", "not_found"}, {"message", "no route " + path}, {"detail", ""}}.dump()};
    }
    if (path == "/session") {
      const json req = parse_body(body);
      const auto s = service_.create_session(decode_image(field<std::string>(req, "image")));
      const auto& r = s.result;
      return {200, json{{"session_id", s.session_id},
                        {"mask_png", png_b64(r.mask)},
                        {"coeffs", coeffs_json(r.coeffs)},
                        {"prior_png", png_b64(r.prior)},
                        {"output_png", png_b64(r.output)}}
                       .dump()};
    }
    if (std::regex_match(path, m, edit_re)) {
      const json req = parse_body(body);
      const auto r = service_.edit(m[1].str(), parse_overrides(req, "overrides"));
      return {200, json{{"prior_png", png_b64(r.prior)}, {"output_png", png_b64(r.output)}}.dump()};
    }
    if (std::regex_match(path, m, seq_re)) {
      const json req = parse_body(body);
      const auto frames = service_.sequence(m[1].str(), parse_overrides(req, "overrides_a"),
                                            parse_overrides(req, "overrides_b"), field<int>(req, "steps"));
      json out = json::array();
      for (const auto& f : frames) {
        out.push_back(png_b64(f.output));
      }
      return {200, json{{"frames", out}}.dump()};
    }
    return error_response("not_found", "no route " + path);
  } catch (const ServiceError& e) {
    return error_response(e.code(), e.what(), e.detail());
  } catch (const std::invalid_argument& e) {
    return error_response("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return error_response("internal", "request failed", e.what());
  }
}

struct HttpApi::Server {
  httplib::Server http;
  std::thread thread;
};

void HttpApi::serve(const std::string& host, int port) {
  if (!server_) {
    server_ = std::make_unique<Server>();
  }
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->http.Get(".*", route);
  server_->http.Post(".*", route);
  if (!server_->http.listen(host, port)) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

int HttpApi::serve_background(const std::string& host) {
  server_ = std::make_unique<Server>();
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->http.Get(".*", route);
  server_->http.Post(".*", route);
  const int port = server_->http.bind_to_any_port(host);
  if (port <= 0) {
    throw std::runtime_error("cannot bind " + host);
  }
  server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
  server_->http.wait_until_ready();
  return port;
}

void HttpApi::stop() {
  if (server_) {
    server_->http.stop();
    if (server_->thread.joinable()) {
      server_->thread.join();
    }
  }
}

HttpApi::HttpApi(EditService& service) : service_(service) {}

HttpApi::~HttpApi() { stop(); }

}  // namespace demask

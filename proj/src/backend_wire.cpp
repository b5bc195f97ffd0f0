#include "layergs/backend_wire.hpp"

#include <cstring>
#include <stdexcept>

#include <json.hpp>

// httplib spawns its own worker; keep it out of the header.
#include <httplib.h>

namespace lgs {

namespace {

using nlohmann::json;

void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  b[0] = static_cast<char>(v & 0xff);
  b[1] = static_cast<char>((v >> 8) & 0xff);
  b[2] = static_cast<char>((v >> 16) & 0xff);
  b[3] = static_cast<char>((v >> 24) & 0xff);
  out.append(b, 4);
}

std::uint32_t read_u32(const std::string& s, std::size_t off) {
  if (off + 4 > s.size()) {
    throw std::runtime_error("backend wire: truncated header length");
  }
  const auto* u = reinterpret_cast<const unsigned char*>(s.data() + off);
  return static_cast<std::uint32_t>(u[0]) |
         (static_cast<std::uint32_t>(u[1]) << 8) |
         (static_cast<std::uint32_t>(u[2]) << 16) |
         (static_cast<std::uint32_t>(u[3]) << 24);
}

void append_image_f32(std::string& out, const Image& img) {
  for (const double v : img.raw()) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
  }
}

Image read_image_f32(const std::string& s, std::size_t off, int w, int h,
                     int ch) {
  const std::size_t n = static_cast<std::size_t>(w) * h * ch;
  if (off + 4 * n > s.size()) {
    throw std::runtime_error("backend wire: truncated tensor payload");
  }
  Image img(w, h, ch);
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, s.data() + off + 4 * i, 4);
    img.raw()[i] = f;
  }
  return img;
}

json frame_header(const std::string& bytes) {
  const std::uint32_t len = read_u32(bytes, 0);
  if (4 + static_cast<std::size_t>(len) > bytes.size()) {
    throw std::runtime_error("backend wire: truncated header");
  }
  return json::parse(bytes.substr(4, len));
}

}  // namespace

std::string encode_request(const BackendRequest& req) {
  json header;
  header["kind"] = "denoise_request";
  header["prompt"] = req.prompt;
  header["t"] = req.t;
  header["seed"] = req.seed;
  header["camera_id"] = req.camera_id;
  json joints = json::array();
  for (const auto& j : req.skeleton) {
    joints.push_back({{"name", j.name},
                      {"x", j.pixel.x()},
                      {"y", j.pixel.y()},
                      {"on_screen", j.on_screen}});
  }
  header["skeleton"] = joints;
  header["tensors"] = json::array(
      {{{"name", "image"},
        {"shape", {req.image.height(), req.image.width(), req.image.channels()}}}});
  const std::string hs = header.dump();

  std::string out;
  append_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  append_image_f32(out, req.image);
  return out;
}

BackendRequest decode_request(const std::string& bytes) {
  const json header = frame_header(bytes);
  if (header.value("kind", "") != "denoise_request") {
    throw std::runtime_error("backend wire: not a denoise_request");
  }
  BackendRequest req;
  req.prompt = header.value("prompt", "");
  req.t = header.value("t", 0);
  req.seed = header.value("seed", std::uint64_t{0});
  req.camera_id = header.value("camera_id", "");
  for (const auto& j : header.value("skeleton", json::array())) {
    SkeletonJoint sj;
    sj.name = j.value("name", "");
    sj.pixel = {j.value("x", 0.0), j.value("y", 0.0)};
    sj.on_screen = j.value("on_screen", false);
    req.skeleton.push_back(sj);
  }
  const auto& tensor = header.at("tensors").at(0);
  const auto shape = tensor.at("shape");
  req.image = read_image_f32(bytes, 4 + read_u32(bytes, 0),
                             shape.at(1).get<int>(), shape.at(0).get<int>(),
                             shape.at(2).get<int>());
  return req;
}

std::string encode_response(const Image& noise) {
  json header;
  header["kind"] = "denoise_response";
  header["tensors"] = json::array(
      {{{"name", "noise"},
        {"shape", {noise.height(), noise.width(), noise.channels()}}}});
  const std::string hs = header.dump();
  std::string out;
  append_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  append_image_f32(out, noise);
  return out;
}

Image decode_response(const std::string& bytes) {
  const json header = frame_header(bytes);
  if (header.value("kind", "") != "denoise_response") {
    throw std::runtime_error("backend wire: not a denoise_response");
  }
  const auto& tensor = header.at("tensors").at(0);
  const auto shape = tensor.at("shape");
  return read_image_f32(bytes, 4 + read_u32(bytes, 0), shape.at(1).get<int>(),
                        shape.at(0).get<int>(), shape.at(2).get<int>());
}

HttpBackend::HttpBackend(std::string host, int port, std::string path)
    : host_(std::move(host)), port_(port), path_(std::move(path)) {}

Image HttpBackend::predict_noise(const Image& noised,
                                 const GuidanceContext& ctx, int t,
                                 const NoiseSchedule& /*schedule*/,
                                 std::uint64_t seed) const {
  BackendRequest req;
  req.image = noised;
  req.prompt = ctx.prompt;
  req.skeleton = ctx.skeleton;
  req.camera_id = ctx.camera_id;
  req.t = t;
  req.seed = seed;

  httplib::Client client(host_, port_);
  client.set_read_timeout(120, 0);
  const auto res = client.Post(path_, encode_request(req),
                               "application/octet-stream");
  if (!res) {
    throw std::runtime_error("http backend: no response from " + host_ + ":" +
                             std::to_string(port_));
  }
  if (res->status != 200) {
    throw std::runtime_error("http backend: status " +
                             std::to_string(res->status));
  }
  return decode_response(res->body);
}

}  // namespace lgs

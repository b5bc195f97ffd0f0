#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layergs/guidance.hpp"
#include "layergs/image.hpp"

namespace lgs {

// Wire format for remote guidance backends, so a real denoising service can
// be attached over a socket: a 4-byte little-endian header length, a JSON
// header describing the payload tensors, then the tensors as 32-bit
// little-endian floats in header order.
//
// Request header:  {"kind":"denoise_request","prompt":...,"t":...,
//                   "seed":...,"camera_id":...,
//                   "skeleton":[{"name":...,"x":...,"y":...,"on_screen":...}],
//                   "tensors":[{"name":"image","shape":[H,W,3]}]}
// Response header: {"kind":"denoise_response",
//                   "tensors":[{"name":"noise","shape":[H,W,3]}]}

struct BackendRequest {
  Image image;  // noised color, H x W x 3
  std::string prompt;
  std::vector<SkeletonJoint> skeleton;
  std::string camera_id;
  int t = 0;
  std::uint64_t seed = 0;
};

std::string encode_request(const BackendRequest& req);
BackendRequest decode_request(const std::string& bytes);

std::string encode_response(const Image& noise);
Image decode_response(const std::string& bytes);

/// Guidance backend that POSTs requests to an HTTP endpoint speaking the
/// wire format above. Not exercised by the default pipeline; the mock
/// backend covers desk-scale runs.
class HttpBackend : public GuidanceBackend {
 public:
  HttpBackend(std::string host, int port, std::string path = "/denoise");

  Image predict_noise(const Image& noised, const GuidanceContext& ctx, int t,
                      const NoiseSchedule& schedule,
                      std::uint64_t seed) const override;

 private:
  std::string host_;
  int port_;
  std::string path_;
};

}  // namespace lgs

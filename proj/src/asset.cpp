#include "layergs/asset.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "layergs/errors.hpp"

namespace lgs {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'A', 'V'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <typename T>
T get(const std::string& s, std::size_t& off) {
  if (off + sizeof(T) > s.size()) {
    throw AssetError("asset: truncated file");
  }
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string get_str(const std::string& s, std::size_t& off) {
  const auto len = get<std::uint32_t>(s, off);
  if (off + len > s.size()) throw AssetError("asset: truncated string");
  std::string v = s.substr(off, len);
  off += len;
  return v;
}

std::string encode_layer(const GaussianLayer& layer) {
  std::string sec;
  put<std::int32_t>(sec, layer.layer_index);
  put<std::uint32_t>(sec, static_cast<std::uint32_t>(layer.prompt.size()));
  sec += layer.prompt;
  const std::uint8_t frozen[5] = {
      layer.frozen.center, layer.frozen.scale, layer.frozen.rotation,
      layer.frozen.color, layer.frozen.opacity};
  sec.append(reinterpret_cast<const char*>(frozen), 5);
  put<std::uint64_t>(sec, layer.points.size());
  auto put_f32 = [&sec](double v) { put<float>(sec, static_cast<float>(v)); };
  for (const auto& p : layer.points) {
    for (int k = 0; k < 3; ++k) put_f32(p.center[k]);
  }
  for (const auto& p : layer.points) {
    for (int k = 0; k < 3; ++k) put_f32(p.log_scale[k]);
  }
  for (const auto& p : layer.points) {
    for (int k = 0; k < 4; ++k) put_f32(p.rotation[k]);
  }
  for (const auto& p : layer.points) {
    for (int k = 0; k < 3; ++k) put_f32(p.color_logit[k]);
  }
  for (const auto& p : layer.points) put_f32(p.opacity_logit);

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(sec.data()), sec.size()));
  put<std::uint32_t>(sec, crc);
  return sec;
}

GaussianLayer decode_layer(const std::string& sec) {
  if (sec.size() < 4) throw AssetError("asset: layer section too small");
  const auto stored_crc_off = sec.size() - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, sec.data() + stored_crc_off, 4);
  const auto actual = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(sec.data()), stored_crc_off));
  if (stored != actual) {
    throw AssetError("asset: layer checksum mismatch");
  }

  std::size_t off = 0;
  GaussianLayer layer;
  layer.layer_index = get<std::int32_t>(sec, off);
  layer.prompt = get_str(sec, off);
  if (off + 5 > sec.size()) throw AssetError("asset: truncated flags");
  layer.frozen.center = sec[off + 0] != 0;
  layer.frozen.scale = sec[off + 1] != 0;
  layer.frozen.rotation = sec[off + 2] != 0;
  layer.frozen.color = sec[off + 3] != 0;
  layer.frozen.opacity = sec[off + 4] != 0;
  off += 5;
  const auto count = get<std::uint64_t>(sec, off);
  const std::size_t expected =
      off + count * (3 + 3 + 4 + 3 + 1) * 4 + 4;
  if (expected != sec.size()) {
    throw AssetError("asset: layer arrays are length-inconsistent");
  }
  layer.points.resize(count);
  auto get_f32 = [&sec, &off]() {
    float f;
    std::memcpy(&f, sec.data() + off, 4);
    off += 4;
    return static_cast<double>(f);
  };
  for (auto& p : layer.points) {
    for (int k = 0; k < 3; ++k) p.center[k] = get_f32();
  }
  for (auto& p : layer.points) {
    for (int k = 0; k < 3; ++k) p.log_scale[k] = get_f32();
  }
  for (auto& p : layer.points) {
    for (int k = 0; k < 4; ++k) p.rotation[k] = get_f32();
  }
  for (auto& p : layer.points) {
    for (int k = 0; k < 3; ++k) p.color_logit[k] = get_f32();
  }
  for (auto& p : layer.points) p.opacity_logit = get_f32();
  return layer;
}

}  // namespace

void save_asset(const std::string& path, const LayeredAvatar& avatar) {
  std::string head;
  head.append(kMagic, 4);
  put<std::uint32_t>(head, kVersion);
  put<std::uint32_t>(head, static_cast<std::uint32_t>(avatar.layers.size()));
  put<std::uint32_t>(head, static_cast<std::uint32_t>(avatar.body_prompt.size()));
  head += avatar.body_prompt;

  std::vector<std::string> sections;
  sections.reserve(avatar.layers.size());
  for (const auto& layer : avatar.layers) sections.push_back(encode_layer(layer));

  std::uint64_t offset = head.size() + sections.size() * 16;
  std::string toc;
  for (const auto& sec : sections) {
    put<std::uint64_t>(toc, offset);
    put<std::uint64_t>(toc, sec.size());
    offset += sec.size();
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw AssetError("asset: cannot open for write: " + path);
  f << head << toc;
  for (const auto& sec : sections) f << sec;
  if (!f) throw AssetError("asset: write failed: " + path);
}

LayeredAvatar load_asset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw AssetError("asset: cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();

  std::size_t off = 0;
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw AssetError("asset: bad magic in " + path);
  }
  off = 4;
  const auto version = get<std::uint32_t>(data, off);
  if (version != kVersion) {
    throw AssetError("asset: unsupported version " + std::to_string(version));
  }
  const auto layer_count = get<std::uint32_t>(data, off);
  LayeredAvatar avatar;
  avatar.body_prompt = get_str(data, off);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> toc;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const auto o = get<std::uint64_t>(data, off);
    const auto s = get<std::uint64_t>(data, off);
    if (o + s > data.size()) throw AssetError("asset: TOC out of bounds");
    toc.emplace_back(o, s);
  }
  for (const auto& [o, s] : toc) {
    avatar.layers.push_back(decode_layer(data.substr(o, s)));
  }
  for (std::size_t i = 1; i < avatar.layers.size(); ++i) {
    if (avatar.layers[i].layer_index <= avatar.layers[i - 1].layer_index) {
      throw AssetError("asset: layer indices not strictly ascending");
    }
  }
  return avatar;
}

std::string asset_toc(const std::string& path) {
  const LayeredAvatar avatar = load_asset(path);
  std::ostringstream out;
  out << "asset: " << path << "\n"
      << "body prompt: \"" << avatar.body_prompt << "\"\n"
      << "layers: " << avatar.layers.size() << "\n";
  for (const auto& layer : avatar.layers) {
    out << "  layer " << layer.layer_index << ": " << layer.points.size()
        << " points, prompt \"" << layer.prompt << "\""
        << ", frozen{center=" << layer.frozen.center
        << ", scale=" << layer.frozen.scale
        << ", rotation=" << layer.frozen.rotation
        << ", color=" << layer.frozen.color
        << ", opacity=" << layer.frozen.opacity << "}\n";
  }
  return out.str();
}

}  // namespace lgs

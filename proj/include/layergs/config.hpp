#pragma once

#include <string>
#include <vector>

#include "layergs/body.hpp"
#include "layergs/guidance.hpp"
#include "layergs/pipeline.hpp"

namespace lgs {

struct GuidanceSelect {
  enum class Mode { mock, external };
  Mode mode = Mode::mock;
  std::string reference_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/denoise";
};

struct CheckpointSpec {
  int every = 0;  // iterations between checkpoints; 0 disables
  int views = 8;  // turntable strip views
};

/// Materialized run configuration. Layers are declared explicitly; stage
/// seeds left at 0 are derived from the run seed per layer and stage.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  RigSpec rig;
  RenderOptions render_options;
  std::string body_prompt = "person";
  ProxyShape shape;
  std::vector<LayerSpec> layers;
  GuidanceSelect guidance;
  TransferConfig transfer;
  CheckpointSpec checkpoint;
};

/// Parses the JSON run config; unknown keys are ignored, structural
/// problems raise ConfigError with the offending key or path.
RunConfig parse_run_config(const std::string& json_text,
                           const std::string& source_name = "<inline>");
RunConfig load_run_config(const std::string& path);

/// Loads the mock-backend reference rig: <dir>/cameras.json plus the PFM
/// color targets it references. Missing files raise ConfigError naming the
/// path.
std::vector<ReferenceView> load_reference_views(const std::string& dir);

/// Writes cameras.json + PFM targets for a reference rig (used by tooling
/// and tests to set up mock runs).
void save_reference_views(const std::string& dir,
                          const std::vector<ReferenceView>& views);

/// Fills derived stage seeds (any stage seed left at 0).
void derive_seeds(RunConfig& config);

}  // namespace lgs

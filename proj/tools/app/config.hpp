#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ctrlsimp/decoder.hpp"
#include "ctrlsimp/model.hpp"
#include "ctrlsimp/training.hpp"

namespace ctrlsimp::app {

// Profile file: INI-style "key = value" lines under [model], [train] and
// [decode]; "#" and ";" start comments. "preset = desk|paper" in [model]
// selects the base model configuration before other keys apply.
struct RunConfig {
  model::ModelConfig model = model::ModelConfig::desk();
  model::TrainSettings train;
  decoder::DecodeSettings decode;

  static RunConfig parse(std::string_view text, const std::string& name = "config");
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace ctrlsimp::app

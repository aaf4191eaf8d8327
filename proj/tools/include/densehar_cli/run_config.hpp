#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "densehar/model.hpp"
#include "densehar/train.hpp"

namespace densehar::cli {

// Everything a run reads from `key = value` config files. Defaults follow
// the reference training setup.
struct RunConfig {
  ArchConfig arch;  // input_rows and class_count come from the data
  InitScheme init = InitScheme::kHeNormal;
  TrainConfig train;

  std::size_t infer_subseq_len = 100;
  double infer_overlap = 0.5;
  std::size_t window = 24;
  std::size_t window_stride = 1;

  std::string schema_path;
  std::vector<std::string> train_paths;
  std::string validation_path;

  std::uint64_t seed() const noexcept { return train.seed; }
  std::size_t threads() const noexcept { return train.threads; }
};

// Unknown keys and unparsable values raise kConfig.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value,
                   std::string_view where);
RunConfig load_run_config(const std::filesystem::path& path);
void load_run_config(RunConfig& cfg, const std::filesystem::path& path);

// Every key with its resolved value; parses back to the same RunConfig.
std::string format_run_config(const RunConfig& cfg);
std::vector<std::string> run_config_keys();

}  // namespace densehar::cli

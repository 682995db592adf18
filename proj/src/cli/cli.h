#pragma once

#include <map>
#include <string>
#include <vector>

#include "model/config.h"
#include "train/trainer.h"

namespace quartet {

/// Model plus training hyperparameters, settable from a key=value config
/// file with command-line overrides.
struct FullConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Parses "key = value" lines; '#' starts a comment, blank lines ignored.
std::vector<std::pair<std::string, std::string>> parseKeyValueText(const std::string& text);

/// Applies one setting; unknown keys raise UsageError listing every valid key.
void applyConfigKey(FullConfig& config, const std::string& key, const std::string& value);

FullConfig loadFullConfig(const std::string& config_path,
                          const std::vector<std::string>& overrides);

/// Entry point behind main(); returns the process exit code
/// (0 ok, 1 usage, 2 data, 3 numeric).
int runCli(const std::vector<std::string>& args);

}  // namespace quartet

#pragma once

#include <CLI11.hpp>

#include <istream>
#include <string>
#include <vector>

namespace esh::cli {

/// CLI11 config reader for JSON experiment manifests. Each top-level object
/// holds the options of the subcommand it is named after:
///
///   {"train": {"bits": 32, "algo": "esh1"}, "eval": {"radius": 2}}
///
/// Scalar top-level keys address root options. Values given on the command
/// line take precedence over the file.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

}  // namespace esh::cli

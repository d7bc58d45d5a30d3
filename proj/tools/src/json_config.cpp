#include "json_config.hpp"

#include <json.hpp>

namespace esh::cli {
namespace {

using nlohmann::json;

std::string scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

void add_item(std::vector<CLI::ConfigItem>& items, std::vector<std::string> parents,
              const std::string& name, const json& value) {
  if (value.is_null()) return;
  CLI::ConfigItem item;
  item.parents = std::move(parents);
  item.name = name;
  if (value.is_array()) {
    for (const auto& v : value) item.inputs.push_back(scalar(v));
  } else {
    item.inputs.push_back(scalar(value));
  }
  items.push_back(std::move(item));
}

void dump_app(const CLI::App* app, bool default_also, json& out) {
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "config") continue;
    const std::string name = opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& results = opt->results();
      out[name] = results.size() == 1 ? json(results.front()) : json(results);
    } else if (default_also && !opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    }
  }
  for (const CLI::App* sub : app->get_subcommands({})) {
    json section = json::object();
    dump_app(sub, default_also, section);
    if (!section.empty()) out[sub->get_name()] = section;
  }
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also,
                                  bool /*write_description*/, std::string /*prefix*/) const {
  json out = json::object();
  dump_app(app, default_also, out);
  return out.dump(2) + "\n";
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  json root;
  try {
    root = json::parse(input);
  } catch (const json::parse_error& e) {
    throw CLI::ConversionError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!root.is_object()) throw CLI::ConversionError("config must be a JSON object");

  std::vector<CLI::ConfigItem> items;
  for (const auto& [key, value] : root.items()) {
    if (value.is_object()) {
      for (const auto& [name, v] : value.items()) add_item(items, {key}, name, v);
    } else {
      add_item(items, {}, key, value);
    }
  }
  return items;
}

}  // namespace esh::cli

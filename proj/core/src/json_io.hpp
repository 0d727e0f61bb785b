#pragma once

// JSON encodings shared by the persistence code. Private to the library.

#include <json.hpp>

#include "gfoes/models.hpp"

namespace gfoes {

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const ModelSpec& s) {
  return ordered_json{{"input_dim", s.input_dim},
                      {"hidden", s.hidden},
                      {"num_classes", s.num_classes},
                      {"z_dim", s.z_dim},
                      {"generator_hidden", s.generator_hidden},
                      {"data_lower", s.data_lower},
                      {"data_upper", s.data_upper},
                      {"init", s.init},
                      {"seed", s.seed}};
}

inline ModelSpec model_spec_from_json(const ordered_json& j) {
  ModelSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.z_dim = j.at("z_dim").get<std::size_t>();
  s.generator_hidden = j.at("generator_hidden").get<std::vector<std::size_t>>();
  s.data_lower = j.at("data_lower").get<std::vector<double>>();
  s.data_upper = j.at("data_upper").get<std::vector<double>>();
  s.init = j.at("init").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace gfoes

// Internal JSON converters shared by the persistence code. Not installed.
#ifndef FES_JSON_DETAIL_HPP
#define FES_JSON_DETAIL_HPP

#include "fes/imputation.hpp"
#include "fes/neuralreg.hpp"

#include <nlohmann/json.hpp>

namespace fes::detail {

inline nlohmann::json mf_to_json(const MfParams& p) {
  return nlohmann::json{{"rank", p.rank},
                        {"reg", p.reg},
                        {"lr", p.lr},
                        {"epochs", p.epochs},
                        {"seed", p.seed}};
}

inline MfParams mf_from_json(const nlohmann::json& j) {
  MfParams p;
  p.rank = j.at("rank").get<Index>();
  p.reg = j.at("reg").get<double>();
  p.lr = j.at("lr").get<double>();
  p.epochs = j.at("epochs").get<Index>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline nlohmann::json spec_to_json(const MlpSpec& s) {
  return nlohmann::json{{"layers", s.layer_sizes},
                        {"lr", s.lr},
                        {"momentum", s.momentum},
                        {"batch", s.batch},
                        {"max_epochs", s.max_epochs},
                        {"min_gradient", s.min_gradient},
                        {"seed", s.seed}};
}

inline MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.layer_sizes = j.at("layers").get<std::vector<Index>>();
  s.lr = j.at("lr").get<double>();
  s.momentum = j.at("momentum").get<double>();
  s.batch = j.at("batch").get<Index>();
  s.max_epochs = j.at("max_epochs").get<Index>();
  s.min_gradient = j.at("min_gradient").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace fes::detail

#endif  // FES_JSON_DETAIL_HPP

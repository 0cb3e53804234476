#pragma once

#include <json.hpp>
#include <string>

#include "kdarek/bounds.hpp"
#include "kdarek/darek.hpp"
#include "kdarek/gp.hpp"
#include "kdarek/netcore.hpp"

namespace kdarek::ser {

inline constexpr const char* kSchema = "kdarek/v1";

nlohmann::json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const net::KdarekModel& model);
net::KdarekModel kdarek_from_json(const nlohmann::json& j);

nlohmann::json to_json(const bounds::BoundEvaluator& ev);
bounds::BoundEvaluator evaluator_from_json(const nlohmann::json& j);

nlohmann::json to_json(const base::DarekModel& model);
base::DarekModel darek_from_json(const nlohmann::json& j);

nlohmann::json to_json(const base::GpModel& model);
base::GpModel gp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const base::EnsembleModel& model);
base::EnsembleModel ensemble_from_json(const nlohmann::json& j);

// Envelope: {"schema": "kdarek/v1", "kind": <kind>, "payload": ...}
void save_model_file(const std::string& path, const std::string& kind,
                     const nlohmann::json& payload);
nlohmann::json load_model_file(const std::string& path, std::string* kind);

}  // namespace kdarek::ser

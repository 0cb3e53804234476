#include "kdarek/serialize.hpp"

#include <fstream>

#include "kdarek/errors.hpp"

namespace kdarek::ser {

using nlohmann::json;

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(),
                    j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(i, c) = data.at(i).at(c).get<double>();
    }
  }
  return m;
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

json kan_layer_to_json(const net::KanLayer& layer) {
  json grids = json::array();
  for (int i = 0; i < layer.in_dim(); ++i) {
    grids.push_back(layer.basis(i).grid());
  }
  json coeffs = json::array();
  for (int r = 0; r < layer.out_dim(); ++r) {
    json row = json::array();
    for (int i = 0; i < layer.in_dim(); ++i) {
      row.push_back(vector_to_json(layer.coeffs(r, i)));
    }
    coeffs.push_back(std::move(row));
  }
  return json{{"degree", layer.degree()},
              {"in_dim", layer.in_dim()},
              {"out_dim", layer.out_dim()},
              {"grids", grids},
              {"coeffs", coeffs}};
}

net::KanLayer kan_layer_from_json(const json& j) {
  net::KanLayer layer(j.at("degree").get<int>(), j.at("in_dim").get<int>(),
                      j.at("out_dim").get<int>());
  for (int i = 0; i < layer.in_dim(); ++i) {
    layer.set_grid(i, j.at("grids").at(i).get<std::vector<double>>());
  }
  for (int r = 0; r < layer.out_dim(); ++r) {
    for (int i = 0; i < layer.in_dim(); ++i) {
      layer.coeffs(r, i) = vector_from_json(j.at("coeffs").at(r).at(i));
    }
  }
  return layer;
}

json mlp_to_json(const net::SnrMlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers()) {
    layers.push_back(json{{"weight", to_json(l.weight)},
                          {"bias", vector_to_json(l.bias)},
                          {"cap", l.cap}});
  }
  return json{{"layers", layers}};
}

void mlp_from_json(const json& j, net::SnrMlp& mlp) {
  auto& layers = mlp.layers();
  layers.clear();
  for (const auto& lj : j.at("layers")) {
    net::DenseLayer layer;
    layer.weight = matrix_from_json(lj.at("weight"));
    layer.bias = vector_from_json(lj.at("bias"));
    layer.cap = lj.at("cap").get<double>();
    layers.push_back(std::move(layer));
  }
}

}  // namespace

json to_json(const net::KdarekModel& model) {
  json mlps = json::array();
  for (int p = 0; p < model.input_dim(); ++p) {
    mlps.push_back(mlp_to_json(model.mlp(p)));
  }
  return json{{"mlps", mlps}, {"spline", kan_layer_to_json(model.spline())}};
}

net::KdarekModel kdarek_from_json(const json& j) {
  const auto& spline = j.at("spline");
  net::ModelShape shape;
  shape.input_dim = static_cast<int>(j.at("mlps").size());
  shape.feature_dim = spline.at("in_dim").get<int>();
  shape.output_dim = spline.at("out_dim").get<int>();
  shape.spline_order = spline.at("degree").get<int>();
  const auto& layers0 = j.at("mlps").at(0).at("layers");
  for (std::size_t l = 0; l + 1 < layers0.size(); ++l) {
    shape.mlp_hidden.push_back(
        layers0.at(l).at("weight").at("rows").get<int>());
  }
  Rng rng(0);
  net::KdarekModel model(shape, rng);
  for (int p = 0; p < model.input_dim(); ++p) {
    mlp_from_json(j.at("mlps").at(p), model.mlp(p));
  }
  model.spline() = kan_layer_from_json(spline);
  return model;
}

json to_json(const bounds::BoundEvaluator& ev) {
  return json{{"model", to_json(ev.model)},
              {"inputs", to_json(ev.triple.inputs)},
              {"targets", to_json(ev.triple.targets)},
              {"budget",
               json{{"total_first_order", ev.budget.total_first_order},
                    {"high_order_value", ev.budget.high_order.value},
                    {"high_order", ev.budget.high_order.order},
                    {"input_dim", ev.budget.input_dim},
                    {"layer_count", ev.budget.layer_count},
                    {"splines_per_group", ev.budget.splines_per_group}}}};
}

bounds::BoundEvaluator evaluator_from_json(const json& j) {
  net::KdarekModel model = kdarek_from_json(j.at("model"));
  bounds::KnotTriple triple;
  triple.inputs = matrix_from_json(j.at("inputs"));
  triple.targets = matrix_from_json(j.at("targets"));
  triple.input_columns.clear();
  for (int p = 0; p < triple.inputs.cols(); ++p) {
    triple.input_columns.push_back(
        net::sorted_feature_grid(triple.inputs.col(p)));
  }
  const auto& bj = j.at("budget");
  const bounds::LipschitzBudget budget = bounds::make_budget(
      bj.at("total_first_order").get<double>(), bj.at("input_dim").get<int>(),
      bj.at("layer_count").get<int>(), bj.at("splines_per_group").get<int>(),
      {bj.at("high_order").get<int>(), bj.at("high_order_value").get<double>()});
  // Features, sorted columns, and residuals are recomputed from the model;
  // the derivation is deterministic so a save/load round trip is exact.
  return bounds::make_evaluator(std::move(model), std::move(triple), budget);
}

json to_json(const base::DarekModel& model) {
  return json{{"layer1", kan_layer_to_json(model.layer1())},
              {"layer2", kan_layer_to_json(model.layer2())}};
}

base::DarekModel darek_from_json(const json& j) {
  base::DarekShape shape;
  shape.input_dim = j.at("layer1").at("in_dim").get<int>();
  shape.hidden_dim = j.at("layer1").at("out_dim").get<int>();
  shape.output_dim = j.at("layer2").at("out_dim").get<int>();
  shape.spline_order = j.at("layer1").at("degree").get<int>();
  Rng rng(0);
  base::DarekModel model(shape, rng);
  model.layer1() = kan_layer_from_json(j.at("layer1"));
  model.layer2() = kan_layer_from_json(j.at("layer2"));
  return model;
}

json to_json(const base::GpModel& model) {
  return json{{"x", to_json(model.train_x())},
              {"y", vector_to_json(model.train_y())},
              {"lengthscale", model.hyper().lengthscale},
              {"signal_var", model.hyper().signal_var},
              {"noise_var", model.hyper().noise_var}};
}

base::GpModel gp_from_json(const json& j) {
  base::GpHyper hyper{j.at("lengthscale").get<double>(),
                      j.at("signal_var").get<double>(),
                      j.at("noise_var").get<double>()};
  return base::GpModel::fit(matrix_from_json(j.at("x")),
                            vector_from_json(j.at("y")), hyper);
}

json to_json(const base::EnsembleModel& model) {
  json members = json::array();
  for (const auto& m : model.members) members.push_back(to_json(m));
  return json{{"members", members}};
}

base::EnsembleModel ensemble_from_json(const json& j) {
  base::EnsembleModel model;
  for (const auto& mj : j.at("members")) {
    model.members.push_back(darek_from_json(mj));
  }
  return model;
}

void save_model_file(const std::string& path, const std::string& kind,
                     const json& payload) {
  json doc{{"schema", kSchema}, {"kind", kind}, {"payload", payload}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

json load_model_file(const std::string& path, std::string* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw IoError("corrupt model file " + path + ": " + e.what());
  }
  if (doc.value("schema", "") != kSchema) {
    throw IoError("unsupported schema in " + path);
  }
  if (kind) *kind = doc.value("kind", "");
  return doc.at("payload");
}

}  // namespace kdarek::ser

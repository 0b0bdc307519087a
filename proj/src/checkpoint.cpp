#include "fairpar/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fairpar {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kVersion = "fairpar-ckpt-1";

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& data = j.at("data");
  if (data.size() != m.a.size())
    throw std::runtime_error("checkpoint: matrix data length does not match shape");
  m.a = data.get<Vec>();
  return m;
}

json load_checked(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  json j = json::parse(in, nullptr, true);
  if (j.value("version", "") != kVersion)
    throw std::runtime_error("checkpoint '" + path + "': unsupported version '" +
                             j.value("version", "<missing>") + "'");
  if (j.value("kind", "") != kind)
    throw std::runtime_error("checkpoint '" + path + "': expected kind '" + kind + "'");
  return j;
}

void write_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace

void save_adapter(const AdapterParams& g, const std::string& path) {
  g.validate();
  json j;
  j["version"] = kVersion;
  j["kind"] = "adapter";
  j["p"] = g.in_dim();
  j["q"] = g.hidden_dim();
  j["w_down"] = matrix_to_json(g.w_down);
  j["b_down"] = g.b_down;
  j["w_up"] = matrix_to_json(g.w_up);
  j["b_up"] = g.b_up;
  write_file(j, path);
}

AdapterParams load_adapter(const std::string& path) {
  json j = load_checked(path, "adapter");
  AdapterParams g;
  g.w_down = matrix_from_json(j.at("w_down"));
  g.b_down = j.at("b_down").get<Vec>();
  g.w_up = matrix_from_json(j.at("w_up"));
  g.b_up = j.at("b_up").get<Vec>();
  g.validate();
  if (g.in_dim() != j.at("p").get<int>() || g.hidden_dim() != j.at("q").get<int>())
    throw std::runtime_error("checkpoint '" + path + "': shape metadata mismatch");
  return g;
}

void save_classifier(const ClassifierParams& d, const std::string& path) {
  d.validate();
  json j;
  j["version"] = kVersion;
  j["kind"] = "classifier";
  j["num_layers"] = d.num_layers();
  j["out_dim"] = d.out_dim();
  json layers = json::array();
  for (int l = 0; l < d.num_layers(); ++l)
    layers.push_back(json{{"w", matrix_to_json(d.w[l])}, {"b", d.b[l]}});
  j["layers"] = layers;
  write_file(j, path);
}

ClassifierParams load_classifier(const std::string& path) {
  json j = load_checked(path, "classifier");
  ClassifierParams d;
  for (const auto& layer : j.at("layers")) {
    d.w.push_back(matrix_from_json(layer.at("w")));
    d.b.push_back(layer.at("b").get<Vec>());
  }
  d.validate();
  if (d.num_layers() != j.at("num_layers").get<int>() ||
      d.out_dim() != j.at("out_dim").get<int>())
    throw std::runtime_error("checkpoint '" + path + "': shape metadata mismatch");
  return d;
}

}  // namespace fairpar

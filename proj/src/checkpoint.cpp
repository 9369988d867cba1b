#include "mature/checkpoint.hpp"

#include <fstream>

namespace mature {

namespace {

constexpr const char* kFormat = "mature-checkpoint";
constexpr int kVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<Index>(values.size()) != rows * cols) {
    throw DataError("checkpoint: matrix holds " + std::to_string(values.size()) + " values, expected " +
                    std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = values[k++];
  }
  return m;
}

}  // namespace

std::string spec_hash(const ModelSpec& spec) { return json_hash(nlohmann::json(spec)); }

nlohmann::json checkpoint_to_json(const TrainedModel& model) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["spec"] = model.spec;
  j["spec_hash"] = spec_hash(model.spec);
  j["seed"] = model.seed;
  j["data_fingerprint"] = model.data_fingerprint;
  j["data_config"] = model.data_config;
  j["stations"] = {{"intensive", model.stations_intensive}, {"sparse", model.stations_sparse}};
  j["normalization"] = {{"intensive", model.norm_intensive}, {"sparse", model.norm_sparse}};
  nlohmann::json params = nlohmann::json::array();
  if (model.network) {
    for (const Parameter& p : model.network->parameters()) {
      nlohmann::json entry = matrix_to_json(p.value);
      entry["name"] = p.name;
      params.push_back(std::move(entry));
    }
  }
  j["parameters"] = std::move(params);
  j["ha"] = model.ha ? matrix_to_json(model.ha->means()) : nlohmann::json(nullptr);
  if (model.linear) {
    j["linear"] = matrix_to_json(model.linear->coefficients());
    j["linear"]["used_ridge"] = model.linear->used_ridge();
  } else {
    j["linear"] = nullptr;
  }
  return j;
}

TrainedModel checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormat) throw DataError("not a checkpoint file");
  if (j.value("version", 0) != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  TrainedModel model;
  model.spec = j.at("spec").get<ModelSpec>();
  const std::string stored = j.at("spec_hash").get<std::string>();
  const std::string actual = spec_hash(model.spec);
  if (stored != actual) throw SpecError("checkpoint spec hash " + stored + " does not match its spec (" + actual + ")");
  model.seed = j.at("seed").get<std::uint64_t>();
  model.data_fingerprint = j.at("data_fingerprint").get<std::string>();
  model.data_config = j.at("data_config").get<DataConfig>();
  model.stations_intensive = j.at("stations").at("intensive").get<std::vector<std::string>>();
  model.stations_sparse = j.at("stations").at("sparse").get<std::vector<std::string>>();
  model.norm_intensive = j.at("normalization").at("intensive").get<NormalizationState>();
  model.norm_sparse = j.at("normalization").at("sparse").get<NormalizationState>();

  if (!j.at("ha").is_null()) model.ha = HistoricalAverage::from_means(matrix_from_json(j.at("ha")));
  if (!j.at("linear").is_null()) {
    model.linear = LinearBaseline::from_coefficients(matrix_from_json(j.at("linear")),
                                                     j.at("linear").value("used_ridge", false));
  }
  if (is_trainable(model.spec.kind)) {
    const StationCounts available{static_cast<Index>(model.stations_intensive.size()),
                                  static_cast<Index>(model.stations_sparse.size())};
    Forecaster net = Forecaster::build(model.spec, model_counts(model.spec, available), model.seed);
    const auto& stored_params = j.at("parameters");
    if (stored_params.size() != net.parameters().size()) {
      throw SpecError("checkpoint holds " + std::to_string(stored_params.size()) + " parameters, spec " + actual +
                      " expects " + std::to_string(net.parameters().size()));
    }
    for (const auto& entry : stored_params) {
      const auto name = entry.at("name").get<std::string>();
      if (!net.parameters().contains(name)) throw SpecError("checkpoint parameter " + name + " is not in spec " + actual);
      Parameter& p = net.parameters().at(name);
      Matrix value = matrix_from_json(entry);
      if (value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
        throw SpecError("checkpoint parameter " + name + " is " + shape_string(value) + ", spec expects " +
                        shape_string(p.value));
      }
      p.value = std::move(value);
    }
    model.network.emplace(std::move(net));
  }
  return model;
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << checkpoint_to_json(model).dump(1) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace mature

#include "ctxlstm/checkpoint.hpp"

#include <fstream>

#include "ctxlstm/errors.hpp"

namespace ctxlstm {

namespace {
constexpr const char* kFormat = "ctxlstm-checkpoint";
}

nlohmann::json hyper_to_json(const HyperParams& hp) {
  return {{"embed_dim", hp.embed_dim},
          {"hidden_dim", hp.hidden_dim},
          {"grid",
           {{"neighborhood_side", hp.grid.neighborhood_side},
            {"cells_per_side", hp.grid.cells_per_side}}},
          {"static_points", hp.static_points}};
}

HyperParams hyper_from_json(const nlohmann::json& doc) {
  HyperParams hp;
  hp.embed_dim = doc.at("embed_dim").get<std::size_t>();
  hp.hidden_dim = doc.at("hidden_dim").get<std::size_t>();
  hp.grid.neighborhood_side = doc.at("grid").at("neighborhood_side").get<double>();
  hp.grid.cells_per_side = doc.at("grid").at("cells_per_side").get<int>();
  hp.static_points = doc.at("static_points").get<std::size_t>();
  return hp;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json matrices = nlohmann::json::array();
  ckpt.params.weights.for_each([&](std::string_view name, const Matrix& m) {
    matrices.push_back({{"name", name},
                        {"rows", m.rows()},
                        {"cols", m.cols()},
                        {"values", std::vector<double>(m.values().begin(), m.values().end())}});
  });
  return {{"format", kFormat},
          {"version", kCheckpointVersion},
          {"variant", ckpt.params.variant.name()},
          {"hyper", hyper_to_json(ckpt.params.hyper)},
          {"seed", ckpt.seed},
          {"matrices", matrices}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw FormatError("checkpoint: unexpected format tag '" + doc.at("format").get<std::string>() + "'");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.params.variant = ModelVariant::parse(doc.at("variant").get<std::string>());
    ckpt.params.hyper = hyper_from_json(doc.at("hyper"));
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& m : doc.at("matrices")) {
      const auto name = m.at("name").get<std::string>();
      Matrix* dst = find_matrix(ckpt.params.weights, name);
      if (dst == nullptr) throw FormatError("checkpoint: unknown matrix '" + name + "'");
      *dst = Matrix(m.at("rows").get<std::size_t>(), m.at("cols").get<std::size_t>(),
                    m.at("values").get<std::vector<double>>());
    }
    ckpt.params.validate();
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace ctxlstm

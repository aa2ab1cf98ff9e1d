#include "secla/io.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"
#include "secla/errors.hpp"

namespace secla {

namespace {

Json mlp_to_json(const Mlp& mlp) {
  Json layers = Json::array();
  for (const auto& layer : mlp.layers) {
    Json w = Json::array();
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const auto row = layer.weight.row(r);
      w.push_back(detail::vector_to_json(Vector(row.begin(), row.end())));
    }
    Json l;
    l["in"] = layer.in_dim();
    l["out"] = layer.out_dim();
    l["weight"] = std::move(w);
    l["bias"] = detail::vector_to_json(layer.bias);
    layers.push_back(std::move(l));
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected a layer list");
  Mlp mlp;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + " layer " + std::to_string(i);
    const auto& l = j[i];
    if (!l.is_object() || !l.contains("weight") || !l.contains("bias")) {
      throw ValidationError(at + ": needs 'weight' and 'bias'");
    }
    const auto& w = l["weight"];
    if (!w.is_array() || w.empty()) throw ValidationError(at + ": weight must be a non-empty matrix");
    LinearLayer layer;
    layer.bias = detail::vector_from_json(l["bias"], at + " bias");
    std::size_t cols = 0;
    for (std::size_t r = 0; r < w.size(); ++r) {
      const auto row = detail::vector_from_json(w[r], at + " weight row " + std::to_string(r));
      if (r == 0) {
        cols = row.size();
        layer.weight = Matrix(w.size(), cols);
      } else if (row.size() != cols) {
        throw ValidationError(at + ": ragged weight matrix");
      }
      std::copy(row.begin(), row.end(), layer.weight.row(r).begin());
    }
    if (layer.bias.size() != layer.weight.rows()) throw ValidationError(at + ": bias length does not match weight rows");
    if ((l.contains("in") && l["in"] != layer.in_dim()) || (l.contains("out") && l["out"] != layer.out_dim())) {
      throw ValidationError(at + ": declared in/out do not match the weight matrix");
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

std::size_t get_size(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw ValidationError(where + ": '" + key + "' must be a non-negative integer");
  }
  return j[key].get<std::size_t>();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

Json checkpoint_to_json(const ProjectorStack& stack, const Json& config) {
  Json j;
  j["format_version"] = kFormatVersion;
  Json dims;
  dims["d_f"] = stack.dims.face_dim;
  dims["d_n"] = stack.dims.name_dim;
  dims["d_p"] = stack.dims.proj_dim;
  dims["hidden"] = stack.dims.hidden;
  dims["shared_common"] = stack.dims.shared_common;
  j["dims"] = std::move(dims);
  Json modules;
  modules["name_projector"] = mlp_to_json(stack.name_projector);
  modules["common"] = mlp_to_json(stack.common);
  if (!stack.dims.shared_common) modules["name_common"] = mlp_to_json(stack.name_common);
  j["layers"] = std::move(modules);
  j["config"] = config;
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  const std::string where = "checkpoint";
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  if (!j.contains("format_version") || j["format_version"] != kFormatVersion) {
    throw ValidationError(where + ": unsupported or missing format_version");
  }
  if (!j.contains("dims") || !j["dims"].is_object()) throw ValidationError(where + ": missing 'dims'");
  const auto& d = j["dims"];
  Checkpoint c;
  auto& s = c.stack;
  s.dims.face_dim = get_size(d, "d_f", where + " dims");
  s.dims.name_dim = get_size(d, "d_n", where + " dims");
  s.dims.proj_dim = get_size(d, "d_p", where + " dims");
  if (!d.contains("hidden") || !d["hidden"].is_array()) throw ValidationError(where + ": dims.hidden must be a list");
  s.dims.hidden.clear();
  for (const auto& h : d["hidden"]) {
    if (!h.is_number_unsigned()) throw ValidationError(where + ": dims.hidden must hold integers");
    s.dims.hidden.push_back(h.get<std::size_t>());
  }
  s.dims.shared_common = d.value("shared_common", true);
  if (!j.contains("layers") || !j["layers"].is_object()) throw ValidationError(where + ": missing 'layers'");
  const auto& layers = j["layers"];
  if (!layers.contains("name_projector") || !layers.contains("common")) {
    throw ValidationError(where + ": layers need 'name_projector' and 'common'");
  }
  s.name_projector = mlp_from_json(layers["name_projector"], where + " name_projector");
  s.common = mlp_from_json(layers["common"], where + " common");
  if (!s.dims.shared_common) {
    if (!layers.contains("name_common")) throw ValidationError(where + ": missing 'name_common'");
    s.name_common = mlp_from_json(layers["name_common"], where + " name_common");
  }
  try {
    s.validate();
  } catch (const ShapeError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  if (j.contains("config")) c.config = j["config"];
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ProjectorStack& stack, const Json& config) {
  write_text_file(path, checkpoint_to_json(stack, config).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

void write_predictions(std::ostream& out, const std::vector<LinkSet>& predictions) {
  for (const auto& p : predictions) {
    Json j;
    j["pair_id"] = p.pair_id;
    Json links = Json::array();
    for (const auto& l : p.links) links.push_back(detail::link_to_json(l));
    j["links"] = std::move(links);
    out << j.dump() << '\n';
  }
}

void save_predictions(const std::filesystem::path& path, const std::vector<LinkSet>& predictions) {
  auto out = open_out(path);
  write_predictions(out, predictions);
}

std::vector<LinkSet> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions " + path.string());
  std::vector<LinkSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "predictions line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("pair_id") || !j["pair_id"].is_string() || !j.contains("links") ||
        !j["links"].is_array()) {
      throw ValidationError(where + ": expected {pair_id, links}");
    }
    LinkSet ls{j["pair_id"].get<std::string>(), {}};
    for (const auto& l : j["links"]) ls.links.push_back(detail::link_from_json(l, where));
    out.push_back(std::move(ls));
  }
  return out;
}

Json metrics_to_json(const MetricsReport& report, const Json& config) {
  Json j;
  j["precision"] = report.prf.precision;
  j["recall"] = report.prf.recall;
  j["f1"] = report.prf.f1;
  j["accuracy"] = report.accuracy;
  j["counts"] = Json{{"correct", report.counts.correct}, {"found", report.counts.found}, {"gt", report.counts.gt}};
  j["include_null"] = report.include_null;
  j["warnings"] = report.warnings;
  j["config_echo"] = config;
  return j;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["d_f"] = c.dims.face_dim;
  j["d_n"] = c.dims.name_dim;
  j["d_p"] = c.dims.proj_dim;
  j["hidden"] = c.dims.hidden;
  j["shared_common"] = c.dims.shared_common;
  j["alpha"] = c.alpha;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["stage1_epochs"] = c.stage1_epochs;
  j["stage2_epochs"] = c.stage2_epochs;
  j["seed"] = c.seed;
  j["prototype"] = to_string(c.prototype);
  j["add_noname"] = c.add_noname;
  j["add_noface_to_matched"] = c.add_noface_to_matched;
  j["use_fn"] = c.use_fn;
  j["use_nf"] = c.use_nf;
  j["use_fnp"] = c.use_fnp;
  j["use_fp"] = c.use_fp;
  j["freeze_matching"] = c.freeze_matching;
  j["adam"] = Json{{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
  return j;
}

void save_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ostringstream out;
  for (const auto& e : log) {
    Json j;
    j["stage"] = e.stage;
    j["epoch"] = e.epoch;
    j["l_fn"] = e.l_fn;
    j["l_nf"] = e.l_nf;
    j["l_agree"] = e.l_agree;
    j["l_stage2"] = e.l_stage2;
    j["total"] = e.total;
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

Json manifest_to_json(const RunManifest& m) {
  Json j;
  j["command"] = m.command;
  j["format_version"] = kFormatVersion;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["argv"] = m.argv;
  j["duration_seconds"] = m.duration_seconds;
  return j;
}

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  write_text_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

}  // namespace secla

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "secla/errors.hpp"
#include "secla/io.hpp"

using namespace secla;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "secla_unit_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  for (const bool shared : {true, false}) {
    const auto stack = ProjectorStack::init(ModelDims{5, 4, 3, {6, 2}, shared}, 9);
    const auto path = scratch(shared ? "shared.json" : "independent.json");
    save_checkpoint(path, stack, Json{{"seed", 9}});
    const auto back = load_checkpoint(path);
    CHECK(back.config["seed"] == 9);
    CHECK(back.stack.dims.shared_common == shared);
    CHECK(back.stack.dims.hidden == std::vector<std::size_t>{6, 2});
    const auto a = stack.parameters();
    const auto b = back.stack.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
      REQUIRE(a[t].size() == b[t].size());
      for (std::size_t i = 0; i < a[t].size(); ++i) CHECK(a[t][i] == b[t][i]);
    }
  }
}

TEST_CASE("checkpoint errors") {
  const auto stack = ProjectorStack::init(ModelDims{5, 4, 3, {6, 2}, true}, 9);
  auto j = nlohmann::json::parse(checkpoint_to_json(stack, nullptr).dump());
  SUBCASE("wrong layer shape") {
    j["layers"]["common"][0]["in"] = 7;
    CHECK_THROWS_AS(checkpoint_from_json(j), ValidationError);
  }
  SUBCASE("unsupported version") {
    j["format_version"] = 42;
    CHECK_THROWS_AS(checkpoint_from_json(j), ValidationError);
  }
  SUBCASE("missing section") {
    j.erase("layers");
    CHECK_THROWS_AS(checkpoint_from_json(j), ValidationError);
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/checkpoint.json"), ValidationError);
}

TEST_CASE("predictions round trip") {
  const std::vector<LinkSet> preds{
      {"p1", {Link::normal(0, 1, 0.5), Link::no_name(1, -0.25), Link::no_face(0)}},
      {"p2", {}},
  };
  const auto path = scratch("predictions.jsonl");
  save_predictions(path, preds);
  const auto back = load_predictions(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].pair_id == "p1");
  REQUIRE(back[0].links.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[0].links[i].same_target(preds[0].links[i]));
  CHECK(back[0].links[0].score == 0.5);
  CHECK(back[1].links.empty());

  std::ostringstream out;
  write_predictions(out, preds);
  const auto line = out.str().substr(0, out.str().find('\n'));
  const auto j = nlohmann::json::parse(line);
  CHECK(j["links"][1]["name"] == "NONAME");
  CHECK(j["links"][2]["face"].is_null());

  std::ofstream(scratch("bad.jsonl")) << "{\"pair_id\":\"x\",\"links\":[{\"face\":\"q\",\"name\":0}]}\n";
  CHECK_THROWS_AS(load_predictions(scratch("bad.jsonl")), ValidationError);
}

TEST_CASE("metrics and config documents") {
  MetricsReport r;
  r.prf = {0.5, 0.25, 1.0 / 3.0};
  r.accuracy = 0.75;
  r.counts = {1, 2, 4};
  r.warnings = {"w"};
  const auto j = metrics_to_json(r, Json{{"data", "x"}});
  CHECK(j["precision"] == 0.5);
  CHECK(j["recall"] == 0.25);
  CHECK(j["accuracy"] == 0.75);
  CHECK(j["counts"]["correct"] == 1);
  CHECK(j["counts"]["found"] == 2);
  CHECK(j["counts"]["gt"] == 4);
  CHECK(j["config_echo"]["data"] == "x");

  const auto c = train_config_to_json(TrainConfig{});
  CHECK(c["alpha"] == 0.15);
  CHECK(c["lr"] == 3e-4);
  CHECK(c["batch_size"] == 20);
}

TEST_CASE("training log and manifest") {
  const auto log_path = scratch("log.jsonl");
  save_training_log(log_path, {{"secla", 0, 1.0, 2.0, 0.5, 0.0, 3.075}, {"secla", 1, 0.5, 0.5, 0.1, 0.0, 1.015}});
  std::ifstream in(log_path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "l_fn", "l_nf", "l_agree", "l_stage2", "total"}) CHECK(j.contains(key));
    ++lines;
  }
  CHECK(lines == 2);

  RunManifest m;
  m.command = "train";
  m.seed = 4;
  m.inputs = {"in"};
  m.outputs = {"out"};
  const auto j = manifest_to_json(m);
  CHECK(j["command"] == "train");
  CHECK(j["seed"] == 4);
  CHECK(j.contains("format_version"));
  CHECK(j.contains("duration_seconds"));
}

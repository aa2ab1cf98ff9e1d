#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "doctest.h"
#include "secla/errors.hpp"
#include "secla/synth.hpp"

using namespace secla;

namespace {

const char* kMinimal =
    "{\"format_version\":1,\"d_f\":2,\"d_n\":3,\"noname_embedding\":[0,0,1]}\n"
    "{\"pair_id\":\"a\",\"faces\":[[1,0]],\"names\":[{\"text\":\"Ann\",\"emb\":[1,2,3]}],"
    "\"gt_links\":[{\"face\":0,\"name\":0}]}\n";

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

std::string header() { return "{\"format_version\":1,\"d_f\":2,\"d_n\":3,\"noname_embedding\":[0,0,1]}\n"; }

}  // namespace

TEST_CASE("read_dataset") {
  const auto ds = parse(kMinimal);
  CHECK(ds.face_dim == 2);
  CHECK(ds.name_dim == 3);
  REQUIRE(ds.pairs.size() == 1);
  CHECK(ds.pairs[0].pair_id == "a");
  CHECK(ds.pairs[0].names[0].text == "Ann");
  REQUIRE(ds.pairs[0].gt_links.has_value());
  CHECK(ds.pairs[0].gt_links->at(0).same_target(Link::normal(0, 0)));

  SUBCASE("null links and NONAME records") {
    const auto d = parse(header() +
                         "{\"pair_id\":\"b\",\"faces\":[[1,0],[0,1]],\"names\":[{\"text\":\"Bo\",\"emb\":[1,1,1]},"
                         "{\"text\":\"Cy\",\"emb\":[0,1,0]}],\"gt_links\":[{\"face\":0,\"name\":0},"
                         "{\"face\":1,\"name\":\"NONAME\"},{\"face\":null,\"name\":1}]}\n");
    const auto& links = *d.pairs[0].gt_links;
    CHECK(links[1].same_target(Link::no_name(1)));
    CHECK(links[2].same_target(Link::no_face(1)));
  }
  SUBCASE("gt is optional") {
    const auto d = parse(header() + "{\"pair_id\":\"b\",\"faces\":[],\"names\":[{\"text\":\"Bo\",\"emb\":[1,1,1]}]}\n");
    CHECK_FALSE(d.pairs[0].gt_links.has_value());
  }
}

TEST_CASE("read_dataset errors") {
  const auto fails_with = [](const std::string& text, const std::string& fragment) {
    try {
      parse(text);
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK_MESSAGE(msg.find(fragment) != std::string::npos, msg);
      return;
    }
    FAIL("no ValidationError for: " << text);
  };
  fails_with(header() + "{\"pair_id\":\"short\",\"faces\":[[1]],\"names\":[]}\n", "short");
  fails_with(header() + "{\"pair_id\":\"x\",\"faces\":[[1,0]],\"names\":[]}\n"
                        "{\"pair_id\":\"x\",\"faces\":[[1,0]],\"names\":[]}\n",
             "duplicate");
  fails_with(header() + "{not json\n", "line 2");
  fails_with("{\"pair_id\":\"x\"}\n", "header");
  fails_with(header() + "{\"pair_id\":\"e\",\"faces\":[],\"names\":[]}\n", "neither");
  fails_with(header() + "{\"pair_id\":\"g\",\"faces\":[[1,0]],\"names\":[],\"gt_links\":[{\"face\":3,\"name\":\"NONAME\"}]}\n",
             "face 3");
  fails_with("{\"format_version\":9,\"d_f\":2,\"d_n\":3,\"noname_embedding\":[0,0,1]}\n", "format_version");
  fails_with("", "header");
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.jsonl"), ValidationError);
}

TEST_CASE("synth round-trips through the file format") {
  SynthConfig sc;
  sc.num_pairs = 25;
  sc.noname_rate = 0.2;
  sc.noface_rate = 0.2;
  sc.seed = 3;
  const auto ds = synth_generate(sc);
  std::ostringstream out;
  write_dataset(out, ds);
  const auto back = parse(out.str());
  REQUIRE(back.pairs.size() == ds.pairs.size());
  CHECK(back.noname_embedding == ds.noname_embedding);
  for (std::size_t p = 0; p < ds.pairs.size(); ++p) {
    CHECK(back.pairs[p].pair_id == ds.pairs[p].pair_id);
    CHECK(back.pairs[p].faces == ds.pairs[p].faces);
    REQUIRE(back.pairs[p].names.size() == ds.pairs[p].names.size());
    for (std::size_t j = 0; j < ds.pairs[p].names.size(); ++j) {
      CHECK(back.pairs[p].names[j].embedding == ds.pairs[p].names[j].embedding);
      CHECK(back.pairs[p].names[j].text == ds.pairs[p].names[j].text);
    }
    REQUIRE(back.pairs[p].gt_links->size() == ds.pairs[p].gt_links->size());
    for (std::size_t l = 0; l < ds.pairs[p].gt_links->size(); ++l)
      CHECK(back.pairs[p].gt_links->at(l).same_target(ds.pairs[p].gt_links->at(l)));
  }
  std::ostringstream again;
  write_dataset(again, back);
  CHECK(again.str() == out.str());

  const auto path = std::filesystem::temp_directory_path() / "secla_unit_roundtrip.jsonl";
  save_dataset(path, ds);
  CHECK(load_dataset(path).pairs.size() == ds.pairs.size());
  std::filesystem::remove(path);
}

TEST_CASE("synth_generate") {
  SUBCASE("counts and ids") {
    SynthConfig sc;
    sc.num_pairs = 10;
    const auto ds = synth_generate(sc);
    CHECK(ds.pairs.size() == 10);
    std::set<std::string> ids;
    for (const auto& p : ds.pairs) ids.insert(p.pair_id);
    CHECK(ids.size() == 10);
  }
  SUBCASE("one face one name, no noise") {
    SynthConfig sc;
    sc.sigma = 0.0;
    sc.min_faces = sc.max_faces = sc.min_names = sc.max_names = 1;
    sc.num_pairs = 30;
    const auto ds = synth_generate(sc);
    std::map<std::string, Vector> face_of;
    for (const auto& p : ds.pairs) {
      REQUIRE(p.faces.size() == 1);
      REQUIRE(p.names.size() == 1);
      REQUIRE(p.gt_links->size() == 1);
      CHECK(p.gt_links->at(0).same_target(Link::normal(0, 0)));
      // Every face of an identity is the identity centre itself.
      auto [it, fresh] = face_of.emplace(p.names[0].text, p.faces[0]);
      if (!fresh) CHECK(it->second == p.faces[0]);
    }
  }
  SUBCASE("gt consistency, unit faces and null-rate switches") {
    SynthConfig sc;
    sc.num_pairs = 200;
    sc.noname_rate = 0.3;
    sc.noface_rate = 0.3;
    sc.zipf_exponent = 1.0;
    sc.seed = 11;
    const auto ds = synth_generate(sc);
    CHECK_NOTHROW(validate_dataset(ds));
    std::size_t nonames = 0, nofaces = 0;
    for (const auto& p : ds.pairs) {
      for (const auto& f : p.faces) CHECK(std::abs(std::sqrt(dot(f, f)) - 1.0) < 1e-12);
      std::vector<int> face_seen(p.faces.size(), 0), name_seen(p.names.size(), 0);
      for (const auto& l : *p.gt_links) {
        if (l.has_face()) ++face_seen[l.face];
        if (l.has_name()) ++name_seen[l.name];
        nonames += l.kind == LinkKind::NoName;
        nofaces += l.kind == LinkKind::NoFace;
      }
      for (int c : face_seen) CHECK(c == 1);
      for (int c : name_seen) CHECK(c >= 1);
    }
    CHECK(nonames > 0);
    CHECK(nofaces > 0);
    sc.noname_rate = 0.0;
    sc.noface_rate = 0.0;
    for (const auto& p : synth_generate(sc).pairs)
      for (const auto& l : *p.gt_links) CHECK(l.kind == LinkKind::Normal);
  }
  SUBCASE("same seed, same data") {
    SynthConfig sc;
    sc.seed = 5;
    std::ostringstream a, b;
    write_dataset(a, synth_generate(sc));
    write_dataset(b, synth_generate(sc));
    CHECK(a.str() == b.str());
    sc.seed = 6;
    std::ostringstream c;
    write_dataset(c, synth_generate(sc));
    CHECK(c.str() != a.str());
  }
  SUBCASE("invalid configs") {
    SynthConfig sc;
    sc.noname_rate = 1.5;
    CHECK_THROWS_AS(synth_generate(sc), ContractError);
    sc = SynthConfig{};
    sc.num_identities = 2;
    sc.min_faces = sc.max_faces = 3;
    CHECK_THROWS_AS(synth_generate(sc), ContractError);
    sc = SynthConfig{};
    sc.num_pairs = 0;
    CHECK_THROWS_AS(synth_generate(sc), ContractError);
  }
}

TEST_CASE("make_easy_split") {
  SynthConfig sc;
  sc.num_pairs = 120;
  sc.max_names = 4;
  sc.noname_rate = 0.2;
  sc.noface_rate = 0.2;
  sc.seed = 9;
  const auto ds = synth_generate(sc);
  const auto split = make_easy_split(ds, 1, 1, true);
  CHECK(split.easy.size() + split.rest.size() == ds.pairs.size());
  std::multiset<std::string> ids;
  for (const auto& p : split.easy) ids.insert(p.pair_id);
  for (const auto& p : split.rest) ids.insert(p.pair_id);
  std::multiset<std::string> all;
  for (const auto& p : ds.pairs) all.insert(p.pair_id);
  CHECK(ids == all);
  for (const auto& p : split.easy) {
    CHECK(p.faces.size() <= 1);
    CHECK(p.names.size() <= 1);
    for (const auto& l : *p.gt_links) CHECK(l.kind == LinkKind::Normal);
    CHECK(split.unique_names.count(p.names[0].text) == 1);
  }
  CHECK_FALSE(split.easy.empty());
  const auto everything = make_easy_split(ds, 100, 100, false);
  CHECK(everything.rest.empty());
  CHECK_THROWS_AS(make_easy_split(ds, 0, 1, true), ContractError);
}

TEST_CASE("batch_iter") {
  const auto b = batch_iter(45, 20, 1, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 20);
  CHECK(b[1].size() == 20);
  CHECK(b[2].size() == 5);
  std::vector<std::size_t> seen;
  for (const auto& batch : b) seen.insert(seen.end(), batch.begin(), batch.end());
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 45; ++i) CHECK(seen[i] == i);
  CHECK(batch_iter(45, 20, 1, 0) == b);
  CHECK(batch_iter(45, 20, 1, 1) != b);
  CHECK(batch_iter(45, 20, 1, 1) == batch_iter(45, 20, 1, 1));
  CHECK(batch_iter(0, 20, 1, 0).empty());
  CHECK_THROWS_AS(batch_iter(5, 0, 1, 0), ContractError);
}

TEST_CASE("strip_ground_truth and ground_truth") {
  const auto ds = parse(kMinimal);
  const auto weak = strip_ground_truth(ds.pairs);
  REQUIRE(weak.size() == 1);
  CHECK(weak[0].faces == ds.pairs[0].faces);
  const auto gt = ground_truth(ds);
  CHECK(gt[0].pair_id == "a");
  Dataset no_gt = parse(header() + "{\"pair_id\":\"b\",\"faces\":[[1,0]],\"names\":[]}\n");
  CHECK_THROWS_AS(ground_truth(no_gt), ValidationError);
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, "init") == derive_seed(1, "init"));
  CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
  CHECK(derive_seed(1, "init") != derive_seed(1, "noface"));
  CHECK(derive_seed(1, "x", 0) != derive_seed(1, "x", 1));
  Rng a(4), b(4);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.index(7) < 7);
  }
}

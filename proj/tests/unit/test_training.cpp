#include <cmath>

#include "doctest.h"
#include "secla/alignment.hpp"
#include "secla/errors.hpp"
#include "secla/eval.hpp"
#include "secla/synth.hpp"
#include "secla/training.hpp"

using namespace secla;

namespace {

// Every layer is the 2x2 identity, so similarities are plain dot products of
// non-negative inputs.
ProjectorStack identity_stack() {
  ProjectorStack s;
  s.dims = ModelDims{2, 2, 2, {2, 2}, true};
  s.name_projector.layers = {LinearLayer{Matrix::identity(2), Vector(2, 0.0)}};
  for (int i = 0; i < 3; ++i) s.common.layers.push_back(LinearLayer{Matrix::identity(2), Vector(2, 0.0)});
  return s;
}

TrainConfig tiny_config(const Dataset& ds) {
  TrainConfig c;
  c.dims = ModelDims{ds.face_dim, ds.name_dim, 8, {16, 12}, true};
  c.epochs = 3;
  c.stage1_epochs = 2;
  c.stage2_epochs = 2;
  c.batch_size = 8;
  c.lr = 1e-3;
  c.seed = 4;
  return c;
}

Dataset tiny_data(std::uint64_t seed, std::size_t pairs = 60) {
  SynthConfig sc;
  sc.num_pairs = pairs;
  sc.num_identities = 8;
  sc.face_dim = 6;
  sc.name_dim = 5;
  sc.max_faces = 2;
  sc.max_names = 3;
  sc.noname_rate = 0.2;
  sc.noface_rate = 0.2;
  sc.seed = seed;
  return synth_generate(sc);
}

bool same_parameters(const ProjectorStack& a, const ProjectorStack& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t t = 0; t < pa.size(); ++t) {
    if (!std::equal(pa[t].begin(), pa[t].end(), pb[t].begin(), pb[t].end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  TrainConfig c;
  CHECK(c.alpha == 0.15);
  CHECK(c.lr == 3e-4);
  CHECK(c.batch_size == 20);
  CHECK(c.epochs == 30);
  CHECK_NOTHROW(c.validate());
  c.use_fn = c.use_nf = false;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.alpha = -0.1;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("prototype names") {
  for (auto t : {PrototypeType::RandomFace, PrototypeType::AvgFace, PrototypeType::MedoidFace,
                 PrototypeType::MatchedFace}) {
    CHECK(prototype_from_string(to_string(t)) == t);
  }
  CHECK_THROWS_AS(prototype_from_string("nearest_face"), ContractError);
}

TEST_CASE("average and medoid faces") {
  CHECK(average_face(std::vector<Vector>{{1, 0}, {0, 1}}) == Vector{0.5, 0.5});
  CHECK(medoid_face(std::vector<Vector>{{0, 0}, {0, 1}, {0, 10}}) == Vector{0, 1});
  CHECK(medoid_face(std::vector<Vector>{{3, 3}}) == Vector{3, 3});
  CHECK(medoid_face(std::vector<Vector>{{0, 0}, {1, 0}}) == Vector{0, 0});  // tie to the first
  CHECK_THROWS_AS(average_face(std::vector<Vector>{}), ContractError);
  CHECK_THROWS_AS(medoid_face(std::vector<Vector>{}), ContractError);
}

TEST_CASE("FaceBank") {
  FaceBank bank;
  CHECK(bank.add("a", "p1/0", Vector{1, 0}));
  CHECK_FALSE(bank.add("a", "p1/0", Vector{1, 0}));
  CHECK(bank.add("a", "p2/0", Vector{0, 1}));
  CHECK(bank.add("b", "p1/0", Vector{1, 1}));
  CHECK(bank.size() == 3);
  CHECK(bank.name_count() == 2);
  CHECK(bank.faces("a").size() == 2);
  CHECK_THROWS_AS(bank.faces("zed"), ContractError);
  CHECK_THROWS_AS(bank.add("a", "p3/0", Vector{1, 2, 3}), ShapeError);
}

TEST_CASE("select_prototypes") {
  const auto stack = identity_stack();
  Rng rng(1);
  SUBCASE("singleton bank: every strategy returns the face") {
    FaceBank bank;
    bank.add("a", "k", Vector{0.3, 0.7});
    const std::vector<NameRecord> names{{"a", Vector{1, 0}}};
    for (auto t : {PrototypeType::RandomFace, PrototypeType::AvgFace, PrototypeType::MedoidFace,
                   PrototypeType::MatchedFace}) {
      CHECK(select_prototypes(bank, names, t, stack, rng) == std::vector<Vector>{{0.3, 0.7}});
    }
  }
  SUBCASE("strategies on a small bank") {
    FaceBank bank;
    bank.add("a", "1", Vector{0, 0});
    bank.add("a", "2", Vector{0, 1});
    bank.add("a", "3", Vector{0, 10});
    bank.add("b", "1", Vector{1, 0});
    bank.add("b", "2", Vector{0, 1});
    const std::vector<NameRecord> names{{"a", Vector{1, 0}}, {"b", Vector{0, 1}}};
    CHECK(select_prototypes(bank, names, PrototypeType::MedoidFace, stack, rng)[0] == Vector{0, 1});
    CHECK(select_prototypes(bank, names, PrototypeType::AvgFace, stack, rng)[1] == Vector{0.5, 0.5});
    // Matched: highest similarity to the name's projection.  For "a" = (1,0)
    // every banked face scores 0, so the first wins; "b" = (0,1) picks (0,1).
    const auto matched = select_prototypes(bank, names, PrototypeType::MatchedFace, stack, rng);
    CHECK(matched[0] == Vector{0, 0});
    CHECK(matched[1] == Vector{0, 1});
    for (int i = 0; i < 20; ++i) {
      const auto r = select_prototypes(bank, names, PrototypeType::RandomFace, stack, rng);
      const auto& fa = bank.faces("a");
      CHECK(std::find(fa.begin(), fa.end(), r[0]) != fa.end());
    }
  }
  SUBCASE("unknown name") {
    FaceBank bank;
    bank.add("a", "k", Vector{0.3, 0.7});
    const std::vector<NameRecord> names{{"q", Vector{1, 0}}};
    CHECK_THROWS_AS(select_prototypes(bank, names, PrototypeType::AvgFace, stack, rng), ContractError);
  }
}

TEST_CASE("match_known_names") {
  const auto stack = identity_stack();
  SUBCASE("nothing known") {
    const WeakPair p{"p", {Vector{1, 0}}, {{"a", Vector{1, 0}}}};
    const auto r = match_known_names(stack, p, {"z"});
    CHECK(r.matched.empty());
    CHECK(r.residual.faces == p.faces);
    CHECK(r.residual.names.size() == 1);
  }
  SUBCASE("full match") {
    const WeakPair p{"p", {Vector{0, 1}, Vector{1, 0}}, {{"a", Vector{1, 0}}, {"b", Vector{0, 1}}}};
    const auto r = match_known_names(stack, p, {"a", "b"});
    CHECK(r.matched == std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}, {0, 1}});
    CHECK(r.residual.faces.empty());
    CHECK(r.residual.names.empty());
  }
  SUBCASE("two names claim the same face") {
    const WeakPair p{"p", {Vector{2, 2}, Vector{0.1, 0}}, {{"a", Vector{1, 0}}, {"b", Vector{0, 1}}}};
    const auto r = match_known_names(stack, p, {"a", "b"});
    CHECK(r.matched == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {0, 1}});
    CHECK(r.residual.faces == std::vector<Vector>{{0.1, 0}});
    CHECK(r.residual.names.empty());
  }
  SUBCASE("mixed") {
    const WeakPair p{"p", {Vector{1, 0}, Vector{0, 1}}, {{"a", Vector{1, 0}}, {"c", Vector{0, 1}}}};
    const auto r = match_known_names(stack, p, {"a"});
    CHECK(r.matched == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}});
    CHECK(r.residual.faces == std::vector<Vector>{{0, 1}});
    REQUIRE(r.residual.names.size() == 1);
    CHECK(r.residual.names[0].text == "c");
  }
  SUBCASE("NONAME is never matched") {
    const WeakPair p{"p", {Vector{1, 0}}, {{kNoNameText, Vector{1, 0}, true}}};
    const auto r = match_known_names(stack, p, {kNoNameText});
    CHECK(r.matched.empty());
  }
}

TEST_CASE("unique_names skips NONAME") {
  const std::vector<WeakPair> pairs{{"p", {}, {{"a", Vector{1}}, {kNoNameText, Vector{1}, true}}},
                                    {"q", {}, {{"a", Vector{1}}, {"b", Vector{1}}}}};
  CHECK(unique_names(pairs) == std::set<std::string>{"a", "b"});
}

TEST_CASE("batch_loss") {
  const auto ds = tiny_data(1, 12);
  const auto pairs = strip_ground_truth(ds.pairs);
  const auto stack = ProjectorStack::init(ModelDims{6, 5, 4, {7, 5}, true}, 1);
  BatchInput batch;
  batch.pairs.assign(pairs.begin(), pairs.begin() + 5);
  const auto l = batch_loss(stack, batch, ds.noname_embedding, BatchLossOptions{});
  CHECK(std::isfinite(l.total));
  CHECK(l.total == doctest::Approx(l.l_fn + l.l_nf + 0.15 * l.l_agree));
  CHECK(l.l_fn >= 0.0);
  CHECK(l.l_agree >= 0.0);

  SUBCASE("worker count does not change the value") {
    BatchLossOptions o;
    o.workers = 3;
    auto g1 = ProjectorStack::zeros_like(stack), g3 = ProjectorStack::zeros_like(stack);
    const auto a = batch_loss(stack, batch, ds.noname_embedding, BatchLossOptions{}, &g1);
    const auto b = batch_loss(stack, batch, ds.noname_embedding, o, &g3);
    CHECK(a.total == b.total);
    CHECK(same_parameters(g1, g3));
  }
  SUBCASE("empty matched set") {
    BatchInput bad;
    bad.matched.push_back(MatchedSample{{Vector(6, 0.1)}, {}, {Vector(6, 0.2)}});
    CHECK_THROWS_AS(batch_loss(stack, bad, ds.noname_embedding, BatchLossOptions{}), ContractError);
  }
}

TEST_CASE("train_secla") {
  const auto ds = tiny_data(2);
  const auto pairs = strip_ground_truth(ds.pairs);
  auto config = tiny_config(ds);
  const auto r = train_secla(pairs, ds.noname_embedding, config);
  REQUIRE(r.log.size() == config.epochs);
  CHECK(r.log.back().total < r.log.front().total);
  for (const auto& e : r.log) CHECK(e.stage == "secla");
  CHECK_FALSE(r.stage1.has_value());

  SUBCASE("deterministic") {
    const auto again = train_secla(pairs, ds.noname_embedding, config);
    CHECK(same_parameters(r.stack, again.stack));
    config.workers = 3;
    CHECK(same_parameters(r.stack, train_secla(pairs, ds.noname_embedding, config).stack));
  }
  SUBCASE("different seed") {
    config.seed = 5;
    CHECK_FALSE(same_parameters(r.stack, train_secla(pairs, ds.noname_embedding, config).stack));
  }
  SUBCASE("unidirectional and no agreement") {
    config.use_nf = false;
    config.alpha = 0.0;
    const auto u = train_secla(pairs, ds.noname_embedding, config);
    for (const auto& e : u.log) CHECK(e.total == doctest::Approx(e.l_fn));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train_secla({}, ds.noname_embedding, config), ContractError);
    config.lr = 1e300;
    CHECK_THROWS_AS(train_secla(pairs, ds.noname_embedding, config), NumericError);
  }
}

TEST_CASE("train_pipeline_heuristic") {
  const auto ds = tiny_data(3);
  const auto split = make_easy_split(ds, 1, 1, true);
  REQUIRE_FALSE(split.easy.empty());
  const auto easy = strip_ground_truth(split.easy);
  const auto rest = strip_ground_truth(split.rest);
  const auto config = tiny_config(ds);
  const auto r = train_pipeline_heuristic(easy, rest, ds.noname_embedding, config);
  REQUIRE(r.stage1.has_value());
  std::size_t stage1 = 0, finetune = 0;
  for (const auto& e : r.log) (e.stage == "stage1" ? stage1 : finetune) += 1;
  CHECK(stage1 == config.stage1_epochs);
  CHECK(finetune == config.stage2_epochs);
  CHECK_THROWS_AS(train_pipeline_heuristic({}, rest, ds.noname_embedding, config), ContractError);
}

TEST_CASE("train_secla_b") {
  const auto ds = tiny_data(4);
  const auto split = make_easy_split(ds, 1, 1, true);
  const auto easy = strip_ground_truth(split.easy);
  const auto all = strip_ground_truth(ds.pairs);
  auto config = tiny_config(ds);
  const auto r = train_secla_b(all, easy, ds.noname_embedding, config);
  REQUIRE(r.stage1.has_value());
  CHECK(r.log.size() == config.stage1_epochs + config.stage2_epochs);
  bool saw_stage2 = false;
  for (const auto& e : r.log) saw_stage2 = saw_stage2 || e.l_stage2 > 0.0;
  CHECK(saw_stage2);
  CHECK(same_parameters(r.stack, train_secla_b(all, easy, ds.noname_embedding, config).stack));

  for (auto t : {PrototypeType::RandomFace, PrototypeType::AvgFace, PrototypeType::MedoidFace}) {
    config.prototype = t;
    config.add_noface_to_matched = true;
    config.freeze_matching = true;
    CHECK(std::isfinite(train_secla_b(all, easy, ds.noname_embedding, config).log.back().total));
  }
  config = tiny_config(ds);
  config.use_fnp = false;
  config.use_fp = false;
  for (const auto& e : train_secla_b(all, easy, ds.noname_embedding, config).log) CHECK(e.l_stage2 == 0.0);
  SUBCASE("easy is everything") {
    CHECK(std::isfinite(train_secla_b(all, all, ds.noname_embedding, tiny_config(ds)).log.back().total));
  }
  CHECK_THROWS_AS(train_secla_b(all, {}, ds.noname_embedding, config), ContractError);
}

TEST_CASE("noface_embedding") {
  CHECK(noface_embedding(8, 1) == noface_embedding(8, 1));
  CHECK(noface_embedding(8, 1) != noface_embedding(8, 2));
  CHECK(noface_embedding(8, 1).size() == 8);
}

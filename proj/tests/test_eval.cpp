#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "morphinn/eval.hpp"
#include "test_helpers.hpp"

using namespace morphinn;
using namespace morphinn::testing;

namespace {

using TagSets = std::vector<std::set<std::string>>;

// Zero-parameter blocks with identity permutations over an inflection layout.
InnModel identity_task_model(std::size_t emb, std::size_t tags, std::size_t z_dim,
                             std::size_t z_cat) {
  IoLayout layout;
  layout.task = Task::kInflection;
  layout.x_dim = emb + tags;
  layout.y_dim = emb;
  layout.z_dim = z_dim;
  layout.z_cat = z_cat;
  layout.tag_count = tags;

  InnModel model;
  model.layout = layout;
  model.width = layout.width();
  const std::size_t n1 = model.width / 2, n2 = model.width - n1;
  for (int i = 0; i < 2; ++i) {
    CouplingBlock b;
    b.width = model.width;
    b.split_point = n1;
    b.s2 = make_constant_mlp(n2, n1, 0.0);
    b.t2 = make_constant_mlp(n2, n1, 0.0);
    b.s1 = make_constant_mlp(n1, n2, 0.0);
    b.t1 = make_constant_mlp(n1, n2, 0.0);
    model.blocks.push_back(std::move(b));
  }
  model.perms.push_back(identity_permutation(model.width));
  return model;
}

ToyLangConfig fixture_toy_cfg() {
  ToyLangConfig toy_cfg;
  toy_cfg.lemma_count = 10;
  toy_cfg.suffix_slots = 2;
  toy_cfg.tags_per_slot = 2;
  toy_cfg.embedding_dim = 12;
  toy_cfg.seed = 33;
  return toy_cfg;
}

struct ToyFixture {
  ToyLanguage toy = generate_toy_language(fixture_toy_cfg());
  SplitResult split = split_dataset(toy.records, 0.8, 0.1, 0.1, 4);
  TagIndex tags = build_tag_index(split.train);
  TrainConfig cfg;

  ToyFixture() {
    cfg.epochs = 3;
    cfg.hidden = 16;
    cfg.mlp_layers = 2;
    cfg.blocks = 2;
    cfg.batch_size = 8;
  }
};

}  // namespace

TEST_CASE("exact match percentages") {
  CHECK(exact_match({"a", "b"}, {"a", "b"}) == 100.0);
  CHECK(exact_match({"a", "b"}, {"x", "y"}) == 0.0);
  CHECK(exact_match({"a", "b", "c", "d"}, {"a", "b", "c", "x"}) == 75.0);
  CHECK_THROWS_AS(exact_match({"a"}, {"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(exact_match({}, {}), std::invalid_argument);
}

TEST_CASE("tag f1 on identical sets is 100") {
  const TagSets sets{{"A", "B"}, {}, {"C"}};
  CHECK(tag_f1(sets, sets) == 100.0);
}

TEST_CASE("tag f1 hand value for a half-recall instance") {
  CHECK(tag_f1({{"A"}}, {{"A", "B"}}) == doctest::Approx(100.0 * 2.0 / 3.0));
}

TEST_CASE("tag f1 is zero for empty predictions against nonempty gold") {
  CHECK(tag_f1({{}, {}}, {{"A"}, {"B"}}) == 0.0);
}

TEST_CASE("tag f1 is 100 only when every set matches") {
  const TagSets pred{{"A"}, {"B"}};
  const TagSets gold{{"A"}, {"B", "C"}};
  CHECK(tag_f1(pred, gold) < 100.0);
}

TEST_CASE("metrics are invariant to instance order") {
  std::vector<std::string> pred{"a", "b", "c"}, gold{"a", "x", "c"};
  const TagSets tpred{{"A"}, {"B"}, {}}, tgold{{"A"}, {"C"}, {"D"}};
  const double em = exact_match(pred, gold);
  const double f1 = tag_f1(tpred, tgold);

  // one fixed permutation applied to both sides
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<std::string> pred2(3), gold2(3);
  TagSets tpred2(3), tgold2(3);
  for (std::size_t i = 0; i < 3; ++i) {
    pred2[i] = pred[perm[i]];
    gold2[i] = gold[perm[i]];
    tpred2[i] = tpred[perm[i]];
    tgold2[i] = tgold[perm[i]];
  }
  CHECK(exact_match(pred2, gold2) == em);
  CHECK(tag_f1(tpred2, tgold2) == f1);
}

TEST_CASE("macro f1 averages per tag") {
  // tag A perfect (F1 1), tag B never predicted (F1 0) -> macro 50
  CHECK(tag_f1_macro({{"A"}, {"A"}}, {{"A"}, {"A", "B"}}) ==
        doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("identity model inflection decode is deterministic") {
  ToyFixture f;
  const InnModel model =
      identity_task_model(f.toy.table.dim(), f.tags.size(), 2, 3);
  const MorphRecord& rec = f.split.train.front();
  const std::string a =
      predict_inflection(model, rec.lemma, rec.tags, f.toy.table, f.tags);
  const std::string b =
      predict_inflection(model, rec.lemma, rec.tags, f.toy.table, f.tags);
  CHECK(a == b);
  // the identity network forwards the padded x, so y is the lemma vector
  // itself and the decode lands on the lemma token
  CHECK(a == rec.lemma);
}

TEST_CASE("predict_inflection rejects an unresolvable lemma") {
  ToyFixture f;
  const InnModel model =
      identity_task_model(f.toy.table.dim(), f.tags.size(), 2, 3);
  CHECK_THROWS_AS(predict_inflection(model, "@@", {}, f.toy.table, f.tags),
                  std::runtime_error);
}

TEST_CASE("analysis tags are empty exactly at the 0.5 sigmoid boundary") {
  ToyFixture f;
  // no latent block: the inverse of the identity model zero-fills the tag
  // slots, so every pre-sigmoid activation is 0 and the strict threshold
  // keeps the set empty
  const InnModel model = identity_task_model(f.toy.table.dim(), f.tags.size(), 0, 0);
  const Analysis a =
      predict_analysis(model, f.split.train.front().surface, f.toy.table, f.tags);
  CHECK(a.tags.empty());
}

TEST_CASE("hardened analysis is deterministic, sampled analysis is seeded") {
  ToyFixture f;
  const InnModel model =
      identity_task_model(f.toy.table.dim(), f.tags.size(), 2, 3);
  const std::string surface = f.split.train.front().surface;

  const Analysis h1 = predict_analysis(model, surface, f.toy.table, f.tags);
  const Analysis h2 = predict_analysis(model, surface, f.toy.table, f.tags);
  CHECK(h1.lemma == h2.lemma);
  CHECK(h1.tags == h2.tags);

  Rng r1(5), r2(5), r3(6);
  const Analysis s1 = predict_analysis(model, surface, f.toy.table, f.tags,
                                       ZMode::kSampled, 1.0, &r1);
  const Analysis s2 = predict_analysis(model, surface, f.toy.table, f.tags,
                                       ZMode::kSampled, 1.0, &r2);
  CHECK(s1.lemma == s2.lemma);
  CHECK(s1.tags == s2.tags);
  CHECK_NOTHROW(predict_analysis(model, surface, f.toy.table, f.tags,
                                 ZMode::kSampled, 1.0, &r3));
  CHECK_THROWS_AS(predict_analysis(model, surface, f.toy.table, f.tags,
                                   ZMode::kSampled, 1.0, nullptr),
                  std::invalid_argument);
}

TEST_CASE("task guards on the prediction pipelines") {
  ToyFixture f;
  const InnModel inflection =
      identity_task_model(f.toy.table.dim(), f.tags.size(), 2, 3);
  CHECK_THROWS_AS(predict_lemma(inflection, "x", f.toy.table),
                  std::invalid_argument);
  Rng rng(1);
  CHECK_THROWS_AS(sample_surfaces(inflection, "x", 3, 1.0, rng, f.toy.table),
                  std::invalid_argument);
}

TEST_CASE("sample_surfaces basics on a lemmatization model") {
  ToyFixture f;
  TrainConfig cfg = f.cfg;
  cfg.epochs = 0;
  InnModel model = make_task_model(Task::kLemmatization, f.toy.table.dim(), 0, cfg);
  const std::string lemma = f.split.train.front().lemma;
  Rng rng(11);

  CHECK(sample_surfaces(model, lemma, 0, 1.0, rng, f.toy.table).empty());

  // sharp fixed logits at a tiny temperature pin z, so every sample decodes
  // to the same token
  Vec sharp(model.layout.z_len(), 0.0);
  for (std::size_t j = 0; j < model.layout.z_dim; ++j)
    sharp[j * model.layout.z_cat] = 10.0;
  const auto samples =
      sample_surfaces(model, lemma, 8, 0.01, rng, f.toy.table, sharp);
  REQUIRE(samples.size() == 8);
  CHECK(distinct_count(samples) == 1);

  const auto more = sample_surfaces(model, lemma, 5, 1.0, rng, f.toy.table);
  CHECK(distinct_count(more) >= 1);
  CHECK(distinct_count({"a", "b", "a"}) == 2);
}

TEST_CASE("evaluate_inn produces a full inflection report") {
  ToyFixture f;
  const InnModel model =
      identity_task_model(f.toy.table.dim(), f.tags.size(), 2, 3);
  const EvalReport report = evaluate_inn(model, f.split.test, f.toy.table, f.tags);
  CHECK(report.count == f.split.test.size());
  CHECK(report.surface_em >= 0.0);
  CHECK(report.surface_em <= 100.0);
  CHECK(report.lemma_em >= 0.0);
  CHECK(report.tag_f1 >= 0.0);
}

TEST_CASE("ablation grid parsing: presets, custom rows, paths") {
  std::istringstream in(
      "task = inflection\n"
      "epochs = 2\n"
      "data = /tmp/d.tsv\n"
      "embeddings = /tmp/e.vec\n"
      "rows = ly\n"
      "row.tiny = epochs=1;hidden=8\n");
  const AblationGrid grid = parse_grid(in);
  CHECK(grid.task == Task::kInflection);
  CHECK(grid.data_path == "/tmp/d.tsv");
  CHECK(grid.embeddings_path == "/tmp/e.vec");
  REQUIRE(grid.rows.size() == 2);
  CHECK(grid.rows[0].name == "ly");
  CHECK(grid.rows[0].cfg.use_lx == false);
  CHECK(grid.rows[0].cfg.use_lt == false);
  CHECK(grid.rows[0].cfg.epochs == 2);
  CHECK(grid.rows[1].name == "tiny");
  CHECK(grid.rows[1].cfg.epochs == 1);
  CHECK(grid.rows[1].cfg.hidden == 8);
}

TEST_CASE("ablation default rows include the baseline") {
  std::istringstream in("task = inflection\n");
  const AblationGrid grid = parse_grid(in);
  REQUIRE(grid.rows.size() == 4);
  CHECK(grid.rows[0].name == "baseline");
  CHECK(grid.rows[0].baseline);
  std::istringstream lem("task = lemmatization\n");
  const AblationGrid lgrid = parse_grid(lem);
  CHECK(lgrid.rows[0].name == "baseline");
  CHECK(lgrid.rows[1].cfg.z_dim == 0);
}

TEST_CASE("a grid of one yields one report") {
  ToyFixture f;
  AblationGrid grid;
  grid.task = Task::kInflection;
  grid.base = f.cfg;
  grid.rows.push_back({"only", f.cfg, false});
  const auto reports = run_ablation(grid, f.toy.records, f.toy.table);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].row_name == "only");
  CHECK(reports[0].error.empty());
  CHECK(reports[0].count == f.split.test.size());
  CHECK(!reports[0].fingerprint.empty());
}

TEST_CASE("ablation failures are reported per row, not thrown") {
  ToyFixture f;
  AblationGrid grid;
  grid.task = Task::kInflection;
  TrainConfig broken = f.cfg;
  broken.split_train = 0.5;  // ratios no longer sum to 1
  grid.rows.push_back({"broken", broken, false});
  grid.rows.push_back({"fine", f.cfg, false});
  const auto reports = run_ablation(grid, f.toy.records, f.toy.table);
  REQUIRE(reports.size() == 2);
  CHECK(!reports[0].error.empty());
  CHECK(reports[1].error.empty());
}

TEST_CASE("report formatting has both shapes") {
  EvalReport r;
  r.task = Task::kInflection;
  r.row_name = "demo";
  r.lemma_em = 90.0;
  r.surface_em = 95.5;
  r.tag_f1 = 80.25;
  r.count = 160;
  r.fingerprint = "abc123";
  const std::string table = format_report_table({r});
  CHECK(table.find("L(EM%)") != std::string::npos);
  CHECK(table.find("demo") != std::string::npos);
  CHECK(table.find("95.50") != std::string::npos);
  const std::string records = format_report_records({r});
  CHECK(records.find("report task=inflection row=demo") != std::string::npos);
  CHECK(records.find("lemma_em=90") != std::string::npos);
  CHECK(records.find("config=abc123") != std::string::npos);

  EvalReport lem;
  lem.task = Task::kLemmatization;
  lem.lemma_em = 88.0;
  lem.count = 10;
  const std::string ltable = format_report_table({lem});
  CHECK(ltable.find('-') != std::string::npos);  // missing metrics print as -
}

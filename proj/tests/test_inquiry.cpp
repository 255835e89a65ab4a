// Synthetic inquiry generation: sampling, question synthesis, dual
// verification, dedup, subset lattice, and order-independent parallelism.
#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <string>
#include <vector>

#include "syndoc/backends.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/inquiry.hpp"
#include "syndoc/qa.hpp"

using namespace syndoc;

namespace {

TextLineEntity line(int id, BBox box, std::string content) {
  TextLineEntity e;
  e.id = id;
  e.bbox = box;
  e.content = std::move(content);
  return e;
}

// A minimal two-pair form in reading order: label, value, label, value.
EntitySet form_doc(const std::string& doc_id) {
  EntitySet set;
  set.doc_id = doc_id;
  set.page_width_px = 1000;
  set.page_height_px = 1000;
  set.entities = {
      line(0, {50, 50, 250, 80}, "Invoice Number:"),
      line(1, {50, 100, 250, 130}, "INV-" + doc_id),
      line(2, {600, 700, 800, 730}, "Total Amount:"),
      line(3, {600, 760, 800, 790}, "$42.00"),
  };
  return set;
}

Gateway sim_gateway(double meaningful_rate = 1.0, double consistent_rate = 1.0) {
  return Gateway(std::make_shared<SimBackend>(SimConfig{meaningful_rate, consistent_rate}),
                 RetryPolicy{1, 0.0});
}

nlohmann::json records_json(const std::vector<QARecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr;
}

}  // namespace

TEST_CASE("sample_entities is deterministic, distinct, and clamped") {
  const EntitySet set = form_doc("d1");
  const auto a = sample_entities(set, 3, 7);
  const auto b = sample_entities(set, 3, 7);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);

  std::vector<int> ids;
  for (const auto& e : a) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());

  CHECK(sample_entities(set, 99, 7).size() == set.entities.size());
  CHECK(sample_entities(EntitySet{}, 3, 7).empty());
  CHECK_THROWS_AS(sample_entities(set, 0, 7), std::invalid_argument);
}

TEST_CASE("document_context is the contents in reading order") {
  CHECK(document_context(form_doc("d1")) ==
        "Invoice Number:\nINV-d1\nTotal Amount:\n$42.00");
  CHECK(document_context(EntitySet{}).empty());
}

TEST_CASE("semantic qa copies the answer from the entity, not the reply") {
  auto backend =
      ScriptBackend::from_json({{"gen_semantic:*", "What is the invoice number?\nAnswer: wrong"}});
  Gateway gw(backend, RetryPolicy{1, 0.0});
  const TextLineEntity e = line(1, {0, 0, 10, 10}, "  INV  001  ");
  std::string raw;
  const SemanticQA qa = generate_semantic_qa(e, "ctx", std::nullopt, gw, &raw);
  CHECK(qa.question == "What is the invoice number?");
  CHECK(qa.answer == "  INV  001  ");  // verbatim, whitespace preserved
  CHECK(qa.entity_id == 1);
  CHECK(raw == "What is the invoice number?\nAnswer: wrong");
}

TEST_CASE("semantic qa rejects empty content and empty replies") {
  Gateway gw(std::make_shared<EchoBackend>(""), RetryPolicy{1, 0.0});
  CHECK_THROWS_AS(
      generate_semantic_qa(line(0, {0, 0, 1, 1}, ""), "ctx", std::nullopt, gw),
      std::invalid_argument);

  auto empty_backend = ScriptBackend::from_json({{"gen_semantic:*", "\n  \n"}});
  Gateway gw2(empty_backend, RetryPolicy{1, 0.0});
  CHECK_THROWS_AS(
      generate_semantic_qa(line(0, {0, 0, 1, 1}, "x"), "ctx", std::nullopt, gw2),
      TransportError);
}

TEST_CASE("spatial transform grounds region and grid from the bbox alone") {
  auto backend = ScriptBackend::from_json(
      {{"gen_spatial:*", "Where is the answer of the question located?"}});
  Gateway gw(backend, RetryPolicy{1, 0.0});
  SemanticQA sem;
  sem.question = "What is the total?";
  sem.entity_id = 3;
  sem.doc_id = "d1";
  const BBox bottom_right{700, 900, 900, 990};
  const SpatialQA spt = transform_spatial(sem, bottom_right, gw, GridSpec{3, 3});
  CHECK(spt.question == "Where is the answer of the question located?");
  CHECK(to_string(spt.region) == "bottom-right");
  CHECK(spt.grid_index == 8);
  CHECK(spt.entity_id == 3);
  CHECK(spt.doc_id == "d1");
}

TEST_CASE("spatial transform falls back to the fixed wording on failure") {
  // No gen_spatial entry: the transport error is absorbed, not surfaced.
  auto backend = ScriptBackend::from_json(nlohmann::json::object());
  Gateway gw(backend, RetryPolicy{1, 0.0});
  SemanticQA sem;
  sem.question = "What is the total?";
  const SpatialQA spt = transform_spatial(sem, {0, 0, 100, 100}, gw, GridSpec{3, 3});
  CHECK(spt.question == "Where is the answer of What is the total? located?");
  CHECK(spt.grid_index == 0);
}

TEST_CASE("verification parses verdicts and treats failures as rejection") {
  auto backend = ScriptBackend::from_json(
      {{"verify_user_input:*", "{'Response': 'Yes', 'Explanation': 'fine'}"},
       {"verify_answer:*", "{'Response': 'No', 'Explanation': 'vague'}"}});
  Gateway gw(backend, RetryPolicy{1, 0.0});
  std::string raw;
  CHECK(verify_meaningful(line(0, {0, 0, 1, 1}, "v"), "ctx", std::nullopt, gw, &raw));
  CHECK(raw.find("fine") != std::string::npos);
  CHECK_FALSE(verify_consistent("What is v?", "v", gw, &raw));
  CHECK(raw.find("vague") != std::string::npos);

  // A backend with no verification entries fails transport; both checks
  // must read that as "no" rather than propagate.
  auto silent = ScriptBackend::from_json(nlohmann::json::object());
  Gateway gw2(silent, RetryPolicy{1, 0.0});
  CHECK_FALSE(verify_meaningful(line(0, {0, 0, 1, 1}, "v"), "ctx", std::nullopt, gw2));
  CHECK_FALSE(verify_consistent("q", "v", gw2));
}

TEST_CASE("per-document generation fills records and parallel audits") {
  const EntitySet set = form_doc("d1");
  GenerationConfig config;
  config.entities_per_doc = 10;
  config.seed = 5;
  Gateway gw = sim_gateway();
  const GenerationResult result = generate_for_document(set, config, gw);

  REQUIRE(result.records.size() == result.audits.size());
  CHECK(result.skipped_backend_failures == 0);
  REQUIRE_FALSE(result.records.empty());
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const QARecord& r = result.records[i];
    CHECK(r.semantic.doc_id == "d1");
    CHECK(r.spatial.doc_id == "d1");
    CHECK(r.spatial.entity_id == r.semantic.entity_id);
    // The answer is always the entity content itself.
    const auto& e = set.entities[static_cast<std::size_t>(r.semantic.entity_id)];
    CHECK(r.semantic.answer == e.content);
    CHECK(r.spatial.grid_index == grid_index_of(e.bbox, GridSpec{3, 3}));
    CHECK(result.audits[i].entity_id == r.semantic.entity_id);
    CHECK_FALSE(result.audits[i].semantic_reply.empty());
    CHECK(r.flags.meaningful_reply == result.audits[i].meaningful_reply);
  }

  // Values are verified user input under the simulator; labels are not.
  for (const QARecord& r : result.records) {
    const bool is_label = r.semantic.answer.back() == ':';
    CHECK(r.flags.meaningful == !is_label);
  }
}

TEST_CASE("duplicate questions within a document keep the first occurrence") {
  EntitySet set;
  set.doc_id = "dup";
  set.page_width_px = set.page_height_px = 1000;
  set.entities = {
      line(0, {0, 0, 100, 30}, "alpha"),
      line(1, {0, 50, 100, 80}, "beta"),
      line(2, {0, 100, 100, 130}, "gamma"),
  };
  // Every entity provokes the same question; only one record may survive.
  auto backend = ScriptBackend::from_json(
      {{"gen_semantic:*", "What is the thing?"},
       {"gen_spatial:*", "Where is the thing?"},
       {"verify_user_input:*", "{'Response': 'Yes', 'Explanation': 'y'}"},
       {"verify_answer:*", "{'Response': 'Yes', 'Explanation': 'y'}"}});
  Gateway gw(backend, RetryPolicy{1, 0.0});
  GenerationConfig config;
  config.entities_per_doc = 3;
  config.seed = 9;
  const GenerationResult result = generate_for_document(set, config, gw);
  REQUIRE(result.records.size() == 1);

  // The survivor is the first sampled entity under the per-doc seed.
  const auto sampled = sample_entities(set, 3, fnv1a64("dup", 9));
  CHECK(result.records[0].semantic.entity_id == sampled[0].id);
}

TEST_CASE("generation skips entities whose semantic call keeps failing") {
  const EntitySet set = form_doc("d1");
  auto backend = ScriptBackend::from_json(nlohmann::json::object());
  Gateway gw(backend, RetryPolicy{1, 0.0});
  GenerationConfig config;
  config.entities_per_doc = 10;
  const GenerationResult result = generate_for_document(set, config, gw);
  CHECK(result.records.empty());
  CHECK(result.skipped_backend_failures == 4);
}

TEST_CASE("corpus results do not depend on document order") {
  const std::vector<EntitySet> forward = {form_doc("a"), form_doc("b"), form_doc("c")};
  const std::vector<EntitySet> reversed = {form_doc("c"), form_doc("b"), form_doc("a")};
  GenerationConfig config;
  config.entities_per_doc = 4;
  config.seed = 13;
  Gateway gw = sim_gateway();
  const auto fwd = generate_corpus(forward, config, gw);
  const auto rev = generate_corpus(reversed, config, gw);
  REQUIRE(fwd.records.size() == rev.records.size());

  // Group by doc: each document's records are identical either way.
  auto by_doc = [](const std::vector<QARecord>& records, const std::string& doc) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
      if (r.semantic.doc_id == doc) arr.push_back(to_json(r));
    }
    return arr;
  };
  for (const std::string doc : {"a", "b", "c"}) {
    CHECK(by_doc(fwd.records, doc) == by_doc(rev.records, doc));
  }
}

TEST_CASE("parallel generation merges in document order") {
  std::vector<EntitySet> sets;
  for (int i = 0; i < 8; ++i) sets.push_back(form_doc("doc" + std::to_string(i)));
  GenerationConfig serial;
  serial.entities_per_doc = 4;
  serial.seed = 21;
  serial.threads = 1;
  GenerationConfig parallel = serial;
  parallel.threads = 4;
  Gateway gw = sim_gateway();
  const auto a = generate_corpus(sets, serial, gw);
  const auto b = generate_corpus(sets, parallel, gw);
  CHECK(records_json(a.records) == records_json(b.records));
  CHECK(a.audits.size() == b.audits.size());
}

TEST_CASE("verification subsets form the documented lattice") {
  std::vector<EntitySet> sets;
  for (int i = 0; i < 10; ++i) sets.push_back(form_doc("doc" + std::to_string(i)));
  GenerationConfig config;
  config.entities_per_doc = 4;
  config.seed = 31;
  // Sub-unity rates make the verdicts a nontrivial partition.
  Gateway gw = sim_gateway(0.6, 0.6);
  const auto result = generate_corpus(sets, config, gw);
  const QASubsets subsets = build_subsets(result.records);

  CHECK(subsets.all.size() == result.records.size());
  CHECK(subsets.both.size() <= subsets.meaningful.size());
  CHECK(subsets.both.size() <= subsets.consistent.size());
  CHECK(subsets.meaningful.size() <= subsets.all.size());
  CHECK(subsets.consistent.size() <= subsets.all.size());
  CHECK(subsets.both.size() < subsets.all.size());

  for (const QARecord& r : subsets.meaningful) CHECK(r.flags.meaningful);
  for (const QARecord& r : subsets.consistent) CHECK(r.flags.consistent);
  for (const QARecord& r : subsets.both) {
    CHECK(r.flags.meaningful);
    CHECK(r.flags.consistent);
  }

  CHECK(subsets.get(Subset::all).size() == subsets.all.size());
  CHECK(subsets.get(Subset::both).size() == subsets.both.size());
}

TEST_CASE("qa records survive the JSON round trip") {
  const EntitySet set = form_doc("rt");
  GenerationConfig config;
  config.entities_per_doc = 4;
  Gateway gw = sim_gateway();
  const auto result = generate_for_document(set, config, gw);
  REQUIRE_FALSE(result.records.empty());
  for (const QARecord& r : result.records) {
    const QARecord back = qa_record_from_json(to_json(r));
    CHECK(to_json(back) == to_json(r));
    CHECK(back.spatial.doc_id == r.semantic.doc_id);
  }
}

TEST_CASE("subset names round trip") {
  for (const Subset s : {Subset::all, Subset::meaningful, Subset::consistent, Subset::both}) {
    CHECK(subset_from_string(to_string(s)) == s);
  }
  CHECK_THROWS_AS(subset_from_string("set5"), std::invalid_argument);
}

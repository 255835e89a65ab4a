// Prompt rendering, reply parsing, and backend transport: scripted mock,
// echo oracle, simulator rules, retry budget, and the in-flight cap.
#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "syndoc/backends.hpp"
#include "syndoc/prompts.hpp"

using namespace syndoc;

namespace {

PromptState qa_state(std::string context, std::string target, std::string question,
                     std::vector<std::string> tips = {}) {
  PromptState s;
  s.template_id = tips.empty() ? "no_tips" : (tips.size() == 1 ? "one_tip" : "multi_tips");
  s.slots = {{"context", std::move(context)},
             {"target", std::move(target)},
             {"question", std::move(question)}};
  s.tips = std::move(tips);
  return s;
}

// Counts generate() calls; optionally fails the first n.
class CountingBackend : public Backend {
 public:
  explicit CountingBackend(int fail_first_n = 0) : fail_first_n_(fail_first_n) {}
  std::string id() const override { return "counting"; }
  std::string generate(const PromptState&, const PromptPayload&) override {
    const int n = ++calls_;
    if (n <= fail_first_n_) throw TransportError("induced failure");
    return "Answer: ok";
  }
  int calls() const { return calls_.load(); }

 private:
  std::atomic<int> calls_{0};
  int fail_first_n_;
};

// Tracks the high-water mark of concurrent generate() calls.
class ConcurrencyProbe : public Backend {
 public:
  std::string id() const override { return "probe"; }
  std::string generate(const PromptState&, const PromptPayload&) override {
    const int now = ++active_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active_;
    return "Answer: ok";
  }
  int peak() const { return peak_.load(); }

 private:
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
};

}  // namespace

TEST_CASE("no_tips renders the full protocol text") {
  const PromptPayload p = render_prompt(qa_state("CTX", "TGT", "What is x?"));
  CHECK(p.text ==
        "Above is the context CTX of the target TGT. Please answer the question "
        "'What is x?' based on the context and image. The output format "
        "must strictly follow:\nAnswer: xxx");
  CHECK_FALSE(p.image_ref.has_value());
  CHECK(p.overlay_boxes.empty());
}

TEST_CASE("one_tip consumes the first tip only") {
  PromptState s = qa_state("c", "t", "q?", {"alpha", "beta"});
  s.template_id = "one_tip";
  const PromptPayload p = render_prompt(s);
  // Rank order matters: the single-tip form shows the best candidate.
  CHECK(p.text.find("This is a Tip: 'alpha' (which may not be correct)") != std::string::npos);
  CHECK(p.text.find("beta") == std::string::npos);
}

TEST_CASE("multi_tips renders a numbered list in rank order") {
  const PromptPayload p = render_prompt(qa_state("c", "t", "q?", {"alpha", "beta", "gamma"}));
  CHECK(p.text.find("1. 'alpha'\n2. 'beta'\n3. 'gamma'") != std::string::npos);
}

TEST_CASE("bbox templates append tip locations and carry overlay boxes") {
  PromptState s = qa_state("c", "t", "q?", {"alpha", "beta"});
  s.template_id = "bbox_multi_tips";
  s.tip_boxes = {BBox{10, 20, 30, 40}, BBox{1, 2, 3, 4}};
  const PromptPayload p = render_prompt(s);
  CHECK(p.text.find("'alpha', 'beta'") != std::string::npos);
  CHECK(p.text.find("Tip locations (x0,y0,x1,y1 in 0-1000): [10,20,30,40] [1,2,3,4]") !=
        std::string::npos);
  REQUIRE(p.overlay_boxes.size() == 2);
  CHECK(p.overlay_boxes[0].x_min == 10);
  CHECK(p.overlay_boxes[1].y_max == 4);
}

TEST_CASE("bbox template without boxes appends nothing") {
  PromptState s = qa_state("c", "t", "q?");
  s.template_id = "bbox_no_tips";
  const PromptPayload p = render_prompt(s);
  CHECK(p.text.find("Tip locations") == std::string::npos);
  CHECK(p.overlay_boxes.empty());
}

TEST_CASE("verify_answer keeps its literal output-format braces") {
  PromptState s;
  s.template_id = "verify_answer";
  s.slots = {{"answer", "42"}, {"question", "What is x?"}};
  const PromptPayload p = render_prompt(s);
  // {'Response': ...} is literal protocol text, not a placeholder.
  CHECK(p.text.find("{'Response': 'Yes/No', 'Explanation': 'xxx'}") != std::string::npos);
  CHECK(p.text.find("'42'") != std::string::npos);
}

TEST_CASE("rendering validates template id, slots, and tips") {
  PromptState s;
  s.template_id = "nonexistent";
  CHECK_THROWS_AS(render_prompt(s), PromptError);

  PromptState missing;
  missing.template_id = "no_tips";
  missing.slots = {{"context", "c"}, {"target", "t"}};  // question absent
  CHECK_THROWS_WITH(render_prompt(missing),
                    Catch::Matchers::ContainsSubstring("question"));

  PromptState tipless = qa_state("c", "t", "q?");
  tipless.template_id = "one_tip";
  CHECK_THROWS_AS(render_prompt(tipless), PromptError);
}

TEST_CASE("image_ref flows through to the payload") {
  PromptState s = qa_state("c", "t", "q?");
  s.image_ref = "/tmp/page.pgm";
  CHECK(render_prompt(s).image_ref.value() == "/tmp/page.pgm");
}

TEST_CASE("payload digest is stable and sensitive") {
  const PromptState a = qa_state("ctx", "tgt", "q?");
  const PromptState b = qa_state("ctx", "tgt", "q?");
  CHECK(payload_digest(a) == payload_digest(b));
  CHECK(payload_digest(a).size() == 16);

  PromptState other_tip = a;
  other_tip.tips = {"hint"};
  CHECK(payload_digest(other_tip) != payload_digest(a));

  PromptState other_slot = a;
  other_slot.slots["target"] = "tgt2";
  CHECK(payload_digest(other_slot) != payload_digest(a));

  PromptState other_template = a;
  other_template.template_id = "bbox_no_tips";
  CHECK(payload_digest(other_template) != payload_digest(a));
}

TEST_CASE("digest does not depend on slot insertion order") {
  PromptState a;
  a.template_id = "no_tips";
  a.slots.emplace("context", "c");
  a.slots.emplace("target", "t");
  a.slots.emplace("question", "q");
  PromptState b;
  b.template_id = "no_tips";
  b.slots.emplace("question", "q");
  b.slots.emplace("target", "t");
  b.slots.emplace("context", "c");
  CHECK(payload_digest(a) == payload_digest(b));
}

TEST_CASE("parse_answer takes the text after the last marker") {
  CHECK(parse_answer("Answer: 42") == "42");
  CHECK(parse_answer("Answer: draft\nAnswer:  final  ") == "final");
  CHECK(parse_answer("no marker here") == "no marker here");
  CHECK(parse_answer("  padded  ") == "padded");
  CHECK(parse_answer("") == "");
  CHECK(parse_answer("Answer:") == "");
}

TEST_CASE("parse_yes_no accepts both quote styles and bare verdicts") {
  CHECK(parse_yes_no("{'Response': 'Yes', 'Explanation': 'fine'}"));
  CHECK_FALSE(parse_yes_no("{'Response': 'No', 'Explanation': 'nope'}"));
  CHECK(parse_yes_no("\"Response\": \"Yes\""));
  CHECK_FALSE(parse_yes_no("\"Response\": \"No\""));
  CHECK(parse_yes_no("Yes, that is user input."));
  CHECK_FALSE(parse_yes_no("No."));
  CHECK_FALSE(parse_yes_no("I cannot determine that."));
  CHECK_FALSE(parse_yes_no(""));
}

TEST_CASE("script backend matches exact digest before wildcard") {
  const PromptState s = qa_state("c", "t", "q?");
  const std::string exact = "no_tips:" + payload_digest(s);
  ScriptBackend backend({{exact, {"Answer: exact", 0}},
                         {"no_tips:*", {"Answer: wildcard", 0}}});
  const PromptPayload p = render_prompt(s);
  CHECK(backend.generate(s, p) == "Answer: exact");

  const PromptState other = qa_state("c2", "t2", "q2?");
  CHECK(backend.generate(other, render_prompt(other)) == "Answer: wildcard");

  PromptState unmatched = other;
  unmatched.template_id = "bbox_no_tips";
  CHECK_THROWS_AS(backend.generate(unmatched, render_prompt(unmatched)), TransportError);
}

TEST_CASE("script backend from_json reads strings and fail_first_n objects") {
  const nlohmann::json j = {
      {"no_tips:*", "Answer: plain"},
      {"one_tip:*", {{"reply", "Answer: flaky"}, {"fail_first_n", 1}}},
  };
  auto backend = ScriptBackend::from_json(j);
  const PromptState s = qa_state("c", "t", "q?");
  CHECK(backend->generate(s, render_prompt(s)) == "Answer: plain");

  const PromptState hinted = qa_state("c", "t", "q?", {"h"});
  CHECK_THROWS_AS(backend->generate(hinted, render_prompt(hinted)), TransportError);
  CHECK(backend->generate(hinted, render_prompt(hinted)) == "Answer: flaky");
}

TEST_CASE("echo backend answers the first tip or the vanilla fallback") {
  EchoBackend echo("fallback");
  const PromptState hinted = qa_state("c", "t", "q?", {"tip one", "tip two"});
  CHECK(echo.generate(hinted, render_prompt(hinted)) == "Answer: tip one");
  const PromptState bare = qa_state("c", "t", "q?");
  CHECK(echo.generate(bare, render_prompt(bare)) == "Answer: fallback");
}

TEST_CASE("gateway retries transport failures within budget") {
  auto backend = std::make_shared<CountingBackend>(2);
  Gateway gw(backend, RetryPolicy{3, 0.0});
  const BackendReply r = gw.complete(qa_state("c", "t", "q?"));
  CHECK(r.raw_text == "Answer: ok");
  CHECK(r.attempts == 3);
  CHECK(r.backend_id == "counting");
  CHECK(backend->calls() == 3);
}

TEST_CASE("gateway surfaces failure after the budget is spent") {
  auto backend = std::make_shared<CountingBackend>(10);
  Gateway gw(backend, RetryPolicy{3, 0.0});
  CHECK_THROWS_AS(gw.complete(qa_state("c", "t", "q?")), TransportError);
  CHECK(backend->calls() == 3);
}

TEST_CASE("gateway does not retry prompt errors") {
  auto backend = std::make_shared<CountingBackend>();
  Gateway gw(backend, RetryPolicy{3, 0.0});
  PromptState bad;
  bad.template_id = "nonexistent";
  CHECK_THROWS_AS(gw.complete(bad), PromptError);
  CHECK(backend->calls() == 0);
}

TEST_CASE("gateway validates its construction") {
  CHECK_THROWS_AS(Gateway(nullptr), std::invalid_argument);
  CHECK_THROWS_AS(Gateway(std::make_shared<CountingBackend>(), RetryPolicy{0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("gateway caps in-flight requests") {
  auto probe = std::make_shared<ConcurrencyProbe>();
  Gateway gw(probe, RetryPolicy{1, 0.0}, GatewayLimits{2, 0.0});
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&gw] { gw.complete(qa_state("c", "t", "q?")); });
  }
  for (auto& t : threads) t.join();
  CHECK(probe->peak() <= 2);
  CHECK(probe->peak() >= 1);
}

TEST_CASE("sim backend asks by the preceding label line") {
  SimBackend sim;
  PromptState s;
  s.template_id = "gen_semantic";
  s.slots = {{"context", "Invoice Number:\nINV-001\nTotal Amount:\n$12.50"},
             {"target", "$12.50"}};
  CHECK(sim.generate(s, render_prompt(s)) == "What is the Total Amount?");

  s.slots["target"] = "not in context";
  CHECK(sim.generate(s, render_prompt(s)) == "What is the value \"not in context\"?");
}

TEST_CASE("sim backend converts semantic to spatial questions") {
  SimBackend sim;
  PromptState s;
  s.template_id = "gen_spatial";
  s.slots = {{"question", "What is the Total Amount?"}};
  const std::string reply = sim.generate(s, render_prompt(s));
  CHECK(reply.find("located") != std::string::npos);
  CHECK(reply.find("What is the Total Amount?") != std::string::npos);
}

TEST_CASE("sim backend rejects labels as user input") {
  SimBackend sim;
  PromptState s;
  s.template_id = "verify_user_input";
  s.slots = {{"context", "Invoice Number:\nINV-001"}, {"target", "Invoice Number:"}};
  CHECK_FALSE(parse_yes_no(sim.generate(s, render_prompt(s))));
  s.slots["target"] = "INV-001";
  CHECK(parse_yes_no(sim.generate(s, render_prompt(s))));
}

TEST_CASE("sim backend rejects questions that restate their answer") {
  SimBackend sim;
  PromptState s;
  s.template_id = "verify_answer";
  s.slots = {{"answer", "INV-001"}, {"question", "What is the value \"INV-001\"?"}};
  CHECK_FALSE(parse_yes_no(sim.generate(s, render_prompt(s))));
  s.slots["question"] = "What is the Invoice Number?";
  CHECK(parse_yes_no(sim.generate(s, render_prompt(s))));
}

TEST_CASE("sim backend verdict rates are deterministic in the payload") {
  SimBackend sim({0.5, 0.5});
  PromptState s;
  s.template_id = "verify_answer";
  s.slots = {{"answer", "x"}, {"question", "What is the y?"}};
  const std::string first = sim.generate(s, render_prompt(s));
  for (int i = 0; i < 5; ++i) CHECK(sim.generate(s, render_prompt(s)) == first);

  // Over many distinct payloads, a 0.5 rate must produce both verdicts.
  int yes = 0;
  for (int i = 0; i < 40; ++i) {
    s.slots["answer"] = "x" + std::to_string(i);
    if (parse_yes_no(sim.generate(s, render_prompt(s)))) ++yes;
  }
  CHECK(yes > 5);
  CHECK(yes < 35);
}

TEST_CASE("sim backend follows the first tip when hinted") {
  SimBackend sim;
  const PromptState hinted = qa_state("Label:\nvalue", "doc", "What is the Label?",
                                      {"hinted answer", "worse answer"});
  CHECK(sim.generate(hinted, render_prompt(hinted)) == "Answer: hinted answer");
}

TEST_CASE("sim backend reads the form for label-shaped questions") {
  SimBackend sim;
  const PromptState s =
      qa_state("Customer Name:\nAda Lovelace\nTotal Amount:\n$99.00", "doc",
               "What is the Total Amount?");
  CHECK(sim.generate(s, render_prompt(s)) == "Answer: $99.00");

  // Unknown shapes degrade to a deterministic context line.
  const PromptState odd = qa_state("alpha\nbeta", "doc", "Name the second line");
  const std::string reply = sim.generate(odd, render_prompt(odd));
  CHECK(sim.generate(odd, render_prompt(odd)) == reply);
  CHECK((reply == "Answer: alpha" || reply == "Answer: beta"));
}

TEST_CASE("make_backend builds each flavor and rejects unknown names") {
  CHECK(make_backend("echo", nlohmann::json::object())->id() == "echo");
  CHECK(make_backend("sim", {{"meaningful_yes_rate", 0.9}})->id() == "sim");
  CHECK(make_backend("script", {{"script", {{"no_tips:*", "Answer: hi"}}}})->id() == "script");
  CHECK(make_backend("http", {{"host", "api.example.com"}})->id() == "http:api.example.com");
  CHECK_THROWS_AS(make_backend("llm", nlohmann::json::object()), std::invalid_argument);
}

TEST_CASE("http backend refuses to run without compiled support") {
  // The default build omits SYNDOC_ENABLE_HTTP; the stub must fail loudly
  // instead of silently returning nothing.
  auto backend = make_backend("http", {{"host", "api.example.com"}});
  const PromptState s = qa_state("c", "t", "q?");
  CHECK_THROWS_AS(backend->generate(s, render_prompt(s)), TransportError);
}

#include <random>
#include <set>

#include <gtest/gtest.h>

#include "redteam/method.hpp"
#include "redteam/pipeline.hpp"
#include "redteam/templates.hpp"
#include "test_support.hpp"

using namespace redteam;

namespace {

ErrorKind kind_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no redteam::Error thrown";
    return ErrorKind::ConfigError;
}

std::vector<std::string> corpus_texts() {
    std::vector<std::string> out;
    for (const auto& row : rt_test::load_jsonl(rt_test::fixture("corpus_50.jsonl"))) out.push_back(row["text"]);
    return out;
}

// Adjacent token pairs of `prompt` that occur verbatim in `haystack`.
std::vector<std::string> surviving_bigrams(const std::string& prompt, const std::string& haystack) {
    const auto words = split_words(prompt);
    std::vector<std::string> hits;
    for (std::size_t i = 0; i + 1 < words.size(); ++i) {
        const std::string bigram = words[i] + " " + words[i + 1];
        if (haystack.find(bigram) != std::string::npos) hits.push_back(bigram);
    }
    return hits;
}

}  // namespace

TEST(Templates, ShippedFileMatchesBuiltin) {
    EXPECT_EQ(read_file(rt_test::source_path("templates/default-v1.tmpl").string()),
              std::string(kBuiltinDirectiveSource));
    EXPECT_EQ(read_file(rt_test::source_path("templates/authority-v1.tmpl").string()),
              std::string(kBuiltinAuthoritySource));
}

TEST(Templates, StoreLoadsDirectoryAndReportsMissing) {
    const TemplateStore store(rt_test::source_path("templates"));
    EXPECT_TRUE(store.contains("default-v1"));
    EXPECT_TRUE(store.contains("authority-v1"));
    EXPECT_EQ(kind_of([&] { store.directive("nope"); }), ErrorKind::TemplateNotFound);
    EXPECT_EQ(kind_of([] { TemplateStore("/nonexistent/dir"); }), ErrorKind::TemplateNotFound);
}

TEST(Templates, ParseValidation) {
    EXPECT_EQ(kind_of([] { DirectiveTemplate::parse("x", "@@payload\n{EVEN_STREAM}\n{ENCODED_ODD}\n"); }),
              ErrorKind::TemplateMalformed);
    EXPECT_EQ(kind_of([] {
                  DirectiveTemplate::parse("x", "@@payload\n{EVEN_STREAM}\n{EVEN_STREAM}\n{ENCODED_ODD}\nend\n"
                                                "@@directive\n{PAYLOAD}");
              }),
              ErrorKind::TemplateMalformed);
    EXPECT_EQ(kind_of([] {
                  DirectiveTemplate::parse("x", "@@payload\n{EVEN_STREAM} {ENCODED_ODD}\n@@directive\n{PAYLOAD}");
              }),
              ErrorKind::TemplateMalformed);
    EXPECT_EQ(kind_of([] {
                  DirectiveTemplate::parse("x", "@@payload\n{EVEN_STREAM}\n{ENCODED_ODD}\n@@directive\nno slot");
              }),
              ErrorKind::TemplateMalformed);
    EXPECT_NO_THROW(DirectiveTemplate::parse("x", "@@payload\nA:\n{EVEN_STREAM}\nB:\n{ENCODED_ODD}\n.\n"
                                                  "@@directive\nBEGIN\n{PAYLOAD}\nEND"));
}

TEST(Templates, RenderRejectsUnboundPlaceholder) {
    EXPECT_EQ(render(split_template("Hi {NAME}"), {{"NAME", "there"}}), "Hi there");
    EXPECT_EQ(kind_of([] { render(split_template("Hi {NAME}"), {}); }), ErrorKind::TemplateMalformed);
}

TEST(Pipeline, PresetsHaveExpectedLayers) {
    const auto full = make_preset("full");
    ASSERT_TRUE(full.inner_layer && full.outer_layer);
    EXPECT_EQ(full.inner_layer->kind(), CipherKind::Rot13);
    EXPECT_EQ(full.outer_layer->kind(), CipherKind::Vigenere);
    EXPECT_EQ(full.outer_layer->keyword(), "LANTERN");
    EXPECT_TRUE(full.splitting_enabled);

    const auto swapped = make_preset("full", "LANTERN", LayerAssignment::VigenereInnerRot13Outer);
    EXPECT_EQ(swapped.inner_layer->kind(), CipherKind::Vigenere);
    EXPECT_EQ(swapped.outer_layer->kind(), CipherKind::Rot13);
    EXPECT_NE(swapped.fingerprint(), full.fingerprint());

    const auto split_only = make_preset("splitting_only");
    EXPECT_FALSE(split_only.inner_layer);
    EXPECT_FALSE(split_only.outer_layer);
    EXPECT_TRUE(split_only.splitting_enabled);
    EXPECT_FALSE(make_preset("vigenere_only").splitting_enabled);

    EXPECT_EQ(kind_of([] { make_preset("everything"); }), ErrorKind::ConfigError);
    EXPECT_EQ(kPresetNames.size(), 7u);
}

TEST(Pipeline, FingerprintIgnoresName) {
    auto a = make_preset("full");
    auto b = a;
    b.name = "renamed";
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    b.splitting_enabled = false;
    EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Pipeline, SixTokenFixtureRoundTrips) {
    const std::string prompt = "bake a layered chocolate cake quickly";
    for (auto name : kPresetNames) {
        const auto cfg = make_preset(name);
        EXPECT_EQ(oracle_decode(generate(prompt, cfg), cfg), prompt) << name;
    }
}

TEST(Pipeline, NamedFixtureHasNoContiguousBigram) {
    const std::string prompt = "bake a layered chocolate cake quickly";
    const auto q = generate(prompt, make_preset("full"));
    EXPECT_TRUE(surviving_bigrams(prompt, q.text).empty());
}

TEST(Pipeline, SingletonPrompt) {
    const auto cfg = make_preset("full");
    EXPECT_EQ(oracle_decode(generate("hello", cfg), cfg), "hello");
}

TEST(Pipeline, EmptyPromptRejected) {
    EXPECT_EQ(kind_of([] { generate("   ", make_preset("full")); }), ErrorKind::EmptyPrompt);
}

TEST(Pipeline, AllLayersDisabledWrapsRawPrompt) {
    TransformConfig cfg;
    cfg.splitting_enabled = false;
    const std::string prompt = "Describe a quiet pine forest trail.";
    const auto q = generate(prompt, cfg);
    EXPECT_NE(q.text.find("\n" + prompt + "\n"), std::string::npos);
    EXPECT_EQ(oracle_decode(q, cfg), prompt);
}

TEST(Pipeline, PayloadIsCipheredUnderFullPreset) {
    const std::string prompt = "Explain how tulip bulbs survive winter underground";
    const auto q = generate(prompt, make_preset("full"));
    for (const auto& w : split_words(prompt)) {
        if (w.size() > 3) {
            EXPECT_EQ(q.text.find(w), std::string::npos) << w;
        }
    }
    EXPECT_NE(q.text.find("LANTERN"), std::string::npos);
}

TEST(Pipeline, DeterministicAndInjectiveOnCorpus) {
    const auto cfg = make_preset("full");
    std::set<std::string> seen;
    for (const auto& text : corpus_texts()) {
        const auto a = generate(text, cfg);
        const auto b = generate(text, cfg);
        EXPECT_EQ(a.text, b.text);
        EXPECT_EQ(a.config_fingerprint, cfg.fingerprint());
        EXPECT_EQ(a.source_fingerprint, fingerprint(text));
        seen.insert(a.text);
    }
    EXPECT_EQ(seen.size(), corpus_texts().size());
}

TEST(Pipeline, CorpusRoundTripsUnderEveryPresetAndAssignment) {
    const auto texts = corpus_texts();
    for (auto assignment : {LayerAssignment::Rot13InnerVigenereOuter, LayerAssignment::VigenereInnerRot13Outer}) {
        for (auto name : kPresetNames) {
            const auto cfg = make_preset(name, "BEACON", assignment);
            for (const auto& t : texts) ASSERT_EQ(oracle_decode(generate(t, cfg), cfg), t) << name;
        }
    }
}

TEST(Pipeline, CorpusPayloadKeepsNoBigramUnderFullPreset) {
    const auto cfg = make_preset("full");
    const auto& tmpl = TemplateStore::builtin().directive(cfg.directive_template);
    std::string prefix;
    for (const auto& seg : redteam::bind(tmpl.directive, config_placeholders(cfg))) {
        if (seg.placeholder) break;
        prefix += seg.text;
    }
    for (const auto& t : corpus_texts()) {
        const auto q = generate(t, cfg);
        const std::string payload = q.text.substr(prefix.size());
        EXPECT_TRUE(surviving_bigrams(t, payload).empty()) << t;
    }
}

TEST(Pipeline, WrongKeyOrCorruptionIsDetected) {
    const std::string prompt = "Give three tips for building a birdhouse from scrap cedar.";
    const auto q = generate(prompt, make_preset("full"));
    const auto wrong = make_preset("full", "WRONGKEY");
    try {
        EXPECT_NE(oracle_decode(q, wrong), prompt);
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::DecodeStructureError || e.kind() == ErrorKind::MalformedPartition);
    }
    std::string broken = q.text;
    broken.erase(broken.size() - 3);
    EXPECT_EQ(kind_of([&] { oracle_decode(broken, make_preset("full")); }), ErrorKind::DecodeStructureError);
}

TEST(Pipeline, StreamsWithLineBreaksRejected) {
    TokenSequence even;
    even.tokens = {"a"};
    EXPECT_EQ(kind_of([&] { assemble_prompt(even, "x\ny", make_preset("full")); }), ErrorKind::InvalidArgument);
}

TEST(Pipeline, CustomTemplateFromStore) {
    TemplateStore store;
    store.add("mini", "@@payload\nA:\n{EVEN_STREAM}\nB ({INNER_LAYER_NAME}):\n{ENCODED_ODD}\n.\n"
                      "@@directive\n{OUTER_STEP}\n<<\n{PAYLOAD}\n>>");
    auto cfg = make_preset("full");
    cfg.directive_template = "mini";
    const auto q = generate("plant the tulip bulbs in autumn", cfg, store);
    EXPECT_TRUE(q.text.starts_with("Decrypt it with the Vigenere key LANTERN"));
    EXPECT_EQ(oracle_decode(q, cfg, store), "plant the tulip bulbs in autumn");
    cfg.directive_template = "absent";
    EXPECT_EQ(kind_of([&] { generate("x y", cfg, store); }), ErrorKind::TemplateNotFound);
}

TEST(Method, VariantDispatch) {
    const Method preset = make_preset("no_rot13");
    EXPECT_EQ(method_name(preset), "no_rot13");
    EXPECT_EQ(method_label(preset), "No ROT13 (Vig+Split)");
    const auto q = transform("water the meadow", preset);
    EXPECT_EQ(invert(q.text, preset), "water the meadow");
    EXPECT_FALSE(invert("garbage", preset));

    const Method base = BaselineSpec{.kind = BaselineKind::Base64Raw};
    EXPECT_EQ(method_name(base), "base64_raw");
    EXPECT_EQ(invert(transform("water the meadow", base).text, base), "water the meadow");
}

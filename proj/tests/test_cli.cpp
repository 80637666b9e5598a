#include <doctest.h>

#include <set>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "tutoreval/cli.hpp"
#include "tutoreval/corpus.hpp"
#include "tutoreval/external_scores.hpp"

using namespace tutoreval;
using nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "tutoreval");
    std::ostringstream out;
    std::ostringstream err;
    Outcome o;
    o.code = cli::run(args, out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string mini() { return testing::fixture("mini.json").string(); }

std::set<std::string> conversation_ids(const std::filesystem::path& path) {
    std::set<std::string> ids;
    for (const auto& c : corpus::load_dataset(path).conversations) ids.insert(c.id);
    return ids;
}

/// 10000 responses on track 1, 8313 of them Yes and the rest split across No and To some extent.
corpus::Dataset yes_share_dataset() {
    auto d = testing::make_dataset(2000, 5);
    std::size_t k = 0;
    for (auto& c : d.conversations) {
        for (auto& r : c.responses) {
            Ternary label = Ternary::Yes;
            if (k >= 8313) label = (k % 2 == 0) ? Ternary::No : Ternary::ToSomeExtent;
            r.annotations[Dimension::MistakeIdentification] = label;
            ++k;
        }
    }
    return d;
}

}  // namespace

TEST_CASE("split writes disjoint files covering the input") {
    testing::TempDir dir("cli_split");
    const auto o = invoke({"split", "--input", mini(), "--ratio", "0.5", "--seed", "7", "--train-out",
                           (dir / "train.json").string(), "--dev-out", (dir / "dev.json").string()});
    REQUIRE(o.code == 0);
    CHECK(o.out.find("train: 3 conversations") != std::string::npos);
    const auto train = conversation_ids(dir / "train.json");
    const auto dev = conversation_ids(dir / "dev.json");
    CHECK(train.size() == 3);
    CHECK(dev.size() == 3);
    for (const auto& id : train) CHECK_FALSE(dev.contains(id));

    testing::TempDir again("cli_split_again");
    invoke({"split", "--input", mini(), "--ratio", "0.5", "--seed", "7", "--train-out",
            (again / "train.json").string(), "--dev-out", (again / "dev.json").string()});
    CHECK(testing::read_file(again / "train.json") == testing::read_file(dir / "train.json"));

    const auto copy = dir / "copy.json";
    std::filesystem::copy_file(mini(), copy);
    REQUIRE(invoke({"split", "--input", copy.string()}).code == 0);
    CHECK(std::filesystem::exists(dir / "copy.train.json"));
    CHECK(std::filesystem::exists(dir / "copy.dev.json"));
}

TEST_CASE("always-yes baseline closed form through the CLI") {
    testing::TempDir dir("cli_baseline");
    corpus::save_dataset(yes_share_dataset(), dir / "gold.json");
    const auto o = invoke({"baseline", "--gold", (dir / "gold.json").string(), "--track", "1"});
    REQUIRE(o.code == 0);
    CHECK(o.out.find("Always Yes |    30.26 |    83.13") != std::string::npos);

    const auto j = invoke({"baseline", "--gold", (dir / "gold.json").string(), "--track", "1", "--json"});
    const auto doc = json::parse(j.out);
    CHECK(doc.at("accuracy").get<double>() == doctest::Approx(83.13));
    CHECK(doc.at("macro_f1").get<double>() == doctest::Approx(100.0 * (2 * 0.8313 / 1.8313) / 3.0));

    const auto r1 = invoke({"baseline", "--kind", "random", "--gold", mini(), "--track", "5", "--seed", "3"});
    const auto r2 = invoke({"baseline", "--kind", "random", "--gold", mini(), "--track", "5", "--seed", "3"});
    CHECK(r1.code == 0);
    CHECK(r1.out == r2.out);
    CHECK(invoke({"baseline", "--gold", mini(), "--track", "5"}).code == 1);
    CHECK(invoke({"baseline", "--kind", "oracle", "--gold", mini(), "--track", "1"}).code == 1);
}

TEST_CASE("stats") {
    const auto o = invoke({"stats", "--input", mini(), "--track", "1", "--json"});
    REQUIRE(o.code == 0);
    CHECK_FALSE(json::parse(o.out).empty());
    CHECK(invoke({"stats", "--input", mini()}).code == 0);
}

TEST_CASE("probability rules on track 4") {
    testing::TempDir dir("cli_rules");
    const auto data = corpus::load_dataset(mini());
    std::vector<scores::ScoreRecord> recs;
    for (const auto& c : data.conversations) {
        for (const auto& r : c.responses) {
            thresholds::ClassProbabilities p{0.2, 0.2, 0.6};
            const auto g = r.label(Dimension::Actionability);
            if (g == Ternary::Yes) p = {0.9, 0.05, 0.05};
            if (g == Ternary::No) p = {0.05, 0.9, 0.05};
            recs.push_back({r.id, "llm", std::nullopt, p, std::nullopt});
        }
    }
    scores::write_scores(recs, dir / "probs.jsonl");

    const auto o = invoke({"rules", "--scores", (dir / "probs.jsonl").string(), "--gold", mini(), "--track", "4",
                           "--out", (dir / "pred.jsonl").string(), "--json", "--stats"});
    REQUIRE(o.code == 0);
    const auto doc = json::parse(o.out);
    CHECK(doc.at("report").at("macro_f1").get<double>() == doctest::Approx(100.0));
    CHECK(doc.at("stats").at("Yes").at("yes").get<double>() == doctest::Approx(0.9));
    CHECK(scores::read_predictions(dir / "pred.jsonl").size() == 18);

    const auto ev = invoke({"evaluate", "--gold", mini(), "--pred", (dir / "pred.jsonl").string(), "--track", "4"});
    CHECK(ev.code == 0);
    CHECK(ev.out.find("100.00 |   100.00") != std::string::npos);

    const auto bundled = std::filesystem::path(TUTOREVAL_DATA) / "rules_default.json";
    const auto with_table = invoke({"rules", "--table", bundled.string(), "--scores", (dir / "probs.jsonl").string(),
                                    "--track", "4"});
    REQUIRE(with_table.code == 0);
    std::istringstream lines(with_table.out);
    CHECK(scores::parse_predictions(lines).size() == 18);

    CHECK(invoke({"rules", "--scores", (dir / "probs.jsonl").string(), "--track", "5"}).code == 1);
    testing::write_file(dir / "overlap.json",
                        R"({"actionability": {"yes": {"p_yes_gt": 0.3}, "no": {"p_yes_lt": 0.6, "p_no_gt": 0.5}}})");
    CHECK(invoke({"rules", "--table", (dir / "overlap.json").string(), "--scores", (dir / "probs.jsonl").string(),
                  "--track", "4"})
              .code == 1);
}

TEST_CASE("train, predict and evaluate close the loop") {
    testing::TempDir dir("cli_train");
    const auto model = (dir / "model.json").string();
    const auto pred = (dir / "pred.jsonl").string();
    for (const auto& backend : {"knn", "forest", "softmax", "gbt", "svm"}) {
        CAPTURE(backend);
        REQUIRE(invoke({"train", "--data", mini(), "--track", "1", "--backend", backend, "--k", "1", "--seed", "5",
                        "--model-out", model})
                    .code == 0);
        const auto first = testing::read_file(model);
        REQUIRE(invoke({"train", "--data", mini(), "--track", "1", "--backend", backend, "--k", "1", "--seed", "5",
                        "--model-out", model})
                    .code == 0);
        CHECK(testing::read_file(model) == first);

        REQUIRE(invoke({"predict", "--model", model, "--data", mini(), "--out", pred}).code == 0);
        CHECK(scores::read_predictions(pred).size() == 18);
        const auto ev = invoke({"evaluate", "--gold", mini(), "--pred", pred, "--track", "1", "--json"});
        REQUIRE(ev.code == 0);
        const auto acc = json::parse(ev.out).at("accuracy").get<double>();
        CHECK(acc >= 0.0);
        CHECK(acc <= 100.0);
    }

    // Response texts repeat across conversations with different labels; the history makes each input unique.
    REQUIRE(invoke({"train", "--data", mini(), "--track", "1", "--backend", "knn", "--k", "1", "--text-mode",
                    "history", "--model-out", model})
                .code == 0);
    invoke({"predict", "--model", model, "--data", mini(), "--out", pred});
    const auto ev = invoke({"evaluate", "--gold", mini(), "--pred", pred, "--track", "1", "--json"});
    CHECK(json::parse(ev.out).at("accuracy").get<double>() == doctest::Approx(100.0));

    SUBCASE("track 5 with overrides") {
        REQUIRE(invoke({"train", "--data", mini(), "--track", "5", "--backend", "forest", "--model-out", model})
                    .code == 0);
        const auto out = invoke({"predict", "--model", model, "--data", mini()});
        REQUIRE(out.code == 0);
        std::istringstream lines(out.out);
        const auto preds = scores::parse_predictions(lines);
        CHECK(preds.size() == 18);
        CHECK(preds[0].track == 5);
        testing::write_file(dir / "force.json", R"({"Sonnet": "Expert", "Novice": "Expert", "Expert": "Expert", "Mistral": "Expert"})");
        const auto forced = invoke({"predict", "--model", model, "--data", mini(), "--overrides", (dir / "force.json").string()});
        std::istringstream flines(forced.out);
        for (const auto& p : scores::parse_predictions(flines)) CHECK(p.prediction == "Expert");
    }
    SUBCASE("lenient evaluation is undefined on track 5") {
        REQUIRE(invoke({"train", "--data", mini(), "--track", "5", "--backend", "knn", "--model-out", model}).code == 0);
        invoke({"predict", "--model", model, "--data", mini(), "--out", pred});
        CHECK(invoke({"evaluate", "--gold", mini(), "--pred", pred, "--track", "5", "--mode", "lenient"}).code == 1);
        CHECK(invoke({"evaluate", "--gold", mini(), "--pred", pred, "--track", "1"}).code == 1);
    }
}

TEST_CASE("embedding features from score files") {
    testing::TempDir dir("cli_embed");
    const auto data = corpus::load_dataset(mini());
    std::vector<scores::ScoreRecord> recs;
    double x = 0.0;
    for (const auto& c : data.conversations) {
        for (const auto& r : c.responses) {
            recs.push_back({r.id, "enc", std::vector<double>{x, 1.0 - x, 0.5}, std::nullopt, std::nullopt});
            x += 0.05;
        }
    }
    scores::write_scores(recs, dir / "emb.jsonl");
    const auto model = (dir / "model.json").string();
    REQUIRE(invoke({"train", "--data", mini(), "--track", "2", "--features", "embedding", "--embeddings",
                    (dir / "emb.jsonl").string(), "--backend", "knn", "--k", "1", "--model-out", model})
                .code == 0);
    const auto out = invoke({"predict", "--model", model, "--data", mini(), "--embeddings", (dir / "emb.jsonl").string()});
    REQUIRE(out.code == 0);
    CHECK(invoke({"predict", "--model", model, "--data", mini()}).code == 1);

    recs.pop_back();
    scores::write_scores(recs, dir / "short.jsonl");
    const auto missing = invoke({"predict", "--model", model, "--data", mini(), "--embeddings", (dir / "short.jsonl").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("c5_r2") != std::string::npos);
}

TEST_CASE("logit calibration") {
    testing::TempDir dir("cli_cal");
    const auto data = corpus::load_dataset(mini());
    std::vector<scores::ScoreRecord> recs;
    for (const auto& c : data.conversations) {
        for (const auto& r : c.responses) {
            const auto g = *r.label(Dimension::MistakeIdentification);
            const double logit = g == Ternary::Yes ? 0.7 : g == Ternary::No ? -0.7 : 0.0;
            recs.push_back({r.id, "llm", std::nullopt, std::nullopt, logit});
        }
    }
    scores::write_scores(recs, dir / "logits.jsonl");
    const auto o = invoke({"calibrate", "--scores", (dir / "logits.jsonl").string(), "--gold", mini(), "--track", "1",
                           "--out", (dir / "th.json").string(), "--pred-out", (dir / "pred.jsonl").string(), "--json"});
    REQUIRE(o.code == 0);
    const auto doc = json::parse(o.out);
    CHECK(doc.at("score").get<double>() == doctest::Approx(100.0));
    const auto th = json::parse(testing::read_file(dir / "th.json"));
    CHECK(th.at("t_low").get<double>() < 0.0);
    CHECK(th.at("t_high").get<double>() <= 0.7);
    CHECK(scores::read_predictions(dir / "pred.jsonl").size() == 18);
    CHECK(invoke({"calibrate", "--scores", (dir / "logits.jsonl").string(), "--gold", mini(), "--track", "1",
                  "--step", "0"})
              .code == 1);
}

TEST_CASE("quartile and delta") {
    const auto q = invoke({"quartile", "--rank", "56", "--total", "153"});
    CHECK(q.code == 0);
    CHECK(q.out == "Q2\n");
    CHECK(invoke({"quartile", "--rank", "0", "--total", "5"}).code == 1);

    const auto d = invoke({"delta", "--ours", "f1=65.35", "--winner", "f1=71.81"});
    CHECK(d.code == 0);
    CHECK(d.out.find("= 6.46") != std::string::npos);
    const auto dj = invoke({"delta", "--ours", "f1=65.35", "--winner", "f1=71.81", "--json"});
    CHECK(dj.out.find("6.46") != std::string::npos);
    CHECK(invoke({"delta", "--ours", "f1", "--winner", "f1=71.81"}).code == 1);
    CHECK(invoke({"delta", "--ours", "f1=6x", "--winner", "f1=71.81"}).code == 1);
    CHECK(invoke({"delta", "--ours", "f1=1", "--winner", "acc=2"}).code == 1);
}

TEST_CASE("exit codes and usage") {
    const auto help = invoke({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("train") != std::string::npos);
    CHECK(invoke({"train", "--help"}).code == 0);

    const auto unknown_flag = invoke({"train", "--data", mini(), "--track", "1", "--model-out", "x", "--bogus"});
    CHECK(unknown_flag.code == 1);
    CHECK(unknown_flag.err.find("error:") != std::string::npos);
    CHECK(unknown_flag.err.find("--model-out") != std::string::npos);

    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"quartile", "--rank", "3"}).code == 1);
    CHECK(invoke({"stats", "--input", "/nonexistent/data.json"}).code == 2);
    CHECK(invoke({"evaluate", "--gold", mini(), "--pred", "/nonexistent/p.jsonl", "--track", "1"}).code == 2);
    CHECK(invoke({"evaluate", "--gold", mini(), "--pred", mini(), "--track", "1", "--mode", "fuzzy"}).code == 1);
    CHECK(invoke({"train", "--data", mini(), "--track", "9", "--model-out", "x"}).code == 1);

    testing::TempDir dir("cli_bad");
    testing::write_file(dir / "broken.json", "{\"conversations\": [");
    CHECK(invoke({"stats", "--input", (dir / "broken.json").string()}).code == 1);
    const auto no_dir = (dir / "missing" / "model.json").string();
    CHECK(invoke({"train", "--data", mini(), "--track", "1", "--model-out", no_dir}).code == 2);
}

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "falldef/error.hpp"
#include "falldef/metrics.hpp"
#include "oracles.hpp"

using namespace falldef;

namespace {

std::vector<Label> labels_from(const std::string& bits) {
  std::vector<Label> out;
  for (char c : bits) out.push_back(c == '1' ? Label::Fall : Label::NonFall);
  return out;
}

std::vector<Label> random_labels(Rng& rng, std::size_t n, double p_fall) {
  std::vector<Label> out(n);
  for (auto& l : out) l = rng.uniform() < p_fall ? Label::Fall : Label::NonFall;
  return out;
}

}  // namespace

TEST_SUITE("confusion") {
  TEST_CASE("perfect predictions") {
    auto y = labels_from("1110000000");
    ConfusionMatrix cm = confusion(y, y);
    CHECK(cm == ConfusionMatrix{3, 0, 7, 0});
  }

  TEST_CASE("all false alarms") {
    CHECK(confusion(labels_from("11111"), labels_from("00000")) == ConfusionMatrix{0, 5, 0, 0});
  }

  TEST_CASE("random pairs equal a four-counter loop") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      auto p = random_labels(rng, 1000, 0.3), y = random_labels(rng, 1000, 0.4);
      auto c = oracle::brute_confusion(p, y);
      CHECK(confusion(p, y) == ConfusionMatrix{c.tp, c.fp, c.tn, c.fn});
    }
  }

  TEST_CASE("non-fall as positive swaps the counts") {
    Rng rng(2);
    auto p = random_labels(rng, 300, 0.5), y = random_labels(rng, 300, 0.5);
    CHECK(confusion(p, y, Label::NonFall) == confusion(p, y).swapped());
  }

  TEST_CASE("length mismatch and empty input") {
    CHECK_THROWS_AS(confusion(labels_from("10"), labels_from("1")), Error);
    CHECK_THROWS_AS(confusion({}, {}), Error);
  }
}

TEST_SUITE("ratios") {
  TEST_CASE("zero denominators give zero") {
    CHECK(precision(0, 0) == 0.0);
    CHECK(recall(0, 0) == 0.0);
    CHECK(f1_score(0.0, 0.0) == 0.0);
    CHECK(accuracy(ConfusionMatrix{}) == 0.0);
  }

  TEST_CASE("balanced confusion") {
    CHECK(accuracy(ConfusionMatrix{1, 1, 1, 1}) == 0.5);
    CHECK(precision(3, 1) == 0.75);
    CHECK(recall(1, 3) == 0.25);
    CHECK(f1_score(0.75, 0.25) == doctest::Approx(0.375));
  }
}

TEST_SUITE("report") {
  TEST_CASE("perfect predictions") {
    auto y = labels_from("110100");
    EvalReport r = report(y, y);
    CHECK(r.accuracy == 1.0);
    for (const auto* m : {&r.fall, &r.non_fall, &r.weighted_avg}) {
      CHECK(m->precision == 1.0);
      CHECK(m->recall == 1.0);
      CHECK(m->f1 == 1.0);
    }
    CHECK(r.weighted_avg.support == 6);
  }

  TEST_CASE("reference weighted averages") {
    const ClassMetrics set1[] = {{0.995, 0.922, 0.0, 15733}, {0.530, 0.953, 0.0, 1456}};
    CHECK(std::abs(weighted_average(set1).precision - 0.956) <= 0.002);
    CHECK(std::abs(weighted_average(set1).recall - 0.924) <= 0.002);
    CHECK(weighted_average(set1).support == 17189);
    const ClassMetrics set2[] = {{0.998, 0.964, 0.0, 87769}, {0.493, 0.949, 0.0, 3216}};
    CHECK(std::abs(weighted_average(set2).precision - 0.980) <= 0.001);
    CHECK(std::abs(weighted_average(set2).recall - 0.964) <= 0.001);
  }

  TEST_CASE("swapping the positive class keeps accuracy and weighted averages") {
    Rng rng(8);
    auto p = random_labels(rng, 120, 0.3), y = random_labels(rng, 120, 0.6);
    const ConfusionMatrix cm = confusion(p, y);
    const EvalReport a = report_from_confusion(cm), b = report_from_confusion(cm.swapped());
    CHECK(a.fall == b.non_fall);
    CHECK(a.non_fall == b.fall);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.weighted_avg.precision == doctest::Approx(b.weighted_avg.precision).epsilon(1e-15));
    CHECK(a.accuracy * static_cast<double>(cm.total()) == doctest::Approx(static_cast<double>(cm.tp + cm.tn)));
  }

  TEST_CASE("random predictions equal a per-field recomputation") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      auto p = random_labels(rng, 200, rng.uniform()), y = random_labels(rng, 200, rng.uniform());
      EvalReport r = report(p, y);
      auto c = oracle::brute_confusion(p, y);
      auto ratio = [](std::uint64_t a, std::uint64_t b) {
        return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
      };
      auto f1 = [](double pr, double rc) { return pr + rc == 0 ? 0.0 : 2 * pr * rc / (pr + rc); };
      const double fp = ratio(c.tp, c.tp + c.fp), fr = ratio(c.tp, c.tp + c.fn);
      const double np = ratio(c.tn, c.tn + c.fn), nr = ratio(c.tn, c.tn + c.fp);
      CHECK(r.fall.precision == fp);
      CHECK(r.fall.recall == fr);
      CHECK(r.fall.f1 == f1(fp, fr));
      CHECK(r.non_fall.precision == np);
      CHECK(r.non_fall.recall == nr);
      CHECK(r.fall.support == c.tp + c.fn);
      CHECK(r.non_fall.support == c.tn + c.fp);
      const double nf = static_cast<double>(c.tn + c.fp), fa = static_cast<double>(c.tp + c.fn);
      CHECK(r.weighted_avg.precision == (nf * np + fa * fp) / 200.0);
      CHECK(r.weighted_avg.recall == (nf * nr + fa * fr) / 200.0);
      CHECK(r.accuracy == ratio(c.tp + c.tn, 200));
    }
  }
}

TEST_SUITE("emit_report") {
  TEST_CASE("emit then parse") {
    Rng rng(4);
    auto p = random_labels(rng, 97, 0.4), y = random_labels(rng, 97, 0.5);
    EvalReport r = report(p, y);
    std::vector<EpochRecord> log{{1, 0.69, 0.6, 0.55}, {2, 0.4, 0.35, 0.8}};
    std::stringstream a, b;
    emit_report(r, log, a, R"({"seed":5})");
    emit_report(r, log, b, R"({"seed":5})");
    CHECK(a.str() == b.str());
    CHECK(a.str().find("\"accuracy\"") != std::string::npos);
    EmittedReport back = parse_report(a);
    CHECK(back.report == r);
    CHECK(back.epoch_log == log);
    CHECK(back.config == R"({"seed":5})");
  }

  TEST_CASE("file output") {
    auto y = labels_from("1001");
    const auto path = std::filesystem::temp_directory_path() / "falldef_test_report.json";
    emit_report(report(y, y), {}, path);
    std::ifstream f(path);
    CHECK(parse_report(f).report.accuracy == 1.0);
  }

  TEST_CASE("zero instances are refused") {
    std::stringstream s;
    CHECK_THROWS_AS(emit_report(EvalReport{}, {}, s), Error);
  }

  TEST_CASE("table mentions accuracy") {
    auto y = labels_from("10");
    const std::string t = format_report_table(report(y, y));
    CHECK(t.find("accuracy") != std::string::npos);
    CHECK(t.find("weighted avg.") != std::string::npos);
  }
}

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "doctest.h"
#include "falldef/dataset.hpp"
#include "falldef/error.hpp"
#include "falldef/synthetic.hpp"
#include "falldef/training.hpp"
#include "oracles.hpp"

using namespace falldef;

namespace {

DgruModel tiny_model(std::uint64_t seed, std::size_t hidden = 4, std::size_t window = 6) {
  DgruArch a;
  a.hidden_dims = {hidden};
  a.head_dim = hidden;
  a.window_size = window;
  Rng rng(seed);
  return make_model(a, rng);
}

std::vector<WindowInstance> random_instances(Rng& rng, std::size_t n, std::size_t window) {
  std::vector<WindowInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    WindowInstance w;
    w.values = oracle::random_window(rng, window, 3);
    w.label = i % 2 ? Label::Fall : Label::NonFall;
    if (w.label == Label::Fall)
      for (std::size_t r = 0; r < window; ++r) w.values(r, 0) += 2.0;
    out.push_back(std::move(w));
  }
  return out;
}

void fill(DgruParams& p, double v) {
  for (auto& ref : parameter_list(p))
    for (double& x : ref.values) x = v;
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("zero gradients leave parameters unchanged") {
    DgruModel m = tiny_model(1);
    const DgruParams before = m.params;
    OptimizerState st = make_optimizer_state(m.params);
    adam_step(m.params, zeros_like(m.params), st, 1e-3, 5.0);
    CHECK(m.params == before);
    CHECK(st.step == 1);
  }

  TEST_CASE("first Adam step moves a parameter by about lr") {
    DgruModel m = tiny_model(2);
    const DgruParams before = m.params;
    Gradients g = zeros_like(m.params);
    g.head.b2[0] = 1.0;
    OptimizerState st = make_optimizer_state(m.params);
    const double lr = 1e-4;
    adam_step(m.params, g, st, lr, 0.0);
    CHECK(std::abs((before.head.b2[0] - m.params.head.b2[0]) - lr) <= 1e-9);
    CHECK(m.params.head.b2[1] == before.head.b2[1]);
  }

  TEST_CASE("Adam matches a scalar recurrence over several steps") {
    DgruModel m = tiny_model(3);
    OptimizerState st = make_optimizer_state(m.params);
    double p = m.params.head.b1[1], mm = 0, vv = 0;
    const double grads[] = {0.3, -1.2, 0.05, 2.0, -0.7};
    for (int t = 1; t <= 5; ++t) {
      Gradients g = zeros_like(m.params);
      g.head.b1[1] = grads[t - 1];
      adam_step(m.params, g, st, 0.01, 0.0);
      mm = 0.9 * mm + 0.1 * grads[t - 1];
      vv = 0.999 * vv + 0.001 * grads[t - 1] * grads[t - 1];
      p -= 0.01 * (mm / (1 - std::pow(0.9, t))) / (std::sqrt(vv / (1 - std::pow(0.999, t))) + 1e-8);
      CHECK(std::abs(m.params.head.b1[1] - p) <= 1e-15);
    }
  }

  TEST_CASE("clipping rescales to the max norm") {
    DgruModel m = tiny_model(4);
    Gradients g = zeros_like(m.params);
    fill(g, 1.0);
    const double n0 = gradient_norm(g);
    for (auto& ref : parameter_list(g))
      for (double& x : ref.values) x *= 50.0 / n0;
    CHECK(std::abs(gradient_norm(g) - 50.0) <= 1e-12);
    const double reported = clip_gradients(g, 5.0);
    CHECK(std::abs(reported - 50.0) <= 1e-12);
    CHECK(std::abs(gradient_norm(g) - 5.0) <= 1e-12);
    Gradients small = zeros_like(m.params);
    small.head.b2[0] = 0.5;
    clip_gradients(small, 5.0);
    CHECK(small.head.b2[0] == 0.5);
  }

  TEST_CASE("non-finite gradient names the parameter") {
    DgruModel m = tiny_model(5);
    Gradients g = zeros_like(m.params);
    g.layers[0].Uh(1, 2) = std::numeric_limits<double>::quiet_NaN();
    OptimizerState st = make_optimizer_state(m.params);
    try {
      adam_step(m.params, g, st, 1e-3, 5.0);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Divergence);
      CHECK(e.field() == "layers.0.Uh");
    }
  }

  TEST_CASE("shape mismatch") {
    DgruModel m = tiny_model(6), other = tiny_model(6, 5);
    OptimizerState st = make_optimizer_state(m.params);
    CHECK_THROWS_AS(adam_step(m.params, zeros_like(other.params), st, 1e-3, 5.0), Error);
  }
}

TEST_SUITE("evaluate_split") {
  TEST_CASE("uniform model") {
    DgruModel m = tiny_model(7);
    fill(m.params, 0.0);
    Rng rng(1);
    auto set = random_instances(rng, 40, 6);
    SplitScore s = evaluate_split(m, set);
    CHECK(std::abs(s.loss - std::log(2.0)) <= 1e-9);
    CHECK(s.accuracy == 0.5);
  }

  TEST_CASE("confident correct model") {
    DgruModel m = tiny_model(8);
    fill(m.params, 0.0);
    m.params.head.b2[index_of(Label::Fall)] = 100.0;
    m.params.head.b2[index_of(Label::NonFall)] = -100.0;
    std::vector<WindowInstance> set(5);
    for (auto& w : set) {
      w.values = Matrix(6, 3);
      w.label = Label::Fall;
    }
    SplitScore s = evaluate_split(m, set);
    CHECK(s.loss <= 1e-15);
    CHECK(s.accuracy == 1.0);
  }

  TEST_CASE("equals a per-instance loop") {
    DgruModel m = tiny_model(9, 6, 5);
    Rng rng(2);
    auto set = random_instances(rng, 100, 5);
    SplitScore s = evaluate_split(m, set);
    double loss = 0;
    std::size_t correct = 0;
    for (const auto& w : set) {
      auto p = oracle::dgru_probs(m, w.values);
      loss += -std::log(p[index_of(w.label)]);
      const Label pred = p[index_of(Label::Fall)] > p[index_of(Label::NonFall)] ? Label::Fall : Label::NonFall;
      correct += pred == w.label;
    }
    CHECK(std::abs(s.loss - loss / 100.0) <= 1e-12);
    CHECK(s.accuracy == static_cast<double>(correct) / 100.0);
    auto preds = predict_all(m, set);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < set.size(); ++i) agree += preds[i] == set[i].label;
    CHECK(agree == correct);
  }
}

TEST_SUITE("train") {
  TEST_CASE("stops at best epoch plus patience and returns that snapshot") {
    for (std::size_t k : {1u, 3u, 6u}) {
      for (std::size_t patience : {1u, 2u, 4u}) {
        Rng rng(3);
        auto set = random_instances(rng, 12, 6);
        TrainConfig cfg;
        cfg.max_epochs = 50;
        cfg.patience = patience;
        cfg.batch_size = 4;
        cfg.learning_rate = 1e-2;
        std::vector<DgruModel> seen;
        TrainHooks hooks;
        hooks.validate = [&](const DgruModel&, std::size_t epoch) {
          const double loss = epoch <= k ? 10.0 - static_cast<double>(epoch) : 10.0 - k + 0.05 * static_cast<double>((epoch - k) / 2);
          return SplitScore{loss, 0.5};
        };
        hooks.on_epoch = [&](const EpochRecord&, const DgruModel& m) { seen.push_back(m); };
        TrainResult r = train(tiny_model(10), set, {}, cfg, hooks);
        CHECK(r.report.best_epoch == k);
        CHECK(r.report.stopped_epoch == k + patience);
        CHECK(r.report.stopped_early);
        CHECK(r.report.records.size() == k + patience);
        CHECK(r.model == seen.at(k - 1));
      }
    }
  }

  TEST_CASE("one epoch") {
    Rng rng(4);
    auto set = random_instances(rng, 10, 6);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    TrainResult r = train(tiny_model(11), set, set, cfg);
    CHECK(r.report.records.size() == 1);
    CHECK_FALSE(r.report.stopped_early);
    CHECK(r.report.records[0].epoch == 1);
  }

  TEST_CASE("same inputs and seed give identical models") {
    Rng rng(5);
    auto set = random_instances(rng, 30, 6);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    cfg.seed = 99;
    TrainResult a = train(tiny_model(12), set, set, cfg);
    TrainResult b = train(tiny_model(12), set, set, cfg);
    CHECK(serialize_model(a.model) == serialize_model(b.model));
    cfg.seed = 100;
    TrainResult c = train(tiny_model(12), set, set, cfg);
    CHECK(serialize_model(a.model) != serialize_model(c.model));
  }

  TEST_CASE("learns a separable toy problem") {
    Rng rng(6);
    auto set = random_instances(rng, 128, 6);
    TrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    TrainResult r = train(tiny_model(13, 8), set, set, cfg);
    CHECK(evaluate_split(r.model, set).accuracy >= 0.95);
    CHECK(r.report.records.back().train_loss < r.report.records.front().train_loss);
  }

  TEST_CASE("non-finite validation loss aborts with the finite history") {
    Rng rng(7);
    auto set = random_instances(rng, 8, 6);
    TrainConfig cfg;
    cfg.max_epochs = 10;
    TrainHooks hooks;
    hooks.validate = [](const DgruModel&, std::size_t epoch) {
      return SplitScore{epoch < 3 ? 1.0 : std::numeric_limits<double>::quiet_NaN(), 0.5};
    };
    try {
      train(tiny_model(14), set, {}, cfg, hooks);
      FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
      CHECK(e.kind() == ErrorKind::Divergence);
      CHECK(e.report().records.size() == 2);
    }
  }

  TEST_CASE("config validation names the flag") {
    TrainConfig cfg;
    cfg.learning_rate = -1;
    try {
      cfg.validate();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.field() == "lr");
    }
    TrainConfig b;
    b.batch_size = 0;
    CHECK_THROWS_AS(b.validate(), Error);
    Rng rng(8);
    auto set = random_instances(rng, 4, 5);
    CHECK_THROWS_AS(train(tiny_model(15), set, set, TrainConfig{}), Error);
    CHECK_THROWS_AS(train(tiny_model(15), {}, set, TrainConfig{}), Error);
  }
}

TEST_SUITE("epoch log") {
  TEST_CASE("round trip") {
    std::vector<EpochRecord> recs{{1, 0.7, 0.6, 0.51}, {2, 0.1 + 0.2, 1.0 / 3.0, 0.9}};
    std::stringstream ss;
    write_epoch_log(ss, recs, R"({"seed":1})");
    const std::string text = ss.str();
    CHECK(text.rfind("# falldef-epoch-log v1\n# config {\"seed\":1}\n", 0) == 0);
    CHECK(read_epoch_log(ss) == recs);
    std::istringstream bad("epoch,train_loss,val_loss,val_accuracy\n1,2,x,4\n");
    CHECK_THROWS_AS(read_epoch_log(bad), Error);
  }
}

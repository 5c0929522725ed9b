#include <cmath>
#include <cstring>
#include <utility>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "falldef/dgru.hpp"
#include "falldef/error.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace falldef;

namespace {

DgruArch small_arch(std::size_t hidden, std::size_t layers, std::size_t window) {
  DgruArch a;
  a.hidden_dims.assign(layers, hidden);
  a.head_dim = hidden;
  a.window_size = window;
  return a;
}

/// Random weights and biases, plus non-trivial normalization.
DgruModel random_model(Rng& rng, std::size_t hidden, std::size_t layers, std::size_t window,
                       double scale = 0.5) {
  DgruModel m = make_model(small_arch(hidden, layers, window), rng);
  for (auto& p : parameter_list(m.params))
    for (double& v : p.values) v = rng.uniform(-scale, scale);
  m.norm.enabled = true;
  m.norm.mean = {0.1, -0.9, 0.05};
  m.norm.std = {0.4, 0.7, 1.3};
  return m;
}

DgruModel zero_model(std::size_t hidden, std::size_t window) {
  Rng rng(1);
  DgruModel m = make_model(small_arch(hidden, 1, window), rng);
  for (auto& p : parameter_list(m.params))
    for (double& v : p.values) v = 0.0;
  return m;
}

GruLayerParams layer_of(const DgruModel& m) { return m.params.layers.front(); }

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "falldef_test_dgru";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("gru_cell_step") {
  TEST_CASE("zero parameters") {
    GruLayerParams L = layer_of(zero_model(4, 3));
    CellTrace a = gru_cell_step(Vector{1, 2, 3}, Vector(4), L);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.h[i] == 0.0);
      CHECK(a.z[i] == 0.5);
      CHECK(a.candidate[i] == 0.0);
    }
    Vector v{0.2, -0.4, 1.0, 3.0};
    CellTrace b = gru_cell_step(Vector{1, 2, 3}, v, L);
    for (std::size_t i = 0; i < 4; ++i) CHECK(b.h[i] == 0.5 * v[i]);
  }

  TEST_CASE("matches a scalar hand evaluation") {
    Rng rng(8);
    DgruModel m = random_model(rng, 4, 1, 1);
    const GruLayerParams& L = m.params.layers[0];
    Vector x{0.3, -0.7, 1.1}, h{0.2, -0.1, 0.05, 0.6};
    CellTrace got = gru_cell_step(x, h, L);
    for (std::size_t i = 0; i < 4; ++i) {
      double az = L.bz[i], ar = L.br[i];
      for (std::size_t j = 0; j < 3; ++j) {
        az += L.Wz(i, j) * x[j];
        ar += L.Wr(i, j) * x[j];
      }
      for (std::size_t j = 0; j < 4; ++j) {
        az += L.Uz(i, j) * h[j];
        ar += L.Ur(i, j) * h[j];
      }
      const double z = oracle::logistic(az);
      CHECK(std::abs(got.z[i] - z) <= 1e-12);
      CHECK(std::abs(got.r[i] - oracle::logistic(ar)) <= 1e-12);
    }
    for (std::size_t i = 0; i < 4; ++i) {
      double ac = L.bh[i];
      for (std::size_t j = 0; j < 3; ++j) ac += L.Wh(i, j) * x[j];
      for (std::size_t j = 0; j < 4; ++j) {
        double rj = L.br[j];
        for (std::size_t k = 0; k < 3; ++k) rj += L.Wr(j, k) * x[k];
        for (std::size_t k = 0; k < 4; ++k) rj += L.Ur(j, k) * h[k];
        ac += L.Uh(i, j) * oracle::logistic(rj) * h[j];
      }
      const double c = std::tanh(ac);
      CHECK(std::abs(got.candidate[i] - c) <= 1e-12);
      CHECK(std::abs(got.h[i] - ((1.0 - got.z[i]) * h[i] + got.z[i] * c)) <= 1e-12);
    }
  }

  TEST_CASE("closed update gate carries the state through") {
    Rng rng(4);
    DgruModel m = random_model(rng, 5, 1, 1);
    GruLayerParams L = m.params.layers[0];
    for (auto& row : {0, 1, 2, 3, 4}) L.bz[row] = -50.0;
    for (double& v : L.Wz.values()) v = 0.0;
    for (double& v : L.Uz.values()) v = 0.0;
    Vector h{0.9, -0.3, 0.0, 0.4, -1.0};
    CellTrace t = gru_cell_step(Vector{2.0, -1.0, 0.5}, h, L);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(t.h[i] - h[i]) <= 1e-15);
  }

  TEST_CASE("dimension mismatch") {
    GruLayerParams L = layer_of(zero_model(4, 3));
    CHECK_THROWS_AS(gru_cell_step(Vector{1, 2}, Vector(4), L), Error);
    CHECK_THROWS_AS(gru_cell_step(Vector{1, 2, 3}, Vector(3), L), Error);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("zero parameters give a uniform output") {
    DgruModel m = zero_model(6, 4);
    Rng rng(2);
    auto res = forward(m, oracle::random_window(rng, 4, 3));
    CHECK(res.probs[0] == 0.5);
    CHECK(res.probs[1] == 0.5);
  }

  TEST_CASE("deterministic and sums to one") {
    Rng rng(10);
    DgruModel m = random_model(rng, 8, 2, 6);
    for (int i = 0; i < 30; ++i) {
      Matrix w = oracle::random_window(rng, 6, 3, 50.0);
      auto a = forward(m, w), b = forward(m, w);
      CHECK(a.probs == b.probs);
      CHECK(std::abs(a.probs[0] + a.probs[1] - 1.0) <= 1e-12);
      CHECK(a.trace.steps == 6);
    }
  }

  TEST_CASE("matches the unrolled scalar oracle") {
    Rng rng(12);
    for (std::size_t layers : {1u, 2u}) {
      DgruModel m = random_model(rng, 4, layers, 5);
      for (int i = 0; i < 5; ++i) {
        Matrix w = oracle::random_window(rng, 5, 3);
        auto got = forward(m, w).probs;
        auto want = oracle::dgru_probs(m, w);
        CHECK(std::abs(got[0] - want[0]) <= 1e-10);
        CHECK(std::abs(got[1] - want[1]) <= 1e-10);
      }
    }
  }

  TEST_CASE("batched rows match single-window calls") {
    Rng rng(13);
    DgruModel m = random_model(rng, 8, 2, 7);
    std::vector<Matrix> ws;
    for (int i = 0; i < 9; ++i) ws.push_back(oracle::random_window(rng, 7, 3));
    std::vector<const Matrix*> ptrs;
    for (auto& w : ws) ptrs.push_back(&w);
    ForwardTrace tr = forward_batch(m, ptrs);
    for (std::size_t b = 0; b < ws.size(); ++b) {
      Vector single = forward(m, ws[b]).probs;
      Vector row = tr.probs_row(b);
      CHECK(std::abs(single[0] - row[0]) <= 1e-13);
    }
  }

  TEST_CASE("interleaved models do not interact") {
    Rng rng(14);
    DgruModel a = random_model(rng, 4, 2, 5), b = random_model(rng, 6, 1, 5);
    Matrix w = oracle::random_window(rng, 5, 3);
    const Vector alone_a = forward(a, w).probs, alone_b = forward(b, w).probs;
    for (int i = 0; i < 3; ++i) {
      CHECK(forward(a, w).probs == alone_a);
      CHECK(forward(b, w).probs == alone_b);
    }
  }

  TEST_CASE("window shape is checked") {
    Rng rng(15);
    DgruModel m = random_model(rng, 4, 1, 5);
    CHECK_THROWS_AS(forward(m, Matrix(4, 3)), Error);
    CHECK_THROWS_AS(forward(m, Matrix(5, 2)), Error);
    CHECK_THROWS_AS(predict(m, Matrix(6, 3)), Error);
  }
}

TEST_SUITE("backward") {
  TEST_CASE("gradients match central differences (hidden 8, window 5)") {
    Rng rng(21);
    for (std::size_t layers : {1u, 2u}) {
      DgruModel m = random_model(rng, 8, layers, 5);
      Matrix w = oracle::random_window(rng, 5, 3);
      for (Label y : {Label::Fall, Label::NonFall}) {
        auto fr = forward(m, w);
        Gradients g = backward(m, fr.trace, y);
        auto check = oracle::finite_difference_check(m, w, y, g);
        INFO("worst component " << check.worst_param);
        CHECK(check.max_rel_error <= 1e-4);
      }
    }
  }

  TEST_CASE("head bias gradient is probs minus one-hot") {
    Rng rng(22);
    DgruModel m = random_model(rng, 4, 1, 3);
    m.params.head.b2[index_of(Label::Fall)] = 60.0;
    m.params.head.b2[index_of(Label::NonFall)] = -60.0;
    Matrix w = oracle::random_window(rng, 3, 3);
    auto fr = forward(m, w);
    Gradients g = backward(m, fr.trace, Label::Fall);
    for (std::size_t k = 0; k < 2; ++k) {
      const double onehot = k == index_of(Label::Fall) ? 1.0 : 0.0;
      CHECK(std::abs(g.head.b2[k] - (fr.probs[k] - onehot)) <= 1e-9);
    }
  }

  TEST_CASE("zero window and zero parameters give zero input-weight gradients") {
    DgruModel m = zero_model(4, 5);
    auto fr = forward(m, Matrix(5, 3));
    Gradients g = backward(m, fr.trace, Label::Fall);
    for (const auto& L : g.layers) {
      for (double v : L.Wz.values()) CHECK(v == 0.0);
      for (double v : L.Wr.values()) CHECK(v == 0.0);
      for (double v : L.Wh.values()) CHECK(v == 0.0);
    }
  }

  TEST_CASE("batch gradient is the mean of single-window gradients") {
    Rng rng(23);
    DgruModel m = random_model(rng, 5, 2, 4);
    std::vector<Matrix> ws;
    std::vector<Label> ys;
    for (int i = 0; i < 6; ++i) {
      ws.push_back(oracle::random_window(rng, 4, 3));
      ys.push_back(i % 3 == 0 ? Label::Fall : Label::NonFall);
    }
    std::vector<const Matrix*> ptrs;
    for (auto& w : ws) ptrs.push_back(&w);
    ForwardTrace tr = forward_batch(m, ptrs);
    Gradients batch;
    const double loss = backward_batch(m, tr, ys, batch);

    Gradients sum = zeros_like(m.params);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      auto fr = forward(m, ws[i]);
      loss_sum += cross_entropy(fr.probs, index_of(ys[i]));
      Gradients g = backward(m, fr.trace, ys[i]);
      auto s = parameter_list(sum);
      auto gi = parameter_list(std::as_const(g));
      for (std::size_t k = 0; k < s.size(); ++k)
        for (std::size_t j = 0; j < s[k].values.size(); ++j) s[k].values[j] += gi[k].values[j];
    }
    CHECK(std::abs(loss - loss_sum / 6.0) <= 1e-12);
    auto b = parameter_list(std::as_const(batch));
    auto s = parameter_list(std::as_const(sum));
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[k].values.size(); ++j)
        CHECK(std::abs(b[k].values[j] - s[k].values[j] / 6.0) <= 1e-12);
  }
}

TEST_SUITE("predict") {
  TEST_CASE("argmax with fall at output row 0") {
    Prediction p = decide(Vector{0.9, 0.1});
    CHECK(p.label == Label::Fall);
    CHECK(p.p_fall == 0.9);
    Prediction q = decide(Vector{0.2, 0.8});
    CHECK(q.label == Label::NonFall);
    CHECK(q.p_fall == 0.2);
  }

  TEST_CASE("ties resolve to non-fall") {
    CHECK(decide(Vector{0.5, 0.5}).label == Label::NonFall);
    DgruModel m = zero_model(3, 4);
    CHECK(predict(m, Matrix(4, 3)).label == Label::NonFall);
  }
}

TEST_SUITE("model file") {
  TEST_CASE("round trip is bit-exact") {
    Rng rng(31);
    DgruModel m = random_model(rng, 6, 2, 7);
    for (auto& p : parameter_list(m.params))
      for (double& v : p.values) v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
    m.provenance = R"({"seed":3})";
    const auto path = temp_file("roundtrip.json");
    save_model(m, path);
    DgruModel back = load_model(path);
    CHECK(back == m);
    auto a = parameter_list(std::as_const(m.params));
    auto b = parameter_list(std::as_const(back.params));
    for (std::size_t k = 0; k < a.size(); ++k)
      CHECK(std::memcmp(a[k].values.data(), b[k].values.data(), a[k].values.size_bytes()) == 0);
    CHECK(serialize_model(back) == serialize_model(m));
  }

  TEST_CASE("three output rows are rejected naming the field") {
    Rng rng(32);
    DgruModel m = random_model(rng, 3, 1, 4);
    std::string text = serialize_model(m);
    auto doc = nlohmann::json::parse(text);
    auto& w2 = doc["params"]["head"]["W2"];
    w2.push_back(w2[0]);
    try {
      deserialize_model(doc.dump());
      FAIL("expected a shape error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Shape);
      CHECK(std::string(e.what()).find("W2") != std::string::npos);
    }
  }

  TEST_CASE("unknown format version is rejected") {
    Rng rng(33);
    auto doc = nlohmann::json::parse(serialize_model(random_model(rng, 3, 1, 4)));
    doc["format_version"] = 99;
    try {
      deserialize_model(doc.dump());
      FAIL("expected a version error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Version);
    }
  }

  TEST_CASE("corrupted files are rejected") {
    Rng rng(34);
    const std::string text = serialize_model(random_model(rng, 3, 1, 4));
    CHECK_THROWS_AS(deserialize_model(text.substr(0, text.size() / 2)), Error);
    CHECK_THROWS_AS(deserialize_model("[]"), Error);
    CHECK_THROWS_AS(deserialize_model(""), Error);
    auto doc = nlohmann::json::parse(text);
    doc["params"]["layers"][0]["Uz"][1].erase(0);
    CHECK_THROWS_AS(deserialize_model(doc.dump()), Error);
    doc = nlohmann::json::parse(text);
    doc["params"]["head"]["b1"][0] = "x";
    CHECK_THROWS_AS(deserialize_model(doc.dump()), Error);
    CHECK_THROWS_AS(load_model(temp_file("does-not-exist.json")), Error);
  }

  TEST_CASE("a flipped digit changes the model or fails") {
    Rng rng(35);
    DgruModel m = random_model(rng, 3, 1, 4);
    const std::string text = serialize_model(m);
    const auto pos = text.find("\"Wz\"");
    REQUIRE(pos != std::string::npos);
    std::size_t changed = 0;
    for (std::size_t i = pos; i < text.size() && changed < 20; ++i) {
      if (text[i] < '1' || text[i] > '8') continue;
      std::string mutated = text;
      mutated[i] = static_cast<char>(text[i] + 1);
      ++changed;
      try {
        CHECK_FALSE(deserialize_model(mutated) == m);
      } catch (const Error&) {
      }
    }
    CHECK(changed == 20);
  }
}

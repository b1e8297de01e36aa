#include <doctest.h>

#include <cmath>
#include <limits>

#include "radiodx/errors.hpp"
#include "radiodx/training.hpp"
#include "support.hpp"

using namespace radiodx;
using radiodx::testing::brightness_image;
using radiodx::testing::memory_loader;

namespace {

struct Fixture {
  std::vector<ManifestEntry> train, val;
  ImageLoader loader;
};

Fixture brightness_fixture(std::size_t per_class, std::size_t size) {
  Fixture f;
  std::map<std::string, Raster> images;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const Label label = i % 2 ? Label::pneumonia : Label::normal;
    for (auto* part : {&f.train, &f.val}) {
      const std::string path = (part == &f.train ? "t" : "v") + std::to_string(i);
      part->push_back({path, label});
      images[path] = brightness_image(label, size, (part == &f.train ? 1000 : 2000) + i);
    }
  }
  f.loader = memory_loader(std::move(images));
  return f;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  c.augmentation.reset();
  return c;
}

}  // namespace

TEST_CASE("history statistics") {
  TrainingHistory h;
  for (int i = 0; i < 5; ++i) h.epochs.push_back({std::size_t(i + 1), 0.1, 0.9, 0.9});
  auto s = history_stats(h);
  CHECK(s.min == 0.9);
  CHECK(s.max == 0.9);
  CHECK(s.mean == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(0.0).epsilon(1e-12));

  h.epochs = {{1, 0, 0, 0.8}, {2, 0, 0, 1.0}};
  s = history_stats(h);
  CHECK(s.mean == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(0.1).epsilon(1e-12));

  h.epochs = {{1, 0, 0, 0.853}};
  s = history_stats(h);
  CHECK(s.min == 0.853);
  CHECK(s.max == 0.853);
  CHECK(s.std == 0.0);

  CHECK_THROWS_AS(history_stats(TrainingHistory{}), ArgumentError);
}

TEST_CASE("history files") {
  TrainingHistory h;
  h.epochs = {{1, 0.5, 0.75, 0.5}, {2, 0.25, 1.0, 0.875}};
  CHECK(history_csv(h) ==
        "epoch,train_loss,train_acc,val_acc\n"
        "1,0.500000000,0.750000000,0.500000000\n"
        "2,0.250000000,1.000000000,0.875000000\n");
  const std::string svg = history_svg(h);
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(history_csv({}) == "epoch,train_loss,train_acc,val_acc\n");
}

TEST_CASE("optimizer") {
  const std::size_t widths[] = {3, 2, 1};
  SUBCASE("sgd step is -lr * grad") {
    Model m = build_mlp(widths, 1);
    const Model before = m;
    TrainConfig c;
    c.optimizer = OptimizerKind::sgd;
    c.learning_rate = 0.5;
    Optimizer opt(c);
    m.zero_grad();
    m.layers()[0].weight.grad.fill(1.0f);
    opt.step(m);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(m.layers()[0].weight.value[i] == before.layers()[0].weight.value[i] - 0.5f);
  }
  SUBCASE("first adam step moves each weight by about lr") {
    Model m = build_mlp(widths, 1);
    const Model before = m;
    TrainConfig c;
    c.learning_rate = 0.01;
    Optimizer opt(c);
    m.zero_grad();
    m.layers()[0].weight.grad.fill(-3.0f);
    opt.step(m);
    for (std::size_t i = 0; i < 6; ++i) {
      const double moved = m.layers()[0].weight.value[i] - before.layers()[0].weight.value[i];
      CHECK(moved == doctest::Approx(0.01).epsilon(1e-4));
    }
    CHECK(opt.steps() == 1);
  }
  SUBCASE("frozen parameters never move") {
    Model m = build_mlp(widths, 1);
    set_trainable(m, "*", false);
    const Model before = m;
    Optimizer opt(TrainConfig{});
    for (auto& np : named_parameters(m)) np.param->grad.fill(1.0f);
    opt.step(m);
    CHECK(same_weights(m, before));
  }
}

TEST_CASE("fit") {
  const Fixture f = brightness_fixture(4, 16);
  SUBCASE("zero epochs") {
    Model m = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 3, 16);
    const Model init = m;
    const FitResult r = fit(m, f.train, f.val, small_config(0), f.loader);
    CHECK(r.history.epochs.empty());
    CHECK_FALSE(r.best_epoch.has_value());
    CHECK(same_weights(r.best, init));
    CHECK(same_weights(m, init));
  }
  SUBCASE("frozen backbone stays bit-identical and the run is reproducible") {
    Model a = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 3, 16);
    Model b = a;
    const Model init = a;
    TrainConfig c = small_config(3);
    c.augmentation = AugmentationPolicy{};
    const FitResult ra = fit(a, f.train, f.val, c, f.loader);
    const FitResult rb = fit(b, f.train, f.val, c, f.loader);
    CHECK(same_weights(a, b));
    CHECK(history_csv(ra.history) == history_csv(rb.history));
    CHECK(ra.history.epochs.size() == 3);
    for (const auto& np : named_parameters(init)) {
      const auto idx = a.find(np.name.substr(0, np.name.rfind('.'))).value();
      const Layer& after = a.layers()[idx];
      const Parameter& p = np.name.ends_with(".weight") ? after.weight : after.bias;
      if (np.name.starts_with("backbone.")) CHECK(bitwise_equal(p.value, np.param->value));
      else CHECK_FALSE(bitwise_equal(p.value, np.param->value));
    }
  }
  SUBCASE("best checkpoint is the earliest maximum") {
    Model m = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 4, 16);
    std::vector<double> seen;
    const FitResult r = fit(m, f.train, f.val, small_config(6), f.loader,
                            [&](const EpochRecord& e) { seen.push_back(e.val_accuracy); });
    REQUIRE(seen.size() == 6);
    std::size_t best = 0;
    for (std::size_t i = 1; i < seen.size(); ++i)
      if (seen[i] > seen[best]) best = i;
    CHECK(*r.best_epoch == best + 1);
    CHECK(accuracy(r.best, f.val, f.loader, Normalization::unit) == seen[best]);
  }
  SUBCASE("non-finite loss aborts with epoch and batch") {
    Model m = build_model(Backbone::tiny, HeadSpec{{8}, 0.0}, 4, 16);
    for (auto& np : named_parameters(m))
      if (np.name == "head.dense2.weight") np.param->value.fill(std::numeric_limits<float>::quiet_NaN());
    try {
      fit(m, f.train, f.val, small_config(1), f.loader);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 1") != std::string::npos);
      CHECK(msg.find("batch 1") != std::string::npos);
    }
  }
  SUBCASE("invalid config") {
    TrainConfig c = small_config(1);
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = small_config(1);
    c.learning_rate = -1;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
  }
}

TEST_CASE("overfit set: 20-epoch moving average of the loss never rises") {
  std::vector<ManifestEntry> train, heldout;
  std::map<std::string, Raster> images;
  for (std::size_t i = 0; i < 16; ++i) {
    const Label label = i % 2 ? Label::pneumonia : Label::normal;
    train.push_back({"train/" + std::to_string(i), label});
    heldout.push_back({"heldout/" + std::to_string(i), label});
    images["train/" + std::to_string(i)] = brightness_image(label, 64, 100 + i);
    images["heldout/" + std::to_string(i)] = brightness_image(label, 64, 900 + i);
  }
  Model model = build_model(Backbone::tiny, HeadSpec{{64, 16}, 0.0}, 7, 64);
  TrainConfig config = small_config(200);
  config.run_seed = 7;
  const FitResult r = fit(model, train, heldout, config, memory_loader(images));
  const auto& e = r.history.epochs;
  REQUIRE(e.size() == 200);
  // The window mean moves by (L[t+20] - L[t]) / 20 per step.
  std::size_t rises = 0;
  for (std::size_t t = 0; t + 20 < e.size(); ++t) rises += e[t + 20].train_loss > e[t].train_loss;
  CHECK(rises == 0);
  CHECK(e.back().train_accuracy == 1.0);
}

#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "radiodx/cli.hpp"
#include "radiodx/config.hpp"
#include "radiodx/network.hpp"
#include "support.hpp"

using namespace radiodx;
using radiodx::testing::slurp;
using radiodx::testing::TempDir;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "radiodx");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Eight 24x24 images per class on disk plus train/val manifests and a config.
struct Workspace {
  TempDir dir{"cli"};
  Workspace() {
    std::string train = "path,label\n", val = "path,label\n";
    for (int i = 0; i < 16; ++i) {
      const Label label = i % 2 ? Label::pneumonia : Label::normal;
      const std::string name = std::string(to_string(label)) + "/" + std::to_string(i) + ".pgm";
      std::filesystem::create_directories(dir.path() / to_string(label));
      write_pnm(dir / name, radiodx::testing::brightness_image(label, 24, 500 + i));
      (i < 12 ? train : val) += name + "," + std::string(to_string(label)) + "\n";
    }
    write_text(dir / "train.csv", train);
    write_text(dir / "val.csv", val);
  }
  std::string config(std::size_t epochs) const {
    const std::string path = (dir / ("config" + std::to_string(epochs) + ".json")).string();
    write_text(path, R"({"seed": 5,
      "model": {"backbone": "tiny", "input_size": 16, "head": {"hidden": [8]}},
      "train": {"epochs": )" + std::to_string(epochs) +
                         R"(, "batch_size": 4, "learning_rate": 0.001},
      "paths": {"train_manifest": "train.csv", "val_manifest": "val.csv"}})");
    return path;
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 2 and name the flag") {
  CHECK(run_cli({}).code == cli::kUsageError);
  const Outcome unknown = run_cli({"split", "--manifest", "m.csv", "--seed", "1", "--out", "o", "--bogus"});
  CHECK(unknown.code == cli::kUsageError);
  CHECK(unknown.err.find("--bogus") != std::string::npos);
  const Outcome missing = run_cli({"train", "--out", "o"});
  CHECK(missing.code == cli::kUsageError);
  CHECK(missing.err.find("--config") != std::string::npos);
  CHECK(run_cli({"evaluate", "--out", "o"}).code == cli::kUsageError);
  CHECK(run_cli({"explain", "--weights", "w", "--image", "i", "--out", "o", "--alpha", "3"}).code ==
        cli::kUsageError);
  CHECK(run_cli({"--help"}).code == cli::kOk);
}

TEST_CASE("runtime errors exit 1") {
  TempDir dir("cli_err");
  const Outcome r = run_cli({"split", "--manifest", (dir / "nope.csv").string(), "--seed", "1",
                             "--out", (dir / "o").string()});
  CHECK(r.code == cli::kRuntimeError);
  CHECK(r.err.find("nope.csv") != std::string::npos);
}

TEST_CASE("split reports the table counts") {
  TempDir dir("cli_split");
  write_text(dir / "all.csv", write_manifest(radiodx::testing::synthetic_manifest(1583, 4273)));
  const Outcome r = run_cli({"split", "--manifest", (dir / "all.csv").string(), "--seed", "11",
                             "--out", (dir / "split").string()});
  REQUIRE(r.code == cli::kOk);
  const json summary = json::parse(slurp(dir / "split/summary.json"));
  CHECK(summary["counts"]["test"]["total"] == 300);
  CHECK(summary["counts"]["test"]["NORMAL"] == 150);
  CHECK(summary["counts"]["train"]["total"] == 4444);
  CHECK(summary["counts"]["val"]["total"] == 1112);
  const auto train = load_manifest(slurp(dir / "split/train.csv"));
  CHECK(train.size() == 4444);
  CHECK(train[0].path.starts_with("../"));
  const json run = json::parse(slurp(dir / "split/run.json"));
  CHECK(run["command"] == "split");
  CHECK(run["seed"] == 11);
}

TEST_CASE("evaluate from a prediction fixture") {
  TempDir dir("cli_eval");
  std::string csv = "path,label,probability\n";
  auto add = [&](int n, const char* label, const char* p) {
    for (int i = 0; i < n; ++i) csv += std::string(label) + std::to_string(csv.size()) + "," + label + "," + p + "\n";
  };
  add(147, "NORMAL", "0.1");
  add(3, "NORMAL", "0.5");
  add(4, "PNEUMONIA", "0.49");
  add(146, "PNEUMONIA", "0.97");
  write_text(dir / "preds.csv", csv);
  const Outcome r = run_cli({"evaluate", "--predictions", (dir / "preds.csv").string(), "--out",
                             (dir / "eval").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(slurp(dir / "eval/confusion.csv") == "147,3\n4,146\n");
  CHECK(slurp(dir / "eval/metrics.csv") ==
        "metric,value\nsens,0.973333333\nesp,0.980000000\nvpp,0.979865772\n"
        "vpn,0.973509934\nacc,0.976666667\nf1,0.976588629\n");
  CHECK(std::filesystem::exists(dir / "eval/notes.txt"));
  CHECK(std::filesystem::exists(dir / "eval/run.json"));
}

TEST_CASE("pipeline on a small workspace") {
  Workspace ws;

  SUBCASE("analyze") {
    const Outcome r = run_cli({"analyze", "--manifest", ws.path("train.csv"), "--out", ws.path("an")});
    REQUIRE(r.code == cli::kOk);
    const Raster diff = read_image(ws.dir / "an/diff.ppm");
    CHECK(diff.channels == 3);
    CHECK(diff.width == 224);
    // Pneumonia fixtures are brighter, so the difference leans red.
    CHECK(diff.at(100, 100, 0) == 255);
    CHECK(diff.at(100, 100, 2) < 255);
    CHECK(read_image(ws.dir / "an/mean_normal.pgm").channels == 1);
  }

  SUBCASE("zero-epoch training keeps the initial weights") {
    const std::string cfg = ws.config(0);
    const Outcome r = run_cli({"train", "--config", cfg, "--out", ws.path("t0")});
    REQUIRE(r.code == cli::kOk);
    const RunConfig c = load_run_config(cfg);
    const Model init = build_model(c.backbone, c.head, c.init_seed, c.input_size);
    CHECK(read_file(ws.dir / "t0/best.rxw") == save_weights(init));
    CHECK(slurp(ws.dir / "t0/history.csv") == "epoch,train_loss,train_acc,val_acc\n");
    CHECK_FALSE(std::filesystem::exists(ws.dir / "t0/stats.json"));
  }

  SUBCASE("train, then predict, explain and evaluate") {
    const Outcome t = run_cli({"train", "--config", ws.config(2), "--out", ws.path("t2")});
    REQUIRE(t.code == cli::kOk);
    CHECK(t.out.find("epoch 2/2") != std::string::npos);
    const json stats = json::parse(slurp(ws.dir / "t2/stats.json"));
    CHECK(stats["best_epoch"] >= 1);

    // Feeding run.json back as a config reproduces the run.
    const Outcome again = run_cli({"train", "--config", ws.path("t2/run.json"), "--out", ws.path("t2b")});
    REQUIRE(again.code == cli::kOk);
    CHECK(read_file(ws.dir / "t2/final.rxw") == read_file(ws.dir / "t2b/final.rxw"));

    const std::string cfg = ws.config(2), weights = ws.path("t2/best.rxw");
    const Outcome p = run_cli({"predict", "--weights", weights, "--image", ws.path("PNEUMONIA/1.pgm"),
                               "--config", cfg});
    REQUIRE(p.code == cli::kOk);
    const bool pneumonia = p.out.starts_with("PNEUMONIA\t");
    CHECK((pneumonia || p.out.starts_with("NORMAL\t")));
    const double prob = std::stod(p.out.substr(p.out.find('\t') + 1));
    CHECK(pneumonia == (prob >= 0.5));

    const Outcome x = run_cli({"explain", "--weights", weights, "--image", ws.path("PNEUMONIA/1.pgm"),
                               "--config", cfg, "--out", ws.path("ex")});
    REQUIRE(x.code == cli::kOk);
    const Raster overlay = read_image(ws.dir / "ex/overlay.ppm");
    CHECK(overlay.width == 24);
    CHECK(overlay.channels == 3);
    CHECK(read_image(ws.dir / "ex/heatmap.pgm").width == 16);
    CHECK(json::parse(slurp(ws.dir / "ex/explain.json"))["layer"] == "backbone.block2_conv1");

    const Outcome e = run_cli({"evaluate", "--weights", weights, "--manifest", ws.path("val.csv"),
                               "--config", cfg, "--out", ws.path("ev")});
    REQUIRE(e.code == cli::kOk);
    CHECK(slurp(ws.dir / "ev/predictions.csv").starts_with("path,label,probability\n"));

    const Outcome wrong = run_cli({"predict", "--weights", weights, "--image",
                                   ws.path("PNEUMONIA/1.pgm")});
    CHECK(wrong.code == cli::kRuntimeError);  // vgg19 default does not match tiny weights
  }
}

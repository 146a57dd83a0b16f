#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hqmamba/errors.hpp"
#include "hqmamba/rng.hpp"
#include "hqmamba/train.hpp"

using namespace hqmamba;
using namespace hqmamba::train;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hqmamba_train_" + name);
  fs::remove_all(p);
  return p.string();
}

TrainConfig tiny(const std::string& out, mamba::Backend b = mamba::Backend::classical) {
  TrainConfig c;
  c.d_model = 8;
  c.layers = 1;
  c.expand = 2;
  c.d_state = 4;
  c.d_conv = 2;
  c.backends = mamba::BackendMap::all(b);
  c.quantum.max_qubits = 3;
  c.epochs = 2;
  c.batch_size = 10;
  c.seed = 3;
  c.lr_in_proj = 3e-3;
  c.lr_x_proj = 1e-3;
  c.lr_out_proj = 3e-3;
  c.lr_classical = 1e-2;
  c.dataset = DatasetKind::synthetic;
  c.synthetic_train = 40;
  c.synthetic_test = 20;
  c.synthetic_length = 8;
  c.synthetic_classes = 4;
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("AdamW update rule") {
  const GroupSettings plain{1e-3, 0.0}, decayed{1e-3, 0.01};
  const AdamHyper adam;
  SUBCASE("zero gradient without decay leaves parameters unchanged") {
    std::vector<double> p{0.5, -2.0}, g(2, 0.0), m(2, 0.0), v(2, 0.0);
    CHECK(adamw_update(p, g, m, v, 1, plain, adam) == 0.0);
    CHECK(p == std::vector<double>{0.5, -2.0});
  }
  SUBCASE("decay alone scales by 1 - lr * wd") {
    std::vector<double> p{0.5, -2.0}, g(2, 0.0), m(2, 0.0), v(2, 0.0);
    CHECK(adamw_update(p, g, m, v, 1, decayed, adam) == Approx(1e-5));
    CHECK(p[0] == Approx(0.5 * (1 - 1e-5)).epsilon(1e-15));
    CHECK(p[1] == Approx(-2.0 * (1 - 1e-5)).epsilon(1e-15));
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    std::vector<double> p{1.0, 1.0}, g{0.3, -7.0}, m(2, 0.0), v(2, 0.0);
    adamw_update(p, g, m, v, 1, plain, adam);
    CHECK(p[0] == Approx(1.0 - 1e-3).epsilon(1e-9));
    CHECK(p[1] == Approx(1.0 + 1e-3).epsilon(1e-9));
  }
  SUBCASE("steady gradient converges to steps of size lr") {
    std::vector<double> p{0.0}, g{0.25}, m{0.0}, v{0.0};
    double prev = 0;
    for (std::uint64_t t = 1; t <= 1000; ++t) {
      prev = p[0];
      adamw_update(p, g, m, v, t, plain, adam);
    }
    CHECK(std::abs(prev - p[0]) == Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("argument errors") {
    std::vector<double> p(2), g(3), m(2), v(2);
    CHECK_THROWS_AS(adamw_update(p, g, m, v, 1, plain, adam), DimensionError);
    g.resize(2);
    CHECK_THROWS_AS(adamw_update(p, g, m, v, 0, plain, adam), UsageError);
  }
}

TEST_CASE("optimizer configuration") {
  const auto d = OptimizerConfig::defaults();
  CHECK(d.groups.at(ParamGroup::in_proj).lr == 3e-4);
  CHECK(d.groups.at(ParamGroup::x_proj).lr == 1e-4);
  CHECK(d.groups.at(ParamGroup::out_proj).lr == 3e-4);
  CHECK(d.groups.at(ParamGroup::classical).lr == 1e-3);
  CHECK(d.groups.at(ParamGroup::classical).weight_decay == 0.01);
  for (auto g : {ParamGroup::in_proj, ParamGroup::x_proj, ParamGroup::out_proj})
    CHECK(d.groups.at(g).weight_decay == 0.0);
  d.validate();
  auto bad = d;
  bad.groups[ParamGroup::x_proj].weight_decay = 1e-4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = d;
  bad.groups[ParamGroup::in_proj].lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("optimizer steps") {
  mamba::ModelConfig mc;
  mc.layer.d_model = 4;
  mc.layer.expand = 1;
  mc.layer.d_state = 2;
  mc.layer.backends.in_proj = mamba::Backend::quantum;
  mc.layer.quantum.max_qubits = 2;
  mc.n_layers = 1;
  mc.num_classes = 3;
  mamba::Model model(mc);
  AdamW opt(model.parameters(), OptimizerConfig::defaults());
  const auto x = ad::Tensor::from({2, 3, 1}, {0.1, 0.5, 0.9, 0.3, 0.2, 0.7});
  const std::vector<int> y{0, 2};
  ad::backward(ad::softmax_cross_entropy(model.forward(mamba::ModelInput::from_real(x)), y));

  SUBCASE("projection groups see no decay") {
    const auto s = opt.step();
    CHECK(s.step == 1);
    CHECK(opt.steps() == 1);
    CHECK(s.decay_term.at(ParamGroup::in_proj) == 0.0);
    CHECK(s.decay_term.at(ParamGroup::x_proj) == 0.0);
    CHECK(s.decay_term.at(ParamGroup::out_proj) == 0.0);
    CHECK(s.decay_term.at(ParamGroup::classical) == Approx(1e-5));
    CHECK(s.grad_norm > 0.0);
  }
  SUBCASE("non-finite gradients name the parameter") {
    auto ps = model.parameters();
    ps[5].tensor.mutable_grad()[0] = std::nan("");
    try {
      opt.step();
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find(ps[5].name) != std::string::npos);
    }
  }
}

TEST_CASE("training configuration text") {
  TrainConfig c = tiny("out");
  c.backends.x_proj = mamba::Backend::quantum;
  c.quantum.pattern = ansatz::EntanglePattern::all_to_all;
  c.input_mode = mamba::InputMode::bins;
  c.synthetic_noise = 0.1234567890123;
  const auto back = TrainConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.backends == c.backends);

  CHECK(TrainConfig::from_text("backend = hybrid\n").backends == mamba::BackendMap::all(mamba::Backend::quantum));
  CHECK(TrainConfig::from_text("# comment\nepochs = 3 # trailing\n").epochs == 3);
  CHECK_THROWS_AS(TrainConfig::from_text("epochs = 0\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("epoch = 3\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("epochs = three\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("batch_size = -1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("downsample = 3\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("backend = analog\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_text("full_train_eval = maybe\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_file("/nonexistent/cfg.txt"), IoError);
  CHECK(c.optimizer_config().groups.at(ParamGroup::classical).weight_decay == 0.01);
  CHECK(c.model_config(1, 4).layer.backends == c.backends);
}

TEST_CASE("metrics CSV") {
  const std::vector<MetricsRecord> recs{{1, 3, "train", 2.302585092994046, 0.125, 0.0},
                                        {1, 3, "test", 1.0 / 3.0, 0.5, 12.5}};
  const auto text = format_metrics_csv(recs);
  CHECK(text.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  CHECK(parse_metrics_csv(text) == recs);
  CHECK_THROWS_AS(parse_metrics_csv("a,b\n"), FormatError);
  CHECK_THROWS_AS(parse_metrics_csv(std::string(kMetricsHeader) + "\n1,2,train,0.5\n"), FormatError);
  CHECK_THROWS_AS(parse_metrics_csv(std::string(kMetricsHeader) + "\n1,2,valid,0.5,0.5,0\n"), FormatError);
}

TEST_CASE("training runs are reproducible") {
  for (auto b : {mamba::Backend::classical, mamba::Backend::quantum}) {
    const auto d1 = temp_dir("rep1"), d2 = temp_dir("rep2");
    const auto r1 = train::train(tiny(d1, b));
    const auto r2 = train::train(tiny(d2, b));
    CHECK(r1.iterations == 8);
    CHECK(slurp(r1.metrics_path) == slurp(r2.metrics_path));
    CHECK(slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path));
    CHECK(fs::exists(fs::path(d1) / "checkpoint_epoch1.ckpt"));
    CHECK(fs::exists(fs::path(d1) / "checkpoint_epoch2.ckpt"));
    CHECK(parse_metrics_csv(slurp(r1.metrics_path)) == r1.records);

    // evaluating the saved model reproduces the final test record
    const auto data = load_datasets(tiny(d1, b));
    const auto e = evaluate(r1.checkpoint_path, data.test);
    CHECK(e.loss == r1.final_test.loss);
    CHECK(e.accuracy == r1.final_test.accuracy);
    CHECK(e.samples == 20);
    CHECK(r1.records.back().split == "test");
    CHECK(r1.records.back().loss == r1.final_test.loss);
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
}

TEST_CASE("multi-threaded training matches the single-threaded run") {
  const auto d1 = temp_dir("thr1"), d2 = temp_dir("thr2");
  auto c1 = tiny(d1, mamba::Backend::quantum);
  auto c2 = tiny(d2, mamba::Backend::quantum);
  c2.threads = 2;
  const auto r1 = train::train(c1), r2 = train::train(c2);
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) CHECK(std::abs(r1.records[i].loss - r2.records[i].loss) < 1e-9);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("untrained model scores at chance") {
  auto c = tiny("unused");
  c.synthetic_classes = 10;
  c.synthetic_test = 100;
  const auto data = load_datasets(c);
  const mamba::Model m(c.model_config(1, 10));
  const auto e = evaluate(m, data.test);
  CHECK(e.loss == Approx(std::log(10.0)).epsilon(0.05));
  CHECK(e.accuracy <= 0.3);
}

TEST_CASE("two-class synthetic task is learned") {
  const auto dir = temp_dir("two");
  auto c = tiny(dir);
  c.d_model = 16;
  c.d_state = 8;
  c.d_conv = 4;
  c.synthetic_classes = 2;
  c.synthetic_train = 100;
  c.synthetic_length = 16;
  c.epochs = 10;
  c.save_checkpoints = false;
  const auto r = train::train(c);
  CHECK(r.final_test.accuracy > 0.9);
  CHECK(r.checkpoint_path.empty());
  fs::remove_all(dir);
}

TEST_CASE("shuffled labels cannot be learned beyond chance") {
  const auto dir = temp_dir("perm");
  auto c = tiny(dir);
  c.synthetic_classes = 4;
  c.synthetic_train = 80;
  c.synthetic_test = 200;
  c.epochs = 5;
  c.save_checkpoints = false;
  auto data = load_datasets(c);
  Rng rng(1);
  for (std::size_t i = data.train.labels.size(); i > 1; --i)
    std::swap(data.train.labels[i - 1], data.train.labels[rng.below(i)]);
  const auto r = train::train(c, data);
  CHECK(r.final_test.accuracy < 0.45);
  fs::remove_all(dir);
}

TEST_CASE("iteration limit and full-train evaluation") {
  const auto dir = temp_dir("limit");
  auto c = tiny(dir);
  c.max_iterations = 3;
  c.full_train_eval = true;
  c.save_checkpoints = false;
  const auto r = train::train(c);
  CHECK(r.iterations == 3);
  REQUIRE(r.initial_train);
  REQUIRE(r.final_train);
  CHECK(r.initial_train->samples == 40);
  for (const auto& rec : r.records) CHECK(rec.wall_seconds == 0.0);
  const auto table = format_comparison({{"classical", r}});
  CHECK(table.find("classical") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("data and model mismatches") {
  auto c = tiny("unused");
  const auto data = load_datasets(c);
  auto mc = c.model_config(1, 4);
  mc.input_mode = mamba::InputMode::bins;
  CHECK_THROWS_AS(evaluate(mamba::Model(mc), data.test), ConfigError);
  CHECK_THROWS_AS(evaluate(mamba::Model(c.model_config(1, 3)), data.test), ConfigError);
  auto m = c;
  m.dataset = DatasetKind::mnist;
  m.data_dir = "/nonexistent";
  CHECK_THROWS_AS(load_datasets(m), IoError);
}

TEST_CASE("shipped configs parse") {
  const auto m = TrainConfig::from_file(std::string(HQMAMBA_CONFIG_DIR) + "/mnist_scaled.cfg");
  CHECK(m.downsample == 4);
  CHECK(m.train_subset == 512);
  CHECK(m.input_mode == mamba::InputMode::bins);
  CHECK(m.lr_x_proj == 1e-4);
  const auto s = TrainConfig::from_file(std::string(HQMAMBA_CONFIG_DIR) + "/synthetic.cfg");
  CHECK(s.dataset == DatasetKind::synthetic);
  CHECK(s.max_iterations == 300);
}

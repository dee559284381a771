#include <string>

#include "dial/runner.hpp"
#include "helpers.hpp"

using namespace dial;

TEST_CASE("empty config gives the defaults") {
  const auto cfg = ExperimentConfig::parse("# nothing set\n\n");
  CHECK(cfg.to_text() == ExperimentConfig{}.to_text());
  CHECK(cfg.variant == ReferenceVariant::normal_ml());
  CHECK(cfg.lambda == 0.1);
  CHECK(cfg.lambda_sparse == 1e-4);
  CHECK(cfg.epochs == 60);
  CHECK(cfg.hidden == std::vector<std::size_t>{64, 64});
}

TEST_CASE("parse sets every kind of field") {
  const auto cfg = ExperimentConfig::parse(
      "dataset = moons\n"
      "data_n = 200  # trailing comment\n"
      "data_translation = 0.5, -2\n"
      "data_seed = 17\n"
      "hidden = 16,8,4\n"
      "da_on_head = false\n"
      "variant = normal_map\n"
      "epsilon = 0.5\n"
      "entropy_on = false\n"
      "lr_drop_at = 0.333333, 0.666667\n"
      "batch_mode = fixed\n"
      "batch_source = 32\n"
      "batch_target = 16\n"
      "seed = 99\n");
  CHECK(cfg.data.generator == "moons");
  CHECK(cfg.data.n == 200);
  CHECK(cfg.data.translation == std::vector<double>{0.5, -2.0});
  CHECK(cfg.data.seed == 17u);
  CHECK(cfg.hidden == std::vector<std::size_t>{16, 8, 4});
  CHECK_FALSE(cfg.da_on_head);
  CHECK(cfg.variant == ReferenceVariant::normal_map(0.5));
  CHECK(cfg.effective_lambda() == 0.0);
  CHECK(cfg.lr_drop_at.size() == 2);
  CHECK(cfg.batch.kind == BatchMode::Kind::Fixed);
  CHECK(cfg.batch.n_source == 32);
  CHECK(cfg.batch.n_target == 16);
  CHECK(cfg.seed == 99);
}

TEST_CASE("to_text round-trips") {
  ExperimentConfig cfg;
  cfg.variant = ReferenceVariant::laplace_ml();
  cfg.lambda = 0.123456789012345678;
  cfg.data.translation = {1.0 / 3.0, -2.0};
  cfg.data.seed = 5;
  cfg.lr_drop_at = {};
  const auto back = ExperimentConfig::parse(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.data.translation == cfg.data.translation);
  CHECK(back.lr_drop_at.empty());

  cfg.variant.reset();
  CHECK_FALSE(ExperimentConfig::parse(cfg.to_text()).variant.has_value());
}

TEST_CASE("config_keys lists exactly the keys to_text writes") {
  const std::string text = ExperimentConfig{}.to_text();
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n' ? 1 : 0;
  CHECK(config_keys().size() == lines);
  for (const auto& k : config_keys()) {
    CHECK(text.find(std::string(k.name) + " = ") != std::string::npos);
  }
}

TEST_CASE("config errors") {
  CHECK_THROWS_CODE(ExperimentConfig::parse("learning_rate = 0.1\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("lambda = 0.1\nlambda = 0.2\n"),
                    ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("lambda 0.1\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("lambda = abc\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("lambda = -1\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("epochs = 1.5\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("epochs = 0\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("affine = yes\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("variant = gaussian\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("momentum = 1\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("dataset = csv\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("batch_mode = random\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::parse("lr_drop_at = 1.5\n"), ErrorCode::ConfigError);
  CHECK_THROWS_CODE(ExperimentConfig::load("/nonexistent/dial.cfg"), ErrorCode::ConfigError);
  try {
    ExperimentConfig::parse("seed = 1\n\nbogus = 2\n");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.message().find("line 3") != std::string::npos);
  }
}

TEST_CASE("architecture from config") {
  ExperimentConfig cfg;
  cfg.hidden = {4};
  auto arch = make_architecture(cfg, 2, 3);
  REQUIRE(arch.size() == 5);
  CHECK(arch[0] == LayerSpec::dense(2, 4));
  CHECK(arch[1].kind == LayerSpec::Kind::DaLayer);
  CHECK(arch[2] == LayerSpec::relu());
  CHECK(arch[3] == LayerSpec::dense(4, 3));
  CHECK(arch[4].kind == LayerSpec::Kind::DaLayer);

  cfg.da_on_head = false;
  CHECK(make_architecture(cfg, 2, 3).size() == 4);
  cfg.variant.reset();
  CHECK(make_architecture(cfg, 2, 3).size() == 3);
  cfg.variant = ReferenceVariant::normal_ml();
  cfg.affine = true;
  CHECK(make_architecture(cfg, 2, 3)[1].affine);
}

TEST_CASE("dataset from config") {
  ExperimentConfig cfg;
  cfg.data.n = 60;
  cfg.data.m = 48;
  const auto a = make_dataset(cfg);
  CHECK(a.source_count() == 60);
  CHECK(a.target_count() == 48);
  cfg.seed = 2;
  CHECK(make_dataset(cfg).source_x != a.source_x);
  cfg.data.seed = 1;
  CHECK(make_dataset(cfg).source_x == a.source_x);
  cfg.data.generator = "moons";
  CHECK(make_dataset(cfg).classes == 2);
}

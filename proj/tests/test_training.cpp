#include <doctest.h>

#include <cmath>
#include <sstream>

#include "msecnn/errors.hpp"
#include "msecnn/model.hpp"
#include "msecnn/rng.hpp"
#include "msecnn/training.hpp"
#include "support.hpp"

using namespace msecnn;
using testsupport::central_diff;
using testsupport::random_tensor;

namespace {

// Deterministic in-memory dataset: a handful of fixed random spectrogram-like
// inputs whose labels depend on simple input statistics, so a tiny model can
// drive the loss toward zero.
class ToySource : public BatchSource<double> {
 public:
  ToySource(const ModelConfig& cfg, Index n, std::uint64_t seed) : cfg_(cfg) {
    Xoshiro256pp rng(seed);
    for (Index i = 0; i < n; ++i) {
      Example<double> ex;
      ex.x = Tensor<double>({cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]});
      const double offset = rng.bernoulli(0.5) ? 1.0 : -1.0;
      for (auto& v : ex.x.data) v = rng.uniform(-0.5, 0.5) + offset;
      ex.y = Tensor<double>({cfg.n_tags});
      for (Index t = 0; t < cfg.n_tags; ++t)
        ex.y[t] = (t % 2 == 0 ? offset > 0.0 : offset < 0.0) ? 1.0 : 0.0;
      examples_.push_back(std::move(ex));
    }
  }
  Index size() const override { return static_cast<Index>(examples_.size()); }
  Example<double> get(Index i) const override { return examples_[static_cast<size_t>(i)]; }

 private:
  ModelConfig cfg_;
  std::vector<Example<double>> examples_;
};

}  // namespace

TEST_CASE("bce of scores one half is ln 2") {
  auto scores = Tensor<double>::full({2, 3}, 0.5);
  auto labels = Tensor<double>::zeros({2, 3});
  labels[0] = 1.0;
  labels[4] = 1.0;
  const auto r = bce_loss(scores, labels);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce of a confident correct prediction is near zero and clamped") {
  auto scores = Tensor<double>({1, 2});
  scores[0] = 1.0;  // clamps to 1 - 1e-7
  scores[1] = 0.0;  // clamps to 1e-7
  auto labels = Tensor<double>({1, 2});
  labels[0] = 1.0;
  labels[1] = 0.0;
  const auto r = bce_loss(scores, labels);
  CHECK(r.loss == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));
  CHECK(std::isfinite(r.loss));
  for (const double g : r.dscores.data) CHECK(std::isfinite(g));
}

TEST_CASE("bce rejects labels that are not 0 or 1") {
  auto scores = Tensor<double>::full({1, 2}, 0.5);
  auto labels = Tensor<double>::full({1, 2}, 0.3);
  CHECK_THROWS_AS(bce_loss(scores, labels), ArgumentError);
}

TEST_CASE("bce score gradients match central differences") {
  Xoshiro256pp rng(71);
  auto scores = random_tensor<double>({3, 4}, rng, 0.05, 0.95);
  Tensor<double> labels({3, 4});
  for (auto& v : labels.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const auto r = bce_loss(scores, labels);
  auto loss = [&] { return bce_loss(scores, labels).loss; };
  for (Index f = 0; f < scores.numel(); ++f)
    CHECK(std::abs(r.dscores[f] - central_diff(loss, scores, f)) < 1e-6);
}

TEST_CASE("the first adam step moves a zero parameter by about minus lr") {
  ModelConfig cfg = tiny_model_config(Variant::Fcn5);
  auto state = build_model<double>(cfg, 1);
  for (auto* t : param_tensors(state.params))
    for (auto& v : t->data) v = 0.0;
  auto grads = zeros_like(state.params);
  for (auto* t : param_tensors(grads))
    for (auto& v : t->data) v = 0.5;
  auto adam = AdamState<double>::init(state.params);
  TrainConfig tc;
  adam_step(state.params, grads, adam, tc);
  CHECK(adam.t == 1);
  for (auto* t : param_tensors(state.params))
    for (const double v : t->data) CHECK(v == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("zero gradients never move parameters") {
  ModelConfig cfg = tiny_model_config(Variant::MseCnn);
  auto state = build_model<double>(cfg, 2);
  const auto before = state;
  auto grads = zeros_like(state.params);
  auto adam = AdamState<double>::init(state.params);
  TrainConfig tc;
  for (int i = 0; i < 5; ++i) adam_step(state.params, grads, adam, tc);
  auto now = param_tensors(state.params);
  auto then = param_tensors(const_cast<ModelState<double>&>(before).params);
  for (size_t k = 0; k < now.size(); ++k)
    for (size_t i = 0; i < now[k]->data.size(); ++i)
      CHECK(now[k]->data[i] == then[k]->data[i]);
}

TEST_CASE("a zero learning rate trains batchnorm statistics but no parameters") {
  ModelConfig cfg = tiny_model_config(Variant::Fcn5);
  auto state = build_model<double>(cfg, 3);
  const auto initial = state;
  ToySource data(cfg, 8, 5);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.batch_size = 4;
  auto adam = AdamState<double>::init(state.params);
  train_epoch(state, adam, data, cfg, tc, 0);
  auto now = param_tensors(state.params);
  auto then = param_tensors(const_cast<ModelState<double>&>(initial).params);
  for (size_t k = 0; k < now.size(); ++k)
    for (size_t i = 0; i < now[k]->data.size(); ++i)
      CHECK(now[k]->data[i] == then[k]->data[i]);
  CHECK(state.bn_stats[0].updates > 0);
}

TEST_CASE("identical seeds give bit-identical training runs") {
  ModelConfig cfg = tiny_model_config(Variant::MseCnn);
  cfg.dropout_rate = 0.25;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 3;
  tc.early_stop_patience = 0;
  ToySource data(cfg, 10, 8);

  auto run = [&] {
    auto state = build_model<double>(cfg, tc.seed);
    std::ostringstream log;
    auto fit_result =
        fit(std::move(state), cfg, tc, data, static_cast<const BatchSource<double>*>(nullptr), log);
    return fit_result;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.final_train_loss == b.final_train_loss);
  auto ta = param_tensors(const_cast<ModelState<double>&>(a.best_state).params);
  auto tb = param_tensors(const_cast<ModelState<double>&>(b.best_state).params);
  for (size_t k = 0; k < ta.size(); ++k)
    for (size_t i = 0; i < ta[k]->data.size(); ++i) CHECK(ta[k]->data[i] == tb[k]->data[i]);
}

TEST_CASE("fit writes one log line per epoch in the documented format") {
  ModelConfig cfg = tiny_model_config(Variant::Fcn5);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 2;
  ToySource train(cfg, 8, 11);
  ToySource val(cfg, 4, 12);
  std::ostringstream log;
  auto state = build_model<double>(cfg, 4);
  fit(std::move(state), cfg, tc, train, &val, log);
  std::istringstream lines(log.str());
  std::string word;
  int epoch_lines = 0;
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != "epoch") continue;
    ++epoch_lines;
    Index num;
    ls >> num;
    CHECK(num == epoch_lines);
    ls >> word;
    CHECK(word == "train_loss");
    double v;
    ls >> v;
    CHECK(std::isfinite(v));
    ls >> word;
    CHECK(word == "val_roc_auc");
    ls >> word;  // value, may be nan
    ls >> word;
    CHECK(word == "val_pr_auc");
  }
  CHECK(epoch_lines == 2);
}

TEST_CASE("validation metrics are reported as nan when every tag is degenerate") {
  ModelConfig cfg = tiny_model_config(Variant::Fcn5);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 1;

  class AllZeroLabels : public BatchSource<double> {
   public:
    explicit AllZeroLabels(const ModelConfig& cfg) : cfg_(cfg) {}
    Index size() const override { return 4; }
    Example<double> get(Index i) const override {
      Example<double> ex;
      ex.x = Tensor<double>::full({cfg_.input_shape[0], cfg_.input_shape[1], cfg_.input_shape[2]},
                                  static_cast<double>(i) * 0.1);
      ex.y = Tensor<double>::zeros({cfg_.n_tags});
      return ex;
    }

   private:
    ModelConfig cfg_;
  } degenerate(cfg);

  ToySource train(cfg, 8, 21);
  std::ostringstream log;
  auto state = build_model<double>(cfg, 6);
  const auto r = fit(std::move(state), cfg, tc, train, &degenerate, log);
  CHECK(log.str().find("val_roc_auc nan") != std::string::npos);
  CHECK(std::isnan(r.best_val_roc));
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
  ModelConfig cfg = tiny_model_config(Variant::Fcn5);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 50;
  tc.early_stop_patience = 3;
  tc.learning_rate = 0.0;  // metrics can never improve after the first epoch
  ToySource train(cfg, 8, 31);
  ToySource val(cfg, 6, 32);
  std::ostringstream log;
  auto state = build_model<double>(cfg, 7);
  const auto r = fit(std::move(state), cfg, tc, train, &val, log);
  CHECK(r.epochs_run == 4);  // first epoch sets the best, then patience runs out
}

TEST_CASE("training configuration validation") {
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ArgumentError);
  tc = TrainConfig{};
  tc.max_epochs = -1;
  CHECK_THROWS_AS(tc.validate(), ArgumentError);
  tc = TrainConfig{};
  tc.learning_rate = -0.5;
  CHECK_THROWS_AS(tc.validate(), ArgumentError);
  tc = TrainConfig{};
  tc.max_epochs = 0;  // allowed: evaluation-only fit
  tc.validate();
}

TEST_CASE("backward matches finite differences for both tiny variants") {
  for (const Variant variant : {Variant::Fcn5, Variant::MseCnn}) {
    const GradCheckResult r = gradient_check(tiny_model_config(variant), 1);
    INFO(to_string(variant), " worst ", r.worst_param, "[", r.worst_index, "]");
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("the gradient check catches a corrupted backward pass") {
  const GradCheckResult r =
      gradient_check(tiny_model_config(Variant::MseCnn), 1, 1e-4, [](ParamSet<double>& grads) {
        for (auto& v : grads.dense_w.data) v *= 1.1;
      });
  CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("a tiny model overfits the toy dataset") {
  for (const Variant variant : {Variant::Fcn5, Variant::MseCnn}) {
    ModelConfig cfg = tiny_model_config(variant);
    TrainConfig tc;
    tc.learning_rate = 0.03;
    tc.batch_size = 8;
    tc.max_epochs = 100;
    ToySource data(cfg, 8, 77);
    auto state = build_model<double>(cfg, 9);
    auto adam = AdamState<double>::init(state.params);
    std::vector<double> losses;
    for (Index e = 0; e < tc.max_epochs; ++e)
      losses.push_back(train_epoch(state, adam, data, cfg, tc, e));
    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) {
      early += losses[static_cast<size_t>(i)];
      late += losses[losses.size() - 1 - static_cast<size_t>(i)];
    }
    INFO(to_string(variant));
    CHECK(late < early * 0.5);
    CHECK(losses.back() < 0.05);
  }
}

#include "rsnmt/training.hpp"

#include <cmath>

namespace rsnmt {

double lr_at(int64_t step, const TrainConfig& cfg, int d_model) {
  if (step < 1) throw ConfigError("lr_at: step must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(cfg.warmup_steps);
  return cfg.base_lr * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

AdamState make_adam_state(const ModelWeights<float>& w) {
  AdamState st;
  for (const auto& [name, t] : w.named_parameters()) {
    (void)name;
    st.m.emplace_back(t->data.size(), 0.0f);
    st.v.emplace_back(t->data.size(), 0.0f);
  }
  return st;
}

std::pair<Batch, std::vector<int32_t>> shift_targets(const Batch& tgt) {
  if (tgt.cols < 2) throw DataError("shift_targets: target batch needs at least 2 columns");
  Batch input;
  input.rows = tgt.rows;
  input.cols = tgt.cols - 1;
  input.ids.resize(static_cast<size_t>(input.rows * input.cols));
  input.mask.resize(static_cast<size_t>(input.rows * input.cols));
  std::vector<int32_t> labels(static_cast<size_t>(input.rows * input.cols));
  for (int64_t r = 0; r < tgt.rows; ++r) {
    for (int64_t c = 0; c + 1 < tgt.cols; ++c) {
      input.ids[static_cast<size_t>(r * input.cols + c)] = tgt.at(r, c);
      input.mask[static_cast<size_t>(r * input.cols + c)] =
          tgt.mask[static_cast<size_t>(r * tgt.cols + c)];
      labels[static_cast<size_t>(r * input.cols + c)] = tgt.at(r, c + 1);
    }
    input.lengths.push_back(std::max<int32_t>(0, tgt.lengths[static_cast<size_t>(r)] - 1));
  }
  return {std::move(input), std::move(labels)};
}

float train_step(ModelWeights<float>& w, const Batch& src, const Batch& tgt, AdamState& opt,
                 const TrainConfig& cfg, int64_t schedule_step, Rng* dropout_rng) {
  auto params = w.named_parameters();
  for (auto& [name, p] : params) {
    (void)name;
    p->zero_grad();
  }

  Tape<float> tape;
  ForwardOptions fwd;
  fwd.dropout = w.config.dropout;
  fwd.dropout_rng = dropout_rng;
  auto enc = encode(&tape, w, src, fwd);
  auto [dec_input, labels] = shift_targets(tgt);
  auto dec = decode_forward(&tape, w, enc.hidden, src, dec_input, fwd);

  int64_t rows = dec.logits->dim(0) * dec.logits->dim(1);
  int64_t vocab = dec.logits->dim(2);
  auto flat = ops::reshape(&tape, dec.logits, {rows, vocab});
  auto loss = ops::cross_entropy(&tape, flat, labels,
                                 static_cast<float>(cfg.label_smoothing), kPadId);
  float loss_val = value(loss);
  if (!std::isfinite(loss_val)) {
    throw TrainError("training diverged: non-finite loss at step " +
                     std::to_string(schedule_step));
  }
  tape.backward(loss);

  double lr = lr_at(schedule_step, cfg, w.config.d_model);
  opt.t += 1;
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(opt.t));
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(opt.t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].second;
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    const bool has_grad = p.has_grad();
    for (size_t j = 0; j < p.data.size(); ++j) {
      double g = has_grad ? static_cast<double>(p.grad[j]) : 0.0;
      double mj = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g;
      double vj = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.adam_eps);
      p.data[j] = static_cast<float>(p.data[j] - update);
    }
  }
  return loss_val;
}

}  // namespace rsnmt

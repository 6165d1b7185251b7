#include <algorithm>
#include <cmath>

#include "cfner/error.hpp"
#include "cfner/tagger.hpp"
#include "tagger_internal.hpp"

namespace cfner {

RowLoss evaluate_row(const RowObjective& objective, std::span<const double> logits) {
  RowLoss out;
  out.dlogits.assign(logits.size(), 0.0);
  if (objective.kind == RowLossKind::None) return out;

  const std::size_t support = objective.support == 0 ? logits.size() : objective.support;
  if (support > logits.size()) throw InvariantError("objective support exceeds label count");
  const double temperature = objective.temperature;
  const std::vector<double> q = softmax(logits, temperature, support);

  std::vector<double> mixed(support);
  for (std::size_t c = 0; c < support; ++c) {
    mixed[c] = objective.anchor_weight * q[c] +
               (objective.detached.empty() ? 0.0 : objective.detached[c]);
  }

  // gradient w.r.t. the mixed row
  std::vector<double> g(support, 0.0);
  if (objective.kind == RowLossKind::CrossEntropy) {
    if (objective.target >= support) throw InvariantError("cross-entropy target outside support");
    out.value = -std::log(mixed[objective.target]);
    g[objective.target] = -1.0 / mixed[objective.target];
  } else {
    const auto& teacher = objective.teacher;
    if (teacher.size() != support) throw InvariantError("teacher row does not match support");
    for (std::size_t c = 0; c < support; ++c) {
      if (objective.kl_order == KlOrder::StudentFirst) {
        const double log_ratio = std::log(mixed[c] / teacher[c]);
        out.value += mixed[c] * log_ratio;
        g[c] = log_ratio + 1.0;
      } else if (teacher[c] > 0.0) {
        out.value += teacher[c] * std::log(teacher[c] / mixed[c]);
        g[c] = -teacher[c] / mixed[c];
      }
    }
  }
  if (!std::isfinite(out.value)) {
    throw NumericError(objective.component, "non-finite row loss");
  }

  // through the softmax: dL/dz_c = (a / T) q_c (g_c - <g, q>)
  double inner = 0.0;
  for (std::size_t c = 0; c < support; ++c) inner += g[c] * q[c];
  const double factor = objective.anchor_weight / temperature;
  for (std::size_t c = 0; c < support; ++c) out.dlogits[c] = factor * q[c] * (g[c] - inner);
  return out;
}

GradientBundle GradientBundle::zeros_like(const TaggerModel& model) {
  GradientBundle bundle;
  for (const auto& p : model.parameters()) bundle.tensors.emplace_back(p.size(), 0.0);
  return bundle;
}

double GradientBundle::max_abs() const {
  double m = 0.0;
  for (const auto& t : tensors) {
    for (double v : t) m = std::max(m, std::abs(v));
  }
  return m;
}

namespace {

enum Slot : std::size_t { kEmbedding, kWindowProj, kHiddenBias, kFeatureProj, kFeatureBias, kPrototypes };

void check_shape(std::span<const TokenIds> batch, const BatchObjectives& objectives) {
  if (objectives.size() != batch.size()) throw InvariantError("objectives do not match batch");
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (objectives[s].size() != batch[s].size()) {
      throw InvariantError("objectives do not match sentence length");
    }
  }
}

// Backpropagates dL/dlogits of one token into `grads`.
void backward_token(const TaggerModel& model, const detail::PrototypeCache& protos,
                    const detail::TokenCache& cache, std::span<const double> dlogits,
                    GradientBundle& grads) {
  const auto& cfg = model.config;
  const auto& enc = model.encoder;
  const double scale = model.classifier.scale;
  const std::size_t d = cfg.feature_dim;
  const std::size_t dh = cfg.hidden_dim;
  const std::size_t de = cfg.embed_dim;

  std::vector<double> g_feature(d, 0.0);
  auto& g_protos = grads.tensors[kPrototypes];
  for (std::size_t c = 0; c < protos.unit.rows; ++c) {
    const double gc = dlogits[c];
    if (gc == 0.0) continue;
    const auto unit = protos.unit.row(c);
    double cosine = 0.0;
    for (std::size_t j = 0; j < d; ++j) cosine += cache.feature[j] * unit[j];
    const double factor = gc * scale / protos.norms[c];
    for (std::size_t j = 0; j < d; ++j) {
      g_feature[j] += gc * scale * unit[j];
      g_protos[c * d + j] += factor * (cache.feature[j] - cosine * unit[j]);
    }
  }

  // x = u / |u|
  double radial = 0.0;
  for (std::size_t j = 0; j < d; ++j) radial += g_feature[j] * cache.feature[j];
  std::vector<double> g_pre(d);
  for (std::size_t j = 0; j < d; ++j) {
    g_pre[j] = (g_feature[j] - radial * cache.feature[j]) / cache.norm;
  }

  auto& g_fbias = grads.tensors[kFeatureBias];
  auto& g_fproj = grads.tensors[kFeatureProj];
  std::vector<double> g_act(dh, 0.0);
  for (std::size_t j = 0; j < d; ++j) g_fbias[j] += g_pre[j];
  for (std::size_t i = 0; i < dh; ++i) {
    const double h = cache.hidden[i];
    const double* wrow = enc.feature_proj.data.data() + i * d;
    double* grow = g_fproj.data() + i * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      grow[j] += h * g_pre[j];
      acc += wrow[j] * g_pre[j];
    }
    g_act[i] = acc * (1.0 - h * h);
  }

  auto& g_hbias = grads.tensors[kHiddenBias];
  auto& g_wproj = grads.tensors[kWindowProj];
  auto& g_embed = grads.tensors[kEmbedding];
  for (std::size_t i = 0; i < dh; ++i) g_hbias[i] += g_act[i];
  for (std::size_t w = 0; w < cache.window_ids.size(); ++w) {
    const std::uint32_t id = cache.window_ids[w];
    if (id == detail::kPadding) continue;
    const double* emb = enc.embedding.data.data() + static_cast<std::size_t>(id) * de;
    double* gemb = g_embed.data() + static_cast<std::size_t>(id) * de;
    for (std::size_t i = 0; i < de; ++i) {
      const std::size_t row = w * de + i;
      const double* wrow = enc.window_proj.data.data() + row * dh;
      double* grow = g_wproj.data() + row * dh;
      double acc = 0.0;
      for (std::size_t j = 0; j < dh; ++j) {
        grow[j] += emb[i] * g_act[j];
        acc += wrow[j] * g_act[j];
      }
      gemb[i] += acc;
    }
  }
}

template <bool kWithGrads>
double run_objectives(const TaggerModel& model, std::span<const TokenIds> batch,
                      const BatchObjectives& objectives, GradientBundle* grads) {
  check_shape(batch, objectives);
  const detail::PrototypeCache protos(model);
  detail::TokenCache cache;
  std::vector<double> z;
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t t = 0; t < batch[s].size(); ++t) {
      const RowObjective& objective = objectives[s][t];
      if (objective.kind == RowLossKind::None || objective.weight == 0.0) continue;
      detail::forward_token(model, batch[s], t, cache);
      detail::cosine_logits(model, protos, cache.feature, z);
      RowLoss row = evaluate_row(objective, z);
      total += objective.weight * row.value;
      if constexpr (kWithGrads) {
        for (double& g : row.dlogits) g *= objective.weight;
        backward_token(model, protos, cache, row.dlogits, *grads);
      }
    }
  }
  if (!std::isfinite(total)) throw NumericError("total", "non-finite batch loss");
  return total;
}

}  // namespace

LossAndGrads loss_and_grads(const TaggerModel& model, std::span<const TokenIds> batch,
                            const BatchObjectives& objectives) {
  LossAndGrads result;
  result.grads = GradientBundle::zeros_like(model);
  result.value = run_objectives<true>(model, batch, objectives, &result.grads);
  return result;
}

double loss_value(const TaggerModel& model, std::span<const TokenIds> batch,
                  const BatchObjectives& objectives) {
  return run_objectives<false>(model, batch, objectives, nullptr);
}

AdamState AdamState::zeros_like(const TaggerModel& model) {
  AdamState state;
  for (const auto& p : model.parameters()) {
    state.first_moment.emplace_back(p.size(), 0.0);
    state.second_moment.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adam_step(TaggerModel& model, const GradientBundle& grads, AdamState& state,
               const AdamConfig& config) {
  auto params = model.parameters();
  if (grads.tensors.size() != params.size() || state.first_moment.size() != params.size()) {
    throw InvariantError("optimizer state does not match model parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    const auto& g = grads.tensors[p];
    if (g.size() != params[p].size() || m.size() != params[p].size()) {
      throw InvariantError("gradient shape mismatch");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[p][i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace cfner

#include "multirobust/sandbox/model.hpp"

#include <algorithm>
#include <cmath>

#include "multirobust/error.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace mrb {

namespace {

void check_finite(std::span<const double> values, int layer) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kNumeric, "non-finite activation in layer " + std::to_string(layer));
    }
  }
}

// Gradient of the loss w.r.t. the features feeding the output layer, given
// ws.dlogits.
void output_backprop(const SandboxModel& m, Workspace& ws) {
  const std::size_t f = m.feature_dim();
  ws.dact.assign(f, 0.0);
  for (int k = 0; k < m.num_classes; ++k) {
    const double g = ws.dlogits[static_cast<std::size_t>(k)];
    const double* row = m.w2.data() + static_cast<std::size_t>(k) * f;
    for (std::size_t j = 0; j < f; ++j) ws.dact[j] += g * row[j];
  }
  if (m.hidden > 0) {
    for (std::size_t j = 0; j < f; ++j) ws.dact[j] *= 1.0 - ws.act[j] * ws.act[j];
  }
}

}  // namespace

SandboxModel SandboxModel::zeros(int height, int width, int hidden, int num_classes) {
  if (height < 1 || width < 1 || hidden < 0 || num_classes < 2) {
    throw Error(ErrorKind::kConfiguration, "model: invalid layer dimensions");
  }
  SandboxModel m;
  m.height = height;
  m.width = width;
  m.hidden = hidden;
  m.num_classes = num_classes;
  const std::size_t in = m.input_dim();
  const std::size_t h = static_cast<std::size_t>(hidden);
  const std::size_t c = static_cast<std::size_t>(num_classes);
  m.w1.assign(h * in, 0.0);
  m.b1.assign(h, 0.0);
  m.w2.assign(c * m.feature_dim(), 0.0);
  m.b2.assign(c, 0.0);
  return m;
}

SandboxModel SandboxModel::random(int height, int width, int hidden, int num_classes, Rng& rng) {
  SandboxModel m = zeros(height, width, hidden, num_classes);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(m.input_dim()));
  for (double& v : m.w1) v = rng.uniform(-s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(m.feature_dim()));
  for (double& v : m.w2) v = rng.uniform(-s2, s2);
  return m;
}

void SandboxModel::validate() const {
  const std::size_t h = static_cast<std::size_t>(std::max(hidden, 0));
  const std::size_t c = static_cast<std::size_t>(std::max(num_classes, 0));
  if (height < 1 || width < 1 || hidden < 0 || num_classes < 2 || w1.size() != h * input_dim() ||
      b1.size() != h || w2.size() != c * feature_dim() || b2.size() != c) {
    throw Error(ErrorKind::kSchema, "model: parameter shapes do not match the declared dimensions");
  }
  for (const auto* p : {&w1, &b1, &w2, &b2}) {
    for (double v : *p) {
      if (!std::isfinite(v)) throw Error(ErrorKind::kSchema, "model: non-finite parameter");
    }
  }
}

double forward(const SandboxModel& m, std::span<const double> x, int label, Workspace& ws) {
  const std::size_t in = m.input_dim();
  if (x.size() != in) {
    throw Error(ErrorKind::kConfiguration, "model: input has " + std::to_string(x.size()) +
                                               " values, expected " + std::to_string(in));
  }
  std::span<const double> features = x;
  if (m.hidden > 0) {
    const std::size_t h = static_cast<std::size_t>(m.hidden);
    ws.pre.resize(h);
    ws.act.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double* row = m.w1.data() + j * in;
      double s = m.b1[j];
      for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
      ws.pre[j] = s;
      ws.act[j] = std::tanh(s);
    }
    check_finite(ws.pre, 1);
    features = ws.act;
  }
  const std::size_t f = m.feature_dim();
  const std::size_t c = static_cast<std::size_t>(m.num_classes);
  ws.logits.resize(c);
  ws.probs.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    const double* row = m.w2.data() + k * f;
    double s = m.b2[k];
    for (std::size_t j = 0; j < f; ++j) s += row[j] * features[j];
    ws.logits[k] = s;
  }
  check_finite(ws.logits, m.hidden > 0 ? 2 : 1);
  const double mx = *std::ranges::max_element(ws.logits);
  double z = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    ws.probs[k] = std::exp(ws.logits[k] - mx);
    z += ws.probs[k];
  }
  for (double& p : ws.probs) p /= z;
  if (label < 0) return 0.0;
  return mx + std::log(z) - ws.logits[static_cast<std::size_t>(label)];
}

std::vector<double> logits(const SandboxModel& model, std::span<const double> x) {
  Workspace ws;
  forward(model, x, -1, ws);
  return ws.logits;
}

int predict(const SandboxModel& model, std::span<const double> x, Workspace& ws) {
  forward(model, x, -1, ws);
  return static_cast<int>(std::ranges::max_element(ws.logits) - ws.logits.begin());
}

int predict(const SandboxModel& model, std::span<const double> x) {
  Workspace ws;
  return predict(model, x, ws);
}

double loss(const SandboxModel& model, std::span<const double> x, int label) {
  Workspace ws;
  return forward(model, x, label, ws);
}

double input_gradient(const SandboxModel& m, std::span<const double> x, int label,
                      std::span<double> grad, Workspace& ws) {
  const double l = forward(m, x, label, ws);
  ws.dlogits = ws.probs;
  ws.dlogits[static_cast<std::size_t>(label)] -= 1.0;
  output_backprop(m, ws);
  const std::size_t in = m.input_dim();
  if (m.hidden == 0) {
    std::copy(ws.dact.begin(), ws.dact.end(), grad.begin());
    return l;
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t j = 0; j < static_cast<std::size_t>(m.hidden); ++j) {
    const double g = ws.dact[j];
    const double* row = m.w1.data() + j * in;
    for (std::size_t i = 0; i < in; ++i) grad[i] += g * row[i];
  }
  return l;
}

Gradients Gradients::zeros_like(const SandboxModel& model) {
  Gradients g;
  g.w1.assign(model.w1.size(), 0.0);
  g.b1.assign(model.b1.size(), 0.0);
  g.w2.assign(model.w2.size(), 0.0);
  g.b2.assign(model.b2.size(), 0.0);
  g.input.assign(model.input_dim(), 0.0);
  return g;
}

double accumulate_gradients(const SandboxModel& m, std::span<const double> x, int label,
                            double scale, Gradients& acc, Workspace& ws) {
  const double l = forward(m, x, label, ws);
  ws.dlogits = ws.probs;
  ws.dlogits[static_cast<std::size_t>(label)] -= 1.0;

  const std::size_t f = m.feature_dim();
  std::span<const double> features = m.hidden > 0 ? std::span<const double>(ws.act) : x;
  for (std::size_t k = 0; k < static_cast<std::size_t>(m.num_classes); ++k) {
    const double g = scale * ws.dlogits[k];
    acc.b2[k] += g;
    double* row = acc.w2.data() + k * f;
    for (std::size_t j = 0; j < f; ++j) row[j] += g * features[j];
  }
  if (m.hidden > 0) {
    output_backprop(m, ws);
    const std::size_t in = m.input_dim();
    for (std::size_t j = 0; j < static_cast<std::size_t>(m.hidden); ++j) {
      const double g = scale * ws.dact[j];
      acc.b1[j] += g;
      double* row = acc.w1.data() + j * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += g * x[i];
    }
  }
  return l;
}

Gradients backward(const SandboxModel& model, std::span<const double> x, int label) {
  Gradients g = Gradients::zeros_like(model);
  Workspace ws;
  g.loss = accumulate_gradients(model, x, label, 1.0, g, ws);
  input_gradient(model, x, label, g.input, ws);
  return g;
}

double& parameter(SandboxModel& m, std::size_t index) {
  for (auto* p : {&m.w1, &m.b1, &m.w2, &m.b2}) {
    if (index < p->size()) return (*p)[index];
    index -= p->size();
  }
  throw Error(ErrorKind::kConfiguration, "model: parameter index out of range");
}

double gradient_entry(const Gradients& g, std::size_t index) {
  for (const auto* p : {&g.w1, &g.b1, &g.w2, &g.b2}) {
    if (index < p->size()) return (*p)[index];
    index -= p->size();
  }
  throw Error(ErrorKind::kConfiguration, "gradients: index out of range");
}

}  // namespace mrb

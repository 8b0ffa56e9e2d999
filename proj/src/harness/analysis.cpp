#include "awml/harness/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "awml/common/error.hpp"

namespace awml::harness {

namespace {
constexpr std::size_t kEndWindow = 5;
constexpr std::size_t kMinSeeds = 3;
constexpr double kSdBand = 2.0;
constexpr int kNewtonIters = 100;
}  // namespace

double end_loss(std::span<const double> series) {
  if (series.size() < kEndWindow) {
    throw ContractError("end_loss: needs at least 5 validation points, got " + std::to_string(series.size()));
  }
  return mean(series.subspan(series.size() - kEndWindow));
}

double end_performance(std::span<const double> series) { return 1.0 / end_loss(series); }

double ratio_vs_random(double ours_loss, double random_loss) {
  if (!(ours_loss > 0.0 && random_loss > 0.0)) throw ContractError("ratio_vs_random: losses must be positive");
  return random_loss / ours_loss;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

std::vector<std::uint32_t> slot_masks(const RunRecord& record) {
  std::vector<std::uint32_t> masks(record.slot_behavior.size(), 0);
  for (std::size_t a = 0; a < record.agent_slot.size(); ++a) masks[record.agent_slot[a]] |= 1u << a;
  return masks;
}

std::size_t animate_slot_of(const RunRecord& record) {
  if (record.slot_behavior.empty()) throw ContractError("run record has no behavior slots");
  return record.slot_behavior.size() - 1;
}

std::vector<std::size_t> noise_slots(const RunRecord& record) {
  std::vector<std::size_t> out;
  const std::size_t animate = animate_slot_of(record);
  for (std::size_t s = 0; s < animate; ++s) {
    if (record.slot_behavior[s] == env::behavior_name(env::BehaviorKind::Noise)) out.push_back(s);
  }
  return out;
}

}  // namespace

AttentionRatio animate_ratio(const RunRecord& record) {
  if (record.visibility.empty()) throw ContractError("animate_ratio: empty visibility log");
  const auto masks = slot_masks(record);
  const auto noise = noise_slots(record);
  if (noise.empty()) throw ContractError("animate_ratio: world has no noise agent");
  const std::uint32_t animate = masks[animate_slot_of(record)];
  AttentionRatio r;
  double noise_total = 0.0;
  for (std::uint32_t bits : record.visibility) {
    if (bits & animate) r.animate_steps += 1.0;
    for (std::size_t s : noise) {
      if (bits & masks[s]) noise_total += 1.0;
    }
  }
  r.noise_steps = noise_total / static_cast<double>(noise.size());
  r.value = r.noise_steps > 0.0 ? r.animate_steps / r.noise_steps : std::numeric_limits<double>::infinity();
  return r;
}

std::vector<double> attention_differential(const RunRecord& record, std::size_t window, Reference reference) {
  if (window == 0) throw ContractError("attention_differential: window must be positive");
  const auto masks = slot_masks(record);
  const std::size_t animate = animate_slot_of(record);
  std::vector<std::size_t> others;
  if (reference == Reference::NoiseOnly) {
    others = noise_slots(record);
  } else {
    for (std::size_t s = 0; s < animate; ++s) others.push_back(s);
  }
  if (others.empty()) throw ContractError("attention_differential: no reference agents");
  std::vector<double> out;
  for (std::size_t start = 0; start + window <= record.visibility.size(); start += window) {
    double a = 0.0;
    double o = 0.0;
    for (std::size_t t = start; t < start + window; ++t) {
      const std::uint32_t bits = record.visibility[t];
      if (bits & masks[animate]) a += 1.0;
      for (std::size_t s : others) {
        if (bits & masks[s]) o += 1.0;
      }
    }
    const double w = static_cast<double>(window);
    out.push_back(a / w - o / (w * static_cast<double>(others.size())));
  }
  return out;
}

std::string_view failure_name(FailureLabel label) {
  switch (label) {
    case FailureLabel::None:
      return "none";
    case FailureLabel::Indifference:
      return "indifference";
    case FailureLabel::NoiseFixation:
      return "noise_fixation";
  }
  return "none";
}

FailureLabel classify_failure(std::span<const double> signal_ratios, std::span<const double> random_ratios,
                              env::WorldKind world) {
  if (signal_ratios.size() < kMinSeeds || random_ratios.size() < kMinSeeds) {
    throw AnalysisError("classify_failure: needs at least 3 seeds per condition");
  }
  const double ours = mean(signal_ratios);
  const double base = mean(random_ratios);
  const double band = kSdBand * sample_sd(random_ratios);
  if (!std::isfinite(ours) || !std::isfinite(base)) throw AnalysisError("classify_failure: non-finite ratio");
  if (world == env::WorldKind::Noise && ours < base - band) return FailureLabel::NoiseFixation;
  if (std::abs(ours - base) <= band) return FailureLabel::Indifference;
  return FailureLabel::None;
}

std::vector<int> tertile_classes(std::span<const IndicatorRun> runs) {
  std::map<std::string, std::vector<std::size_t>> by_behavior;
  for (std::size_t i = 0; i < runs.size(); ++i) by_behavior[runs[i].behavior].push_back(i);
  std::vector<int> classes(runs.size(), 0);
  for (auto& [name, idx] : by_behavior) {
    if (idx.size() < 3) throw AnalysisError("tertile_classes: behavior " + name + " has an empty tertile");
    std::vector<double> end(runs.size());
    for (std::size_t i : idx) end[i] = end_loss(runs[i].validation_losses);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return end[a] < end[b]; });
    for (std::size_t r = 0; r < idx.size(); ++r) classes[idx[r]] = static_cast<int>(3 * r / idx.size());
  }
  return classes;
}

std::vector<double> performance_features(const IndicatorRun& run, std::uint64_t horizon) {
  std::vector<double> f;
  for (std::size_t i = 0; i < run.validation_steps.size(); ++i) {
    if (run.validation_steps[i] <= horizon) f.push_back(std::log(run.validation_losses[i]));
  }
  return f;
}

std::vector<double> attention_features(const IndicatorRun& run, std::uint64_t horizon, std::size_t buckets) {
  if (buckets == 0 || horizon < buckets) throw ContractError("attention_features: horizon shorter than buckets");
  if (run.animate_visible.size() < horizon) throw ContractError("attention_features: log shorter than horizon");
  std::vector<double> f(buckets, 0.0);
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * horizon / buckets;
    const std::size_t hi = (b + 1) * horizon / buckets;
    for (std::size_t t = lo; t < hi; ++t) f[b] += run.animate_visible[t];
    f[b] /= static_cast<double>(hi - lo);
  }
  return f;
}

IndicatorAccuracy early_indicator(std::span<const IndicatorRun> runs, std::uint64_t horizon, std::size_t buckets,
                                  double l2) {
  const auto y = tertile_classes(runs);
  std::vector<std::string> behaviors;
  for (const auto& r : runs) behaviors.push_back(r.behavior);
  std::sort(behaviors.begin(), behaviors.end());
  behaviors.erase(std::unique(behaviors.begin(), behaviors.end()), behaviors.end());

  std::vector<std::vector<double>> perf, att;
  for (const auto& r : runs) {
    std::vector<double> onehot(behaviors.size(), 0.0);
    onehot[std::lower_bound(behaviors.begin(), behaviors.end(), r.behavior) - behaviors.begin()] = 1.0;
    auto p = performance_features(r, horizon);
    auto a = attention_features(r, horizon, buckets);
    p.insert(p.end(), onehot.begin(), onehot.end());
    a.insert(a.end(), onehot.begin(), onehot.end());
    perf.push_back(std::move(p));
    att.push_back(std::move(a));
  }
  for (const auto& p : perf) {
    if (p.size() != perf.front().size()) throw AnalysisError("early_indicator: runs disagree on validation grid");
  }
  return {loo_accuracy(perf, y, l2), loo_accuracy(att, y, l2)};
}

LogisticModel LogisticModel::fit(const std::vector<std::vector<double>>& x, std::span<const int> y, double l2) {
  if (x.size() != y.size() || x.empty()) throw ContractError("LogisticModel::fit: x and y must align");
  LogisticModel m;
  m.classes_.assign(y.begin(), y.end());
  std::sort(m.classes_.begin(), m.classes_.end());
  m.classes_.erase(std::unique(m.classes_.begin(), m.classes_.end()), m.classes_.end());
  if (m.classes_.size() == 1) return m;

  const std::size_t n = x.size();
  const std::size_t raw = x.front().size();
  m.mean_.assign(raw, 0.0);
  m.sd_.assign(raw, 0.0);
  for (std::size_t j = 0; j < raw; ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = x[i][j];
    m.mean_[j] = mean(col);
    double ss = 0.0;
    for (double v : col) ss += (v - m.mean_[j]) * (v - m.mean_[j]);
    m.sd_[j] = std::sqrt(ss / static_cast<double>(n));
    if (m.sd_[j] > 1e-12) m.kept_.push_back(j);
  }

  const std::size_t d = m.kept_.size() + 1;
  const std::size_t k = m.classes_.size() - 1;
  Eigen::MatrixXd xs(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    xs(i, 0) = 1.0;
    for (std::size_t c = 0; c < m.kept_.size(); ++c) {
      const std::size_t j = m.kept_[c];
      xs(i, c + 1) = (x[i][j] - m.mean_[j]) / m.sd_[j];
    }
  }
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) {
    label[i] = std::lower_bound(m.classes_.begin(), m.classes_.end(), y[i]) - m.classes_.begin();
  }

  auto idx = [d](std::size_t c, std::size_t j) { return c * d + j; };
  auto probs = [&](const Eigen::VectorXd& w, std::size_t i, std::vector<double>& p) {
    p.assign(k + 1, 0.0);
    double top = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      p[c + 1] = xs.row(i).dot(w.segment(c * d, d));
      top = std::max(top, p[c + 1]);
    }
    double z = 0.0;
    for (double& v : p) {
      v = std::exp(v - top);
      z += v;
    }
    for (double& v : p) v /= z;
  };
  auto objective = [&](const Eigen::VectorXd& w) {
    std::vector<double> p;
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      probs(w, i, p);
      f -= std::log(std::max(p[label[i]], 1e-300));
    }
    for (std::size_t c = 0; c < k; ++c) f += 0.5 * l2 * w.segment(c * d + 1, d - 1).squaredNorm();
    return f;
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k * d));
  double f = objective(w);
  std::vector<double> p;
  for (int it = 0; it < kNewtonIters; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(w.size(), w.size());
    for (std::size_t i = 0; i < n; ++i) {
      probs(w, i, p);
      const Eigen::RowVectorXd xi = xs.row(i);
      const Eigen::MatrixXd outer = xi.transpose() * xi;
      for (std::size_t a = 0; a < k; ++a) {
        const double r = p[a + 1] - (label[i] == a + 1 ? 1.0 : 0.0);
        g.segment(a * d, d) += r * xi.transpose();
        for (std::size_t b = 0; b < k; ++b) {
          const double s = p[a + 1] * ((a == b ? 1.0 : 0.0) - p[b + 1]);
          h.block(a * d, b * d, d, d) += s * outer;
        }
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 1; j < d; ++j) {
        g(idx(c, j)) += l2 * w(idx(c, j));
        h(idx(c, j), idx(c, j)) += l2;
      }
    }
    // Tiny ridge keeps the intercept block invertible under separation.
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    double t = 1.0;
    Eigen::VectorXd next = w - step;
    double fn = objective(next);
    while (fn > f && t > 1e-8) {
      t *= 0.5;
      next = w - t * step;
      fn = objective(next);
    }
    if (fn > f) break;
    const double gain = f - fn;
    w = next;
    f = fn;
    if (gain < 1e-12 * std::max(1.0, std::abs(f))) break;
  }

  m.weights_.assign(k, std::vector<double>(d));
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) m.weights_[c][j] = w(idx(c, j));
  }
  return m;
}

int LogisticModel::predict(std::span<const double> row) const {
  if (classes_.size() == 1) return classes_.front();
  if (row.size() != mean_.size()) throw ContractError("LogisticModel::predict: feature width mismatch");
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    double s = weights_[c][0];
    for (std::size_t q = 0; q < kept_.size(); ++q) {
      const std::size_t j = kept_[q];
      s += weights_[c][q + 1] * (row[j] - mean_[j]) / sd_[j];
    }
    if (s > best_score) {
      best_score = s;
      best = c + 1;
    }
  }
  return classes_[best];
}

double loo_accuracy(const std::vector<std::vector<double>>& x, std::span<const int> y, double l2) {
  if (x.size() != y.size() || x.size() < 2) throw AnalysisError("loo_accuracy: needs at least two runs");
  std::size_t hits = 0;
  for (std::size_t out = 0; out < x.size(); ++out) {
    std::vector<std::vector<double>> xt;
    std::vector<int> yt;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i == out) continue;
      xt.push_back(x[i]);
      yt.push_back(y[i]);
    }
    if (LogisticModel::fit(xt, yt, l2).predict(x[out]) == y[out]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(x.size());
}

}  // namespace awml::harness

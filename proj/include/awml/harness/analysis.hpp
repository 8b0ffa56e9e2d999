#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "awml/env/env.hpp"
#include "awml/harness/run.hpp"

namespace awml::harness {

// Mean of the last five validation losses. ContractError with fewer points.
double end_loss(std::span<const double> series);
double end_performance(std::span<const double> series);
// performance(ours) / performance(random), from end losses.
double ratio_vs_random(double ours_loss, double random_loss);

double mean(std::span<const double> xs);
// Sample standard deviation (n - 1); 0 for a single value.
double sample_sd(std::span<const double> xs);

struct AttentionRatio {
  double value = 0.0;  // +inf when the noise agents were never seen
  double animate_steps = 0.0;
  double noise_steps = 0.0;  // mean over noise slots
};

// Steps with any animate agent visible over the mean per-noise-slot count.
AttentionRatio animate_ratio(const RunRecord& record);

enum class Reference { AllOther, NoiseOnly };

// Per consecutive window: fraction of steps the animate slot was visible
// minus the mean fraction over the reference slots.
std::vector<double> attention_differential(const RunRecord& record, std::size_t window = 500,
                                           Reference reference = Reference::AllOther);

enum class FailureLabel { None, Indifference, NoiseFixation };
std::string_view failure_name(FailureLabel label);

// Compares mean animate ratios of a signal against the Random policy's
// spread. Needs three runs per condition.
FailureLabel classify_failure(std::span<const double> signal_ratios, std::span<const double> random_ratios,
                              env::WorldKind world);

struct IndicatorRun {
  std::string behavior;
  std::vector<std::uint64_t> validation_steps;
  std::vector<double> validation_losses;
  std::vector<std::uint8_t> animate_visible;  // per environment step
};

// Classes 0 (lowest end loss), 1, 2 as equal tertiles within each behavior.
std::vector<int> tertile_classes(std::span<const IndicatorRun> runs);

// Log validation losses recorded at or before step T.
std::vector<double> performance_features(const IndicatorRun& run, std::uint64_t horizon);
// Animate-visible fraction in each of B equal buckets over [0, T).
std::vector<double> attention_features(const IndicatorRun& run, std::uint64_t horizon, std::size_t buckets);

struct IndicatorAccuracy {
  double performance = 0.0;
  double attention = 0.0;
};

IndicatorAccuracy early_indicator(std::span<const IndicatorRun> runs, std::uint64_t horizon,
                                  std::size_t buckets = 10, double l2 = 1e-3);

// Multinomial logistic regression with an L2 penalty on the non-intercept
// weights; class 0 is the reference.
class LogisticModel {
 public:
  static LogisticModel fit(const std::vector<std::vector<double>>& x, std::span<const int> y, double l2);
  int predict(std::span<const double> row) const;

 private:
  std::vector<int> classes_;
  std::vector<double> mean_, sd_;
  std::vector<std::size_t> kept_;
  std::vector<std::vector<double>> weights_;  // per non-reference class, intercept first
};

// Leave-one-out accuracy of LogisticModel on (x, y).
double loo_accuracy(const std::vector<std::vector<double>>& x, std::span<const int> y, double l2);

}  // namespace awml::harness
